//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::Instant;

use statrs::distribution::{ContinuousCDF, Normal};

use twopart::bitcode::{elias_decode, elias_encode, BitString};
use twopart::distance::{variational_exact_1d, variational_mc};
use twopart::ecvq::{ecvq_design, training_blocks, BaseMetric, DistortionSpec};
use twopart::harness::{
    audit_truth, hmm_forward_discrepancy, mde_audit_run, median, round_trip_matrix, run_redundancy_experiment,
    triangle_holds, uniform_deviations, ExperimentConfig, ExperimentOutput, RecordKind,
};
use twopart::model::GaussianEmission;
use twopart::scheme::{SchemeConfig, TwoStageCoder};
use twopart::yatracos::{vc_bound, vc_deviation_bound};
use twopart::{seed, ParamVector, SourceFamily};

fn report(id: u32, passed: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {id} failed: {detail}");
}

fn g(m: f64, s: f64) -> ParamVector {
    ParamVector::new(vec![m, s])
}

fn two_state_hmm() -> SourceFamily {
    SourceFamily::hmm(
        0.05,
        vec![
            GaussianEmission { mean: vec![-1.0], std: 0.8 },
            GaussianEmission { mean: vec![1.5], std: 1.0 },
        ],
        1.0,
        0.7,
    )
    .unwrap()
}

#[test]
fn criterion_1_elias_gamma() {
    let start = Instant::now();
    let mut stream = BitString::new();
    let mut words = HashSet::new();
    let mut codes = Vec::new();
    for i in 1..=100_000u64 {
        let c = elias_encode(i).unwrap();
        stream.extend(&c);
        words.insert(c.to_string());
        codes.push(c.to_string());
    }
    let mut cursor = 0;
    let mut exact = true;
    for i in 1..=100_000u64 {
        let (v, next) = elias_decode(&stream, cursor).unwrap();
        exact &= v == i;
        cursor = next;
    }
    exact &= cursor == stream.len();
    let prefix_free = codes.iter().all(|c| (1..c.len()).all(|k| !words.contains(&c[..k])));
    let examples = codes[0] == "1" && codes[4] == "00101";
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        exact && prefix_free && examples && secs < 1.0,
        format!("round trip {exact}, prefix-free {prefix_free}, examples {examples}, {secs:.3}s"),
    );
}

#[test]
fn criterion_2_distance_oracles() {
    let start = Instant::now();
    let fam = SourceFamily::gaussian_iid();
    let phi = Normal::new(0.0, 1.0).unwrap();
    let oracle = 2.0 * (phi.cdf(0.5) - phi.cdf(-0.5));
    let exact = variational_exact_1d(&fam, &g(0.0, 1.0), &g(1.0, 1.0)).unwrap().value;
    let mc = variational_mc(&fam, &g(0.0, 1.0), &g(1.0, 1.0), 1, 100_000, 11).unwrap();
    let exact_ok = (exact - oracle).abs() <= 1e-4;
    let mc_ok = (mc.value - exact).abs() <= 3.0 * mc.standard_error;
    let pinsker = exact <= (2.0f64 * 0.5).sqrt();
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        exact_ok && mc_ok && pinsker && secs < 10.0,
        format!(
            "exact {exact:.7} vs oracle {oracle:.7} (stated 0.7660, off by {:.1e}); mc {:.5} +- {:.5}; pinsker {pinsker}; {secs:.2}s",
            (exact - 0.7660).abs(),
            mc.value,
            mc.standard_error
        ),
    );
}

#[test]
fn criterion_3_model_core() {
    let start = Instant::now();
    let ar = SourceFamily::gaussian_ar(1, 1.0, 0.5).unwrap();
    let path = ar.prepare(&ParamVector::new(vec![-0.5])).unwrap().sample(1_000_000, 3);
    let v = path.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
    let var_ok = (var / (4.0 / 3.0) - 1.0).abs() <= 0.01;
    let worst = hmm_forward_discrepancy(5).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        var_ok && worst <= 1e-10 && secs < 30.0,
        format!("AR(1) variance {var:.5} (target 1.33333); HMM forward max error {worst:.2e}; {secs:.2}s"),
    );
}

#[test]
fn criterion_4_mde_audit() {
    let start = Instant::now();
    let mut all_hold = true;
    let mut medians = Vec::new();
    let mut worst = f64::INFINITY;
    for blocks in [8usize, 32, 128] {
        let runs: Vec<(f64, usize)> = (0..200u64)
            .map(|r| mde_audit_run(blocks, 8, 2000, seed::derive(41, &[blocks as u64, r])).unwrap())
            .collect();
        if blocks == 128 {
            worst = runs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            all_hold = runs.iter().all(|r| r.0 >= 0.0);
        }
        medians.push(median(&runs.iter().map(|r| r.1 as f64).collect::<Vec<_>>()));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        all_hold && monotone && secs < 300.0,
        format!("audit on 200/200 runs {all_hold} (worst slack {worst:.4}); median index error {medians:?}; {secs:.1}s"),
    );
}

#[test]
fn criterion_5_ecvq() {
    let fams = [SourceFamily::gaussian_iid(), SourceFamily::gaussian_ar(2, 1.0, 0.7).unwrap(), two_state_hmm()];
    let mut designs = 0;
    let mut kraft = true;
    let mut cap = true;
    let mut monotone = true;
    for s in 0..50u64 {
        let fam = &fams[(s % 3) as usize];
        let lambda = [0.05, 0.2, 0.6, 1.5][(s % 4) as usize];
        let n = [2usize, 4, 8][(s % 3) as usize];
        let spec = DistortionSpec::new(4.0, if s % 2 == 0 { BaseMetric::Euclidean } else { BaseMetric::AbsoluteDifference }).unwrap();
        let train = training_blocks(fam, &audit_truth(fam), n, 300, seed::derive(s, &[1])).unwrap();
        let d = ecvq_design(&train, lambda, 16, &spec, seed::derive(s, &[2]), 1e-6).unwrap();
        designs += 1;
        kraft &= d.codebook.kraft_sum() <= 1.0 + 1e-12;
        cap &= d.codebook.max_normalized_length() <= 2.0 * spec.rho_max() / lambda + 1e-12;
        monotone &= d.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    report(5, kraft && cap && monotone, format!("{designs} designs: kraft {kraft}, cap {cap}, non-increasing {monotone}"));
}

#[test]
fn criterion_6_round_trip() {
    let (failures, total) = round_trip_matrix(34, 17, false).unwrap();
    let mut truncations = 0usize;
    let mut accepted = 0usize;
    for fam in [SourceFamily::gaussian_iid(), SourceFamily::gaussian_ar(2, 1.0, 0.7).unwrap(), two_state_hmm()] {
        let mut cfg = SchemeConfig::for_family(&fam, 4, 0.3);
        cfg.mde_mc_budget = 200;
        cfg.distance_mc_budget = 100;
        cfg.candidate_count = 8;
        cfg.training_blocks = 200;
        cfg.i_max = 200;
        cfg.l_cap = Some(4);
        let coder = TwoStageCoder::new(&fam, cfg).unwrap();
        let m = coder.layout().m_n;
        let path = fam.prepare(&audit_truth(&fam)).unwrap().sample(m + 4, 23);
        let bits = coder.encode(&path.slice(0, m), &path.slice(m, 4)).unwrap().block.to_bits();
        for k in 0..bits.len() {
            truncations += 1;
            accepted += coder.decode(&bits.prefix(k)).is_ok() as usize;
        }
    }
    report(
        6,
        failures == 0 && total >= 100 && accepted == 0,
        format!("{} of {total} configs round-trip exactly; {accepted} of {truncations} truncated streams accepted", total - failures),
    );
}

fn trend_run() -> &'static ExperimentOutput {
    static RUN: OnceLock<ExperimentOutput> = OnceLock::new();
    RUN.get_or_init(|| {
        let text = include_str!("../../../configs/gaussian_redundancy.toml");
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.experiment.n_grid, vec![4, 8, 16, 32]);
        assert_eq!(config.experiment.trials, 100);
        run_redundancy_experiment(&config).unwrap()
    })
}

fn summaries(out: &ExperimentOutput) -> Vec<&twopart::harness::ExperimentRecord> {
    out.records.iter().filter(|r| r.kind == RecordKind::Summary).collect()
}

#[test]
fn criterion_7_redundancy_trend() {
    let start = Instant::now();
    let out = trend_run();
    let med: Vec<f64> = summaries(out).iter().map(|r| r.redundancy_median).collect();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    let slope_ok = out.slope.is_some_and(|s| (0.5..=1.5).contains(&s));
    report(
        7,
        decreasing && slope_ok,
        format!("median redundancy {med:.4?}, strictly decreasing {decreasing}; slope {:?} (target [0.5, 1.5]); {:.0}s", out.slope, start.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_8_identification_trend() {
    let out = trend_run();
    let med: Vec<f64> = summaries(out).iter().map(|r| r.d_hat_median).collect();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    let found: Vec<_> = out.outcomes.iter().filter(|o| !o.flag).collect();
    let violations = found.iter().filter(|o| !triangle_holds(o)).count();
    report(
        8,
        decreasing && violations == 0,
        format!("median d_hat {med:.4?}, decreasing {decreasing}; triangle violations {violations} of {} found blocks", found.len()),
    );
}

#[test]
fn criterion_9_vc_accounting() {
    let e = std::f64::consts::E;
    let gauss = vc_bound(&SourceFamily::gaussian_iid(), 1).unwrap().value;
    let ar = vc_bound(&SourceFamily::gaussian_ar(2, 1.0, 0.7).unwrap(), 1).unwrap().value;
    let hmm = vc_bound(&two_state_hmm(), 8).unwrap().value;
    let formulas = (gauss - 12.0 * (12.0 * e).ln() / 2f64.ln()).abs() < 1e-9
        && (ar - 12.0 * (8.0 * e).ln() / 2f64.ln()).abs() < 1e-9
        && (hmm - 16.0 * (32.0 * e).ln() / 2f64.ln()).abs() < 1e-9;
    let counts = [1_000usize, 30_000, 200_000];
    let eps_grid = [0.05, 0.25, 0.5, 1.0];
    let devs = uniform_deviations(&counts, 200, 200_000, 29).unwrap();
    let mut cells = 0;
    let mut held = true;
    for (count, d) in counts.iter().zip(&devs) {
        let sup = d.iter().cloned().fold(0.0, f64::max);
        for eps in eps_grid {
            let bound = vc_deviation_bound(*count, gauss, eps).unwrap();
            assert!(bound.is_finite() && (0.0..=1.0).contains(&bound));
            if bound < 1.0 {
                cells += 1;
                held &= sup <= eps;
            }
        }
    }
    report(
        9,
        formulas && held && cells > 0,
        format!(
            "V = {gauss:.2} / {ar:.2} / {hmm:.2} (stated 60.46 / 53.32 / 103.1); {cells} non-vacuous cells, all seeds within eps {held}"
        ),
    );
}
