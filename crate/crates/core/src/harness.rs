//! Experiment orchestration: TOML configs, CSV records and the invariant suite.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcode::{elias_decode, elias_encode, BitString};
use crate::distance::{kl_gaussian_bound, kl_gaussian_iid, smoothness_check, variational_exact_1d, variational_mc};
use crate::ecvq::{ecvq_design, training_blocks, BaseMetric, Codebook, DistortionSpec};
use crate::error::{Error, Result};
use crate::model::{GaussianEmission, ParamVector, SampleBlock, SourceFamily};
use crate::scheme::{
    delta_schedule, design_codebook, identify_report, memory_layout, DeltaMode, Prior, SchemeConfig, TwoStageCoder,
};
use crate::seed;
use crate::yatracos::{mde_estimate, vc_bound, vc_deviation_bound, CandidateSet, YatracosClass};

pub const SCHEMA_VERSION: u32 = 1;
const CSV_BANNER: &str = "# twopart experiment records, schema 1";

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionConfig {
    pub mean: Vec<f64>,
    pub std: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyConfig {
    GaussianIid {
        theta0: Vec<f64>,
    },
    GaussianAr {
        order: usize,
        theta0: Vec<f64>,
        #[serde(default = "one")]
        mixing_constant: f64,
        mixing_rate: f64,
    },
    Hmm {
        floor: f64,
        emissions: Vec<EmissionConfig>,
        theta0: Vec<f64>,
        #[serde(default = "one")]
        mixing_constant: f64,
        mixing_rate: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl FamilyConfig {
    pub fn build(&self) -> Result<(SourceFamily, ParamVector)> {
        let (family, theta0) = match self {
            FamilyConfig::GaussianIid { theta0 } => (SourceFamily::gaussian_iid(), theta0),
            FamilyConfig::GaussianAr {
                order,
                theta0,
                mixing_constant,
                mixing_rate,
            } => (SourceFamily::gaussian_ar(*order, *mixing_constant, *mixing_rate)?, theta0),
            FamilyConfig::Hmm {
                floor,
                emissions,
                theta0,
                mixing_constant,
                mixing_rate,
            } => {
                let em = emissions
                    .iter()
                    .map(|e| GaussianEmission {
                        mean: e.mean.clone(),
                        std: e.std,
                    })
                    .collect();
                (SourceFamily::hmm(*floor, em, *mixing_constant, *mixing_rate)?, theta0)
            }
        };
        let theta0 = ParamVector::new(theta0.clone());
        family.check_param(&theta0)?;
        Ok((family, theta0))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub eta: f64,
    /// Omit for i.i.d. sources.
    pub mixing_exponent: Option<f64>,
    pub lambda: f64,
    pub delta_mode: DeltaMode,
    pub c_delta: f64,
    pub database_seed: u64,
    pub i_max: u64,
    pub mde_mc_budget: usize,
    pub distance_mc_budget: usize,
    pub candidate_count: usize,
    pub anchors: Vec<Vec<f64>>,
    /// Add the true parameter to the candidate list.
    pub anchor_truth: bool,
    /// Plant the true parameter at database index 1.
    pub plant_truth: bool,
    pub l_cap: Option<usize>,
    pub rho_max: f64,
    pub metric: BaseMetric,
    pub training_blocks: usize,
    pub rate_target: f64,
    pub max_codebook_size: usize,
    pub design_tolerance: f64,
    pub prior: Option<Prior>,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let d = SchemeConfig::new(2, 0.25);
        Self {
            eta: d.eta,
            mixing_exponent: None,
            lambda: d.lambda,
            delta_mode: d.delta_mode,
            c_delta: d.c_delta,
            database_seed: d.database_seed,
            i_max: d.i_max,
            mde_mc_budget: d.mde_mc_budget,
            distance_mc_budget: d.distance_mc_budget,
            candidate_count: d.candidate_count,
            anchors: Vec::new(),
            anchor_truth: false,
            plant_truth: false,
            l_cap: None,
            rho_max: d.distortion.rho_max(),
            metric: d.distortion.metric(),
            training_blocks: d.training_blocks,
            rate_target: d.rate_target,
            max_codebook_size: d.max_codebook_size,
            design_tolerance: d.design_tolerance,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub eval_blocks: usize,
    pub oracle_training_blocks: usize,
    pub identify_mc_budget: usize,
    /// Draw a fresh database for every trial instead of one per block length.
    pub per_trial_database: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Write a timestamp comment into the CSV.
    pub timestamp: bool,
    pub output: Option<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_grid: vec![4, 8, 16, 32],
            trials: 20,
            seed: 0,
            eval_blocks: 2_000,
            oracle_training_blocks: 8_000,
            identify_mc_budget: 2_000,
            per_trial_database: false,
            threads: 0,
            timestamp: false,
            output: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantSection {
    pub seed: u64,
    /// Flip a bit of every encoded stream before the round-trip check.
    pub inject_corruption: bool,
}

impl Default for InvariantSection {
    fn default() -> Self {
        Self {
            seed: 7,
            inject_corruption: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub family: FamilyConfig,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub invariants: InvariantSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::ConfigParse(format!("line {line}: {}", e.message()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let e = &self.experiment;
        if e.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if e.n_grid.is_empty() || e.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_grid must be non-empty and strictly increasing".into()));
        }
        if e.n_grid[0] < 2 {
            return Err(Error::InvalidConfig("block lengths must be at least 2".into()));
        }
        if e.eval_blocks == 0 || e.oracle_training_blocks == 0 || e.identify_mc_budget == 0 {
            return Err(Error::InvalidConfig("evaluation, oracle and identification budgets must be positive".into()));
        }
        let (family, _) = self.family.build().map_err(|err| Error::InvalidConfig(err.to_string()))?;
        for &n in &e.n_grid {
            self.scheme_config(&family, n, 0, 0)?.validate()?;
        }
        if let Some(p) = &self.scheme.prior {
            p.check(&family)?;
        }
        Ok(())
    }

    /// Scheme configuration for block length `n` with the given seeds.
    pub fn scheme_config(&self, family: &SourceFamily, n: usize, database_seed: u64, seed: u64) -> Result<SchemeConfig> {
        let s = &self.scheme;
        let (_, theta0) = self.family.build()?;
        let mut anchors: Vec<ParamVector> = s.anchors.iter().cloned().map(ParamVector::new).collect();
        if s.anchor_truth {
            anchors.push(theta0.clone());
        }
        for a in &anchors {
            family.check_param(a)?;
        }
        let mut c = SchemeConfig::for_family(family, n, s.lambda);
        c.eta = s.eta;
        if s.mixing_exponent.is_some() || matches!(family, SourceFamily::GaussianIid) {
            c.mixing_exponent = s.mixing_exponent;
        }
        c.delta_mode = s.delta_mode;
        c.c_delta = s.c_delta;
        c.database_seed = database_seed;
        c.seed = seed;
        c.prior = s.prior.clone();
        c.planted = s.plant_truth.then_some(theta0);
        c.i_max = s.i_max;
        c.mde_mc_budget = s.mde_mc_budget;
        c.distance_mc_budget = s.distance_mc_budget;
        c.candidate_count = s.candidate_count;
        c.anchors = anchors;
        c.l_cap = s.l_cap;
        c.distortion = DistortionSpec::new(s.rho_max, s.metric)?;
        c.training_blocks = s.training_blocks;
        c.rate_target = s.rate_target;
        c.max_codebook_size = s.max_codebook_size;
        c.design_tolerance = s.design_tolerance;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Trial,
    Summary,
    Fit,
}

/// One CSV row. Summary rows hold per-`n` means and medians; the fit row
/// holds the log-log slope of median redundancy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub kind: RecordKind,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub database_seed: u64,
    pub delta_mode: DeltaMode,
    pub tolerance: f64,
    pub l_star: f64,
    pub l_star_se: f64,
    pub l_oracle: f64,
    pub l_oracle_se: f64,
    pub redundancy: f64,
    pub redundancy_se: f64,
    pub redundancy_median: f64,
    pub first_stage_bits: f64,
    pub b_rate: f64,
    pub database_index: u64,
    pub mde_index: usize,
    pub d_hat: f64,
    pub d_hat_se: f64,
    pub d_hat_median: f64,
    pub d_tilde: f64,
    pub d_tilde_se: f64,
    pub d_tilde_hat: f64,
    pub d_tilde_hat_se: f64,
    pub u_min: f64,
    pub round_trip: bool,
    pub slope: f64,
    pub intercept: f64,
}

impl ExperimentRecord {
    fn blank(kind: RecordKind, delta_mode: DeltaMode) -> Self {
        Self {
            kind,
            n: 0,
            trial: 0,
            seed: 0,
            database_seed: 0,
            delta_mode,
            tolerance: 0.0,
            l_star: 0.0,
            l_star_se: 0.0,
            l_oracle: 0.0,
            l_oracle_se: 0.0,
            redundancy: 0.0,
            redundancy_se: 0.0,
            redundancy_median: 0.0,
            first_stage_bits: 0.0,
            b_rate: 0.0,
            database_index: 0,
            mde_index: 0,
            d_hat: 0.0,
            d_hat_se: 0.0,
            d_hat_median: 0.0,
            d_tilde: 0.0,
            d_tilde_se: 0.0,
            d_tilde_hat: 0.0,
            d_tilde_hat_se: 0.0,
            u_min: 0.0,
            round_trip: true,
            slope: 0.0,
            intercept: 0.0,
        }
    }

    /// Whether every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        [
            self.tolerance,
            self.l_star,
            self.l_star_se,
            self.l_oracle,
            self.l_oracle_se,
            self.redundancy,
            self.redundancy_se,
            self.redundancy_median,
            self.first_stage_bits,
            self.b_rate,
            self.d_hat,
            self.d_hat_se,
            self.d_hat_median,
            self.d_tilde,
            self.d_tilde_se,
            self.d_tilde_hat,
            self.d_tilde_hat_se,
            self.u_min,
            self.slope,
            self.intercept,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord], timestamp: bool) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_BANNER}")?;
    if timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(out, "# generated at unix time {secs}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// What one trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub database_seed: u64,
    pub tolerance: f64,
    pub first_stage_bits: usize,
    pub flag: bool,
    pub database_index: u64,
    pub mde_index: usize,
    pub u_min: f64,
    pub theta_tilde: ParamVector,
    pub theta_hat: ParamVector,
    pub d_hat: (f64, f64),
    pub d_tilde: (f64, f64),
    pub d_tilde_hat: (f64, f64),
    /// Mean and standard error of `L*`, `L_oracle` and their paired difference.
    pub lagrangians: Option<[(f64, f64); 3]>,
    pub round_trip: bool,
}

pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub outcomes: Vec<TrialOutcome>,
    /// Log-log slope of median redundancy against `sqrt(V_n ln n / n)`.
    pub slope: Option<f64>,
}

fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Per-block Lagrangian costs of `book` on `blocks`.
fn block_costs(book: &Codebook, blocks: &[SampleBlock], lambda: f64, spec: &DistortionSpec) -> Vec<f64> {
    blocks.iter().map(|x| book.nearest(x.values(), lambda, spec).1).collect()
}

struct LengthContext {
    coder: Option<TwoStageCoder>,
    eval: Vec<SampleBlock>,
    oracle_costs: Vec<f64>,
    star_costs: std::sync::Mutex<HashMap<u64, std::sync::Arc<Vec<f64>>>>,
}

/// Run every `(n, trial)` of the configured grid.
pub fn run_trials(config: &ExperimentConfig, with_lagrangians: bool) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let (family, theta0) = config.family.build()?;
    let e = &config.experiment;
    with_threads(e.threads, || {
        let mut all = Vec::new();
        for &n in &e.n_grid {
            let ctx = length_context(config, &family, &theta0, n, with_lagrangians)?;
            let trials: Vec<Result<TrialOutcome>> = (0..e.trials)
                .into_par_iter()
                .map(|t| run_trial(config, &family, &theta0, n, t, &ctx, with_lagrangians))
                .collect();
            for t in trials {
                all.push(t?);
            }
        }
        Ok(all)
    })?
}

fn length_seed(config: &ExperimentConfig, n: usize) -> (u64, u64) {
    let base = config.experiment.seed;
    (
        seed::derive(config.scheme.database_seed, &[seed::label("database"), n as u64]),
        seed::derive(base, &[seed::label("scheme"), n as u64]),
    )
}

fn length_context(
    config: &ExperimentConfig,
    family: &SourceFamily,
    theta0: &ParamVector,
    n: usize,
    with_lagrangians: bool,
) -> Result<LengthContext> {
    let e = &config.experiment;
    let coder = if e.per_trial_database {
        None
    } else {
        let (db_seed, scheme_seed) = length_seed(config, n);
        Some(TwoStageCoder::new(family, config.scheme_config(family, n, db_seed, scheme_seed)?)?)
    };
    let (eval, oracle_costs) = if with_lagrangians {
        let scheme = config.scheme_config(family, n, 0, seed::derive(e.seed, &[seed::label("oracle")]))?;
        let mut oracle_cfg = scheme.clone();
        oracle_cfg.training_blocks = e.oracle_training_blocks;
        let oracle = design_codebook(family, theta0, &oracle_cfg, 0)?;
        let eval = training_blocks(
            family,
            theta0,
            n,
            e.eval_blocks,
            seed::derive(e.seed, &[seed::label("evaluation"), n as u64]),
        )?;
        let costs = block_costs(&oracle, &eval, scheme.lambda, &scheme.distortion);
        (eval, costs)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(LengthContext {
        coder,
        eval,
        oracle_costs,
        star_costs: std::sync::Mutex::new(HashMap::new()),
    })
}

fn run_trial(
    config: &ExperimentConfig,
    family: &SourceFamily,
    theta0: &ParamVector,
    n: usize,
    t: usize,
    ctx: &LengthContext,
    with_lagrangians: bool,
) -> Result<TrialOutcome> {
    let e = &config.experiment;
    let trial_seed = seed::derive(e.seed, &[seed::label("trial"), n as u64, t as u64]);
    let owned;
    let coder = match &ctx.coder {
        Some(c) => c,
        None => {
            let db_seed = seed::derive(trial_seed, &[seed::label("database")]);
            let scheme_seed = seed::derive(trial_seed, &[seed::label("scheme")]);
            owned = TwoStageCoder::new(family, config.scheme_config(family, n, db_seed, scheme_seed)?)?;
            &owned
        }
    };
    let m = coder.layout().m_n;
    let source = family.prepare(theta0)?;
    let path = source.sample(m + n, seed::derive(trial_seed, &[seed::label("source")]));
    let history = path.slice(0, m);
    let current = path.slice(m, n);
    let enc = coder.encode(&history, &current)?;
    let bits = enc.block.to_bits();
    let round_trip = match coder.decode(&bits) {
        Ok(d) => d.reproduction == enc.reproduction && d.theta_hat.same_bits(&enc.theta_hat),
        Err(_) => false,
    };
    let id_budget = e.identify_mc_budget;
    let id_seed = seed::derive(trial_seed, &[seed::label("identify")]);
    let dh = identify_report(theta0, &enc.theta_hat, family, n, id_budget, id_seed)?;
    let dt = identify_report(theta0, &enc.theta_tilde, family, n, id_budget, id_seed)?;
    let dth = match &enc.waiting {
        crate::scheme::WaitingTime::Hit { distance, .. } => (distance.value, distance.standard_error),
        crate::scheme::WaitingTime::NotFound => {
            let d = variational_mc(family, &enc.theta_tilde, &enc.theta_hat, n, id_budget, id_seed)?;
            (d.value, d.standard_error)
        }
    };
    let first_bits = enc.block.first_stage.bits();
    let lagrangians = if with_lagrangians {
        let cfg = coder.config();
        let cached = ctx.star_costs.lock().unwrap().get(&enc.database_index).cloned();
        let star = match cached {
            Some(c) => c,
            None => {
                let book = coder.codebook_for(enc.database_index)?;
                let c = std::sync::Arc::new(block_costs(&book, &ctx.eval, cfg.lambda, &cfg.distortion));
                ctx.star_costs.lock().unwrap().insert(enc.database_index, c.clone());
                c
            }
        };
        let overhead = cfg.lambda * first_bits as f64 / n as f64;
        let star_total: Vec<f64> = star.iter().map(|c| c + overhead).collect();
        let diff: Vec<f64> = star_total.iter().zip(&ctx.oracle_costs).map(|(a, b)| a - b).collect();
        Some([mean_se(&star_total), mean_se(&ctx.oracle_costs), mean_se(&diff)])
    } else {
        None
    };
    Ok(TrialOutcome {
        n,
        trial: t,
        seed: coder.config().seed,
        database_seed: coder.config().database_seed,
        tolerance: coder.tolerance(),
        first_stage_bits: first_bits,
        flag: enc.block.first_stage.flag,
        database_index: enc.database_index,
        mde_index: enc.mde.index,
        u_min: enc.mde.min_u,
        theta_tilde: enc.theta_tilde,
        theta_hat: enc.theta_hat,
        d_hat: (dh.value, dh.standard_error),
        d_tilde: (dt.value, dt.standard_error),
        d_tilde_hat: dth,
        lagrangians,
        round_trip,
    })
}

fn trial_record(o: &TrialOutcome, mode: DeltaMode) -> ExperimentRecord {
    let mut r = ExperimentRecord::blank(RecordKind::Trial, mode);
    r.n = o.n;
    r.trial = o.trial;
    r.seed = o.seed;
    r.database_seed = o.database_seed;
    r.tolerance = o.tolerance;
    if let Some([star, oracle, diff]) = o.lagrangians {
        r.l_star = star.0;
        r.l_star_se = star.1;
        r.l_oracle = oracle.0;
        r.l_oracle_se = oracle.1;
        r.redundancy = r.l_star - r.l_oracle;
        r.redundancy_se = diff.1;
        r.redundancy_median = r.redundancy;
    }
    r.first_stage_bits = o.first_stage_bits as f64;
    r.b_rate = if o.flag { 1.0 } else { 0.0 };
    r.database_index = o.database_index;
    r.mde_index = o.mde_index;
    r.d_hat = o.d_hat.0;
    r.d_hat_se = o.d_hat.1;
    r.d_hat_median = o.d_hat.0;
    r.d_tilde = o.d_tilde.0;
    r.d_tilde_se = o.d_tilde.1;
    r.d_tilde_hat = o.d_tilde_hat.0;
    r.d_tilde_hat_se = o.d_tilde_hat.1;
    r.u_min = o.u_min;
    r.round_trip = o.round_trip;
    r
}

/// `sqrt(V_n ln n / n)`, the abscissa of the redundancy fit.
pub fn rate_scale(family: &SourceFamily, n: usize) -> Result<f64> {
    let v = vc_bound(family, n)?.value;
    Ok((v * (n as f64).ln() / n as f64).sqrt())
}

fn summarise(config: &ExperimentConfig, family: &SourceFamily, outcomes: &[TrialOutcome]) -> Result<ExperimentOutput> {
    let mode = config.scheme.delta_mode;
    let mut records = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut all_positive = true;
    for &n in &config.experiment.n_grid {
        let rows: Vec<ExperimentRecord> = outcomes.iter().filter(|o| o.n == n).map(|o| trial_record(o, mode)).collect();
        let col = |f: fn(&ExperimentRecord) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let mut s = ExperimentRecord::blank(RecordKind::Summary, mode);
        s.n = n;
        s.trial = rows.len();
        s.seed = rows.first().map_or(0, |r| r.seed);
        s.database_seed = rows.first().map_or(0, |r| r.database_seed);
        s.tolerance = rows.first().map_or(0.0, |r| r.tolerance);
        (s.l_star, s.l_star_se) = mean_se(&col(|r| r.l_star));
        (s.l_oracle, s.l_oracle_se) = mean_se(&col(|r| r.l_oracle));
        s.redundancy = s.l_star - s.l_oracle;
        s.redundancy_se = mean_se(&col(|r| r.redundancy)).1;
        s.redundancy_median = median(&col(|r| r.redundancy));
        s.first_stage_bits = mean_se(&col(|r| r.first_stage_bits)).0;
        s.b_rate = mean_se(&col(|r| r.b_rate)).0;
        (s.d_hat, s.d_hat_se) = mean_se(&col(|r| r.d_hat));
        s.d_hat_median = median(&col(|r| r.d_hat));
        (s.d_tilde, s.d_tilde_se) = mean_se(&col(|r| r.d_tilde));
        (s.d_tilde_hat, s.d_tilde_hat_se) = mean_se(&col(|r| r.d_tilde_hat));
        s.u_min = median(&col(|r| r.u_min));
        s.round_trip = rows.iter().all(|r| r.round_trip);
        xs.push(rate_scale(family, n)?.ln());
        all_positive &= s.redundancy_median > 0.0;
        ys.push(s.redundancy_median.max(f64::MIN_POSITIVE).ln());
        records.extend(rows);
        records.push(s);
    }
    let fit = if all_positive { fit_line(&xs, &ys) } else { None };
    let mut f = ExperimentRecord::blank(RecordKind::Fit, mode);
    if let Some((slope, intercept)) = fit {
        f.slope = slope;
        f.intercept = intercept;
    }
    f.round_trip = fit.is_some();
    records.push(f);
    Ok(ExperimentOutput {
        records,
        outcomes: outcomes.to_vec(),
        slope: fit.map(|f| f.0),
    })
}

/// Lagrangian redundancy of the two-stage code against the oracle design.
pub fn run_redundancy_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (family, _) = config.family.build()?;
    let outcomes = run_trials(config, true)?;
    summarise(config, &family, &outcomes)
}

/// Identification distances only; Lagrangian columns are zero.
pub fn run_identification_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (family, _) = config.family.build()?;
    let outcomes = run_trials(config, false)?;
    summarise(config, &family, &outcomes)
}

/// `d(theta0, theta_hat) <= d(theta0, theta_tilde) + tol + 3 SE` for a found block.
/// The tolerance stands in for the waiting-time estimate of `d(theta_tilde, theta_hat)`,
/// so its standard error joins the other two.
pub fn triangle_holds(o: &TrialOutcome) -> bool {
    let se = (o.d_hat.1 * o.d_hat.1 + o.d_tilde.1 * o.d_tilde.1 + o.d_tilde_hat.1 * o.d_tilde_hat.1).sqrt();
    o.d_hat.0 <= o.d_tilde.0 + o.tolerance + 3.0 * se
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Slack to the failure threshold; negative when failing.
    pub margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<28} margin {:>12.6}  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.margin,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        s
    }
}

fn check(name: &'static str, margin: f64, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: margin >= 0.0,
        margin: margin + 0.0,
        detail,
    }
}

fn run_check(name: &'static str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult {
        name,
        passed: false,
        margin: f64::NEG_INFINITY,
        detail: format!("error: {e}"),
    })
}

/// Cross-module invariant matrix at desk scale.
pub fn run_invariant_suite(config: &InvariantSection) -> InvariantReport {
    let s = config.seed;
    let g = |m: f64, sd: f64| ParamVector::new(vec![m, sd]);
    let gauss = SourceFamily::gaussian_iid();
    let mut checks = Vec::new();

    checks.push(run_check("elias-round-trip", || {
        let mut stream = BitString::new();
        for i in 1..=100_000u64 {
            stream.extend(&elias_encode(i)?);
        }
        let mut cursor = 0;
        let mut bad = 0u64;
        for i in 1..=100_000u64 {
            let (v, next) = elias_decode(&stream, cursor)?;
            bad += (v != i) as u64;
            cursor = next;
        }
        let examples = elias_encode(1)?.to_string() == "1" && elias_encode(5)?.to_string() == "00101";
        let ok = bad == 0 && cursor == stream.len() && examples;
        Ok(check("elias-round-trip", if ok { 0.0 } else { -1.0 }, format!("{bad} mismatches over 1..=1e5")))
    }));

    checks.push(run_check("distance-exact-vs-mc", || {
        let exact = variational_exact_1d(&gauss, &g(0.0, 1.0), &g(1.0, 1.0))?;
        let mc = variational_mc(&gauss, &g(0.0, 1.0), &g(1.0, 1.0), 1, 100_000, s)?;
        let margin = 3.0 * mc.standard_error - (exact.value - mc.value).abs();
        Ok(check("distance-exact-vs-mc", margin, format!("exact {:.6}, mc {:.6} +- {:.6}", exact.value, mc.value, mc.standard_error)))
    }));

    checks.push(run_check("pinsker-chain", || {
        let d = variational_exact_1d(&gauss, &g(0.0, 1.0), &g(1.0, 1.0))?.value;
        let kl = kl_gaussian_iid(&g(0.0, 1.0), &g(1.0, 1.0), 1)?;
        Ok(check("pinsker-chain", (2.0 * kl).sqrt() - d, format!("d {d:.6} <= sqrt(2 KL) {:.6}", (2.0 * kl).sqrt())))
    }));

    checks.push(run_check("kl-bound-grid", || {
        let mut worst = f64::INFINITY;
        for m in [-1.0, 0.0, 2.0] {
            for sd in [0.5, 1.0, 3.0] {
                for m2 in [-0.5, 0.0, 1.0] {
                    for sd2 in [0.4, 1.0, 2.0] {
                        let (a, b) = (g(m, sd), g(m2, sd2));
                        worst = worst.min(kl_gaussian_bound(&a, &b)? - kl_gaussian_iid(&a, &b, 1)?);
                    }
                }
            }
        }
        Ok(check("kl-bound-grid", worst, "bound minus divergence, worst case".into()))
    }));

    checks.push(run_check("smoothness-gaussian", || {
        let r = smoothness_check(&gauss, &g(0.0, 1.0), &[0.05, 0.2], &[1, 4, 16], 4000, s)?;
        let failed = r.rows.iter().filter(|x| x.pass == Some(false)).count();
        Ok(check("smoothness-gaussian", -(failed as f64), format!("{} rows, slope {:.3}", r.rows.len(), r.empirical_slope)))
    }));

    checks.push(run_check("ar-stationary-variance", || {
        let ar = SourceFamily::gaussian_ar(1, 1.0, 0.5)?;
        let path = ar.prepare(&ParamVector::new(vec![-0.5]))?.sample(1_000_000, s);
        let v = path.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        let target = 4.0 / 3.0;
        Ok(check("ar-stationary-variance", 0.01 - (var / target - 1.0).abs(), format!("variance {var:.5} vs 4/3")))
    }));

    checks.push(run_check("hmm-forward-vs-enumeration", || {
        let worst = hmm_forward_discrepancy(s)?;
        Ok(check("hmm-forward-vs-enumeration", 1e-10 - worst, format!("max |forward - enumeration| {worst:.3e}")))
    }));

    checks.push(run_check("ecvq-kraft-cap-monotone", || {
        let spec = DistortionSpec::default();
        let mut worst: f64 = f64::INFINITY;
        for (k, lambda) in [0.05, 0.2, 0.6].into_iter().enumerate() {
            let train = training_blocks(&gauss, &g(0.0, 1.0), 4, 400, seed::derive(s, &[k as u64]))?;
            let d = ecvq_design(&train, lambda, 16, &spec, seed::derive(s, &[k as u64, 1]), 1e-6)?;
            let kraft = 1.0 - d.codebook.kraft_sum();
            let cap = 2.0 * spec.rho_max() / lambda - d.codebook.max_normalized_length();
            let mono = d.trace.windows(2).map(|w| w[0] - w[1] + 1e-12).fold(f64::INFINITY, f64::min);
            worst = worst.min(kraft).min(cap).min(if mono.is_finite() { mono } else { 0.0 });
        }
        Ok(check("ecvq-kraft-cap-monotone", worst, "min of Kraft slack, cap slack and trace decrease".into()))
    }));

    checks.push(run_check("mde-oracle-inequality", || {
        let (worst, runs) = mde_audit(20, 64, 8, 1000, s)?;
        Ok(check("mde-oracle-inequality", worst, format!("{runs} runs, worst slack")))
    }));

    checks.push(run_check("vc-formulas", || {
        let e = std::f64::consts::E;
        let g_v = vc_bound(&gauss, 1)?.value;
        let ar_v = vc_bound(&SourceFamily::gaussian_ar(2, 1.0, 0.5)?, 1)?.value;
        let err = (g_v - 12.0 * (12.0 * e).log2()).abs().max((ar_v - 12.0 * (8.0 * e).log2()).abs());
        Ok(check("vc-formulas", 1e-9 - err, format!("gaussian {g_v:.3}, ar(2) {ar_v:.3}")))
    }));

    checks.push(run_check("vc-uniform-deviation", || {
        let (margin, detail) = uniform_deviation_audit(50, s)?;
        Ok(check("vc-uniform-deviation", margin, detail))
    }));

    checks.push(run_check("delta-schedule", || {
        let p = delta_schedule(100, 60.46, DeltaMode::Paper, 1.0)?;
        let q = delta_schedule(100, 60.46, DeltaMode::Practical, 1.0)?;
        let err = (q - (100f64.ln() / 100.0).sqrt()).abs();
        let limit = delta_schedule(1 << 30, 60.0, DeltaMode::Paper, 1.0)? < p;
        Ok(check("delta-schedule", if limit { 1e-12 - err } else { -1.0 }, format!("paper {p:.4}, practical {q:.4}")))
    }));

    checks.push(run_check("blocking-audit", || {
        let ar = SourceFamily::gaussian_ar(1, 1.0, 0.7)?;
        let mut last = f64::INFINITY;
        let mut margin = f64::INFINITY;
        for n in [2usize, 4, 8, 16] {
            let cfg = SchemeConfig::for_family(&ar, n, 0.3);
            let l = memory_layout(&cfg, None);
            let cost = (n - 1) as f64 * ar.mixing_bound(l.l_n as u64);
            margin = margin.min(last - cost);
            last = cost;
        }
        let iid = memory_layout(&SchemeConfig::new(8, 0.3), None);
        let iid_cost = 7.0 * gauss.mixing_bound(iid.l_n as u64);
        Ok(check("blocking-audit", if iid_cost == 0.0 { margin } else { -1.0 }, "(n-1) beta(l_n) decreasing".into()))
    }));

    checks.push(run_check("database-validity", || {
        let mut bad = 0;
        for fam in audit_families()? {
            let db = crate::scheme::Database::new(&fam, Prior::default_for(&fam), s)?;
            for i in 1..=300 {
                bad += fam.check_param(&db.point(i)?).is_err() as usize;
            }
        }
        Ok(check("database-validity", -(bad as f64), format!("{bad} invalid draws")))
    }));

    checks.push(run_check("two-stage-round-trip", || {
        let (failures, total) = round_trip_matrix(3, s, config.inject_corruption)?;
        Ok(check("two-stage-round-trip", -(failures as f64), format!("{failures} of {total} streams failed")))
    }));

    InvariantReport { checks }
}

fn audit_families() -> Result<Vec<SourceFamily>> {
    Ok(vec![
        SourceFamily::gaussian_iid(),
        SourceFamily::gaussian_ar(2, 1.0, 0.7)?,
        SourceFamily::hmm(
            0.05,
            vec![
                GaussianEmission { mean: vec![-1.0], std: 0.8 },
                GaussianEmission { mean: vec![1.5], std: 1.0 },
            ],
            1.0,
            0.7,
        )?,
    ])
}

/// Default true parameter of each audit family.
pub fn audit_truth(family: &SourceFamily) -> ParamVector {
    match family {
        SourceFamily::GaussianIid => ParamVector::new(vec![0.3, 1.2]),
        SourceFamily::GaussianAr { order, .. } => {
            let mut a = vec![0.0; *order];
            a[0] = -0.5;
            ParamVector::new(a)
        }
        SourceFamily::Hmm { emissions, .. } => {
            let m = emissions.len();
            let mut a = vec![0.3 / (m as f64 - 1.0).max(1.0); m * m];
            for i in 0..m {
                a[i * m + i] = if m == 1 { 1.0 } else { 0.7 };
            }
            ParamVector::new(a)
        }
    }
}

/// Encode and decode `per_family` blocks for each family; returns failures and total.
pub fn round_trip_matrix(per_family: usize, seed: u64, corrupt: bool) -> Result<(usize, usize)> {
    let mut failures = 0;
    let mut total = 0;
    for fam in audit_families()? {
        for k in 0..per_family {
            let mut cfg = SchemeConfig::for_family(&fam, 4, 0.3);
            cfg.seed = seed::derive(seed, &[k as u64]);
            cfg.database_seed = seed::derive(seed, &[k as u64, 1]);
            cfg.mde_mc_budget = 200;
            cfg.distance_mc_budget = 100;
            cfg.candidate_count = 8;
            cfg.training_blocks = 200;
            cfg.i_max = 200;
            cfg.l_cap = Some(4);
            let encoder = TwoStageCoder::new(&fam, cfg.clone())?;
            let decoder = TwoStageCoder::new(&fam, cfg)?;
            let src = fam.prepare(&audit_truth(&fam))?;
            let path = src.sample(encoder.layout().m_n + 4, seed::derive(seed, &[k as u64, 2]));
            let m = encoder.layout().m_n;
            let enc = encoder.encode(&path.slice(0, m), &path.slice(m, 4))?;
            let mut bits = enc.block.to_bits();
            if corrupt {
                bits = if bits.len() > 1 { bits.prefix(bits.len() - 1) } else { BitString::new() };
            }
            let ok = match decoder.decode(&bits) {
                Ok(d) => d.reproduction == enc.reproduction && d.theta_hat.same_bits(&enc.theta_hat),
                Err(_) => false,
            };
            failures += !ok as usize;
            total += 1;
        }
    }
    Ok((failures, total))
}

/// Largest `|forward - enumeration|` over small HMMs.
pub fn hmm_forward_discrepancy(seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for m in 1..=3usize {
        let emissions: Vec<GaussianEmission> = (0..m)
            .map(|i| GaussianEmission {
                mean: vec![i as f64 * 1.3 - 1.0],
                std: 0.6 + 0.3 * i as f64,
            })
            .collect();
        let floor = 0.02;
        let fam = SourceFamily::hmm(floor, emissions.clone(), 1.0, 0.5)?;
        let theta = crate::scheme::Database::new(&fam, Prior::default_for(&fam), seed)?.point(1 + m as u64)?;
        let a = theta.coords();
        let pi = power_stationary(a, m);
        let src = fam.prepare(&theta)?;
        for n in 1..=5usize {
            let x = src.sample(n, seed::derive(seed, &[m as u64, n as u64]));
            let forward = src.log_density(&x)?;
            let mut total = 0.0;
            let paths = m.pow(n as u32);
            for code in 0..paths {
                let mut c = code;
                let states: Vec<usize> = (0..n)
                    .map(|_| {
                        let s = c % m;
                        c /= m;
                        s
                    })
                    .collect();
                let mut p = pi[states[0]];
                for t in 0..n {
                    if t > 0 {
                        p *= a[states[t - 1] * m + states[t]];
                    }
                    let e = &emissions[states[t]];
                    p *= crate::model::normal_pdf(x.values()[t], e.mean[0], e.std);
                }
                total += p;
            }
            worst = worst.max((forward - total.ln()).abs());
        }
    }
    Ok(worst)
}

fn power_stationary(a: &[f64], m: usize) -> Vec<f64> {
    let mut pi = vec![1.0 / m as f64; m];
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..m).map(|j| (0..m).map(|i| pi[i] * a[i * m + j]).sum()).collect();
        pi = next;
    }
    pi
}

/// The ten-point Gaussian grid used by the MDE audits; the truth is entry 4.
pub fn gaussian_grid() -> Vec<ParamVector> {
    let mut out = Vec::new();
    for (m, s) in [
        (-1.0, 1.0),
        (-0.5, 1.0),
        (0.0, 0.5),
        (0.0, 0.75),
        (0.0, 1.0),
        (0.0, 1.5),
        (0.0, 2.0),
        (0.5, 1.0),
        (1.0, 1.0),
        (2.0, 1.0),
    ] {
        out.push(ParamVector::new(vec![m, s]));
    }
    out
}

pub const GRID_TRUTH: usize = 4;

/// One audit run: slack of `d(theta0, theta_tilde) <= 4 U_theta0 + 3/n + 3 SE`
/// and the grid-index error of the estimate.
pub fn mde_audit_run(blocks: usize, n: usize, mc_budget: usize, seed: u64) -> Result<(f64, usize)> {
    let fam = SourceFamily::gaussian_iid();
    let grid = gaussian_grid();
    let cands = CandidateSet::new(&fam, grid.clone())?;
    let theta0 = &grid[GRID_TRUTH];
    let src = fam.prepare(theta0)?;
    let data: Vec<SampleBlock> = (0..blocks)
        .map(|b| src.sample(n, seed::derive(seed, &[seed::label("mde-data"), b as u64])))
        .collect();
    let out = mde_estimate(&fam, &data, &cands, mc_budget, seed::derive(seed, &[seed::label("mde-mc")]))?;
    let d = variational_mc(&fam, theta0, &out.estimate(), n, mc_budget, seed::derive(seed, &[seed::label("mde-d")]))?;
    let u0 = out.u[GRID_TRUTH];
    let se = (d.standard_error.powi(2) + 16.0 * out.u_standard_error[GRID_TRUTH].powi(2)).sqrt();
    let slack = 4.0 * u0 + 3.0 / n as f64 + 3.0 * se - d.value;
    Ok((slack, out.index.abs_diff(GRID_TRUTH)))
}

/// Minimum slack over `runs` seeded audit runs.
pub fn mde_audit(runs: usize, blocks: usize, n: usize, mc_budget: usize, seed: u64) -> Result<(f64, usize)> {
    let slacks = (0..runs)
        .into_par_iter()
        .map(|r| mde_audit_run(blocks, n, mc_budget, seed::derive(seed, &[r as u64])).map(|x| x.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok((slacks.iter().cloned().fold(f64::INFINITY, f64::min), runs))
}

/// Sup deviations between empirical frequencies of `counts` i.i.d. scalar
/// draws and a large Monte-Carlo reference, over the grid's Yatracos class.
pub fn uniform_deviations(counts: &[usize], seeds: usize, reference_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let fam = SourceFamily::gaussian_iid();
    let grid = gaussian_grid();
    let cands = CandidateSet::new(&fam, grid.clone())?;
    let class = YatracosClass::new(&fam, &cands)?;
    let theta0 = &grid[GRID_TRUTH];
    let reference = class.probabilities(theta0, 1, reference_samples, seed::derive(seed, &[seed::label("vc-ref")]))?;
    let src = fam.prepare(theta0)?;
    counts
        .iter()
        .map(|&count| {
            (0..seeds)
                .into_par_iter()
                .map(|k| {
                    let draws = src.sample(count, seed::derive(seed, &[seed::label("vc-emp"), count as u64, k as u64]));
                    let blocks: Vec<SampleBlock> = draws.values().iter().map(|&v| SampleBlock::scalar(vec![v])).collect();
                    Ok(class.frequencies(&blocks)?.sup_deviation(&reference).0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Where `8 n^V exp(-n eps^2 / 32) < 1`, every seed must have sup deviation
/// at most `eps`; returns the worst slack and a description.
pub fn uniform_deviation_audit(seeds: usize, seed: u64) -> Result<(f64, String)> {
    let v = vc_bound(&SourceFamily::gaussian_iid(), 1)?.value;
    let counts = [100usize, 1_000, 30_000];
    let eps_grid = [0.1, 0.5, 1.0];
    let devs = uniform_deviations(&counts, seeds, 200_000, seed)?;
    let mut worst = f64::INFINITY;
    let mut active = 0;
    for (count, d) in counts.iter().zip(&devs) {
        let sup = d.iter().cloned().fold(0.0, f64::max);
        for &eps in &eps_grid {
            if vc_deviation_bound(*count, v, eps)? < 1.0 {
                active += 1;
                worst = worst.min(eps - sup);
            }
        }
    }
    if active == 0 {
        worst = 0.0;
    }
    Ok((worst, format!("{active} (n, eps) cells with a non-vacuous bound")))
}
