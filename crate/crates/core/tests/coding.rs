use proptest::prelude::*;
use twopart::bitcode::{elias_decode, elias_encode, BitString};
use twopart::harness::{audit_truth, round_trip_matrix};
use twopart::model::GaussianEmission;
use twopart::scheme::{SchemeConfig, TwoStageCoder};
use twopart::SourceFamily;

fn families() -> Vec<SourceFamily> {
    vec![
        SourceFamily::gaussian_iid(),
        SourceFamily::gaussian_ar(1, 1.0, 0.6).unwrap(),
        SourceFamily::hmm(
            0.05,
            vec![
                GaussianEmission { mean: vec![0.0], std: 0.5 },
                GaussianEmission { mean: vec![2.0], std: 1.0 },
            ],
            1.0,
            0.6,
        )
        .unwrap(),
    ]
}

fn small_config(fam: &SourceFamily, n: usize, lambda: f64, seed: u64) -> SchemeConfig {
    let mut cfg = SchemeConfig::for_family(fam, n, lambda);
    cfg.seed = seed;
    cfg.database_seed = seed ^ 0x5a5a;
    cfg.mde_mc_budget = 100;
    cfg.distance_mc_budget = 64;
    cfg.candidate_count = 6;
    cfg.training_blocks = 150;
    cfg.i_max = 100;
    cfg.l_cap = Some(3);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn two_stage_round_trip(family in 0usize..3, n in 2usize..6, lambda in 0.05f64..1.0, seed in any::<u64>()) {
        let fam = &families()[family];
        let cfg = small_config(fam, n, lambda, seed);
        let enc = TwoStageCoder::new(fam, cfg.clone()).unwrap();
        let dec = TwoStageCoder::new(fam, cfg).unwrap();
        let m = enc.layout().m_n;
        let path = fam.prepare(&audit_truth(fam)).unwrap().sample(m + n, seed.wrapping_add(1));
        let out = enc.encode(&path.slice(0, m), &path.slice(m, n)).unwrap();
        let bits = out.block.to_bits();
        prop_assert_eq!(bits.len(), out.block.total_bits());
        let back = dec.decode(&bits).unwrap();
        prop_assert_eq!(&back.reproduction, &out.reproduction);
        prop_assert!(back.theta_hat.same_bits(&out.theta_hat));
        let again = enc.encode(&path.slice(0, m), &path.slice(m, n)).unwrap();
        prop_assert_eq!(again.block.to_bits(), bits);
    }

    #[test]
    fn elias_concatenation_decodes(values in proptest::collection::vec(1u64..u64::MAX, 1..40)) {
        let mut stream = BitString::new();
        for &v in &values {
            stream.extend(&elias_encode(v).unwrap());
        }
        let mut cursor = 0;
        for &v in &values {
            let (got, next) = elias_decode(&stream, cursor).unwrap();
            prop_assert_eq!(got, v);
            cursor = next;
        }
        prop_assert_eq!(cursor, stream.len());
    }
}

#[test]
fn concatenated_blocks_decode_in_sequence() {
    let fam = SourceFamily::gaussian_iid();
    let coder = TwoStageCoder::new(&fam, small_config(&fam, 3, 0.3, 5)).unwrap();
    let m = coder.layout().m_n;
    let mut stream = BitString::new();
    let mut expected = Vec::new();
    for k in 0..4u64 {
        let path = fam.prepare(&audit_truth(&fam)).unwrap().sample(m + 3, 100 + k);
        let enc = coder.encode(&path.slice(0, m), &path.slice(m, 3)).unwrap();
        stream.extend(&enc.block.to_bits());
        expected.push(enc.reproduction);
    }
    let mut cursor = 0;
    for want in &expected {
        let (d, next) = coder.decode_at(&stream, cursor).unwrap();
        assert_eq!(&d.reproduction, want);
        cursor = next;
    }
    assert_eq!(cursor, stream.len());
    assert!(coder.decode(&stream).is_err());
}

#[test]
fn corrupted_streams_fail_the_matrix() {
    let (bad, total) = round_trip_matrix(2, 77, true).unwrap();
    assert_eq!(bad, total);
}
