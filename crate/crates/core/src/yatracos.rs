//! Yatracos classes, the minimum-distance estimator and VC bounds.
//!
//! For an ordered pair `(theta, theta')` the Yatracos set is
//! `A = {x : p_theta(x) > p_theta'(x)}`, tested in log-space with ties
//! counted as outside. The estimator works over the finite class induced by
//! all ordered pairs of a [`CandidateSet`].

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ParamVector, SampleBlock, Source, SourceFamily};
use crate::seed;

/// Finite ordered list of distinct, valid parameters.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    candidates: Vec<ParamVector>,
}

impl CandidateSet {
    pub fn new(family: &SourceFamily, candidates: Vec<ParamVector>) -> Result<Self> {
        for (i, c) in candidates.iter().enumerate() {
            family.check_param(c)?;
            if candidates[..i].iter().any(|d| d.same_bits(c)) {
                return Err(Error::InvalidCandidates(format!("candidate {i} ({c}) is repeated")));
            }
        }
        Ok(Self { candidates })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, i: usize) -> &ParamVector {
        &self.candidates[i]
    }

    pub fn as_slice(&self) -> &[ParamVector] {
        &self.candidates
    }

    pub fn position(&self, theta: &ParamVector) -> Option<usize> {
        self.candidates.iter().position(|c| c.same_bits(theta))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct YatracosSet {
    theta: ParamVector,
    theta_prime: ParamVector,
}

impl YatracosSet {
    pub fn new(theta: ParamVector, theta_prime: ParamVector) -> Result<Self> {
        if theta.same_bits(&theta_prime) {
            return Err(Error::InvalidCandidates("a Yatracos set needs two distinct parameters".into()));
        }
        Ok(Self { theta, theta_prime })
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn theta_prime(&self) -> &ParamVector {
        &self.theta_prime
    }

    /// The set for the reversed pair.
    pub fn reversed(&self) -> Self {
        Self {
            theta: self.theta_prime.clone(),
            theta_prime: self.theta.clone(),
        }
    }
}

fn check_block(family: &SourceFamily, block: &SampleBlock) -> Result<()> {
    if block.dim() != family.letter_dim() {
        return Err(Error::LengthMismatch {
            expected: family.letter_dim(),
            actual: block.dim(),
        });
    }
    Ok(())
}

pub fn yatracos_member(family: &SourceFamily, set: &YatracosSet, block: &SampleBlock) -> Result<bool> {
    check_block(family, block)?;
    let a = family.prepare(&set.theta)?;
    let b = family.prepare(&set.theta_prime)?;
    Ok(a.log_density_unchecked(block.values()) > b.log_density_unchecked(block.values()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl ProbabilityEstimate {
    fn from_count(count: u64, samples: usize) -> Self {
        let p = count as f64 / samples as f64;
        Self {
            value: p,
            standard_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// Seed of the reference sample drawn from `P_theta_ref`. Every probability
/// under the same reference law shares this sample.
fn reference_seed(seed: u64, theta_ref: &ParamVector) -> u64 {
    seed::derive(seed, &[seed::label("yatracos-reference"), seed::hash_reals(theta_ref.coords())])
}

fn reference_block(source: &Source, n: usize, base: u64, i: usize) -> Vec<f64> {
    source.sample(n, seed::derive(base, &[i as u64])).into_values()
}

/// Monte-Carlo estimate of `P^n_theta_ref(A)`.
pub fn set_probability(
    family: &SourceFamily,
    theta_ref: &ParamVector,
    set: &YatracosSet,
    n: usize,
    num_samples: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if num_samples == 0 || n == 0 {
        return Err(Error::Domain("block length and sample count must be positive".into()));
    }
    let reference = family.prepare(theta_ref)?;
    let a = family.prepare(&set.theta)?;
    let b = family.prepare(&set.theta_prime)?;
    let base = reference_seed(seed, theta_ref);
    let count = (0..num_samples)
        .filter(|&i| {
            let x = reference_block(&reference, n, base, i);
            a.log_density_unchecked(&x) > b.log_density_unchecked(&x)
        })
        .count();
    Ok(ProbabilityEstimate::from_count(count as u64, num_samples))
}

type CacheKey = (Vec<u64>, Vec<u64>, Vec<u64>, usize, usize, u64);

/// Thread-safe memo of [`set_probability`] results.
#[derive(Default)]
pub struct ProbabilityCache {
    entries: Mutex<HashMap<CacheKey, ProbabilityEstimate>>,
}

impl ProbabilityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn set_probability(
        &self,
        family: &SourceFamily,
        theta_ref: &ParamVector,
        set: &YatracosSet,
        n: usize,
        num_samples: usize,
        seed: u64,
    ) -> Result<ProbabilityEstimate> {
        let bits = |p: &ParamVector| p.coords().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        let key = (bits(theta_ref), bits(&set.theta), bits(&set.theta_prime), n, num_samples, seed);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let est = set_probability(family, theta_ref, set, n, num_samples, seed)?;
        self.entries.lock().unwrap().insert(key, est);
        Ok(est)
    }
}

/// Probabilities of every ordered-pair set of a candidate class; entry
/// `(a, b)` belongs to `A_{c_a, c_b}`. The diagonal is the empty set.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatrix {
    k: usize,
    values: Vec<f64>,
    samples: usize,
}

impl PairMatrix {
    fn from_counts(k: usize, counts: &[u32], samples: usize) -> Self {
        Self {
            k,
            values: counts.iter().map(|&c| c as f64 / samples as f64).collect(),
            samples,
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    /// `max_A |self(A) - other(A)|` with the maximising pair.
    pub fn sup_deviation(&self, other: &PairMatrix) -> (f64, (usize, usize)) {
        let mut best = (0.0, (0, 0));
        for a in 0..self.k {
            for b in 0..self.k {
                let d = (self.get(a, b) - other.get(a, b)).abs();
                if d > best.0 {
                    best = (d, (a, b));
                }
            }
        }
        best
    }

    /// Largest binomial standard error over the class.
    pub fn max_standard_error(&self) -> f64 {
        self.values
            .iter()
            .map(|&p| (p * (1.0 - p) / self.samples as f64).sqrt())
            .fold(0.0, f64::max)
    }
}

/// The Yatracos class induced by a candidate set.
pub struct YatracosClass {
    family: SourceFamily,
    sources: Vec<Source>,
}

impl YatracosClass {
    pub fn new(family: &SourceFamily, candidates: &CandidateSet) -> Result<Self> {
        let sources = candidates
            .as_slice()
            .iter()
            .map(|c| family.prepare(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family: family.clone(),
            sources,
        })
    }

    pub fn size(&self) -> usize {
        self.sources.len()
    }

    fn tally(&self, x: &[f64], lds: &mut [f64], counts: &mut [u32]) {
        let k = self.sources.len();
        for (l, s) in lds.iter_mut().zip(&self.sources) {
            *l = s.log_density_unchecked(x);
        }
        for a in 0..k {
            let la = lds[a];
            let row = &mut counts[a * k..(a + 1) * k];
            for (c, &lb) in row.iter_mut().zip(lds.iter()) {
                *c += (la > lb) as u32;
            }
        }
    }

    /// Exact empirical frequencies of every set over `blocks`.
    pub fn frequencies(&self, blocks: &[SampleBlock]) -> Result<PairMatrix> {
        check_blocks(&self.family, blocks)?;
        let k = self.sources.len();
        let mut counts = vec![0u32; k * k];
        let mut lds = vec![0.0; k];
        for b in blocks {
            self.tally(b.values(), &mut lds, &mut counts);
        }
        Ok(PairMatrix::from_counts(k, &counts, blocks.len()))
    }

    /// Monte-Carlo probabilities of every set under `P^n_theta_ref`, from the
    /// same reference sample [`set_probability`] draws.
    pub fn probabilities(&self, theta_ref: &ParamVector, n: usize, num_samples: usize, seed: u64) -> Result<PairMatrix> {
        if num_samples == 0 || n == 0 {
            return Err(Error::Domain("block length and sample count must be positive".into()));
        }
        let reference = self.family.prepare(theta_ref)?;
        let base = reference_seed(seed, theta_ref);
        let k = self.sources.len();
        let mut counts = vec![0u32; k * k];
        let mut lds = vec![0.0; k];
        for i in 0..num_samples {
            let x = reference_block(&reference, n, base, i);
            self.tally(&x, &mut lds, &mut counts);
        }
        Ok(PairMatrix::from_counts(k, &counts, num_samples))
    }
}

fn check_blocks(family: &SourceFamily, blocks: &[SampleBlock]) -> Result<usize> {
    let first = blocks.first().ok_or(Error::EmptyTraining)?;
    let n = first.len();
    for (i, b) in blocks.iter().enumerate() {
        check_block(family, b)?;
        if b.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        if !b.is_finite() {
            return Err(Error::NonFiniteTraining { block: i });
        }
    }
    if n == 0 {
        return Err(Error::Domain("blocks must be non-empty".into()));
    }
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UStatistic {
    pub value: f64,
    /// Largest Monte-Carlo standard error over the class.
    pub standard_error: f64,
    pub argmax: (usize, usize),
}

/// `U_theta = max_A |P^n_theta(A) - P_Z(A)|` over the class induced by `candidates`.
pub fn u_statistic(
    family: &SourceFamily,
    theta: &ParamVector,
    blocks: &[SampleBlock],
    candidates: &CandidateSet,
    mc_budget: usize,
    seed: u64,
) -> Result<UStatistic> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates {
            needed: 2,
            got: candidates.len(),
        });
    }
    let n = check_blocks(family, blocks)?;
    let class = YatracosClass::new(family, candidates)?;
    let empirical = class.frequencies(blocks)?;
    let model = class.probabilities(theta, n, mc_budget, seed)?;
    let (value, argmax) = model.sup_deviation(&empirical);
    Ok(UStatistic {
        value,
        standard_error: model.max_standard_error(),
        argmax,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MdeOutcome {
    pub index: usize,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub u_standard_error: Vec<f64>,
    pub min_u: f64,
    pub block_length: usize,
}

impl MdeOutcome {
    pub fn estimate(&self) -> ParamVector {
        ParamVector::new(self.theta.clone())
    }
}

/// Model-side probabilities for every candidate, reusable across data sets.
pub struct MdeReference {
    class: YatracosClass,
    models: Vec<PairMatrix>,
    n: usize,
}

impl MdeReference {
    pub fn new(family: &SourceFamily, candidates: &CandidateSet, n: usize, mc_budget: usize, seed: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::TooFewCandidates { needed: 1, got: 0 });
        }
        let class = YatracosClass::new(family, candidates)?;
        let models = if candidates.len() == 1 {
            Vec::new()
        } else {
            candidates
                .as_slice()
                .par_iter()
                .map(|c| class.probabilities(c, n, mc_budget, seed))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { class, models, n })
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    /// `U` values for every candidate against the empirical measure of `blocks`.
    pub fn u_values(&self, blocks: &[SampleBlock]) -> Result<Vec<UStatistic>> {
        let n = check_blocks(&self.class.family, blocks)?;
        if n != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: n,
            });
        }
        if self.class.size() == 1 {
            return Ok(vec![UStatistic {
                value: 0.0,
                standard_error: 0.0,
                argmax: (0, 0),
            }]);
        }
        let empirical = self.class.frequencies(blocks)?;
        Ok(self
            .models
            .iter()
            .map(|m| {
                let (value, argmax) = m.sup_deviation(&empirical);
                UStatistic {
                    value,
                    standard_error: m.max_standard_error(),
                    argmax,
                }
            })
            .collect())
    }

    /// First candidate whose `U` is within `1/n` of the minimum.
    pub fn estimate(&self, candidates: &CandidateSet, blocks: &[SampleBlock]) -> Result<MdeOutcome> {
        let stats = self.u_values(blocks)?;
        let u: Vec<f64> = stats.iter().map(|s| s.value).collect();
        let min_u = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = 1.0 / self.n as f64;
        let index = u.iter().position(|&v| v < min_u + slack).expect("the minimiser qualifies");
        Ok(MdeOutcome {
            index,
            theta: candidates.get(index).coords().to_vec(),
            u_standard_error: stats.iter().map(|s| s.standard_error).collect(),
            u,
            min_u,
            block_length: self.n,
        })
    }
}

/// Minimum-distance estimate over `candidates` from the empirical measure of `blocks`.
pub fn mde_estimate(
    family: &SourceFamily,
    blocks: &[SampleBlock],
    candidates: &CandidateSet,
    mc_budget: usize,
    seed: u64,
) -> Result<MdeOutcome> {
    if candidates.is_empty() {
        return Err(Error::TooFewCandidates { needed: 1, got: 0 });
    }
    let n = check_blocks(family, blocks)?;
    MdeReference::new(family, candidates, n, mc_budget, seed)?.estimate(candidates, blocks)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VcBoundReport {
    pub family: &'static str,
    pub n: usize,
    pub value: f64,
    pub formula: &'static str,
}

/// Upper bound on the VC dimension of the family's Yatracos class, base-2 logs.
pub fn vc_bound(family: &SourceFamily, n: usize) -> Result<VcBoundReport> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let e = std::f64::consts::E;
    let (value, formula) = match family {
        SourceFamily::GaussianIid => (12.0 * (12.0 * e).log2(), "12*log2(12e)"),
        SourceFamily::GaussianAr { order, .. } => ((4 * order + 4) as f64 * (8.0 * e).log2(), "(4p+4)*log2(8e)"),
        SourceFamily::Hmm { emissions, .. } => {
            let m = emissions.len() as f64;
            (4.0 * m * m * (4.0 * e * n as f64).log2(), "4M^2*log2(4en)")
        }
    };
    Ok(VcBoundReport {
        family: family.tag(),
        n,
        value,
        formula,
    })
}

fn check_vc_args(n: usize, v: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if !(v >= 2.0) {
        return Err(Error::Domain(format!("VC dimension bound must be at least 2, got {v}")));
    }
    Ok(())
}

/// `ln(8 n^V exp(-n eps^2 / 32))`, unclamped.
pub fn vc_deviation_log_bound(n: usize, v: f64, epsilon: f64) -> Result<f64> {
    check_vc_args(n, v)?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let nf = n as f64;
    Ok(8f64.ln() + v * nf.ln() - nf * epsilon * epsilon / 32.0)
}

/// `min(1, 8 n^V exp(-n eps^2 / 32))`.
pub fn vc_deviation_bound(n: usize, v: f64, epsilon: f64) -> Result<f64> {
    Ok(vc_deviation_log_bound(n, v, epsilon)?.exp().min(1.0))
}

/// `c sqrt(V ln n / n)`.
pub fn vc_expectation_bound(n: usize, v: f64, c: f64) -> Result<f64> {
    check_vc_args(n, v)?;
    let nf = n as f64;
    Ok(c * (v * nf.ln() / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianEmission;

    fn g(m: f64, s: f64) -> ParamVector {
        ParamVector::new(vec![m, s])
    }

    fn blocks_from(theta: &ParamVector, count: usize, n: usize, seed: u64) -> Vec<SampleBlock> {
        let src = SourceFamily::gaussian_iid().prepare(theta).unwrap();
        (0..count).map(|i| src.sample(n, seed::derive(seed, &[i as u64]))).collect()
    }

    #[test]
    fn membership_examples() {
        let fam = SourceFamily::gaussian_iid();
        let set = YatracosSet::new(g(0.0, 1.0), g(1.0, 1.0)).unwrap();
        assert!(!yatracos_member(&fam, &set, &SampleBlock::scalar(vec![0.5])).unwrap());
        assert!(!yatracos_member(&fam, &set.reversed(), &SampleBlock::scalar(vec![0.5])).unwrap());
        let far = YatracosSet::new(g(0.0, 1.0), g(8.0, 1.0)).unwrap();
        assert!(yatracos_member(&fam, &far, &SampleBlock::scalar(vec![0.1, -0.2])).unwrap());
        let x = SampleBlock::scalar(vec![0.2, 0.9]);
        assert_ne!(
            yatracos_member(&fam, &set, &x).unwrap(),
            yatracos_member(&fam, &set.reversed(), &x).unwrap()
        );
        assert!(YatracosSet::new(g(0.0, 1.0), g(0.0, 1.0)).is_err());
    }

    #[test]
    fn probability_matches_normal_cdf() {
        let fam = SourceFamily::gaussian_iid();
        let set = YatracosSet::new(g(0.0, 1.0), g(1.0, 1.0)).unwrap();
        let p = set_probability(&fam, &g(0.0, 1.0), &set, 1, 20_000, 4).unwrap();
        let phi = 0.5 * (1.0 + statrs::function::erf::erf(0.5 / 2f64.sqrt()));
        assert!((p.value - phi).abs() <= 3.0 * p.standard_error, "{p:?}");
        let q = set_probability(&fam, &g(0.0, 1.0), &set.reversed(), 1, 20_000, 4).unwrap();
        assert!((p.value + q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cache_and_class_agree_with_standalone() {
        let fam = SourceFamily::gaussian_iid();
        let cands = CandidateSet::new(&fam, vec![g(0.0, 1.0), g(0.5, 1.0), g(0.0, 2.0)]).unwrap();
        let class = YatracosClass::new(&fam, &cands).unwrap();
        let m = class.probabilities(&g(0.2, 1.1), 3, 500, 9).unwrap();
        let cache = ProbabilityCache::new();
        for a in 0..3 {
            assert_eq!(m.get(a, a), 0.0);
            for b in 0..3 {
                if a == b {
                    continue;
                }
                let set = YatracosSet::new(cands.get(a).clone(), cands.get(b).clone()).unwrap();
                let p = cache.set_probability(&fam, &g(0.2, 1.1), &set, 3, 500, 9).unwrap();
                assert_eq!(p.value, m.get(a, b));
                assert_eq!(cache.set_probability(&fam, &g(0.2, 1.1), &set, 3, 500, 9).unwrap(), p);
            }
        }
        assert_eq!(cache.len(), 6);
    }

    #[test]
    fn candidate_validation() {
        let fam = SourceFamily::gaussian_iid();
        assert!(CandidateSet::new(&fam, vec![g(0.0, 1.0), g(0.0, 1.0)]).is_err());
        assert!(CandidateSet::new(&fam, vec![g(0.0, -1.0)]).is_err());
        let one = CandidateSet::new(&fam, vec![g(0.0, 1.0)]).unwrap();
        let blocks = blocks_from(&g(0.0, 1.0), 4, 2, 1);
        assert!(matches!(
            u_statistic(&fam, &g(0.0, 1.0), &blocks, &one, 10, 1),
            Err(Error::TooFewCandidates { .. })
        ));
        assert_eq!(mde_estimate(&fam, &blocks, &one, 10, 1).unwrap().index, 0);
        let none = CandidateSet::new(&fam, vec![]).unwrap();
        assert!(matches!(mde_estimate(&fam, &blocks, &none, 10, 1), Err(Error::TooFewCandidates { .. })));
    }

    #[test]
    fn u_statistic_is_small_under_truth() {
        let fam = SourceFamily::gaussian_iid();
        let cands = CandidateSet::new(&fam, vec![g(0.0, 1.0), g(1.0, 1.0)]).unwrap();
        let blocks = blocks_from(&g(0.0, 1.0), 4000, 1, 2);
        let u = u_statistic(&fam, &g(0.0, 1.0), &blocks, &cands, 4000, 3).unwrap();
        assert!(u.value >= 0.0 && u.value <= 1.0);
        // Two independent binomial frequencies of about 0.69 at 4000 draws each.
        assert!(u.value < 4.0 * 2f64.sqrt() * u.standard_error, "{u:?}");
        let wrong = u_statistic(&fam, &g(1.0, 1.0), &blocks, &cands, 4000, 3).unwrap();
        assert!(wrong.value > 0.3);
    }

    #[test]
    fn mde_separates_far_candidate() {
        let fam = SourceFamily::gaussian_iid();
        let cands = CandidateSet::new(&fam, vec![g(6.0, 1.0), g(0.0, 1.0)]).unwrap();
        let blocks = blocks_from(&g(0.0, 1.0), 64, 4, 5);
        let out = mde_estimate(&fam, &blocks, &cands, 2000, 6).unwrap();
        assert_eq!(out.index, 1);
        assert_eq!(out.estimate(), g(0.0, 1.0));
        assert!(out.u[0] > out.u[1] + 0.25);
    }

    #[test]
    fn mde_works_for_hmm() {
        let em = vec![
            GaussianEmission { mean: vec![-1.0], std: 0.5 },
            GaussianEmission { mean: vec![1.0], std: 0.5 },
        ];
        let fam = SourceFamily::hmm(0.05, em, 1.0, 0.5).unwrap();
        let truth = ParamVector::new(vec![0.9, 0.1, 0.1, 0.9]);
        let cands = CandidateSet::new(&fam, vec![ParamVector::new(vec![0.2, 0.8, 0.8, 0.2]), truth.clone()]).unwrap();
        let src = fam.prepare(&truth).unwrap();
        let blocks: Vec<_> = (0..200).map(|i| src.sample(6, 100 + i)).collect();
        assert_eq!(mde_estimate(&fam, &blocks, &cands, 1000, 1).unwrap().index, 1);
    }

    #[test]
    fn vc_formulas() {
        let e = std::f64::consts::E;
        let gauss = vc_bound(&SourceFamily::gaussian_iid(), 5).unwrap();
        assert!((gauss.value - 12.0 * (12.0 * e).ln() / 2f64.ln()).abs() < 1e-12);
        assert!((gauss.value - 60.332).abs() < 1e-3);
        let ar = vc_bound(&SourceFamily::gaussian_ar(2, 1.0, 0.5).unwrap(), 5).unwrap();
        assert!((ar.value - 53.312).abs() < 1e-3);
        let em = vec![
            GaussianEmission { mean: vec![0.0], std: 1.0 },
            GaussianEmission { mean: vec![1.0], std: 1.0 },
        ];
        let hmm = SourceFamily::hmm(0.01, em, 1.0, 0.5).unwrap();
        assert!((vc_bound(&hmm, 8).unwrap().value - 103.08).abs() < 1e-2);
        assert!(vc_bound(&hmm, 64).unwrap().value > vc_bound(&hmm, 8).unwrap().value);
        assert!(vc_bound(&hmm, 0).is_err());
    }

    #[test]
    fn deviation_bound_examples() {
        assert_eq!(vc_deviation_bound(10, 2.0, 0.1).unwrap(), 1.0);
        let raw = vc_deviation_log_bound(10, 2.0, 0.1).unwrap().exp();
        assert!((raw - 800.0 * (-0.1f64 / 32.0).exp()).abs() < 1e-9);
        assert!(vc_deviation_bound(100, 2.0, 10.0).unwrap() < 1.0);
        assert!(vc_deviation_bound(10, 1.5, 0.1).is_err());
        let mut last = f64::INFINITY;
        for eps in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let b = vc_deviation_log_bound(50, 3.0, eps).unwrap();
            assert!(b < last);
            last = b;
        }
        assert!((vc_expectation_bound(100, 4.0, 1.0).unwrap() - (4.0 * 100f64.ln() / 100.0).sqrt()).abs() < 1e-15);
    }
}
