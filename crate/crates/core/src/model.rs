//! Parametric stationary source families.
//!
//! Three families are supported, all with densities w.r.t. Lebesgue measure:
//!
//! * Gaussian i.i.d. with `theta = (m, sigma)`, `sigma` the standard deviation.
//! * Gaussian AR(p) with `theta = (a_1, .., a_p)` and
//!   `X_t = -sum_i a_i X_{t-i} + Y_t`, `Y_t ~ N(0, 1)`. Valid when every root
//!   of `1 + a_1 z + .. + a_p z^p` lies outside the unit circle.
//! * Hidden Markov processes with `theta` the row-major `M x M` transition
//!   matrix, every entry strictly above a floor `a_0`, observed through known
//!   isotropic Gaussian emission densities on `R^d`.
//!
//! Paths are exactly stationary: AR paths start from the Yule-Walker
//! covariance and HMM chains from the stationary distribution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A point in the parameter space of a source family.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Euclidean distance in parameter space.
    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether two parameters are identical bit for bit.
    pub fn same_bits(&self, other: &ParamVector) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(coords: Vec<f64>) -> Self {
        Self(coords)
    }
}

impl std::fmt::Display for ParamVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A block of `n` letters, each a point of `R^dim`, stored letter-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBlock {
    dim: usize,
    values: Vec<f64>,
}

impl SampleBlock {
    pub fn scalar(values: Vec<f64>) -> Self {
        Self { dim: 1, values }
    }

    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::LengthMismatch {
                expected: dim.max(1) * (values.len() / dim.max(1)),
                actual: values.len(),
            });
        }
        Ok(Self { dim, values })
    }

    /// Number of letters.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn letter(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn letters(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// Letters `start .. start + len` as a new block.
    pub fn slice(&self, start: usize, len: usize) -> SampleBlock {
        SampleBlock {
            dim: self.dim,
            values: self.values[start * self.dim..(start + len) * self.dim].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Upper bound on the beta-mixing coefficients of a family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MixingDescriptor {
    /// Independent letters: beta(k) = 0.
    ExactZero,
    /// beta(k) <= constant * rate^k.
    Exponential { constant: f64, rate: f64 },
    /// beta(k) <= constant * k^(-exponent).
    Algebraic { constant: f64, exponent: f64 },
}

impl MixingDescriptor {
    pub fn bound(&self, k: u64) -> f64 {
        let k = k.max(1) as f64;
        let b = match *self {
            MixingDescriptor::ExactZero => 0.0,
            MixingDescriptor::Exponential { constant, rate } => constant * rate.powf(k),
            MixingDescriptor::Algebraic { constant, exponent } => constant * k.powf(-exponent),
        };
        // beta coefficients never exceed 2.
        b.min(2.0)
    }

    fn validate_exponential(&self) -> Result<()> {
        match *self {
            MixingDescriptor::Exponential { constant, rate }
                if constant > 0.0 && constant.is_finite() && rate > 0.0 && rate < 1.0 =>
            {
                Ok(())
            }
            MixingDescriptor::Exponential { .. } => Err(Error::InvalidFamily(
                "exponential mixing needs constant > 0 and rate in (0, 1)".into(),
            )),
            other => Err(Error::InvalidFamily(format!(
                "dependent families need an exponential mixing descriptor, got {other:?}"
            ))),
        }
    }
}

/// Known Gaussian emission density of one hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEmission {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl GaussianEmission {
    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let var = self.std * self.std;
        let sq: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * d * (LN_2PI + var.ln()) - 0.5 * sq / var
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceFamily {
    GaussianIid,
    GaussianAr {
        order: usize,
        mixing: MixingDescriptor,
    },
    Hmm {
        floor: f64,
        emissions: Vec<GaussianEmission>,
        mixing: MixingDescriptor,
    },
}

impl SourceFamily {
    pub fn gaussian_iid() -> Self {
        SourceFamily::GaussianIid
    }

    pub fn gaussian_ar(order: usize, constant: f64, rate: f64) -> Result<Self> {
        let family = SourceFamily::GaussianAr {
            order,
            mixing: MixingDescriptor::Exponential { constant, rate },
        };
        family.validate()?;
        Ok(family)
    }

    pub fn hmm(floor: f64, emissions: Vec<GaussianEmission>, constant: f64, rate: f64) -> Result<Self> {
        let family = SourceFamily::Hmm {
            floor,
            emissions,
            mixing: MixingDescriptor::Exponential { constant, rate },
        };
        family.validate()?;
        Ok(family)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SourceFamily::GaussianIid => "gaussian-iid",
            SourceFamily::GaussianAr { .. } => "gaussian-ar",
            SourceFamily::Hmm { .. } => "hmm",
        }
    }

    /// Dimension `k` of the parameter space.
    pub fn param_dim(&self) -> usize {
        match self {
            SourceFamily::GaussianIid => 2,
            SourceFamily::GaussianAr { order, .. } => *order,
            SourceFamily::Hmm { emissions, .. } => emissions.len() * emissions.len(),
        }
    }

    /// Dimension of one source letter.
    pub fn letter_dim(&self) -> usize {
        match self {
            SourceFamily::Hmm { emissions, .. } => emissions.first().map_or(1, |e| e.mean.len()),
            _ => 1,
        }
    }

    pub fn mixing(&self) -> MixingDescriptor {
        match self {
            SourceFamily::GaussianIid => MixingDescriptor::ExactZero,
            SourceFamily::GaussianAr { mixing, .. } | SourceFamily::Hmm { mixing, .. } => *mixing,
        }
    }

    /// Upper bound on `beta_theta(k)`. The configured constants are shared by
    /// every parameter of the family.
    pub fn mixing_bound(&self, k: u64) -> f64 {
        self.mixing().bound(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceFamily::GaussianIid => Ok(()),
            SourceFamily::GaussianAr { order, mixing } => {
                if *order == 0 {
                    return Err(Error::InvalidFamily("AR order must be at least 1".into()));
                }
                mixing.validate_exponential()
            }
            SourceFamily::Hmm {
                floor,
                emissions,
                mixing,
            } => {
                let m = emissions.len();
                if m == 0 {
                    return Err(Error::InvalidFamily("HMM needs at least one state".into()));
                }
                if !(*floor >= 0.0 && *floor * (m as f64) < 1.0) {
                    return Err(Error::InvalidFamily(format!(
                        "transition floor {floor} must lie in [0, 1/M) for M = {m}"
                    )));
                }
                let d = emissions[0].mean.len();
                for (s, e) in emissions.iter().enumerate() {
                    if e.mean.len() != d || d == 0 {
                        return Err(Error::InvalidFamily(format!(
                            "emission {s} has dimension {}, expected {d} >= 1",
                            e.mean.len()
                        )));
                    }
                    if !(e.std > 0.0 && e.std.is_finite()) || e.mean.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidFamily(format!(
                            "emission {s} must have finite mean and positive std"
                        )));
                    }
                }
                mixing.validate_exponential()
            }
        }
    }

    /// Check `theta` against the family's parameter space.
    pub fn check_param(&self, theta: &ParamVector) -> Result<()> {
        self.prepare(theta).map(|_| ())
    }

    /// Precompute everything needed to sample from and evaluate `P_theta`.
    pub fn prepare(&self, theta: &ParamVector) -> Result<Source> {
        self.validate()?;
        let invalid = |reason: String| Error::InvalidParameter {
            family: self.tag(),
            reason,
        };
        let k = self.param_dim();
        if theta.dim() != k {
            return Err(invalid(format!("expected {k} coordinates, got {}", theta.dim())));
        }
        if theta.coords().iter().any(|c| !c.is_finite()) {
            return Err(invalid("coordinates must be finite".into()));
        }
        let kind = match self {
            SourceFamily::GaussianIid => {
                let (mean, std) = (theta.coords()[0], theta.coords()[1]);
                if std <= 0.0 {
                    return Err(invalid(format!("sigma must be positive, got {std}")));
                }
                Prepared::Iid {
                    mean,
                    std,
                    log_norm: -0.5 * LN_2PI - std.ln(),
                }
            }
            SourceFamily::GaussianAr { .. } => {
                let coeffs = theta.coords().to_vec();
                if let Some(k) = reflection_coefficients(&coeffs).iter().position(|r| r.abs() >= 1.0) {
                    return Err(invalid(format!(
                        "AR polynomial has a root on or inside the unit circle (reflection coefficient {} has modulus >= 1)",
                        k + 1
                    )));
                }
                let init_chol = stationary_cholesky(&coeffs).ok_or_else(|| {
                    invalid("stationary covariance is not positive definite".into())
                })?;
                Prepared::Ar { coeffs, init_chol }
            }
            SourceFamily::Hmm { floor, emissions, .. } => {
                let m = emissions.len();
                let a = theta.coords();
                for i in 0..m {
                    let row = &a[i * m..(i + 1) * m];
                    if let Some(j) = row.iter().position(|&v| v <= *floor) {
                        return Err(invalid(format!(
                            "transition a[{i}][{j}] = {} must exceed the floor {floor}",
                            row[j]
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(invalid(format!("transition row {i} sums to {sum}, not 1")));
                    }
                }
                let stationary = stationary_distribution(a, m)
                    .ok_or_else(|| invalid("transition matrix has no unique stationary law".into()))?;
                Prepared::Hmm {
                    states: m,
                    trans: a.to_vec(),
                    log_trans: a.iter().map(|v| v.ln()).collect(),
                    log_stationary: stationary.iter().map(|v| v.ln()).collect(),
                    stationary,
                    emissions: emissions.clone(),
                }
            }
        };
        Ok(Source {
            tag: self.tag(),
            letter_dim: self.letter_dim(),
            kind,
        })
    }
}

/// A family member with its derived quantities precomputed.
#[derive(Clone, Debug)]
pub struct Source {
    tag: &'static str,
    letter_dim: usize,
    kind: Prepared,
}

#[derive(Clone, Debug)]
enum Prepared {
    Iid {
        mean: f64,
        std: f64,
        log_norm: f64,
    },
    Ar {
        coeffs: Vec<f64>,
        /// Cholesky factor of the p x p stationary covariance of (X_1, .., X_p).
        init_chol: DMatrix<f64>,
    },
    Hmm {
        states: usize,
        trans: Vec<f64>,
        log_trans: Vec<f64>,
        stationary: Vec<f64>,
        log_stationary: Vec<f64>,
        emissions: Vec<GaussianEmission>,
    },
}

impl Source {
    pub fn letter_dim(&self) -> usize {
        self.letter_dim
    }

    /// Draw a stationary path of `length` letters; a pure function of `seed`.
    pub fn sample(&self, length: usize, seed: u64) -> SampleBlock {
        let mut rng = seed::rng(seed);
        self.sample_with(length, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> SampleBlock {
        match &self.kind {
            Prepared::Iid { mean, std, .. } => {
                SampleBlock::scalar((0..length).map(|_| mean + std * std_normal(rng)).collect())
            }
            Prepared::Ar { coeffs, init_chol } => {
                let p = coeffs.len();
                let q = p.min(length);
                let z: Vec<f64> = (0..q).map(|_| std_normal(rng)).collect();
                let mut x = Vec::with_capacity(length);
                for i in 0..q {
                    x.push((0..=i).map(|j| init_chol[(i, j)] * z[j]).sum());
                }
                for t in q..length {
                    let y = std_normal(rng);
                    let pred: f64 = coeffs.iter().enumerate().map(|(i, a)| a * x[t - 1 - i]).sum();
                    x.push(y - pred);
                }
                SampleBlock::scalar(x)
            }
            Prepared::Hmm {
                states,
                trans,
                stationary,
                emissions,
                ..
            } => {
                let d = self.letter_dim;
                let mut values = Vec::with_capacity(length * d);
                let mut state = 0;
                for t in 0..length {
                    let u: f64 = rng.random();
                    let row = if t == 0 {
                        &stationary[..]
                    } else {
                        &trans[state * states..(state + 1) * states]
                    };
                    state = categorical(row, u);
                    let e = &emissions[state];
                    for j in 0..d {
                        values.push(e.mean[j] + e.std * std_normal(rng));
                    }
                }
                SampleBlock { dim: d, values }
            }
        }
    }

    /// Natural log of the block density `p^n_theta(x^n)`.
    pub fn log_density(&self, block: &SampleBlock) -> Result<f64> {
        if block.dim() != self.letter_dim {
            return Err(Error::LengthMismatch {
                expected: self.letter_dim,
                actual: block.dim(),
            });
        }
        Ok(self.log_density_unchecked(block.values()))
    }

    /// Log-density of a letter-major value slice whose letter dimension is
    /// already known to match.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Prepared::Iid { mean, std, log_norm } => {
                let sq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
                x.len() as f64 * log_norm - 0.5 * sq / (std * std)
            }
            Prepared::Ar { coeffs, init_chol } => {
                let p = coeffs.len();
                let n = x.len();
                let q = p.min(n);
                // Leading q x q block of the Cholesky factor is the factor of
                // the leading covariance block.
                let mut log_det = 0.0;
                let mut quad = 0.0;
                let mut w = vec![0.0; q];
                for i in 0..q {
                    let s: f64 = (0..i).map(|j| init_chol[(i, j)] * w[j]).sum();
                    w[i] = (x[i] - s) / init_chol[(i, i)];
                    quad += w[i] * w[i];
                    log_det += 2.0 * init_chol[(i, i)].ln();
                }
                let mut ll = -0.5 * (q as f64 * LN_2PI + log_det + quad);
                for t in q..n {
                    let pred: f64 = coeffs.iter().enumerate().map(|(i, a)| a * x[t - 1 - i]).sum();
                    let e = x[t] + pred;
                    ll += -0.5 * (LN_2PI + e * e);
                }
                ll
            }
            Prepared::Hmm {
                states,
                log_trans,
                log_stationary,
                emissions,
                ..
            } => {
                let m = *states;
                let d = self.letter_dim;
                let n = x.len() / d;
                if n == 0 {
                    return 0.0;
                }
                let mut alpha: Vec<f64> = (0..m)
                    .map(|s| log_stationary[s] + emissions[s].log_density(&x[..d]))
                    .collect();
                let mut next = vec![0.0; m];
                let mut terms = vec![0.0; m];
                for t in 1..n {
                    let letter = &x[t * d..(t + 1) * d];
                    for s in 0..m {
                        for (r, term) in terms.iter_mut().enumerate() {
                            *term = alpha[r] + log_trans[r * m + s];
                        }
                        next[s] = log_sum_exp(&terms) + emissions[s].log_density(letter);
                    }
                    std::mem::swap(&mut alpha, &mut next);
                }
                log_sum_exp(&alpha)
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        self.tag
    }
}

/// Sample a stationary path of `length` letters from `P_theta`.
pub fn sample_path(family: &SourceFamily, theta: &ParamVector, length: usize, seed: u64) -> Result<SampleBlock> {
    if length == 0 {
        return Err(Error::Domain("path length must be at least 1".into()));
    }
    Ok(family.prepare(theta)?.sample(length, seed))
}

/// Exact natural-log density of `block` under `P^n_theta`.
pub fn log_density(family: &SourceFamily, theta: &ParamVector, block: &SampleBlock) -> Result<f64> {
    family.prepare(theta)?.log_density(block)
}

/// Upper bound on `beta_theta(k)`; see [`SourceFamily::mixing_bound`].
pub fn mixing_bound(family: &SourceFamily, k: u64) -> f64 {
    family.mixing_bound(k)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Step-down (Schur-Cohn) recursion: reflection coefficients of
/// `1 + a_1 z + .. + a_p z^p`. All roots lie outside the unit circle iff
/// every coefficient has modulus below one.
pub(crate) fn reflection_coefficients(coeffs: &[f64]) -> Vec<f64> {
    let mut a = coeffs.to_vec();
    let mut out = vec![0.0; a.len()];
    for p in (1..=a.len()).rev() {
        let k = a[p - 1];
        out[p - 1] = k;
        if k.abs() >= 1.0 {
            break;
        }
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (0..p - 1).map(|i| (a[i] - k * a[p - 2 - i]) / denom).collect();
        a.truncate(p - 1);
        a.copy_from_slice(&prev);
    }
    out
}

/// Autocovariances `gamma_0 .. gamma_p` of a stable AR(p) with unit noise,
/// from the Yule-Walker equations.
pub fn ar_autocovariances(coeffs: &[f64]) -> Option<Vec<f64>> {
    let p = coeffs.len();
    let mut m = DMatrix::<f64>::zeros(p + 1, p + 1);
    for k in 0..=p {
        m[(k, k)] += 1.0;
        for (i, a) in coeffs.iter().enumerate() {
            let lag = (k as isize - (i as isize + 1)).unsigned_abs();
            m[(k, lag)] += a;
        }
    }
    let mut rhs = DVector::<f64>::zeros(p + 1);
    rhs[0] = 1.0;
    m.lu().solve(&rhs).map(|v| v.iter().cloned().collect())
}

fn stationary_cholesky(coeffs: &[f64]) -> Option<DMatrix<f64>> {
    let gamma = ar_autocovariances(coeffs)?;
    let p = coeffs.len();
    let cov = DMatrix::from_fn(p, p, |i, j| gamma[(i as isize - j as isize).unsigned_abs()]);
    cov.cholesky().map(|c| c.l())
}

fn stationary_distribution(trans: &[f64], m: usize) -> Option<Vec<f64>> {
    // (A^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut sys = DMatrix::<f64>::from_fn(m, m, |i, j| trans[j * m + i] - if i == j { 1.0 } else { 0.0 });
    let mut rhs = DVector::<f64>::zeros(m);
    for j in 0..m {
        sys[(m - 1, j)] = 1.0;
    }
    rhs[m - 1] = 1.0;
    let pi = sys.lu().solve(&rhs)?;
    if pi.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    Some(pi.iter().cloned().collect())
}

/// Standard normal density; handy for closed-form checks.
pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_hmm() -> SourceFamily {
        SourceFamily::hmm(
            0.05,
            vec![
                GaussianEmission { mean: vec![-1.0], std: 0.7 },
                GaussianEmission { mean: vec![1.5], std: 1.2 },
            ],
            1.0,
            0.8,
        )
        .unwrap()
    }

    #[test]
    fn iid_log_density_at_origin() {
        let ll = log_density(
            &SourceFamily::gaussian_iid(),
            &ParamVector::new(vec![0.0, 1.0]),
            &SampleBlock::scalar(vec![0.0]),
        )
        .unwrap();
        assert!((ll - (-0.5 * (2.0 * PI).ln())).abs() < 1e-15);
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn iid_paths_are_reproducible() {
        let fam = SourceFamily::gaussian_iid();
        let theta = ParamVector::new(vec![0.0, 1.0]);
        let a = sample_path(&fam, &theta, 3, 42).unwrap();
        let b = sample_path(&fam, &theta, 3, 42).unwrap();
        assert_eq!(a.len(), 3);
        let bits = |s: &SampleBlock| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&sample_path(&fam, &theta, 3, 43).unwrap()));
    }

    #[test]
    fn degenerate_ar_matches_iid() {
        let ar = SourceFamily::gaussian_ar(1, 1.0, 0.5).unwrap();
        let iid = SourceFamily::gaussian_iid();
        let x = sample_path(&ar, &ParamVector::new(vec![0.0]), 50, 9).unwrap();
        let y = sample_path(&iid, &ParamVector::new(vec![0.0, 1.0]), 50, 9).unwrap();
        assert_eq!(x, y);
        let la = log_density(&ar, &ParamVector::new(vec![0.0]), &x).unwrap();
        let li = log_density(&iid, &ParamVector::new(vec![0.0, 1.0]), &x).unwrap();
        assert!((la - li).abs() < 1e-10);
    }

    #[test]
    fn yule_walker_ar1() {
        let g = ar_autocovariances(&[-0.5]).unwrap();
        assert!((g[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((g[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ar_stability_region() {
        let fam = SourceFamily::gaussian_ar(2, 1.0, 0.9).unwrap();
        // 1 - 1.5 z + 0.56 z^2 = (1 - 0.7z)(1 - 0.8z): roots 1/0.7, 1/0.8.
        assert!(fam.check_param(&ParamVector::new(vec![-1.5, 0.56])).is_ok());
        // (1 - 2z)(1 - 0.5z) has a root at 0.5.
        let err = fam.check_param(&ParamVector::new(vec![-2.5, 1.0])).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
        assert!(fam.check_param(&ParamVector::new(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn ar_log_density_matches_joint_gaussian() {
        // AR(1) X_t = 0.6 X_{t-1} + Y_t: cov_ij = 0.6^|i-j| / (1 - 0.36).
        let fam = SourceFamily::gaussian_ar(1, 1.0, 0.7).unwrap();
        let theta = ParamVector::new(vec![-0.6]);
        let x = SampleBlock::scalar(vec![0.3, -1.2, 0.8, 2.0]);
        let n = 4;
        let cov = DMatrix::from_fn(n, n, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()) / 0.64);
        let chol = cov.clone().cholesky().unwrap();
        let xv = DVector::from_vec(x.values().to_vec());
        let quad = xv.dot(&chol.solve(&xv));
        let log_det = cov.determinant().ln();
        let expected = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det + quad);
        let got = log_density(&fam, &theta, &x).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn single_state_hmm_is_iid_emission() {
        let fam = SourceFamily::hmm(0.0, vec![GaussianEmission { mean: vec![0.5, -0.5], std: 2.0 }], 1.0, 0.5)
            .unwrap();
        let theta = ParamVector::new(vec![1.0]);
        let x = SampleBlock::new(2, vec![0.1, 0.2, -1.0, 3.0, 0.0, 0.0]).unwrap();
        let expected: f64 = x
            .letters()
            .map(|l| normal_pdf(l[0], 0.5, 2.0).ln() + normal_pdf(l[1], -0.5, 2.0).ln())
            .sum();
        assert!((log_density(&fam, &theta, &x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn hmm_validation_reports_failing_constraint() {
        let fam = two_state_hmm();
        let err = fam.check_param(&ParamVector::new(vec![0.97, 0.03, 0.5, 0.5])).unwrap_err();
        assert!(err.to_string().contains("floor"), "{err}");
        let err = fam.check_param(&ParamVector::new(vec![0.6, 0.6, 0.5, 0.5])).unwrap_err();
        assert!(err.to_string().contains("sums"), "{err}");
        assert!(fam.check_param(&ParamVector::new(vec![0.9, 0.1, 0.2, 0.8])).is_ok());
    }

    #[test]
    fn hmm_chain_starts_stationary() {
        let fam = two_state_hmm();
        let source = fam.prepare(&ParamVector::new(vec![0.9, 0.1, 0.3, 0.7])).unwrap();
        if let Prepared::Hmm { stationary, .. } = &source.kind {
            // pi = (0.75, 0.25) for this chain.
            assert!((stationary[0] - 0.75).abs() < 1e-12);
            assert!((stationary[1] - 0.25).abs() < 1e-12);
        } else {
            unreachable!();
        }
    }

    #[test]
    fn mixing_bounds() {
        assert_eq!(SourceFamily::gaussian_iid().mixing_bound(5), 0.0);
        let exp = MixingDescriptor::Exponential { constant: 1.0, rate: 0.5 };
        assert_eq!(exp.bound(3), 0.125);
        for k in 1..100 {
            assert!(exp.bound(k + 1) <= exp.bound(k));
        }
        assert!(SourceFamily::gaussian_ar(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_length_paths_are_rejected() {
        let r = sample_path(&SourceFamily::gaussian_iid(), &ParamVector::new(vec![0.0, 1.0]), 0, 1);
        assert!(r.is_err());
        let r = sample_path(&SourceFamily::gaussian_iid(), &ParamVector::new(vec![0.0, -1.0]), 3, 1);
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }
}
