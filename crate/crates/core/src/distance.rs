//! Variational distance and divergence oracles.
//!
//! `d(P, Q) = int |p - q|` takes values in `[0, 2]`. For one-dimensional
//! Gaussians it is integrated numerically; for blocks it is estimated as
//! `2 E_P[(1 - q(X)/p(X))_+]` with the ratio evaluated in log-space.

use serde::{Deserialize, Serialize};

use crate::ecvq::mean_and_se;
use crate::error::{Error, Result};
use crate::model::{ParamVector, Source, SourceFamily};
use crate::quad;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    Exact1d,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub method: DistanceMethod,
}

const EXACT_TOLERANCE: f64 = 1e-8;

/// `d(N(m, s^2), N(m', s'^2))` by adaptive quadrature of `|p - q|`.
pub fn variational_exact_1d(family: &SourceFamily, theta: &ParamVector, theta_prime: &ParamVector) -> Result<DistanceEstimate> {
    if !matches!(family, SourceFamily::GaussianIid) {
        return Err(Error::UnsupportedFamily(family.tag()));
    }
    family.check_param(theta)?;
    family.check_param(theta_prime)?;
    let (m1, s1) = (theta.coords()[0], theta.coords()[1]);
    let (m2, s2) = (theta_prime.coords()[0], theta_prime.coords()[1]);
    let integrand = |x: f64| {
        (crate::model::normal_pdf(x, m1, s1) - crate::model::normal_pdf(x, m2, s2)).abs()
    };
    let lo = (m1 - 40.0 * s1).min(m2 - 40.0 * s2);
    let hi = (m1 + 40.0 * s1).max(m2 + 40.0 * s2);
    // Split on a sigma grid around both means and at the density crossings so
    // every piece is smooth and no piece is wide enough to fool the sampler.
    let mut breaks = vec![lo, hi];
    for k in -40..=40 {
        breaks.push(m1 + k as f64 * s1);
        breaks.push(m2 + k as f64 * s2);
    }
    breaks.extend(density_crossings(m1, s1, m2, s2).into_iter().filter(|x| *x > lo && *x < hi));
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let value = quad::integrate_piecewise(&integrand, &breaks, EXACT_TOLERANCE).clamp(0.0, 2.0);
    Ok(DistanceEstimate {
        value,
        standard_error: 0.0,
        method: DistanceMethod::Exact1d,
    })
}

fn density_crossings(m1: f64, s1: f64, m2: f64, s2: f64) -> Vec<f64> {
    let a = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
    let b = m1 / (s1 * s1) - m2 / (s2 * s2);
    let c = m2 * m2 / (2.0 * s2 * s2) - m1 * m1 / (2.0 * s1 * s1) + (s2 / s1).ln();
    if a.abs() < 1e-14 {
        return if b.abs() < 1e-300 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let r = disc.sqrt();
    vec![(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)]
}

/// Monte-Carlo sample from a reference law, reusable to estimate the
/// variational distance from that law to many others.
pub struct DistanceProbe {
    reference: Source,
    n: usize,
    samples: Vec<Vec<f64>>,
    reference_log: Vec<f64>,
}

impl DistanceProbe {
    pub fn new(family: &SourceFamily, theta: &ParamVector, n: usize, num_samples: usize, seed: u64) -> Result<Self> {
        if n == 0 || num_samples == 0 {
            return Err(Error::Domain("block length and sample count must be positive".into()));
        }
        let reference = family.prepare(theta)?;
        let samples: Vec<Vec<f64>> = (0..num_samples)
            .map(|i| reference.sample(n, seed::derive(seed, &[i as u64])).into_values())
            .collect();
        let reference_log = samples.iter().map(|x| reference.log_density_unchecked(x)).collect();
        Ok(Self {
            reference,
            n,
            samples,
            reference_log,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reference(&self) -> &Source {
        &self.reference
    }

    /// Estimate `d_n(reference, other)`.
    pub fn distance_to(&self, other: &Source) -> DistanceEstimate {
        let terms: Vec<f64> = self
            .samples
            .iter()
            .zip(&self.reference_log)
            .map(|(x, &lp)| {
                let ratio = (other.log_density_unchecked(x) - lp).exp();
                2.0 * (1.0 - ratio).max(0.0)
            })
            .collect();
        let (value, standard_error) = mean_and_se(&terms);
        DistanceEstimate {
            value,
            standard_error,
            method: DistanceMethod::MonteCarlo,
        }
    }

    pub fn distance_to_param(&self, family: &SourceFamily, theta_prime: &ParamVector) -> Result<DistanceEstimate> {
        let other = family.prepare(theta_prime)?;
        if other.letter_dim() != self.reference.letter_dim() {
            return Err(Error::LengthMismatch {
                expected: self.reference.letter_dim(),
                actual: other.letter_dim(),
            });
        }
        Ok(self.distance_to(&other))
    }
}

/// Monte-Carlo estimate of `d_n(theta, theta')` under `P_theta`.
pub fn variational_mc(
    family: &SourceFamily,
    theta: &ParamVector,
    theta_prime: &ParamVector,
    n: usize,
    num_samples: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    DistanceProbe::new(family, theta, n, num_samples, seed)?.distance_to_param(family, theta_prime)
}

fn gaussian_coords(theta: &ParamVector) -> Result<(f64, f64)> {
    let c = theta.coords();
    if c.len() != 2 {
        return Err(Error::InvalidParameter {
            family: "gaussian-iid",
            reason: format!("expected (m, sigma), got {} coordinates", c.len()),
        });
    }
    if !(c[1] > 0.0) {
        return Err(Error::InvalidParameter {
            family: "gaussian-iid",
            reason: format!("sigma must be positive, got {}", c[1]),
        });
    }
    Ok((c[0], c[1]))
}

/// Normalised divergence `D_n(theta || theta')` in nats; for i.i.d. sources it
/// does not depend on `n`.
pub fn kl_gaussian_iid(theta: &ParamVector, theta_prime: &ParamVector, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("block length must be positive".into()));
    }
    let (m, s) = gaussian_coords(theta)?;
    let (m2, s2) = gaussian_coords(theta_prime)?;
    Ok((s2 / s).ln() + (s * s + (m - m2) * (m - m2)) / (2.0 * s2 * s2) - 0.5)
}

/// Upper bound `(1 + s'/s)^2 |theta - theta'|^2 / (2 s'^2)` on the Gaussian divergence.
pub fn kl_gaussian_bound(theta: &ParamVector, theta_prime: &ParamVector) -> Result<f64> {
    let (_, s) = gaussian_coords(theta)?;
    let (_, s2) = gaussian_coords(theta_prime)?;
    let dist = theta.distance(theta_prime);
    Ok((1.0 + s2 / s).powi(2) * dist * dist / (2.0 * s2 * s2))
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessRow {
    pub delta: f64,
    pub theta_prime: Vec<f64>,
    pub n: usize,
    pub distance: f64,
    pub standard_error: f64,
    /// `d_n / sqrt(n)`.
    pub normalized: f64,
    /// `c_theta * |theta - theta'|` where a closed-form constant exists.
    pub bound: Option<f64>,
    /// `sqrt(2 D_n)` where the divergence has a closed form.
    pub pinsker: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub rows: Vec<SmoothnessRow>,
    /// Largest observed `d_n / (sqrt(n) |theta - theta'|)`; diagnostic only
    /// for families without a closed-form constant.
    pub empirical_slope: f64,
}

impl SmoothnessReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }
}

fn perturbations(family: &SourceFamily, theta: &ParamVector, radius: f64) -> Vec<ParamVector> {
    let k = theta.dim();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    match family {
        SourceFamily::Hmm { emissions, .. } => {
            // Move mass between neighbouring entries of one row so rows stay stochastic.
            let m = emissions.len();
            for i in 0..m {
                for j in 0..m.saturating_sub(1) {
                    let mut d = vec![0.0; k];
                    d[i * m + j] = std::f64::consts::FRAC_1_SQRT_2;
                    d[i * m + j + 1] = -std::f64::consts::FRAC_1_SQRT_2;
                    dirs.push(d.iter().map(|v| -v).collect());
                    dirs.push(d);
                }
            }
        }
        _ => {
            for j in 0..k {
                for sign in [1.0, -1.0] {
                    let mut d = vec![0.0; k];
                    d[j] = sign;
                    dirs.push(d);
                }
            }
            if k == 2 {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                for (a, b) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                    dirs.push(vec![a, b]);
                }
            }
        }
    }
    dirs.into_iter()
        .map(|d| ParamVector::new(theta.coords().iter().zip(&d).map(|(t, u)| t + radius * u).collect()))
        .filter(|p| family.check_param(p).is_ok())
        .collect()
}

/// Empirical check of `d_n(theta, theta') / sqrt(n) <= c_theta |theta - theta'|`
/// over perturbations at radius `0.9 * delta` for every `delta` and `n`.
///
/// The Gaussian family uses `c_theta = 3 / (sigma - delta)` plus the Pinsker
/// chain through the closed-form divergence; other families only report the
/// empirical slope.
pub fn smoothness_check(
    family: &SourceFamily,
    theta: &ParamVector,
    delta_grid: &[f64],
    n_grid: &[usize],
    num_samples: usize,
    seed: u64,
) -> Result<SmoothnessReport> {
    family.check_param(theta)?;
    let gaussian = matches!(family, SourceFamily::GaussianIid);
    let mut rows = Vec::new();
    let mut slope: f64 = 0.0;
    for &n in n_grid {
        let probe = DistanceProbe::new(family, theta, n, num_samples, seed::derive(seed, &[n as u64]))?;
        let sqrt_n = (n as f64).sqrt();
        for &delta in delta_grid {
            if !(delta > 0.0) {
                return Err(Error::Domain(format!("delta must be positive, got {delta}")));
            }
            let c_theta = if gaussian {
                let sigma = theta.coords()[1];
                if delta >= sigma {
                    return Err(Error::Domain(format!("delta {delta} must be below sigma {sigma}")));
                }
                Some(3.0 / (sigma - delta))
            } else {
                None
            };
            let mut points = vec![theta.clone()];
            points.extend(perturbations(family, theta, 0.9 * delta));
            for p in points {
                let est = probe.distance_to_param(family, &p)?;
                let gap = theta.distance(&p);
                let normalized = est.value / sqrt_n;
                let slack = 3.0 * est.standard_error / sqrt_n;
                if gap > 0.0 {
                    slope = slope.max(normalized / gap);
                }
                let bound = c_theta.map(|c| c * gap);
                let pinsker = if gaussian {
                    Some((2.0 * kl_gaussian_iid(theta, &p, n)?).sqrt())
                } else {
                    None
                };
                let pass = match (bound, pinsker) {
                    (Some(b), Some(pk)) => Some(normalized <= b + slack && normalized <= pk + slack),
                    _ => None,
                };
                rows.push(SmoothnessRow {
                    delta,
                    theta_prime: p.coords().to_vec(),
                    n,
                    distance: est.value,
                    standard_error: est.standard_error,
                    normalized,
                    bound,
                    pinsker,
                    pass,
                });
            }
        }
    }
    Ok(SmoothnessReport {
        rows,
        empirical_slope: slope,
    })
}
