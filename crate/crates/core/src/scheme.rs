//! The two-stage universal code.
//!
//! The encoder sees `m_n` past symbols and the current block of `n`. From the
//! past it takes `n` blocks of length `n` separated by gaps of length `l_n`,
//! estimates the source by minimum distance over a prefix of a shared random
//! parameter database, and looks for the first database entry within the
//! identification tolerance. The wire format of one block is
//!
//! ```text
//! [b][Elias gamma of T, only when b = 0][ECVQ codeword]
//! ```
//!
//! with `b = 1` meaning no entry was found and the codebook of `theta(1)` is used.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp1, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::bitcode::{elias_encode_into, elias_read, BitReader, BitString};
use crate::distance::{variational_mc, DistanceEstimate, DistanceProbe};
use crate::ecvq::{ecvq_design, ecvq_encode, training_blocks, Codebook, DistortionSpec, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{ParamVector, SampleBlock, SourceFamily};
use crate::seed;
use crate::yatracos::{vc_bound, CandidateSet, MdeOutcome, MdeReference};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    /// `sqrt(2048 (V + 1) ln n) / n + 6 / n^{3/2}`.
    Paper,
    /// `c_delta sqrt(ln n / n)`.
    Practical,
}

impl std::str::FromStr for DeltaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(DeltaMode::Paper),
            "practical" => Ok(DeltaMode::Practical),
            other => Err(Error::InvalidConfig(format!("unknown delta mode {other:?}"))),
        }
    }
}

pub fn delta_schedule(n: usize, v: f64, mode: DeltaMode, c_delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("delta schedule needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    match mode {
        DeltaMode::Paper => {
            if !(v >= 0.0) {
                return Err(Error::Domain(format!("VC bound must be non-negative, got {v}")));
            }
            Ok((2048.0 * (v + 1.0) * nf.ln()).sqrt() / nf + 6.0 / nf.powf(1.5))
        }
        DeltaMode::Practical => {
            if !(c_delta > 0.0) {
                return Err(Error::Domain(format!("c_delta must be positive, got {c_delta}")));
            }
            Ok(c_delta * (nf.ln() / nf).sqrt())
        }
    }
}

/// Waiting-time tolerance `sqrt(n) delta_n`.
pub fn identification_tolerance(n: usize, v: f64, mode: DeltaMode, c_delta: f64) -> Result<f64> {
    Ok((n as f64).sqrt() * delta_schedule(n, v, mode, c_delta)?)
}

/// Prior `W` over the parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prior {
    /// `m ~ N(0, mean_std^2)` and `ln sigma ~ N(log_sigma_mean, log_sigma_std^2)`.
    GaussianIid {
        mean_std: f64,
        log_sigma_mean: f64,
        log_sigma_std: f64,
    },
    /// Uniform on the stability region, by rejection from the box `|a_i| <= C(p, i)`.
    ArStable { order: usize },
    /// Rows `a_0 + (1 - M a_0) Dirichlet(1, .., 1)`.
    HmmDirichlet { states: usize, floor: f64 },
}

impl Prior {
    pub fn default_for(family: &SourceFamily) -> Self {
        match family {
            SourceFamily::GaussianIid => Prior::GaussianIid {
                mean_std: 10.0,
                log_sigma_mean: 0.0,
                log_sigma_std: 1.0,
            },
            SourceFamily::GaussianAr { order, .. } => Prior::ArStable { order: *order },
            SourceFamily::Hmm { floor, emissions, .. } => Prior::HmmDirichlet {
                states: emissions.len(),
                floor: *floor,
            },
        }
    }

    pub fn check(&self, family: &SourceFamily) -> Result<()> {
        let ok = match (self, family) {
            (
                Prior::GaussianIid {
                    mean_std,
                    log_sigma_std,
                    log_sigma_mean,
                },
                SourceFamily::GaussianIid,
            ) => *mean_std > 0.0 && *log_sigma_std > 0.0 && log_sigma_mean.is_finite(),
            (Prior::ArStable { order }, SourceFamily::GaussianAr { order: p, .. }) => order == p,
            (Prior::HmmDirichlet { states, floor }, SourceFamily::Hmm { floor: f, emissions, .. }) => {
                *states == emissions.len() && floor >= f && (*states as f64) * floor < 1.0
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("prior {self:?} does not fit family {}", family.tag())))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, family: &SourceFamily, rng: &mut R) -> ParamVector {
        match self {
            Prior::GaussianIid {
                mean_std,
                log_sigma_mean,
                log_sigma_std,
            } => {
                let m = Normal::new(0.0, *mean_std).expect("checked prior").sample(rng);
                let s = LogNormal::new(*log_sigma_mean, *log_sigma_std).expect("checked prior").sample(rng);
                ParamVector::new(vec![m, s.max(f64::MIN_POSITIVE)])
            }
            Prior::ArStable { order } => {
                let bounds: Vec<f64> = (1..=*order).map(|i| binomial(*order, i)).collect();
                loop {
                    let a: Vec<f64> = bounds.iter().map(|&c| rng.random_range(-c..=c)).collect();
                    let theta = ParamVector::new(a);
                    if family.check_param(&theta).is_ok() {
                        return theta;
                    }
                }
            }
            Prior::HmmDirichlet { states, floor } => {
                let m = *states;
                let free = 1.0 - m as f64 * floor;
                let mut a = Vec::with_capacity(m * m);
                for _ in 0..m {
                    let g: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
                    let total: f64 = g.iter().sum();
                    a.extend(g.iter().map(|x| floor + free * x / total));
                }
                ParamVector::new(a)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The shared random parameter database `theta(1), theta(2), ..`.
#[derive(Clone, Debug)]
pub struct Database {
    family: SourceFamily,
    prior: Prior,
    seed: u64,
    planted: Vec<(u64, ParamVector)>,
}

impl Database {
    pub fn new(family: &SourceFamily, prior: Prior, seed: u64) -> Result<Self> {
        prior.check(family)?;
        Ok(Self {
            family: family.clone(),
            prior,
            seed,
            planted: Vec::new(),
        })
    }

    /// Override entry `index` with a fixed parameter.
    pub fn plant(&mut self, index: u64, theta: ParamVector) -> Result<()> {
        if index == 0 {
            return Err(Error::Domain("database indices start at 1".into()));
        }
        self.family.check_param(&theta)?;
        self.planted.retain(|(i, _)| *i != index);
        self.planted.push((index, theta));
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn point(&self, index: u64) -> Result<ParamVector> {
        if index == 0 {
            return Err(Error::Domain("database indices start at 1".into()));
        }
        if let Some((_, theta)) = self.planted.iter().find(|(i, _)| *i == index) {
            return Ok(theta.clone());
        }
        let mut rng = seed::rng(seed::derive(self.seed, &[seed::label("database"), index]));
        Ok(self.prior.sample(&self.family, &mut rng))
    }
}

pub fn database_point(db: &Database, index: u64) -> Result<ParamVector> {
    db.point(index)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryLayout {
    pub n: usize,
    pub l_n: usize,
    /// Gap length before any cap.
    pub l_n_formula: usize,
    pub m_n: usize,
    pub z_offsets: Vec<usize>,
    pub y_offsets: Vec<usize>,
}

/// Gap length `ceil(n^((2 + eta) / r))`, zero for `r = infinity`.
pub fn gap_length(n: usize, eta: f64, r: Option<f64>) -> usize {
    match r {
        None => 0,
        Some(r) => {
            let v = (n as f64).powf((2.0 + eta) / r);
            let c = v.ceil();
            // Guard against pow landing a hair above an exact integer.
            if (c - 1.0 - v).abs() < 1e-9 * v.max(1.0) {
                (c - 1.0) as usize
            } else {
                c as usize
            }
        }
    }
}

/// Layout of the past `X_{-m_n+1} .. X_0` as `Z_1 Y_1 .. Z_n Y_n`.
pub fn memory_layout(config: &SchemeConfig, l_cap: Option<usize>) -> MemoryLayout {
    let n = config.n;
    let l_n_formula = gap_length(n, config.eta, config.mixing_exponent);
    let l_n = l_cap.map_or(l_n_formula, |c| l_n_formula.min(c));
    let stride = n + l_n;
    MemoryLayout {
        n,
        l_n,
        l_n_formula,
        m_n: n * stride,
        z_offsets: (0..n).map(|j| j * stride).collect(),
        y_offsets: (0..n).map(|j| j * stride + n).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WaitingTime {
    Hit { index: u64, distance: DistanceEstimate },
    NotFound,
}

impl WaitingTime {
    pub fn index(&self) -> Option<u64> {
        match self {
            WaitingTime::Hit { index, .. } => Some(*index),
            WaitingTime::NotFound => None,
        }
    }
}

/// First `i <= i_max` with `d_n(theta(i), theta_tilde) <= tol`. All distances
/// are estimated from one Monte-Carlo sample drawn under `theta_tilde`.
pub fn waiting_time(
    db: &Database,
    theta_tilde: &ParamVector,
    tol: f64,
    n: usize,
    mc_budget: usize,
    seed: u64,
    i_max: u64,
) -> Result<WaitingTime> {
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance must be non-negative, got {tol}")));
    }
    let probe = DistanceProbe::new(&db.family, theta_tilde, n, mc_budget, seed)?;
    for i in 1..=i_max {
        let theta = db.point(i)?;
        let distance = if theta.same_bits(theta_tilde) {
            DistanceEstimate {
                value: 0.0,
                standard_error: 0.0,
                method: crate::distance::DistanceMethod::MonteCarlo,
            }
        } else {
            probe.distance_to(&db.family.prepare(&theta)?)
        };
        if distance.value <= tol {
            return Ok(WaitingTime::Hit { index: i, distance });
        }
    }
    Ok(WaitingTime::NotFound)
}

#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub n: usize,
    pub eta: f64,
    /// Algebraic mixing exponent `r`; `None` for i.i.d. sources.
    pub mixing_exponent: Option<f64>,
    pub lambda: f64,
    pub delta_mode: DeltaMode,
    pub c_delta: f64,
    pub database_seed: u64,
    /// Seed for codebook training and encoder-side Monte Carlo.
    pub seed: u64,
    pub prior: Option<Prior>,
    /// Fixed value of `theta(1)`.
    pub planted: Option<ParamVector>,
    pub i_max: u64,
    pub mde_mc_budget: usize,
    pub distance_mc_budget: usize,
    pub candidate_count: usize,
    pub anchors: Vec<ParamVector>,
    pub l_cap: Option<usize>,
    pub distortion: DistortionSpec,
    pub training_blocks: usize,
    /// Initial codebook size is `2^ceil(rate_target n)`, capped by `max_codebook_size`.
    pub rate_target: f64,
    pub max_codebook_size: usize,
    pub design_tolerance: f64,
}

impl SchemeConfig {
    pub fn new(n: usize, lambda: f64) -> Self {
        Self {
            n,
            eta: 1.0,
            mixing_exponent: None,
            lambda,
            delta_mode: DeltaMode::Practical,
            c_delta: 1.0,
            database_seed: 1,
            seed: 0,
            prior: None,
            planted: None,
            i_max: 10_000,
            mde_mc_budget: 10_000,
            distance_mc_budget: 1_000,
            candidate_count: 64,
            anchors: Vec::new(),
            l_cap: None,
            distortion: DistortionSpec::default(),
            training_blocks: 2_000,
            rate_target: 0.5,
            max_codebook_size: 64,
            design_tolerance: DEFAULT_TOLERANCE,
        }
    }

    /// Defaults with `r = 2` for dependent families.
    pub fn for_family(family: &SourceFamily, n: usize, lambda: f64) -> Self {
        let mut c = Self::new(n, lambda);
        if !matches!(family, SourceFamily::GaussianIid) {
            c.mixing_exponent = Some(2.0);
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if let Some(r) = self.mixing_exponent {
            if !(r > 0.0) {
                return bad(format!("mixing exponent must be positive, got {r}"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.c_delta > 0.0) {
            return bad(format!("c_delta must be positive, got {}", self.c_delta));
        }
        if self.i_max == 0 {
            return bad("i_max must be at least 1".into());
        }
        if self.mde_mc_budget == 0 || self.distance_mc_budget == 0 || self.training_blocks == 0 {
            return bad("Monte-Carlo and training budgets must be positive".into());
        }
        if self.candidate_count == 0 && self.anchors.is_empty() {
            return bad("the candidate set would be empty".into());
        }
        if !(self.rate_target >= 0.0) || self.max_codebook_size == 0 {
            return bad("rate target must be non-negative and codebook size positive".into());
        }
        Ok(())
    }

    pub fn initial_codebook_size(&self) -> usize {
        let bits = (self.rate_target * self.n as f64).ceil();
        if bits >= 63.0 {
            self.max_codebook_size
        } else {
            (1usize << bits as u32).min(self.max_codebook_size)
        }
    }
}

/// `b` and `s1`; `s1` is empty exactly when `b = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstStageDescription {
    pub flag: bool,
    pub s1: BitString,
}

impl FirstStageDescription {
    pub fn found(index: u64) -> Self {
        let mut s1 = BitString::new();
        elias_encode_into(index, &mut s1);
        Self { flag: false, s1 }
    }

    pub fn not_found() -> Self {
        Self {
            flag: true,
            s1: BitString::new(),
        }
    }

    pub fn bits(&self) -> usize {
        1 + self.s1.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBlock {
    pub first_stage: FirstStageDescription,
    pub s2: BitString,
}

impl EncodedBlock {
    pub fn total_bits(&self) -> usize {
        self.first_stage.bits() + self.s2.len()
    }

    pub fn to_bits(&self) -> BitString {
        let mut out = BitString::new();
        out.push(self.first_stage.flag);
        out.extend(&self.first_stage.s1);
        out.extend(&self.s2);
        out
    }
}

/// Everything the encoder learned while coding one block.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub block: EncodedBlock,
    pub mde: MdeOutcome,
    pub theta_tilde: ParamVector,
    pub waiting: WaitingTime,
    pub database_index: u64,
    pub theta_hat: ParamVector,
    pub codeword: usize,
    pub reproduction: SampleBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub reproduction: SampleBlock,
    pub theta_hat: ParamVector,
    pub database_index: u64,
    /// Identification radius `sqrt(n) delta_n`; `None` when `b = 1`.
    pub radius: Option<f64>,
}

/// Encoder and decoder sharing one configuration and database.
pub struct TwoStageCoder {
    family: SourceFamily,
    config: SchemeConfig,
    database: Database,
    layout: MemoryLayout,
    vc: f64,
    tolerance: f64,
    candidates: CandidateSet,
    reference: OnceLock<MdeReference>,
    codebooks: Mutex<HashMap<u64, Arc<Codebook>>>,
}

impl TwoStageCoder {
    pub fn new(family: &SourceFamily, config: SchemeConfig) -> Result<Self> {
        family.validate()?;
        config.validate()?;
        let prior = config.prior.clone().unwrap_or_else(|| Prior::default_for(family));
        let mut database = Database::new(family, prior, config.database_seed)?;
        if let Some(p) = &config.planted {
            database.plant(1, p.clone())?;
        }
        let layout = memory_layout(&config, config.l_cap);
        let vc = vc_bound(family, config.n)?.value;
        let tolerance = identification_tolerance(config.n, vc, config.delta_mode, config.c_delta)?;
        let mut list: Vec<ParamVector> = Vec::with_capacity(config.candidate_count + config.anchors.len());
        for i in 1..=config.candidate_count as u64 {
            list.push(database.point(i)?);
        }
        for a in &config.anchors {
            family.check_param(a)?;
            if !list.iter().any(|c| c.same_bits(a)) {
                list.push(a.clone());
            }
        }
        // Prior draws can repeat only through planting.
        let mut unique: Vec<ParamVector> = Vec::with_capacity(list.len());
        for c in list {
            if !unique.iter().any(|u| u.same_bits(&c)) {
                unique.push(c);
            }
        }
        let candidates = CandidateSet::new(family, unique)?;
        Ok(Self {
            family: family.clone(),
            config,
            database,
            layout,
            vc,
            tolerance,
            candidates,
            reference: OnceLock::new(),
            codebooks: Mutex::new(HashMap::new()),
        })
    }

    pub fn family(&self) -> &SourceFamily {
        &self.family
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn database(&self) -> &Database {
        &self.database
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    pub fn vc_bound(&self) -> f64 {
        self.vc
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    fn reference(&self) -> Result<&MdeReference> {
        if let Some(r) = self.reference.get() {
            return Ok(r);
        }
        let seed = seed::derive(self.config.seed, &[seed::label("mde")]);
        let r = MdeReference::new(&self.family, &self.candidates, self.config.n, self.config.mde_mc_budget, seed)?;
        Ok(self.reference.get_or_init(|| r))
    }

    /// Codebook matched to `theta(index)`, designed on first use.
    pub fn codebook_for(&self, index: u64) -> Result<Arc<Codebook>> {
        if let Some(book) = self.codebooks.lock().unwrap().get(&index) {
            return Ok(book.clone());
        }
        let theta = self.database.point(index)?;
        let book = Arc::new(design_codebook(&self.family, &theta, &self.config, index)?);
        self.codebooks.lock().unwrap().entry(index).or_insert(book.clone());
        Ok(book)
    }

    /// The `n` estimation blocks inside the past.
    pub fn z_blocks(&self, history: &SampleBlock) -> Result<Vec<SampleBlock>> {
        if history.len() != self.layout.m_n || history.dim() != self.family.letter_dim() {
            return Err(Error::LengthMismatch {
                expected: self.layout.m_n,
                actual: history.len(),
            });
        }
        Ok(self.layout.z_offsets.iter().map(|&o| history.slice(o, self.layout.n)).collect())
    }

    pub fn encode(&self, history: &SampleBlock, current: &SampleBlock) -> Result<Encoding> {
        if current.len() != self.config.n || current.dim() != self.family.letter_dim() {
            return Err(Error::LengthMismatch {
                expected: self.config.n,
                actual: current.len(),
            });
        }
        let z = self.z_blocks(history)?;
        let mde = self.reference()?.estimate(&self.candidates, &z)?;
        let theta_tilde = mde.estimate();
        let wt_seed = seed::derive(
            self.config.seed,
            &[seed::label("waiting-time"), seed::hash_reals(theta_tilde.coords())],
        );
        let waiting = waiting_time(
            &self.database,
            &theta_tilde,
            self.tolerance,
            self.config.n,
            self.config.distance_mc_budget,
            wt_seed,
            self.config.i_max,
        )?;
        let (first_stage, database_index) = match waiting.index() {
            Some(t) => (FirstStageDescription::found(t), t),
            None => (FirstStageDescription::not_found(), 1),
        };
        let book = self.codebook_for(database_index)?;
        let (codeword, s2) = ecvq_encode(&book, current, self.config.lambda, &self.config.distortion)?;
        Ok(Encoding {
            block: EncodedBlock { first_stage, s2 },
            mde,
            theta_tilde,
            waiting,
            database_index,
            theta_hat: self.database.point(database_index)?,
            codeword,
            reproduction: book.reproduction(codeword),
        })
    }

    /// Decode one block starting at `cursor`; returns the cursor after it.
    pub fn decode_at(&self, stream: &BitString, cursor: usize) -> Result<(Decoded, usize)> {
        let mut reader = BitReader::at(stream, cursor);
        let flag = reader.read_bit("first-stage flag")?;
        let (database_index, radius) = if flag {
            (1, None)
        } else {
            (elias_read(&mut reader)?, Some(self.tolerance))
        };
        let book = self.codebook_for(database_index)?;
        let codeword = book.decode_index(&mut reader)?;
        Ok((
            Decoded {
                reproduction: book.reproduction(codeword),
                theta_hat: self.database.point(database_index)?,
                database_index,
                radius,
            },
            reader.position(),
        ))
    }

    /// Decode a stream holding exactly one block.
    pub fn decode(&self, stream: &BitString) -> Result<Decoded> {
        let (decoded, end) = self.decode_at(stream, 0)?;
        if end != stream.len() {
            return Err(Error::MalformedStream {
                at: end,
                reason: format!("{} trailing bits after the block", stream.len() - end),
            });
        }
        Ok(decoded)
    }
}

/// ECVQ codebook for `theta` trained on blocks seeded by `(config.seed, index)`.
pub fn design_codebook(family: &SourceFamily, theta: &ParamVector, config: &SchemeConfig, index: u64) -> Result<Codebook> {
    let train_seed = seed::derive(config.seed, &[seed::label("codebook-training"), index]);
    let init_seed = seed::derive(config.seed, &[seed::label("codebook-init"), index]);
    let training = training_blocks(family, theta, config.n, config.training_blocks, train_seed)?;
    Ok(ecvq_design(
        &training,
        config.lambda,
        config.initial_codebook_size(),
        &config.distortion,
        init_seed,
        config.design_tolerance,
    )?
    .codebook)
}

pub fn encode_block(coder: &TwoStageCoder, history: &SampleBlock, current: &SampleBlock) -> Result<EncodedBlock> {
    Ok(coder.encode(history, current)?.block)
}

pub fn decode_block(coder: &TwoStageCoder, stream: &BitString) -> Result<Decoded> {
    coder.decode(stream)
}

/// `d_n(theta0, theta_hat)` estimated under `P_theta0`.
pub fn identify_report(
    theta0: &ParamVector,
    theta_hat: &ParamVector,
    family: &SourceFamily,
    n: usize,
    mc_budget: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    variational_mc(family, theta0, theta_hat, n, mc_budget, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianEmission;

    fn g(m: f64, s: f64) -> ParamVector {
        ParamVector::new(vec![m, s])
    }

    fn small_config(n: usize) -> SchemeConfig {
        let mut c = SchemeConfig::new(n, 0.3);
        c.mde_mc_budget = 300;
        c.distance_mc_budget = 200;
        c.candidate_count = 8;
        c.training_blocks = 300;
        c.i_max = 500;
        c
    }

    #[test]
    fn layout_examples() {
        let mut c = SchemeConfig::new(4, 1.0);
        c.mixing_exponent = Some(2.0);
        let l = memory_layout(&c, None);
        assert_eq!((l.l_n, l.m_n), (8, 48));
        assert_eq!(l.z_offsets, vec![0, 12, 24, 36]);
        assert_eq!(l.y_offsets, vec![4, 16, 28, 40]);
        let capped = memory_layout(&c, Some(3));
        assert_eq!((capped.l_n, capped.l_n_formula, capped.m_n), (3, 8, 28));
        c.mixing_exponent = None;
        let iid = memory_layout(&c, None);
        assert_eq!((iid.l_n, iid.m_n), (0, 16));
        assert_eq!(gap_length(9, 1.0, Some(3.0)), 9);
        assert_eq!(gap_length(8, 1.0, Some(4.0)), 5);
    }

    #[test]
    fn layout_tiles_memory() {
        for n in 1..12 {
            for r in [None, Some(1.5), Some(3.0)] {
                let mut c = SchemeConfig::new(n, 1.0);
                c.mixing_exponent = r;
                let l = memory_layout(&c, None);
                let mut cover = vec![0u8; l.m_n];
                for &o in &l.z_offsets {
                    (o..o + n).for_each(|i| cover[i] += 1);
                }
                for &o in &l.y_offsets {
                    (o..o + l.l_n).for_each(|i| cover[i] += 1);
                }
                assert!(cover.iter().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn delta_examples() {
        let paper = delta_schedule(100, 60.46, DeltaMode::Paper, 1.0).unwrap();
        let expected = (2048.0f64 * 61.46 * 100f64.ln()).sqrt() / 100.0 + 6.0 / 1000.0;
        assert!((paper - expected).abs() < 1e-12);
        assert!((paper - 7.62).abs() < 5e-3);
        let practical = delta_schedule(100, 60.46, DeltaMode::Practical, 1.0).unwrap();
        assert!((practical - 0.214_596).abs() < 1e-6);
        assert!(delta_schedule(1, 2.0, DeltaMode::Practical, 1.0).is_err());
        let big = identification_tolerance(1 << 20, 60.0, DeltaMode::Paper, 1.0).unwrap();
        let small = identification_tolerance(1 << 10, 60.0, DeltaMode::Paper, 1.0).unwrap();
        assert!(big < small);
    }

    #[test]
    fn database_is_random_access_and_valid() {
        let fam = SourceFamily::gaussian_ar(3, 1.0, 0.5).unwrap();
        let db = Database::new(&fam, Prior::default_for(&fam), 11).unwrap();
        let again = Database::new(&fam, Prior::default_for(&fam), 11).unwrap();
        for i in [1u64, 2, 17, 1000] {
            let p = db.point(i).unwrap();
            assert!(fam.check_param(&p).is_ok());
            assert!(p.same_bits(&again.point(i).unwrap()));
        }
        assert!(db.point(0).is_err());
        let em = vec![
            GaussianEmission { mean: vec![0.0], std: 1.0 },
            GaussianEmission { mean: vec![2.0], std: 1.0 },
            GaussianEmission { mean: vec![4.0], std: 1.0 },
        ];
        let hmm = SourceFamily::hmm(0.1, em, 1.0, 0.5).unwrap();
        let db = Database::new(&hmm, Prior::default_for(&hmm), 3).unwrap();
        for i in 1..200 {
            let p = db.point(i).unwrap();
            assert!(hmm.check_param(&p).is_ok(), "{p}");
        }
        assert!(Database::new(&hmm, Prior::ArStable { order: 1 }, 0).is_err());
    }

    #[test]
    fn waiting_time_examples() {
        let fam = SourceFamily::gaussian_iid();
        let mut db = Database::new(&fam, Prior::default_for(&fam), 5).unwrap();
        let other = db.point(7).unwrap();
        assert_eq!(waiting_time(&db, &other, 2.0, 4, 100, 1, 10).unwrap().index(), Some(1));
        assert_eq!(waiting_time(&db, &other, 0.0, 4, 100, 1, 50).unwrap().index(), Some(7));
        assert_eq!(waiting_time(&db, &g(0.3, 0.9), 0.0, 4, 100, 1, 300).unwrap(), WaitingTime::NotFound);
        db.plant(1, g(0.3, 0.9)).unwrap();
        match waiting_time(&db, &g(0.3, 0.9), 0.0, 4, 100, 1, 300).unwrap() {
            WaitingTime::Hit { index, distance } => {
                assert_eq!(index, 1);
                assert_eq!(distance.value, 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(waiting_time(&db, &g(0.3, 0.9), -1.0, 4, 100, 1, 3).is_err());
    }

    #[test]
    fn planted_round_trip_costs_two_first_stage_bits() {
        let fam = SourceFamily::gaussian_iid();
        let theta0 = g(0.5, 1.0);
        let mut cfg = small_config(4);
        cfg.planted = Some(theta0.clone());
        cfg.c_delta = 5.0;
        let coder = TwoStageCoder::new(&fam, cfg).unwrap();
        let src = fam.prepare(&theta0).unwrap();
        let history = src.sample(coder.layout().m_n, 1);
        let current = src.sample(4, 2);
        let enc = coder.encode(&history, &current).unwrap();
        assert_eq!(enc.database_index, 1);
        assert_eq!(enc.block.first_stage.bits(), 2);
        let bits = enc.block.to_bits();
        assert_eq!(bits.len(), enc.block.total_bits());
        let dec = coder.decode(&bits).unwrap();
        assert_eq!(dec.reproduction, enc.reproduction);
        assert!(dec.theta_hat.same_bits(&theta0));
        assert_eq!(dec.radius, Some(coder.tolerance()));
        let cap = 2.0 * coder.config().distortion.rho_max() / coder.config().lambda;
        assert!(enc.block.s2.len() as f64 / 4.0 <= cap);
        // A fresh decoder with the same configuration agrees.
        let mut cfg2 = small_config(4);
        cfg2.planted = Some(theta0);
        cfg2.c_delta = 5.0;
        let dec2 = TwoStageCoder::new(&fam, cfg2).unwrap().decode(&bits).unwrap();
        assert_eq!(dec2, dec);
    }

    #[test]
    fn not_found_uses_first_entry() {
        let fam = SourceFamily::gaussian_iid();
        let mut cfg = small_config(4);
        cfg.i_max = 3;
        cfg.c_delta = 1e-9;
        cfg.candidate_count = 0;
        cfg.anchors = vec![g(0.0, 1.0)];
        let coder = TwoStageCoder::new(&fam, cfg).unwrap();
        let src = fam.prepare(&g(0.0, 1.0)).unwrap();
        let enc = coder.encode(&src.sample(coder.layout().m_n, 3), &src.sample(4, 4)).unwrap();
        assert!(enc.block.first_stage.flag);
        assert!(enc.block.first_stage.s1.is_empty());
        let dec = coder.decode(&enc.block.to_bits()).unwrap();
        assert_eq!(dec.database_index, 1);
        assert_eq!(dec.radius, None);
        assert_eq!(dec.reproduction, enc.reproduction);
    }

    #[test]
    fn truncation_is_rejected() {
        let fam = SourceFamily::gaussian_iid();
        let coder = TwoStageCoder::new(&fam, small_config(4)).unwrap();
        let src = fam.prepare(&g(1.0, 2.0)).unwrap();
        let enc = coder.encode(&src.sample(coder.layout().m_n, 5), &src.sample(4, 6)).unwrap();
        let bits = enc.block.to_bits();
        for cut in 0..bits.len() {
            let err = coder.decode(&bits.prefix(cut));
            if !enc.block.s2.is_empty() || cut < enc.block.first_stage.bits() {
                assert!(err.is_err(), "prefix of length {cut} decoded");
            }
        }
        assert!(coder.encode(&src.sample(3, 1), &src.sample(4, 6)).is_err());
    }
}
