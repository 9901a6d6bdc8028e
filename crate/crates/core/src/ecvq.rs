//! Bounded per-letter distortion and entropy-constrained vector quantizers.
//!
//! A second-stage code is an n-block [`Codebook`]: reproduction vectors plus
//! a canonical prefix code over their indices. Encoding is memoryless and
//! picks the index minimising `rho_n(x, c_j) + lambda * len_j / n`.
//!
//! [`ecvq_design`] runs entropy-constrained Lloyd descent on training blocks:
//! Lagrangian-nearest assignment, centroid update under the clipped metric,
//! and ideal length update `-log2(usage)`. The pre-rounding training
//! Lagrangian is non-increasing across iterations. Final lengths are rounded
//! up to integers (Kraft-safe) and any codeword whose normalised length
//! exceeds `2 * rho_max / lambda` is pruned.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bitcode::{BitReader, BitString};
use crate::error::{Error, Result};
use crate::model::{ParamVector, SampleBlock, SourceFamily};
use crate::seed;

const MAX_CODE_LENGTH: u32 = 63;
const CODEBOOK_FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMetric {
    /// `sum_k |x_k - y_k|` over the letter's coordinates.
    AbsoluteDifference,
    Euclidean,
}

/// Single-letter distortion `rho(x, y) = min(base(x, y), rho_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionSpec {
    rho_max: f64,
    metric: BaseMetric,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self {
            rho_max: 1.0,
            metric: BaseMetric::AbsoluteDifference,
        }
    }
}

impl DistortionSpec {
    pub fn new(rho_max: f64, metric: BaseMetric) -> Result<Self> {
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(Error::Domain(format!("rho_max must be positive and finite, got {rho_max}")));
        }
        Ok(Self { rho_max, metric })
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn metric(&self) -> BaseMetric {
        self.metric
    }

    #[inline]
    pub fn letter(&self, x: &[f64], y: &[f64]) -> f64 {
        let base = match self.metric {
            BaseMetric::AbsoluteDifference => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            BaseMetric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        };
        base.min(self.rho_max)
    }

    /// Sum of clipped letter distortions, abandoning the scan once it passes
    /// `limit` (the returned value is then only a lower bound above `limit`).
    #[inline]
    fn block_sum(&self, x: &[f64], y: &[f64], dim: usize, limit: f64) -> f64 {
        let mut total = 0.0;
        if dim == 1 && self.metric == BaseMetric::AbsoluteDifference {
            for (chunk_x, chunk_y) in x.chunks(8).zip(y.chunks(8)) {
                for (a, b) in chunk_x.iter().zip(chunk_y) {
                    total += (a - b).abs().min(self.rho_max);
                }
                if total > limit {
                    return total;
                }
            }
            return total;
        }
        for (lx, ly) in x.chunks_exact(dim).zip(y.chunks_exact(dim)) {
            total += self.letter(lx, ly);
            if total > limit {
                return total;
            }
        }
        total
    }
}

/// Per-letter distortion `rho_n(x, xhat)`, in `[0, rho_max]`.
pub fn rho_n(spec: &DistortionSpec, x: &SampleBlock, xhat: &SampleBlock) -> Result<f64> {
    if x.len() != xhat.len() || x.dim() != xhat.dim() {
        return Err(Error::LengthMismatch {
            expected: x.values().len(),
            actual: xhat.values().len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(spec.block_sum(x.values(), xhat.values(), x.dim(), f64::INFINITY) / x.len() as f64)
}

/// Distortion, rate (bits per letter) and their Lagrangian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianReport {
    pub distortion: f64,
    pub rate: f64,
    pub lagrangian: f64,
    pub lambda: f64,
    pub distortion_se: f64,
    pub rate_se: f64,
    pub lagrangian_se: f64,
    pub samples: usize,
}

impl LagrangianReport {
    pub fn new(distortion: f64, rate: f64, lambda: f64) -> Self {
        Self {
            distortion,
            rate,
            lagrangian: distortion + lambda * rate,
            lambda,
            distortion_se: 0.0,
            rate_se: 0.0,
            lagrangian_se: 0.0,
            samples: 0,
        }
    }

    fn from_samples(distortions: &[f64], rates: &[f64], lambda: f64) -> Self {
        let costs: Vec<f64> = distortions.iter().zip(rates).map(|(d, r)| d + lambda * r).collect();
        let (d, d_se) = mean_and_se(distortions);
        let (r, r_se) = mean_and_se(rates);
        let (_, l_se) = mean_and_se(&costs);
        Self {
            distortion_se: d_se,
            rate_se: r_se,
            lagrangian_se: l_se,
            samples: distortions.len(),
            ..Self::new(d, r, lambda)
        }
    }
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// An n-block variable-rate quantizer with a canonical prefix index code.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    n: usize,
    dim: usize,
    codevectors: Vec<Vec<f64>>,
    lengths: Vec<u32>,
    codes: Vec<BitString>,
    decoder: CanonicalDecoder,
}

#[derive(Clone, Debug, PartialEq)]
struct CanonicalDecoder {
    /// Codeword indices sorted by (length, index).
    order: Vec<usize>,
    /// Per length: (first code value, offset into `order`, count).
    by_length: Vec<(u64, usize, usize)>,
}

impl Codebook {
    /// Assemble a codebook, assigning canonical codes from integer lengths.
    pub fn from_parts(n: usize, dim: usize, codevectors: Vec<Vec<f64>>, lengths: Vec<u32>) -> Result<Self> {
        if codevectors.is_empty() || codevectors.len() != lengths.len() {
            return Err(Error::Domain("codebook needs one length per codevector and at least one codevector".into()));
        }
        if n == 0 || dim == 0 || codevectors.iter().any(|c| c.len() != n * dim) {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                actual: codevectors.iter().map(|c| c.len()).find(|&l| l != n * dim).unwrap_or(0),
            });
        }
        if let Some(&l) = lengths.iter().find(|&&l| l > MAX_CODE_LENGTH) {
            return Err(Error::Domain(format!("codeword length {l} exceeds {MAX_CODE_LENGTH}")));
        }
        let kraft: f64 = lengths.iter().map(|&l| (-(l as f64)).exp2()).sum();
        if kraft > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("lengths violate the Kraft inequality (sum {kraft})")));
        }

        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&j| (lengths[j], j));
        let max_len = *lengths.iter().max().unwrap() as usize;
        let mut by_length = vec![(0u64, 0usize, 0usize); max_len + 1];
        let mut codes = vec![BitString::new(); lengths.len()];
        let mut code = 0u64;
        let mut prev_len = lengths[order[0]];
        for (pos, &j) in order.iter().enumerate() {
            let len = lengths[j];
            if pos > 0 {
                code = (code + 1) << (len - prev_len);
            }
            prev_len = len;
            let slot = &mut by_length[len as usize];
            if slot.2 == 0 {
                *slot = (code, pos, 0);
            }
            slot.2 += 1;
            let mut bits = BitString::new();
            bits.push_bits(code, len);
            codes[j] = bits;
        }
        Ok(Self {
            n,
            dim,
            codevectors,
            lengths,
            codes,
            decoder: CanonicalDecoder { order, by_length },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.codevectors.len()
    }

    pub fn codevectors(&self) -> &[Vec<f64>] {
        &self.codevectors
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }

    pub fn code(&self, index: usize) -> &BitString {
        &self.codes[index]
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (-(l as f64)).exp2()).sum()
    }

    /// Largest normalised codeword length `max_j len_j / n`.
    pub fn max_normalized_length(&self) -> f64 {
        *self.lengths.iter().max().unwrap() as f64 / self.n as f64
    }

    pub fn reproduction(&self, index: usize) -> SampleBlock {
        SampleBlock::new(self.dim, self.codevectors[index].clone()).expect("codevector has whole letters")
    }

    /// Lagrangian-nearest codeword: lowest index among minimal costs.
    pub fn nearest(&self, x: &[f64], lambda: f64, spec: &DistortionSpec) -> (usize, f64) {
        nearest_index(x, &self.codevectors, |j| self.lengths[j] as f64, self.n, self.dim, lambda, spec)
    }

    /// Read one index codeword.
    pub fn decode_index(&self, reader: &mut BitReader<'_>) -> Result<usize> {
        let start = reader.position();
        let mut code = 0u64;
        for (len, &(first, offset, count)) in self.decoder.by_length.iter().enumerate() {
            if len > 0 {
                code = (code << 1) | reader.read_bit("second-stage codeword")? as u64;
            }
            if count > 0 && code >= first && code - first < count as u64 {
                return Ok(self.decoder.order[offset + (code - first) as usize]);
            }
        }
        Err(Error::MalformedStream {
            at: start,
            reason: "bits match no second-stage codeword".into(),
        })
    }

    /// Versioned little-endian layout: version u16, n u32, dim u32,
    /// count u32, codevectors as f64, lengths as u16.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CODEBOOK_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.size() as u32).to_le_bytes());
        for c in &self.codevectors {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &l in &self.lengths {
            out.extend_from_slice(&(l as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + k).ok_or(Error::TruncatedStream {
                at: pos * 8,
                context: "serialized codebook",
            })?;
            pos += k;
            Ok(s)
        };
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != CODEBOOK_FORMAT_VERSION {
            return Err(Error::MalformedStream {
                at: 0,
                reason: format!("unsupported codebook format version {version}"),
            });
        }
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut codevectors = Vec::with_capacity(count);
        for _ in 0..count {
            let mut c = Vec::with_capacity(n * dim);
            for _ in 0..n * dim {
                c.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            codevectors.push(c);
        }
        let mut lengths = Vec::with_capacity(count);
        for _ in 0..count {
            lengths.push(u16::from_le_bytes(take(2)?.try_into().unwrap()) as u32);
        }
        Self::from_parts(n, dim, codevectors, lengths)
    }
}

fn nearest_index<L: Fn(usize) -> f64>(
    x: &[f64],
    codevectors: &[Vec<f64>],
    length: L,
    n: usize,
    dim: usize,
    lambda: f64,
    spec: &DistortionSpec,
) -> (usize, f64) {
    let nf = n as f64;
    let mut best = (0usize, f64::INFINITY);
    for (j, c) in codevectors.iter().enumerate() {
        let rate_term = lambda * length(j) / nf;
        if rate_term >= best.1 {
            continue;
        }
        let limit = (best.1 - rate_term) * nf;
        let sum = spec.block_sum(x, c, dim, limit);
        let cost = sum / nf + rate_term;
        if cost < best.1 {
            best = (j, cost);
        }
    }
    best
}

/// Encode one block: the Lagrangian-nearest index and its codeword bits.
pub fn ecvq_encode(book: &Codebook, x: &SampleBlock, lambda: f64, spec: &DistortionSpec) -> Result<(usize, BitString)> {
    if x.len() != book.n || x.dim() != book.dim {
        return Err(Error::LengthMismatch {
            expected: book.n * book.dim,
            actual: x.values().len(),
        });
    }
    let (j, _) = book.nearest(x.values(), lambda, spec);
    Ok((j, book.codes[j].clone()))
}

/// Outcome of [`ecvq_design`].
#[derive(Clone, Debug)]
pub struct Design {
    pub codebook: Codebook,
    /// Training Lagrangian after each assignment step, before rounding.
    pub trace: Vec<f64>,
    /// Training performance of the final (rounded, capped) codebook.
    pub training: LagrangianReport,
    /// Codewords removed by the normalised-length cap.
    pub capped: usize,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;

/// Entropy-constrained Lloyd design on `training`.
pub fn ecvq_design(
    training: &[SampleBlock],
    lambda: f64,
    initial_size: usize,
    spec: &DistortionSpec,
    seed: u64,
    tolerance: f64,
) -> Result<Design> {
    let first = training.first().ok_or(Error::EmptyTraining)?;
    let (n, dim) = (first.len(), first.dim());
    if n == 0 {
        return Err(Error::Domain("training blocks must be non-empty".into()));
    }
    for (b, block) in training.iter().enumerate() {
        if block.len() != n || block.dim() != dim {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                actual: block.values().len(),
            });
        }
        if !block.is_finite() {
            return Err(Error::NonFiniteTraining { block: b });
        }
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if initial_size == 0 {
        return Err(Error::Domain("initial codebook size must be at least 1".into()));
    }

    let data: Vec<&[f64]> = training.iter().map(|b| b.values()).collect();
    let mut codevectors = initial_codevectors(&data, initial_size, seed);
    let mut lengths = vec![(codevectors.len() as f64).log2(); codevectors.len()];
    let total = data.len() as f64;
    let nf = n as f64;

    let mut trace = Vec::new();
    let mut assignment = vec![0usize; data.len()];
    for _ in 0..MAX_ITERATIONS {
        let j = assign(&data, &codevectors, &lengths, n, dim, lambda, spec, &mut assignment);
        let converged = trace.last().is_some_and(|&prev: &f64| prev - j < tolerance);
        trace.push(j);
        if converged {
            break;
        }

        let k = codevectors.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &a) in assignment.iter().enumerate() {
            members[a].push(i);
        }
        for (c, cell) in codevectors.iter_mut().zip(&members) {
            if !cell.is_empty() {
                update_centroid(c, cell, &data, dim, spec);
            }
        }
        // Drop unused codewords, then set ideal lengths from usage.
        let keep: Vec<usize> = (0..k).filter(|&j| !members[j].is_empty()).collect();
        codevectors = keep.iter().map(|&j| std::mem::take(&mut codevectors[j])).collect();
        lengths = keep.iter().map(|&j| -(members[j].len() as f64 / total).log2()).collect();
        // Re-index so the next assignment starts from a consistent state.
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        assignment.iter_mut().for_each(|a| *a = remap[a]);
    }

    // Integer lengths from the final usage, then enforce the rate cap.
    assign(&data, &codevectors, &lengths, n, dim, lambda, spec, &mut assignment);
    let mut int_lengths = rounded_lengths(&assignment, codevectors.len(), total);
    prune_unused(&mut codevectors, &mut int_lengths, &mut assignment);
    let cap = if lambda > 0.0 {
        ((2.0 * spec.rho_max() * nf / lambda) + 1e-9).floor()
    } else {
        f64::INFINITY
    };
    let mut capped = 0;
    loop {
        let mut violators: Vec<usize> = (0..codevectors.len()).filter(|&j| int_lengths[j] as f64 > cap).collect();
        if violators.is_empty() {
            break;
        }
        if violators.len() == codevectors.len() {
            // Keep the most used codeword; alone it gets length zero.
            let shortest = (0..codevectors.len()).min_by_key(|&j| (int_lengths[j], j)).unwrap();
            violators.retain(|&j| j != shortest);
        }
        capped += violators.len();
        let keep: Vec<usize> = (0..codevectors.len()).filter(|j| !violators.contains(j)).collect();
        codevectors = keep.iter().map(|&j| std::mem::take(&mut codevectors[j])).collect();
        let kept_lengths: Vec<f64> = keep.iter().map(|&j| int_lengths[j] as f64).collect();
        assign(&data, &codevectors, &kept_lengths, n, dim, lambda, spec, &mut assignment);
        int_lengths = rounded_lengths(&assignment, codevectors.len(), total);
        prune_unused(&mut codevectors, &mut int_lengths, &mut assignment);
    }

    let codebook = Codebook::from_parts(n, dim, codevectors, int_lengths)?;
    let training_report = evaluate_on(&codebook, training, lambda, spec);
    Ok(Design {
        codebook,
        trace,
        training: training_report,
        capped,
    })
}

fn initial_codevectors(data: &[&[f64]], size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut seen = HashMap::new();
    let mut distinct: Vec<usize> = Vec::new();
    for (i, x) in data.iter().enumerate() {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        seen.entry(key).or_insert_with(|| {
            distinct.push(i);
        });
    }
    if size >= distinct.len() {
        return distinct.iter().map(|&i| data[i].to_vec()).collect();
    }
    let mut rng = seed::rng(seed);
    let mut picks = index::sample(&mut rng, distinct.len(), size).into_vec();
    picks.sort_unstable();
    picks.iter().map(|&p| data[distinct[p]].to_vec()).collect()
}

#[allow(clippy::too_many_arguments)]
fn assign(
    data: &[&[f64]],
    codevectors: &[Vec<f64>],
    lengths: &[f64],
    n: usize,
    dim: usize,
    lambda: f64,
    spec: &DistortionSpec,
    assignment: &mut [usize],
) -> f64 {
    let mut total = 0.0;
    for (x, a) in data.iter().zip(assignment.iter_mut()) {
        let (j, cost) = nearest_index(x, codevectors, |j| lengths[j], n, dim, lambda, spec);
        *a = j;
        total += cost;
    }
    total / data.len() as f64
}

fn cell_distortion(c: &[f64], cell: &[usize], data: &[&[f64]], dim: usize, spec: &DistortionSpec) -> f64 {
    cell.iter().map(|&i| spec.block_sum(data[i], c, dim, f64::INFINITY)).sum()
}

/// Replace `c` by the best of {coordinatewise median, mean, current} for the
/// cell's clipped distortion; never increases the cell's distortion.
fn update_centroid(c: &mut Vec<f64>, cell: &[usize], data: &[&[f64]], dim: usize, spec: &DistortionSpec) {
    let width = c.len();
    let mut median = vec![0.0; width];
    let mut mean = vec![0.0; width];
    let mut column = Vec::with_capacity(cell.len());
    for k in 0..width {
        column.clear();
        column.extend(cell.iter().map(|&i| data[i][k]));
        mean[k] = column.iter().sum::<f64>() / column.len() as f64;
        column.sort_by(|a, b| a.total_cmp(b));
        let mid = column.len() / 2;
        median[k] = if column.len() % 2 == 1 {
            column[mid]
        } else {
            0.5 * (column[mid - 1] + column[mid])
        };
    }
    let mut best = cell_distortion(c, cell, data, dim, spec);
    for candidate in [median, mean] {
        let d = cell_distortion(&candidate, cell, data, dim, spec);
        if d < best {
            best = d;
            *c = candidate;
        }
    }
}

fn rounded_lengths(assignment: &[usize], k: usize, total: f64) -> Vec<u32> {
    let mut counts = vec![0usize; k];
    assignment.iter().for_each(|&a| counts[a] += 1);
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                u32::MAX
            } else {
                (-(c as f64 / total).log2() - 1e-9).ceil().max(0.0) as u32
            }
        })
        .collect()
}

fn prune_unused(codevectors: &mut Vec<Vec<f64>>, lengths: &mut Vec<u32>, assignment: &mut [usize]) {
    let keep: Vec<usize> = (0..codevectors.len()).filter(|&j| lengths[j] != u32::MAX).collect();
    if keep.len() == codevectors.len() {
        return;
    }
    let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    *codevectors = keep.iter().map(|&j| std::mem::take(&mut codevectors[j])).collect();
    *lengths = keep.iter().map(|&j| lengths[j]).collect();
    assignment.iter_mut().for_each(|a| *a = remap[a]);
}

/// Lagrangian of `book` on a fixed set of blocks.
pub fn evaluate_on(book: &Codebook, blocks: &[SampleBlock], lambda: f64, spec: &DistortionSpec) -> LagrangianReport {
    let nf = book.n as f64;
    let (distortions, rates): (Vec<f64>, Vec<f64>) = blocks
        .iter()
        .map(|x| {
            let (j, _) = book.nearest(x.values(), lambda, spec);
            let d = spec.block_sum(x.values(), &book.codevectors[j], book.dim, f64::INFINITY) / nf;
            (d, book.lengths[j] as f64 / nf)
        })
        .unzip();
    LagrangianReport::from_samples(&distortions, &rates, lambda)
}

/// Monte-Carlo Lagrangian of `book` on fresh blocks from `P_theta`.
pub fn lagrangian_eval(
    book: &Codebook,
    family: &SourceFamily,
    theta: &ParamVector,
    lambda: f64,
    spec: &DistortionSpec,
    num_blocks: usize,
    seed: u64,
) -> Result<LagrangianReport> {
    if num_blocks == 0 {
        return Err(Error::Domain("need at least one evaluation block".into()));
    }
    let source = family.prepare(theta)?;
    if source.letter_dim() != book.dim {
        return Err(Error::LengthMismatch {
            expected: book.dim,
            actual: source.letter_dim(),
        });
    }
    let blocks: Vec<SampleBlock> = (0..num_blocks)
        .map(|b| source.sample(book.n, seed::derive(seed, &[b as u64])))
        .collect();
    Ok(evaluate_on(book, &blocks, lambda, spec))
}

/// Training blocks for a parameter: `count` independent stationary blocks.
pub fn training_blocks(
    family: &SourceFamily,
    theta: &ParamVector,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<SampleBlock>> {
    let source = family.prepare(theta)?;
    Ok((0..count)
        .map(|b| source.sample(n, seed::derive(seed, &[b as u64])))
        .collect())
}
