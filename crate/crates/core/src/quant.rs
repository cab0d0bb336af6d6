//! Fixed-point numerics and weight-sharing codebooks.
//!
//! Weights and activations use signed 16-bit two's-complement codes with a
//! configurable binary point. A product of two codes carries `2 * frac`
//! fractional bits and is rounded (half to even) back to `frac` before it
//! enters an accumulator. Accumulation itself is exact; the 24-bit
//! accumulator width is applied once, when a finished sum is read out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{check_len, BpdError, Result};
use crate::matrix::BpdMatrix;
use crate::scalar::Scalar;

pub const ACCUMULATOR_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointSpec {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        FixedPointSpec {
            total_bits: 16,
            frac_bits: 12,
        }
    }
}

impl FixedPointSpec {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if total_bits == 0 || total_bits > 32 || frac_bits >= total_bits {
            return Err(BpdError::InvalidConfig(format!(
                "fixed-point format needs 0 <= frac ({frac_bits}) < total ({total_bits}) <= 32"
            )));
        }
        Ok(FixedPointSpec {
            total_bits,
            frac_bits,
        })
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Value of one least-significant bit.
    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn quantize(&self, x: f64) -> i32 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        scaled.clamp(self.min_code() as f64, self.max_code() as f64) as i32
    }

    pub fn quantize_slice<T: Scalar>(&self, xs: &[T]) -> Vec<i32> {
        xs.iter().map(|x| self.quantize(x.as_f64())).collect()
    }

    pub fn dequantize(&self, code: i64) -> f64 {
        code as f64 * self.step()
    }

    /// Product of two codes, rounded back to this format's binary point.
    pub fn product(&self, a: i32, b: i32) -> i64 {
        round_shift(a as i64 * b as i64, self.frac_bits)
    }

    /// Saturates an exact sum to the accumulator range, applies `act`, and
    /// saturates to an output code.
    pub fn readout(&self, acc: i64, act: Activation) -> i32 {
        let acc_max = (1i64 << (ACCUMULATOR_BITS - 1)) - 1;
        let a = acc.clamp(-acc_max - 1, acc_max);
        let y = match act {
            Activation::Identity => a,
            Activation::Relu => a.max(0),
            Activation::Tanh => self.quantize(self.dequantize(a).tanh()) as i64,
        };
        y.clamp(self.min_code(), self.max_code()) as i32
    }
}

/// Arithmetic right shift with round-half-to-even.
pub fn round_shift(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let q = v >> shift;
    let r = v - (q << shift);
    let half = 1i64 << (shift - 1);
    if r > half || (r == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// Exact fixed-point accumulators of `W x` for weight codes aligned with the
/// matrix's packed slots. Rows are summed in ascending column order.
pub fn fixed_matvec<T: Scalar>(
    structure: &BpdMatrix<T>,
    weight_codes: &[i32],
    x_codes: &[i32],
    spec: &FixedPointSpec,
) -> Result<Vec<i64>> {
    check_len("weight codes", structure.slot_count(), weight_codes.len())?;
    check_len("input codes", structure.cols(), x_codes.len())?;
    let p = structure.block();
    let nbc = structure.block_cols();
    let perms = structure.perms();
    Ok((0..structure.rows())
        .map(|i| {
            let (br, c) = (i / p, i % p);
            (0..nbc)
                .filter_map(|g| {
                    let l = br * nbc + g;
                    let j = (c + perms[l]) % p + g * p;
                    (j < structure.cols()).then(|| spec.product(weight_codes[l * p + c], x_codes[j]))
                })
                .sum()
        })
        .collect())
}

/// Shared-weight table: each packed weight is replaced by a tag into
/// `centroids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub tag_bits: u32,
    /// Sorted ascending.
    pub centroids: Vec<f64>,
    pub tags: Vec<u8>,
}

impl Codebook {
    pub fn from_parts(tag_bits: u32, centroids: Vec<f64>, tags: Vec<u8>) -> Result<Self> {
        if tag_bits == 0 || tag_bits > 8 {
            return Err(BpdError::InvalidConfig(format!(
                "tag width {tag_bits} outside 1..=8"
            )));
        }
        if centroids.is_empty() || centroids.len() > 1 << tag_bits {
            return Err(BpdError::InvalidConfig(format!(
                "{} centroids do not fit {tag_bits}-bit tags",
                centroids.len()
            )));
        }
        if centroids.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(BpdError::InvalidConfig("centroids must be sorted".into()));
        }
        if let Some(t) = tags.iter().find(|&&t| t as usize >= centroids.len()) {
            return Err(BpdError::InvalidConfig(format!(
                "tag {t} has no centroid"
            )));
        }
        Ok(Codebook {
            tag_bits,
            centroids,
            tags,
        })
    }

    pub fn decode(&self, tag: u8) -> f64 {
        self.centroids[tag as usize]
    }

    pub fn decoded(&self) -> Vec<f64> {
        self.tags.iter().map(|&t| self.decode(t)).collect()
    }

    /// Centroids rendered as fixed-point codes: the contents of a weight LUT.
    pub fn lut_codes(&self, spec: &FixedPointSpec) -> Vec<i32> {
        self.centroids.iter().map(|&c| spec.quantize(c)).collect()
    }

    pub fn squared_error(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.tags)
            .map(|(v, &t)| (v - self.decode(t)).powi(2))
            .sum()
    }

    pub fn nearest(&self, v: f64) -> u8 {
        nearest(&self.centroids, v) as u8
    }
}

fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate().skip(1) {
        if (v - c).abs() < (v - centroids[best]).abs() {
            best = i;
        }
    }
    best
}

pub(crate) struct KMeansFit {
    pub centroids: Vec<f64>,
    /// Total squared error after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub sse_history: Vec<f64>,
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-9;

/// One-dimensional k-means with k-means++ seeding.
pub(crate) fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> KMeansFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![values[rng.gen_range(0..values.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| (v - centroids[nearest(&centroids, v)]).powi(2))
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = values.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(values[pick]);
    }

    let mut sse_history = Vec::new();
    let mut assign = vec![0usize; values.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sse = 0.0;
        for (a, &v) in assign.iter_mut().zip(values) {
            *a = nearest(&centroids, v);
            sse += (v - centroids[*a]).powi(2);
        }
        sse_history.push(sse);
        // Means are taken relative to the current centroid so a cluster of
        // identical values keeps that value exactly.
        let mut offsets = vec![0.0; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, &v) in assign.iter().zip(values) {
            offsets[a] += v - centroids[a];
            counts[a] += 1;
        }
        let mut moved: f64 = 0.0;
        for (c, (s, n)) in centroids.iter_mut().zip(offsets.iter().zip(&counts)) {
            if *n > 0 {
                let next = *c + s / *n as f64;
                moved = moved.max((next - *c).abs());
                *c = next;
            }
        }
        if moved < KMEANS_TOL {
            break;
        }
    }
    centroids.sort_by(|a, b| a.total_cmp(b));
    let final_sse = values
        .iter()
        .map(|&v| (v - centroids[nearest(&centroids, v)]).powi(2))
        .sum();
    sse_history.push(final_sse);
    KMeansFit {
        centroids,
        sse_history,
    }
}

/// Clusters `values` into at most `2^tag_bits` shared weights.
pub fn build_codebook(values: &[f64], tag_bits: u32, seed: u64) -> Result<Codebook> {
    if values.is_empty() {
        return Err(BpdError::EmptyDataset);
    }
    if tag_bits == 0 || tag_bits > 8 {
        return Err(BpdError::InvalidConfig(format!(
            "tag width {tag_bits} outside 1..=8"
        )));
    }
    let fit = kmeans_1d(values, 1 << tag_bits, seed);
    let tags = values
        .iter()
        .map(|&v| nearest(&fit.centroids, v) as u8)
        .collect();
    Codebook::from_parts(tag_bits, fit.centroids, tags)
}

/// Codebook over a matrix's packed slots. Only live slots shape the
/// clusters; padding slots get the centroid nearest zero.
pub fn build_matrix_codebook<T: Scalar>(
    w: &BpdMatrix<T>,
    tag_bits: u32,
    seed: u64,
) -> Result<Codebook> {
    let live: Vec<f64> = (0..w.slot_count())
        .filter(|&s| w.is_live_slot(s))
        .map(|s| w.values()[s].as_f64())
        .collect();
    let mut book = build_codebook(&live, tag_bits, seed)?;
    let zero_tag = book.nearest(0.0);
    let mut live_tags = book.tags.iter();
    book.tags = (0..w.slot_count())
        .map(|s| {
            if w.is_live_slot(s) {
                *live_tags.next().expect("one tag per live slot")
            } else {
                zero_tag
            }
        })
        .collect();
    Ok(book)
}
