//! Block-permuted diagonal (BPD) weight matrices.
//!
//! An `m x n` matrix is split into `p x p` blocks. Block `l` (row-major over
//! the padded block grid) carries its nonzeros on the cyclic diagonal selected
//! by `k_l`: in-block row `c` holds a value at in-block column `(c + k_l) mod p`.
//! Only those `p` values per block are stored, contiguously at
//! `values[l * p + c]`.
//!
//! When `p` does not divide `m` or `n` the grid is padded. Slots that land in
//! the padding are kept in `values` so block addressing stays uniform, but
//! they are pinned to zero.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, BpdError, Result};
use crate::scalar::Scalar;

/// How permutation values `k_l` are chosen for a freshly built layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermPolicy {
    /// `k_l = l mod p`.
    Natural,
    /// Each `k_l` drawn uniformly from `[0, p)`.
    Random { seed: u64 },
}

/// Initial contents of the live (non-padding) slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPolicy<T> {
    Zeros,
    Constant(T),
    /// Uniform in `[-s, s]` with `s = 1 / sqrt(fan_in)`, where `fan_in`
    /// counts only the stored connections of one output.
    ScaledUniform { seed: u64 },
}

pub(crate) fn round_up(n: usize, p: usize) -> usize {
    n.div_ceil(p) * p
}

pub(crate) fn make_perms(count: usize, p: usize, policy: PermPolicy) -> Vec<usize> {
    match policy {
        PermPolicy::Natural => (0..count).map(|l| l % p).collect(),
        PermPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| rng.gen_range(0..p)).collect()
        }
    }
}

/// Fills `values` according to `init`, calling `live(slot)` to skip padding.
pub(crate) fn init_values<T: Scalar>(
    len: usize,
    fan_in: usize,
    init: InitPolicy<T>,
    live: impl Fn(usize) -> bool,
) -> Vec<T> {
    let mut values = vec![T::zero(); len];
    match init {
        InitPolicy::Zeros => {}
        InitPolicy::Constant(c) => {
            for (slot, v) in values.iter_mut().enumerate() {
                if live(slot) {
                    *v = c;
                }
            }
        }
        InitPolicy::ScaledUniform { seed } => {
            let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (slot, v) in values.iter_mut().enumerate() {
                // Draw for every slot so the stream does not depend on padding.
                let u: f64 = rng.gen_range(-1.0..=1.0);
                if live(slot) {
                    *v = T::lit(u * scale);
                }
            }
        }
    }
    values
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpdMatrix<T> {
    rows: usize,
    cols: usize,
    block: usize,
    perms: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> BpdMatrix<T> {
    /// Builds a matrix with perms from `perm` and live slots filled per `init`.
    pub fn new(
        rows: usize,
        cols: usize,
        block: usize,
        perm: PermPolicy,
        init: InitPolicy<T>,
    ) -> Result<Self> {
        if block == 0 {
            return Err(BpdError::ZeroBlock);
        }
        if rows == 0 {
            return Err(BpdError::ZeroDimension("rows"));
        }
        if cols == 0 {
            return Err(BpdError::ZeroDimension("cols"));
        }
        let block_count = (round_up(rows, block) / block) * (round_up(cols, block) / block);
        let perms = make_perms(block_count, block, perm);
        let mut m = BpdMatrix {
            rows,
            cols,
            block,
            perms,
            values: Vec::new(),
        };
        let fan_in = m.block_cols();
        m.values = init_values(block_count * block, fan_in, init, |s| m.is_live_slot(s));
        Ok(m)
    }

    /// Assembles a matrix from raw parts, checking every structural invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        block: usize,
        perms: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if block == 0 {
            return Err(BpdError::ZeroBlock);
        }
        if rows == 0 {
            return Err(BpdError::ZeroDimension("rows"));
        }
        if cols == 0 {
            return Err(BpdError::ZeroDimension("cols"));
        }
        let m = BpdMatrix {
            rows,
            cols,
            block,
            perms,
            values,
        };
        check_len("perms", m.block_count(), m.perms.len())?;
        check_len("values", m.slot_count(), m.values.len())?;
        if let Some((block, &value)) = m.perms.iter().enumerate().find(|(_, &k)| k >= block) {
            return Err(BpdError::PermOutOfRange {
                block,
                value,
                p: m.block,
            });
        }
        if let Some(slot) =
            (0..m.slot_count()).find(|&s| !m.is_live_slot(s) && m.values[s] != T::zero())
        {
            return Err(BpdError::NonzeroPadding(slot));
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn rows_pad(&self) -> usize {
        round_up(self.rows, self.block)
    }

    pub fn cols_pad(&self) -> usize {
        round_up(self.cols, self.block)
    }

    /// Number of block rows in the padded grid.
    pub fn block_rows(&self) -> usize {
        self.rows_pad() / self.block
    }

    /// Number of block columns in the padded grid.
    pub fn block_cols(&self) -> usize {
        self.cols_pad() / self.block
    }

    pub fn block_count(&self) -> usize {
        self.block_rows() * self.block_cols()
    }

    /// Length of the packed value vector, `rows_pad * cols_pad / p`.
    pub fn slot_count(&self) -> usize {
        self.block_count() * self.block
    }

    pub fn perms(&self) -> &[usize] {
        &self.perms
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Padded `(row, col)` coordinates of a packed slot.
    pub fn slot_position(&self, slot: usize) -> (usize, usize) {
        let p = self.block;
        let (l, c) = (slot / p, slot % p);
        let nbc = self.block_cols();
        let (br, g) = (l / nbc, l % nbc);
        (br * p + c, g * p + (c + self.perms[l]) % p)
    }

    pub fn is_live_slot(&self, slot: usize) -> bool {
        let (i, j) = self.slot_position(slot);
        i < self.rows && j < self.cols
    }

    /// Packed slot holding `(i, j)`, or `None` when the position is
    /// structurally zero. Coordinates may lie in the padded region.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        let p = self.block;
        let (c, d) = (i % p, j % p);
        let l = (i / p) * self.block_cols() + j / p;
        ((c + self.perms[l]) % p == d).then_some(l * p + c)
    }

    pub fn entry_at(&self, i: usize, j: usize) -> Result<T> {
        if i >= self.rows || j >= self.cols {
            return Err(BpdError::IndexOutOfRange {
                row: i,
                col: j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self
            .slot_of(i, j)
            .map_or(T::zero(), |slot| self.values[slot]))
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut dense = Array2::zeros((self.rows, self.cols));
        for slot in 0..self.slot_count() {
            let (i, j) = self.slot_position(slot);
            if i < self.rows && j < self.cols {
                dense[[i, j]] = self.values[slot];
            }
        }
        dense
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        self.matvec_counted(x).map(|(a, _)| a)
    }

    /// Forward product together with the number of multiplies issued, which
    /// is always `rows * cols_pad / p`.
    pub fn matvec_counted(&self, x: &[T]) -> Result<(Vec<T>, usize)> {
        check_len("input vector", self.cols, x.len())?;
        let p = self.block;
        let nbc = self.block_cols();
        let mut mults = 0;
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let (br, c) = (i / p, i % p);
            let mut acc = T::zero();
            for g in 0..nbc {
                let l = br * nbc + g;
                let j = (c + self.perms[l]) % p + g * p;
                let xj = if j < self.cols { x[j] } else { T::zero() };
                acc += self.values[l * p + c] * xj;
                mults += 1;
            }
            out.push(acc);
        }
        Ok((out, mults))
    }

    /// `W^T * ga`, walking each column's nonzeros through the inverse
    /// permutation `i = (j + p - k_l) mod p + g p`.
    pub fn matvec_transposed(&self, ga: &[T]) -> Result<Vec<T>> {
        check_len("output gradient", self.rows, ga.len())?;
        let p = self.block;
        let nbc = self.block_cols();
        let mut out = Vec::with_capacity(self.cols);
        for j in 0..self.cols {
            let (gc, d) = (j / p, j % p);
            let mut acc = T::zero();
            for g in 0..self.block_rows() {
                let l = g * nbc + gc;
                let c = (d + p - self.perms[l]) % p;
                let i = c + g * p;
                if i < self.rows {
                    acc += self.values[l * p + c] * ga[i];
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Applies `f(slot, value)` to every live slot. Padding stays zero.
    pub fn update_live(&mut self, mut f: impl FnMut(usize, T) -> T) {
        for slot in 0..self.values.len() {
            if self.is_live_slot(slot) {
                self.values[slot] = f(slot, self.values[slot]);
            }
        }
    }

    /// Converts the element type, keeping structure untouched.
    pub fn cast<U: Scalar>(&self) -> BpdMatrix<U> {
        BpdMatrix {
            rows: self.rows,
            cols: self.cols,
            block: self.block,
            perms: self.perms.clone(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
