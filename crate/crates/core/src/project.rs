//! Projection of dense weights onto the closest permuted-diagonal pattern.
//!
//! For each `p x p` block the `p` candidate diagonals are disjoint and cover
//! the block, so keeping the diagonal with the largest squared mass minimises
//! the Frobenius error of the whole matrix. Ties go to the smaller `k`.

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::conv::BpdConvTensor;
use crate::error::{check_len, BpdError, Result};
use crate::matrix::{round_up, BpdMatrix};
use crate::scalar::Scalar;

/// Score used to rank candidate diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProjectionNorm {
    /// Squared l2 mass; the Frobenius-optimal choice.
    #[default]
    L2,
    /// Absolute (l1) mass.
    L1,
}

impl ProjectionNorm {
    fn score<T: Scalar>(self, v: T) -> T {
        match self {
            ProjectionNorm::L2 => v * v,
            ProjectionNorm::L1 => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection<W, T> {
    pub weights: W,
    /// Chosen `k` per block, identical to `weights.perms()`.
    pub chosen: Vec<usize>,
    /// Frobenius norm of the discarded entries.
    pub residual: T,
    pub total_energy: T,
    pub retained_energy: T,
}

pub type MatrixProjection<T> = Projection<BpdMatrix<T>, T>;
pub type TensorProjection<T> = Projection<BpdConvTensor<T>, T>;

/// Picks, per block, the diagonal maximising `score(i, j)` summed over its
/// entries. Out-of-range coordinates score zero.
fn choose_perms<T: Scalar>(
    block_rows: usize,
    block_cols: usize,
    p: usize,
    score: impl Fn(usize, usize) -> T,
) -> Vec<usize> {
    let mut perms = Vec::with_capacity(block_rows * block_cols);
    for br in 0..block_rows {
        for g in 0..block_cols {
            let mut best = (0, T::neg_infinity());
            for k in 0..p {
                let mut mass = T::zero();
                for c in 0..p {
                    mass += score(br * p + c, g * p + (c + k) % p);
                }
                if mass > best.1 {
                    best = (k, mass);
                }
            }
            perms.push(best.0);
        }
    }
    perms
}

/// Projects a dense matrix onto the optimal block-permuted diagonal pattern.
pub fn project_matrix<T: Scalar>(
    dense: &Array2<T>,
    block: usize,
    norm: ProjectionNorm,
) -> Result<MatrixProjection<T>> {
    if block == 0 {
        return Err(BpdError::ZeroBlock);
    }
    let (rows, cols) = dense.dim();
    let at = |i: usize, j: usize| {
        if i < rows && j < cols {
            dense[[i, j]]
        } else {
            T::zero()
        }
    };
    let perms = choose_perms(
        round_up(rows, block) / block,
        round_up(cols, block) / block,
        block,
        |i, j| norm.score(at(i, j)),
    );
    mask_matrix(dense, block, perms)
}

/// Keeps the entries of `dense` that lie on the given permuted diagonals.
pub fn mask_matrix<T: Scalar>(
    dense: &Array2<T>,
    block: usize,
    perms: Vec<usize>,
) -> Result<MatrixProjection<T>> {
    if block == 0 {
        return Err(BpdError::ZeroBlock);
    }
    let (rows, cols) = dense.dim();
    let skeleton = BpdMatrix::from_parts(
        rows,
        cols,
        block,
        perms,
        vec![T::zero(); round_up(rows, block) * round_up(cols, block) / block],
    )?;
    let mut retained = T::zero();
    let values: Vec<T> = (0..skeleton.slot_count())
        .map(|slot| {
            let (i, j) = skeleton.slot_position(slot);
            if i < rows && j < cols {
                let v = dense[[i, j]];
                retained += v * v;
                v
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = dense.iter().map(|&v| v * v).sum();
    let chosen = skeleton.perms().to_vec();
    let weights = BpdMatrix::from_parts(rows, cols, block, chosen.clone(), values)?;
    // Sum the dropped entries directly rather than subtracting energies.
    let dropped: T = dense
        .indexed_iter()
        .filter(|((i, j), _)| weights.slot_of(*i, *j).is_none())
        .map(|(_, &v)| v * v)
        .sum();
    Ok(Projection {
        weights,
        chosen,
        residual: dropped.sqrt(),
        total_energy: total,
        retained_energy: retained,
    })
}

/// Projects a dense `[out, in, kw, kh]` tensor, scoring each channel pair by
/// its kernel's mass.
pub fn project_tensor<T: Scalar>(
    dense: &Array4<T>,
    block: usize,
    norm: ProjectionNorm,
) -> Result<TensorProjection<T>> {
    if block == 0 {
        return Err(BpdError::ZeroBlock);
    }
    let (c2, c0, _, _) = dense.dim();
    let kernel_score = |i: usize, j: usize| {
        if i < c2 && j < c0 {
            dense
                .slice(ndarray::s![i, j, .., ..])
                .iter()
                .map(|&v| norm.score(v))
                .sum()
        } else {
            T::zero()
        }
    };
    let perms = choose_perms(
        round_up(c2, block) / block,
        round_up(c0, block) / block,
        block,
        kernel_score,
    );
    mask_tensor(dense, block, perms)
}

pub fn mask_tensor<T: Scalar>(
    dense: &Array4<T>,
    block: usize,
    perms: Vec<usize>,
) -> Result<TensorProjection<T>> {
    if block == 0 {
        return Err(BpdError::ZeroBlock);
    }
    let (c2, c0, kw, kh) = dense.dim();
    let ks = kw * kh;
    let blocks = (round_up(c2, block) / block) * (round_up(c0, block) / block);
    check_len("perms", blocks, perms.len())?;
    let skeleton = BpdConvTensor::from_parts(
        c2,
        c0,
        (kw, kh),
        block,
        perms,
        vec![T::zero(); blocks * block * ks],
    )?;
    let mut values = Vec::with_capacity(blocks * block * ks);
    let mut retained = T::zero();
    for slot in 0..skeleton.slot_count() {
        let (i, j) = skeleton.slot_channels(slot);
        for w in 0..kw {
            for h in 0..kh {
                let v = if i < c2 && j < c0 {
                    dense[[i, j, w, h]]
                } else {
                    T::zero()
                };
                retained += v * v;
                values.push(v);
            }
        }
    }
    let total: T = dense.iter().map(|&v| v * v).sum();
    let chosen = skeleton.perms().to_vec();
    let weights = BpdConvTensor::from_parts(c2, c0, (kw, kh), block, chosen.clone(), values)?;
    let dropped: T = dense
        .indexed_iter()
        .filter(|((i, j, _, _), _)| weights.kernel_at(*i, *j).is_none())
        .map(|(_, &v)| v * v)
        .sum();
    Ok(Projection {
        weights,
        chosen,
        residual: dropped.sqrt(),
        total_energy: total,
        retained_energy: retained,
    })
}
