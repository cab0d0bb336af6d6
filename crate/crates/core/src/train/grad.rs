//! Structure-preserving gradients and updates.
//!
//! Gradients are only ever formed for packed slots, so an update can never
//! create a weight off the permuted diagonals.

use ndarray::Array3;

use crate::conv::BpdConvTensor;
use crate::error::{check_len, BpdError, Result};
use crate::matrix::BpdMatrix;
use crate::scalar::Scalar;

/// Gradients of one fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T> {
    /// `dJ/dq`, aligned with the layer's packed values. Padding slots are zero.
    pub d_values: Vec<T>,
    /// `dJ/dx`.
    pub d_input: Vec<T>,
}

/// Gradients of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients<T> {
    /// Aligned with [`BpdConvTensor::values`].
    pub d_kernels: Vec<T>,
    pub d_input: Array3<T>,
}

pub fn grad_fc<T: Scalar>(w: &BpdMatrix<T>, x: &[T], ga: &[T]) -> Result<LayerGradients<T>> {
    check_len("layer input", w.cols(), x.len())?;
    check_len("output gradient", w.rows(), ga.len())?;
    let d_values = (0..w.slot_count())
        .map(|slot| {
            let (i, j) = w.slot_position(slot);
            if i < w.rows() && j < w.cols() {
                x[j] * ga[i]
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(LayerGradients {
        d_values,
        d_input: w.matvec_transposed(ga)?,
    })
}

/// `values -= lr * d_values` on live slots. Perms are never touched.
pub fn sgd_update<T: Scalar>(w: &mut BpdMatrix<T>, d_values: &[T], lr: T) -> Result<()> {
    check_len("value gradient", w.slot_count(), d_values.len())?;
    w.update_live(|slot, v| v - lr * d_values[slot]);
    Ok(())
}

pub fn sgd_update_conv<T: Scalar>(
    f: &mut BpdConvTensor<T>,
    d_kernels: &[T],
    lr: T,
) -> Result<()> {
    check_len("kernel gradient", f.values().len(), d_kernels.len())?;
    f.values_mut_live(|idx, v| v - lr * d_kernels[idx]);
    Ok(())
}

pub fn grad_conv<T: Scalar>(
    f: &BpdConvTensor<T>,
    x: &Array3<T>,
    gy: &Array3<T>,
) -> Result<ConvGradients<T>> {
    let (c0, w0, h0) = x.dim();
    check_len("input channels", f.in_channels(), c0)?;
    if gy.dim() != (f.out_channels(), w0, h0) {
        return Err(BpdError::ShapeMismatch(format!(
            "output gradient is {:?}, expected {:?}",
            gy.dim(),
            (f.out_channels(), w0, h0)
        )));
    }
    let (kw, kh) = f.kernel_dims();
    let ks = kw * kh;
    let p = f.block();

    let mut d_kernels = vec![T::zero(); f.values().len()];
    for slot in 0..f.slot_count() {
        let (i, j) = f.slot_channels(slot);
        if i >= f.out_channels() || j >= f.in_channels() {
            continue;
        }
        for w in 0..kw {
            for h in 0..kh {
                let mut acc = T::zero();
                for px in w..w0 {
                    for py in h..h0 {
                        acc += x[[j, px - w, py - h]] * gy[[i, px, py]];
                    }
                }
                d_kernels[slot * ks + w * kh + h] = acc;
            }
        }
    }

    // dX(j, x, y) = sum_g sum_{w,h} F(i, j, w, h) dY(i, x + w, y + h)
    // with i = (j + p - k_l) mod p + g p.
    let nbc = f.block_cols();
    let mut d_input = Array3::zeros((c0, w0, h0));
    for j in 0..c0 {
        let (gc, d) = (j / p, j % p);
        for g in 0..f.block_rows() {
            let l = g * nbc + gc;
            let c = (d + p - f.perms()[l]) % p;
            let i = g * p + c;
            if i >= f.out_channels() {
                continue;
            }
            let kernel = f.kernel(l * p + c);
            for px in 0..w0 {
                for py in 0..h0 {
                    let mut acc = T::zero();
                    for w in 0..kw.min(w0 - px) {
                        for h in 0..kh.min(h0 - py) {
                            acc += kernel[w * kh + h] * gy[[i, px + w, py + h]];
                        }
                    }
                    d_input[[j, px, py]] += acc;
                }
            }
        }
    }
    Ok(ConvGradients { d_kernels, d_input })
}
