//! Convolution weight tensors with permuted-diagonal structure over the
//! (output channel, input channel) grid.
//!
//! Each nonzero channel pair carries a full `kernel_w x kernel_h` kernel.
//! Kernels are packed by slot exactly like [`BpdMatrix`](crate::BpdMatrix)
//! values: slot `l * p + c` belongs to block `l` and in-block output channel
//! `c`, and its input channel is `g * p + (c + k_l) mod p`.

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, BpdError, Result};
use crate::matrix::{init_values, make_perms, round_up, InitPolicy, PermPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpdConvTensor<T> {
    out_channels: usize,
    in_channels: usize,
    kernel_w: usize,
    kernel_h: usize,
    block: usize,
    perms: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> BpdConvTensor<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: (usize, usize),
        block: usize,
        perm: PermPolicy,
        init: InitPolicy<T>,
    ) -> Result<Self> {
        Self::check_dims(out_channels, in_channels, kernel, block)?;
        let mut t = BpdConvTensor {
            out_channels,
            in_channels,
            kernel_w: kernel.0,
            kernel_h: kernel.1,
            block,
            perms: Vec::new(),
            values: Vec::new(),
        };
        t.perms = make_perms(t.block_count(), block, perm);
        let ks = t.kernel_size();
        let fan_in = t.block_cols() * ks;
        t.values = init_values(t.slot_count() * ks, fan_in, init, |i| t.is_live_slot(i / ks));
        Ok(t)
    }

    pub fn from_parts(
        out_channels: usize,
        in_channels: usize,
        kernel: (usize, usize),
        block: usize,
        perms: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        Self::check_dims(out_channels, in_channels, kernel, block)?;
        let t = BpdConvTensor {
            out_channels,
            in_channels,
            kernel_w: kernel.0,
            kernel_h: kernel.1,
            block,
            perms,
            values,
        };
        check_len("perms", t.block_count(), t.perms.len())?;
        check_len("kernel values", t.slot_count() * t.kernel_size(), t.values.len())?;
        if let Some((b, &value)) = t.perms.iter().enumerate().find(|(_, &k)| k >= block) {
            return Err(BpdError::PermOutOfRange {
                block: b,
                value,
                p: block,
            });
        }
        for slot in 0..t.slot_count() {
            if !t.is_live_slot(slot) && t.kernel(slot).iter().any(|&v| v != T::zero()) {
                return Err(BpdError::NonzeroPadding(slot));
            }
        }
        Ok(t)
    }

    fn check_dims(c2: usize, c0: usize, kernel: (usize, usize), block: usize) -> Result<()> {
        if block == 0 {
            return Err(BpdError::ZeroBlock);
        }
        for (v, name) in [
            (c2, "out_channels"),
            (c0, "in_channels"),
            (kernel.0, "kernel_w"),
            (kernel.1, "kernel_h"),
        ] {
            if v == 0 {
                return Err(BpdError::ZeroDimension(name));
            }
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_dims(&self) -> (usize, usize) {
        (self.kernel_w, self.kernel_h)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_w * self.kernel_h
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn block_rows(&self) -> usize {
        round_up(self.out_channels, self.block) / self.block
    }

    pub fn block_cols(&self) -> usize {
        round_up(self.in_channels, self.block) / self.block
    }

    pub fn block_count(&self) -> usize {
        self.block_rows() * self.block_cols()
    }

    /// Number of packed kernels.
    pub fn slot_count(&self) -> usize {
        self.block_count() * self.block
    }

    pub fn perms(&self) -> &[usize] {
        &self.perms
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Padded `(output channel, input channel)` of a kernel slot.
    pub fn slot_channels(&self, slot: usize) -> (usize, usize) {
        let p = self.block;
        let (l, c) = (slot / p, slot % p);
        let nbc = self.block_cols();
        (
            (l / nbc) * p + c,
            (l % nbc) * p + (c + self.perms[l]) % p,
        )
    }

    pub fn is_live_slot(&self, slot: usize) -> bool {
        let (i, j) = self.slot_channels(slot);
        i < self.out_channels && j < self.in_channels
    }

    pub fn kernel(&self, slot: usize) -> &[T] {
        let ks = self.kernel_size();
        &self.values[slot * ks..(slot + 1) * ks]
    }

    /// Kernel connecting input channel `j` to output channel `i`, if the pair
    /// lies on a permuted diagonal.
    pub fn kernel_at(&self, i: usize, j: usize) -> Option<&[T]> {
        if i >= self.out_channels || j >= self.in_channels {
            return None;
        }
        let p = self.block;
        let l = (i / p) * self.block_cols() + j / p;
        ((i % p + self.perms[l]) % p == j % p).then(|| self.kernel(l * p + i % p))
    }

    /// Dense `[out, in, kernel_w, kernel_h]` expansion.
    pub fn to_dense(&self) -> Array4<T> {
        let mut dense = Array4::zeros((
            self.out_channels,
            self.in_channels,
            self.kernel_w,
            self.kernel_h,
        ));
        for slot in 0..self.slot_count() {
            let (i, j) = self.slot_channels(slot);
            if i < self.out_channels && j < self.in_channels {
                for (idx, &v) in self.kernel(slot).iter().enumerate() {
                    dense[[i, j, idx / self.kernel_h, idx % self.kernel_h]] = v;
                }
            }
        }
        dense
    }

    /// Unit-stride convolution `Y(i,x,y) = sum F(i,j,w,h) X(j, x-w, y-h)`.
    ///
    /// The output keeps the input's spatial size; reads outside `X` are zero.
    pub fn forward(&self, x: &Array3<T>) -> Result<Array3<T>> {
        let (c0, w0, h0) = x.dim();
        check_len("input channels", self.in_channels, c0)?;
        let p = self.block;
        let nbc = self.block_cols();
        let mut y = Array3::zeros((self.out_channels, w0, h0));
        for i in 0..self.out_channels {
            let (br, c) = (i / p, i % p);
            for g in 0..nbc {
                let l = br * nbc + g;
                let j = (c + self.perms[l]) % p + g * p;
                if j >= self.in_channels {
                    continue;
                }
                let kernel = self.kernel(l * p + c);
                for px in 0..w0 {
                    for py in 0..h0 {
                        let mut acc = T::zero();
                        for kw in 0..self.kernel_w.min(px + 1) {
                            for kh in 0..self.kernel_h.min(py + 1) {
                                acc += kernel[kw * self.kernel_h + kh] * x[[j, px - kw, py - kh]];
                            }
                        }
                        y[[i, px, py]] += acc;
                    }
                }
            }
        }
        Ok(y)
    }

    pub(crate) fn values_mut_live(&mut self, mut f: impl FnMut(usize, T) -> T) {
        let ks = self.kernel_size();
        for idx in 0..self.values.len() {
            if self.is_live_slot(idx / ks) {
                self.values[idx] = f(idx, self.values[idx]);
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> BpdConvTensor<U> {
        BpdConvTensor {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernel_w: self.kernel_w,
            kernel_h: self.kernel_h,
            block: self.block,
            perms: self.perms.clone(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn dense_conv(f: &Array4<f64>, x: &Array3<f64>) -> Array3<f64> {
        let (c2, c0, kw, kh) = f.dim();
        let (_, w0, h0) = x.dim();
        let mut y = Array3::zeros((c2, w0, h0));
        for i in 0..c2 {
            for j in 0..c0 {
                for px in 0..w0 as isize {
                    for py in 0..h0 as isize {
                        for w in 0..kw as isize {
                            for h in 0..kh as isize {
                                let (sx, sy) = (px - w, py - h);
                                if sx >= 0 && sy >= 0 {
                                    y[[i, px as usize, py as usize]] += f
                                        [[i, j, w as usize, h as usize]]
                                        * x[[j, sx as usize, sy as usize]];
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn seq_input(c: usize, w: usize, h: usize) -> Array3<f64> {
        Array3::from_shape_fn((c, w, h), |(a, b, d)| ((a * 31 + b * 7 + d * 3) % 11) as f64 - 5.0)
    }

    #[test]
    fn pointwise_dense_case_is_channel_mixing() {
        let f = BpdConvTensor::<f64>::new(
            3,
            2,
            (1, 1),
            1,
            PermPolicy::Natural,
            InitPolicy::ScaledUniform { seed: 1 },
        )
        .unwrap();
        let x = seq_input(2, 3, 4);
        let y = f.forward(&x).unwrap();
        let d = f.to_dense();
        for px in 0..3 {
            for py in 0..4 {
                for i in 0..3 {
                    let expect: f64 = (0..2).map(|j| d[[i, j, 0, 0]] * x[[j, px, py]]).sum();
                    assert!((y[[i, px, py]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_kernels_copy_input() {
        // p = c0 = c2 = 3 with k = 0: output channel i reads input channel i.
        let mut values = vec![0.0; 3 * 4];
        for slot in 0..3 {
            values[slot * 4] = 1.0;
        }
        let f = BpdConvTensor::from_parts(3, 3, (2, 2), 3, vec![0], values).unwrap();
        let x = seq_input(3, 4, 5);
        assert_eq!(f.forward(&x).unwrap(), x);
    }

    #[test]
    fn matches_dense_convolution() {
        let f = BpdConvTensor::<f64>::new(
            4,
            4,
            (3, 3),
            2,
            PermPolicy::Random { seed: 5 },
            InitPolicy::ScaledUniform { seed: 6 },
        )
        .unwrap();
        let x = seq_input(4, 6, 6);
        let y = f.forward(&x).unwrap();
        let oracle = dense_conv(&f.to_dense(), &x);
        for (a, b) in y.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn structure_one_kernel_per_output_per_block() {
        let f = BpdConvTensor::<f64>::new(
            6,
            5,
            (1, 2),
            3,
            PermPolicy::Random { seed: 2 },
            InitPolicy::Constant(1.0),
        )
        .unwrap();
        for i in 0..6 {
            for g in 0..2 {
                let hits = (g * 3..(g * 3 + 3).min(5))
                    .filter(|&j| f.kernel_at(i, j).is_some())
                    .count();
                assert!(hits <= 1);
            }
        }
        // Padded input channel 5 never carries a kernel.
        for slot in 0..f.slot_count() {
            if !f.is_live_slot(slot) {
                assert!(f.kernel(slot).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let f = BpdConvTensor::<f64>::new(2, 2, (1, 1), 1, PermPolicy::Natural, InitPolicy::Zeros)
            .unwrap();
        assert!(f.forward(&Array3::zeros((3, 2, 2))).is_err());
    }
}
