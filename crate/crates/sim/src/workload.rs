//! Layer descriptions and seeded synthetic weights/inputs for them.

use permdnn_core::{BpdMatrix, Codebook, InitPolicy, PermPolicy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub weight_density: f64,
    pub activation_density: f64,
}

impl LayerWorkload {
    /// Workload whose weight density follows from `block`.
    pub fn new(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        block: usize,
        activation_density: f64,
    ) -> Result<Self> {
        let w = LayerWorkload {
            name: name.into(),
            rows,
            cols,
            block,
            weight_density: if block == 0 { 0.0 } else { 1.0 / block as f64 },
            activation_density,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Workload(format!("{}: {m}", self.name)));
        if self.rows == 0 || self.cols == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.block == 0 {
            return bad("block size must be positive".into());
        }
        if (self.weight_density * self.block as f64 - 1.0).abs() > 1e-9 {
            return bad(format!(
                "weight density {} does not match 1/p for p = {}",
                self.weight_density, self.block
            ));
        }
        if !(0.0..=1.0).contains(&self.activation_density) {
            return bad(format!(
                "activation density {} outside [0, 1]",
                self.activation_density
            ));
        }
        Ok(())
    }
}

/// Fixed 16-entry table of shared weights used by synthetic layers:
/// symmetric levels `±(2k+1)/32` for k in 0..8.
pub fn synthetic_lut() -> Vec<f64> {
    let mut v: Vec<f64> = (0..8)
        .flat_map(|k| {
            let m = (2 * k + 1) as f64 / 32.0;
            [-m, m]
        })
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Random perms and uniformly drawn 4-bit tags for `w`, decoded through
/// [`synthetic_lut`]. Padding slots hold zero in the matrix and the tag of
/// the smallest positive level.
pub fn synthesize_tagged(w: &LayerWorkload, seed: u64) -> Result<(BpdMatrix<f64>, Codebook)> {
    w.validate()?;
    let skeleton = BpdMatrix::<f64>::new(
        w.rows,
        w.cols,
        w.block,
        PermPolicy::Random { seed },
        InitPolicy::Zeros,
    )?;
    let lut = synthetic_lut();
    let zero_tag = 8u8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_7A65);
    let mut tags = Vec::with_capacity(skeleton.slot_count());
    let mut values = Vec::with_capacity(skeleton.slot_count());
    for slot in 0..skeleton.slot_count() {
        if skeleton.is_live_slot(slot) {
            let t: u8 = rng.gen_range(0..16);
            tags.push(t);
            values.push(lut[t as usize]);
        } else {
            tags.push(zero_tag);
            values.push(0.0);
        }
    }
    let matrix = BpdMatrix::from_parts(
        w.rows,
        w.cols,
        w.block,
        skeleton.perms().to_vec(),
        values,
    )?;
    Ok((matrix, Codebook::from_parts(4, lut, tags)?))
}

/// Input vector with exactly `round(density * len)` nonzero entries at
/// seeded positions. Values are drawn from `[1/16, 1)` so they stay nonzero
/// after 16-bit quantization at any binary point up to 15.
pub fn synthetic_activations(len: usize, density: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nnz = ((density.clamp(0.0, 1.0) * len as f64).round() as usize).min(len);
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    let mut x = vec![0.0; len];
    for &i in &idx[..nnz] {
        x[i] = rng.gen_range(0.0625..1.0);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_must_match_block() {
        let mut w = LayerWorkload::new("x", 8, 8, 4, 1.0).unwrap();
        assert_eq!(w.weight_density, 0.25);
        w.weight_density = 0.5;
        assert!(w.validate().is_err());
        assert!(LayerWorkload::new("x", 8, 8, 4, 1.5).is_err());
        assert!(LayerWorkload::new("x", 0, 8, 4, 1.0).is_err());
    }

    #[test]
    fn activations_hit_exact_density() {
        let x = synthetic_activations(9216, 0.358, 3);
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nnz, (0.358f64 * 9216.0).round() as usize);
        assert_eq!(x, synthetic_activations(9216, 0.358, 3));
    }

    #[test]
    fn synthetic_tags_decode_to_values() {
        let w = LayerWorkload::new("t", 10, 13, 4, 1.0).unwrap();
        let (m, book) = synthesize_tagged(&w, 1).unwrap();
        for slot in 0..m.slot_count() {
            if m.is_live_slot(slot) {
                assert_eq!(book.decode(book.tags[slot]), m.values()[slot]);
            }
        }
        assert_eq!(synthetic_lut().len(), 16);
    }
}
