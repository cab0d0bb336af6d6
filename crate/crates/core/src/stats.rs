//! Storage accounting for compressed layers.

use serde::{Deserialize, Serialize};

use crate::matrix::round_up;

/// Shape of one layer for storage accounting. For convolution layers `rows`
/// and `cols` are output and input channels and `kernel` is `kw * kh`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub kernel: usize,
}

impl LayerShape {
    pub fn fc(name: impl Into<String>, rows: usize, cols: usize, block: usize) -> Self {
        LayerShape {
            name: name.into(),
            rows,
            cols,
            block,
            kernel: 1,
        }
    }

    pub fn conv(
        name: impl Into<String>,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        block: usize,
    ) -> Self {
        LayerShape {
            name: name.into(),
            rows: out_channels,
            cols: in_channels,
            block,
            kernel,
        }
    }

    pub fn dense_params(&self) -> u64 {
        (self.rows * self.cols * self.kernel) as u64
    }

    /// Packed entry count, padding slots included.
    pub fn stored_params(&self) -> u64 {
        let p = self.block.max(1);
        (round_up(self.rows, p) * round_up(self.cols, p) / p * self.kernel) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCompression {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub dense_params: u64,
    pub stored_params: u64,
    pub dense_bytes: f64,
    pub compressed_bytes: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub bits_per_weight: u32,
    /// Baseline width the dense figures are computed at.
    pub dense_bits: u32,
    pub dense_bytes: f64,
    pub compressed_bytes: f64,
    pub ratio: f64,
    pub layers: Vec<LayerCompression>,
}

impl CompressionStats {
    pub fn dense_mb(&self) -> f64 {
        self.dense_bytes / 1e6
    }

    pub fn compressed_mb(&self) -> f64 {
        self.compressed_bytes / 1e6
    }

    pub fn stored_params(&self) -> u64 {
        self.layers.iter().map(|l| l.stored_params).sum()
    }
}

/// Dense storage at 32-bit float versus packed storage at `bits_per_weight`.
pub fn compression_stats(layers: &[LayerShape], bits_per_weight: u32) -> CompressionStats {
    compression_stats_with_baseline(layers, bits_per_weight, 32)
}

pub fn compression_stats_with_baseline(
    layers: &[LayerShape],
    bits_per_weight: u32,
    dense_bits: u32,
) -> CompressionStats {
    let per_layer: Vec<LayerCompression> = layers
        .iter()
        .map(|l| {
            let dense_bytes = l.dense_params() as f64 * dense_bits as f64 / 8.0;
            let compressed_bytes = l.stored_params() as f64 * bits_per_weight as f64 / 8.0;
            LayerCompression {
                name: l.name.clone(),
                rows: l.rows,
                cols: l.cols,
                block: l.block,
                dense_params: l.dense_params(),
                stored_params: l.stored_params(),
                dense_bytes,
                compressed_bytes,
                ratio: ratio(dense_bytes, compressed_bytes),
            }
        })
        .collect();
    let dense_bytes: f64 = per_layer.iter().map(|l| l.dense_bytes).sum();
    let compressed_bytes: f64 = per_layer.iter().map(|l| l.compressed_bytes).sum();
    CompressionStats {
        bits_per_weight,
        dense_bits,
        dense_bytes,
        compressed_bytes,
        ratio: ratio(dense_bytes, compressed_bytes),
        layers: per_layer,
    }
}

fn ratio(dense: f64, compressed: f64) -> f64 {
    if compressed == 0.0 {
        0.0
    } else {
        dense / compressed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alexnet_fc() -> Vec<LayerShape> {
        vec![
            LayerShape::fc("fc6", 4096, 9216, 10),
            LayerShape::fc("fc7", 4096, 4096, 10),
            LayerShape::fc("fc8", 1000, 4096, 4),
        ]
    }

    #[test]
    fn alexnet_fc_storage() {
        let s32 = compression_stats(&alexnet_fc(), 32);
        assert_eq!(s32.dense_bytes, 234_487_808.0);
        // Padding rows 4096 -> 4100 and cols 9216 -> 9220 for p = 10.
        assert_eq!(s32.stored_params(), 3_780_200 + 1_681_000 + 1_024_000);
        assert!((s32.compressed_mb() - 25.9408).abs() < 1e-9);
        assert!((s32.ratio - 9.0).abs() < 0.05);

        let s16 = compression_stats(&alexnet_fc(), 16);
        assert!((s16.compressed_mb() - 12.9704).abs() < 1e-9);
        assert!((s16.ratio - 18.1).abs() < 0.05);
    }

    #[test]
    fn unit_block_is_uncompressed() {
        let s = compression_stats(&[LayerShape::fc("x", 8, 8, 1)], 32);
        assert_eq!(s.ratio, 1.0);
    }

    #[test]
    fn conv_layers_count_kernels() {
        let l = LayerShape::conv("c", 16, 16, 9, 4);
        assert_eq!(l.dense_params(), 16 * 16 * 9);
        assert_eq!(l.stored_params(), 16 * 16 * 9 / 4);
    }
}
