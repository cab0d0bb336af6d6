//! Labelled datasets: seeded synthetic generators and an IDX (MNIST) reader.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{BpdError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Vec<Vec<T>>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(BpdError::LengthMismatch {
                what: "labels",
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(BpdError::InvalidConfig(format!(
                "label {bad} outside {classes} classes"
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(BpdError::ShapeMismatch("samples differ in length".into()));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn sample(&self, idx: usize) -> (&[T], usize) {
        (&self.inputs[idx], self.labels[idx])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Splits off the first `n` samples.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        (
            Dataset {
                inputs: self.inputs[..n].to_vec(),
                labels: self.labels[..n].to_vec(),
                classes: self.classes,
            },
            Dataset {
                inputs: self.inputs[n..].to_vec(),
                labels: self.labels[n..].to_vec(),
                classes: self.classes,
            },
        )
    }
}

/// Isotropic Gaussian clusters around centres drawn uniformly from
/// `[-1, 1]^dim`. Labels cycle through the classes.
pub fn gaussian_blobs<T: Scalar>(
    n: usize,
    dim: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).expect("spread must be finite and non-negative");
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for idx in 0..n {
        let label = idx % classes;
        inputs.push(
            centres[label]
                .iter()
                .map(|&c| T::lit(c + noise.sample(&mut rng)))
                .collect(),
        );
        labels.push(label);
    }
    Dataset {
        inputs,
        labels,
        classes,
    }
}

/// Two classes split by a random hyperplane through the origin, with every
/// sample at least `margin` away from it.
pub fn linearly_separable<T: Scalar>(n: usize, dim: usize, margin: f64, seed: u64) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while inputs.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let side = x.iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>() / norm;
        if side.abs() < margin {
            continue;
        }
        labels.push(usize::from(side > 0.0));
        inputs.push(x.into_iter().map(T::lit).collect());
    }
    Dataset {
        inputs,
        labels,
        classes: 2,
    }
}

/// Single-channel `side x side` images. Each class has a random binary
/// template; samples are the template shifted by up to one pixel plus
/// Gaussian noise. Flattened row-major.
pub fn pattern_images<T: Scalar>(
    n: usize,
    side: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..side * side)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let dist = Normal::new(0.0, noise).expect("noise must be finite and non-negative");
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for idx in 0..n {
        let label = idx % classes;
        let (dx, dy) = (rng.gen_range(0..2usize), rng.gen_range(0..2usize));
        let t = &templates[label];
        let img = (0..side * side)
            .map(|k| {
                let (x, y) = (k / side, k % side);
                let base = if x >= dx && y >= dy {
                    t[(x - dx) * side + (y - dy)]
                } else {
                    0.0
                };
                T::lit(base + dist.sample(&mut rng))
            })
            .collect();
        inputs.push(img);
        labels.push(label);
    }
    Dataset {
        inputs,
        labels,
        classes,
    }
}

fn read_idx(path: &Path, expected_magic: u32) -> io::Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", path.display()));
    if bytes.len() < 4 {
        return Err(bad("truncated header"));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if magic != expected_magic {
        return Err(bad("unexpected IDX magic"));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() < header + count {
        return Err(bad("truncated payload"));
    }
    Ok((dims, bytes[header..header + count].to_vec()))
}

/// Reads the first `limit` samples of an MNIST-style IDX pair, scaling pixels
/// to `[0, 1]`. Returns `Ok(None)` when either file is missing.
pub fn load_idx_subset<T: Scalar>(
    images: &Path,
    labels: &Path,
    limit: usize,
) -> io::Result<Option<Dataset<T>>> {
    if !images.exists() || !labels.exists() {
        return Ok(None);
    }
    let (idims, pixels) = read_idx(images, 0x0000_0803)?;
    let (_, raw_labels) = read_idx(labels, 0x0000_0801)?;
    let per = idims[1] * idims[2];
    let n = limit.min(idims[0]).min(raw_labels.len());
    let inputs = (0..n)
        .map(|i| {
            pixels[i * per..(i + 1) * per]
                .iter()
                .map(|&p| T::lit(p as f64 / 255.0))
                .collect()
        })
        .collect();
    let labels: Vec<usize> = raw_labels[..n].iter().map(|&l| l as usize).collect();
    Dataset::new(inputs, labels, 10)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
