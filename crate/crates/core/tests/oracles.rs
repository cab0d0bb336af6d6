//! Structure-aware kernels checked against dense brute-force oracles.

use ndarray::{Array2, Array3, Array4};
use permdnn_core::{
    project_matrix, project_tensor, BpdConvTensor, BpdMatrix, InitPolicy, PermPolicy,
    ProjectionNorm,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_matvec(d: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    d.rows()
        .into_iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn dense_conv(f: &Array4<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (c2, c0, kw, kh) = f.dim();
    let (_, w0, h0) = x.dim();
    let mut y = Array3::zeros((c2, w0, h0));
    for i in 0..c2 {
        for j in 0..c0 {
            for px in 0..w0 {
                for py in 0..h0 {
                    for w in 0..kw {
                        for h in 0..kh {
                            if px >= w && py >= h {
                                y[[i, px, py]] += f[[i, j, w, h]] * x[[j, px - w, py - h]];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn random_matrix(rows: usize, cols: usize, p: usize, seed: u64) -> BpdMatrix<f64> {
    BpdMatrix::new(
        rows,
        cols,
        p,
        PermPolicy::Random { seed },
        InitPolicy::ScaledUniform { seed: seed ^ 0xABCD },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matvec_matches_dense(rows in 1usize..=64, cols in 1usize..=64, p in 1usize..=8, seed: u64) {
        let w = random_matrix(rows, cols, p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = w.matvec(&x).unwrap();
        let want = dense_matvec(&w.to_dense(), &x);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!(*a == *b || rel_err(*a, *b) <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn one_candidate_per_block_row_and_column(rows in 1usize..=40, cols in 1usize..=40, p in 1usize..=8, seed: u64) {
        let w = random_matrix(rows, cols, p, seed);
        // Positions are checked through slot_of, independent of the values.
        for br in 0..w.block_rows() {
            for g in 0..w.block_cols() {
                for c in 0..p {
                    let hits = (0..p).filter(|&d| w.slot_of(br * p + c, g * p + d).is_some()).count();
                    prop_assert_eq!(hits, 1);
                    let hits = (0..p).filter(|&d| w.slot_of(br * p + d, g * p + c).is_some()).count();
                    prop_assert_eq!(hits, 1);
                }
            }
        }
    }

    #[test]
    fn multiply_count_is_exact(rows in 1usize..=64, cols in 1usize..=64, p in 1usize..=8) {
        let w = random_matrix(rows, cols, p, 1);
        let (_, mults) = w.matvec_counted(&vec![1.0; cols]).unwrap();
        prop_assert_eq!(mults, rows * w.cols_pad() / p);
    }

    #[test]
    fn projection_is_optimal(rows in 1usize..=24, cols in 1usize..=24, p in 1usize..=6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Array2<f64> = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-2.0..2.0));
        let proj = project_matrix(&d, p, ProjectionNorm::L2).unwrap();
        let at = |i: usize, j: usize| if i < rows && j < cols { d[[i, j]] } else { 0.0 };
        let nbc = cols.div_ceil(p);
        for (l, &k) in proj.chosen.iter().enumerate() {
            let (br, g) = (l / nbc, l % nbc);
            let energy = |k: usize| (0..p).map(|c| at(br * p + c, g * p + (c + k) % p).powi(2)).sum::<f64>();
            for alt in 0..p {
                prop_assert!(energy(k) >= energy(alt));
            }
        }
        let total: f64 = d.iter().map(|v| v * v).sum();
        let residual2 = proj.residual * proj.residual;
        prop_assert!((residual2 - (total - proj.retained_energy)).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn projection_is_idempotent(rows in 1usize..=30, cols in 1usize..=30, p in 1usize..=8, seed: u64) {
        let w = random_matrix(rows, cols, p, seed);
        let proj = project_matrix(&w.to_dense(), p, ProjectionNorm::L2).unwrap();
        prop_assert_eq!(proj.weights.to_dense(), w.to_dense());
        prop_assert_eq!(proj.residual, 0.0);
        for slot in 0..w.slot_count() {
            if w.is_live_slot(slot) {
                let (i, j) = w.slot_position(slot);
                prop_assert_eq!(proj.weights.slot_of(i, j), Some(slot));
                prop_assert_eq!(proj.weights.values()[slot], w.values()[slot]);
            }
        }
    }

    #[test]
    fn conv_matches_dense(c2 in 1usize..=6, c0 in 1usize..=6, p in 1usize..=4, kw in 1usize..=3, kh in 1usize..=3, side in 1usize..=5, seed: u64) {
        let f = BpdConvTensor::<f64>::new(
            c2, c0, (kw, kh), p,
            PermPolicy::Random { seed },
            InitPolicy::ScaledUniform { seed: seed.wrapping_add(1) },
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array3::from_shape_fn((c0, side, side + 1), |_| rng.gen_range(-1.0..1.0));
        let got = f.forward(&x).unwrap();
        let want = dense_conv(&f.to_dense(), &x);
        for (a, b) in got.iter().zip(want.iter()) {
            prop_assert!(*a == *b || rel_err(*a, *b) <= 1e-12 || (a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn tensor_projection_is_idempotent(c2 in 1usize..=8, c0 in 1usize..=8, p in 1usize..=4, seed: u64) {
        let f = BpdConvTensor::<f64>::new(
            c2, c0, (2, 2), p,
            PermPolicy::Random { seed },
            InitPolicy::ScaledUniform { seed },
        ).unwrap();
        let proj = project_tensor(&f.to_dense(), p, ProjectionNorm::L2).unwrap();
        prop_assert_eq!(proj.weights.to_dense(), f.to_dense());
        prop_assert_eq!(proj.residual, 0.0);
    }
}

#[test]
fn thousand_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (m, n, p) = (
            rng.gen_range(1..=64),
            rng.gen_range(1..=64),
            rng.gen_range(1..=8),
        );
        let w = random_matrix(m, n, p, rng.gen());
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (a, b) in w.matvec(&x).unwrap().iter().zip(dense_matvec(&w.to_dense(), &x)) {
            if *a != b {
                worst = worst.max(rel_err(*a, b));
            }
        }
    }
    assert!(worst <= 1e-12, "worst relative error {worst}");
}

#[test]
fn f32_matches_f64_structure() {
    let w = random_matrix(13, 21, 4, 5);
    let w32 = w.cast::<f32>();
    let x: Vec<f64> = (0..21).map(|i| (i as f64 * 0.37).sin()).collect();
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let a = w.matvec(&x).unwrap();
    let b = w32.matvec(&x32).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - *v as f64).abs() < 1e-5);
    }
    assert_eq!(w.perms(), w32.perms());
}
