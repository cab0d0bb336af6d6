//! Acceptance checks, one `AC<n> PASS|FAIL` line each. Exits non-zero if
//! any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3, Array4};
use permdnn_cli::presets::{alexnet_fc, nmt_fc, PRESETS};
use permdnn_cli::{run_sweep, run_workload, RunConfig, RunFlags, Source};
use permdnn_core::data::{gaussian_blobs, load_idx_subset};
use permdnn_core::train::train;
use permdnn_core::{
    compression_stats, convert_pretrained, evaluate, grad_conv, grad_fc, Activation,
    BpdConvTensor, BpdMatrix, Dataset, FixedPointSpec, InitPolicy, Layer, Loss, Model, PermPolicy,
    TrainConfig,
};
use permdnn_sim::{
    plan_layout, select_schedule, simulate_layer, throughput_model, EngineConfig, ScheduleCase,
    WeightPayload,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s < 1e-300 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rows: usize, cols: usize, p: usize, seed: u64) -> BpdMatrix<f64> {
    BpdMatrix::new(rows, cols, p, PermPolicy::Random { seed }, InitPolicy::ScaledUniform { seed: seed + 1 }).unwrap()
}

/// Dense matrix rebuilt from the packed storage: slot `l*p + c` of block
/// `l = br*nbc + g` sits at row `br*p + c`, column `g*p + (c + k_l) % p`.
fn dense_from_parts(w: &BpdMatrix<f64>) -> Array2<f64> {
    let p = w.block();
    let nbc = w.cols().div_ceil(p);
    let mut d = Array2::zeros((w.rows(), w.cols()));
    for (l, &k) in w.perms().iter().enumerate() {
        let (br, g) = (l / nbc, l % nbc);
        for c in 0..p {
            let (i, j) = (br * p + c, g * p + (c + k) % p);
            if i < w.rows() && j < w.cols() {
                d[[i, j]] = w.values()[l * p + c];
            }
        }
    }
    d
}

fn dense_tensor_from_parts(t: &BpdConvTensor<f64>) -> Array4<f64> {
    let p = t.block();
    let (kw, kh) = t.kernel_dims();
    let nbc = t.in_channels().div_ceil(p);
    let mut d = Array4::zeros((t.out_channels(), t.in_channels(), kw, kh));
    for (l, &k) in t.perms().iter().enumerate() {
        let (br, g) = (l / nbc, l % nbc);
        for c in 0..p {
            let (i, j) = (br * p + c, g * p + (c + k) % p);
            if i < t.out_channels() && j < t.in_channels() {
                let base = (l * p + c) * kw * kh;
                for a in 0..kw {
                    for b in 0..kh {
                        d[[i, j, a, b]] = t.values()[base + a * kh + b];
                    }
                }
            }
        }
    }
    d
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    let n = 1000;
    for case in 0..n {
        let (m, k, p) = (r.gen_range(1..=64), r.gen_range(1..=64), r.gen_range(1..=8));
        let w = random_matrix(m, k, p, case);
        let x: Vec<f64> = (0..k).map(|_| r.gen_range(-1.0..1.0)).collect();
        let d = dense_from_parts(&w);
        for (i, got) in w.matvec(&x).unwrap().iter().enumerate() {
            let want: f64 = (0..k).map(|j| d[[i, j]] * x[j]).sum();
            worst = worst.max(rel_err(*got, want));
        }

        let (c2, c0, p) = (r.gen_range(1..=8), r.gen_range(1..=8), r.gen_range(1..=4));
        let ker = (r.gen_range(1..=3), r.gen_range(1..=3));
        let side = r.gen_range(1..=5);
        let f = BpdConvTensor::new(c2, c0, ker, p, PermPolicy::Random { seed: case }, InitPolicy::ScaledUniform { seed: case }).unwrap();
        let xin = Array3::from_shape_fn((c0, side, side), |_| r.gen_range(-1.0..1.0));
        let y = f.forward(&xin).unwrap();
        let d = dense_tensor_from_parts(&f);
        for ((i, px, py), got) in y.indexed_iter() {
            let mut want = 0.0;
            for j in 0..c0 {
                for a in 0..ker.0.min(px + 1) {
                    for b in 0..ker.1.min(py + 1) {
                        want += d[[i, j, a, b]] * xin[[j, px - a, py - b]];
                    }
                }
            }
            worst = worst.max(rel_err(*got, want));
        }
    }
    let t = start.elapsed();
    check(
        worst <= 1e-12 && t < Duration::from_secs(60),
        format!("{n} matvec + {n} conv instances, worst relative error {worst:.2e}, {:.1}s", t.as_secs_f64()),
    )
}

fn probe_grad(a: &[f64], r: &[f64]) -> Vec<f64> {
    a.iter().zip(r).map(|(a, r)| r * (1.0 - a.tanh().powi(2))).collect()
}

fn probe(a: &[f64], r: &[f64]) -> f64 {
    a.iter().zip(r).map(|(a, r)| r * a.tanh()).sum()
}

fn grad_rel(a: f64, n: f64) -> f64 {
    let s = a.abs().max(n.abs());
    if s < 1e-7 {
        (a - n).abs()
    } else {
        (a - n).abs() / s
    }
}

fn ac2() -> Outcome {
    const H: f64 = 1e-6;
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst_fc: f64 = 0.0;
    for case in 0..100 {
        let (m, n, p) = (r.gen_range(1..=10), r.gen_range(1..=10), r.gen_range(1..=4));
        let w = random_matrix(m, n, p, 500 + case);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let rr: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = grad_fc(&w, &x, &probe_grad(&w.matvec(&x).unwrap(), &rr)).unwrap();
        let loss = |v: &[f64], x: &[f64]| {
            let wm = BpdMatrix::from_parts(m, n, p, w.perms().to_vec(), v.to_vec()).unwrap();
            probe(&wm.matvec(x).unwrap(), &rr)
        };
        for s in (0..w.slot_count()).filter(|&s| w.is_live_slot(s)) {
            let (mut a, mut b) = (w.values().to_vec(), w.values().to_vec());
            a[s] += H;
            b[s] -= H;
            worst_fc = worst_fc.max(grad_rel(g.d_values[s], (loss(&a, &x) - loss(&b, &x)) / (2.0 * H)));
        }
        for j in 0..n {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += H;
            b[j] -= H;
            worst_fc = worst_fc.max(grad_rel(g.d_input[j], (loss(w.values(), &a) - loss(w.values(), &b)) / (2.0 * H)));
        }
    }
    let mut worst_conv: f64 = 0.0;
    for case in 0..100 {
        let (c2, c0, p) = (r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=3));
        let ker = (r.gen_range(1..=3), r.gen_range(1..=3));
        let side = r.gen_range(2..=4);
        let f = BpdConvTensor::new(c2, c0, ker, p, PermPolicy::Random { seed: case }, InitPolicy::ScaledUniform { seed: case + 9 }).unwrap();
        let x = Array3::from_shape_fn((c0, side, side), |_| r.gen_range(-1.0..1.0));
        let rr: Vec<f64> = (0..c2 * side * side).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = f.forward(&x).unwrap().into_iter().collect();
        let gy = Array3::from_shape_vec((c2, side, side), probe_grad(&y, &rr)).unwrap();
        let g = grad_conv(&f, &x, &gy).unwrap();
        let loss = |v: &[f64], x: &Array3<f64>| {
            let t = BpdConvTensor::from_parts(c2, c0, ker, p, f.perms().to_vec(), v.to_vec()).unwrap();
            probe(&t.forward(x).unwrap().into_iter().collect::<Vec<_>>(), &rr)
        };
        let ks = ker.0 * ker.1;
        for idx in (0..f.values().len()).filter(|&i| f.is_live_slot(i / ks)) {
            let (mut a, mut b) = (f.values().to_vec(), f.values().to_vec());
            a[idx] += H;
            b[idx] -= H;
            worst_conv = worst_conv.max(grad_rel(g.d_kernels[idx], (loss(&a, &x) - loss(&b, &x)) / (2.0 * H)));
        }
        for (pos, &an) in g.d_input.indexed_iter() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[pos] += H;
            b[pos] -= H;
            worst_conv = worst_conv.max(grad_rel(an, (loss(f.values(), &a) - loss(f.values(), &b)) / (2.0 * H)));
        }
    }
    let t = start.elapsed();
    check(
        worst_fc <= 1e-5 && worst_conv <= 1e-5 && t < Duration::from_secs(120),
        format!("100 FC + 100 conv instances, worst error FC {worst_fc:.1e} conv {worst_conv:.1e}, {:.1}s", t.as_secs_f64()),
    )
}

/// Positions allowed by the perms, from the diagonal rule alone.
fn on_pattern(rows: usize, cols: usize, p: usize, perms: &[usize]) -> Array2<bool> {
    let nbc = cols.div_ceil(p);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let k = perms[(i / p) * nbc + j / p];
        j % p == (i % p + k) % p
    })
}

fn ac3() -> Outcome {
    let data: Dataset<f64> = gaussian_blobs(50, 19, 3, 1.0, 3);
    let cfg = TrainConfig { learning_rate: 0.05, batch_size: 1, epochs: 20, seed: 5, activation: Activation::Tanh, loss: Loss::SoftmaxCrossEntropy };
    let mut model = Model::mlp(&[19, 14, 3], &[5, 3], &cfg).unwrap();
    for (i, l) in model.layers_mut().iter_mut().enumerate() {
        if let Layer::Fc(f) = l {
            let (m, n, p) = (f.weights.rows(), f.weights.cols(), f.weights.block());
            f.weights = random_matrix(m, n, p, 40 + i as u64);
        }
    }
    let before: Vec<(Vec<usize>, Array2<f64>)> = model
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Fc(f) => (f.weights.perms().to_vec(), f.weights.to_dense()),
            Layer::Conv(_) => unreachable!(),
        })
        .collect();
    train(&mut model, &data, &cfg).unwrap();
    let steps = data.len() * cfg.epochs;
    let mut moved = 0;
    let mut perms_same = true;
    for (l, (perms, d0)) in model.layers().iter().zip(&before) {
        let Layer::Fc(f) = l else { unreachable!() };
        perms_same &= f.weights.perms() == &perms[..];
        let d1 = dense_from_parts(&f.weights);
        let on = on_pattern(d0.nrows(), d0.ncols(), f.weights.block(), perms);
        moved += d1.iter().zip(on.iter()).filter(|(v, o)| !**o && **v != 0.0).count();
    }
    check(
        steps >= 1000 && moved == 0 && perms_same,
        format!("{steps} SGD steps, {moved} off-pattern entries nonzero, perms unchanged: {perms_same}"),
    )
}

fn ac4() -> Outcome {
    let alex = alexnet_fc();
    let s32 = compression_stats(&alex, 32);
    let s16 = compression_stats(&alex, 16);
    let nmt = compression_stats(&nmt_fc(), 32);
    let near = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let ok = near(s32.dense_mb(), 234.5, 0.05)
        && near(s32.compressed_mb(), 25.9, 0.1)
        && near(s32.ratio, 9.0, 0.05)
        && near(s16.compressed_mb(), 12.9, 0.1)
        && near(s16.ratio, 18.1, 0.05)
        && nmt.layers.len() == 32
        && near(nmt.dense_mb(), 419.4, 0.05)
        && near(nmt.compressed_mb(), 52.4, 0.05)
        && nmt.ratio == 8.0;
    check(
        ok,
        format!(
            "AlexNet {:.2}MB -> {:.2}MB ({:.2}x) at 32 bits, {:.2}MB ({:.2}x) at 16 bits; NMT {:.1}MB -> {:.1}MB ({}x)",
            s32.dense_mb(), s32.compressed_mb(), s32.ratio, s16.compressed_mb(), s16.ratio, nmt.dense_mb(), nmt.compressed_mb(), nmt.ratio
        ),
    )
}

fn ac5() -> Outcome {
    let cfg = EngineConfig::default();
    let raw = throughput_model(&cfg, 1.0, 1.0).map_err(|e| e.to_string())?;
    let eq = throughput_model(&cfg, 8.0, 3.0).map_err(|e| e.to_string())?;
    check(
        raw.raw_gops == 614.4 && (eq.equivalent_tops - 14.74).abs() <= 0.01,
        format!("{} GOPS raw, {:.4} TOPS equivalent with 8x weight and 3x activation factors", raw.raw_gops, eq.equivalent_tops),
    )
}

fn ac6() -> Outcome {
    let mut r = rng(6);
    let mut checked = 0;
    let mut bad = 0;
    while checked < 200 {
        let cfg = EngineConfig {
            n_pe: r.gen_range(1..=8),
            n_mul: [1, 2, 4, 8][r.gen_range(0..4)],
            n_acc: [16, 32, 64, 128][r.gen_range(0..4)],
            ..EngineConfig::default()
        };
        let (m, n, p) = (r.gen_range(1..=160), r.gen_range(1..=64), r.gen_range(1..=8));
        let Ok(s) = select_schedule(&cfg, m, n, p) else { continue };
        if s.case != ScheduleCase::Case1 {
            continue;
        }
        let w = random_matrix(m, n, p, checked);
        let img = plan_layout(&w, WeightPayload::Real32, &cfg).unwrap();
        let x: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.6) { r.gen_range(0.1..1.0) } else { 0.0 }).collect();
        let (_, rep) = simulate_layer(&img, &x, &cfg, Activation::Identity).unwrap();
        let nnz = x.iter().filter(|v| **v != 0.0).count() as u64;
        let blocks_per_pe = m.div_ceil(p).div_ceil(cfg.n_pe);
        let n_rowpe = blocks_per_pe * p;
        let want = nnz * n_rowpe.div_ceil(p * cfg.n_mul) as u64;
        bad += usize::from(rep.compute_cycles != want);
        checked += 1;
    }
    let cfg = EngineConfig { n_pe: 2, n_mul: 1, n_acc: 4, ..EngineConfig::default() };
    let w = random_matrix(8, 8, 2, 3);
    let img = plan_layout(&w, WeightPayload::Real32, &cfg).unwrap();
    let (_, rep) = simulate_layer(&img, &[1.0; 8], &cfg, Activation::Identity).unwrap();
    check(
        bad == 0 && rep.cycles_per_column == 2,
        format!("{checked} Case 1 layers, {bad} mismatches; 2-PE 8x8 p=2 example runs at {} cycles/column", rep.cycles_per_column),
    )
}

fn ac7() -> Outcome {
    let cfg = RunConfig::default();
    let run = |density| {
        let flags = RunFlags { density, ..RunFlags::default() };
        run_workload(Source::Preset("alex-fc6"), &cfg, &flags).map_err(|e| e.to_string())
    };
    let sparse = run(None)?;
    let dense = run(Some(1.0))?;
    let ratio = sparse.cycles.compute_cycles as f64 / dense.cycles.compute_cycles as f64;
    check(
        (ratio / 0.358 - 1.0).abs() <= 0.01,
        format!("compute {} at density {} vs {} dense, ratio {ratio:.4}", sparse.cycles.compute_cycles, sparse.workload.activation_density, dense.cycles.compute_cycles),
    )
}

fn ac8() -> Outcome {
    let cfg = RunConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;
    for p in PRESETS {
        let r = run_workload(Source::Preset(p.name), &cfg, &RunFlags::default()).map_err(|e| e.to_string())?;
        let macs = &r.cycles.per_pe_macs;
        let same = macs.len() == cfg.engine.n_pe && macs.windows(2).all(|w| w[0] == w[1]);
        ok &= same;
        notes.push(format!("{} {}", p.name, if same { macs[0].to_string() } else { "unequal".into() }));
    }
    check(ok, format!("MACs per PE: {}", notes.join(", ")))
}

fn ac9() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["alex-fc6", "nmt-3"] {
        let rows = run_sweep(name, &[32, 64], &cfg, 0).map_err(|e| e.to_string())?;
        let s = rows[0].total_cycles as f64 / rows[1].total_cycles as f64;
        ok &= s >= 1.90;
        notes.push(format!("{name} {s:.3}x"));
    }
    let t = start.elapsed();
    check(ok && t < Duration::from_secs(300), format!("32 -> 64 PEs: {}, {:.1}s", notes.join(", "), t.as_secs_f64()))
}

/// Integer reference built from the dense matrix of weight codes.
fn integer_reference(codes: &Array2<i64>, x: &[i64], frac: u32, act: Activation) -> Vec<i32> {
    let spec = FixedPointSpec::new(16, frac).unwrap();
    let scale = (frac as f64).exp2();
    codes
        .rows()
        .into_iter()
        .map(|row| {
            let acc: i64 = row
                .iter()
                .zip(x)
                .filter(|(w, _)| **w != 0)
                .map(|(w, v)| ((w * v) as f64 / scale).round_ties_even() as i64)
                .sum();
            let a = acc.clamp(-(1 << 23), (1 << 23) - 1);
            let y = match act {
                Activation::Relu => a.max(0),
                _ => a,
            };
            y.clamp(spec.min_code(), spec.max_code()) as i32
        })
        .collect()
}

fn ac10() -> Outcome {
    let mut r = rng(10);
    let mut layers = 0;
    let mut mismatches = 0;
    while layers < 120 {
        let cfg = EngineConfig {
            n_pe: [1, 2, 4, 8][r.gen_range(0..4)],
            n_mul: [1, 2, 4, 8][r.gen_range(0..4)],
            n_acc: [16, 32, 64, 128][r.gen_range(0..4)],
            ..EngineConfig::default()
        };
        let (m, n, p) = (r.gen_range(1..=80), r.gen_range(1..=80), r.gen_range(1..=8));
        if cfg.n_acc < p {
            continue;
        }
        let frac = r.gen_range(8..=14);
        let spec = FixedPointSpec::new(16, frac).unwrap();
        let w = random_matrix(m, n, p, 1000 + layers);
        let x: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { r.gen_range(-2.0..2.0) } else { 0.0 }).collect();
        let act = if layers % 2 == 0 { Activation::Identity } else { Activation::Relu };
        let img = plan_layout(&w, WeightPayload::Fixed(spec), &cfg).unwrap();
        let (y, _) = simulate_layer(&img, &x, &cfg, act).unwrap();
        let codes = dense_from_parts(&w).mapv(|v| spec.quantize(v) as i64);
        let xq: Vec<i64> = x.iter().map(|&v| spec.quantize(v) as i64).collect();
        mismatches += usize::from(y.codes != Some(integer_reference(&codes, &xq, frac, act)));
        layers += 1;
    }
    check(mismatches == 0, format!("{layers} random fixed-point layers, {mismatches} differ from the integer reference"))
}

fn accuracy(train_set: &Dataset<f64>, test_set: &Dataset<f64>, p: usize, cfg: &TrainConfig) -> f64 {
    let dims = [train_set.dim(), 64, train_set.classes()];
    let mut m = Model::mlp(&dims, &[p, p], cfg).unwrap();
    train(&mut m, train_set, cfg).unwrap();
    evaluate(&m, test_set, cfg.loss).unwrap().accuracy
}

fn ac11() -> Outcome {
    let all: Dataset<f64> = gaussian_blobs(800, 32, 4, 1.6, 31);
    let (train_set, test_set) = all.split_at(600);
    let cfg = TrainConfig { learning_rate: 0.1, batch_size: 16, epochs: 40, seed: 12, activation: Activation::Tanh, loss: Loss::SoftmaxCrossEntropy };
    let dense = accuracy(&train_set, &test_set, 1, &cfg);
    let p2 = accuracy(&train_set, &test_set, 2, &cfg);
    let p4 = accuracy(&train_set, &test_set, 4, &cfg);

    let mut dm = Model::mlp(&[32, 64, 4], &[1, 1], &cfg).unwrap();
    train(&mut dm, &train_set, &cfg).unwrap();
    let tune = TrainConfig { epochs: 15, ..cfg.clone() };
    let conv = convert_pretrained(&dm, &[4, 4], &tune, &train_set, &test_set).unwrap();
    let kept = conv.fine_tuned.accuracy / conv.dense.accuracy;
    let mut ok = p2 >= dense - 0.02 && p4 >= dense - 0.02 && kept >= 0.95;
    let mnist = match mnist_subset() {
        Some((tr, te)) => {
            let c = TrainConfig { epochs: 10, ..cfg };
            let (d, a2, a4) = (accuracy(&tr, &te, 1, &c), accuracy(&tr, &te, 2, &c), accuracy(&tr, &te, 4, &c));
            ok &= a2 >= d - 0.02 && a4 >= d - 0.02;
            format!("MNIST subset: dense {d:.3}, p=2 {a2:.3}, p=4 {a4:.3}")
        }
        None => "MNIST subset not available locally (set PERMDNN_MNIST_DIR), not run".into(),
    };
    check(
        ok,
        format!(
            "synthetic blobs: dense {dense:.3}, p=2 {p2:.3}, p=4 {p4:.3}; conversion keeps {:.1}% of dense accuracy; {mnist}",
            100.0 * kept
        ),
    )
}

/// First 3000 MNIST training images, split 2500/500, when the IDX files are
/// in `$PERMDNN_MNIST_DIR`.
fn mnist_subset() -> Option<(Dataset<f64>, Dataset<f64>)> {
    let dir = std::path::PathBuf::from(std::env::var_os("PERMDNN_MNIST_DIR")?);
    let data: Dataset<f64> = load_idx_subset(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        3000,
    )
    .ok()??;
    Some(data.split_at(data.len() * 5 / 6))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("oracle equivalence", ac1),
        ("gradient checks", ac2),
        ("structure preservation", ac3),
        ("compression arithmetic", ac4),
        ("throughput model", ac5),
        ("analytical cycle agreement", ac6),
        ("zero skipping", ac7),
        ("load balance", ac8),
        ("scalability", ac9),
        ("simulator bit-exactness", ac10),
        ("desk-scale training", ac11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("AC{} PASS: {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("AC{} FAIL: {name}: {d}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
