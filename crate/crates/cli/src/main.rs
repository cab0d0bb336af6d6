use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use permdnn_cli::config_file::{parse_config, ConfigError, RunConfig};
use permdnn_cli::model_file::{Encoding, ModelFile, ModelFileError};
use permdnn_cli::presets::{network, PRESETS};
use permdnn_cli::report::{emit_compression, emit_run, emit_sweep, json, Format};
use permdnn_cli::runner::{run_sweep, run_workload, Numeric, RunError, RunFlags, Source};
use permdnn_core::data::{gaussian_blobs, linearly_separable, load_idx_subset, pattern_images};
use permdnn_core::train::train;
use permdnn_core::{
    compression_stats, convert_pretrained, evaluate, mask_matrix, mask_tensor, project_matrix,
    project_tensor, Activation, BpdError, BpdMatrix, ConvLayer, Dataset, FcLayer, FixedPointSpec,
    InitPolicy, Layer, LayerShape, Loss, Model, PermPolicy, ProjectionNorm, TrainConfig,
};
use permdnn_sim::{throughput_model, SimError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Core(#[from] BpdError),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Model(#[from] ModelFileError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Config { .. } => 4,
            CliError::Sim(_) => 5,
            CliError::Core(_) => 6,
            CliError::UnknownPreset(_) => 7,
            CliError::Model(e) => match e {
                ModelFileError::BadMagic => 10,
                ModelFileError::UnsupportedVersion { .. } => 11,
                ModelFileError::Truncated => 12,
                ModelFileError::ChecksumMismatch { .. } => 13,
                ModelFileError::Malformed(_) => 14,
                ModelFileError::Io(_) => 3,
            },
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::UnknownPreset(n) => CliError::UnknownPreset(n),
            RunError::Sim(e) => CliError::Sim(e),
            RunError::Model(e) => CliError::Model(e),
            RunError::Invalid(m) => CliError::Usage(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "permdnn", version, about = "Block-permuted diagonal networks and their engine model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PermChoice {
    /// Pick each block's diagonal to keep the most weight energy.
    Optimal,
    /// Every block uses the main diagonal.
    Natural,
    /// Seeded random diagonals.
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightChoice {
    Real,
    Fixed,
    Tagged,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActChoice {
    Relu,
    Tanh,
    Identity,
}

impl From<ActChoice> for Activation {
    fn from(a: ActChoice) -> Self {
        match a {
            ActChoice::Relu => Activation::Relu,
            ActChoice::Tanh => Activation::Tanh,
            ActChoice::Identity => Activation::Identity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NumericChoice {
    Fixed,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetChoice {
    Blobs,
    Separable,
    Patterns,
    Mnist,
}

#[derive(clap::Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    dataset: DatasetChoice,
    /// Number of samples (synthetic sets) or the subset size (MNIST).
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Input dimension of synthetic vector sets; image side for patterns.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Fraction of samples held out for evaluation.
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActChoice,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            activation: self.activation.into(),
            loss: Loss::SoftmaxCrossEntropy,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Project dense weights onto block-permuted diagonal structure.
    Compress {
        /// Dense model file, or a CSV matrix (one row per line).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// One block size, or one per layer.
        #[arg(long, value_delimiter = ',', default_value = "4")]
        block_size: Vec<usize>,
        #[arg(long, value_enum, default_value = "optimal")]
        perm: PermChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "real")]
        weights: WeightChoice,
        #[arg(long, default_value_t = 4)]
        tag_bits: u32,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
    /// Train a block-structured MLP from scratch.
    Train {
        /// Hidden layer widths.
        #[arg(long, value_delimiter = ',', default_value = "64")]
        hidden: Vec<usize>,
        /// One block size, or one per layer.
        #[arg(long, value_delimiter = ',', default_value = "4")]
        blocks: Vec<usize>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
    /// Project a trained dense model and fine-tune it.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4")]
        blocks: Vec<usize>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
    /// Run one layer through the engine model.
    Simulate {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        preset: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long)]
        pes: Option<usize>,
        #[arg(long, value_enum, default_value = "fixed")]
        numeric: NumericChoice,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the activation density of the workload.
        #[arg(long)]
        density: Option<f64>,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
        /// Include host wall-clock time in the report.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate one preset at several PE counts.
    Sweep {
        #[arg(long)]
        preset: String,
        /// Comma-separated PE counts; an empty list gives an empty table.
        #[arg(long, default_value = "8,16,32,64", value_parser = parse_count_list)]
        pes: CountList,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Analytic reports that need no simulation.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    /// Storage of the AlexNet or NMT fully connected layers.
    Compression {
        #[arg(long, default_value = "alexnet")]
        network: String,
        #[arg(long, default_value_t = 16)]
        bits: u32,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
    /// Peak throughput of the configured engine.
    Throughput {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Weight compression factor.
        #[arg(long, default_value_t = 8.0)]
        weight_factor: f64,
        /// Activation sparsity factor (1 / density).
        #[arg(long, default_value_t = 3.0)]
        activation_factor: f64,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
    /// The built-in benchmark layers.
    Presets {
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
}

#[derive(Clone)]
struct CountList(Vec<usize>);

fn parse_count_list(s: &str) -> std::result::Result<CountList, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(CountList)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.into(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, pes: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = String::from_utf8_lossy(&read(p)?).into_owned();
            parse_config(&text).map_err(|source| CliError::Config { path: p.into(), source })?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = pes {
        cfg.engine.n_pe = n;
    }
    cfg.engine.validate()?;
    Ok(cfg)
}

/// Expands a single block size to every layer.
fn per_layer(blocks: &[usize], layers: usize) -> Result<Vec<usize>> {
    match blocks.len() {
        1 => Ok(vec![blocks[0]; layers]),
        n if n == layers => Ok(blocks.to_vec()),
        n => Err(CliError::Usage(format!("{n} block sizes given for {layers} layers"))),
    }
}

fn parse_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = read(path)?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(&bytes[..]);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|c| {
                c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Usage(format!("{}: line {}: `{c}` is not a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::Usage(format!("{}: empty matrix", path.display())));
    }
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|_| CliError::Usage(format!("{}: rows have different lengths", path.display())))
}

fn load_dense_model(path: &Path) -> Result<Model<f64>> {
    let bytes = read(path)?;
    if bytes.starts_with(permdnn_cli::model_file::MAGIC) {
        Ok(ModelFile::from_bytes(&bytes)?.to_model()?)
    } else {
        let d = parse_csv_matrix(path)?;
        let (rows, cols) = d.dim();
        let w = mask_matrix(&d, 1, vec![0; rows * cols])?.weights;
        Ok(Model::new(vec![Layer::Fc(FcLayer {
            weights: w,
            bias: vec![0.0; rows],
            activation: Activation::Identity,
        })])?)
    }
}

fn random_perms(block_rows: usize, block_cols: usize, p: usize, seed: u64) -> Result<Vec<usize>> {
    let m = BpdMatrix::<f64>::new(block_rows * p, block_cols * p, p, PermPolicy::Random { seed }, InitPolicy::Zeros)?;
    Ok(m.perms().to_vec())
}

#[derive(Serialize)]
struct CompressedLayer {
    layer: usize,
    block: usize,
    residual: f64,
    retained_energy_fraction: f64,
}

fn compress_layer(layer: &Layer<f64>, p: usize, perm: PermChoice, seed: u64) -> Result<(Layer<f64>, CompressedLayer, usize)> {
    let fraction = |kept: f64, total: f64| if total > 0.0 { kept / total } else { 1.0 };
    Ok(match layer {
        Layer::Fc(f) => {
            let d = f.weights.to_dense();
            let (r, c) = d.dim();
            let proj = match perm {
                PermChoice::Optimal => project_matrix(&d, p, ProjectionNorm::L2)?,
                PermChoice::Natural => mask_matrix(&d, p, vec![0; r.div_ceil(p) * c.div_ceil(p)])?,
                PermChoice::Random => mask_matrix(&d, p, random_perms(r.div_ceil(p), c.div_ceil(p), p, seed)?)?,
            };
            let info = CompressedLayer {
                layer: 0,
                block: p,
                residual: proj.residual,
                retained_energy_fraction: fraction(proj.retained_energy, proj.total_energy),
            };
            let fc = FcLayer { weights: proj.weights, bias: f.bias.clone(), activation: f.activation };
            (Layer::Fc(fc), info, r * c)
        }
        Layer::Conv(cv) => {
            let d = cv.filter.to_dense();
            let (c2, c0, kh, kw) = d.dim();
            let proj = match perm {
                PermChoice::Optimal => project_tensor(&d, p, ProjectionNorm::L2)?,
                PermChoice::Natural => mask_tensor(&d, p, vec![0; c2.div_ceil(p) * c0.div_ceil(p)])?,
                PermChoice::Random => mask_tensor(&d, p, random_perms(c2.div_ceil(p), c0.div_ceil(p), p, seed)?)?,
            };
            let info = CompressedLayer {
                layer: 0,
                block: p,
                residual: proj.residual,
                retained_energy_fraction: fraction(proj.retained_energy, proj.total_energy),
            };
            let conv = ConvLayer {
                filter: proj.weights,
                bias: cv.bias.clone(),
                width: cv.width,
                height: cv.height,
                activation: cv.activation,
            };
            (Layer::Conv(conv), info, c2 * c0 * kh * kw)
        }
    })
}

fn encoding(choice: WeightChoice, tag_bits: u32, seed: u64) -> Encoding {
    let spec = FixedPointSpec::default();
    match choice {
        WeightChoice::Real => Encoding::Real32,
        WeightChoice::Fixed => Encoding::Fixed16(spec),
        WeightChoice::Tagged => Encoding::Tagged { tag_bits, spec, seed },
    }
}

fn bits_of(choice: WeightChoice, tag_bits: u32) -> u32 {
    match choice {
        WeightChoice::Real => 32,
        WeightChoice::Fixed => 16,
        WeightChoice::Tagged => tag_bits,
    }
}

fn load_data(a: &DataArgs) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let all: Dataset<f64> = match a.dataset {
        DatasetChoice::Blobs => gaussian_blobs(a.samples, a.dim, a.classes, 0.6, a.data_seed),
        DatasetChoice::Separable => linearly_separable(a.samples, a.dim, 0.1, a.data_seed),
        DatasetChoice::Patterns => pattern_images(a.samples, a.dim, a.classes, 0.3, a.data_seed),
        DatasetChoice::Mnist => {
            let (Some(images), Some(labels)) = (&a.images, &a.labels) else {
                return Err(CliError::Usage("--dataset mnist needs --images and --labels".into()));
            };
            load_idx_subset(images, labels, a.samples)
                .map_err(|source| CliError::Io { path: images.clone(), source })?
                .ok_or_else(|| CliError::Usage("MNIST files not found".into()))?
        }
    };
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(CliError::Usage("--holdout must lie in [0, 1)".into()));
    }
    let n_train = all.len() - (all.len() as f64 * a.holdout).round() as usize;
    if n_train == 0 || n_train == all.len() {
        return Err(CliError::Usage("not enough samples for a train/test split".into()));
    }
    Ok(all.split_at(n_train))
}

#[derive(Serialize)]
struct TrainReport {
    epochs: Vec<permdnn_core::EpochMetrics>,
    test: permdnn_core::EpochMetrics,
    compression: permdnn_core::CompressionStats,
}

fn model_shapes(model: &Model<f64>) -> Vec<LayerShape> {
    model
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            Layer::Fc(f) => LayerShape::fc(format!("fc{i}"), f.weights.rows(), f.weights.cols(), f.weights.block()),
            Layer::Conv(c) => {
                let t = &c.filter;
                LayerShape::conv(format!("conv{i}"), t.out_channels(), t.in_channels(), t.kernel_size(), t.block())
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress { input, output, block_size, perm, seed, weights, tag_bits, format } => {
            let model = load_dense_model(&input)?;
            let blocks = per_layer(&block_size, model.layers().len())?;
            let mut layers = Vec::new();
            let mut infos = Vec::new();
            for (i, (l, &p)) in model.layers().iter().zip(&blocks).enumerate() {
                let (nl, mut info, _) = compress_layer(l, p, perm, seed.wrapping_add(i as u64))?;
                info.layer = i;
                layers.push(nl);
                infos.push(info);
            }
            let compressed = Model::new(layers)?;
            ModelFile::from_model(&compressed, encoding(weights, tag_bits, seed))?.store(&output)?;
            let stats = compression_stats(&model_shapes(&compressed), bits_of(weights, tag_bits));
            let text = match format {
                Format::Json => json(&(infos, stats)),
                Format::Csv => emit_compression("model", &stats, Format::Csv),
                Format::Human => {
                    let mut s = String::new();
                    for i in &infos {
                        s += &format!(
                            "layer {}: p={} residual {:.6}, {:.2}% of weight energy kept\n",
                            i.layer,
                            i.block,
                            i.residual,
                            100.0 * i.retained_energy_fraction
                        );
                    }
                    s + &emit_compression("model", &stats, Format::Human)
                }
            };
            write_out(None, &text)
        }
        Command::Train { hidden, blocks, data, train: targs, output, format } => {
            let (train_set, test_set) = load_data(&data)?;
            let mut dims = vec![train_set.dim()];
            dims.extend(hidden.iter().copied());
            dims.push(train_set.classes());
            let blocks = per_layer(&blocks, dims.len() - 1)?;
            let cfg = targs.config();
            let mut model = Model::mlp(&dims, &blocks, &cfg)?;
            let epochs = train(&mut model, &train_set, &cfg)?;
            let test = evaluate(&model, &test_set, cfg.loss)?;
            if let Some(p) = &output {
                ModelFile::from_model(&model, Encoding::Real32)?.store(p)?;
            }
            let report = TrainReport { epochs, test, compression: compression_stats(&model_shapes(&model), 32) };
            write_out(None, &render_train(&report, format))
        }
        Command::Convert { input, blocks, data, train: targs, output, format } => {
            let dense = ModelFile::load(&input)?.to_model()?;
            let blocks = per_layer(&blocks, dense.layers().len())?;
            let (train_set, test_set) = load_data(&data)?;
            let cfg = targs.config();
            let conv = convert_pretrained(&dense, &blocks, &cfg, &train_set, &test_set)?;
            if let Some(p) = &output {
                ModelFile::from_model(&conv.model, Encoding::Real32)?.store(p)?;
            }
            #[derive(Serialize)]
            struct ConvertReport<'a> {
                residuals: &'a [f64],
                dense: &'a permdnn_core::EpochMetrics,
                projected: &'a permdnn_core::EpochMetrics,
                fine_tuned: &'a permdnn_core::EpochMetrics,
                fine_tune_epochs: usize,
            }
            let r = ConvertReport {
                residuals: &conv.residuals,
                dense: &conv.dense,
                projected: &conv.projected,
                fine_tuned: &conv.fine_tuned,
                fine_tune_epochs: conv.trace.len(),
            };
            let text = match format {
                Format::Json | Format::Csv => json(&r),
                Format::Human => format!(
                    "dense accuracy      {:.4}\nprojected accuracy  {:.4}\nfine-tuned accuracy {:.4} after {} epoch(s)\nresiduals           {:?}\n",
                    r.dense.accuracy, r.projected.accuracy, r.fine_tuned.accuracy, r.fine_tune_epochs, r.residuals
                ),
            };
            write_out(None, &text)
        }
        Command::Simulate { preset, model, layer, pes, numeric, config, seed, density, format, timing, output } => {
            let cfg = load_config(config.as_deref(), pes)?;
            let flags = RunFlags {
                numeric: match numeric {
                    NumericChoice::Fixed => Numeric::Fixed,
                    NumericChoice::Real => Numeric::Real,
                },
                seed,
                density,
                timing,
                ..RunFlags::default()
            };
            let file;
            let source = match (&preset, &model) {
                (Some(name), _) => Source::Preset(name),
                (None, Some(path)) => {
                    file = ModelFile::load(path)?;
                    let name = format!("{}#{layer}", path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()));
                    Source::Model { file: &file, layer, name }
                }
                (None, None) => return Err(CliError::Usage("give --preset or --model".into())),
            };
            let report = run_workload(source, &cfg, &flags)?;
            write_out(output.as_deref(), &emit_run(&report, format))
        }
        Command::Sweep { preset, pes, config, seed, format, output } => {
            let cfg = load_config(config.as_deref(), None)?;
            let rows = run_sweep(&preset, &pes.0, &cfg, seed)?;
            write_out(output.as_deref(), &emit_sweep(&rows, format))
        }
        Command::Report { kind } => match kind {
            ReportKind::Compression { network: name, bits, format } => {
                let layers = network(&name).ok_or_else(|| CliError::UnknownPreset(name.clone()))?;
                if bits == 0 || bits > 32 {
                    return Err(CliError::Usage("--bits must be between 1 and 32".into()));
                }
                write_out(None, &emit_compression(&name, &compression_stats(&layers, bits), format))
            }
            ReportKind::Throughput { config, weight_factor, activation_factor, format } => {
                let cfg = load_config(config.as_deref(), None)?;
                let t = throughput_model(&cfg.engine, weight_factor, activation_factor)?;
                let text = match format {
                    Format::Json => json(&t),
                    Format::Csv => format!("raw_gops,equivalent_tops\n{},{}\n", t.raw_gops, t.equivalent_tops),
                    Format::Human => format!(
                        "{} PEs x {} multipliers at {:.2} GHz: {:.1} GOPS raw, {:.3} TOPS equivalent\n",
                        cfg.engine.n_pe,
                        cfg.engine.n_mul,
                        cfg.engine.clock_hz / 1e9,
                        t.raw_gops,
                        t.equivalent_tops
                    ),
                };
                write_out(None, &text)
            }
            ReportKind::Presets { format } => {
                let text = match format {
                    Format::Json => json(&PRESETS.iter().map(|p| p.workload()).collect::<Vec<_>>()),
                    _ => {
                        let mut s = String::from("name,rows,cols,block,activation_density\n");
                        for p in PRESETS {
                            s += &format!("{},{},{},{},{}\n", p.name, p.rows, p.cols, p.block, p.activation_density);
                        }
                        s
                    }
                };
                write_out(None, &text)
            }
        },
    }
}

fn render_train(r: &TrainReport, format: Format) -> String {
    match format {
        Format::Json => json(r),
        Format::Csv => {
            let mut s = String::from("epoch,loss,accuracy\n");
            for (i, m) in r.epochs.iter().enumerate() {
                s += &format!("{},{},{}\n", i + 1, m.loss, m.accuracy);
            }
            s
        }
        Format::Human => {
            let mut s = String::new();
            for (i, m) in r.epochs.iter().enumerate() {
                s += &format!("epoch {:>3}  loss {:.5}  train accuracy {:.4}\n", i + 1, m.loss, m.accuracy);
            }
            s += &format!("test loss {:.5}, accuracy {:.4}\n", r.test.loss, r.test.accuracy);
            s += &format!(
                "{} weights stored of {} dense ({:.1}x)\n",
                r.compression.stored_params(),
                r.compression.layers.iter().map(|l| l.dense_params).sum::<u64>(),
                r.compression.ratio
            );
            s
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
