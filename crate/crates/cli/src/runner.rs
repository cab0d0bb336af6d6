//! Experiment execution and report records.

use std::time::Instant;

use permdnn_core::stats::compression_stats_with_baseline;
use permdnn_core::{Activation, BpdMatrix, CompressionStats, FixedPointSpec, LayerShape};
use permdnn_sim::{
    plan_layout, scalability_sweep, simulate_layer, synthesize_tagged, synthetic_activations,
    throughput_model, CycleReport, LayerWorkload, ScalingRow, SimError, Throughput, WeightPayload,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_file::{config_digest, RunConfig};
use crate::model_file::{LayerKind, ModelFile, ModelFileError, Payload};
use crate::presets::preset;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Numeric {
    Fixed,
    Real,
}

/// Where the simulated layer comes from.
pub enum Source<'a> {
    Preset(&'a str),
    Model { file: &'a ModelFile, layer: usize, name: String },
}

#[derive(Debug, Clone)]
pub struct RunFlags {
    pub numeric: Numeric,
    pub seed: u64,
    /// Overrides the workload's activation density.
    pub density: Option<f64>,
    pub activation: Activation,
    pub timing: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        RunFlags {
            numeric: Numeric::Fixed,
            seed: 0,
            density: None,
            activation: Activation::Relu,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub workload: LayerWorkload,
    pub config_digest: String,
    pub n_pe: usize,
    pub numeric: Numeric,
    pub seed: u64,
    pub bits_per_weight: u32,
    pub cycles: CycleReport,
    pub latency_us: f64,
    pub compression: CompressionStats,
    pub throughput: Throughput,
    /// Only present when timing was requested, so that reports stay
    /// reproducible byte for byte otherwise.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_ms: Option<f64>,
}

fn weight_factor_and_payload<'a>(
    payload: &'a Payload,
    numeric: Numeric,
) -> Result<(WeightPayload<'a>, u32), RunError> {
    Ok(match (numeric, payload) {
        (Numeric::Real, _) => (WeightPayload::Real32, 32),
        (Numeric::Fixed, Payload::Tagged { spec, codebook }) => {
            (WeightPayload::Tagged(codebook, *spec), codebook.tag_bits)
        }
        (Numeric::Fixed, Payload::Fixed16 { spec, .. }) => (WeightPayload::Fixed(*spec), spec.total_bits),
        (Numeric::Fixed, Payload::Real32(_)) => {
            let spec = FixedPointSpec::default();
            (WeightPayload::Fixed(spec), spec.total_bits)
        }
    })
}

pub fn run_workload(source: Source<'_>, cfg: &RunConfig, flags: &RunFlags) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let (workload, matrix, payload) = match source {
        Source::Preset(name) => {
            let p = preset(name).ok_or_else(|| RunError::UnknownPreset(name.to_string()))?;
            let w = p.workload();
            let (m, book) = synthesize_tagged(&w, flags.seed)?;
            let spec = FixedPointSpec::default();
            let book = permdnn_core::Codebook::from_parts(cfg.tag_bits.max(4), book.centroids, book.tags)
                .map_err(|e| RunError::Invalid(e.to_string()))?;
            (w, m, Payload::Tagged { spec, codebook: book })
        }
        Source::Model { file, layer, name } => {
            let rec = file.layers.get(layer).ok_or_else(|| {
                RunError::Invalid(format!("model has {} layers, asked for layer {layer}", file.layers.len()))
            })?;
            if rec.kind != LayerKind::Fc {
                return Err(RunError::Invalid(format!(
                    "layer {layer} is a convolution; the engine runs fully connected layers"
                )));
            }
            let w = LayerWorkload::new(name, rec.rows, rec.cols, rec.block, 1.0)?;
            (w, rec.matrix()?, rec.payload.clone())
        }
    };
    let mut workload = workload;
    if let Some(d) = flags.density {
        workload.activation_density = d;
        workload.validate()?;
    }
    let (wp, bits) = weight_factor_and_payload(&payload, flags.numeric)?;
    simulate(workload, &matrix, wp, bits, cfg, flags, start)
}

fn simulate(
    workload: LayerWorkload,
    matrix: &BpdMatrix<f64>,
    payload: WeightPayload<'_>,
    bits: u32,
    cfg: &RunConfig,
    flags: &RunFlags,
    start: Instant,
) -> Result<RunReport, RunError> {
    let engine = &cfg.engine;
    let image = plan_layout(matrix, payload, engine)?;
    let x = synthetic_activations(workload.cols, workload.activation_density, flags.seed.wrapping_add(1));
    let (_, cycles) = simulate_layer(&image, &x, engine, flags.activation)?;
    let shape = LayerShape::fc(workload.name.clone(), workload.rows, workload.cols, workload.block);
    let act_factor = if workload.activation_density > 0.0 {
        1.0 / workload.activation_density
    } else {
        1.0
    };
    let throughput = throughput_model(engine, workload.block as f64, act_factor)?;
    Ok(RunReport {
        config_digest: config_digest(cfg),
        n_pe: engine.n_pe,
        numeric: flags.numeric,
        seed: flags.seed,
        bits_per_weight: bits,
        latency_us: cycles.total_cycles as f64 / engine.clock_hz * 1e6,
        // Same width on both sides, so the ratio is the parameter ratio.
        compression: compression_stats_with_baseline(&[shape], bits, bits),
        throughput,
        cycles,
        workload,
        wall_clock_ms: flags.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

pub fn run_sweep(name: &str, pes: &[usize], cfg: &RunConfig, seed: u64) -> Result<Vec<ScalingRow>, RunError> {
    let p = preset(name).ok_or_else(|| RunError::UnknownPreset(name.to_string()))?;
    if pes.is_empty() {
        return Ok(Vec::new());
    }
    Ok(scalability_sweep(&p.workload(), pes, &cfg.engine, seed)?)
}
