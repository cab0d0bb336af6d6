//! Steady-state throughput and PE-count scaling.

use permdnn_core::{Activation, FixedPointSpec};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::engine::simulate_layer;
use crate::error::{Result, SimError};
use crate::layout::{plan_layout, WeightPayload};
use crate::schedule::ScheduleCase;
use crate::workload::{synthesize_tagged, synthetic_activations, LayerWorkload};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub raw_gops: f64,
    /// Dense-equivalent throughput after crediting skipped work.
    pub equivalent_tops: f64,
}

/// Peak multiply-accumulate rate (two operations per MAC) scaled by the
/// work avoided through weight and activation sparsity.
pub fn throughput_model(cfg: &EngineConfig, weight_factor: f64, activation_factor: f64) -> Result<Throughput> {
    cfg.validate()?;
    if !(weight_factor >= 1.0 && activation_factor >= 1.0) {
        return Err(SimError::Config(format!(
            "sparsity factors must be at least 1 (got {weight_factor}, {activation_factor})"
        )));
    }
    let raw = (cfg.n_pe * cfg.n_mul * 2) as f64 * cfg.clock_hz;
    Ok(Throughput {
        raw_gops: raw / 1e9,
        equivalent_tops: raw * weight_factor * activation_factor / 1e12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_pe: usize,
    pub case: ScheduleCase,
    pub groups: usize,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    /// Relative to the first (smallest) PE count.
    pub speedup: f64,
    pub ideal_speedup: f64,
    /// Flagged when speedup falls below 90% of ideal.
    pub sub_linear: bool,
}

/// Below this fraction of linear speedup a row is flagged.
pub const SUB_LINEAR_THRESHOLD: f64 = 0.9;

/// Simulates `w` with synthetic 4-bit weights and an input at the workload's
/// activation density for each PE count, sorted ascending.
pub fn scalability_sweep(
    w: &LayerWorkload,
    pe_counts: &[usize],
    template: &EngineConfig,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    if pe_counts.is_empty() {
        return Err(SimError::Config("no PE counts to sweep".into()));
    }
    let mut counts = pe_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let (matrix, book) = synthesize_tagged(w, seed)?;
    let x = synthetic_activations(w.cols, w.activation_density, seed.wrapping_add(1));
    let spec = FixedPointSpec::default();
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(counts.len());
    for &n_pe in &counts {
        let cfg = EngineConfig {
            n_pe,
            ..template.clone()
        };
        let image = plan_layout(&matrix, WeightPayload::Tagged(&book, spec), &cfg)?;
        let (_, report) = simulate_layer(&image, &x, &cfg, Activation::Identity)?;
        let (base_pe, base_cycles) = rows
            .first()
            .map_or((n_pe, report.total_cycles), |r| (r.n_pe, r.total_cycles));
        let speedup = base_cycles as f64 / report.total_cycles as f64;
        let ideal = n_pe as f64 / base_pe as f64;
        rows.push(ScalingRow {
            n_pe,
            case: report.case,
            groups: report.groups,
            total_cycles: report.total_cycles,
            compute_cycles: report.compute_cycles,
            speedup,
            ideal_speedup: ideal,
            sub_linear: speedup < SUB_LINEAR_THRESHOLD * ideal,
        });
    }
    Ok(rows)
}
