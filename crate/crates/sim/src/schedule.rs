//! Mapping of a layer onto the PE array.
//!
//! Block rows are dealt round-robin to the PEs of a group, so with `q` PEs
//! per group a PE owns `ceil(block_rows / q)` block rows (the last ones may
//! be padding). Each input column then has exactly one nonzero per owned
//! block row.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleCase {
    /// One column is fully processed before the next.
    Case1,
    /// Too few accumulators: rows are covered over several passes of the
    /// input.
    Case2,
    /// Too few rows per PE to occupy the multipliers: PE groups take
    /// different columns at the same time.
    Case3,
}

impl ScheduleCase {
    pub fn number(self) -> u8 {
        match self {
            ScheduleCase::Case1 => 1,
            ScheduleCase::Case2 => 2,
            ScheduleCase::Case3 => 3,
        }
    }
}

/// A contiguous range of each PE's local block rows processed against the
/// whole input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pass {
    pub first_block: usize,
    pub blocks: usize,
    pub cycles_per_column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub case: ScheduleCase,
    /// Rows per PE with the whole array working on one column.
    pub n_rowpe: usize,
    pub groups: usize,
    pub pes_per_group: usize,
    /// Block rows owned by each PE within its group.
    pub blocks_per_pe: usize,
    pub passes: Vec<Pass>,
    /// Sum of the passes' cycles per column.
    pub cycles_per_column: usize,
}

impl Schedule {
    pub fn rows_per_pe(&self, block: usize) -> usize {
        self.blocks_per_pe * block
    }

    /// Accumulator-merge cycles needed to combine the groups' partial sums.
    pub fn merge_cycles(&self, block: usize, n_mul: usize) -> usize {
        (self.groups - 1) * self.rows_per_pe(block).div_ceil(n_mul)
    }
}

fn plan_passes(blocks_per_pe: usize, p: usize, cfg: &EngineConfig) -> Result<Vec<Pass>> {
    if cfg.n_acc < p {
        return Err(SimError::Config(format!(
            "{} accumulators cannot hold one {p}-row block",
            cfg.n_acc
        )));
    }
    let per_pass = if blocks_per_pe * p <= cfg.n_acc {
        blocks_per_pe
    } else {
        let f = cfg.n_acc / (p * cfg.n_mul);
        if f >= 1 {
            f * cfg.n_mul
        } else {
            cfg.n_acc / p
        }
    };
    let mut passes = Vec::new();
    let mut first = 0;
    while first < blocks_per_pe {
        let blocks = per_pass.min(blocks_per_pe - first);
        passes.push(Pass {
            first_block: first,
            blocks,
            cycles_per_column: blocks.div_ceil(cfg.n_mul),
        });
        first += blocks;
    }
    Ok(passes)
}

fn grouped(block_rows: usize, p: usize, groups: usize, cfg: &EngineConfig) -> Result<Schedule> {
    let q = cfg.n_pe / groups;
    let blocks_per_pe = block_rows.div_ceil(q);
    let passes = plan_passes(blocks_per_pe, p, cfg)?;
    Ok(Schedule {
        case: ScheduleCase::Case1,
        n_rowpe: 0,
        groups,
        pes_per_group: q,
        blocks_per_pe,
        cycles_per_column: passes.iter().map(|s| s.cycles_per_column).sum(),
        passes,
    })
}

/// Cycles for a fully dense input under `s`, ignoring stream stalls.
fn dense_estimate(s: &Schedule, cols: usize, p: usize, cfg: &EngineConfig) -> usize {
    cols.div_ceil(s.groups) * s.cycles_per_column
        + s.passes.len() * cfg.pipeline_stages
        + s.merge_cycles(p, cfg.n_mul)
}

/// Chooses the processing scheme for a `rows x cols` layer with block `p`.
pub fn select_schedule(cfg: &EngineConfig, rows: usize, cols: usize, p: usize) -> Result<Schedule> {
    cfg.validate()?;
    if rows == 0 || cols == 0 || p == 0 {
        return Err(SimError::Workload(format!(
            "cannot schedule a {rows}x{cols} layer with block {p}"
        )));
    }
    let block_rows = rows.div_ceil(p);
    let base = grouped(block_rows, p, 1, cfg)?;
    let n_rowpe = base.rows_per_pe(p);
    let case = if n_rowpe < p * cfg.n_mul {
        ScheduleCase::Case3
    } else if cfg.n_acc >= n_rowpe {
        ScheduleCase::Case1
    } else {
        ScheduleCase::Case2
    };
    let mut best = base;
    if case == ScheduleCase::Case3 {
        // Any divisor of the PE count works as a group count, as long as a
        // group still covers its rows in a single pass. The producer can
        // hand out at most one scan chunk of columns per cycle.
        let mut best_cost = dense_estimate(&best, cols, p, cfg);
        for g in 2..=cfg.n_pe.min(cfg.activations_per_cycle()) {
            if !cfg.n_pe.is_multiple_of(g) {
                continue;
            }
            let cand = grouped(block_rows, p, g, cfg)?;
            if cand.passes.len() > 1 {
                continue;
            }
            let cost = dense_estimate(&cand, cols, p, cfg);
            if cost < best_cost {
                best = cand;
                best_cost = cost;
            }
        }
    }
    best.case = case;
    best.n_rowpe = n_rowpe;
    Ok(best)
}
