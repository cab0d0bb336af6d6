//! Column-wise, zero-skipping execution of one layer on the PE array.

use permdnn_core::Activation;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Result, SimError};
use crate::layout::{AccumulationSelector, SramImage, Weight, WeightEncoding};
use crate::schedule::ScheduleCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub case: ScheduleCase,
    pub groups: usize,
    pub passes: usize,
    pub cycles_per_column: usize,
    pub total_cycles: u64,
    /// Cycles in which the PE array processes a column.
    pub compute_cycles: u64,
    pub pipeline_fill: u64,
    /// Cycles in which the array waits on the activation stream.
    pub stall_cycles: u64,
    pub merge_cycles: u64,
    pub writeback_cycles: u64,
    pub columns_processed: usize,
    pub columns_skipped: usize,
    /// Multiplier slots issued per PE, including padding entries and
    /// lockstep bubbles.
    pub per_pe_macs: Vec<u64>,
    /// Products that land in a real output row.
    pub useful_macs: u64,
    /// `useful_macs` over the multiplier capacity of the compute cycles.
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    /// Output values; for fixed-point runs these are the dequantized codes.
    pub values: Vec<f64>,
    pub codes: Option<Vec<i32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct StreamTiming {
    elapsed: u64,
    busy: u64,
}

/// Cycle-stepped producer/consumer model of one pass over the input.
///
/// Each cycle the zero detector either scans one bank row of activations
/// (when it has no pending nonzeros) and the producer pushes up to `rate`
/// pending nonzeros into the FIFO. The PE array pops a round of
/// `min(groups, remaining)` columns whenever it is idle and the FIFO holds
/// that many, then stays busy for `cpc` cycles.
fn stream_pass(
    nonzero: &[bool],
    scan_width: usize,
    rate: usize,
    depth: usize,
    groups: usize,
    cpc: usize,
) -> StreamTiming {
    let nnz = nonzero.iter().filter(|&&v| v).count();
    let (mut scan_pos, mut pending, mut fifo) = (0usize, 0usize, 0usize);
    let (mut consumed, mut busy_left) = (0usize, 0usize);
    let mut t = StreamTiming::default();
    loop {
        let done = consumed == nnz && busy_left == 0;
        if done && scan_pos >= nonzero.len() && pending == 0 {
            break;
        }
        t.elapsed += 1;
        if busy_left > 0 {
            busy_left -= 1;
            t.busy += 1;
        } else if consumed < nnz {
            let need = groups.min(nnz - consumed);
            if fifo >= need {
                fifo -= need;
                consumed += need;
                busy_left = cpc - 1;
                t.busy += 1;
            }
        }
        let push = rate.min(pending).min(depth - fifo);
        fifo += push;
        pending -= push;
        if pending == 0 && scan_pos < nonzero.len() {
            let end = (scan_pos + scan_width).min(nonzero.len());
            pending = nonzero[scan_pos..end].iter().filter(|&&v| v).count();
            scan_pos = end;
        }
    }
    t
}

enum Acc {
    Real(Vec<Vec<f64>>),
    Fixed(Vec<Vec<i64>>),
}

/// Runs `x` through the layer stored in `image`, applying `act` to the
/// accumulated sums.
pub fn simulate_layer(
    image: &SramImage,
    x: &[f64],
    cfg: &EngineConfig,
    act: Activation,
) -> Result<(LayerOutput, CycleReport)> {
    cfg.validate()?;
    if (image.n_pe, image.n_mul, image.n_acc) != (cfg.n_pe, cfg.n_mul, cfg.n_acc) {
        return Err(SimError::Inconsistent(format!(
            "image planned for {} PEs x {} multipliers / {} accumulators, engine has {} x {} / {}",
            image.n_pe, image.n_mul, image.n_acc, cfg.n_pe, cfg.n_mul, cfg.n_acc
        )));
    }
    if x.len() != image.cols {
        return Err(SimError::Inconsistent(format!(
            "input has {} entries, layer has {} columns",
            x.len(),
            image.cols
        )));
    }
    let s = &image.schedule;
    let p = image.block;
    let spec = image.encoding.spec();
    let x_codes: Option<Vec<i32>> = spec.map(|sp| sp.quantize_slice(x));
    let cols_pad = image.cols_pad();
    let nonzero: Vec<bool> = (0..cols_pad)
        .map(|j| {
            j < image.cols
                && match &x_codes {
                    Some(c) => c[j] != 0,
                    None => x[j] != 0.0,
                }
        })
        .collect();
    let order: Vec<usize> = (0..cols_pad).filter(|&j| nonzero[j]).collect();

    let rows_pad = s.blocks_per_pe * s.pes_per_group * p;
    let mut acc = match &image.encoding {
        WeightEncoding::Real32 => Acc::Real(vec![vec![0.0; rows_pad]; s.groups]),
        _ => Acc::Fixed(vec![vec![0i64; rows_pad]; s.groups]),
    };
    let selector = AccumulationSelector { block: p };
    let mut per_pe_macs = vec![0u64; image.n_pe];
    let mut useful = 0u64;
    let mut compute = 0u64;
    let mut stall = 0u64;
    let rate = s.groups.min(cfg.activations_per_cycle());

    for pass in &s.passes {
        let timing = stream_pass(
            &nonzero,
            cfg.activations_per_cycle(),
            rate,
            cfg.fifo_depth,
            s.groups,
            pass.cycles_per_column,
        );
        compute += timing.busy;
        stall += timing.elapsed - timing.busy;
        for round in order.chunks(s.groups) {
            for pe in 0..image.n_pe {
                let grp = image.group_of(pe);
                let Some(&j) = round.get(grp) else {
                    // Idle group in a ragged final round still steps in lockstep.
                    per_pe_macs[pe] += pass.blocks as u64;
                    continue;
                };
                let (g, d) = (j / p, j % p);
                for b in pass.first_block..pass.first_block + pass.blocks {
                    per_pe_macs[pe] += 1;
                    let br = image.block_row(pe, b);
                    let i = br * p + selector.route(image.perm_entry(pe, g, b), d);
                    if i < image.rows {
                        useful += 1;
                    }
                    match (&mut acc, image.weight_entry(pe, j, b)) {
                        (Acc::Real(a), Weight::Real(w)) => a[grp][i] += w * x[j],
                        (Acc::Fixed(a), Weight::Code(w)) => {
                            let sp = spec.expect("fixed encoding has a format");
                            a[grp][i] += sp.product(w, x_codes.as_ref().unwrap()[j]);
                        }
                        _ => unreachable!("encoding decides both accumulator and entry kind"),
                    }
                }
            }
        }
    }

    let output = match acc {
        Acc::Real(a) => {
            let values = (0..image.rows)
                .map(|i| {
                    let mut sum = a[0][i];
                    for part in &a[1..] {
                        sum += part[i];
                    }
                    act.apply(sum)
                })
                .collect();
            LayerOutput {
                values,
                codes: None,
            }
        }
        Acc::Fixed(a) => {
            let sp = spec.unwrap();
            let codes: Vec<i32> = (0..image.rows)
                .map(|i| sp.readout(a.iter().map(|part| part[i]).sum(), act))
                .collect();
            LayerOutput {
                values: codes.iter().map(|&c| sp.dequantize(c as i64)).collect(),
                codes: Some(codes),
            }
        }
    };

    let pipeline_fill = (s.passes.len() * cfg.pipeline_stages) as u64;
    let merge = s.merge_cycles(p, cfg.n_mul) as u64;
    let writeback = image.rows.div_ceil(cfg.activations_per_cycle()) as u64;
    let capacity = (image.n_pe * cfg.n_mul) as f64 * compute as f64;
    let report = CycleReport {
        case: s.case,
        groups: s.groups,
        passes: s.passes.len(),
        cycles_per_column: s.cycles_per_column,
        total_cycles: compute + stall + pipeline_fill + merge + writeback,
        compute_cycles: compute,
        pipeline_fill,
        stall_cycles: stall,
        merge_cycles: merge,
        writeback_cycles: writeback,
        columns_processed: order.len(),
        columns_skipped: cols_pad - order.len(),
        per_pe_macs,
        useful_macs: useful,
        utilization: if capacity > 0.0 { useful as f64 / capacity } else { 0.0 },
    };
    Ok((output, report))
}
