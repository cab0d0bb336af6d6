//! Rendering of run reports and tables as human text, CSV or JSON.

use std::fmt::Write as _;

use permdnn_core::CompressionStats;
use permdnn_sim::ScalingRow;
use serde::Serialize;

use crate::runner::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Human,
    Csv,
    Json,
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub const RUN_COLUMNS: [&str; 22] = [
    "workload",
    "rows",
    "cols",
    "block",
    "activation_density",
    "n_pe",
    "numeric",
    "seed",
    "config_digest",
    "case",
    "groups",
    "passes",
    "cycles_per_column",
    "total_cycles",
    "compute_cycles",
    "stall_cycles",
    "pipeline_fill",
    "columns_processed",
    "columns_skipped",
    "utilization",
    "compressed_mb",
    "compression_ratio",
];

fn run_row(r: &RunReport) -> Vec<String> {
    let c = &r.cycles;
    vec![
        r.workload.name.clone(),
        r.workload.rows.to_string(),
        r.workload.cols.to_string(),
        r.workload.block.to_string(),
        r.workload.activation_density.to_string(),
        r.n_pe.to_string(),
        format!("{:?}", r.numeric).to_lowercase(),
        r.seed.to_string(),
        r.config_digest.clone(),
        c.case.number().to_string(),
        c.groups.to_string(),
        c.passes.to_string(),
        c.cycles_per_column.to_string(),
        c.total_cycles.to_string(),
        c.compute_cycles.to_string(),
        c.stall_cycles.to_string(),
        c.pipeline_fill.to_string(),
        c.columns_processed.to_string(),
        c.columns_skipped.to_string(),
        c.utilization.to_string(),
        r.compression.compressed_mb().to_string(),
        r.compression.ratio.to_string(),
    ]
}

pub fn emit_run(r: &RunReport, format: Format) -> String {
    match format {
        Format::Json => json(r),
        Format::Csv => csv_table(&RUN_COLUMNS, &[run_row(r)]),
        Format::Human => {
            let c = &r.cycles;
            let mut s = String::new();
            let w = &r.workload;
            writeln!(s, "workload        {} ({}x{}, p={}, activation density {})", w.name, w.rows, w.cols, w.block, w.activation_density).unwrap();
            writeln!(s, "engine          {} PEs, config {}, {} numerics, seed {}", r.n_pe, r.config_digest, format!("{:?}", r.numeric).to_lowercase(), r.seed).unwrap();
            writeln!(s, "schedule        case {}, {} group(s), {} pass(es), {} cycle(s)/column", c.case.number(), c.groups, c.passes, c.cycles_per_column).unwrap();
            writeln!(s, "cycles          {} total = {} compute + {} stall + {} fill + {} merge + {} write-back", c.total_cycles, c.compute_cycles, c.stall_cycles, c.pipeline_fill, c.merge_cycles, c.writeback_cycles).unwrap();
            writeln!(s, "columns         {} processed, {} skipped", c.columns_processed, c.columns_skipped).unwrap();
            writeln!(s, "MACs per PE     {}", c.per_pe_macs.first().copied().unwrap_or(0)).unwrap();
            writeln!(s, "utilization     {:.4}", c.utilization).unwrap();
            writeln!(s, "latency         {:.3} us", r.latency_us).unwrap();
            writeln!(s, "storage         {:.4} MB dense -> {:.4} MB at {} bits ({:.2}x)", r.compression.dense_mb(), r.compression.compressed_mb(), r.bits_per_weight, r.compression.ratio).unwrap();
            writeln!(s, "throughput      {:.1} GOPS raw, {:.3} TOPS equivalent", r.throughput.raw_gops, r.throughput.equivalent_tops).unwrap();
            if let Some(ms) = r.wall_clock_ms {
                writeln!(s, "wall clock      {ms:.1} ms").unwrap();
            }
            s
        }
    }
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "n_pe",
    "case",
    "groups",
    "total_cycles",
    "compute_cycles",
    "speedup",
    "ideal_speedup",
    "sub_linear",
];

pub fn emit_sweep(rows: &[ScalingRow], format: Format) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n_pe.to_string(),
                r.case.number().to_string(),
                r.groups.to_string(),
                r.total_cycles.to_string(),
                r.compute_cycles.to_string(),
                r.speedup.to_string(),
                r.ideal_speedup.to_string(),
                r.sub_linear.to_string(),
            ]
        })
        .collect();
    match format {
        Format::Json => json(&rows),
        Format::Csv => csv_table(&SWEEP_COLUMNS, &cells),
        Format::Human => {
            let mut s = format!(
                "{:>6} {:>4} {:>6} {:>12} {:>12} {:>8} {:>6}\n",
                "PEs", "case", "groups", "total", "compute", "speedup", "ideal"
            );
            for r in rows {
                writeln!(
                    s,
                    "{:>6} {:>4} {:>6} {:>12} {:>12} {:>8.3} {:>6.1}{}",
                    r.n_pe,
                    r.case.number(),
                    r.groups,
                    r.total_cycles,
                    r.compute_cycles,
                    r.speedup,
                    r.ideal_speedup,
                    if r.sub_linear { "  sub-linear" } else { "" }
                )
                .unwrap();
            }
            s
        }
    }
}

/// Parses a sweep table previously written with [`Format::Csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<Vec<String>>, csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect()
}

pub fn emit_compression(network: &str, stats: &CompressionStats, format: Format) -> String {
    match format {
        Format::Json => json(stats),
        Format::Csv => {
            let mut cells: Vec<Vec<String>> = stats
                .layers
                .iter()
                .map(|l| {
                    vec![
                        l.name.clone(),
                        l.rows.to_string(),
                        l.cols.to_string(),
                        l.block.to_string(),
                        l.dense_params.to_string(),
                        l.stored_params.to_string(),
                        (l.dense_bytes / 1e6).to_string(),
                        (l.compressed_bytes / 1e6).to_string(),
                        l.ratio.to_string(),
                    ]
                })
                .collect();
            cells.push(vec![
                "total".into(),
                String::new(),
                String::new(),
                String::new(),
                stats.layers.iter().map(|l| l.dense_params).sum::<u64>().to_string(),
                stats.stored_params().to_string(),
                stats.dense_mb().to_string(),
                stats.compressed_mb().to_string(),
                stats.ratio.to_string(),
            ]);
            csv_table(
                &["layer", "rows", "cols", "block", "dense_params", "stored_params", "dense_mb", "compressed_mb", "ratio"],
                &cells,
            )
        }
        Format::Human => {
            // One decimal for full-size networks, more for toy models.
            let prec = if stats.dense_mb() >= 10.0 { 1 } else { 4 };
            format!(
            "{network}: {} layers, {:.prec$}MB dense ({}-bit) -> {:.prec$}MB at {} bits ({:.1}x)\n",
            stats.layers.len(),
            stats.dense_mb(),
            stats.dense_bits,
            stats.compressed_mb(),
            stats.bits_per_weight,
            stats.ratio
        )
        }
    }
}
