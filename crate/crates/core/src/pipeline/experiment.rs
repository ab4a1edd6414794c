use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::CorpusItem;
use super::{
    receive, report_for, run_block, single_resolution_map, transmit, transmit_map, PipelineConfig,
    PipelineError, TransmissionReport,
};
use crate::allocator::Budget;
use crate::channel::RateTrace;

/// Histogram columns in the CSV report.
pub const REPORT_LEVELS: usize = 5;
pub const CSV_HEADER: &str =
    "index,r,bytes_used,level0,level1,level2,level3,level4,mse,psnr,wmse,q_bytes";
pub const SWEEP_CSV_HEADER: &str =
    "index,fraction,r,level0,level1,level2,level3,level4,mean_level,wmse";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// One row per successfully transmitted image, ordered by input index.
    pub rows: Vec<TransmissionReport>,
    pub failures: Vec<Failure>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Report(e.to_string()))
}

/// Sends image `i` in block `i` of `trace` (cycled) and collects reports.
pub fn run_experiment(
    items: &[CorpusItem],
    trace: &RateTrace,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<ExperimentReport, PipelineError> {
    let results: Vec<_> = pool(jobs)?.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let r = trace.cycled(i) as u64;
                run_block(i, &item.image, &item.grid, r, config)
                    .map(|(report, _)| report)
                    .map_err(|e| Failure {
                        index: i,
                        name: item.name.clone(),
                        error: e.to_string(),
                    })
            })
            .collect()
    });
    let mut report = ExperimentReport::default();
    for res in results {
        match res {
            Ok(row) => report.rows.push(row),
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub fraction: f64,
    pub r: u64,
    pub histogram: Vec<usize>,
    pub mean_level: f64,
    pub wmse: f64,
}

/// Transmits one image at `floor(fraction * top_bytes * P)` for each fraction.
pub fn rate_sweep(
    index: usize,
    item: &CorpusItem,
    fractions: &[f64],
    config: &PipelineConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let full = config.table.top_bytes() as f64 * item.grid.len() as f64;
    fractions
        .iter()
        .map(|&fraction| {
            let r = (fraction * full).floor() as u64;
            let frame = transmit(&item.image, &item.grid, r, config)?;
            let rx = receive(&frame, Some((&item.image, &item.grid)))?;
            Ok(SweepRow {
                index,
                fraction,
                r,
                histogram: rx.map.histogram(&rx.table),
                mean_level: rx.map.mean_level(),
                wmse: rx.metrics.expect("side info supplied").wmse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub index: usize,
    pub r: u64,
    pub single_level: u8,
    pub multi: TransmissionReport,
    pub single: TransmissionReport,
}

/// Multi-resolution allocation against sending the top patches at one fixed
/// level, both under the same block budget `r`.
pub fn compare_single_vs_multi(
    index: usize,
    item: &CorpusItem,
    r: u64,
    single_level: u8,
    config: &PipelineConfig,
) -> Result<ComparisonRow, PipelineError> {
    let (multi, _) = run_block(index, &item.image, &item.grid, r, config)?;
    let budget: Budget = config.payload_budget(r, item.grid.len());
    let map = single_resolution_map(&item.grid, budget, single_level, &config.table)?;
    let frame = transmit_map(&item.image, &map, config)?;
    let rx = receive(&frame, Some((&item.image, &item.grid)))?;
    let single = report_for(index, r, &item.image, &rx, config);
    Ok(ComparisonRow {
        index,
        r,
        single_level,
        multi,
        single,
    })
}

fn histogram_cells(h: &[usize]) -> Result<Vec<String>, PipelineError> {
    if h.len() > REPORT_LEVELS {
        return Err(PipelineError::Report(format!(
            "CSV reports hold at most {REPORT_LEVELS} levels, table has {}",
            h.len()
        )));
    }
    Ok((0..REPORT_LEVELS)
        .map(|l| h.get(l).copied().unwrap_or(0).to_string())
        .collect())
}

fn csv_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Report(e.to_string())
}

pub fn write_csv<W: Write>(out: W, rows: &[TransmissionReport]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![
            row.index.to_string(),
            row.r.to_string(),
            row.bytes_used.to_string(),
        ];
        rec.extend(histogram_cells(&row.histogram)?);
        rec.push(row.mse.to_string());
        rec.push(
            row.psnr
                .map_or_else(|| "inf".to_string(), |p| p.to_string()),
        );
        rec.push(row.wmse.to_string());
        rec.push(row.q_bytes.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// One JSON object per row; `psnr` is `null` for exact reconstructions.
pub fn write_jsonl<W: Write>(mut out: W, rows: &[TransmissionReport]) -> Result<(), PipelineError> {
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(csv_err)?;
        out.write_all(b"\n").map_err(csv_err)?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))
        .map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![
            row.index.to_string(),
            row.fraction.to_string(),
            row.r.to_string(),
        ];
        rec.extend(histogram_cells(&row.histogram)?);
        rec.push(row.mean_level.to_string());
        rec.push(row.wmse.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}
