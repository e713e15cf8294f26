//! Execution-time, %Faster, speedup and busy-core measurements.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use capx_core::{analyze_frame, CnnModel, Frame, PipelineConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{run_batch, BatchStats};
use crate::executor::{host_slots, EngineError, ExecutorConfig, ExecutorKind, DEFAULT_MAX_RETRIES};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("benchmark batch failed: {0}")]
    Failed(String),
}

/// Percentage by which `faster_et` improves on `slower_et`.
pub fn percent_faster(slower_et: f64, faster_et: f64) -> Result<f64, BenchError> {
    if !(slower_et > 0.0) || !slower_et.is_finite() {
        return Err(BenchError::Domain(format!(
            "slower execution time must be positive, got {slower_et}"
        )));
    }
    Ok(100.0 * (1.0 - faster_et / slower_et))
}

/// Time-weighted mean of the busy-worker step function over the batch's
/// active interval: idle samples before the first and after the last busy
/// sample are excluded.
pub fn cpu_usage_profile(stats: &BatchStats) -> f64 {
    let samples = &stats.busy_samples;
    let (Some(first), Some(last)) = (
        samples.iter().position(|s| s.busy > 0),
        samples.iter().rposition(|s| s.busy > 0),
    ) else {
        return 0.0;
    };
    let end = (last + 1).min(samples.len() - 1);
    let span = samples[end].t_ms - samples[first].t_ms;
    if span == 0 {
        return samples[first].busy as f64;
    }
    let weighted: f64 = samples[first..=end]
        .windows(2)
        .map(|w| w[0].busy as f64 * (w[1].t_ms - w[0].t_ms) as f64)
        .sum();
    weighted / span as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub executor: ExecutorKind,
    pub cores: usize,
    pub frames: usize,
    pub avg_et_s: f64,
    pub total_s: f64,
    pub busy_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FasterPair {
    pub cores: usize,
    pub baseline: ExecutorKind,
    pub candidate: ExecutorKind,
    pub baseline_et_s: f64,
    pub candidate_et_s: f64,
    pub percent_faster: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealtimeCheck {
    pub width: usize,
    pub height: usize,
    pub frame_s: f64,
    pub budget_s: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub host_slots: usize,
    pub slot_definition: String,
    pub frames: usize,
    pub rows: Vec<BenchRow>,
    pub percent_faster: Vec<FasterPair>,
    pub realtime: Option<RealtimeCheck>,
}

impl BenchReport {
    pub fn row(&self, executor: ExecutorKind, cores: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.executor == executor && (r.cores == cores || executor == ExecutorKind::Serial))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Slots the requested core counts are checked against.
    pub host_slots: usize,
    pub slot_definition: String,
    /// Run one discarded batch before measuring.
    pub warmup: bool,
    pub realtime_budget_s: f64,
    pub max_retries: u32,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            host_slots: host_slots(),
            slot_definition: "logical processors reported by the OS".into(),
            warmup: true,
            realtime_budget_s: 1.0,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

/// Frames in the discarded warm-up batch.
pub const WARMUP_FRAMES: usize = 4;

/// Measures every (executor, core count) point with `run`, which executes
/// one batch of `frames` frames. Serial is measured once, at one core.
pub fn speedup_curve_with(
    frames: usize,
    core_counts: &[usize],
    executors: &[ExecutorKind],
    options: &BenchOptions,
    mut run: impl FnMut(&ExecutorConfig, bool) -> Result<BatchStats, BenchError>,
) -> Result<BenchReport, BenchError> {
    if frames == 0 {
        return Err(BenchError::Config("at least one frame is required".into()));
    }
    if core_counts.is_empty() || executors.is_empty() {
        return Err(BenchError::Config("need at least one core count and one executor".into()));
    }
    if let Some(&c) = core_counts.iter().find(|&&c| c == 0 || c > options.host_slots) {
        return Err(BenchError::Config(format!(
            "requested {c} cores but the host has {} slots",
            options.host_slots
        )));
    }
    let mut points: Vec<ExecutorConfig> = Vec::new();
    for &kind in executors {
        let cores: Vec<usize> = if kind == ExecutorKind::Serial {
            vec![1]
        } else {
            core_counts.to_vec()
        };
        for c in cores {
            let point = ExecutorConfig::new(kind, c).with_max_retries(options.max_retries);
            if !points.contains(&point) {
                points.push(point);
            }
        }
    }
    if options.warmup {
        run(&points[0], true)?;
    }
    let mut rows = Vec::with_capacity(points.len());
    for point in &points {
        let stats = run(point, false)?;
        rows.push(BenchRow {
            executor: point.kind,
            cores: point.total_slots,
            frames,
            avg_et_s: stats.avg_et_s(),
            total_s: stats.total_s,
            busy_avg: cpu_usage_profile(&stats),
        });
    }
    let mut report = BenchReport {
        host_slots: options.host_slots,
        slot_definition: options.slot_definition.clone(),
        frames,
        rows,
        percent_faster: Vec::new(),
        realtime: None,
    };
    report.percent_faster = faster_pairs(&report, core_counts)?;
    Ok(report)
}

fn faster_pairs(report: &BenchReport, core_counts: &[usize]) -> Result<Vec<FasterPair>, BenchError> {
    use ExecutorKind::*;
    let mut pairs = Vec::new();
    for &cores in core_counts {
        for (baseline, candidate) in [(Serial, WorkerPerCore), (Serial, MasterSlave), (MasterSlave, WorkerPerCore)] {
            if let (Some(b), Some(c)) = (report.row(baseline, cores), report.row(candidate, cores)) {
                pairs.push(FasterPair {
                    cores,
                    baseline,
                    candidate,
                    baseline_et_s: b.avg_et_s,
                    candidate_et_s: c.avg_et_s,
                    percent_faster: percent_faster(b.avg_et_s, c.avg_et_s)?,
                });
            }
        }
    }
    Ok(pairs)
}

/// Runs the analysis pipeline for every point and, when frames exist,
/// times one frame end to end on the calling thread.
pub fn speedup_curve(
    frames: &[Arc<Frame>],
    core_counts: &[usize],
    executors: &[ExecutorKind],
    model: Arc<CnnModel>,
    config: Arc<PipelineConfig>,
    options: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    let warmup = &frames[..frames.len().min(WARMUP_FRAMES)];
    let mut report = speedup_curve_with(frames.len(), core_counts, executors, options, |point, is_warmup| {
        let batch = if is_warmup { warmup } else { frames };
        let out = run_batch(point, batch, model.clone(), config.clone())?;
        if let Some(f) = out.failures().first() {
            return Err(BenchError::Failed(format!("{}: {}", f.frame_id, f.error)));
        }
        Ok(out.stats)
    })?;
    report.realtime = Some(realtime_check(&frames[0], &model, &config, options.realtime_budget_s)?);
    Ok(report)
}

/// Single-frame end-to-end latency against `budget_s`.
pub fn realtime_check(
    frame: &Frame,
    model: &CnnModel,
    config: &PipelineConfig,
    budget_s: f64,
) -> Result<RealtimeCheck, BenchError> {
    let start = Instant::now();
    analyze_frame(frame, model, config).map_err(|e| BenchError::Failed(e.to_string()))?;
    let frame_s = start.elapsed().as_secs_f64();
    Ok(RealtimeCheck {
        width: frame.width(),
        height: frame.height(),
        frame_s,
        budget_s,
        within_budget: frame_s < budget_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}' (expected json or csv)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl fmt::Display) -> BenchError {
    BenchError::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// JSON holds the whole report; CSV holds one line per row.
pub fn write_report(report: &BenchReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<(), BenchError> {
    let path = path.as_ref();
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| format_err(path, e))?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row).map_err(|e| format_err(path, e))?;
            }
            w.into_inner().map_err(|e| format_err(path, e))?
        }
    };
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<BenchReport, BenchError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>, BenchError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => BenchError::Io {
            path: path.display().to_string(),
            source,
        },
        other => format_err(path, format!("{other:?}")),
    })?;
    r.deserialize().map(|row| row.map_err(|e| format_err(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::BusySample;

    fn stats(samples: &[(u64, usize)]) -> BatchStats {
        BatchStats {
            executor: ExecutorKind::Serial,
            workers: 1,
            per_frame_s: vec![1.0],
            total_s: 1.0,
            busy_samples: samples.iter().map(|&(t_ms, busy)| BusySample { t_ms, busy }).collect(),
            peak_busy: 0,
            executions: 0,
        }
    }

    #[test]
    fn paper_percentages() {
        assert!((percent_faster(1.0, 0.22).unwrap() - 78.0).abs() < 1e-9);
        assert!((percent_faster(0.25, 0.22).unwrap() - 12.0).abs() < 1e-9);
        assert_eq!(percent_faster(0.7, 0.7).unwrap(), 0.0);
        assert!(matches!(percent_faster(0.0, 0.1), Err(BenchError::Domain(_))));
        assert!(matches!(percent_faster(-1.0, 0.1), Err(BenchError::Domain(_))));
        assert!(matches!(percent_faster(f64::NAN, 0.1), Err(BenchError::Domain(_))));
    }

    #[test]
    fn usage_is_time_weighted() {
        assert_eq!(cpu_usage_profile(&stats(&[(0, 3)])), 3.0);
        assert_eq!(cpu_usage_profile(&stats(&[(0, 0), (50, 0)])), 0.0);
        // 2 busy for 100 ms, 4 busy for 300 ms
        let s = stats(&[(0, 2), (100, 4), (400, 0)]);
        assert!((cpu_usage_profile(&s) - 3.5).abs() < 1e-12);
        // idle lead-in and tail are outside the active interval
        let s = stats(&[(0, 0), (50, 0), (100, 2), (200, 4), (500, 0), (550, 0)]);
        assert!((cpu_usage_profile(&s) - 3.5).abs() < 1e-12);
        // an idle gap inside the interval counts
        let s = stats(&[(0, 2), (100, 0), (200, 2), (300, 0)]);
        assert!((cpu_usage_profile(&s) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn serial_measured_once_and_pairs() {
        let opts = BenchOptions {
            host_slots: 8,
            warmup: true,
            ..BenchOptions::default()
        };
        let mut calls = Vec::new();
        let report = speedup_curve_with(
            10,
            &[1, 2, 4],
            &[ExecutorKind::Serial, ExecutorKind::MasterSlave, ExecutorKind::WorkerPerCore],
            &opts,
            |p, warm| {
                calls.push((p.kind, p.total_slots, warm));
                let et = match p.kind {
                    ExecutorKind::Serial => 1.0,
                    ExecutorKind::MasterSlave => 1.0 / p.workers() as f64,
                    ExecutorKind::WorkerPerCore => 0.9 / p.total_slots as f64,
                };
                let mut s = stats(&[(0, p.workers()), (1000, 0)]);
                s.per_frame_s = vec![et; 10];
                s.total_s = et * 10.0;
                Ok(s)
            },
        )
        .unwrap();
        assert_eq!(calls.iter().filter(|c| c.2).count(), 1);
        assert_eq!(report.rows.len(), 7);
        assert_eq!(report.rows.iter().filter(|r| r.executor == ExecutorKind::Serial).count(), 1);
        let p4 = report
            .percent_faster
            .iter()
            .find(|p| p.cores == 4 && p.baseline == ExecutorKind::MasterSlave)
            .unwrap();
        assert!((p4.percent_faster - percent_faster(0.5, 0.225).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oversubscription_rejected() {
        let opts = BenchOptions {
            host_slots: 2,
            ..BenchOptions::default()
        };
        let r = speedup_curve_with(1, &[1, 4], &[ExecutorKind::WorkerPerCore], &opts, |_, _| unreachable!());
        assert!(matches!(r, Err(BenchError::Config(_))));
    }
}
