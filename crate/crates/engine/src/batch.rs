//! Batch execution with timing and busy-worker sampling.

use std::sync::Arc;
use std::time::{Duration, Instant};

use capx_core::pipeline::{analyze_frame_with_background, sequence_background, BackgroundMode};
use capx_core::{analyze_frame, CnnModel, DensityResult, Frame, GrayImage, PipelineConfig};
use crossbeam_channel::RecvTimeoutError;
use serde::{Deserialize, Serialize};

use crate::executor::{EngineError, Executor, ExecutorConfig, ExecutorKind, TaskFn};
use crate::store::StoreValue;

pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusySample {
    pub t_ms: u64,
    pub busy: usize,
}

/// Timing of one batch.
///
/// `per_frame_s[i]` is the wall time between the completion of the previous
/// task (or batch start) and the completion of task `i`, so the entries sum
/// to `total_s` and their mean is the batch's per-frame execution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub executor: ExecutorKind,
    pub workers: usize,
    pub per_frame_s: Vec<f64>,
    pub total_s: f64,
    pub busy_samples: Vec<BusySample>,
    #[serde(skip)]
    pub peak_busy: usize,
    #[serde(skip)]
    pub executions: u64,
}

impl BatchStats {
    pub fn avg_et_s(&self) -> f64 {
        if self.per_frame_s.is_empty() {
            return 0.0;
        }
        self.per_frame_s.iter().sum::<f64>() / self.per_frame_s.len() as f64
    }
}

/// Runs `func` over `inputs` on a fresh executor and collects outcomes in
/// input order. `prepare` sees the executor before any submission.
pub fn run_tasks_with<I, O>(
    config: &ExecutorConfig,
    inputs: Vec<I>,
    func: TaskFn<I, O>,
    prepare: impl FnOnce(&Executor<I, O>),
) -> Result<(Vec<Result<O, EngineError>>, BatchStats), EngineError>
where
    I: Send + Sync + 'static,
    O: StoreValue + Clone + Send + Sync + 'static,
{
    let executor = Executor::new(config.clone(), func)?;
    prepare(&executor);
    let gauge = executor.gauge();
    let start = Instant::now();
    let (stop_tx, stop_rx) = crossbeam_channel::bounded::<()>(1);
    let sampler = std::thread::spawn(move || {
        let mut samples = Vec::new();
        loop {
            samples.push(BusySample {
                t_ms: start.elapsed().as_millis() as u64,
                busy: gauge.busy(),
            });
            match stop_rx.recv_timeout(SAMPLE_INTERVAL) {
                Err(RecvTimeoutError::Timeout) => {}
                _ => break,
            }
        }
        samples
    });

    let refs = inputs
        .into_iter()
        .map(|i| executor.submit(i))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes: Vec<_> = refs.iter().map(|r| executor.wait(r)).collect();
    let end = Instant::now();
    let _ = stop_tx.send(());
    let mut busy_samples = sampler.join().expect("busy sampler panicked");
    busy_samples.push(BusySample {
        t_ms: (end - start).as_millis() as u64,
        busy: executor.gauge().busy(),
    });

    let settled: Vec<f64> = refs
        .iter()
        .map(|r| executor.settled_at(r).unwrap_or(end).saturating_duration_since(start).as_secs_f64())
        .collect();
    let stats = BatchStats {
        executor: config.kind,
        workers: executor.workers(),
        per_frame_s: completion_intervals(&settled),
        total_s: settled.iter().copied().fold(0.0, f64::max),
        busy_samples,
        peak_busy: executor.gauge().peak(),
        executions: executor.executions(),
    };
    executor.shutdown();
    Ok((outcomes, stats))
}

pub fn run_tasks<I, O>(
    config: &ExecutorConfig,
    inputs: Vec<I>,
    func: TaskFn<I, O>,
) -> Result<(Vec<Result<O, EngineError>>, BatchStats), EngineError>
where
    I: Send + Sync + 'static,
    O: StoreValue + Clone + Send + Sync + 'static,
{
    run_tasks_with(config, inputs, func, |_| {})
}

/// Gaps between consecutive completion offsets, reported per task.
fn completion_intervals(settled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..settled.len()).collect();
    order.sort_by(|&a, &b| settled[a].total_cmp(&settled[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; settled.len()];
    let mut prev = 0.0;
    for i in order {
        out[i] = settled[i] - prev;
        prev = settled[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Sorted by frame id; `stats.per_frame_s` follows the same order.
    pub results: Vec<Result<DensityResult, FrameFailure>>,
    pub stats: BatchStats,
}

impl BatchOutput {
    pub fn failures(&self) -> Vec<&FrameFailure> {
        self.results.iter().filter_map(|r| r.as_ref().err()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.results.iter().all(Result::is_ok)
    }

    /// All results, or the failures if any frame exhausted its retries.
    pub fn into_complete(self) -> Result<Vec<DensityResult>, Vec<FrameFailure>> {
        let failures: Vec<FrameFailure> = self.results.iter().filter_map(|r| r.clone().err()).collect();
        if failures.is_empty() {
            Ok(self.results.into_iter().map(Result::unwrap).collect())
        } else {
            Err(failures)
        }
    }
}

/// Input of one frame task.
pub struct FrameTask {
    pub frame: Arc<Frame>,
    pub background: Option<Arc<GrayImage>>,
}

/// Analyzes `frames` on the configured executor.
pub fn run_batch(
    executor: &ExecutorConfig,
    frames: &[Arc<Frame>],
    model: Arc<CnnModel>,
    config: Arc<PipelineConfig>,
) -> Result<BatchOutput, EngineError> {
    run_batch_with(executor, frames, model, config, |_| {})
}

pub fn run_batch_with(
    executor: &ExecutorConfig,
    frames: &[Arc<Frame>],
    model: Arc<CnnModel>,
    config: Arc<PipelineConfig>,
    prepare: impl FnOnce(&Executor<FrameTask, DensityResult>),
) -> Result<BatchOutput, EngineError> {
    if frames.is_empty() {
        return Err(EngineError::Config("batch needs at least one frame".into()));
    }
    config.validate().map_err(|e| EngineError::Config(e.to_string()))?;
    let background = match config.background {
        BackgroundMode::Still => None,
        BackgroundMode::Sequence => {
            let mut ordered: Vec<&Frame> = frames.iter().map(|f| f.as_ref()).collect();
            ordered.sort_by(|a, b| a.id().cmp(b.id()));
            let bg = sequence_background(ordered, &config.gmm).map_err(|e| EngineError::Config(e.to_string()))?;
            Some(Arc::new(bg))
        }
    };
    let tasks: Vec<FrameTask> = frames
        .iter()
        .map(|f| FrameTask {
            frame: f.clone(),
            background: background.clone(),
        })
        .collect();
    let func: TaskFn<FrameTask, DensityResult> = Arc::new(move |task: &FrameTask| {
        match &task.background {
            None => analyze_frame(&task.frame, &model, &config),
            Some(bg) => analyze_frame_with_background(&task.frame, bg, &model, &config),
        }
        .map_err(|e| e.to_string())
    });
    let (outcomes, mut stats) = run_tasks_with(executor, tasks, func, prepare)?;

    let mut rows: Vec<(Result<DensityResult, FrameFailure>, f64)> = outcomes
        .into_iter()
        .zip(frames)
        .zip(&stats.per_frame_s)
        .map(|((outcome, frame), &t)| {
            let outcome = outcome.map_err(|e| match e {
                EngineError::TaskFailed {
                    attempts, last_error, ..
                } => FrameFailure {
                    frame_id: frame.id().to_owned(),
                    attempts,
                    error: last_error,
                },
                other => FrameFailure {
                    frame_id: frame.id().to_owned(),
                    attempts: 0,
                    error: other.to_string(),
                },
            });
            (outcome, t)
        })
        .collect();
    rows.sort_by(|a, b| frame_key(&a.0).cmp(frame_key(&b.0)));
    stats.per_frame_s = rows.iter().map(|r| r.1).collect();
    Ok(BatchOutput {
        results: rows.into_iter().map(|r| r.0).collect(),
        stats,
    })
}

fn frame_key(r: &Result<DensityResult, FrameFailure>) -> &str {
    match r {
        Ok(d) => &d.frame_id,
        Err(f) => &f.frame_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_sum_to_last_completion() {
        let settled = [0.3, 0.1, 0.7, 0.4];
        let gaps = completion_intervals(&settled);
        let expected = [0.3 - 0.1, 0.1, 0.7 - 0.4, 0.4 - 0.3];
        for (g, e) in gaps.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!((gaps.iter().sum::<f64>() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stats_json_schema() {
        let stats = BatchStats {
            executor: ExecutorKind::WorkerPerCore,
            workers: 4,
            per_frame_s: vec![0.5, 0.25],
            total_s: 0.75,
            busy_samples: vec![BusySample { t_ms: 0, busy: 2 }],
            peak_busy: 2,
            executions: 2,
        };
        let v: serde_json::Value = serde_json::to_value(&stats).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["busy_samples", "executor", "per_frame_s", "total_s", "workers"]);
        assert_eq!(v["executor"], "worker_per_core");
        assert_eq!(v["busy_samples"][0], serde_json::json!({"t_ms": 0, "busy": 2}));
    }
}
