use std::sync::Arc;
use std::time::Duration;

use capx_core::cnn::{intensity_model, CnnModel, DEFAULT_INTENSITY_THRESHOLD};
use capx_core::pipeline::BackgroundMode;
use capx_core::synth::generate_frame;
use capx_core::{analyze_frame, Frame, PipelineConfig};
use capx_engine::{
    host_slots, run_batch, run_batch_with, run_tasks, ExecutorConfig, ExecutorKind, FaultPolicy, TaskFn,
};

fn frames(n: usize, w: usize, h: usize) -> Vec<Arc<Frame>> {
    (0..n).map(|i| Arc::new(generate_frame(7, i, w, h))).collect()
}

fn model() -> Arc<CnnModel> {
    Arc::new(intensity_model(64, DEFAULT_INTENSITY_THRESHOLD).unwrap())
}

#[test]
fn serial_batch_matches_direct_calls() {
    let fs = frames(4, 320, 200);
    let (m, cfg) = (model(), Arc::new(PipelineConfig::default()));
    let out = run_batch(&ExecutorConfig::new(ExecutorKind::Serial, 1), &fs, m.clone(), cfg.clone()).unwrap();
    assert!(out.is_complete());
    assert_eq!(out.stats.workers, 1);
    let results = out.into_complete().unwrap();
    assert_eq!(results.len(), 4);
    for (r, f) in results.iter().zip(&fs) {
        let direct = analyze_frame(f, &m, &cfg).unwrap();
        assert!(r.same_outcome(&direct), "{}", r.frame_id);
    }
    assert!(results.iter().any(|r| r.density > 0.0));
}

#[test]
fn results_sorted_by_frame_id() {
    let mut fs = frames(6, 160, 100);
    fs.reverse();
    fs.swap(1, 4);
    let out = run_batch(
        &ExecutorConfig::new(ExecutorKind::WorkerPerCore, 3),
        &fs,
        model(),
        Arc::new(PipelineConfig::default()),
    )
    .unwrap();
    let ids: Vec<_> = out.results.iter().map(|r| r.as_ref().unwrap().frame_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(out.stats.per_frame_s.len(), 6);
}

#[test]
fn master_slave_on_four_slots_has_two_workers() {
    let out = run_batch(
        &ExecutorConfig::new(ExecutorKind::MasterSlave, 4),
        &frames(3, 120, 80),
        model(),
        Arc::new(PipelineConfig::default()),
    )
    .unwrap();
    assert_eq!(out.stats.workers, 2);
    let json = serde_json::to_value(&out.stats).unwrap();
    assert_eq!(json["workers"], 2);
    assert_eq!(json["executor"], "master_slave");
}

#[test]
fn avg_et_is_mean_of_per_frame_times() {
    let out = run_batch(
        &ExecutorConfig::new(ExecutorKind::WorkerPerCore, 2),
        &frames(5, 200, 120),
        model(),
        Arc::new(PipelineConfig::default()),
    )
    .unwrap();
    let s = &out.stats;
    let mean = s.per_frame_s.iter().sum::<f64>() / s.per_frame_s.len() as f64;
    assert!((s.avg_et_s() - mean).abs() < 1e-9);
    assert!((s.avg_et_s() * 5.0 - s.total_s).abs() < 1e-9);
    assert!(s.per_frame_s.iter().all(|&t| t >= 0.0));
    assert!(!s.busy_samples.is_empty());
}

#[test]
fn executors_agree_in_both_background_modes() {
    let fs = frames(6, 240, 160);
    for background in [BackgroundMode::Still, BackgroundMode::Sequence] {
        let cfg = Arc::new(PipelineConfig {
            background,
            ..PipelineConfig::default()
        });
        let runs: Vec<_> = ExecutorKind::ALL
            .iter()
            .map(|&k| {
                run_batch(&ExecutorConfig::new(k, 4), &fs, model(), cfg.clone())
                    .unwrap()
                    .into_complete()
                    .unwrap()
            })
            .collect();
        for other in &runs[1..] {
            for (a, b) in runs[0].iter().zip(other) {
                assert!(a.same_outcome(b), "{background:?} {}", a.frame_id);
            }
        }
    }
}

#[test]
fn failing_frames_are_reported_not_dropped() {
    // model expects 32×32 patches, config produces 64×64
    let wrong = Arc::new(intensity_model(32, 0.5).unwrap());
    let out = run_batch(
        &ExecutorConfig::new(ExecutorKind::WorkerPerCore, 2),
        &frames(3, 120, 80),
        wrong,
        Arc::new(PipelineConfig::default()),
    )
    .unwrap();
    assert!(!out.is_complete());
    let failures = out.failures();
    assert_eq!(failures.len(), 3);
    assert!(failures.iter().all(|f| f.attempts == 4 && f.error.contains("patch size")));
    assert!(out.into_complete().is_err());
}

#[test]
fn empty_batch_is_an_error() {
    let r = run_batch(
        &ExecutorConfig::new(ExecutorKind::Serial, 1),
        &[],
        model(),
        Arc::new(PipelineConfig::default()),
    );
    assert!(r.is_err());
}

#[test]
fn injected_faults_do_not_change_results() {
    let fs = frames(30, 120, 90);
    let cfg = Arc::new(PipelineConfig::default());
    let point = ExecutorConfig::new(ExecutorKind::WorkerPerCore, 3);
    let clean = run_batch(&point, &fs, model(), cfg.clone()).unwrap();
    let faulty = run_batch_with(&point, &fs, model(), cfg, |ex| {
        ex.inject_fault(FaultPolicy {
            kill_fraction: 0.3,
            once: false,
        })
    })
    .unwrap();
    assert!(faulty.stats.executions > 30);
    let (a, b) = (clean.into_complete().unwrap(), faulty.into_complete().unwrap());
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
}

/// Sleep-based equal-cost tasks: valid on any host because sleeping workers
/// do not compete for CPU.
#[test]
fn worker_per_core_overlaps_equal_cost_tasks() {
    let n = 4;
    let cost = Duration::from_millis(200);
    let func: TaskFn<u64, u64> = Arc::new(move |x| {
        std::thread::sleep(cost);
        Ok(*x)
    });
    let (_, single) = run_tasks(&ExecutorConfig::new(ExecutorKind::Serial, 1), vec![0], func.clone()).unwrap();
    let single_s = single.total_s;
    let (_, stats) = run_tasks(&ExecutorConfig::new(ExecutorKind::WorkerPerCore, n), (0..n as u64).collect(), func).unwrap();
    assert!(stats.total_s < 2.0 * single_s, "{} vs {}", stats.total_s, single_s);
}

/// The same property for CPU-bound frames needs as many physical slots as
/// workers.
#[test]
fn worker_per_core_overlaps_cpu_bound_frames() {
    let n = host_slots().min(4);
    if n < 2 {
        eprintln!("skipped: host has {} slot(s)", host_slots());
        return;
    }
    let fs = frames(n, 640, 360);
    let cfg = Arc::new(PipelineConfig::default());
    let single = run_batch(&ExecutorConfig::new(ExecutorKind::Serial, 1), &fs[..1], model(), cfg.clone()).unwrap();
    let batch = run_batch(&ExecutorConfig::new(ExecutorKind::WorkerPerCore, n), &fs, model(), cfg).unwrap();
    assert!(batch.stats.total_s < 2.0 * single.stats.total_s);
}
