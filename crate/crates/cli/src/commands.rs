use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use capx_core::cnn::{gen_random_weights, intensity_model, load_weights, save_weights, DEFAULT_INTENSITY_THRESHOLD};
use capx_core::synth::{corpus_paths, read_manifest, write_corpus};
use capx_core::{load_frame, save_annotated, CnnModel, DensityResult, Frame, PipelineConfig};
use capx_engine::bench::{speedup_curve, write_report, BenchOptions, ReportFormat};
use capx_engine::{host_slots, run_batch, ExecutorConfig, ExecutorKind};
use log::{info, warn};
use serde::Serialize;

use crate::args::{AnalyzeArgs, BenchArgs, Cli, Command, GenCorpusArgs, GenWeightsArgs, ModelArg, PipelineArgs};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Usage = 1,
    Partial = 2,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

pub type CmdResult = Result<Status, String>;

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Bench(b) => bench(b),
        Command::GenWeights(g) => gen_weights(g),
        Command::GenCorpus(g) => gen_corpus(g),
    }
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(w) = &args.weights {
        config.weights = Some(w.clone());
    }
    if let Some(t) = args.ssim_threshold {
        config.ssim_threshold = t;
    }
    if let Some(b) = args.background {
        config.background = b.into();
    }
    config.validate().map_err(|e| format!("invalid configuration: {e}"))?;
    Ok(config)
}

fn load_model(config: &PipelineConfig) -> Result<CnnModel, String> {
    match &config.weights {
        Some(path) => load_weights(path, config.cnn_input_size).map_err(|e| format!("weights {}: {e}", path.display())),
        None => intensity_model(config.cnn_input_size, DEFAULT_INTENSITY_THRESHOLD).map_err(|e| e.to_string()),
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .is_some_and(|e| matches!(e.as_str(), "png" | "pgm" | "ppm" | "pnm"))
}

#[derive(Serialize)]
#[serde(untagged)]
enum Entry<'a> {
    Ok(&'a DensityResult),
    Failed {
        frame_id: &'a str,
        error: &'a str,
        attempts: u32,
    },
}

fn analyze(args: AnalyzeArgs) -> CmdResult {
    let kind: ExecutorKind = args.executor.into();
    let slots = match (kind, args.workers) {
        (_, Some(0)) => return Err("--workers must be at least 1".into()),
        (ExecutorKind::Serial, Some(n)) if n != 1 => {
            return Err(format!("--executor serial conflicts with --workers {n}"));
        }
        (_, Some(n)) => n,
        (ExecutorKind::Serial, None) => 1,
        (_, None) => host_slots(),
    };
    if slots > host_slots() {
        warn!("{slots} slots requested on a host with {}", host_slots());
    }
    let config = pipeline_config(&args.pipeline)?;
    let model = load_model(&config)?;

    let entries = fs::read_dir(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no input frames in {}", args.input.display()));
    }
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;

    let mut frames = Vec::new();
    let mut load_errors: Vec<(String, String)> = Vec::new();
    for p in &paths {
        match load_frame(p) {
            Ok(f) => frames.push(Arc::new(f)),
            Err(e) => {
                let id = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                warn!("skipping {}: {e}", p.display());
                load_errors.push((id, e.to_string()));
            }
        }
    }
    let mut failed_ids: Vec<(String, String, u32)> = load_errors.into_iter().map(|(id, e)| (id, e, 0)).collect();
    let mut results: Vec<DensityResult> = Vec::new();
    if !frames.is_empty() {
        info!("analyzing {} frame(s) with {kind} on {slots} slot(s)", frames.len());
        let out = run_batch(&ExecutorConfig::new(kind, slots), &frames, Arc::new(model), Arc::new(config))
            .map_err(|e| e.to_string())?;
        for r in out.results {
            match r {
                Ok(d) => results.push(d),
                Err(f) => failed_ids.push((f.frame_id, f.error, f.attempts)),
            }
        }
    }

    let by_id: std::collections::HashMap<&str, &Frame> = frames.iter().map(|f| (f.id(), f.as_ref())).collect();
    for r in &results {
        let frame = by_id[r.frame_id.as_str()];
        let path = args.out.join(format!("{}_annotated.png", r.frame_id));
        save_annotated(frame, r, &path).map_err(|e| e.to_string())?;
    }

    let mut entries: Vec<(&str, Entry)> = results.iter().map(|r| (r.frame_id.as_str(), Entry::Ok(r))).collect();
    entries.extend(failed_ids.iter().map(|(id, e, a)| {
        (
            id.as_str(),
            Entry::Failed {
                frame_id: id,
                error: e,
                attempts: *a,
            },
        )
    }));
    entries.sort_by(|a, b| a.0.cmp(b.0));
    let list: Vec<&Entry> = entries.iter().map(|e| &e.1).collect();
    let json = serde_json::to_string_pretty(&list).map_err(|e| e.to_string())?;
    let results_path = args.out.join("results.json");
    fs::write(&results_path, json + "\n").map_err(|e| format!("{}: {e}", results_path.display()))?;

    for r in &results {
        println!("{}\t{:.6}\t{} region(s)", r.frame_id, r.density, r.regions.len());
    }
    for (id, e, _) in &failed_ids {
        eprintln!("failed: {id}: {e}");
    }
    Ok(if failed_ids.is_empty() {
        Status::Success
    } else {
        Status::Partial
    })
}

fn default_core_counts(slots: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = std::iter::successors(Some(1usize), |c| c.checked_mul(2))
        .take_while(|&c| c <= slots)
        .collect();
    if counts.last() != Some(&slots) {
        counts.push(slots);
    }
    counts
}

fn bench(args: BenchArgs) -> CmdResult {
    if args.frames == 0 {
        return Err("--frames must be at least 1".into());
    }
    let host = host_slots();
    let slots = match args.workers {
        Some(0) => return Err("--workers must be at least 1".into()),
        Some(n) => n,
        None => host,
    };
    let cores = if args.cores.is_empty() {
        default_core_counts(slots)
    } else {
        args.cores.clone()
    };
    if let Some(c) = cores.iter().find(|&&c| c == 0 || c > slots) {
        return Err(format!("--cores {c} exceeds the {slots} available slot(s)"));
    }
    let executors: Vec<ExecutorKind> = if args.executors.is_empty() {
        ExecutorKind::ALL.to_vec()
    } else {
        args.executors.iter().map(|&e| e.into()).collect()
    };
    let format = args.format.map(ReportFormat::from).unwrap_or_else(|| {
        match args.report.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    });
    let config = pipeline_config(&args.pipeline)?;
    let model = load_model(&config)?;

    let dir = args.corpus.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "capx-corpus/seed{}-{}x{}-n{}",
            args.seed, args.width, args.height, args.frames
        ))
    });
    let paths = cached_corpus(&dir, args.seed, args.frames, args.width, args.height)?;
    let frames = paths
        .iter()
        .map(|p| load_frame(p).map(Arc::new).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;

    let options = BenchOptions {
        host_slots: slots,
        slot_definition: if args.workers.is_some() {
            format!("set to {slots} by --workers (host reports {host} logical processors)")
        } else {
            "logical processors reported by the OS".into()
        },
        warmup: !args.no_warmup,
        ..BenchOptions::default()
    };
    let report = speedup_curve(&frames, &cores, &executors, Arc::new(model), Arc::new(config), &options)
        .map_err(|e| e.to_string())?;
    write_report(&report, &args.report, format).map_err(|e| e.to_string())?;

    println!("executor          cores  avg_et_s  total_s  busy_avg");
    for r in &report.rows {
        println!(
            "{:<16} {:>6} {:>9.4} {:>8.3} {:>9.2}",
            r.executor.name(),
            r.cores,
            r.avg_et_s,
            r.total_s,
            r.busy_avg
        );
    }
    for p in &report.percent_faster {
        println!(
            "{} vs {} at {} cores: {:.1}% faster",
            p.candidate, p.baseline, p.cores, p.percent_faster
        );
    }
    if let Some(rt) = &report.realtime {
        if !rt.within_budget {
            println!(
                "warning: single {}x{} frame took {:.3} s, over the {:.1} s real-time budget",
                rt.width, rt.height, rt.frame_s, rt.budget_s
            );
        }
    }
    println!("report written to {}", args.report.display());
    Ok(Status::Success)
}

/// Frame paths of a corpus matching the parameters, generating it if needed.
fn cached_corpus(dir: &Path, seed: u64, count: usize, width: usize, height: usize) -> Result<Vec<PathBuf>, String> {
    if let Some(m) = read_manifest(dir) {
        if (m.seed, m.count, m.width, m.height) == (seed, count, width, height) {
            if let Some(paths) = corpus_paths(dir, &m) {
                info!("reusing corpus in {}", dir.display());
                return Ok(paths);
            }
        }
    }
    info!("generating {count} frame(s) into {}", dir.display());
    let m = write_corpus(dir, seed, count, width, height).map_err(|e| e.to_string())?;
    Ok(m.files.iter().map(|f| dir.join(f)).collect())
}

fn gen_weights(args: GenWeightsArgs) -> CmdResult {
    let model = match args.model {
        ModelArg::Random => gen_random_weights(args.seed),
        ModelArg::Intensity => intensity_model(64, DEFAULT_INTENSITY_THRESHOLD).map_err(|e| e.to_string())?,
    };
    save_weights(&model, &args.out).map_err(|e| e.to_string())?;
    println!("wrote {}", args.out.display());
    Ok(Status::Success)
}

fn gen_corpus(args: GenCorpusArgs) -> CmdResult {
    if args.count == 0 {
        return Err("--count must be at least 1".into());
    }
    if args.width == 0 || args.height == 0 {
        return Err("--width and --height must be positive".into());
    }
    let m = write_corpus(&args.out, args.seed, args.count, args.width, args.height).map_err(|e| e.to_string())?;
    println!("wrote {} frame(s) to {}", m.count, args.out.display());
    Ok(Status::Success)
}
