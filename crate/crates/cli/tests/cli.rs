use std::path::Path;
use std::process::{Command, Output};

fn capx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capx"))
        .args(args)
        .env_remove("CAPX_WORKERS")
        .output()
        .expect("run capx")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path, count: usize) {
    let o = capx(&[
        "gen-corpus", "--seed", "42", "--count", &count.to_string(), "--out", p(dir), "--width", "200", "--height",
        "140",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn gen_corpus_writes_frames_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 5);
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 5);
    let pngs = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 5);
}

#[test]
fn gen_corpus_count_zero_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = capx(&["gen-corpus", "--count", "0", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gen_weights_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.cxw"), tmp.path().join("b.cxw"));
    assert_eq!(code(&capx(&["gen-weights", "--seed", "7", "--out", p(&a)])), 0);
    assert_eq!(code(&capx(&["gen-weights", "--seed", "7", "--out", p(&b)])), 0);
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    assert_eq!(&x[..4], b"CXW1");
    let bad = tmp.path().join("missing").join("w.cxw");
    assert_eq!(code(&capx(&["gen-weights", "--out", p(&bad)])), 1);
}

#[test]
fn analyze_three_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    corpus(&input, 3);
    let o = capx(&["analyze", "--input", p(&input), "--out", p(&out), "--executor", "master-slave", "--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let arr = results.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    assert_eq!(arr[0]["frame_id"], "frame_0000");
    assert!(arr[0]["density"].is_f64());
    for i in 0..3 {
        assert!(out.join(format!("frame_{i:04}_annotated.png")).is_file());
    }
}

#[test]
fn analyze_with_weights_file_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    corpus(&input, 2);
    let weights = tmp.path().join("w.cxw");
    assert_eq!(code(&capx(&["gen-weights", "--model", "intensity", "--out", p(&weights)])), 0);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"ssim_threshold": 0.7, "background": "sequence"}"#).unwrap();
    let o = capx(&[
        "analyze", "--input", p(&input), "--out", p(&out), "--weights", p(&weights), "--config", p(&cfg),
        "--executor", "serial",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    std::fs::write(&cfg, r#"{"ssim_treshold": 0.7}"#).unwrap();
    let o = capx(&["analyze", "--input", p(&input), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn analyze_missing_weights_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    corpus(&input, 1);
    let missing = tmp.path().join("nope.cxw");
    let o = capx(&["analyze", "--input", p(&input), "--out", p(&out), "--weights", p(&missing)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(p(&missing)), "{}", stderr(&o));
}

#[test]
fn analyze_empty_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = capx(&["analyze", "--input", p(tmp.path()), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no input frames"), "{}", stderr(&o));
}

#[test]
fn analyze_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    corpus(&input, 2);
    std::fs::write(input.join("broken.png"), b"not a png").unwrap();
    let o = capx(&["analyze", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let arr = results.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    let broken = arr.iter().find(|e| e["frame_id"] == "broken").unwrap();
    assert!(broken["error"].as_str().is_some_and(|s| !s.is_empty()));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&capx(&["analyze", "--bogus"])), 1);
    assert_eq!(code(&capx(&["frobnicate"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let o = capx(&[
        "analyze", "--input", p(tmp.path()), "--out", p(tmp.path()), "--executor", "serial", "--workers", "4",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("conflicts"));
    assert_eq!(code(&capx(&["--help"])), 0);
}

#[test]
fn workers_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_capx"))
        .args(["analyze", "--input", p(tmp.path()), "--out", p(tmp.path()), "--executor", "serial"])
        .env("CAPX_WORKERS", "3")
        .output()
        .unwrap();
    // the env default conflicts with serial just like the flag would
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("conflicts"), "{}", stderr(&o));
}

#[test]
fn bench_report_structure_and_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let (report, cache) = (tmp.path().join("r.csv"), tmp.path().join("corpus"));
    let args = [
        "bench", "--frames", "4", "--cores", "1,2", "--executors", "serial,worker_per_core", "--report", p(&report),
        "--width", "160", "--height", "120", "--corpus", p(&cache), "--workers", "2", "--no-warmup",
    ];
    let o = capx(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "executor,cores,frames,avg_et_s,total_s,busy_avg");
    assert_eq!(lines.len(), 4, "{csv}");
    let manifest = std::fs::read_to_string(cache.join("manifest.json")).unwrap();

    let json = tmp.path().join("r.json");
    let mut again: Vec<&str> = args.to_vec();
    again[8] = p(&json);
    assert_eq!(code(&capx(&again)), 0);
    assert_eq!(std::fs::read_to_string(cache.join("manifest.json")).unwrap(), manifest);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(report["frames"], 4);
}

#[test]
fn bench_oversubscription_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = capx(&["bench", "--frames", "1", "--cores", "4096", "--report", p(&tmp.path().join("r.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("4096"));
}
