use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use iragent::synth::write_corpus;
use serde_json::Value;

const SIZE: usize = 96;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_iragent"));
    c.env_remove("Q_AGENT_CALIBRATION");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn iragent")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "iragent {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Error line printed on stderr by a failing command.
fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str::<Value>(line).expect("stderr is JSON")["error"].clone()
}

struct Fixture {
    pristine: PathBuf,
    calibration: PathBuf,
}

/// 50 synthetic scenes and a calibration fitted on them through the CLI,
/// shared by every test in this binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli_fixture");
        let pristine = root.join("pristine");
        write_corpus(&pristine, 50, SIZE, 4100).unwrap();
        let calibration = root.join("calibration.json");
        ok(&[
            "calibrate",
            s(&pristine),
            s(&calibration),
            "--singles",
            "1",
            "--mixes",
            "1",
            "--seed",
            "5",
        ]);
        Fixture {
            pristine,
            calibration,
        }
    })
}

/// Dataset degraded from the first `sources` images of the fixture corpus.
fn dataset(dir: &Path, sources: usize, variants: usize, seed: u64) -> PathBuf {
    let src = dir.join("src");
    std::fs::create_dir_all(&src).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(&fixture().pristine)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for p in names.iter().take(sources) {
        std::fs::copy(p, src.join(p.file_name().unwrap())).unwrap();
    }
    let data = dir.join("data");
    ok(&[
        "degrade",
        s(&src),
        s(&data),
        "-n",
        &variants.to_string(),
        "--seed",
        &seed.to_string(),
        "--resolution",
        &format!("{SIZE}x{SIZE}"),
    ]);
    data
}

#[test]
fn bench_complexity_follows_triangular_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    ok(&["bench-complexity", "2..4", s(&out), "--trials", "5"]);
    let doc = read_json(&out);
    let rows = doc["result"].as_array().unwrap();
    let greedy: Vec<f64> = rows
        .iter()
        .map(|r| r["greedy_mean"].as_f64().unwrap())
        .collect();
    assert_eq!(greedy, vec![3.0, 6.0, 10.0]);
    for r in rows {
        assert!(r["rollback_mean"].as_f64().unwrap() > r["greedy_mean"].as_f64().unwrap());
    }
    assert!(doc["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn missing_directory_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "calibrate",
        "/definitely/not/here",
        s(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error(&out);
    assert_eq!(err["kind"], "Io");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("/definitely/not/here"));
}

#[test]
fn small_corpus_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&dir.path().join("few"), 5, 64, 1).unwrap();
    let out = run(&[
        "calibrate",
        s(&dir.path().join("few")),
        s(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "CorpusTooSmall");
}

#[test]
fn config_rejects_unknown_keys_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nepsilom = 0.1\n").unwrap();
    let out = run(&[
        "--config",
        s(&bad),
        "bench-complexity",
        "2",
        s(&dir.path().join("b.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_error(&out)["message"]
        .as_str()
        .unwrap()
        .contains("epsilom"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "seed = 11\nbench_trials = 2\n").unwrap();
    let out = dir.path().join("b.json");
    ok(&["--config", s(&good), "bench-complexity", "2", s(&out)]);
    assert_eq!(read_json(&out)["metadata"]["seed"], 11);
    assert_eq!(read_json(&out)["metadata"]["trials"], 2);
    ok(&[
        "--config",
        s(&good),
        "--seed",
        "12",
        "bench-complexity",
        "2",
        s(&out),
    ]);
    assert_eq!(read_json(&out)["metadata"]["seed"], 12);
}

#[test]
fn config_with_missing_calibration_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "calibration = \"nope.json\"\n").unwrap();
    let out = run(&[
        "--config",
        s(&cfg),
        "bench-complexity",
        "2",
        s(&dir.path().join("b.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn restore_without_calibration_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&dir.path().join("img"), 1, 64, 2).unwrap();
    let img = std::fs::read_dir(dir.path().join("img"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let out = run(&["restore", s(&img), s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "CalibrationMissing");
}

#[test]
fn calibration_is_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.json");
    let stdout = ok(&[
        "calibrate",
        s(&f.pristine),
        s(&again),
        "--singles",
        "1",
        "--mixes",
        "1",
        "--seed",
        "5",
    ]);
    assert_eq!(
        std::fs::read(&again).unwrap(),
        std::fs::read(&f.calibration).unwrap()
    );
    let printed: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(printed["images"], 50);
    assert_eq!(printed["digest"].as_str().unwrap().len(), 64);
}

#[test]
fn restoring_a_pristine_image_returns_its_bytes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(&f.pristine)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    let img = &names[0];
    let out = dir.path().join("out");
    let status = bin()
        .env("Q_AGENT_CALIBRATION", &f.calibration)
        .args(["restore", s(img), s(&out), "--strategy", "greedy"])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let stem = img.file_stem().unwrap().to_str().unwrap();
    let trace = read_json(&out.join(format!("traces/{stem}.json")));
    assert!(trace["steps"].as_array().unwrap().is_empty(), "{trace}");
    assert_eq!(
        std::fs::read(out.join(format!("images/{stem}.png"))).unwrap(),
        std::fs::read(img).unwrap()
    );
}

#[test]
fn pipeline_smoke_on_ten_images() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 5, 2, 21);
    let manifest = data.join("manifest.jsonl");
    let lines = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(lines.lines().count(), 10);
    let cal = ["--calibration", s(&f.calibration)];

    let perceived = dir.path().join("perceive.json");
    let mut args = cal.to_vec();
    args.extend(["perceive", s(&manifest), s(&perceived)]);
    ok(&args);
    let p = read_json(&perceived)["result"].clone();
    assert_eq!(p["rows"], 10);
    assert_eq!(p["records"].as_array().unwrap().len(), 10);
    assert!(p["macc"].as_f64().unwrap() >= 0.0);

    let restored = dir.path().join("restored");
    let mut args = cal.to_vec();
    args.extend(["--jobs", "2", "restore", s(&data), s(&restored)]);
    ok(&args);
    let summary = read_json(&restored.join("restore.json"));
    let ids: Vec<&str> = summary["result"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(ids.len(), 10);

    let report = dir.path().join("report.json");
    ok(&["evaluate", s(&manifest), s(&restored), s(&report)]);
    let doc = read_json(&report);
    let r = &doc["result"]["restoration"];
    assert_eq!(r["rows"], 10);
    assert!(r["failures"].as_array().unwrap().is_empty(), "{r}");
    let summ = &r["strategies"][0];
    assert_eq!(summ["strategy"], "greedy");
    assert_eq!(summ["n_ok"], 10);
    assert!(summ["mean_psnr"].as_f64().unwrap() > 10.0);
    assert!(doc["result"]["perception"]["macc"].is_number());

    // same inputs and seed, one worker: byte-identical artefacts
    let again = dir.path().join("again");
    let mut args = cal.to_vec();
    args.extend(["--jobs", "1", "restore", s(&data), s(&again)]);
    ok(&args);
    assert_eq!(
        std::fs::read(restored.join("restore.json")).unwrap(),
        std::fs::read(again.join("restore.json")).unwrap()
    );
    for id in &ids {
        for rel in [format!("traces/{id}.json"), format!("images/{id}.png")] {
            assert_eq!(
                std::fs::read(restored.join(&rel)).unwrap(),
                std::fs::read(again.join(&rel)).unwrap(),
                "{rel}"
            );
        }
    }
}

#[test]
fn degrade_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(&dir.path().join("a"), 2, 3, 8);
    let b = dataset(&dir.path().join("b"), 2, 3, 8);
    assert_eq!(
        std::fs::read(a.join("manifest.jsonl")).unwrap(),
        std::fs::read(b.join("manifest.jsonl")).unwrap()
    );
}

#[test]
fn compare_reports_partial_failures_as_warnings() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2, 2, 33);
    let manifest = data.join("manifest.jsonl");
    let first = std::fs::read_to_string(&manifest).unwrap();
    let first: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    std::fs::remove_file(data.join(first["degraded"].as_str().unwrap())).unwrap();

    let out = dir.path().join("compare.json");
    let csv = dir.path().join("compare.csv");
    let stdout = ok(&[
        "--calibration",
        s(&f.calibration),
        "compare",
        s(&manifest),
        s(&out),
        "--strategies",
        "greedy,random:4,reverse,rollback:2",
        "--csv",
        s(&csv),
    ]);
    let doc = read_json(&out);
    let warnings = doc["warnings"].as_array().unwrap();
    assert_eq!(warnings.len(), 4, "{warnings:?}");
    assert!(warnings.iter().all(|w| w["id"] == first["id"]));
    let strategies: Vec<&str> = doc["result"]["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(
        strategies,
        ["greedy", "random:4", "reverse_order", "rollback:2"]
    );
    assert!(stdout.contains("greedy"));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 5);
}

#[test]
fn unknown_strategy_is_an_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1, 1, 2);
    let out = run(&[
        "--calibration",
        s(&f.calibration),
        "--strategy",
        "sideways",
        "restore",
        s(&data),
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "ParamOutOfRange");
}
