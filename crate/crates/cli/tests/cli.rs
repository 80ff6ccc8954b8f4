use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn geoloc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoloc"))
        .current_dir(dir)
        .env_remove("GEOLOC_OUT_DIR")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("run geoloc")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = geoloc(dir, args);
    assert!(
        out.status.success(),
        "geoloc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const SMALL_DATA: &[&str] = &["gen-data", "--stations", "40", "--days", "50", "--context-dim", "8"];
const TINY_MODEL: &[&str] = &["--epochs", "1", "--hidden", "4", "--layers", "1", "--batch-size", "128"];

fn small_workspace(dir: &Path, seed: &str) {
    let mut args = vec!["--out-dir", "o", "--seed", seed];
    args.extend_from_slice(SMALL_DATA);
    ok(dir, &args);
    ok(
        dir,
        &[
            "--out-dir", "o", "pretrain", "--pairs", "64", "--epochs", "2", "--encoder-hidden", "16", "--bands", "2",
        ],
    );
}

#[test]
fn help_text_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let snapshots = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    for sub in ["", "gen-data", "pretrain", "train", "evaluate", "report", "grid"] {
        let args: Vec<&str> = if sub.is_empty() { vec!["--help"] } else { vec![sub, "--help"] };
        let out = ok(dir.path(), &args);
        let text = String::from_utf8(out.stdout).unwrap();
        let name = if sub.is_empty() { "geoloc" } else { sub };
        let path = snapshots.join(format!("help_{name}.txt"));
        if update {
            fs::create_dir_all(&snapshots).unwrap();
            fs::write(&path, &text).unwrap();
        }
        assert_eq!(text, read(path), "help text of `{name}` changed");
    }
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(ok(dir.path(), &["evaluate", "--help"]).stdout).unwrap();
    for flag in ["--runs", "--delta", "--variants", "--epochs", "--batch-size", "--lr", "--seed", "--jobs"] {
        let line = text.lines().position(|l| l.trim_start().starts_with(flag)).expect(flag);
        let desc = text.lines().nth(line + 1).unwrap();
        assert!(desc.contains("[default:"), "{flag}: {desc}");
    }
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(dir.path(), &["--out-dir", out, "gen-data", "--seed", "7", "--stations", "30", "--days", "45"]);
    }
    for f in ["dataset.csv", "synthetic.json"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    ok(dir.path(), &["--out-dir", "c", "gen-data", "--seed", "8", "--stations", "30", "--days", "45"]);
    assert_ne!(read(dir.path().join("a/dataset.csv")), read(dir.path().join("c/dataset.csv")));

    let m: serde_json::Value = serde_json::from_str(&read(dir.path().join("a/gen-data.manifest.json"))).unwrap();
    assert_eq!(m["config"]["seed"], "7");
    assert_eq!(m["config"]["stations"], "30");
    assert_eq!(m["config"]["amp"], "2");
    assert_eq!(m["seeds"], serde_json::json!([7]));
    assert_eq!(m["outputs"].as_object().unwrap().len(), 2);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_geoloc"))
        .current_dir(dir.path())
        .env("GEOLOC_OUT_DIR", "from-env")
        .env("RUST_LOG", "warn")
        .args(["gen-data", "--stations", "20", "--days", "42"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/dataset.csv").exists());
    assert!(out.stdout.is_empty());
}

#[test]
fn train_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    small_workspace(dir.path(), "3");
    let mut args = vec!["--out-dir", "o", "train", "--variant", "encoder", "--encoder", "o/encoder.weights"];
    args.extend_from_slice(TINY_MODEL);
    ok(dir.path(), &args);
    let trace = read(dir.path().join("o/encoder_loss.csv"));
    assert!(trace.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(trace.lines().count(), 2);
    assert!(dir.path().join("o/encoder.ckpt").exists());
    assert!(dir.path().join("o/train.manifest.json").exists());

    ok(
        dir.path(),
        &["--out-dir", "o", "grid", "--model", "o/encoder.ckpt", "--bbox", "24,49,-125,-67", "--res", "1.0"],
    );
    let grid = read(dir.path().join("o/grid.csv"));
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("lat,lon,estimate"));
    assert_eq!(lines.count(), 25 * 58);

    ok(
        dir.path(),
        &[
            "--out-dir", "o", "grid", "--model", "o/encoder.ckpt", "--world", "o/synthetic.json", "--bbox",
            "30,34,-100,-96", "--res", "2", "--day", "30", "--output", "g2.csv",
        ],
    );
    let g2 = read(dir.path().join("o/g2.csv"));
    assert_eq!(g2.lines().count(), 1 + 4);
    assert!(g2.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn evaluate_checkerboard_table_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    small_workspace(dir.path(), "5");
    let run = |out: &str, jobs: &str| {
        let mut args = vec![
            "--out-dir", out, "--jobs", jobs, "evaluate", "--data", "o/dataset.csv", "--encoder", "o/encoder.weights",
            "--partition", "checkerboard", "--delta", "8", "--runs", "2", "--variants", "none,raw,sin,encoder",
        ];
        args.extend_from_slice(TINY_MODEL);
        ok(dir.path(), &args);
    };
    run("e1", "1");
    run("e2", "2");
    let table = read(dir.path().join("e1/checkerboard_8.txt"));
    assert!(table.starts_with("Out-of-Region (Checkerboard, δ=8°)"), "{table}");
    assert!(table.contains("Test R² (1|2)"));
    assert_eq!(table.lines().filter(|l| l.contains(" | ")).count(), 4);
    for f in ["checkerboard_8.txt", "checkerboard_8.csv", "checkerboard_8_runs.csv", "checkerboard_8.json"] {
        assert_eq!(read(dir.path().join("e1").join(f)), read(dir.path().join("e2").join(f)), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&read(dir.path().join("e1/evaluate.manifest.json"))).unwrap();
    assert_eq!(m["folds"].as_array().unwrap().len(), 2);
    assert_eq!(m["seeds"], serde_json::json!([0, 1]));
    assert_eq!(m["inputs"].as_object().unwrap().len(), 2);

    ok(dir.path(), &["--out-dir", "r", "report", "e1/checkerboard_8.json"]);
    assert_eq!(read(dir.path().join("r/checkerboard_8.txt")), table);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = geoloc(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));
    assert_eq!(geoloc(dir.path(), &["gen-data", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(geoloc(dir.path(), &["train", "--train-partition", "3"]).status.code(), Some(2));
    assert_eq!(geoloc(dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = geoloc(dir.path(), &["--out-dir", "o", "evaluate", "--data", "missing.csv", "--variants", "none"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    let out = geoloc(dir.path(), &["--out-dir", "o", "grid", "--model", "nowhere.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.ckpt"));
}

#[test]
fn validation_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(geoloc(dir.path(), &["--out-dir", "o", "gen-data", "--stations", "5"]).status.code(), Some(1));
    assert_eq!(geoloc(dir.path(), &["--out-dir", "o", "gen-data", "--amp=-1"]).status.code(), Some(1));
    ok(dir.path(), &["--out-dir", "o", "gen-data", "--stations", "20", "--days", "42"]);
    let out = geoloc(dir.path(), &["--out-dir", "o", "evaluate", "--variants", "none,encoder"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--encoder"));
    assert_eq!(
        geoloc(dir.path(), &["--out-dir", "o", "grid", "--model", "x.ckpt", "--bbox", "49,24,-125,-67"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_values_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.ini"),
        "# smoke\n[global]\nseed = 7\n\n[gen-data]\nstations = 30\ndays = 45\n",
    )
    .unwrap();
    ok(dir.path(), &["--out-dir", "a", "--config", "run.ini", "gen-data"]);
    ok(dir.path(), &["--out-dir", "b", "gen-data", "--seed", "7", "--stations", "30", "--days", "45"]);
    assert_eq!(read(dir.path().join("a/dataset.csv")), read(dir.path().join("b/dataset.csv")));

    ok(dir.path(), &["--out-dir", "c", "--config", "run.ini", "gen-data", "--stations", "25"]);
    let m: serde_json::Value = serde_json::from_str(&read(dir.path().join("c/gen-data.manifest.json"))).unwrap();
    assert_eq!(m["config"]["stations"], "25");
    assert_eq!(m["config"]["days"], "45");
    assert_eq!(m["config"]["seed"], "7");

    fs::write(dir.path().join("bad.ini"), "[gen-data]\nstationz = 3\n").unwrap();
    let out = geoloc(dir.path(), &["--out-dir", "d", "--config", "bad.ini", "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stationz"));
    fs::write(dir.path().join("bad2.ini"), "[nonsense]\nx = 1\n").unwrap();
    assert_eq!(geoloc(dir.path(), &["--out-dir", "d", "--config", "bad2.ini", "gen-data"]).status.code(), Some(2));
    assert_eq!(geoloc(dir.path(), &["--out-dir", "d", "--config", "absent.ini", "gen-data"]).status.code(), Some(1));
}
