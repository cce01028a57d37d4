use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gridreduce");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn case6() -> String {
    data("case6.m").display().to_string()
}

fn zones6() -> String {
    data("zones6.json").display().to_string()
}

#[test]
fn reduce_reports_zone_and_tie_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["reduce", "--case", &case6(), "--zones", &zones6(), "--out", "b.json"]);
    assert!(out.contains("4 zones, 5 tie-lines"), "{out}");
    let bundle = json(&dir.path().join("b.json"));
    assert_eq!(bundle["zone_count"], 4);
    assert_eq!(bundle["tie_lines"].as_array().unwrap().len(), 5);

    let case = data("case118.m").display().to_string();
    let zones = data("zones118.json").display().to_string();
    let out = ok(dir.path(), &["reduce", "--case", &case, "--zones", &zones, "--out", "b118.json"]);
    assert!(out.contains("43 zones, 66 tie-lines"), "{out}");
}

#[test]
fn reduce_without_zone_file_uses_singletons_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["reduce", "--case", &case6(), "--out", "b.json"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("every bus becomes its own zone"));
    assert_eq!(json(&dir.path().join("b.json"))["zone_count"], 6);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.m"), "mpc.baseMVA = 100;\n").unwrap();
    let out = run(dir.path(), &["reduce", "--case", "bad.m", "--out", "b.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["reduce", "--case", "missing.m", "--out", "b.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["train", "--dataset", "d.csv", "--method", "newton", "--out", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_generation_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        ok(dir.path(), &["gen", "--case", &case6(), "--count", "50", "--seed", "3", "--out", name]);
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.json"), read("b.json"));
    let meta = json(&dir.path().join("a.json"));
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["case_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn ten_thousand_scenarios_split_and_zero_sigma() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["gen", "--case", &case6(), "--count", "10000", "--split", "8000/2000", "--out", "s.csv"],
    );
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let train = text.lines().filter(|l| l.contains(",train,")).count();
    let test = text.lines().filter(|l| l.contains(",test,")).count();
    assert_eq!((train, test), (8000, 2000));

    ok(dir.path(), &["gen", "--case", &case6(), "--count", "4", "--sigma", "0", "--out", "z.csv"]);
    let text = fs::read_to_string(dir.path().join("z.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').skip(2).collect()).collect();
    assert!(rows.iter().all(|r| r == &rows[0]));
    assert_eq!(rows[0][0], "-4");
    assert_eq!(rows[0][1], "1");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), "sigma = 0.0\nseed = 5\n").unwrap();
    ok(dir.path(), &["--config", "cfg.toml", "gen", "--case", &case6(), "--count", "3", "--out", "c.csv"]);
    let meta = json(&dir.path().join("c.json"));
    assert_eq!(meta["sigma"], 0.0);
    assert_eq!(meta["seed"], 5);
    ok(
        dir.path(),
        &["--config", "cfg.toml", "gen", "--case", &case6(), "--count", "3", "--sigma", "0.2", "--out", "f.csv"],
    );
    let meta = json(&dir.path().join("f.json"));
    assert_eq!(meta["sigma"], 0.2);
    assert_eq!(meta["seed"], 5);
    ok(dir.path(), &["gen", "--case", &case6(), "--count", "3", "--out", "d.csv"]);
    assert_eq!(json(&dir.path().join("d.json"))["sigma"], 0.15);
}

#[test]
fn pipeline_trains_better_than_baseline_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--case", &case6(), "--count", "600", "--seed", "2", "--split", "0.8", "--out", "s.csv"]);
    ok(d, &["dataset", "--case", &case6(), "--zones", &zones6(), "--scenarios", "s.csv", "--out", "d.csv"]);
    ok(d, &["train", "--dataset", "d.csv", "--method", "lbfgs", "--out", "c1.json"]);
    ok(d, &["train", "--dataset", "d.csv", "--method", "lbfgs", "--out", "c2.json"]);
    assert_eq!(fs::read(d.join("c1.json")).unwrap(), fs::read(d.join("c2.json")).unwrap());

    ok(d, &["eval", "--dataset", "d.csv", "--checkpoint", "c1.json", "--out", "trained"]);
    ok(d, &["eval", "--dataset", "d.csv", "--out", "baseline"]);
    let trained = json(&d.join("trained/metrics.json"));
    let baseline = json(&d.join("baseline/metrics.json"));
    assert!(trained["sq_two_norm_loss"].as_f64().unwrap() < baseline["sq_two_norm_loss"].as_f64().unwrap());
    assert_eq!(trained["per_tie_mae_mw"].as_array().unwrap().len(), 5);
    assert_eq!(trained["scenarios"], 120);
    let curve = fs::read_to_string(d.join("trained/cumulative_error.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 120 * 5);
    assert!(curve.lines().last().unwrap().ends_with(",1"));

    ok(d, &["eval", "--dataset", "d.csv", "--checkpoint", "c1.json", "--out", "again"]);
    for f in ["metrics.json", "per_tie_mae.csv", "cumulative_error.csv"] {
        assert_eq!(fs::read(d.join("trained").join(f)).unwrap(), fs::read(d.join("again").join(f)).unwrap());
    }
    for f in ["s.csv", "d.csv", "c1.json", "trained/metrics.json"] {
        assert_eq!(run(d, &["inspect", f]).status.code(), Some(0), "{f}");
    }
}

#[test]
fn base_case_training_reaches_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--case", &case6(), "--count", "1", "--sigma", "0", "--split", "1/0", "--out", "s.csv"]);
    ok(d, &["dataset", "--case", &case6(), "--zones", &zones6(), "--scenarios", "s.csv", "--out", "d.csv"]);
    ok(d, &["train", "--dataset", "d.csv", "--method", "tnc", "--out", "c.json"]);
    ok(d, &["eval", "--dataset", "d.csv", "--checkpoint", "c.json", "--split", "train", "--out", "m"]);
    let mae = json(&d.join("m/metrics.json"))["mae_mw"].as_f64().unwrap();
    assert!(mae <= 0.01, "{mae}");
}

#[test]
fn mixing_reductions_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--case", &case6(), "--count", "40", "--out", "s.csv"]);
    ok(d, &["dataset", "--case", &case6(), "--zones", &zones6(), "--scenarios", "s.csv", "--out", "zoned.csv"]);
    ok(d, &["dataset", "--case", &case6(), "--scenarios", "s.csv", "--out", "flat.csv"]);
    ok(d, &["train", "--dataset", "flat.csv", "--batch-size", "0", "--out", "flat.json"]);
    let out = run(d, &["eval", "--dataset", "zoned.csv", "--checkpoint", "flat.json", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));

    let other = d.join("other.m");
    fs::write(&other, fs::read_to_string(data("case6.m")).unwrap().replace("400\t0\t0", "401\t0\t0")).unwrap();
    let out = run(d, &["dataset", "--case", "other.m", "--scenarios", "s.csv", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unsolvable_scenarios_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--case", &case6(), "--count", "50", "--sigma", "8", "--out", "s.csv"]);
    let out = run(d, &["dataset", "--case", &case6(), "--zones", &zones6(), "--scenarios", "s.csv", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
