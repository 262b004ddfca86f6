use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const INTERVAL: &str = r#"{"dim": 1, "shape": {"box": {"lo": [0], "hi": [1]}}}"#;
const SQUARE: &str = r#"{"dim": 2, "shape": {"box": {"lo": [0, 0], "hi": [1, 1]}}}"#;
const DISK: &str = r#"{"dim": 2, "shape": {"ball": {"center": [0, 0], "r": 0.25}}}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_capradius"))
}

fn spec_file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], spec: &Path, out: &Path) -> Output {
    bin().args(args).arg("--spec").arg(spec).arg("--out").arg(out).output().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    if !dir.exists() {
        return vec![];
    }
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

// data rows of a curve CSV: (parameter, value)
fn csv_rows(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect()
}

#[test]
fn capacity_report() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "disk.json", DISK);
    let out = dir.path().join("r");
    let o = run(&["capacity", "--p", "2", "--h", "0.0625"], &spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), ["capacity.json"]);
    let rep = json(&out.join("capacity.json"));
    let est = &rep["results"]["estimates"][0];
    assert!(est["value"].as_f64().unwrap() > 0.0);
    assert_eq!(est["solver"]["converged"], Value::Bool(true));
    // defaults are written out with the run
    let cfg = &rep["input"]["config"];
    assert_eq!(cfg["h"].as_f64(), Some(0.0625));
    assert_eq!(cfg["margin"].as_f64(), Some(0.25));
    assert_eq!(cfg["kind"], Value::from("sobolev"));
    assert_eq!(cfg["seed"].as_u64(), Some(0));
}

#[test]
fn csv_format_embeds_the_config() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "interval.json", INTERVAL);
    let out = dir.path().join("r");
    let o = run(&["eigen", "--p", "1.5,2", "--h", "0.0625", "--format", "csv"], &spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), ["eigen.csv"]);
    let text = fs::read_to_string(out.join("eigen.csv")).unwrap();
    assert!(text.starts_with("# input_hash="));
    assert!(text.contains("\"margin\":0.25"));
    assert_eq!(csv_rows(&out.join("eigen.csv")).len(), 2);
}

#[test]
fn usage_errors_exit_2_without_files() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "square.json", SQUARE);
    let out = dir.path().join("r");
    for args in [
        &["verify", "upper", "--p", "abc"][..],
        &["capacity", "--p", "1"],
        &["eigen", "--p", "2", "--h", "-1"],
        &["eigen", "--p", "2", "--jobs", "0"],
        &["sweep", "--p", "2"],
        &["sweep", "--p", "2", "--vary", "h=0.1", "--vary", "p=2,3"],
        &["sweep", "--p", "2", "--vary", "h="],
        &["sweep", "--p", "2", "--vary", "gamma=0.5,1.5"],
    ] {
        let o = run(args, &spec, &out);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(listing(&out).is_empty(), "{args:?}");
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["capacity", "--p", "2"], &missing, &out).status.code(), Some(2));
    let broken = spec_file(&dir, "broken.json", r#"{"dim": 2, "shape": {"ball": {"center": [0, 0], "r": -1}}}"#);
    let o = run(&["capacity", "--p", "2"], &broken, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--spec"));
    assert!(listing(&out).is_empty());
}

#[test]
fn verify_upper_on_the_square_passes() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "square.json", SQUARE);
    let out = dir.path().join("r");
    let o = run(&["verify", "upper", "--p", "2", "--h", "0.0625"], &spec, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("verify_upper.json"));
    assert!(rep["flags"].as_array().unwrap().iter().all(|f| f["pass"] == Value::Bool(true)));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_jobs() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "disk.json", DISK);
    let mut texts = vec![];
    for (i, jobs) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        let o = run(&["inradius", "--p", "2", "--h", "0.0625", "--gamma-grid", "0.25,0.5", "--jobs", jobs], &spec, &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        texts.push(fs::read(out.join("inradius.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
}

#[test]
fn sweep_over_h_approaches_pi_squared() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "interval.json", INTERVAL);
    let out = dir.path().join("r");
    let o = run(&["sweep", "--p", "2", "--vary", "h=0.03125,0.015625,0.0078125"], &spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), ["sweep.csv", "sweep.json"]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    let pi2 = std::f64::consts::PI.powi(2);
    let errs: Vec<f64> = rows.iter().map(|r| r.1 - pi2).collect();
    assert!(errs.iter().all(|e| *e > 0.0) || errs.iter().all(|e| *e < 0.0), "{rows:?}");
    assert!(errs[0].abs() > errs[1].abs() && errs[1].abs() > errs[2].abs(), "{rows:?}");
    let manifest = json(&out.join("sweep.json"));
    assert_eq!(manifest["input"]["axis"], Value::from("h"));
}

#[test]
fn sweep_over_gamma_is_nondecreasing() {
    let dir = TempDir::new().unwrap();
    let spec = spec_file(&dir, "disk.json", DISK);
    let out = dir.path().join("r");
    let grid = "0.05,0.1,0.2,0.3,0.4,0.5,0.7,0.9";
    let o = run(&["sweep", "--p", "2", "--h", "0.0625", "--vary", &format!("gamma={grid}")], &spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 8);
    for w in rows.windows(2) {
        assert!(w[1].1 >= w[0].1, "{rows:?}");
    }
}
