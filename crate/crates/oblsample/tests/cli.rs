use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use oblsample::audit::{predicted_cost, Algorithm, RunConfig};
use oblsample::format::{read_trace, CiphertextFile};
use oblsample_core::memory::{Op, Region};
use oblsample_core::sampling::SampleSizes;
use serde_json::Value;

const SEED: &str = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";

fn oblsample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oblsample"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_data(dir: &Path, n: u64) -> std::path::PathBuf {
    let data = dir.join("data.obls");
    let n = n.to_string();
    let o = oblsample(&[
        "gen-data",
        "--n",
        &n,
        "--scatter-keys",
        "--seed",
        SEED,
        "--out",
        path(&data),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn swo_writes_samples_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), 24);
    let out = dir.path().join("swo");
    let trace = dir.path().join("swo.trace");
    let o = oblsample(&[
        "swo",
        "--input",
        path(&data),
        "--m",
        "6",
        "--out",
        path(&out),
        "--trace",
        path(&trace),
        "--seed",
        SEED,
        "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(manifest["k"], 4);
    assert_eq!(manifest["sizes"], serde_json::json!([6, 6, 6, 6]));
    for f in manifest["files"].as_array().unwrap() {
        let c = CiphertextFile::read_from(BufReader::new(
            File::open(out.join(f.as_str().unwrap())).unwrap(),
        ))
        .unwrap();
        assert_eq!(c.records.len(), 6);
    }

    let records = read_trace(BufReader::new(File::open(&trace).unwrap())).unwrap();
    let cfg = RunConfig::new(Algorithm::Swo(SampleSizes::Fixed(6)), 24);
    assert_eq!(records.len(), predicted_cost(&cfg));
    let output_writes = records
        .iter()
        .filter(|r| r.region == Region::Output && r.op == Op::Write)
        .count();
    assert_eq!(output_writes, 24);
}

#[test]
fn fixed_seed_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), 16);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = oblsample(&[
            "poisson",
            "--input",
            path(&data),
            "--gamma",
            "0.25",
            "--k",
            "3",
            "--out",
            path(&out),
            "--seed",
            SEED,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("samples.oblc")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn poisson_boundaries_fit_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), 40);
    let out = dir.path().join("poisson");
    let o = oblsample(&[
        "poisson",
        "--input",
        path(&data),
        "--gamma",
        "0.1",
        "--k",
        "5",
        "--out",
        path(&out),
        "--seed",
        SEED,
        "--unsafe-reveal-boundaries",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b: Value =
        serde_json::from_str(&fs::read_to_string(out.join("boundaries.json")).unwrap()).unwrap();
    let sizes: Vec<u64> = serde_json::from_value(b["sizes"].clone()).unwrap();
    assert_eq!(sizes.len() as u64, b["samples"].as_u64().unwrap());
    assert_eq!(sizes.iter().sum::<u64>(), b["real"].as_u64().unwrap());
    assert!(b["real"].as_u64().unwrap() <= 40);
    let c = CiphertextFile::read_from(BufReader::new(
        File::open(out.join("samples.oblc")).unwrap(),
    ))
    .unwrap();
    assert_eq!(c.records.len(), 40);
}

#[test]
fn budget_prints_six_significant_digits() {
    let o = oblsample(&[
        "budget",
        "--mechanism",
        "poisson",
        "--eps",
        "1",
        "--delta",
        "1e-6",
        "--gamma",
        "0.01",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("amplified epsilon: 0.0170369"), "{text}");
    // one step still pays the composition slack
    assert!(text.contains("total epsilon:     0.0898474"), "{text}");
    assert!(text.contains("total delta:       1.01000e-6"), "{text}");
}

#[test]
fn broken_scan_fails_trace_audit() {
    let base = [
        "audit",
        "trace",
        "--algorithm",
        "swo",
        "--n",
        "64",
        "--m",
        "8",
        "--runs",
        "4",
        "--seed",
        SEED,
        "--json",
    ];
    let good = oblsample(&base);
    assert_eq!(good.status.code(), Some(0), "{}", stdout(&good));

    let mut args = base.to_vec();
    args.push("--skip-terminal-read");
    let bad = oblsample(&args);
    assert_eq!(bad.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(report["trace_equal"], false);
    let d = &report["first_divergence"];
    assert!(d["expected"].as_str().unwrap().starts_with("dataset\tread"));
}

#[test]
fn bad_configuration_exits_3() {
    let o = oblsample(&[
        "audit",
        "trace",
        "--algorithm",
        "swo",
        "--n",
        "64",
        "--m",
        "7",
        "--runs",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = oblsample(&[
        "budget",
        "--mechanism",
        "shuffle",
        "--eps",
        "1",
        "--delta",
        "1e-6",
        "--n",
        "10",
        "--m",
        "5",
        "--T",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(3));
}
