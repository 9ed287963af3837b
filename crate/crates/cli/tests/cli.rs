use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rwdre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwdre"))
        .args(args)
        .env("RWDRE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_reproducible_across_workers() {
    let tmp = TempDir::new().unwrap();
    let dirs: Vec<String> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d).to_string_lossy().into_owned()).collect();
    for (dir, workers) in dirs.iter().zip(["1", "1", "3"]) {
        let out = rwdre(&["simulate", "--preset", "chain-2state", "--seed", "5", "--replicas", "6", "--workers", workers, "--out", dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = tree(Path::new(&dirs[0]));
    assert!(a.iter().any(|(n, _)| n.ends_with("replica_00005.path.txt")));
    assert!(a.iter().any(|(n, _)| n.ends_with("replica_00000.arrows.txt")));
    assert_eq!(a, tree(Path::new(&dirs[1])));
    assert_eq!(a, tree(Path::new(&dirs[2])));
    for r in records(&Path::new(&dirs[0]).join("simulate.jsonl")) {
        assert_eq!(r["seed"], 5);
        assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn classify_outputs_do_not_depend_on_workers() {
    let tmp = TempDir::new().unwrap();
    let mut bodies = Vec::new();
    for workers in ["1", "2"] {
        let dir = tmp.path().join(workers);
        let out = rwdre(&["classify", "--preset", "const-biased", "--workers", workers, "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("TransientRight"));
        bodies.push(tree(&dir));
    }
    assert_eq!(bodies[0], bodies[1]);
    let last = records(&tmp.path().join("1/classify.jsonl")).pop().unwrap();
    assert_eq!(last["verdict"], "transient_right");
    assert_eq!(last["record"], "trichotomy");
}

#[test]
fn small_batch_is_inconclusive() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "tiny.toml",
        "[model]\nkind = \"constant\"\np = 2.0\nq = 1.0\n\n[run]\nhorizon = 200.0\nlevel = 20\nreplicas = 10\n",
    );
    let out = rwdre(&["classify", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Inconclusive"));
}

#[test]
fn configuration_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let bad_ssep = write_config(
        &tmp,
        "bad.toml",
        "[model]\nkind = \"ssep\"\nalpha = 1.0\nbeta = 2.0\nrho = 0.5\nhalf_width = 50\n\n[run]\nhorizon = 10.0\n",
    );
    let out = rwdre(&["classify", "--config", &bad_ssep]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("beta"), "{}", stderr(&out));

    let no_model = write_config(&tmp, "nomodel.toml", "[run]\nhorizon = 10.0\n");
    let out = rwdre(&["classify", "--config", &no_model]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("model"), "{}", stderr(&out));

    let unknown = write_config(
        &tmp,
        "unknown.toml",
        "[model]\nkind = \"constant\"\np = 1.0\nq = 1.0\n\n[run]\nhorizon = 10.0\nspeed = 3\n",
    );
    let out = rwdre(&["classify", "--config", &unknown]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("speed"), "{}", stderr(&out));

    assert_eq!(code(&rwdre(&["classify", "--preset", "nonexistent"])), 1);
    assert_eq!(code(&rwdre(&["classify"])), 1);
    assert_eq!(code(&rwdre(&["teleport"])), 1);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = rwdre(&["classify", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn sweep_flags_points_but_succeeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "sweep.toml",
        "[model]\nkind = \"constant\"\np = 1.0\nq = 1.0\n\n[run]\nhorizon = 2000.0\nlevel = 1\nreplicas = 500\n\n\
         [sweep]\nparameter = \"p\"\nvalues = [1.0, 3.0]\n",
    );
    let out_dir = tmp.path().join("o");
    let out = rwdre(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("outside the zero-one bands"), "{}", stderr(&out));
    let points = records(&out_dir.join("sweep.jsonl"));
    assert_eq!(points.len(), 2);
    assert!(points[0]["p_rec"]["estimate"].as_f64().unwrap() >= 0.95);
    assert_eq!(points[0]["in_band"], true);
    assert_eq!(points[1]["in_band"], false);
    assert!(out_dir.join("sweep.csv").exists());
}

#[test]
fn injected_fault_fails_validation() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let out = rwdre(&["validate", "--preset", "ssep-biased", "--inject-fault", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("coalescence"), "{}", stderr(&out));
    let reports = records(&out_dir.join("validate.jsonl"));
    let coalescence = reports.iter().find(|r| r["suite"] == "coalescence").unwrap();
    assert_eq!(coalescence["passed"], false);
    assert_eq!(coalescence["fault_injected"], true);
}
