use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l2o-cert"))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn verify_kernels_succeeds() {
    let out = bin().arg("verify-kernels").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("hold"));
}

#[test]
fn demo_is_complete_and_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = bin().args(["demo", "--seed", "3", "--out"]).arg(dir.path()).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let tree = read_tree(a.path());
    for f in [
        "problems.json",
        "alpha0.json",
        "prior.json",
        "posterior.json",
        "alpha_star.json",
        "bounds.json",
        "bounds.csv",
        "training_history.csv",
        "summary.csv",
        "comparison.csv",
    ] {
        assert!(tree.contains_key(f), "missing {f}");
    }
    assert!(tree.keys().any(|k| k.starts_with("trajectories")));
    assert_eq!(tree, read_tree(b.path()));
}

#[test]
fn stages_run_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    let demo = bin().args(["demo", "--print-config"]).output().unwrap();
    assert!(demo.status.success(), "{}", String::from_utf8_lossy(&demo.stderr));
    std::fs::write(&cfg, &demo.stdout).unwrap();
    let out_dir = dir.path().join("run");
    for stage in ["train", "certify", "compare"] {
        let out = bin().arg(stage).arg("--config").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(out_dir.join("bounds.csv").is_file());
    assert!(out_dir.join("comparison.csv").is_file());
}

#[test]
fn certify_without_training_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, bin().args(["demo", "--print-config"]).output().unwrap().stdout).unwrap();
    let out = bin().arg("certify").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("empty")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn malformed_config_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"problem\": [\n}\n").unwrap();
    let out = bin().arg("train").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "{err}");
}
