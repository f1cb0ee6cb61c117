use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lacunary"));
    c.env_remove("LACUNARY_GRID_N");
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const TILES: &str = "kind = \"tiles\"\nseed = 3\n[tiles]\ncollections = 4\n";

#[test]
fn lists_every_experiment() {
    let o = bin().arg("list-experiments").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for k in ["partition", "polygon-scan", "hs-oracle", "tiles", "forest-bessel", "model-sum", "paraproduct", "size-decay"] {
        assert!(text.lines().any(|l| l.starts_with(k)), "{k} missing");
    }
}

#[test]
fn run_writes_outputs_and_reports_success() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", "kind = \"partition\"\n[geometry]\nsamples = 300\n");
    let out = dir.path().join("out");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("passed = true"));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.starts_with("config_hash,seed,metric,value,grid_n,wall_ms\n"));
    assert!(records.contains(",max_residual,"));
    assert!(out.join("summary.txt").exists());
    assert!(out.join("partition.hypotheses.csv").exists());
}

#[test]
fn malformed_triple_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "kind = \"model-sum\"\n[scan]\ntriples = [[2.0, 2.0, 2.0]]\n");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("must equal 1"));
}

#[test]
fn unknown_keys_and_kinds_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["kind = \"tiles\"\nbogus = 1\n", "kind = \"nope\"\n"] {
        let cfg = write_config(dir.path(), "c.toml", body);
        let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
}

#[test]
fn env_overrides_grid_n_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", TILES);
    let o = bin()
        .env("LACUNARY_GRID_N", "1024")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("grid_n = 1024"));
    let o = bin().env("LACUNARY_GRID_N", "x").args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_identical_reseeded_and_mismatched_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", TILES);
    let run = |out: &str, extra: &[&str]| {
        let o = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(extra)
            .output()
            .unwrap();
        assert!(o.status.success());
        dir.path().join(out).join("records.csv")
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let o = bin().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.contains(',')).skip(2).all(|l| l.ends_with(",0.000000")), "{text}");

    let c = run("c", &["--seed", "9"]);
    let o = bin().arg("compare").arg(&a).arg(&c).output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("new baseline required"));

    let other = write_config(dir.path(), "u.toml", "kind = \"tiles\"\nseed = 3\n[tiles]\ncollections = 5\n");
    let o = bin().args(["run", "--config"]).arg(&other).arg("--out").arg(dir.path().join("d")).output().unwrap();
    assert!(o.status.success());
    let o = bin().arg("compare").arg(&a).arg(dir.path().join("d/records.csv")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn failing_checks_set_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    // an overlap limit below the measured overlap
    let cfg = write_config(dir.path(), "p.toml", "kind = \"partition\"\n[geometry]\nsamples = 200\nm1_limit = 2\n");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}
