use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cthermo(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cthermo"));
    cmd.args(args).env_remove("CTHERMO_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fig2b_output_is_bit_identical_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fig2b.toml", "[grid]\nsamples = 50\n");
    let mut files = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = cthermo(
            &["fig2b", "--config", &cfg, "--out", out.to_str().unwrap()],
            &[("CTHERMO_THREADS", threads)],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(out.join("fig2b.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert!(text.starts_with("t,betaW,deltaC,deltaC_plus_D,W_LR,sigma2W\n"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "bad.toml", "[model]\nomgea = 1.0\n");
    let range = write_config(tmp.path(), "range.toml", "[model]\na = 2.0\n");
    let missing = tmp.path().join("nope.toml");
    for args in [
        vec!["fig2b", "--config", unknown.as_str()],
        vec!["fig2b", "--config", range.as_str()],
        vec!["fig2b", "--config", missing.to_str().unwrap()],
        vec!["fig2b", "--dt", "-1"],
        vec!["sweep"],
        vec!["fig9"],
        vec!["fig2b", "--format", "xml"],
    ] {
        let o = cthermo(&args, &[]);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let o = cthermo(&["fig2b", "--config", &range], &[]);
    assert!(stderr(&o).contains("model.a"));
    let o = cthermo(&["fig2b"], &[("CTHERMO_THREADS", "many")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fig3.toml", "[grid]\nsamples = 60\n");
    let o = cthermo(
        &["fig3", "--config", &cfg, "--dt", "0.2", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("fig3"));
    assert!(!tmp.path().join("fig3.csv").exists());
}

#[test]
fn json_report_and_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = cthermo(&["ft-check", "--out", out, "--format", "json"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("ft-check.json")).unwrap()).unwrap();
    assert!((v["integral_ft"].as_f64().unwrap() - 1.0).abs() < 1e-10);

    let cfg = write_config(tmp.path(), "c.toml", "scenario = \"fig3\"\n");
    let o = cthermo(&["criteria", "--config", &cfg, "--out", out], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("fig3-criteria.json")).unwrap()).unwrap();
    let flags: Vec<bool> = v["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["nonunitary_criterion"].as_bool().unwrap())
        .collect();
    assert_eq!(flags, [true, false, false]);

    let o = cthermo(&["criteria"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.toml",
        "[sweep]\nparameter = \"omega\"\nvalues = [0.5, 0.995, 1.5]\n[output]\nformat = \"csv\"\n",
    );
    let o = cthermo(&["sweep", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
