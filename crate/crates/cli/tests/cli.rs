use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
L = 4
symmetry = "z2"
maxdepth = 2
max_iterations = 40
[model]
kind = "ising"
g = 1.5
h = 0.0
[adam]
learning_rate = 0.05
[output]
checkpoint_every = 10
"#;

fn brickopt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_brickopt")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn run_writes_outputs_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = brickopt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let code = match report["status"].as_str().unwrap() {
        "converged" => 0,
        "maxdepth_exhausted" => 2,
        "stalled" => 3,
        s => panic!("unexpected status {s}"),
    };
    assert_eq!(o.status.code(), Some(code));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,depth,cost,rel_energy_error,total_infidelity,wall_ms"));
    assert_eq!(trace.lines().count() - 1, report["records"].as_array().unwrap().len());

    let m = brickopt(&["evaluate", "--circuit", out.join("circuit.json").to_str().unwrap(), "--config", &cfg]);
    assert!(m.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&m.stdout).unwrap();
    let last = report["records"].as_array().unwrap().last().unwrap()["cost"].as_f64().unwrap();
    assert!((metrics["cost"].as_f64().unwrap() - last).abs() < 1e-12);
}

#[test]
fn resume_continues_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("max_iterations = 40", "max_iterations = 25"));
    let a = dir.path().join("a");
    brickopt(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let ck = a.join("checkpoint.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ck).unwrap()).unwrap();
    v["config"]["max_iterations"] = 30.into();
    v["report"]["status"] = serde_json::Value::Null;
    std::fs::write(&ck, v.to_string()).unwrap();
    let b = dir.path().join("b");
    let o = brickopt(&["resume", "--checkpoint", ck.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.code().is_some_and(|c| c != 1), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(b.join("trace.csv")).unwrap();
    assert!(trace.lines().count() - 1 > 25);
}

#[test]
fn spectrum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = brickopt(&["spectrum", "--config", &cfg, "--levels", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,L,params,sector,n,energy");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("ising,4,g=1.5;h=0,0,0,"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("sweep");
    let o = brickopt(&["sweep", "--config", &cfg, "--vary", "model.g=1.5,2.0", "--out", out.to_str().unwrap()]);
    assert!(o.status.code().is_some_and(|c| c != 1));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("model.g=2.0").join("report.json").exists());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("typo = 3\n{CONFIG}"));
    let o = brickopt(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            brickopt::driver::RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
