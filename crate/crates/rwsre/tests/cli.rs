use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rwsre"))
}

const TRAP_THEOREM1: &str = r#"
scenario = "theorem1"
n_grid = [1024]
replicas = 10
master_seed = 1

[model]
beta = 0.75

[model.xi]
family = "pareto"
slowly = { kind = "const", c = 1.0 }

[model.lambda]
family = "two_point"
values = [0.0196078431372549, 0.9990009990009991]
p_first = 0.33134462968155115
"#;

#[test]
fn validate_names_the_violated_condition() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, TRAP_THEOREM1).unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("theorem1 requires E rho^(beta/2) < 1"), "{err}");

    fs::write(&path, TRAP_THEOREM1.replace("theorem1", "theorem2")).unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("trap_dominated"));
}

#[test]
fn run_writes_plot_data_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t2.toml");
    let text = TRAP_THEOREM1.replace("theorem1", "theorem2").replacen(
        "master_seed = 1\n",
        "master_seed = 1\nblocks = 2000\nlimit_draws = 500\n",
        1,
    );
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--replicas", "50", "--threads", "1", "--seed", "3", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.code().is_some_and(|c| c == 0 || c == 2), "{out:?}");
    let base = out_dir.join("theorem2");
    for f in ["runs.csv", "ecdf_n1024.csv", "ks_vs_n.csv", "hill_vs_n.csv", "limit.csv", "verdict.json"] {
        assert!(base.join(f).exists(), "{f}");
    }
    let runs = fs::read_to_string(base.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 51);
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["params"]["master_seed"], 3);
    assert_eq!(verdict["per_n"][0]["n"], 1024);
}

#[test]
fn limits_writes_csv_to_stdout() {
    let out = bin()
        .args(["limits", "--law", "l2", "--params", "index=0.5,c=1", "--count", "5", "--seed", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "law,replica,value");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("l2,0,"));

    let out = bin()
        .args(["limits", "--law", "chi", "--params", "beta=0.5,c_mu=0.1", "--count", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
