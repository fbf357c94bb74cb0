//! End-to-end tests of the fral binary: exit codes, run artifacts,
//! overrides, reporting, and plotting.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY_CONFIG: &str = r#"strategy = "JIN"
rounds = 2
budget = 3
labeled_fraction = 0.2
seed = 11
architecture = "linear"
metric = "accuracy"

[dataset.synthetic]
name = "two-group-gaussians"
seed = 9
n = 140

[train]
epochs = 3

[adv_train]
epochs = 3
trades_beta = 1.0

[eval_attack]
steps = 2
"#;

fn fral(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fral"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FRAL_RESULTS_DIR")
        .output()
        .expect("spawn fral")
}

fn write_toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.toml");
    std::fs::write(&path, TOY_CONFIG).unwrap();
    path
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn run_produces_one_metrics_row_per_round_plus_init() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    let out = fral(tmp.path(), &["run", "toy.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let rows = data_rows(&tmp.path().join("run/metrics.csv"));
    assert_eq!(rows.len(), 3);
    assert!(tmp.path().join("run/summary.json").exists());
    // The stored config is the input text, byte for byte.
    let copied = std::fs::read_to_string(tmp.path().join("run/config.toml")).unwrap();
    assert_eq!(copied, TOY_CONFIG);
}

#[test]
fn unknown_config_key_exits_2_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = TOY_CONFIG.replace("budget = 3", "budgett = 3");
    std::fs::write(tmp.path().join("bad.toml"), bad).unwrap();
    let out = fral(tmp.path(), &["run", "bad.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("budgett"), "{}", stderr_of(&out));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn strategy_override_is_recorded_in_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    let out = fral(
        tmp.path(),
        &["run", "toy.toml", "--override", "strategy=RAND", "--out", "run"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let resolved = std::fs::read_to_string(tmp.path().join("run/config.resolved.toml")).unwrap();
    assert!(resolved.contains("strategy = \"RAND\""), "{resolved}");
    let summary = std::fs::read_to_string(tmp.path().join("run/summary.json")).unwrap();
    assert!(summary.contains("\"strategy\": \"RAND\""), "{summary}");
    // The untouched copy still says JIN.
    let copied = std::fs::read_to_string(tmp.path().join("run/config.toml")).unwrap();
    assert!(copied.contains("strategy = \"JIN\""));
}

#[test]
fn report_aggregates_multiple_seeds_into_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    for seed in ["3", "4"] {
        let out = fral(
            tmp.path(),
            &[
                "run",
                "toy.toml",
                "--override",
                "strategy=RAND",
                "--override",
                &format!("seed={seed}"),
                "--out",
                &format!("run{seed}"),
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }

    let out = fral(tmp.path(), &["report", "run3", "run4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("RAND"), "{table}");
    assert!(table.contains("INIT"), "{table}");

    let out = fral(tmp.path(), &["report", "run3", "run4", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_of(&out);
    assert!(json.trim_start().starts_with('{'), "{json}");
    assert!(json.contains("\"strategies\""), "{json}");
}

#[test]
fn plot_renders_every_kind() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    let out = fral(tmp.path(), &["run", "toy.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let out = fral(tmp.path(), &["plot", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for name in [
        "metric_curves.svg",
        "label_distribution.svg",
        "per_class_bars.svg",
    ] {
        assert!(tmp.path().join("run/plots").join(name).exists(), "{name}");
    }

    let out = fral(tmp.path(), &["plot", "run", "--kind", "metric-curves"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out).lines().count(), 1);
}

#[test]
fn results_root_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    let root = tmp.path().join("store");
    let out = Command::new(env!("CARGO_BIN_EXE_fral"))
        .args(["run", "toy.toml"])
        .current_dir(tmp.path())
        .env("FRAL_RESULTS_DIR", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let runs: Vec<_> = std::fs::read_dir(&root).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let dir = runs[0].as_ref().unwrap().path();
    assert!(dir.join("metrics.csv").exists());
}

#[test]
fn validate_config_checks_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy(tmp.path());
    let out = fral(tmp.path(), &["validate-config", "toy.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stdout_of(&out).starts_with("ok:"));
    assert!(std::fs::read_dir(tmp.path()).unwrap().count() == 1, "no run dir");

    let out = fral(
        tmp.path(),
        &["validate-config", "toy.toml", "--override", "rounds=0"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_map_to_the_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // Missing config file is a config error.
    let out = fral(tmp.path(), &["run", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
    // Reporting a directory without results is a runtime error.
    let out = fral(tmp.path(), &["report", "empty"]);
    assert_eq!(out.status.code(), Some(3));
    // Refusing to clobber an existing run is a runtime error too.
    write_toy(tmp.path());
    let out = fral(tmp.path(), &["run", "toy.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let out = fral(tmp.path(), &["run", "toy.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("already contains results"));
}

#[test]
fn tabular_dataset_path_resolves_against_the_config_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let nested = tmp.path().join("configs");
    std::fs::create_dir(&nested).unwrap();

    let mut rows = String::from("feature_a,feature_b,label,group\n");
    for i in 0..80 {
        let class = i % 2;
        let group = (i / 2) % 2;
        rows.push_str(&format!(
            "{:.2},{:.2},{class},{group}\n",
            0.1 * (i % 7) as f64 + class as f64,
            0.2 * (i % 5) as f64 + group as f64
        ));
    }
    std::fs::write(nested.join("toy.csv"), rows).unwrap();

    let config = r#"strategy = "RAND"
rounds = 1
budget = 2
labeled_fraction = 0.3
seed = 5
architecture = "linear"

[dataset.tabular]
path = "toy.csv"

[train]
epochs = 2

[adv_train]
epochs = 2

[eval_attack]
steps = 2
"#;
    std::fs::write(nested.join("tab.toml"), config).unwrap();

    // Invoked from the tempdir root, so the csv is only reachable relative
    // to the config file, not the working directory.
    let out = fral(tmp.path(), &["run", "configs/tab.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(data_rows(&tmp.path().join("run/metrics.csv")).len(), 2);
}
