use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scalar-closure"));
    c.env_remove("SCALAR_CLOSURE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL_STRAIN: &str = r#"
[strain]
points = 399
half_width = 1500.0
source_width = 0.04
probes = 11

[strain.mc]
realizations = 40
particles = 50
dt = 0.02
"#;

#[test]
fn strain_run_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strain.toml");
    fs::write(&cfg, SMALL_STRAIN).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "strain", "--t", "1", "--kappa", "1", "--g", "1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("strain.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("x,exact,closure,mc,mc_stderr"));
    assert_eq!(lines.count(), 11);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "strain");
    assert_eq!(manifest["criterion"], 1);
    assert_eq!(manifest["config"]["parameters"]["kappa"], 1.0);
    // Defaults not set in the file are recorded too.
    assert_eq!(manifest["config"]["parameters"]["stretch"], 0.05);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn identical_runs_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["propagator-check", "--seed", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        sums.push((m["config_sha256"].clone(), m["outputs"].clone()));
    }
    assert_eq!(sums[0], sums[1]);
    for file in ["propagator_wick.csv", "propagator_truncation.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(file)).unwrap(), fs::read(dir.path().join("b").join(file)).unwrap());
    }
}

#[test]
fn different_seed_changes_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |seed: &str| {
        let out = dir.path().join(seed);
        assert_eq!(code(&run(&["run", "gbm-moments", "--seed", seed, "--out", out.to_str().unwrap()])), 0);
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        m["config_sha256"].as_str().unwrap().to_string()
    };
    assert_ne!(hash("1"), hash("2"));
}

#[test]
fn negative_kappa_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "strain", "--kappa", "-1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o_str = out.to_str().unwrap();
    assert_eq!(code(&run(&["run", "gbm-moments", "--gammas", "1,2", "--out", o_str])), 2);
    assert_eq!(code(&run(&["run", "nonsense"])), 2);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[gbm-moments]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["run", "gbm-moments", "--config", bad.to_str().unwrap(), "--out", o_str])), 2);
    fs::write(&bad, "experiment = \"strain\"\n").unwrap();
    assert_eq!(code(&run(&["run", "gbm-moments", "--config", bad.to_str().unwrap(), "--out", o_str])), 2);

    let o = bin().args(["run", "gbm-moments", "--out", o_str]).env("SCALAR_CLOSURE_THREADS", "0").output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn report_passes_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["run", "gbm-moments", "--out", out.to_str().unwrap()])), 0);
    let manifest = out.join("manifest.json");
    let first = run(&["report", manifest.to_str().unwrap()]);
    let second = run(&["report", manifest.to_str().unwrap()]);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    assert!(text.contains("✓"));
    assert!(!text.contains("✗"));
    assert!(text.contains("criterion 6"));
}

#[test]
fn tolerance_breach_exits_3_and_is_highlighted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, "[propagator-check]\ntolerance = -1.0\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "propagator-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("criterion 4"));
    let r = run(&["report", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code(&r), 3);
    let text = stdout(&r);
    assert!(text.lines().any(|l| l.starts_with(">✗ raw Wick sum")));
    assert!(text.contains("FAIL"));
}

#[test]
fn report_rejects_missing_or_altered_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["report", dir.path().join("none.json").to_str().unwrap()])), 2);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["gbm-moments", "--out", out.to_str().unwrap()])), 0);
    let manifest = out.join("manifest.json");
    let table = out.join("gbm_moments.csv");
    fs::write(&table, "altered\n").unwrap();
    assert_eq!(code(&run(&["report", manifest.to_str().unwrap()])), 2);
    fs::remove_file(&table).unwrap();
    assert_eq!(code(&run(&["report", manifest.to_str().unwrap()])), 2);
}

#[test]
fn csv_uses_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["gbm-moments", "--out", out.to_str().unwrap()])), 0);
    let table = fs::read_to_string(Path::new(&out).join("gbm_moments.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    for cell in row.split(',') {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{cell}");
    }
}
