use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efelab"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn efelab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn verify_default_passes() {
    let o = run(&["verify", "--seeds", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["identity", "kind", "tolerance", "max_violation", "failures"]);
    assert!(rows.iter().all(|r| r[4] == "0"));
}

#[test]
fn verify_with_tiny_tolerance_fails() {
    let o = run(&["verify", "--seeds", "3", "--tolerance", "1e-18"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["plan", "--model", "/no/such/model.toml"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--dims", "3x3"]).status.code(), Some(2));
    assert_eq!(run(&["plan"]).status.code(), Some(2));
    let cue = fixture("cue_task.toml");
    let cue = cue.to_str().unwrap();
    assert_eq!(run(&["plan", "--model", cue, "--functional", "vfe"]).status.code(), Some(2));
    assert_eq!(run(&["plan", "--model", cue, "--gamma", "0"]).status.code(), Some(2));
    assert_eq!(run(&["plan", "--model", cue, "--eta", "1.5"]).status.code(), Some(2));
}

#[test]
fn invalid_model_file_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "num_states = 2\nnum_obs = 2\nnum_actions = 1\nhorizon = 1\n").unwrap();
    let o = run(&["plan", "--model", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("likelihood"));
}

#[test]
fn policy_cap_is_a_runtime_failure() {
    let cue = fixture("cue_task.toml");
    let o = run(&["plan", "--model", cue.to_str().unwrap(), "--horizon", "17"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("131072"));
}

#[test]
fn cue_plan_rows() {
    let cue = fixture("cue_task.toml");
    for (f, go) in [("efe", 2.0 / 3.0), ("feef", 2.0 / 3.0), ("fef", 0.5)] {
        let o = run(&["plan", "--model", cue.to_str().unwrap(), "--functional", f]);
        assert_eq!(o.status.code(), Some(0));
        let (header, rows) = csv_rows(&stdout(&o));
        assert_eq!(rows.len(), 2);
        let p = column(&header, "probability");
        let probs: Vec<f64> = rows.iter().map(|r| r[p].parse().unwrap()).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(rows[1][column(&header, "actions")], "go_cue");
        assert!((probs[1] - go).abs() < 1e-9, "{f}: {}", probs[1]);
    }
}

#[test]
fn single_action_model_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.toml");
    let (m, pref) = efelab::model::random_model(2, 2, 1, 1, 4);
    efelab::model::ModelFile::new(m)
        .with_preferences(pref)
        .save(&p)
        .unwrap();
    let o = run(&["plan", "--model", p.to_str().unwrap()]);
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&header, "probability")], "1.00000000000e0");
}

#[test]
fn text_format_is_key_value() {
    let cue = fixture("cue_task.toml");
    let o = run(&["plan", "--model", cue.to_str().unwrap(), "--format", "text"]);
    let text = stdout(&o);
    assert!(text.starts_with("functional=efe\n"));
    assert!(text.contains("[policy 1]\ntotal=4.05465108108e-1\nprobability=6.66666666667e-1\n"));
}

#[test]
fn simulate_cue_goes_to_cue_first() {
    let cue = fixture("cue_task.toml");
    let o = run(&["simulate", "--model", cue.to_str().unwrap(), "--steps", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][column(&header, "action")], "1");
    // Fixture context is 1, so the cue observation is cue1.
    assert_eq!(rows[0][column(&header, "observation")], "2");
    for r in &rows {
        let b: f64 = (0..4)
            .map(|x| r[column(&header, &format!("belief_{x}"))].parse::<f64>().unwrap())
            .sum();
        assert!((b - 1.0).abs() < 1e-9);
    }
}

#[test]
fn simulate_defaults_to_model_horizon() {
    let bandit = fixture("bandit.toml");
    let o = run(&["simulate", "--model", bandit.to_str().unwrap()]);
    let (_, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cue = fixture("cue_task.toml");
    let cue = cue.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["verify", "--seeds", "5", "--format", "text"],
        vec!["plan", "--model", cue, "--functional", "gfe", "--eta", "0.25"],
        vec!["simulate", "--model", cue, "--steps", "5", "--sample", "--seed", "11"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let outs: Vec<Vec<u8>> = (0..2)
            .map(|k| {
                let p = dir.path().join(format!("{i}_{k}.out"));
                let mut a = args.clone();
                a.extend(["--out", p.to_str().unwrap()]);
                assert_eq!(run(&a).status.code(), Some(0), "{args:?}");
                std::fs::read(p).unwrap()
            })
            .collect();
        assert!(!outs[0].is_empty());
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
}

#[test]
fn fixtures_subcommand_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fixtures", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["cue_task.toml", "bandit.toml"] {
        let a = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let b = std::fs::read_to_string(fixture(name)).unwrap();
        assert_eq!(a, b);
    }
}
