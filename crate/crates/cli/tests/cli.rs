use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridltl"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn compile_writes_artifacts_and_reports_distances() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["compile", "--scenario"])
        .arg(scenario("prune.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("aux    2"), "{stdout}");
    assert!(stdout.contains("local CNF fragment: yes"));
    for f in ["automaton.txt", "decomposition.txt", "graph.dot"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let dot = std::fs::read_to_string(out.path().join("graph.dot")).unwrap();
    assert!(dot.contains("color=red"));
}

#[test]
fn compile_flags_missions_without_a_decomposable_path() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["compile", "--scenario"])
        .arg(scenario("conserv.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("no decomposable accepting path"));
    assert!(stdout.contains("local CNF fragment: no"));
}

#[test]
fn run_writes_logs_and_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--snapshot-every", "5", "--scenario"])
        .arg(scenario("env1.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let events = std::fs::read_to_string(out.path().join("events.jsonl")).unwrap();
    let kinds: Vec<String> = events
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert!(kinds.iter().any(|k| k == "symbol_reselect"));
    assert_eq!(kinds.iter().filter(|k| *k == "accepting").count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["outcome"], "success");
    assert!(out.path().join("trajectories.csv").exists());
    assert!(out.path().join("map_000005.pgm").exists());

    let o = bin()
        .args(["run", "--max-steps", "3", "--scenario"])
        .arg(scenario("maze.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = bin()
        .args(["run", "--scenario"])
        .arg(scenario("nba1_l1.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_random_choice() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--seed", "1", "--scenario"])
        .arg(scenario("env1.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let events = std::fs::read_to_string(out.path().join("events.jsonl")).unwrap();
    assert!(!events.contains("symbol_reselect"));
}

#[test]
fn sweep_prints_one_row_per_range() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep", "--values", "1,8", "--scenario"])
        .arg(scenario("maze.scn"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "sensor_range,t_f1");
    assert_eq!(rows.len(), 3);
    assert_eq!(
        std::fs::read_to_string(out.path().join("sweep.csv")).unwrap(),
        stdout
    );
}

#[test]
fn bad_scenario_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.scn");
    std::fs::write(
        &p,
        "size = 3 3\n[robots]\n1 = 0 0\n[formula]\nF p1@nowhere\n",
    )
    .unwrap();
    let o = bin()
        .args(["compile", "--scenario"])
        .arg(&p)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("nowhere"));
}
