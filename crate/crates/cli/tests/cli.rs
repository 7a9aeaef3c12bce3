use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use klplan::scenario::load_scenario;
use klplan_cli::commands::{cmd_mpc, cmd_plan, cmd_plot, cmd_verify, PLOT_FILE, SUMMARY_FILE, TRAJECTORY_FILE};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn klplan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_klplan"))
}

fn polylines(svg: &str, class: &str) -> Vec<String> {
    let marker = format!(r#"class="{class}" points=""#);
    svg.match_indices(&marker)
        .map(|(i, m)| {
            let rest = &svg[i + m.len()..];
            rest[..rest.find('"').unwrap()].to_string()
        })
        .collect()
}

#[test]
fn plan_writes_artifacts_and_plot_reproduces_svg() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_scenario(&scenario_path("fig2a")).unwrap();
    let a = cmd_plan(&loaded, dir.path(), None).unwrap();
    for f in [TRAJECTORY_FILE, "run.jsonl", "metadata.json", "scenario.json", PLOT_FILE] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let h = loaded.problem.planner.horizon;
    assert_eq!(a.table.rows.len(), h + 1);

    let svg = std::fs::read_to_string(dir.path().join(PLOT_FILE)).unwrap();
    assert_eq!(polylines(&svg, "path").len(), 1);
    assert_eq!(svg.matches(r#"class="belief-1sigma""#).count(), h);
    assert_eq!(svg.matches(r#"class="belief-2sigma""#).count(), h);

    let replot = cmd_plot(dir.path(), &dir.path().join("replot.svg")).unwrap();
    assert_eq!(replot, svg);
}

#[test]
fn mixture_planner_draws_distinct_component_paths() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_scenario(&scenario_path("fig2g")).unwrap();
    cmd_plan(&loaded, dir.path(), None).unwrap();
    let svg = std::fs::read_to_string(dir.path().join(PLOT_FILE)).unwrap();
    let distinct: BTreeSet<String> = polylines(&svg, "component-path").into_iter().collect();
    assert!(distinct.len() >= 2, "{distinct:?}");
}

#[test]
fn single_mpc_run_writes_into_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_scenario(&scenario_path("fig1")).unwrap();
    let s = cmd_mpc(&loaded, dir.path(), 1, Some(3)).unwrap();
    assert_eq!(s.n_runs, 1);
    assert_eq!(s.runs[0].seed, 3);
    assert_eq!(s.exit_code(), 0);
    assert!(dir.path().join(TRAJECTORY_FILE).exists());
    assert!(dir.path().join(SUMMARY_FILE).exists());
    assert!(!dir.path().join("run_000").exists());
}

#[test]
fn multiple_runs_use_consecutive_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_scenario(&scenario_path("fig1")).unwrap();
    let s = cmd_mpc(&loaded, dir.path(), 2, Some(10)).unwrap();
    assert_eq!(s.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11]);
    assert!(dir.path().join("run_001").join(TRAJECTORY_FILE).exists());
    assert_eq!(s.converged + s.max_steps + s.infeasible + s.failed, 2);
}

#[test]
fn verify_suite_passes_and_rejects_unknown_suites() {
    let report = cmd_verify("reductions", 10, 1).unwrap();
    assert!(report.passed());
    assert_eq!(report.reductions.len(), 4);
    assert!(cmd_verify("nonsense", 10, 1).is_err());
}

#[test]
fn invalid_scenarios_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("fig1")).unwrap()).unwrap();
    doc["planner"]["unexpected"] = 1.into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = klplan()
        .args(["plan", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unexpected"));

    std::fs::write(&path, "{ not json").unwrap();
    let out = klplan()
        .args(["mpc", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_rejects_mismatched_tables() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_scenario(&scenario_path("fig2a")).unwrap();
    cmd_plan(&loaded, dir.path(), None).unwrap();
    let arm = std::fs::read_to_string(scenario_path("arm_pole")).unwrap();
    std::fs::write(dir.path().join("scenario.json"), arm).unwrap();
    let err = cmd_plot(dir.path(), &dir.path().join("x.svg")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
