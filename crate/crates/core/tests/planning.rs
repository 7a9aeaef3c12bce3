use std::path::Path;

use klplan::mpc::{plan_once, rollout_cost, run_mpc, RunStatus};
use klplan::scenario::{load_scenario, parse_scenario};
use klplan::trajectory::{parse_trajectory_csv, TrajectoryTable};

fn text(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn plan_cost_matches_replayed_rollout() {
    let p = parse_scenario(&text("fig2a")).unwrap().problem;
    let plan = plan_once(&p, &p.start, 5).unwrap();
    let replay = rollout_cost(&p, &plan.actions, &p.start).unwrap();
    assert_eq!(replay.cost, plan.rollout.cost);
    assert_eq!(plan.rollout.beliefs.len(), p.planner.horizon);
    let again = plan_once(&p, &p.start, 5).unwrap();
    assert_eq!(again.actions, plan.actions);
}

#[test]
fn planned_actions_respect_bounds() {
    let p = parse_scenario(&text("fig1")).unwrap().problem;
    let plan = plan_once(&p, &p.start, 9).unwrap();
    let (lo, hi) = p.env.action_bounds();
    for t in 0..p.planner.horizon {
        let u = p.step_action(&plan.actions, t);
        for i in 0..u.len() {
            assert!(lo[i] <= u[i] && u[i] <= hi[i], "step {t}: {u}");
        }
    }
}

#[test]
fn start_within_tolerance_needs_no_planning() {
    let mut doc: serde_json::Value = serde_json::from_str(&text("fig1")).unwrap();
    doc["start"]["mean"] = doc["goal"]["mean"].clone();
    doc["planner"]["eta"] = 1e6.into();
    let p = parse_scenario(&doc.to_string()).unwrap().problem;
    let log = run_mpc(&p, 0).unwrap();
    assert_eq!(log.status, RunStatus::Converged);
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.planning_calls(), 0);
}

#[test]
fn step_budget_is_respected() {
    let mut doc: serde_json::Value = serde_json::from_str(&text("fig1")).unwrap();
    doc["planner"]["max_mpc_steps"] = 2.into();
    doc["planner"]["eta"] = 1e-9.into();
    let p = parse_scenario(&doc.to_string()).unwrap().problem;
    let log = run_mpc(&p, 4).unwrap();
    assert_eq!(log.status, RunStatus::MaxSteps);
    assert_eq!(log.planning_calls(), 2);
    assert_eq!(log.records.len(), 3);
    let table = TrajectoryTable::from_log(&p, &log);
    assert_eq!(parse_trajectory_csv(&table.to_csv()).unwrap(), table);
    assert!(table.rows.windows(2).all(|w| w[0].ms < w[1].ms));
}

#[test]
fn mpc_is_reproducible() {
    let p = load_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/fig2a.json"))
        .unwrap()
        .problem;
    let a = run_mpc(&p, 21).unwrap();
    let b = run_mpc(&p, 21).unwrap();
    assert_eq!(a.divergences(), b.divergences());
    assert_eq!(a.final_record().true_state, b.final_record().true_state);
}
