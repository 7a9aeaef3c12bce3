//! Command implementations behind the `klplan` binary.

use std::fs;
use std::path::{Path, PathBuf};

use klplan::distributions::{Gaussian, GoalSpec};
use klplan::error::{Error, Result};
use klplan::mpc::{plan_once, run_mpc, Problem, RunStatus, TrajectoryLog};
use klplan::oracles::{self, Report};
use klplan::scenario::{LoadedScenario, Scenario};
use klplan::seeding;
use klplan::trajectory::{parse_trajectory_csv, TrajectoryTable};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::svg;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RUN_LOG_FILE: &str = "run.jsonl";
pub const METADATA_FILE: &str = "metadata.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const PLOT_FILE: &str = "plot.svg";
pub const SUMMARY_FILE: &str = "summary.json";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn to_json_line(v: &Value) -> String {
    let mut s = v.to_string();
    s.push('\n');
    s
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<_>>())
}

/// Everything needed to reproduce a run.
fn metadata(loaded: &LoadedScenario, command: &str, seed: u64, termination_offset: f64) -> Value {
    let s = &loaded.scenario;
    json!({
        "command": command,
        "scenario": s.name,
        "config_hash": s.config_hash(),
        "seed": seed,
        "projection": s.projection,
        "lambda_mode": s.planner.lambda_mode,
        "termination_offset": termination_offset,
        "defaulted": loaded.defaulted,
        "versions": {
            "klplan": env!("CARGO_PKG_VERSION"),
            "format": 1,
        },
    })
}

fn scenario_with_seed(loaded: &LoadedScenario, seed: u64) -> Scenario {
    let mut s = loaded.scenario.clone();
    s.seed = seed;
    s
}

#[derive(Clone, Debug)]
pub struct PlanArtifacts {
    pub dir: PathBuf,
    pub table: TrajectoryTable,
    pub components: Vec<TrajectoryTable>,
    pub cost: f64,
}

/// One planning call from the start belief.
///
/// Writes the predicted trajectory, one table per planner mixture
/// component, the optimizer trace, metadata and an SVG.
pub fn cmd_plan(loaded: &LoadedScenario, out: &Path, seed: Option<u64>) -> Result<PlanArtifacts> {
    let problem = &loaded.problem;
    let seed = seed.unwrap_or(loaded.scenario.seed);
    create_dir(out)?;
    let offset = problem.termination_offset()?;
    let plan = plan_once(problem, &problem.start, seeding::derive_seed(seed, &[0]))?;
    let start_divergence = problem.goal_cost(&problem.start)? - offset;
    let table = TrajectoryTable::from_plan_result(problem, &plan, start_divergence);
    write(&out.join(TRAJECTORY_FILE), table.to_csv())?;

    let mut components = Vec::new();
    for (k, (_, rollout)) in plan.component_rollouts.iter().enumerate() {
        let actions = rollout_actions(problem, &plan, k);
        let t = TrajectoryTable::from_plan(problem, start_divergence, &actions, rollout);
        write(&out.join(format!("component_{k}.csv")), t.to_csv())?;
        components.push(t);
    }

    let mut log = String::new();
    for it in &plan.cem.trace {
        log.push_str(&to_json_line(&json!({ "iteration": it })));
    }
    log.push_str(&to_json_line(&json!({
        "cost": plan.rollout.cost,
        "actions": vec_json(&plan.actions),
        "collisions": plan.rollout.collisions,
        "component_weights": plan.component_rollouts.iter().map(|(w, _)| *w).collect::<Vec<_>>(),
    })));
    write(&out.join(RUN_LOG_FILE), log)?;
    write(&out.join(METADATA_FILE), pretty(&metadata(loaded, "plan", seed, offset)))?;
    write(&out.join(SCENARIO_FILE), scenario_with_seed(loaded, seed).to_json())?;
    write(&out.join(PLOT_FILE), svg::render(problem, Some(&table), &components))?;
    Ok(PlanArtifacts {
        dir: out.to_path_buf(),
        table,
        components,
        cost: plan.rollout.cost,
    })
}

fn rollout_actions(problem: &Problem, plan: &klplan::mpc::Plan, k: usize) -> DVector<f64> {
    match &plan.cem.distribution {
        klplan::cem::PlanDistribution::Gmm(g) => problem.to_physical(g.components()[k].mean()),
        klplan::cem::PlanDistribution::Gaussian(_) => plan.actions.clone(),
    }
}

/// Nearest goal-mixture component by Mahalanobis distance under each
/// component's covariance.
pub fn attribute(goal: &GoalSpec, state: &DVector<f64>) -> Option<(usize, Vec<f64>)> {
    let GoalSpec::Gmm(gmm) = goal else {
        return None;
    };
    let d: Vec<f64> = gmm
        .components()
        .iter()
        .map(|c: &Gaussian| c.mahalanobis_sq(state).map(f64::sqrt).unwrap_or(f64::INFINITY))
        .collect();
    let best = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b]))?;
    Some((best, d))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub status: Option<RunStatus>,
    pub error: Option<String>,
    pub steps: usize,
    pub terminal_state: Vec<f64>,
    pub terminal_mean: Vec<f64>,
    pub final_divergence: Option<f64>,
    /// Sigma points in collision summed over the executed steps.
    pub collisions: usize,
    pub attribution: Option<usize>,
    pub mahalanobis: Option<Vec<f64>>,
    pub divergences: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MpcSummary {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_runs: usize,
    pub converged: usize,
    pub max_steps: usize,
    pub infeasible: usize,
    pub failed: usize,
    /// Runs attributed to each goal-mixture component.
    pub attribution_counts: Vec<usize>,
    pub runs: Vec<RunSummary>,
}

impl MpcSummary {
    /// 0 when every run finished, 3 if any was infeasible, 4 on failures.
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 {
            4
        } else if self.infeasible > 0 {
            3
        } else {
            0
        }
    }
}

fn run_log_jsonl(log: &TrajectoryLog) -> String {
    let mut out = String::new();
    for r in &log.records {
        out.push_str(&to_json_line(&json!({
            "step": r.step,
            "action": r.action.as_ref().map(vec_json),
            "mean": vec_json(&r.mean),
            "covariance": klplan::scenario::matrix_rows(&r.covariance),
            "divergence": r.divergence,
            "cost": if r.cost.is_nan() { Value::Null } else { json!(r.cost) },
            "sim_ms": r.sim_ms,
            "wall_ms": r.wall_ms,
            "collisions": r.collisions,
            "true_state": vec_json(&r.true_state),
            "cem": r.cem_trace,
        })));
    }
    out.push_str(&to_json_line(&json!({
        "status": log.status,
        "termination_offset": log.termination_offset,
    })));
    out
}

fn summarize(problem: &Problem, run: usize, seed: u64, result: &Result<TrajectoryLog>) -> RunSummary {
    match result {
        Ok(log) => {
            let last = log.final_record();
            let attr = attribute(&problem.goal, &last.mean);
            RunSummary {
                run,
                seed,
                status: Some(log.status),
                error: None,
                steps: log.planning_calls(),
                terminal_state: last.true_state.iter().copied().collect(),
                terminal_mean: last.mean.iter().copied().collect(),
                final_divergence: Some(last.divergence),
                collisions: log.records.iter().filter_map(|r| r.collisions).sum(),
                attribution: attr.as_ref().map(|a| a.0),
                mahalanobis: attr.map(|a| a.1),
                divergences: log.divergences(),
            }
        }
        Err(e) => RunSummary {
            run,
            seed,
            status: None,
            error: Some(e.to_string()),
            steps: 0,
            terminal_state: Vec::new(),
            terminal_mean: Vec::new(),
            final_divergence: None,
            collisions: 0,
            attribution: None,
            mahalanobis: None,
            divergences: Vec::new(),
        },
    }
}

/// Executes `n_runs` MPC episodes with seeds `seed + run_index`.
///
/// With one run the artifacts go straight into `out`; otherwise each run
/// gets `out/run_NNN`. A failing run is recorded in the summary and does not
/// discard the others.
pub fn cmd_mpc(loaded: &LoadedScenario, out: &Path, n_runs: usize, seed: Option<u64>) -> Result<MpcSummary> {
    if n_runs == 0 {
        return Err(Error::Validation {
            field: "runs".into(),
            reason: "need at least one run".into(),
        });
    }
    let problem = &loaded.problem;
    let base = seed.unwrap_or(loaded.scenario.seed);
    create_dir(out)?;
    let offset = problem.termination_offset()?;
    let results: Vec<(u64, Result<TrajectoryLog>)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let s = base.wrapping_add(i as u64);
            (s, run_mpc(problem, s))
        })
        .collect();

    let mut runs = Vec::with_capacity(n_runs);
    for (i, (s, result)) in results.iter().enumerate() {
        let dir = if n_runs == 1 { out.to_path_buf() } else { out.join(format!("run_{i:03}")) };
        create_dir(&dir)?;
        write(&dir.join(METADATA_FILE), pretty(&metadata(loaded, "mpc", *s, offset)))?;
        write(&dir.join(SCENARIO_FILE), scenario_with_seed(loaded, *s).to_json())?;
        if let Ok(log) = result {
            let table = TrajectoryTable::from_log(problem, log);
            write(&dir.join(TRAJECTORY_FILE), table.to_csv())?;
            write(&dir.join(RUN_LOG_FILE), run_log_jsonl(log))?;
            write(&dir.join(PLOT_FILE), svg::render(problem, Some(&table), &[]))?;
        }
        runs.push(summarize(problem, i, *s, result));
    }
    let count = |st: RunStatus| runs.iter().filter(|r| r.status == Some(st)).count();
    let n_components = match &problem.goal {
        GoalSpec::Gmm(g) => g.weights().len(),
        _ => 0,
    };
    let mut attribution_counts = vec![0; n_components];
    for r in &runs {
        if let Some(a) = r.attribution {
            attribution_counts[a] += 1;
        }
    }
    let summary = MpcSummary {
        scenario: loaded.scenario.name.clone(),
        config_hash: loaded.scenario.config_hash(),
        seed: base,
        n_runs,
        converged: count(RunStatus::Converged),
        max_steps: count(RunStatus::MaxSteps),
        infeasible: count(RunStatus::Infeasible),
        failed: runs.iter().filter(|r| r.error.is_some()).count(),
        attribution_counts,
        runs,
    };
    write(&out.join(SUMMARY_FILE), pretty(&summary))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub instances: usize,
    pub seed: u64,
    pub reductions: Vec<Report>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.reductions.iter().all(Report::passed)
    }
}

pub fn cmd_verify(suite: &str, instances: usize, seed: u64) -> Result<VerifyReport> {
    if suite != "reductions" {
        return Err(Error::Validation {
            field: "suite".into(),
            reason: format!("unknown suite `{suite}` (available: reductions)"),
        });
    }
    Ok(VerifyReport {
        suite: suite.to_string(),
        instances,
        seed,
        reductions: oracles::run_reduction_suite(instances, seed),
    })
}

/// Re-renders a run or plan directory.
pub fn cmd_plot(run: &Path, out: &Path) -> Result<String> {
    let loaded = klplan::scenario::load_scenario(&run.join(SCENARIO_FILE))?;
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| io_error(p, e));
    let main = parse_trajectory_csv(&read(&run.join(TRAJECTORY_FILE))?)?;
    check_dims(&loaded.problem, &main)?;
    let mut components = Vec::new();
    for k in 0.. {
        let p = run.join(format!("component_{k}.csv"));
        if !p.exists() {
            break;
        }
        let t = parse_trajectory_csv(&read(&p)?)?;
        check_dims(&loaded.problem, &t)?;
        components.push(t);
    }
    let svg = svg::render(&loaded.problem, Some(&main), &components);
    write(out, &svg)?;
    Ok(svg)
}

fn check_dims(problem: &Problem, t: &TrajectoryTable) -> Result<()> {
    if t.state_dim != problem.env.state_dim() || t.action_dim != problem.env.action_dim() {
        return Err(Error::Parse {
            what: "trajectory csv".into(),
            message: format!(
                "table has {} action and {} state columns, scenario needs {} and {}",
                t.action_dim,
                t.state_dim,
                problem.env.action_dim(),
                problem.env.state_dim()
            ),
        });
    }
    Ok(())
}

/// Runs `f` on a pool with the given number of worker threads.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
