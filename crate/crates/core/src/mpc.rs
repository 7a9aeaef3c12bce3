//! Rollout cost assembly and the receding-horizon loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cem::{plan_cem, CemConfig, CemOutcome, IterationTrace, PlanDistribution};
use crate::distributions::{goal_cost, uniform_cross_entropy, Gaussian, GoalSpec, Projection};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::seeding;
use crate::unscented::{unscented_transform, Dynamics, SigmaPointSet, UtConfig};

/// Stream tag for the true-state process noise.
const TRUE_NOISE_STREAM: u64 = 0x7275_6e5f_6e6f_6973;

/// Horizon weighting of the per-step goal divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LambdaMode {
    /// `λₜ = t/H` for the predicted steps `t = 1..H`.
    #[default]
    #[serde(rename = "alg_t_over_H")]
    AlgTOverH,
    /// `λᵢ = (i−t)/H` for `i = t..t+H`: the current belief is included with
    /// weight 0.
    #[serde(rename = "text_i_minus_t_over_H")]
    TextIMinusTOverH,
}

/// Weights in order of the beliefs they multiply. For
/// [`LambdaMode::TextIMinusTOverH`] the first entry belongs to the current
/// belief.
pub fn lambda_weights(mode: LambdaMode, horizon: usize) -> Vec<f64> {
    let h = horizon as f64;
    match mode {
        LambdaMode::AlgTOverH => (1..=horizon).map(|t| t as f64 / h).collect(),
        LambdaMode::TextIMinusTOverH => (0..=horizon).map(|i| i as f64 / h).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    /// Goal-divergence tolerance that ends the MPC loop.
    pub eta: f64,
    pub max_mpc_steps: usize,
    pub projection: Projection,
    pub lambda_mode: LambdaMode,
    pub ut: UtConfig,
    /// Optimizer settings over the normalized `[−1, 1]^(H·a)` box.
    pub cem: CemConfig,
    /// Covariance assigned to the belief after each executed step.
    pub observation_cov: DMatrix<f64>,
}

impl PlannerConfig {
    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if self.max_mpc_steps == 0 {
            return Err(Error::invalid("max_mpc_steps", "must be at least 1"));
        }
        if let Environment::Dubins(d) = env {
            if d.m_primitives != self.horizon {
                return Err(Error::invalid("horizon", "must equal the number of motion primitives"));
            }
        }
        self.ut.validate()?;
        self.cem.validate()?;
        let dim = self.horizon * env.action_dim();
        if self.cem.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.cem.dim(),
            });
        }
        if self.ut.process_noise.nrows() != env.state_dim() || self.observation_cov.nrows() != env.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.state_dim(),
                got: self.observation_cov.nrows(),
            });
        }
        Ok(())
    }
}

/// Everything needed to plan: environment, start belief, goal and settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub env: Environment,
    pub start: Gaussian,
    pub goal: GoalSpec,
    pub planner: PlannerConfig,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.planner.validate(&self.env)?;
        let n = self.env.state_dim();
        if self.start.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.start.dim(),
            });
        }
        if self.goal.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.goal.dim(),
            });
        }
        if self.goal.has_bounded_support() && self.planner.projection == Projection::I {
            return Err(Error::UnsupportedProjection {
                goal: self.goal.kind(),
                projection: Projection::I,
            });
        }
        Ok(())
    }

    /// Maps a normalized `[−1, 1]` sequence onto physical per-step bounds.
    pub fn to_physical(&self, normalized: &DVector<f64>) -> DVector<f64> {
        let (lo, hi) = self.env.action_bounds();
        let a = lo.len();
        DVector::from_fn(normalized.len(), |i, _| {
            let k = i % a;
            let z = normalized[i].clamp(-1.0, 1.0);
            lo[k] + (z + 1.0) * 0.5 * (hi[k] - lo[k])
        })
    }

    pub fn step_action(&self, sequence: &DVector<f64>, t: usize) -> DVector<f64> {
        let a = self.env.action_dim();
        sequence.rows(t * a, a).into_owned()
    }

    /// Offset subtracted from the goal cost before comparing against η.
    ///
    /// Zero for Gaussian and mixture goals. For a Dirac goal it is
    /// `−log N(g | g, Σ_obs)`, and for a uniform box the cost of a belief
    /// with covariance `Σ_obs` centered in the box, so the termination
    /// divergence is zero at the best reachable belief.
    pub fn termination_offset(&self) -> Result<f64> {
        let obs = &self.planner.observation_cov;
        match &self.goal {
            GoalSpec::Dirac(d) => {
                let at_goal = Gaussian::new(d.point().clone(), obs.clone())?;
                Ok(-at_goal.log_density(d.point())?)
            }
            GoalSpec::Uniform(u) => {
                let centered = Gaussian::new(u.center(), obs.clone())?;
                uniform_cross_entropy(&centered, u)
            }
            GoalSpec::Gaussian(_) | GoalSpec::Gmm(_) => Ok(0.0),
        }
    }

    pub fn goal_cost(&self, belief: &Gaussian) -> Result<f64> {
        goal_cost(belief, &self.goal, self.planner.projection, self.planner.ut.beta)
    }
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub cost: f64,
    /// Predicted beliefs after each of the H steps.
    pub beliefs: Vec<Gaussian>,
    pub sigma_sets: Vec<SigmaPointSet>,
    /// Per-step goal divergence of the predicted beliefs.
    pub divergences: Vec<f64>,
    /// Contribution of each step to `cost`.
    pub step_costs: Vec<f64>,
    pub collisions: Vec<usize>,
}

/// Accumulated cost `Σₜ λₜ·(D(beliefₜ, goal) + aux(beliefₜ)) + φ(P_σ,ₜ)` of a
/// physical action sequence.
pub fn rollout_cost(problem: &Problem, actions: &DVector<f64>, start: &Gaussian) -> Result<Rollout> {
    let cfg = &problem.planner;
    let h = cfg.horizon;
    let expected = h * problem.env.action_dim();
    if actions.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: actions.len(),
        });
    }
    let weights = lambda_weights(cfg.lambda_mode, h);
    let step_weights: &[f64] = match cfg.lambda_mode {
        LambdaMode::AlgTOverH => &weights,
        // weight 0 on the current belief contributes nothing
        LambdaMode::TextIMinusTOverH => &weights[1..],
    };

    let mut belief = start.clone();
    let mut cost = 0.0;
    let mut out = Rollout {
        cost: 0.0,
        beliefs: Vec::with_capacity(h),
        sigma_sets: Vec::with_capacity(h),
        divergences: Vec::with_capacity(h),
        step_costs: Vec::with_capacity(h),
        collisions: Vec::with_capacity(h),
    };
    for (t, &lambda) in step_weights.iter().enumerate() {
        let u = problem.step_action(actions, t);
        let (next, set) = unscented_transform(&belief, &u, &problem.env, &cfg.ut)?;
        let divergence = problem.goal_cost(&next)?;
        let hits = problem.env.collision_count(&set, &u);
        let aux = problem.env.auxiliary_cost(&next);
        let step_cost = lambda * (divergence + aux) + problem.env.gamma() * hits as f64;
        cost += step_cost;
        if cost.is_nan() {
            return Err(Error::NanCost { sample: t });
        }
        out.divergences.push(divergence);
        out.step_costs.push(step_cost);
        out.collisions.push(hits);
        out.beliefs.push(next.clone());
        out.sigma_sets.push(set);
        belief = next;
    }
    out.cost = cost;
    Ok(out)
}

/// Result of a single planning call from a belief.
#[derive(Clone, Debug)]
pub struct Plan {
    /// Physical action sequence (H steps, flattened).
    pub actions: DVector<f64>,
    pub rollout: Rollout,
    pub cem: CemOutcome,
    /// Predicted belief paths of every planner mixture component mean.
    pub component_rollouts: Vec<(f64, Rollout)>,
}

pub fn plan_once(problem: &Problem, belief: &Gaussian, seed: u64) -> Result<Plan> {
    let cost_fn = |z: &DVector<f64>| -> Result<f64> {
        let u = problem.to_physical(z);
        Ok(rollout_cost(problem, &u, belief)?.cost)
    };
    let cem = plan_cem(&cost_fn, &problem.planner.cem, seed)?;
    let actions = problem.to_physical(&cem.best);
    let rollout = rollout_cost(problem, &actions, belief)?;
    let component_rollouts = match &cem.distribution {
        PlanDistribution::Gaussian(_) => Vec::new(),
        PlanDistribution::Gmm(g) => g
            .weights()
            .iter()
            .zip(g.components())
            .map(|(w, c)| Ok((*w, rollout_cost(problem, &problem.to_physical(c.mean()), belief)?)))
            .collect::<Result<_>>()?,
    };
    Ok(Plan {
        actions,
        rollout,
        cem,
        component_rollouts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxSteps,
    Infeasible,
}

/// One MPC step: the belief held at the start of the step, its divergence,
/// and (unless this is the terminal row) the action executed from it.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub action: Option<DVector<f64>>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub divergence: f64,
    /// Rollout cost of the executed plan (NaN on the terminal row).
    pub cost: f64,
    /// Simulated time elapsed before this step (ms).
    pub sim_ms: f64,
    /// Planning wall time (ms); kept out of deterministic artifacts.
    pub wall_ms: f64,
    /// Sigma points of the executed step that collided.
    pub collisions: Option<usize>,
    pub true_state: DVector<f64>,
    pub cem_trace: Vec<IterationTrace>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
    /// Offset subtracted from the goal cost to form the logged divergence.
    pub termination_offset: f64,
}

impl TrajectoryLog {
    pub fn divergences(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.divergence).collect()
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("log has at least one row")
    }

    pub fn planning_calls(&self) -> usize {
        self.records.iter().filter(|r| r.action.is_some()).count()
    }
}

/// Receding-horizon execution from the start belief.
///
/// Each step checks the termination divergence against η, plans from the
/// current belief with a fresh optimizer, executes the first action on the
/// true state with sampled process noise, and resets the belief to the
/// observed state with the observation covariance.
pub fn run_mpc(problem: &Problem, seed: u64) -> Result<TrajectoryLog> {
    problem.validate()?;
    let offset = problem.termination_offset()?;
    let cfg = &problem.planner;
    let noise = Gaussian::new(DVector::zeros(problem.env.state_dim()), problem.env.process_noise())
        .ok();
    let mut noise_rng = seeding::stream(seed, &[TRUE_NOISE_STREAM]);
    let mut belief = problem.start.clone();
    let mut true_state = problem.start.mean().clone();
    let mut sim_ms = 0.0;
    let mut records = Vec::new();

    let status = 'run: {
        for step in 0.. {
            let divergence = problem.goal_cost(&belief)? - offset;
            let mut record = StepRecord {
                step,
                action: None,
                mean: belief.mean().clone(),
                covariance: belief.covariance().clone(),
                divergence,
                cost: f64::NAN,
                sim_ms,
                wall_ms: 0.0,
                collisions: None,
                true_state: true_state.clone(),
                cem_trace: Vec::new(),
            };
            if divergence < cfg.eta {
                records.push(record);
                break 'run RunStatus::Converged;
            }
            if step >= cfg.max_mpc_steps {
                records.push(record);
                break 'run RunStatus::MaxSteps;
            }
            let started = Instant::now();
            let plan = match plan_once(problem, &belief, seeding::derive_seed(seed, &[step as u64])) {
                Ok(p) => p,
                Err(Error::Infeasible { .. }) => {
                    records.push(record);
                    break 'run RunStatus::Infeasible;
                }
                Err(e) => return Err(e),
            };
            record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            let action = problem.step_action(&plan.actions, 0);
            let (_, executed) = unscented_transform(&belief, &action, &problem.env, &cfg.ut)?;
            record.collisions = Some(problem.env.collision_count(&executed, &action));
            record.cost = plan.rollout.cost;
            record.cem_trace = plan.cem.trace;

            let mut next = problem.env.propagate(&true_state, &action);
            if let Some(w) = &noise {
                next += w.sample_one(&mut noise_rng);
            }
            problem.env.canonicalize(&mut next);
            sim_ms += problem.env.step_duration(&action) * 1e3;
            record.action = Some(action);
            records.push(record);
            true_state = next;
            belief = Gaussian::new(true_state.clone(), cfg.observation_cov.clone())?;
        }
        unreachable!("loop exits through a status")
    };
    Ok(TrajectoryLog {
        records,
        status,
        termination_offset: offset,
    })
}
