//! Scenario files: strict JSON with units per field.
//!
//! Lengths are meters, angles radians, durations seconds. Rectangles are
//! `[xmin, ymin, xmax, ymax]`, spheres `[cx, cy, cz, r]`, and goals are tagged
//! objects `{"type": "gaussian" | "gmm" | "dirac" | "uniform", ...}`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cem::{CemConfig, CovarianceMode};
use crate::distributions::{DiracDelta, Gaussian, GoalSpec, Gmm, Projection, UniformBox};
use crate::envs::{ArmEnv, DubinsEnv, Environment, Joint, Rect, Sphere};
use crate::error::{Error, Result};
use crate::mpc::{LambdaMode, PlannerConfig, Problem};
use crate::unscented::UtConfig;

/// Mean (length n) and covariance (n rows of length n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDoc {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianDoc {
    pub fn from_gaussian(g: &Gaussian) -> Self {
        Self {
            mean: g.mean().iter().copied().collect(),
            covariance: matrix_rows(g.covariance()),
        }
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        let n = self.mean.len();
        Gaussian::new(DVector::from_row_slice(&self.mean), square_matrix(&self.covariance, n)?)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn square_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("covariance", format!("expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GoalDoc {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Gmm {
        weights: Vec<f64>,
        components: Vec<GaussianDoc>,
    },
    Dirac {
        point: Vec<f64>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl GoalDoc {
    pub fn from_goal(goal: &GoalSpec) -> Self {
        match goal {
            GoalSpec::Gaussian(g) => {
                let d = GaussianDoc::from_gaussian(g);
                GoalDoc::Gaussian {
                    mean: d.mean,
                    covariance: d.covariance,
                }
            }
            GoalSpec::Gmm(g) => GoalDoc::Gmm {
                weights: g.weights().to_vec(),
                components: g.components().iter().map(GaussianDoc::from_gaussian).collect(),
            },
            GoalSpec::Dirac(d) => GoalDoc::Dirac {
                point: d.point().iter().copied().collect(),
            },
            GoalSpec::Uniform(u) => GoalDoc::Uniform {
                lower: u.lower().iter().copied().collect(),
                upper: u.upper().iter().copied().collect(),
            },
        }
    }

    pub fn to_goal(&self) -> Result<GoalSpec> {
        Ok(match self {
            GoalDoc::Gaussian { mean, covariance } => GoalSpec::Gaussian(
                GaussianDoc {
                    mean: mean.clone(),
                    covariance: covariance.clone(),
                }
                .to_gaussian()?,
            ),
            GoalDoc::Gmm { weights, components } => GoalSpec::Gmm(Gmm::new(
                weights.clone(),
                components.iter().map(GaussianDoc::to_gaussian).collect::<Result<_>>()?,
            )?),
            GoalDoc::Dirac { point } => GoalSpec::Dirac(DiracDelta::new(DVector::from_row_slice(point))?),
            GoalDoc::Uniform { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                GoalSpec::Uniform(UniformBox::new(
                    DVector::from_row_slice(lower),
                    DVector::from_row_slice(upper),
                )?)
            }
        })
    }
}

/// Parses a goal object on its own.
pub fn parse_goal_spec(text: &str) -> Result<GoalSpec> {
    let doc: GoalDoc = serde_json::from_str(text).map_err(|e| parse_error("goal", e))?;
    doc.to_goal().map_err(|e| in_field("goal", e))
}

pub fn goal_spec_to_json(goal: &GoalSpec) -> String {
    serde_json::to_string(&GoalDoc::from_goal(goal)).expect("goal serializes")
}

fn parse_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        what: what.to_string(),
        message: e.to_string(),
    }
}

/// Rewrites parameter errors as validation errors naming the field.
fn in_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::Validation {
            field: format!("{prefix}.{name}"),
            reason,
        },
        Error::Validation { field, reason } => Error::Validation {
            field: format!("{prefix}.{field}"),
            reason,
        },
        Error::UnsupportedProjection { .. } | Error::Parse { .. } => e,
        other => Error::Validation {
            field: prefix.to_string(),
            reason: other.to_string(),
        },
    }
}

fn default_v_max() -> f64 {
    1.0
}
fn default_psi_max() -> f64 {
    PI / 3.0
}
fn default_tau_bounds() -> [f64; 2] {
    [0.2, 2.0]
}
fn default_m_primitives() -> usize {
    5
}
fn default_alpha() -> f64 {
    0.02
}
fn default_u_epsilon() -> f64 {
    1e-5
}
fn default_gamma() -> f64 {
    100.0
}
fn default_dubins_substeps() -> usize {
    8
}

/// Dubins car world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DubinsDoc {
    /// Largest forward speed (m/s).
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Largest steering angle (rad); turn rates lie in ±tan(psi_max).
    #[serde(default = "default_psi_max")]
    pub psi_max: f64,
    /// Primitive duration range (s).
    #[serde(default = "default_tau_bounds")]
    pub tau_bounds: [f64; 2],
    #[serde(default = "default_m_primitives")]
    pub m_primitives: usize,
    /// Process noise variance per state dimension.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Turn-rate offset avoiding the straight-line singularity (rad/s).
    #[serde(default = "default_u_epsilon")]
    pub u_epsilon: f64,
    /// Cost per colliding sigma point.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub world: [f64; 4],
    #[serde(default)]
    pub obstacles: Vec<[f64; 4]>,
    #[serde(default = "default_dubins_substeps")]
    pub collision_substeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    /// Rotation axis in the joint frame.
    pub axis: [f64; 3],
    /// Translation from the previous joint frame (m).
    pub offset: [f64; 3],
}

fn default_arm_alpha() -> f64 {
    1e-4
}
fn default_max_step() -> f64 {
    0.1
}
fn default_proxy_radius() -> f64 {
    0.05
}
fn default_proxies_per_link() -> usize {
    3
}
fn default_ee_gain() -> f64 {
    1.0
}
fn default_arm_substeps() -> usize {
    4
}

/// Revolute chain with sphere obstacles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmDoc {
    pub links: Vec<LinkDoc>,
    /// End-effector offset from the last joint frame (m).
    pub tool: [f64; 3],
    /// Per-joint `[lower, upper]` (rad); defaults to ±π.
    #[serde(default)]
    pub joint_limits: Vec<[f64; 2]>,
    /// Largest joint displacement per step (rad).
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    /// Process noise variance per joint (rad²).
    #[serde(default = "default_arm_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub obstacles: Vec<[f64; 4]>,
    /// Radius of the collision spheres along each link (m).
    #[serde(default = "default_proxy_radius")]
    pub proxy_radius: f64,
    #[serde(default = "default_proxies_per_link")]
    pub proxies_per_link: usize,
    /// Desired end-effector position (m).
    pub target: [f64; 3],
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Weight of the squared end-effector error (1/m²).
    #[serde(default = "default_ee_gain")]
    pub ee_gain: f64,
    #[serde(default = "default_arm_substeps")]
    pub collision_substeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EnvironmentDoc {
    Dubins(DubinsDoc),
    Arm(ArmDoc),
}

impl EnvironmentDoc {
    pub fn build(&self) -> Result<Environment> {
        let env = match self {
            EnvironmentDoc::Dubins(d) => Environment::Dubins(DubinsEnv {
                v_max: d.v_max,
                psi_max: d.psi_max,
                tau_bounds: (d.tau_bounds[0], d.tau_bounds[1]),
                m_primitives: d.m_primitives,
                alpha: d.alpha,
                u_epsilon: d.u_epsilon,
                gamma: d.gamma,
                world: Rect::from_array(d.world).map_err(|e| in_field("world", e))?,
                obstacles: d
                    .obstacles
                    .iter()
                    .map(|r| Rect::from_array(*r))
                    .collect::<Result<_>>()
                    .map_err(|e| in_field("obstacles", e))?,
                collision_substeps: d.collision_substeps,
            }),
            EnvironmentDoc::Arm(a) => {
                let n = a.links.len();
                let limits = if a.joint_limits.is_empty() {
                    vec![(-PI, PI); n]
                } else {
                    a.joint_limits.iter().map(|l| (l[0], l[1])).collect()
                };
                Environment::Arm(ArmEnv {
                    joints: a
                        .links
                        .iter()
                        .map(|l| Joint {
                            axis: Vector3::from(l.axis),
                            offset: Vector3::from(l.offset),
                        })
                        .collect(),
                    tool: Vector3::from(a.tool),
                    limits,
                    max_step: a.max_step,
                    alpha: a.alpha,
                    obstacles: a
                        .obstacles
                        .iter()
                        .map(|s| Sphere::from_array(*s))
                        .collect::<Result<_>>()
                        .map_err(|e| in_field("obstacles", e))?,
                    proxy_radius: a.proxy_radius,
                    proxies_per_link: a.proxies_per_link,
                    target: Vector3::from(a.target),
                    gamma: a.gamma,
                    ee_gain: a.ee_gain,
                    collision_substeps: a.collision_substeps,
                })
            }
        };
        env.validate()?;
        Ok(env)
    }
}

fn default_eta() -> f64 {
    0.1
}
fn default_max_mpc_steps() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerDoc {
    /// Steps per plan; for the car it must equal `m_primitives`. Defaults
    /// to `m_primitives` for the car and 5 for the arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Goal-divergence tolerance ending the MPC loop (nats).
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_mpc_steps")]
    pub max_mpc_steps: usize,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    /// Belief covariance after each executed step; defaults to the start
    /// covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_covariance: Option<Vec<Vec<f64>>>,
}

impl Default for PlannerDoc {
    fn default() -> Self {
        Self {
            horizon: None,
            eta: default_eta(),
            max_mpc_steps: default_max_mpc_steps(),
            lambda_mode: LambdaMode::default(),
            observation_covariance: None,
        }
    }
}

fn default_n_samples() -> usize {
    128
}
fn default_n_elite() -> usize {
    16
}
fn default_max_iters() -> usize {
    30
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_one() -> f64 {
    1.0
}
fn default_components() -> usize {
    1
}
fn default_variance_floor() -> f64 {
    1e-6
}

/// Optimizer settings. Samples live in the normalized box `[−1, 1]` per
/// action coordinate, mapped affinely onto the physical bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemDoc {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_elite")]
    pub n_elite: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Standard deviation of the initial sampling distribution.
    #[serde(default = "default_one")]
    pub init_scale: f64,
    #[serde(default = "default_components")]
    pub n_components: usize,
    #[serde(default)]
    pub covariance: CovarianceMode,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
}

impl Default for CemDoc {
    fn default() -> Self {
        Self {
            n_samples: default_n_samples(),
            n_elite: default_n_elite(),
            max_iters: default_max_iters(),
            epsilon: default_epsilon(),
            init_scale: 1.0,
            n_components: 1,
            covariance: CovarianceMode::default(),
            variance_floor: default_variance_floor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtDoc {
    /// Sigma-point dispersion, shared with the mixture KL approximation.
    #[serde(default = "default_one")]
    pub beta: f64,
}

impl Default for UtDoc {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentDoc,
    pub start: GaussianDoc,
    pub goal: GoalDoc,
    pub projection: Projection,
    #[serde(default)]
    pub planner: PlannerDoc,
    #[serde(default)]
    pub cem: CemDoc,
    #[serde(default)]
    pub ut: UtDoc,
}

/// A validated scenario plus the fields that were filled from defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub problem: Problem,
    /// JSON pointers of fields absent from the file.
    pub defaulted: Vec<String>,
}

impl Scenario {
    /// Builds and validates the planning problem.
    pub fn to_problem(&self) -> Result<Problem> {
        let env = self.environment.build().map_err(|e| in_field("environment", e))?;
        let n = env.state_dim();
        if self.start.mean.len() != n {
            return Err(Error::validation(
                "start.mean",
                format!("expected {n} entries for a {} state", env.kind()),
            ));
        }
        let start = self.start.to_gaussian().map_err(|e| in_field("start", e))?;
        let goal = self.goal.to_goal().map_err(|e| in_field("goal", e))?;
        if goal.dim() != n {
            return Err(Error::validation("goal", format!("expected dimension {n}, got {}", goal.dim())));
        }
        if goal.has_bounded_support() && self.projection == Projection::I {
            return Err(Error::UnsupportedProjection {
                goal: goal.kind(),
                projection: Projection::I,
            });
        }
        let horizon = self.planner.horizon.unwrap_or_else(|| self.default_horizon());
        let observation_cov = match &self.planner.observation_covariance {
            Some(rows) => {
                let m = square_matrix(rows, n).map_err(|e| in_field("planner.observation_covariance", e))?;
                Gaussian::new(DVector::zeros(n), m.clone())
                    .map_err(|e| in_field("planner.observation_covariance", e))?;
                m
            }
            None => start.covariance().clone(),
        };
        let dim = horizon * env.action_dim();
        let c = &self.cem;
        let cem = CemConfig {
            n_samples: c.n_samples,
            n_elite: c.n_elite,
            max_iters: c.max_iters,
            epsilon: c.epsilon,
            lower: DVector::from_element(dim, -1.0),
            upper: DVector::from_element(dim, 1.0),
            init_scale: c.init_scale,
            n_components: c.n_components,
            covariance: c.covariance,
            variance_floor: c.variance_floor,
            beta: self.ut.beta,
        };
        cem.validate().map_err(|e| in_field("cem", e))?;
        let ut = UtConfig::new(self.ut.beta, env.process_noise()).map_err(|e| in_field("ut", e))?;
        let planner = PlannerConfig {
            horizon,
            eta: self.planner.eta,
            max_mpc_steps: self.planner.max_mpc_steps,
            projection: self.projection,
            lambda_mode: self.planner.lambda_mode,
            ut,
            cem,
            observation_cov,
        };
        let problem = Problem {
            env,
            start,
            goal,
            planner,
        };
        problem.validate().map_err(|e| in_field("planner", e))?;
        Ok(problem)
    }

    fn default_horizon(&self) -> usize {
        match &self.environment {
            EnvironmentDoc::Dubins(d) => d.m_primitives,
            EnvironmentDoc::Arm(_) => 5,
        }
    }

    /// Fills optional fields with their resolved values so that writing and
    /// reloading is the identity.
    pub fn resolve(&mut self) {
        if self.planner.horizon.is_none() {
            self.planner.horizon = Some(self.default_horizon());
        }
        if self.planner.observation_covariance.is_none() {
            self.planner.observation_covariance = Some(self.start.covariance.clone());
        }
        if let EnvironmentDoc::Arm(a) = &mut self.environment {
            if a.joint_limits.is_empty() {
                a.joint_limits = vec![[-PI, PI]; a.links.len()];
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 over the canonical JSON of every field except the name.
    pub fn config_hash(&self) -> String {
        let mut resolved = self.clone();
        resolved.resolve();
        let mut value = serde_json::to_value(&resolved).expect("scenario serializes");
        if let Value::Object(map) = &mut value {
            map.remove("name");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keys present in `resolved` but missing from `given`, as JSON pointers.
fn missing_keys(given: &Value, resolved: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(g), Value::Object(r)) = (given, resolved) {
        for (k, rv) in r {
            let path = format!("{prefix}/{k}");
            match g.get(k) {
                None => out.push(path),
                Some(gv) => missing_keys(gv, rv, &path, out),
            }
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let mut scenario: Scenario = serde_json::from_str(text).map_err(|e| parse_error("scenario", e))?;
    let given: Value = serde_json::from_str(text).map_err(|e| parse_error("scenario", e))?;
    let problem = scenario.to_problem()?;
    scenario.resolve();
    let mut defaulted = Vec::new();
    let resolved = serde_json::to_value(&scenario).expect("scenario serializes");
    missing_keys(&given, &resolved, "", &mut defaulted);
    Ok(LoadedScenario {
        scenario,
        problem,
        defaulted,
    })
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "environment": {"type": "dubins", "world": [-5, -5, 5, 5], "m_primitives": 2},
        "start": {"mean": [0, 0, 0], "covariance": [[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.01]]},
        "goal": {"type": "gaussian", "mean": [2, 0, 0], "covariance": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]},
        "projection": "I"
    }"#;

    fn with(text: &str, from: &str, to: &str) -> String {
        assert!(text.contains(from), "{from}");
        text.replacen(from, to, 1)
    }

    #[test]
    fn minimal_scenario_records_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert!(s.defaulted.contains(&"/seed".to_string()));
        assert!(s.defaulted.contains(&"/environment/v_max".to_string()));
        assert!(s.defaulted.contains(&"/planner".to_string()));
        assert!(!s.defaulted.contains(&"/environment/m_primitives".to_string()));
        assert_eq!(s.problem.planner.horizon, 2);
        assert_eq!(s.problem.planner.cem.dim(), 6);
        assert_eq!(s.scenario.planner.horizon, Some(2));
    }

    #[test]
    fn round_trip_is_identity() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&s.scenario.to_json()).unwrap();
        assert_eq!(again.scenario, s.scenario);
        assert_eq!(again.problem, s.problem);
        assert!(again.defaulted.is_empty(), "{:?}", again.defaulted);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = with(MINIMAL, "\"projection\": \"I\"", "\"projection\": \"I\", \"colour\": 3");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
        let text = with(MINIMAL, "\"m_primitives\": 2", "\"m_primitives\": 2, \"speed\": 1");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
        let text = with(MINIMAL, "\"type\": \"gaussian\",", "\"type\": \"gaussian\", \"weights\": [1],");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = with(MINIMAL, "\"projection\": \"I\"", "\"projection\": \"X\"");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
        assert!(parse_scenario("{").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn gmm_weights_must_sum_to_one() {
        let text = with(
            MINIMAL,
            r#"{"type": "gaussian", "mean": [2, 0, 0], "covariance": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]}"#,
            r#"{"type": "gmm", "weights": [0.5, 0.4], "components": [
                {"mean": [2, 0, 0], "covariance": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]},
                {"mean": [-2, 0, 0], "covariance": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]}]}"#,
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field.starts_with("goal")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bounded_goals_reject_i_projection() {
        for goal in [
            r#"{"type": "dirac", "point": [2, 0, 0]}"#,
            r#"{"type": "uniform", "lower": [1, -1, -3], "upper": [3, 1, 3]}"#,
        ] {
            let text = with(
                MINIMAL,
                r#"{"type": "gaussian", "mean": [2, 0, 0], "covariance": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]]}"#,
                goal,
            );
            let err = parse_scenario(&text).unwrap_err();
            assert!(matches!(err, Error::UnsupportedProjection { .. }));
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains("divides by zero"));
            let ok = with(&text, "\"projection\": \"I\"", "\"projection\": \"M\"");
            parse_scenario(&ok).unwrap();
        }
    }

    #[test]
    fn validation_names_the_field() {
        let text = with(MINIMAL, "\"start\": {\"mean\": [0, 0, 0]", "\"start\": {\"mean\": [0, 0]");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation { field, .. }) if field == "start.mean"));
        let text = with(MINIMAL, "\"world\": [-5, -5, 5, 5]", "\"world\": [5, -5, -5, 5]");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation { field, .. }) if field.starts_with("environment")));
        let text = with(MINIMAL, "\"m_primitives\": 2", "\"m_primitives\": 2, \"psi_max\": 2.0");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation { field, .. }) if field.contains("psi_max")));
        let text = with(MINIMAL, "\"projection\": \"I\"", "\"projection\": \"I\", \"planner\": {\"horizon\": 3}");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation { field, .. }) if field.contains("horizon")));
        let text = with(MINIMAL, "\"projection\": \"I\"", "\"projection\": \"I\", \"cem\": {\"n_elite\": 500}");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation { field, .. }) if field == "cem.n_elite"));
    }

    #[test]
    fn hash_ignores_name_and_tracks_semantics() {
        let a = parse_scenario(MINIMAL).unwrap().scenario;
        let mut b = a.clone();
        b.name = "renamed".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
        let mut c = a.clone();
        c.ut.beta = 1.5;
        assert_ne!(a.config_hash(), c.config_hash());
        // an explicitly written default hashes like the omitted one
        let raw: Scenario = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(raw.config_hash(), a.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn goal_json_round_trip() {
        for text in [
            r#"{"type":"gaussian","mean":[1.0,2.0],"covariance":[[1.0,0.5],[0.5,2.0]]}"#,
            r#"{"type":"gmm","weights":[0.25,0.75],"components":[{"mean":[0.0],"covariance":[[1.0]]},{"mean":[3.0],"covariance":[[0.5]]}]}"#,
            r#"{"type":"dirac","point":[1.0,-1.0]}"#,
            r#"{"type":"uniform","lower":[0.0,0.0],"upper":[1.0,2.0]}"#,
        ] {
            let goal = parse_goal_spec(text).unwrap();
            assert_eq!(goal_spec_to_json(&goal), text);
        }
        assert!(parse_goal_spec(r#"{"type":"uniform","lower":[1.0],"upper":[0.0]}"#).is_err());
        assert!(parse_goal_spec(r#"{"type":"cauchy"}"#).is_err());
    }

    #[test]
    fn arm_scenario_builds() {
        let text = r#"{
            "name": "arm",
            "environment": {"type": "arm",
                "links": [{"axis": [0, 0, 1], "offset": [0, 0, 0]}, {"axis": [0, 0, 1], "offset": [0.5, 0, 0]}],
                "tool": [0.5, 0, 0], "target": [0, 1, 0], "obstacles": [[0.7, 0.7, 0, 0.1]]},
            "start": {"mean": [0, 0], "covariance": [[1e-4, 0], [0, 1e-4]]},
            "goal": {"type": "gaussian", "mean": [1.5708, 0], "covariance": [[1e-4, 0], [0, 1e-4]]},
            "projection": "I"
        }"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.problem.planner.horizon, 5);
        assert_eq!(s.scenario.environment, {
            let mut e = s.scenario.environment.clone();
            if let EnvironmentDoc::Arm(a) = &mut e {
                assert_eq!(a.joint_limits.len(), 2);
            }
            e
        });
        assert!(s.defaulted.contains(&"/environment/joint_limits".to_string()));
        let again = parse_scenario(&s.scenario.to_json()).unwrap();
        assert_eq!(again.scenario, s.scenario);
    }
}
