//! Environments: dynamics, process noise, collision checks and auxiliary
//! per-step costs.

pub mod arm;
pub mod dubins;

use nalgebra::{DMatrix, DVector};

pub use arm::{arm_ee_cost, ArmEnv, ArmPose, Joint, Sphere};
pub use dubins::{dubins_step, wrap_angle, DubinsEnv, Rect};

use crate::distributions::Gaussian;
use crate::error::Result;
use crate::unscented::{Dynamics, SigmaPointSet};

#[derive(Clone, Debug, PartialEq)]
pub enum Environment {
    Dubins(DubinsEnv),
    Arm(ArmEnv),
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        match self {
            Environment::Dubins(e) => e.validate(),
            Environment::Arm(e) => e.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Environment::Dubins(_) => "dubins",
            Environment::Arm(_) => "arm",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Environment::Dubins(_) => 3,
            Environment::Arm(e) => e.n_joints(),
        }
    }

    /// Action dimension of one step.
    pub fn action_dim(&self) -> usize {
        match self {
            Environment::Dubins(_) => 3,
            Environment::Arm(e) => e.n_joints(),
        }
    }

    /// Per-step action bounds.
    pub fn action_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            Environment::Dubins(e) => {
                let (lo, hi) = e.action_bounds();
                (DVector::from_row_slice(&lo), DVector::from_row_slice(&hi))
            }
            Environment::Arm(e) => {
                let n = e.n_joints();
                (DVector::from_element(n, -e.max_step), DVector::from_element(n, e.max_step))
            }
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Environment::Dubins(e) => e.alpha,
            Environment::Arm(e) => e.alpha,
        }
    }

    /// Σ_w = α·I.
    pub fn process_noise(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        DMatrix::identity(n, n) * self.alpha()
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Environment::Dubins(e) => e.gamma,
            Environment::Arm(e) => e.gamma,
        }
    }

    pub fn collision_count(&self, set: &SigmaPointSet, action: &DVector<f64>) -> usize {
        match self {
            Environment::Dubins(e) => e.collision_count(set, action),
            Environment::Arm(e) => e.collision_count(set),
        }
    }

    /// φ(P_σ) = γ · number of colliding sigma points.
    pub fn collision_cost(&self, set: &SigmaPointSet, action: &DVector<f64>) -> f64 {
        self.gamma() * self.collision_count(set, action) as f64
    }

    /// Extra per-step cost on a predicted belief (end-effector error for the
    /// arm, nothing for the car).
    pub fn auxiliary_cost(&self, belief: &Gaussian) -> f64 {
        match self {
            Environment::Dubins(_) => 0.0,
            Environment::Arm(e) => e.ee_cost(belief),
        }
    }

    /// Workspace position used for plotting and goal attribution.
    pub fn position(&self, state: &DVector<f64>) -> Vec<f64> {
        match self {
            Environment::Dubins(_) => vec![state[0], state[1]],
            Environment::Arm(e) => match e.fk(state.as_slice()) {
                Ok(p) => p.end_effector.iter().copied().collect(),
                Err(_) => vec![f64::NAN; 3],
            },
        }
    }

    /// Simulated duration of one executed step in seconds.
    pub fn step_duration(&self, action: &DVector<f64>) -> f64 {
        match self {
            Environment::Dubins(_) => action[2],
            Environment::Arm(_) => ARM_CONTROL_PERIOD,
        }
    }
}

/// Control period attributed to one commanded arm step (s).
pub const ARM_CONTROL_PERIOD: f64 = 0.1;

impl Dynamics for Environment {
    fn propagate(&self, state: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        match self {
            Environment::Dubins(e) => e.propagate(state, action),
            Environment::Arm(e) => e.propagate(state, action),
        }
    }

    fn align(&self, point: &mut DVector<f64>, reference: &DVector<f64>) {
        if let Environment::Dubins(e) = self {
            e.align(point, reference)
        }
    }

    fn canonicalize(&self, mean: &mut DVector<f64>) {
        if let Environment::Dubins(e) = self {
            e.canonicalize(mean)
        }
    }
}
