//! Dubins car with arc primitives `(v, u, τ)`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::unscented::{Dynamics, SigmaPointSet};

/// Closed axis-aligned rectangle `[xmin, ymin, xmax, ymax]` in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if !(xmin < xmax && ymin < ymax) || ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rectangle", "need finite xmin < xmax and ymin < ymax"));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    /// Boundary points count as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = a - two_pi * ((a - PI) / two_pi).ceil();
    if r <= -PI {
        r + two_pi
    } else {
        r
    }
}

/// One arc primitive from `(p_x, p_y, φ)`.
///
/// The turn rate is offset by `u_epsilon` so straight lines are the
/// `u → 0` limit of the arc equations.
pub fn dubins_step(state: &[f64; 3], v: f64, u: f64, tau: f64, u_epsilon: f64) -> [f64; 3] {
    let [px, py, phi] = *state;
    let ut = u + u_epsilon;
    let turned = phi + tau * ut;
    let r = v / ut;
    [
        px + r * (turned.sin() - phi.sin()),
        py + r * (phi.cos() - turned.cos()),
        wrap_angle(turned),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DubinsEnv {
    pub v_max: f64,
    pub psi_max: f64,
    pub tau_bounds: (f64, f64),
    pub m_primitives: usize,
    pub alpha: f64,
    pub u_epsilon: f64,
    pub gamma: f64,
    pub world: Rect,
    pub obstacles: Vec<Rect>,
    /// Poses checked along each primitive per sigma point.
    pub collision_substeps: usize,
}

impl DubinsEnv {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) {
            return Err(Error::invalid("v_max", "must be positive"));
        }
        if !(self.psi_max > 0.0 && self.psi_max < PI / 2.0) {
            return Err(Error::invalid("psi_max", "must lie in (0, π/2)"));
        }
        if !(self.tau_bounds.0 >= 0.0 && self.tau_bounds.0 < self.tau_bounds.1) {
            return Err(Error::invalid("tau_bounds", "need 0 <= lower < upper"));
        }
        if self.m_primitives == 0 {
            return Err(Error::invalid("m_primitives", "must be at least 1"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid("alpha", "must be nonnegative"));
        }
        if !(self.u_epsilon > 0.0) {
            return Err(Error::invalid("u_epsilon", "must be positive"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        if self.collision_substeps == 0 {
            return Err(Error::invalid("collision_substeps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn turn_rate_max(&self) -> f64 {
        self.psi_max.tan()
    }

    /// Per-primitive bounds on `(v, u, τ)`.
    pub fn action_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let u = self.turn_rate_max();
        ([0.0, -u, self.tau_bounds.0], [self.v_max, u, self.tau_bounds.1])
    }

    pub fn step(&self, state: &[f64; 3], action: &[f64]) -> [f64; 3] {
        dubins_step(state, action[0], action[1], action[2], self.u_epsilon)
    }

    /// Applies the primitives of a flattened `(v₁, u₁, τ₁, …)` vector in turn.
    pub fn rollout(&self, state: &[f64; 3], action: &[f64]) -> Vec<[f64; 3]> {
        let mut s = *state;
        action
            .chunks_exact(3)
            .map(|p| {
                s = self.step(&s, p);
                s
            })
            .collect()
    }

    /// Inside an obstacle or outside the world rectangle.
    pub fn in_collision(&self, x: f64, y: f64) -> bool {
        !self.world.contains(x, y) || self.obstacles.iter().any(|o| o.contains(x, y))
    }

    /// Number of sigma points that collide. Points with known sources are
    /// checked at `collision_substeps` poses along the primitive.
    pub fn collision_count(&self, set: &SigmaPointSet, action: &DVector<f64>) -> usize {
        match &set.sources {
            Some(sources) => sources
                .iter()
                .filter(|s| {
                    let s = [s[0], s[1], s[2]];
                    (1..=self.collision_substeps).any(|k| {
                        let frac = k as f64 / self.collision_substeps as f64;
                        let p = dubins_step(&s, action[0], action[1], action[2] * frac, self.u_epsilon);
                        self.in_collision(p[0], p[1])
                    })
                })
                .count(),
            None => set.points.iter().filter(|p| self.in_collision(p[0], p[1])).count(),
        }
    }
}

fn as_state(x: &DVector<f64>) -> [f64; 3] {
    [x[0], x[1], x[2]]
}

impl Dynamics for DubinsEnv {
    fn propagate(&self, state: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        let s = self.step(&as_state(state), action.as_slice());
        DVector::from_row_slice(&s)
    }

    fn align(&self, point: &mut DVector<f64>, reference: &DVector<f64>) {
        point[2] = reference[2] + wrap_angle(point[2] - reference[2]);
    }

    fn canonicalize(&self, mean: &mut DVector<f64>) {
        mean[2] = wrap_angle(mean[2]);
    }
}
