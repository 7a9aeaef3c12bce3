//! Kinematically controlled revolute chain with sphere obstacles.

use nalgebra::{DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::distributions::Gaussian;
use crate::error::{Error, Result};
use crate::unscented::{Dynamics, SigmaPointSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Joint {
    /// Rotation axis in the joint's own frame.
    pub axis: Vector3<f64>,
    /// Translation from the previous joint frame to this joint (m).
    pub offset: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        if !(a[3] > 0.0) || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sphere", "need finite center and positive radius"));
        }
        Ok(Self {
            center: Vector3::new(a[0], a[1], a[2]),
            radius: a[3],
        })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.center.x, self.center.y, self.center.z, self.radius]
    }
}

/// End-effector position and collision proxy centers for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmPose {
    pub end_effector: Vector3<f64>,
    pub proxies: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmEnv {
    pub joints: Vec<Joint>,
    /// Offset from the last joint frame to the end effector (m).
    pub tool: Vector3<f64>,
    pub limits: Vec<(f64, f64)>,
    /// Largest commanded joint displacement per step (rad).
    pub max_step: f64,
    pub alpha: f64,
    pub obstacles: Vec<Sphere>,
    pub proxy_radius: f64,
    pub proxies_per_link: usize,
    pub target: Vector3<f64>,
    pub gamma: f64,
    /// Scale of the end-effector position cost.
    pub ee_gain: f64,
    /// Intermediate configurations checked per step and sigma point.
    pub collision_substeps: usize,
}

impl ArmEnv {
    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() < 2 {
            return Err(Error::invalid("joints", "need at least 2 joints"));
        }
        if self.limits.len() != self.joints.len() {
            return Err(Error::invalid("joint_limits", "one (lower, upper) pair per joint"));
        }
        if self.limits.iter().any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("joint_limits", "lower < upper required"));
        }
        if self.joints.iter().any(|j| !(j.axis.norm() > 0.0)) {
            return Err(Error::invalid("axis", "joint axes must be nonzero"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("max_step", "must be positive"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid("alpha", "must be nonnegative"));
        }
        if !(self.proxy_radius > 0.0) || self.proxies_per_link == 0 {
            return Err(Error::invalid("proxies", "need positive radius and at least one proxy per link"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        if !(self.ee_gain >= 0.0) {
            return Err(Error::invalid("ee_gain", "must be nonnegative"));
        }
        if self.collision_substeps == 0 {
            return Err(Error::invalid("collision_substeps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.joints.iter().skip(1).map(|j| j.offset.norm()).sum::<f64>() + self.tool.norm()
    }

    /// Forward kinematics down the chain.
    pub fn fk(&self, q: &[f64]) -> Result<ArmPose> {
        if q.len() != self.joints.len() {
            return Err(Error::DimensionMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        let mut frame = Isometry3::identity();
        let mut origins = Vec::with_capacity(self.joints.len() + 1);
        for (joint, angle) in self.joints.iter().zip(q) {
            frame *= Translation3::from(joint.offset);
            origins.push(frame.translation.vector);
            frame *= UnitQuaternion::from_axis_angle(&Unit::new_normalize(joint.axis), *angle);
        }
        let end_effector = frame.transform_point(&self.tool.into()).coords;
        origins.push(end_effector);
        let mut proxies = Vec::with_capacity(self.joints.len() * self.proxies_per_link);
        for seg in origins.windows(2) {
            for k in 0..self.proxies_per_link {
                let t = (k + 1) as f64 / self.proxies_per_link as f64;
                proxies.push(seg[0] + (seg[1] - seg[0]) * t);
            }
        }
        Ok(ArmPose {
            end_effector,
            proxies,
        })
    }

    /// Same proxies as [`ArmEnv::fk`], checked as they are generated.
    pub fn in_collision(&self, q: &[f64]) -> bool {
        if q.len() != self.joints.len() {
            return true;
        }
        if self.obstacles.is_empty() {
            return false;
        }
        let hits = |c: &Vector3<f64>| {
            self.obstacles.iter().any(|o| {
                let r = o.radius + self.proxy_radius;
                (c - o.center).norm_squared() <= r * r
            })
        };
        let segment_hits = |a: &Vector3<f64>, b: &Vector3<f64>| {
            (1..=self.proxies_per_link).any(|k| {
                let t = k as f64 / self.proxies_per_link as f64;
                hits(&(a + (b - a) * t))
            })
        };
        let mut frame = Isometry3::identity();
        let mut prev: Option<Vector3<f64>> = None;
        for (joint, angle) in self.joints.iter().zip(q) {
            frame *= Translation3::from(joint.offset);
            let origin = frame.translation.vector;
            if prev.is_some_and(|p| segment_hits(&p, &origin)) {
                return true;
            }
            prev = Some(origin);
            frame *= UnitQuaternion::from_axis_angle(&Unit::new_normalize(joint.axis), *angle);
        }
        let end_effector = frame.transform_point(&self.tool.into()).coords;
        prev.is_some_and(|p| segment_hits(&p, &end_effector))
    }

    pub fn collision_count(&self, set: &SigmaPointSet) -> usize {
        match &set.sources {
            Some(sources) => sources
                .iter()
                .zip(&set.points)
                .filter(|(s, p)| {
                    (1..=self.collision_substeps).any(|k| {
                        let t = k as f64 / self.collision_substeps as f64;
                        let q = *s + (*p - *s) * t;
                        self.in_collision(q.as_slice())
                    })
                })
                .count(),
            None => set.points.iter().filter(|p| self.in_collision(p.as_slice())).count(),
        }
    }

    /// `ee_gain · ‖x_d − FK(mean)‖²`.
    pub fn ee_cost(&self, belief: &Gaussian) -> f64 {
        match self.fk(belief.mean().as_slice()) {
            Ok(p) => self.ee_gain * (self.target - p.end_effector).norm_squared(),
            Err(_) => f64::INFINITY,
        }
    }
}

/// `Σₜ λₜ ‖x_d − FK(mean of beliefₜ)‖²`.
pub fn arm_ee_cost(env: &ArmEnv, beliefs: &[Gaussian], target: &Vector3<f64>, weights: &[f64]) -> Result<f64> {
    if beliefs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: beliefs.len(),
            got: weights.len(),
        });
    }
    let mut total = 0.0;
    for (b, w) in beliefs.iter().zip(weights) {
        let p = env.fk(b.mean().as_slice())?;
        total += w * (target - p.end_effector).norm_squared();
    }
    Ok(total)
}

impl Dynamics for ArmEnv {
    fn propagate(&self, state: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(state.len(), |i, _| {
            let (lo, hi) = self.limits[i];
            (state[i] + action[i]).clamp(lo, hi)
        })
    }
}
