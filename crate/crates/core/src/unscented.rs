//! Single-parameter unscented transform.
//!
//! Sigma points are `μ ± β·Lᵢ` for the columns `Lᵢ` of the lower Cholesky
//! factor of Σ, plus the mean itself. After propagation the mean is the
//! plain average of the 2n dispersed points and the covariance is their
//! scatter scaled by `1/(2β²)`; both are exact for affine maps and
//! independent of β there. The central point is carried along only for cost
//! evaluation.

use nalgebra::{DMatrix, DVector};

use crate::distributions::Gaussian;
use crate::error::{Error, Result};
use crate::linalg;

/// Deterministic part `f(x, u)` of a stochastic transition.
pub trait Dynamics {
    fn propagate(&self, state: &DVector<f64>, action: &DVector<f64>) -> DVector<f64>;

    /// Brings a propagated point onto the same chart as `reference` (for
    /// instance unwrapping an angle). Identity by default.
    fn align(&self, _point: &mut DVector<f64>, _reference: &DVector<f64>) {}

    /// Canonicalizes a propagated mean (for instance wrapping an angle).
    fn canonicalize(&self, _mean: &mut DVector<f64>) {}
}

impl<F> Dynamics for F
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    fn propagate(&self, state: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        self(state, action)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPointSet {
    /// `+β` rows, then `−β` rows, center last.
    pub points: Vec<DVector<f64>>,
    /// Pre-propagation points in the same order, when this set is the output
    /// of a transform.
    pub sources: Option<Vec<DVector<f64>>>,
    pub n: usize,
    pub beta: f64,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.points[2 * self.n]
    }

    pub fn dispersed(&self) -> &[DVector<f64>] {
        &self.points[..2 * self.n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtConfig {
    pub beta: f64,
    /// Additive process noise Σ_w.
    pub process_noise: DMatrix<f64>,
    pub jitter: f64,
}

impl UtConfig {
    pub fn new(beta: f64, process_noise: DMatrix<f64>) -> Result<Self> {
        let cfg = Self {
            beta,
            process_noise,
            jitter: linalg::JITTER_START,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "sigma dispersion must be positive"));
        }
        if self.process_noise.nrows() != self.process_noise.ncols() {
            return Err(Error::invalid("process_noise", "matrix must be square"));
        }
        if linalg::asymmetry(&self.process_noise) > 1e-12 * self.process_noise.amax().max(1.0) {
            return Err(Error::invalid("process_noise", "matrix must be symmetric"));
        }
        let eig = self.process_noise.clone().symmetric_eigenvalues();
        if eig.iter().any(|e| *e < -1e-12) {
            return Err(Error::invalid("process_noise", "matrix must be positive semidefinite"));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::invalid("jitter", "must be positive"));
        }
        Ok(())
    }
}

pub fn sigma_points(belief: &Gaussian, beta: f64) -> Result<SigmaPointSet> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", "sigma dispersion must be positive"));
    }
    let n = belief.dim();
    let l = belief.cholesky_l();
    let mu = belief.mean();
    let mut points = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        points.push(mu + l.column(i) * beta);
    }
    for i in 0..n {
        points.push(mu - l.column(i) * beta);
    }
    points.push(mu.clone());
    Ok(SigmaPointSet {
        points,
        sources: None,
        n,
        beta,
    })
}

/// Propagates `belief` one step through `dynamics` under `action`.
///
/// Returns the predicted belief (with `Σ_w` added and symmetrized) and the
/// propagated sigma points, whose `sources` hold the pre-propagation points.
pub fn unscented_transform<D: Dynamics + ?Sized>(
    belief: &Gaussian,
    action: &DVector<f64>,
    dynamics: &D,
    cfg: &UtConfig,
) -> Result<(Gaussian, SigmaPointSet)> {
    let n = belief.dim();
    if cfg.process_noise.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cfg.process_noise.nrows(),
        });
    }
    let pre = sigma_points(belief, cfg.beta)?;
    let mut points: Vec<DVector<f64>> = Vec::with_capacity(pre.points.len());
    for (index, p) in pre.points.iter().enumerate() {
        let out = dynamics.propagate(p, action);
        if out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: out.len(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSigmaPoint { index });
        }
        points.push(out);
    }
    let center = points[2 * n].clone();
    for p in points.iter_mut().take(2 * n) {
        dynamics.align(p, &center);
    }

    let inv = 1.0 / (2 * n) as f64;
    let mut mean = DVector::zeros(n);
    for p in &points[..2 * n] {
        mean.axpy(inv, p, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    let scale = 1.0 / (2.0 * cfg.beta * cfg.beta);
    for p in &points[..2 * n] {
        let d = p - &mean;
        cov.ger(scale, &d, &d, 1.0);
    }
    cov += &cfg.process_noise;
    let cov = linalg::symmetrize(&cov);
    dynamics.canonicalize(&mut mean);
    let predicted = Gaussian::new(mean, cov)?;
    Ok((
        predicted,
        SigmaPointSet {
            points,
            sources: Some(pre.points),
            n,
            beta: cfg.beta,
        },
    ))
}
