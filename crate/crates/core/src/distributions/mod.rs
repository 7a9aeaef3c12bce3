//! Probability distributions over the state (and action-sequence) space:
//! Gaussians, mixtures, Dirac deltas and axis-aligned uniform boxes, plus the
//! divergences used as planning costs.

pub(crate) mod fit;
mod kl;

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use fit::{fit_gaussian_weighted, fit_gaussian_weighted_with, fit_gmm_elite, CovarianceStructure, FitOptions};
pub use kl::{goal_cost, kl_gaussian_gaussian, kl_gmm_unscented, uniform_cross_entropy};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on |Σ_ij − Σ_ji| relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-8;
/// Tolerance on Σ w − 1 for mixture weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Multivariate normal with a cached (possibly jittered) Cholesky factor.
#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    log_det: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    /// Builds a Gaussian, symmetrizing the covariance and regularizing it with
    /// diagonal jitter if a plain factorization fails.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::invalid("mean", "dimension must be at least 1"));
        }
        check_dim(n, cov.nrows())?;
        check_dim(n, cov.ncols())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean", "entries must be finite"));
        }
        let scale = cov.amax().max(1.0);
        if linalg::asymmetry(&cov) > SYMMETRY_TOL * scale {
            return Err(Error::invalid("covariance", "matrix is not symmetric"));
        }
        let cov = linalg::symmetrize(&cov);
        let (chol, jitter) = linalg::cholesky_jittered(&cov)?;
        let log_det = linalg::log_det(&chol);
        Ok(Self {
            mean,
            cov,
            chol,
            jitter,
            log_det,
        })
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, DMatrix::identity(n, n) * variance)
    }

    pub fn standard(n: usize) -> Self {
        Self::isotropic(DVector::zeros(n), 1.0).expect("identity covariance is PD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the regularized covariance.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub(crate) fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Diagonal jitter that was needed to factor the covariance (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let m = linalg::mahalanobis_sq(&self.chol, &d);
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + m)
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(linalg::mahalanobis_sq(&self.chol, &(x - &self.mean)))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Gaussian mixture model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("components", "mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::invalid(
                "weights",
                format!("{} weights for {} components", weights.len(), components.len()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid("weights", format!("weights sum to {total}, not 1")));
        }
        let n = components[0].dim();
        for c in &components {
            check_dim(n, c.dim())?;
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    /// Index of the highest-weight component (lowest index on ties).
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &DVector<f64>) -> f64 {
        linalg::logsumexp(
            self.weights
                .iter()
                .zip(&self.components)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, c)| w.ln() + c.log_density_unchecked(x)),
        )
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.components.len() == 1 {
            return self.components[0].sample_one(rng);
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        self.components[pick].sample_one(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Point mass.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracDelta {
    point: DVector<f64>,
}

impl DiracDelta {
    pub fn new(point: DVector<f64>) -> Result<Self> {
        if point.is_empty() || point.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point", "entries must be finite and nonempty"));
        }
        Ok(Self { point })
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// 0 at the point itself (δ = 1 there), −∞ everywhere else.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(if *x == self.point { 0.0 } else { f64::NEG_INFINITY })
    }
}

/// Uniform density over a closed axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl UniformBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("lower", "dimension must be at least 1"));
        }
        for (l, u) in lower.iter().zip(upper.iter()) {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(Error::invalid("bounds", "need finite lower < upper in every dimension"));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn log_volume(&self) -> f64 {
        self.widths().iter().map(|w| w.ln()).sum()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(if self.contains(x) {
            -self.log_volume()
        } else {
            f64::NEG_INFINITY
        })
    }
}

/// Which argument order of the KL divergence is minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Projection {
    /// D(state ∥ goal): mode-seeking.
    I,
    /// D(goal ∥ state): moment-matching.
    M,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::I => f.write_str("I"),
            Projection::M => f.write_str("M"),
        }
    }
}

/// Goal distribution over states.
#[derive(Clone, Debug, PartialEq)]
pub enum GoalSpec {
    Gaussian(Gaussian),
    Gmm(Gmm),
    Dirac(DiracDelta),
    Uniform(UniformBox),
}

impl GoalSpec {
    pub fn dim(&self) -> usize {
        match self {
            GoalSpec::Gaussian(g) => g.dim(),
            GoalSpec::Gmm(g) => g.dim(),
            GoalSpec::Dirac(d) => d.dim(),
            GoalSpec::Uniform(u) => u.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GoalSpec::Gaussian(_) => "gaussian",
            GoalSpec::Gmm(_) => "gmm",
            GoalSpec::Dirac(_) => "dirac",
            GoalSpec::Uniform(_) => "uniform",
        }
    }

    /// Whether the density vanishes outside a bounded support, which rules
    /// out the I-projection.
    pub fn has_bounded_support(&self) -> bool {
        matches!(self, GoalSpec::Dirac(_) | GoalSpec::Uniform(_))
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            GoalSpec::Gaussian(g) => g.log_density(x),
            GoalSpec::Gmm(g) => g.log_density(x),
            GoalSpec::Dirac(d) => d.log_density(x),
            GoalSpec::Uniform(u) => u.log_density(x),
        }
    }
}

/// Anything that can be viewed as a weighted list of Gaussian components.
pub trait Mixture {
    fn parts(&self) -> Vec<(f64, &Gaussian)>;
    fn mixture_dim(&self) -> usize;
    fn mixture_log_density(&self, x: &DVector<f64>) -> f64;
}

impl Mixture for Gaussian {
    fn parts(&self) -> Vec<(f64, &Gaussian)> {
        vec![(1.0, self)]
    }
    fn mixture_dim(&self) -> usize {
        self.dim()
    }
    fn mixture_log_density(&self, x: &DVector<f64>) -> f64 {
        self.log_density_unchecked(x)
    }
}

impl Mixture for Gmm {
    fn parts(&self) -> Vec<(f64, &Gaussian)> {
        self.weights.iter().copied().zip(self.components.iter()).collect()
    }
    fn mixture_dim(&self) -> usize {
        self.dim()
    }
    fn mixture_log_density(&self, x: &DVector<f64>) -> f64 {
        self.log_density_unchecked(x)
    }
}

/// log N(x | μ, σ²) for scalars; used by tests and oracles.
pub fn normal_log_pdf_1d(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn uniform_unit_box_has_zero_log_density_inside() {
        let b = UniformBox::new(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(b.log_density(&v(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(b.log_density(&v(&[2.0, 0.0])).unwrap(), f64::NEG_INFINITY);
        // closed box
        assert_eq!(b.log_density(&v(&[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn standard_normal_log_density_at_mean() {
        let g = Gaussian::standard(1);
        let expected = -0.5 * (2.0 * PI).ln();
        assert!((g.log_density(&v(&[0.0])).unwrap() - expected).abs() < 1e-15);
        assert!((expected + 0.918_938_533).abs() < 1e-9);
    }

    #[test]
    fn dirac_density_is_point_mass() {
        let d = DiracDelta::new(v(&[1.0, 2.0])).unwrap();
        assert_eq!(d.log_density(&v(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(d.log_density(&v(&[1.0, 2.0 + 1e-15])).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = Gaussian::standard(2);
        assert!(matches!(
            g.log_density(&v(&[0.0])),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let goal = GoalSpec::Uniform(UniformBox::new(v(&[0.0]), v(&[1.0])).unwrap());
        assert!(goal.log_density(&v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn gmm_weights_must_sum_to_one() {
        let c = Gaussian::standard(1);
        assert!(Gmm::new(vec![0.5, 0.4], vec![c.clone(), c.clone()]).is_err());
        assert!(Gmm::new(vec![0.5, 0.5], vec![c.clone(), c]).is_ok());
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Gaussian::new(v(&[0.0, 0.0]), cov).is_err());
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let g = Gaussian::standard(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs = g.sample(n, &mut rng);
        let mean = xs.iter().fold(DVector::zeros(3), |a, x| a + x) / n as f64;
        let bound = 3.0 / (n as f64).sqrt();
        for m in mean.iter() {
            assert!(m.abs() < bound, "{m} exceeds {bound}");
        }
    }

    #[test]
    fn single_component_gmm_samples_like_its_gaussian() {
        let g = Gaussian::new(v(&[1.0, -2.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let m = Gmm::single(g.clone());
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(g.sample(4, &mut a), m.sample(4, &mut b));
        let x = v(&[0.3, 0.1]);
        assert!((m.log_density(&x).unwrap() - g.log_density(&x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = Gaussian::standard(2);
        let a = g.sample(5, &mut ChaCha8Rng::seed_from_u64(3));
        let b = g.sample(5, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
