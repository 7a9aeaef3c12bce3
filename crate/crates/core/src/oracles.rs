//! Brute-force verifiers: KL by direct quadrature, and checks that the goal
//! cost reduces to the classical objectives (goal-set indicator, weighted
//! Euclidean distance, maximum goal probability, chance constraint).
//!
//! Densities here are evaluated through explicit inverses and determinants,
//! not through the library's Cholesky path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{goal_cost, DiracDelta, Gaussian, GoalSpec, Gmm, Projection, UniformBox};
use crate::error::{Error, Result};
use crate::seeding;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Largest probability mass of `p` allowed outside the grid.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// Midpoint-rule grid over an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl QuadratureGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let g = Self { lower, upper, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > 3 || self.upper.len() != d || self.points.len() != d {
            return Err(Error::invalid("grid", "need 1 to 3 dimensions with matching bounds"));
        }
        if self.points.iter().any(|&n| n < 17) {
            return Err(Error::invalid("grid", "at least 17 points per dimension"));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("grid", "bounds must be finite with lower < upper"));
        }
        Ok(())
    }

    /// Grid covering `k` marginal standard deviations of every Gaussian.
    ///
    /// The spacing in each dimension is at most a third of the smallest
    /// marginal standard deviation among `resolve`, with at least
    /// `min_points` cells.
    pub fn covering(cover: &[(&Gaussian, f64)], resolve: &[&Gaussian], min_points: usize) -> Result<Self> {
        let Some((first, _)) = cover.first() else {
            return Err(Error::invalid("grid", "nothing to cover"));
        };
        let d = first.dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for (g, k) in cover {
            for i in 0..d {
                let s = g.covariance()[(i, i)].sqrt();
                lower[i] = lower[i].min(g.mean()[i] - k * s);
                upper[i] = upper[i].max(g.mean()[i] + k * s);
            }
        }
        let points = (0..d)
            .map(|i| {
                let s = resolve
                    .iter()
                    .map(|g| g.covariance()[(i, i)].sqrt())
                    .fold(f64::INFINITY, f64::min);
                let needed = ((upper[i] - lower[i]) / (s / 3.0)).ceil();
                (needed.min(1e6) as usize).max(min_points)
            })
            .collect();
        Self::new(lower, upper, points)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.upper[i] - self.lower[i]) / self.points[i] as f64)
            .product()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Midpoint of the cell with flat index `k` (first dimension fastest).
    pub fn midpoint(&self, mut k: usize) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let n = self.points[i];
            let j = k % n;
            k /= n;
            let h = (self.upper[i] - self.lower[i]) / n as f64;
            self.lower[i] + (j as f64 + 0.5) * h
        })
    }

    fn contains_box(&self, b: &UniformBox) -> bool {
        (0..self.dim()).all(|i| self.lower[i] <= b.lower()[i] && b.upper()[i] <= self.upper[i])
    }
}

/// Density evaluated from explicit inverses and determinants.
#[derive(Clone, Debug)]
pub enum Density {
    Gaussian(DenseGaussian),
    Mixture(Vec<(f64, DenseGaussian)>),
    Uniform(UniformBox),
}

#[derive(Clone, Debug)]
pub struct DenseGaussian {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub log_norm: f64,
}

impl DenseGaussian {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let det = cov.determinant();
        let precision = cov
            .clone()
            .try_inverse()
            .filter(|_| det > 0.0)
            .ok_or(Error::NotPositiveDefinite { max_jitter: 0.0 })?;
        let n = mean.len() as f64;
        Ok(Self {
            mean,
            precision,
            log_norm: -0.5 * (n * LN_2PI + det.ln()),
        })
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        self.log_norm - 0.5 * d.dot(&(&self.precision * &d))
    }
}

impl From<&Gaussian> for Density {
    fn from(g: &Gaussian) -> Self {
        Density::Gaussian(DenseGaussian::new(g.mean().clone(), g.covariance()).expect("valid Gaussian"))
    }
}

impl From<&Gmm> for Density {
    fn from(g: &Gmm) -> Self {
        Density::Mixture(
            g.weights()
                .iter()
                .zip(g.components())
                .map(|(w, c)| (*w, DenseGaussian::new(c.mean().clone(), c.covariance()).expect("valid component")))
                .collect(),
        )
    }
}

impl From<&UniformBox> for Density {
    fn from(b: &UniformBox) -> Self {
        Density::Uniform(b.clone())
    }
}

impl Density {
    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        match self {
            Density::Gaussian(g) => g.log_pdf(x).exp(),
            Density::Mixture(parts) => parts.iter().map(|(w, g)| w * g.log_pdf(x).exp()).sum(),
            Density::Uniform(b) => {
                if b.contains(x) {
                    1.0 / b.volume()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        match self {
            Density::Gaussian(g) => g.log_pdf(x),
            _ => self.pdf(x).ln(),
        }
    }
}

/// D(p ∥ q) by the midpoint rule, with `0·log(0/q) = 0` and
/// `p·log(p/0) = +∞` applied cell by cell.
pub fn numeric_kl(p: &Density, q: &Density, grid: &QuadratureGrid) -> Result<f64> {
    grid.validate()?;
    let vol = grid.cell_volume();
    let (sum, mass) = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.midpoint(k);
            let lp = p.log_pdf(&x);
            if lp == f64::NEG_INFINITY {
                return (0.0, 0.0);
            }
            let pv = lp.exp();
            let lq = q.log_pdf(&x);
            let term = if lq == f64::NEG_INFINITY { f64::INFINITY } else { pv * (lp - lq) };
            (term * vol, pv * vol)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let outside = match p {
        Density::Uniform(b) if grid.contains_box(b) => 0.0,
        _ => 1.0 - mass,
    };
    if outside > MASS_TOLERANCE {
        return Err(Error::InsufficientCoverage { missing: outside });
    }
    Ok(sum)
}

/// Grid for Gaussian pairs: 8σ of `p`, 6σ of `q`, spacing at most σ_p/3,
/// and at least 4097 points in 1-D or 257 per dimension in 2-D.
pub fn grid_for_pair(p: &Gaussian, q: &Gaussian) -> Result<QuadratureGrid> {
    let min_points = if p.dim() == 1 { 4097 } else { 257 };
    QuadratureGrid::covering(&[(p, 8.0), (q, 6.0)], &[p], min_points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: usize,
    pub detail: String,
}

/// Outcome of one reduction check over a set of instances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reduction: String,
    pub instances: usize,
    pub violations: Vec<Violation>,
    /// Observations that are reported but not asserted (ties, the
    /// non-log chance-constraint comparison).
    pub notes: Vec<String>,
}

impl Report {
    fn new(reduction: &str) -> Self {
        Self {
            reduction: reduction.to_string(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn merge(mut self, instance: usize, other: Report) -> Self {
        self.instances += other.instances;
        self.violations.extend(other.violations.into_iter().map(|v| Violation { instance, ..v }));
        self.notes.extend(other.notes.into_iter().map(|n| format!("instance {instance}: {n}")));
        self
    }

    fn violate(&mut self, detail: String) {
        self.violations.push(Violation { instance: 0, detail });
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Indices sharing the smallest key within relative tolerance.
fn argmin_set(keys: &[f64], tol: f64) -> Vec<usize> {
    let best = keys.iter().copied().fold(f64::INFINITY, f64::min);
    (0..keys.len()).filter(|&i| close(keys[i], best, tol)).collect()
}

/// A Dirac state at `x` against a uniform goal set costs `−log u = log vol`
/// inside the set and `+∞` outside, so every interior point is optimal.
pub fn verify_goal_set_indicator(goal: &UniformBox, points: &[DVector<f64>]) -> Report {
    let mut report = Report::new("goal_set_indicator");
    report.instances = 1;
    let log_vol: f64 = goal.widths().iter().map(|w| w.ln()).sum();
    for (i, x) in points.iter().enumerate() {
        let cost = match goal.log_density(x) {
            Ok(l) => -l,
            Err(e) => {
                report.violate(format!("point {i}: {e}"));
                continue;
            }
        };
        let inside = (0..x.len()).all(|k| goal.lower()[k] <= x[k] && x[k] <= goal.upper()[k]);
        let expected = if inside { log_vol } else { f64::INFINITY };
        if !close(cost, expected, 1e-12) {
            report.violate(format!("point {i}: cost {cost}, expected {expected}"));
        }
    }
    report
}

/// `−log N(x | g, Λ⁻¹) + log N(g | g, Λ⁻¹) = ½(x−g)ᵀΛ(x−g)`.
///
/// Dimensions with zero precision are dropped from the Gaussian side (the
/// limit of infinite goal variance); they must not affect either value.
pub fn verify_weighted_euclidean(goal: &DVector<f64>, precision: &DMatrix<f64>, states: &[DVector<f64>]) -> Report {
    let mut report = Report::new("weighted_euclidean");
    report.instances = 1;
    let n = goal.len();
    let keep: Vec<usize> = (0..n).filter(|&i| precision[(i, i)] != 0.0).collect();
    let dropped: Vec<usize> = (0..n).filter(|&i| precision[(i, i)] == 0.0).collect();
    for &i in &dropped {
        if (0..n).any(|j| precision[(i, j)] != 0.0) {
            report.violate(format!("dimension {i} has zero precision but nonzero coupling"));
            return report;
        }
    }
    let rhs_of = |x: &DVector<f64>| {
        let d = x - goal;
        0.5 * d.dot(&(precision * &d))
    };
    let rhs: Vec<f64> = states.iter().map(rhs_of).collect();
    let lhs: Vec<f64> = if keep.is_empty() {
        vec![0.0; states.len()]
    } else {
        let sub = |v: &DVector<f64>| DVector::from_iterator(keep.len(), keep.iter().map(|&i| v[i]));
        let lam = DMatrix::from_fn(keep.len(), keep.len(), |a, b| precision[(keep[a], keep[b])]);
        let Some(cov) = lam.try_inverse() else {
            report.violate("precision is singular on its nonzero dimensions".into());
            return report;
        };
        let cov = crate::linalg::symmetrize(&cov);
        let g = match Gaussian::new(sub(goal), cov) {
            Ok(g) => g,
            Err(e) => {
                report.violate(format!("goal covariance: {e}"));
                return report;
            }
        };
        let at_goal = g.log_density(&sub(goal)).expect("dimension checked");
        states.iter().map(|x| at_goal - g.log_density(&sub(x)).expect("dimension checked")).collect()
    };
    for (i, x) in states.iter().enumerate() {
        if (lhs[i] - rhs[i]).abs() > 1e-9 * rhs[i].abs().max(1.0) {
            report.violate(format!("state {i}: negative log-likelihood {}, quadratic form {}", lhs[i], rhs[i]));
        }
        for &k in &dropped {
            let mut moved = x.clone();
            moved[k] += 1.0;
            if rhs_of(&moved) != rhs[i] {
                report.violate(format!("state {i}: zero-precision dimension {k} changed the distance"));
            }
        }
    }
    let from_lhs = argmin_set(&lhs, 1e-12);
    let from_rhs = argmin_set(&rhs, 1e-12);
    if !from_lhs.iter().any(|i| from_rhs.contains(i)) {
        report.violate(format!("argmin differs: {from_lhs:?} vs {from_rhs:?}"));
    }
    report
}

/// Ranking beliefs by the M-projection cost against a Dirac goal equals
/// ranking by `−p(g | belief)`. Ties are reported, not broken.
pub fn verify_max_prob(goal: &DVector<f64>, beliefs: &[Gaussian]) -> Report {
    let mut report = Report::new("max_prob");
    report.instances = 1;
    let dirac = match DiracDelta::new(goal.clone()) {
        Ok(d) => GoalSpec::Dirac(d),
        Err(e) => {
            report.violate(format!("goal: {e}"));
            return report;
        }
    };
    let mut cost = Vec::with_capacity(beliefs.len());
    let mut neg_log_density = Vec::with_capacity(beliefs.len());
    for (i, b) in beliefs.iter().enumerate() {
        match goal_cost(b, &dirac, Projection::M, 1.0) {
            Ok(c) => cost.push(c),
            Err(e) => {
                report.violate(format!("belief {i}: {e}"));
                return report;
            }
        }
        let dense = DenseGaussian::new(b.mean().clone(), b.covariance()).expect("valid belief");
        neg_log_density.push(-dense.log_pdf(goal));
    }
    const TIE: f64 = 1e-12;
    for i in 0..beliefs.len() {
        for j in i + 1..beliefs.len() {
            let brute_tie = close(neg_log_density[i], neg_log_density[j], TIE);
            let cost_tie = close(cost[i], cost[j], TIE);
            if brute_tie && cost_tie {
                report.notes.push(format!("tie between beliefs {i} and {j}"));
                continue;
            }
            if brute_tie != cost_tie
                || (neg_log_density[i] < neg_log_density[j]) != (cost[i] < cost[j])
            {
                report.violate(format!(
                    "beliefs {i}, {j}: costs ({}, {}) but densities at goal ({}, {})",
                    cost[i], cost[j], -neg_log_density[i], -neg_log_density[j]
                ));
            }
        }
    }
    report
}

/// Chance-constraint reduction for a uniform goal set.
///
/// Asserts that the belief minimizing the M-projection cost maximizes
/// `∫_G log p(x) dx` (by quadrature over the set). Whether it also maximizes
/// the probability `∫_G p(x) dx` is only reported: the two differ in general.
pub fn verify_chance_constrained(goal: &UniformBox, beliefs: &[Gaussian]) -> Report {
    let mut report = Report::new("chance_constrained");
    report.instances = 1;
    let n = goal.dim();
    if n > 3 || beliefs.is_empty() {
        report.violate("need 1 to 3 dimensions and at least one belief".into());
        return report;
    }
    let points = match n {
        1 => 4097,
        2 => 257,
        _ => 65,
    };
    let grid = QuadratureGrid {
        lower: goal.lower().iter().copied().collect(),
        upper: goal.upper().iter().copied().collect(),
        points: vec![points; n],
    };
    let spec = GoalSpec::Uniform(goal.clone());
    let mut cost = Vec::new();
    let mut log_integral = Vec::new();
    let mut probability = Vec::new();
    for (i, b) in beliefs.iter().enumerate() {
        match goal_cost(b, &spec, Projection::M, 1.0) {
            Ok(c) => cost.push(c),
            Err(e) => {
                report.violate(format!("belief {i}: {e}"));
                return report;
            }
        }
        let dense = DenseGaussian::new(b.mean().clone(), b.covariance()).expect("valid belief");
        let vol = grid.cell_volume();
        let (lp, p) = (0..grid.len())
            .map(|k| {
                let l = dense.log_pdf(&grid.midpoint(k));
                (l * vol, l.exp() * vol)
            })
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        log_integral.push(lp);
        probability.push(p);
    }
    // quadrature error of the log integral is O(h²); ranks within this are ties
    let tol = 1e-6;
    let by_cost = argmin_set(&cost, 1e-12);
    let neg_log: Vec<f64> = log_integral.iter().map(|v| -v).collect();
    let by_log = argmin_set(&neg_log, tol);
    if !by_cost.iter().any(|i| by_log.contains(i)) {
        report.violate(format!(
            "cost argmin {by_cost:?} but log-integral argmax {by_log:?} (costs {cost:?}, integrals {log_integral:?})"
        ));
    }
    if by_cost.len() > 1 {
        report.notes.push(format!("tie among beliefs {by_cost:?}"));
    }
    let neg_p: Vec<f64> = probability.iter().map(|v| -v).collect();
    let by_prob = argmin_set(&neg_p, tol);
    if !by_cost.iter().any(|i| by_prob.contains(i)) {
        report.notes.push(format!(
            "probability argmax {by_prob:?} differs from cost argmin {by_cost:?}"
        ));
    }
    report
}

pub const REDUCTIONS: [&str; 4] = ["goal_set_indicator", "weighted_euclidean", "max_prob", "chance_constrained"];

/// Random covariance with eigenvalues in `[lo, hi]`.
pub fn random_covariance(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
    crate::linalg::symmetrize(&(&q * d * q.transpose()))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> UniformBox {
    let c = random_vector(rng, n, 2.0);
    let w = DVector::from_fn(n, |_, _| rng.random_range(0.2..3.0));
    UniformBox::new(&c - &w * 0.5, &c + &w * 0.5).expect("positive widths")
}

fn goal_set_instance(rng: &mut ChaCha8Rng) -> Report {
    let n = rng.random_range(1..=3);
    let b = random_box(rng, n);
    let mut points: Vec<DVector<f64>> = (0..6)
        .map(|_| DVector::from_fn(n, |i, _| rng.random_range(b.lower()[i]..b.upper()[i])))
        .collect();
    points.push(b.lower().clone());
    points.push(b.upper().clone());
    points.extend((0..4).map(|_| {
        let mut x = b.center();
        let k = rng.random_range(0..n);
        x[k] = if rng.random_bool(0.5) {
            b.upper()[k] + rng.random_range(1e-6..2.0)
        } else {
            b.lower()[k] - rng.random_range(1e-6..2.0)
        };
        x
    }));
    verify_goal_set_indicator(&b, &points)
}

fn weighted_euclidean_instance(rng: &mut ChaCha8Rng, index: usize) -> Report {
    let n = rng.random_range(1..=3);
    let mut lam = random_covariance(rng, n, 0.1, 10.0);
    if index % 4 == 3 && n > 1 {
        let k = rng.random_range(0..n);
        for j in 0..n {
            lam[(k, j)] = 0.0;
            lam[(j, k)] = 0.0;
        }
    }
    let g = random_vector(rng, n, 3.0);
    let mut states: Vec<DVector<f64>> = (0..8).map(|_| random_vector(rng, n, 5.0)).collect();
    states.push(g.clone());
    verify_weighted_euclidean(&g, &lam, &states)
}

fn max_prob_instance(rng: &mut ChaCha8Rng, index: usize) -> Report {
    let n = rng.random_range(1..=3);
    let g = random_vector(rng, n, 2.0);
    let mut beliefs: Vec<Gaussian> = (0..5)
        .map(|_| Gaussian::new(random_vector(rng, n, 3.0), random_covariance(rng, n, 0.05, 3.0)).expect("SPD"))
        .collect();
    if index % 5 == 4 {
        beliefs.push(beliefs[0].clone());
    }
    verify_max_prob(&g, &beliefs)
}

fn chance_instance(rng: &mut ChaCha8Rng) -> Report {
    let n = rng.random_range(1..=2);
    let b = random_box(rng, n);
    let beliefs: Vec<Gaussian> = (0..5)
        .map(|_| Gaussian::new(random_vector(rng, n, 3.0), random_covariance(rng, n, 0.05, 3.0)).expect("SPD"))
        .collect();
    verify_chance_constrained(&b, &beliefs)
}

/// Runs `instances` seeded random instances of every reduction.
pub fn run_reduction_suite(instances: usize, seed: u64) -> Vec<Report> {
    REDUCTIONS
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let parts: Vec<Report> = (0..instances)
                .into_par_iter()
                .map(|i| {
                    let mut rng = seeding::stream(seed, &[r as u64, i as u64]);
                    match r {
                        0 => goal_set_instance(&mut rng),
                        1 => weighted_euclidean_instance(&mut rng, i),
                        2 => max_prob_instance(&mut rng, i),
                        _ => chance_instance(&mut rng),
                    }
                })
                .collect();
            parts
                .into_iter()
                .enumerate()
                .fold(Report::new(name), |acc, (i, part)| acc.merge(i, part))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::kl_gaussian_gaussian;

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn grid1(lo: f64, hi: f64, n: usize) -> QuadratureGrid {
        QuadratureGrid::new(vec![lo], vec![hi], vec![n]).unwrap()
    }

    #[test]
    fn equal_gaussians_have_zero_kl() {
        let p = g1(0.3, 0.7);
        let v = numeric_kl(&(&p).into(), &(&p).into(), &grid_for_pair(&p, &p).unwrap()).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn unit_shift_is_one_half() {
        let v = numeric_kl(&(&g1(0.0, 1.0)).into(), &(&g1(1.0, 1.0)).into(), &grid1(-8.0, 9.0, 4097)).unwrap();
        assert!((v - 0.5).abs() < 1e-5, "{v}");
    }

    #[test]
    fn uniform_missing_support_is_infinite() {
        let q = UniformBox::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let v = numeric_kl(&(&g1(0.0, 1.0)).into(), &(&q).into(), &grid1(-8.0, 8.0, 1025)).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn uniform_p_outside_its_support_contributes_nothing() {
        let p = UniformBox::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        // D(U[-1,1] ∥ N(0,1)) = −log 2 + ½ log 2π + E[x²]/2 with E[x²] = 1/3
        let v = numeric_kl(&(&p).into(), &(&g1(0.0, 1.0)).into(), &grid1(-4.0, 4.0, 8000)).unwrap();
        let cross = 0.5 * LN_2PI + 1.0 / 6.0;
        assert!((v - (cross - 2f64.ln())).abs() < 1e-6, "{v}");
    }

    #[test]
    fn truncated_grid_fails_mass_check() {
        let r = numeric_kl(&(&g1(0.0, 1.0)).into(), &(&g1(0.0, 1.0)).into(), &grid1(-3.0, 3.0, 4097));
        assert!(matches!(r, Err(Error::InsufficientCoverage { .. })));
    }

    #[test]
    fn grid_rules() {
        assert!(QuadratureGrid::new(vec![0.0], vec![1.0], vec![16]).is_err());
        assert!(QuadratureGrid::new(vec![0.0; 4], vec![1.0; 4], vec![17; 4]).is_err());
        assert!(QuadratureGrid::new(vec![1.0], vec![0.0], vec![17]).is_err());
        let g = QuadratureGrid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![20, 40]).unwrap();
        assert_eq!(g.len(), 800);
        assert!((g.cell_volume() - 0.0025).abs() < 1e-15);
        assert!((g.midpoint(0) - DVector::from_row_slice(&[0.025, 0.025])).amax() < 1e-15);
        assert!((g.midpoint(21) - DVector::from_row_slice(&[0.075, 0.075])).amax() < 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_form_2d() {
        let mut rng = seeding::stream(5, &[]);
        for _ in 0..5 {
            let p = Gaussian::new(random_vector(&mut rng, 2, 2.0), random_covariance(&mut rng, 2, 0.05, 2.0)).unwrap();
            let q = Gaussian::new(random_vector(&mut rng, 2, 2.0), random_covariance(&mut rng, 2, 0.05, 2.0)).unwrap();
            let v = numeric_kl(&(&p).into(), &(&q).into(), &grid_for_pair(&p, &q).unwrap()).unwrap();
            let exact = kl_gaussian_gaussian(&p, &q).unwrap();
            assert!((v - exact).abs() < 1e-5, "{v} vs {exact}");
        }
    }

    #[test]
    fn goal_set_examples() {
        let unit = UniformBox::new(DVector::zeros(2), DVector::from_element(2, 1.0)).unwrap();
        let r = verify_goal_set_indicator(&unit, &[DVector::from_element(2, 0.5)]);
        assert!(r.passed());
        let four = UniformBox::new(DVector::zeros(2), DVector::from_element(2, 2.0)).unwrap();
        assert!((-four.log_density(&DVector::from_element(2, 1.0)).unwrap() - 4f64.ln()).abs() < 1e-15);
        let r = verify_goal_set_indicator(&four, &[DVector::from_element(2, 1.0), DVector::from_element(2, 3.0)]);
        assert!(r.passed(), "{r:?}");
        assert_eq!(four.log_density(&DVector::from_element(2, 3.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn weighted_euclidean_examples() {
        let lam = DMatrix::from_element(1, 1, 1.0);
        let r = verify_weighted_euclidean(&DVector::zeros(1), &lam, &[DVector::zeros(1), DVector::from_element(1, 2.0)]);
        assert!(r.passed(), "{r:?}");
        let lam = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let states = [DVector::from_row_slice(&[0.1, 50.0]), DVector::from_row_slice(&[0.5, 0.0])];
        let r = verify_weighted_euclidean(&DVector::zeros(2), &lam, &states);
        assert!(r.passed(), "{r:?}");
        // a mismatched quadratic is caught
        let coupled = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.0]);
        assert!(!verify_weighted_euclidean(&DVector::zeros(2), &coupled, &states).passed());
    }

    #[test]
    fn max_prob_examples() {
        let g = DVector::zeros(1);
        let r = verify_max_prob(&g, &[g1(0.0, 1.0), g1(2.0, 1.0)]);
        assert!(r.passed() && r.notes.is_empty());
        let r = verify_max_prob(&g, &[g1(1.0, 1.0), g1(-1.0, 1.0)]);
        assert!(r.passed());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn chance_examples() {
        let b = UniformBox::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let r = verify_chance_constrained(&b, &[g1(0.0, 1.0), g1(3.0, 1.0)]);
        assert!(r.passed() && r.notes.is_empty(), "{r:?}");
        let r = verify_chance_constrained(&b, &[g1(0.2, 0.5), g1(0.2, 0.5)]);
        assert!(r.passed());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn chance_log_and_probability_forms_can_disagree() {
        // a tight belief near the edge holds more mass; a wide centered one
        // has the larger expected log density
        let b = UniformBox::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let r = verify_chance_constrained(&b, &[g1(0.0, 4.0), g1(0.6, 0.01)]);
        assert!(r.passed(), "{r:?}");
        assert!(r.notes.iter().any(|n| n.contains("probability argmax")), "{r:?}");
    }

    #[test]
    fn suite_is_clean_and_deterministic() {
        let a = run_reduction_suite(20, 1);
        assert_eq!(a.len(), 4);
        for r in &a {
            assert_eq!(r.instances, 20);
            assert!(r.passed(), "{r:?}");
        }
        assert_eq!(a, run_reduction_suite(20, 1));
    }
}
