//! Cross-entropy method over flattened action sequences.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    fit_gaussian_weighted_with, fit_gmm_elite, kl_gaussian_gaussian, kl_gmm_unscented, CovarianceStructure, FitOptions,
    Gaussian, Gmm,
};
use crate::error::{Error, Result};
use crate::seeding;

/// Consecutive iterations without enough finite costs before giving up.
const INFEASIBLE_STREAK: usize = 3;
/// Planner dimension up to which `Auto` keeps a full covariance.
const AUTO_FULL_MAX_DIM: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// Full covariance up to 32 dimensions, diagonal above.
    #[default]
    Auto,
    Full,
    Diagonal,
}

impl CovarianceMode {
    pub fn structure(self, dim: usize) -> CovarianceStructure {
        match self {
            CovarianceMode::Full => CovarianceStructure::Full,
            CovarianceMode::Diagonal => CovarianceStructure::Diagonal,
            CovarianceMode::Auto if dim <= AUTO_FULL_MAX_DIM => CovarianceStructure::Full,
            CovarianceMode::Auto => CovarianceStructure::Diagonal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemConfig {
    pub n_samples: usize,
    pub n_elite: usize,
    pub max_iters: usize,
    /// Stop once |D(previous ∥ refit)| drops below this.
    pub epsilon: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Standard deviation of the initial zero-mean sampling distribution.
    pub init_scale: f64,
    /// 1 for a Gaussian planner, more for a mixture.
    pub n_components: usize,
    pub covariance: CovarianceMode,
    pub variance_floor: f64,
    /// Sigma dispersion for the mixture stopping rule.
    pub beta: f64,
}

impl CemConfig {
    /// Defaults (M=128, K=16, 30 iterations) over the given bounds.
    pub fn with_bounds(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self {
            n_samples: 128,
            n_elite: 16,
            max_iters: 30,
            epsilon: 1e-3,
            lower,
            upper,
            init_scale: 1.0,
            n_components: 1,
            covariance: CovarianceMode::Auto,
            variance_floor: 1e-6,
            beta: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elite < 2 || self.n_elite > self.n_samples {
            return Err(Error::invalid("n_elite", "need 2 <= K <= M"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::invalid("bounds", "lower and upper need the same nonzero length"));
        }
        if self.lower.iter().zip(self.upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("bounds", "lower < upper required in every dimension"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale", "must be positive"));
        }
        if self.n_components == 0 {
            return Err(Error::invalid("n_components", "must be at least 1"));
        }
        if !(self.variance_floor >= 0.0) {
            return Err(Error::invalid("variance_floor", "must be nonnegative"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta", "must be positive"));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            jitter: 1e-9,
            variance_floor: self.variance_floor,
            structure: self.covariance.structure(self.dim()),
        }
    }
}

/// Sampling distribution over action sequences.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanDistribution {
    Gaussian(Gaussian),
    Gmm(Gmm),
}

impl PlanDistribution {
    pub fn dim(&self) -> usize {
        match self {
            PlanDistribution::Gaussian(g) => g.dim(),
            PlanDistribution::Gmm(g) => g.dim(),
        }
    }

    /// Mean for a Gaussian, mean of the heaviest component for a mixture.
    pub fn representative_mean(&self) -> &DVector<f64> {
        match self {
            PlanDistribution::Gaussian(g) => g.mean(),
            PlanDistribution::Gmm(g) => g.components()[g.dominant()].mean(),
        }
    }

    fn sample_one<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            PlanDistribution::Gaussian(g) => g.sample_one(rng),
            PlanDistribution::Gmm(g) => g.sample_one(rng),
        }
    }
}

/// D(prev ∥ next): closed form for Gaussians, sigma-point estimate for mixtures.
pub fn convergence_metric(prev: &PlanDistribution, next: &PlanDistribution, beta: f64) -> Result<f64> {
    match (prev, next) {
        (PlanDistribution::Gaussian(p), PlanDistribution::Gaussian(q)) => kl_gaussian_gaussian(p, q),
        (PlanDistribution::Gmm(p), PlanDistribution::Gmm(q)) => kl_gmm_unscented(p, q, beta),
        _ => Err(Error::FamilyMismatch(
            "convergence metric needs two Gaussians or two mixtures".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iter: usize,
    pub elite_mean_cost: f64,
    pub elite_min_cost: f64,
    pub kl_step: f64,
    /// K-th smallest sampled cost.
    #[serde(skip)]
    pub elite_threshold: f64,
}

#[derive(Clone, Debug)]
pub struct CemOutcome {
    pub best: DVector<f64>,
    pub distribution: PlanDistribution,
    pub trace: Vec<IterationTrace>,
}

fn clamp(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn initial_distribution(cfg: &CemConfig) -> Result<PlanDistribution> {
    let g = Gaussian::isotropic(DVector::zeros(cfg.dim()), cfg.init_scale * cfg.init_scale)?;
    Ok(if cfg.n_components == 1 {
        PlanDistribution::Gaussian(g)
    } else {
        let w = 1.0 / cfg.n_components as f64;
        PlanDistribution::Gmm(Gmm::new(vec![w; cfg.n_components], vec![g; cfg.n_components])?)
    })
}

/// Minimizes `cost_fn` over the box `[lower, upper]`.
///
/// Starts from `N(0, init_scale²·I)` (a mixture of identical copies when
/// `n_components > 1`), samples `M` sequences per iteration from per-sample
/// streams derived from `(seed, iteration, sample)`, clamps them to the
/// bounds, and refits to the `K` cheapest. Cost evaluation runs on the
/// ambient rayon pool; results do not depend on its size.
pub fn plan_cem<F>(cost_fn: &F, cfg: &CemConfig, seed: u64) -> Result<CemOutcome>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let opts = cfg.fit_options();
    let mut dist = initial_distribution(cfg)?;
    let mut trace = Vec::new();
    let mut streak = 0;

    for iter in 0..cfg.max_iters {
        let evaluated: Vec<(DVector<f64>, Result<f64>)> = (0..cfg.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeding::stream(seed, &[iter as u64, i as u64]);
                let mut u = dist.sample_one(&mut rng);
                clamp(&mut u, &cfg.lower, &cfg.upper);
                let c = cost_fn(&u);
                (u, c)
            })
            .collect();
        let mut samples = Vec::with_capacity(cfg.n_samples);
        let mut costs = Vec::with_capacity(cfg.n_samples);
        for (i, (u, c)) in evaluated.into_iter().enumerate() {
            let c = c?;
            if c.is_nan() {
                return Err(Error::NanCost { sample: i });
            }
            samples.push(u);
            costs.push(c);
        }

        let finite = costs.iter().filter(|c| c.is_finite()).count();
        if finite < cfg.n_elite {
            streak += 1;
            trace.push(IterationTrace {
                iter,
                elite_mean_cost: f64::INFINITY,
                elite_min_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
                kl_step: f64::NAN,
                elite_threshold: f64::INFINITY,
            });
            if streak >= INFEASIBLE_STREAK {
                return Err(Error::Infeasible {
                    needed: cfg.n_elite,
                    iterations: streak,
                });
            }
            continue;
        }
        streak = 0;

        let mut sorted = costs.clone();
        sorted.sort_by(f64::total_cmp);
        let elite_costs = &sorted[..cfg.n_elite];
        let mut fit_rng = seeding::stream(seed, &[iter as u64, u64::MAX]);
        let next = if cfg.n_components == 1 {
            let idx = crate::distributions::fit::elite_indices(&costs, cfg.n_elite);
            let elite: Vec<DVector<f64>> = idx.into_iter().map(|i| samples[i].clone()).collect();
            PlanDistribution::Gaussian(fit_gaussian_weighted_with(&elite, &vec![1.0; elite.len()], &opts)?)
        } else {
            PlanDistribution::Gmm(fit_gmm_elite(
                &samples,
                &costs,
                cfg.n_elite,
                cfg.n_components,
                &opts,
                &mut fit_rng,
            )?)
        };
        let kl = convergence_metric(&dist, &next, cfg.beta)?;
        dist = next;
        trace.push(IterationTrace {
            iter,
            elite_mean_cost: elite_costs.iter().sum::<f64>() / cfg.n_elite as f64,
            elite_min_cost: elite_costs[0],
            kl_step: kl,
            elite_threshold: elite_costs[cfg.n_elite - 1],
        });
        // The sigma-point estimate can be negative; only a small magnitude means the
        // distribution stopped moving.
        if cfg.epsilon.is_infinite() || kl.abs() < cfg.epsilon {
            break;
        }
    }

    let mut best = dist.representative_mean().clone();
    clamp(&mut best, &cfg.lower, &cfg.upper);
    Ok(CemOutcome {
        best,
        distribution: dist,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn bounds(n: usize, lo: f64, hi: f64) -> (DVector<f64>, DVector<f64>) {
        (DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    #[test]
    fn quadratic_optimum_found() {
        let target = DVector::from_row_slice(&[1.0, -1.0, 0.5, 0.0]);
        let cost = |u: &DVector<f64>| Ok((u - &target).norm_squared());
        let (lo, hi) = bounds(4, -5.0, 5.0);
        let cfg = CemConfig {
            n_samples: 256,
            n_elite: 32,
            max_iters: 50,
            ..CemConfig::with_bounds(lo, hi)
        };
        let out = plan_cem(&cost, &cfg, 17).unwrap();
        assert!((out.best - target).amax() < 0.05);
    }

    #[test]
    fn flat_cost_with_all_elites_does_not_drift() {
        let cost = |_: &DVector<f64>| Ok(1.0);
        let (lo, hi) = bounds(3, -10.0, 10.0);
        let cfg = CemConfig {
            n_elite: 128,
            max_iters: 5,
            epsilon: 1e-12,
            ..CemConfig::with_bounds(lo, hi)
        };
        let out = plan_cem(&cost, &cfg, 3).unwrap();
        assert_eq!(out.trace.len(), 5);
        assert!(out.best.amax() < 0.5 * cfg.init_scale);
        match out.distribution {
            PlanDistribution::Gaussian(g) => assert!(g.covariance().diagonal().min() > 0.5),
            _ => unreachable!(),
        }
    }

    #[test]
    fn infinite_epsilon_runs_one_iteration() {
        let calls = AtomicUsize::new(0);
        let cost = |u: &DVector<f64>| {
            calls.fetch_add(1, Ordering::Relaxed);
            Ok(u.norm())
        };
        let (lo, hi) = bounds(2, -1.0, 1.0);
        let cfg = CemConfig {
            epsilon: f64::INFINITY,
            ..CemConfig::with_bounds(lo, hi)
        };
        let out = plan_cem(&cost, &cfg, 0).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(calls.load(Ordering::Relaxed), cfg.n_samples);
    }

    #[test]
    fn negative_mixture_kl_does_not_stop_early() {
        let n = 15;
        let broad = Gaussian::isotropic(DVector::zeros(n), 1.0).unwrap();
        let narrow = Gaussian::isotropic(DVector::from_element(n, 0.2), 0.3).unwrap();
        let prev = PlanDistribution::Gmm(Gmm::new(vec![0.5, 0.5], vec![broad.clone(), broad]).unwrap());
        let next = PlanDistribution::Gmm(Gmm::new(vec![0.5, 0.5], vec![narrow.clone(), narrow]).unwrap());
        assert!(convergence_metric(&prev, &next, 1.0).unwrap() < 0.0);

        let (lo, hi) = bounds(n, -1.0, 1.0);
        let target = DVector::from_element(n, 0.3);
        let cost = |u: &DVector<f64>| Ok((u - &target).norm_squared());
        let cfg = CemConfig {
            n_components: 2,
            ..CemConfig::with_bounds(lo, hi)
        };
        let out = plan_cem(&cost, &cfg, 0).unwrap();
        let (last, rest) = out.trace.split_last().unwrap();
        assert!(rest.iter().all(|t| t.kl_step.abs() >= cfg.epsilon));
        assert!(last.kl_step.abs() < cfg.epsilon || out.trace.len() == cfg.max_iters);
    }

    #[test]
    fn samples_respect_bounds() {
        let (lo, hi) = bounds(2, -0.1, 0.2);
        let cost = |u: &DVector<f64>| {
            assert!(u.iter().all(|v| (-0.1..=0.2).contains(v)));
            Ok(u.norm())
        };
        let cfg = CemConfig {
            init_scale: 5.0,
            ..CemConfig::with_bounds(lo.clone(), hi.clone())
        };
        let out = plan_cem(&cost, &cfg, 1).unwrap();
        assert!(out.best.iter().all(|v| (-0.1..=0.2).contains(v)));
    }

    #[test]
    fn nan_cost_names_the_sample() {
        let (lo, hi) = bounds(1, -1.0, 1.0);
        let cost = |u: &DVector<f64>| Ok(if u[0] > 0.5 { f64::NAN } else { 0.0 });
        let err = plan_cem(&cost, &CemConfig::with_bounds(lo, hi), 2).unwrap_err();
        assert!(matches!(err, Error::NanCost { .. }));
    }

    #[test]
    fn all_infinite_costs_are_infeasible() {
        let (lo, hi) = bounds(1, -1.0, 1.0);
        let cost = |_: &DVector<f64>| Ok(f64::INFINITY);
        let err = plan_cem(&cost, &CemConfig::with_bounds(lo, hi), 2).unwrap_err();
        assert!(matches!(err, Error::Infeasible { iterations: 3, .. }));
    }

    #[test]
    fn results_independent_of_thread_count() {
        let cost = |u: &DVector<f64>| Ok((u[0] - 0.3).powi(2) + (u[1] + 0.2).powi(2) + (3.0 * u[2]).sin());
        let (lo, hi) = bounds(3, -2.0, 2.0);
        let cfg = CemConfig::with_bounds(lo, hi);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| plan_cem(&cost, &cfg, 99).unwrap())
        };
        let (a, b) = (run(1), run(8));
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn convergence_metric_cases() {
        let g = |m: f64| PlanDistribution::Gaussian(Gaussian::isotropic(DVector::from_element(1, m), 1.0).unwrap());
        assert_eq!(convergence_metric(&g(0.0), &g(0.0), 1.0).unwrap(), 0.0);
        assert!((convergence_metric(&g(0.0), &g(1.0), 1.0).unwrap() - 0.5).abs() < 1e-12);
        let mix = PlanDistribution::Gmm(
            Gmm::new(
                vec![0.3, 0.7],
                vec![
                    Gaussian::isotropic(DVector::from_element(2, -1.0), 0.5).unwrap(),
                    Gaussian::isotropic(DVector::from_element(2, 2.0), 1.5).unwrap(),
                ],
            )
            .unwrap(),
        );
        assert!(convergence_metric(&mix, &mix, 1.0).unwrap().abs() < 1e-9);
        assert!(matches!(
            convergence_metric(&g(0.0), &mix, 1.0),
            Err(Error::FamilyMismatch(_))
        ));
    }
}
