use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gaussian, Gmm};
use crate::error::{Error, Result};
use crate::linalg;

const EM_MAX_ITERS: usize = 50;
const RESPONSIBILITY_FLOOR: f64 = 1e-10;
const WEIGHT_FLOOR: f64 = 1e-6;

/// Covariance parameterization used when refitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceStructure {
    #[default]
    Full,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Added to the diagonal of every fitted covariance.
    pub jitter: f64,
    /// Lower bound on fitted variances (diagonal entries).
    pub variance_floor: f64,
    pub structure: CovarianceStructure,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            jitter: 1e-9,
            variance_floor: 0.0,
            structure: CovarianceStructure::Full,
        }
    }
}

/// Weighted maximum-likelihood Gaussian with default options.
pub fn fit_gaussian_weighted(samples: &[DVector<f64>], weights: &[f64]) -> Result<Gaussian> {
    fit_gaussian_weighted_with(samples, weights, &FitOptions::default())
}

pub fn fit_gaussian_weighted_with(samples: &[DVector<f64>], weights: &[f64], opts: &FitOptions) -> Result<Gaussian> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if weights.len() != samples.len() {
        return Err(Error::invalid("weights", "one weight per sample required"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights", "weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights", "weights must not all be zero"));
    }
    let n = samples[0].len();
    for s in samples {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    let (mean, cov) = weighted_moments(samples, weights, total);
    Gaussian::new(mean, finish_covariance(cov, opts))
}

fn weighted_moments(samples: &[DVector<f64>], weights: &[f64], total: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples[0].len();
    let mut mean = DVector::zeros(n);
    for (x, w) in samples.iter().zip(weights) {
        if *w > 0.0 {
            mean.axpy(*w / total, x, 1.0);
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for (x, w) in samples.iter().zip(weights) {
        if *w > 0.0 {
            let d = x - &mean;
            cov.ger(*w / total, &d, &d, 1.0);
        }
    }
    (mean, cov)
}

fn finish_covariance(mut cov: DMatrix<f64>, opts: &FitOptions) -> DMatrix<f64> {
    let n = cov.nrows();
    if opts.structure == CovarianceStructure::Diagonal {
        cov = DMatrix::from_diagonal(&cov.diagonal());
    }
    cov = linalg::symmetrize(&cov);
    for i in 0..n {
        cov[(i, i)] = cov[(i, i)].max(opts.variance_floor) + opts.jitter;
    }
    cov
}

/// Indices of the `k` lowest costs, ties broken by index.
pub(crate) fn elite_indices(costs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Refits a mixture to the `k` lowest-cost samples by EM.
///
/// EM runs for at most 50 iterations from a k-means++ seeding drawn with
/// `rng`; responsibilities are floored at 1e-10 and component weights at
/// 1e-6 (then renormalized). With one component this is exactly the
/// uniform-weight Gaussian MLE of the elite set.
pub fn fit_gmm_elite<R: Rng + ?Sized>(
    samples: &[DVector<f64>],
    costs: &[f64],
    k: usize,
    n_components: usize,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<Gmm> {
    if samples.len() != costs.len() {
        return Err(Error::invalid("costs", "one cost per sample required"));
    }
    if k == 0 || samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if k > samples.len() {
        return Err(Error::invalid("k", format!("elite count {k} exceeds {} samples", samples.len())));
    }
    if n_components == 0 {
        return Err(Error::invalid("n_components", "need at least one component"));
    }
    let elite: Vec<DVector<f64>> = elite_indices(costs, k).into_iter().map(|i| samples[i].clone()).collect();
    if n_components == 1 {
        let g = fit_gaussian_weighted_with(&elite, &vec![1.0; elite.len()], opts)?;
        return Ok(Gmm::single(g));
    }
    em(&elite, n_components, opts, rng)
}

fn kmeans_pp_centers<R: Rng + ?Sized>(data: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = data
            .iter()
            .map(|x| centers.iter().map(|c| (x - c).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if target < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[pick].clone());
    }
    centers
}

fn em<R: Rng + ?Sized>(data: &[DVector<f64>], k: usize, opts: &FitOptions, rng: &mut R) -> Result<Gmm> {
    let n = data.len();
    let dim = data[0].len();
    let centers = kmeans_pp_centers(data, k, rng);

    // Start from hard nearest-center assignments.
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, x) in data.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = (x - c).norm_squared();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        resp[(i, best)] = 1.0;
    }
    floor_responsibilities(&mut resp);

    let mut model = m_step(data, &resp, opts)?;
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let mut ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            let logs: Vec<f64> = model
                .weights()
                .iter()
                .zip(model.components())
                .map(|(w, c)| w.ln() + c.log_density_unchecked(x))
                .collect();
            let norm = linalg::logsumexp(logs.iter().copied());
            ll += norm;
            for (j, l) in logs.iter().enumerate() {
                resp[(i, j)] = (l - norm).exp();
            }
        }
        floor_responsibilities(&mut resp);
        model = m_step(data, &resp, opts)?;
        if (ll - prev_ll).abs() <= 1e-10 * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    debug_assert_eq!(model.dim(), dim);
    Ok(model)
}

fn floor_responsibilities(resp: &mut DMatrix<f64>) {
    for mut row in resp.row_iter_mut() {
        for v in row.iter_mut() {
            if !(*v >= RESPONSIBILITY_FLOOR) {
                *v = RESPONSIBILITY_FLOOR;
            }
        }
        let s: f64 = row.iter().sum();
        row /= s;
    }
}

fn m_step(data: &[DVector<f64>], resp: &DMatrix<f64>, opts: &FitOptions) -> Result<Gmm> {
    let n = data.len() as f64;
    let k = resp.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let r: Vec<f64> = resp.column(j).iter().copied().collect();
        let total: f64 = r.iter().sum();
        weights.push((total / n).max(WEIGHT_FLOOR));
        let (mean, cov) = weighted_moments(data, &r, total);
        comps.push(Gaussian::new(mean, finish_covariance(cov, opts))?);
    }
    let s: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= s;
    }
    Gmm::new(weights, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn square_corners_fit() {
        let xs = vec![v(&[0.0, 0.0]), v(&[2.0, 0.0]), v(&[0.0, 2.0]), v(&[2.0, 2.0])];
        let g = fit_gaussian_weighted(&xs, &[1.0; 4]).unwrap();
        assert!((g.mean() - v(&[1.0, 1.0])).amax() < 1e-12);
        let expected = DMatrix::identity(2, 2);
        assert!((g.covariance() - expected).amax() < 1e-8);
    }

    #[test]
    fn identical_samples_give_jitter_covariance() {
        let xs = vec![v(&[3.0, -1.0]); 5];
        let g = fit_gaussian_weighted(&xs, &[1.0; 5]).unwrap();
        assert!((g.mean() - v(&[3.0, -1.0])).amax() < 1e-12);
        assert!((g.covariance() - DMatrix::identity(2, 2) * 1e-9).amax() < 1e-15);
    }

    #[test]
    fn concentrated_weight_selects_sample() {
        let xs = vec![v(&[1.0]), v(&[5.0]), v(&[-2.0])];
        let g = fit_gaussian_weighted(&xs, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(g.mean()[0], 5.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(matches!(
            fit_gaussian_weighted(&[v(&[1.0])], &[1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn single_component_em_is_the_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = Gaussian::standard(3).sample(40, &mut rng);
        let costs: Vec<f64> = xs.iter().map(|x| x.norm()).collect();
        let gmm = fit_gmm_elite(&xs, &costs, 10, 1, &FitOptions::default(), &mut rng).unwrap();
        let elite: Vec<_> = elite_indices(&costs, 10).into_iter().map(|i| xs[i].clone()).collect();
        let mle = fit_gaussian_weighted(&elite, &[1.0; 10]).unwrap();
        let c = &gmm.components()[0];
        assert!((c.mean() - mle.mean()).amax() < 1e-9);
        assert!((c.covariance() - mle.covariance()).amax() < 1e-9);
    }

    #[test]
    fn two_clusters_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let left = Gaussian::isotropic(v(&[-10.0, 0.0]), 0.5).unwrap();
        let right = Gaussian::isotropic(v(&[10.0, 0.0]), 0.5).unwrap();
        let mut xs = left.sample(100, &mut rng);
        xs.extend(right.sample(100, &mut rng));
        let costs = vec![0.0; xs.len()];
        let centroid = |range: std::ops::Range<usize>| {
            range.clone().fold(DVector::zeros(2), |a, i| a + &xs[i]) / range.len() as f64
        };
        let (cl, cr) = (centroid(0..100), centroid(100..200));
        let gmm = fit_gmm_elite(&xs, &costs, xs.len(), 2, &FitOptions::default(), &mut rng).unwrap();
        for target in [cl, cr] {
            let best = gmm
                .components()
                .iter()
                .map(|c| (c.mean() - &target).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "closest mean off by {best}");
        }
    }

    #[test]
    fn elite_set_uses_lowest_costs() {
        let xs = vec![v(&[0.0]), v(&[10.0]), v(&[1.0]), v(&[20.0])];
        let costs = [0.0, 5.0, 1.0, 9.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = fit_gmm_elite(&xs, &costs, 2, 1, &FitOptions::default(), &mut rng).unwrap();
        assert!((g.components()[0].mean()[0] - 0.5).abs() < 1e-12);
        let all = fit_gmm_elite(&xs, &costs, 4, 1, &FitOptions::default(), &mut rng).unwrap();
        assert!((all.components()[0].mean()[0] - 7.75).abs() < 1e-12);
    }

    #[test]
    fn round_trip_recovers_parameters() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let g = Gaussian::new(v(&[2.0, -1.0]), cov.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = g.sample(100_000, &mut rng);
        let fit = fit_gaussian_weighted(&xs, &vec![1.0; xs.len()]).unwrap();
        assert!((fit.mean() - g.mean()).amax() < 0.05);
        assert!((fit.covariance() - cov).norm() < 0.1);
    }

    proptest! {
        #[test]
        fn fit_is_affine_equivariant(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20),
            a in proptest::array::uniform4(-2.0f64..2.0),
            b in proptest::array::uniform2(-3.0f64..3.0),
        ) {
            let opts = FitOptions { jitter: 0.0, ..FitOptions::default() };
            let xs: Vec<_> = pts.iter().map(|(x, y)| v(&[*x, *y])).collect();
            let m = DMatrix::from_row_slice(2, 2, &a);
            let shift = v(&b);
            let ys: Vec<_> = xs.iter().map(|x| &m * x + &shift).collect();
            let w = vec![1.0; xs.len()];
            let (mx, cx) = weighted_moments(&xs, &w, xs.len() as f64);
            let (my, cy) = weighted_moments(&ys, &w, ys.len() as f64);
            prop_assert!((&m * mx + shift - my).amax() < 1e-9);
            let expected = &m * cx * m.transpose();
            prop_assert!((finish_covariance(cy, &opts) - expected).amax() < 1e-9);
        }
    }
}
