use nalgebra::DVector;

use super::{check_dim, Gaussian, GoalSpec, Mixture, Projection, UniformBox, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg;

/// Closed-form D(p ∥ q) between two Gaussians.
pub fn kl_gaussian_gaussian(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let n = p.dim() as f64;
    // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖_F²
    let lp = p.factor().l();
    let mut trace = 0.0;
    for j in 0..lp.ncols() {
        let col = lp.column(j).into_owned();
        trace += linalg::mahalanobis_sq(q.factor(), &col);
    }
    let maha = linalg::mahalanobis_sq(q.factor(), &(q.mean() - p.mean()));
    let kl = 0.5 * (trace + maha - n + q.log_det() - p.log_det());
    Ok(kl.max(0.0))
}

/// Sigma-point approximation of D(p ∥ q) for mixtures.
///
/// Every component `a` of `p` contributes `2n` points `μ_a ± β·L_i` (no
/// center point), each weighted `w_a / 2n`. The result can be slightly
/// negative.
pub fn kl_gmm_unscented<P: Mixture + ?Sized, Q: Mixture + ?Sized>(p: &P, q: &Q, beta: f64) -> Result<f64> {
    check_dim(p.mixture_dim(), q.mixture_dim())?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", "dispersion must be positive"));
    }
    let n = p.mixture_dim();
    let mut total = 0.0;
    for (w, comp) in p.parts() {
        if w <= 0.0 {
            continue;
        }
        let l = comp.factor().l();
        let mut acc = 0.0;
        for i in 0..n {
            let offset = l.column(i) * beta;
            for sign in [1.0, -1.0] {
                let x: DVector<f64> = comp.mean() + &offset * sign;
                acc += p.mixture_log_density(&x) - q.mixture_log_density(&x);
            }
        }
        total += w * acc / (2 * n) as f64;
    }
    Ok(total)
}

/// E_{x ~ U(box)}[−log N(x | state)], i.e. `−u ∫_box log N(x|state) dx`.
///
/// The integrand is quadratic in `x`, so the box average is exact:
/// `½(n log 2π + log|Σ|) + ½[(c−μ)ᵀΣ⁻¹(c−μ) + Σᵢ (Σ⁻¹)ᵢᵢ wᵢ²/12]`.
pub fn uniform_cross_entropy(state: &Gaussian, goal: &UniformBox) -> Result<f64> {
    check_dim(state.dim(), goal.dim())?;
    let n = state.dim() as f64;
    let c = goal.center();
    let maha = linalg::mahalanobis_sq(state.factor(), &(c - state.mean()));
    let precision = state.precision();
    let spread: f64 = goal
        .widths()
        .iter()
        .enumerate()
        .map(|(i, w)| precision[(i, i)] * w * w / 12.0)
        .sum();
    Ok(0.5 * (n * LN_2PI + state.log_det()) + 0.5 * (maha + spread))
}

/// Divergence between the predicted state belief and the goal, dispatched on
/// the goal family and projection.
///
/// Bounded-support goals (Dirac, uniform) only admit the M-projection. For
/// the uniform goal the additive constant `log u` is dropped, so the value is
/// a cost, not a true divergence.
pub fn goal_cost(state: &Gaussian, goal: &GoalSpec, proj: Projection, beta: f64) -> Result<f64> {
    check_dim(goal.dim(), state.dim())?;
    match (goal, proj) {
        (GoalSpec::Gaussian(g), Projection::I) => kl_gaussian_gaussian(state, g),
        (GoalSpec::Gaussian(g), Projection::M) => kl_gaussian_gaussian(g, state),
        (GoalSpec::Gmm(g), Projection::I) => kl_gmm_unscented(state, g, beta),
        (GoalSpec::Gmm(g), Projection::M) => kl_gmm_unscented(g, state, beta),
        (GoalSpec::Dirac(d), Projection::M) => Ok(-state.log_density_unchecked(d.point())),
        (GoalSpec::Uniform(u), Projection::M) => uniform_cross_entropy(state, u),
        (GoalSpec::Dirac(_), Projection::I) | (GoalSpec::Uniform(_), Projection::I) => {
            Err(Error::UnsupportedProjection {
                goal: goal.kind(),
                projection: proj,
            })
        }
    }
}
