//! Small dense linear-algebra helpers shared by the distribution and
//! propagation code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// First diagonal jitter tried when a plain factorization fails.
pub const JITTER_START: f64 = 1e-9;
/// Largest diagonal jitter before giving up.
pub const JITTER_MAX: f64 = 1e-3;

/// Cholesky factorization with escalating diagonal jitter.
///
/// The matrix is factored as-is first; on failure `1e-9·I` is added and
/// multiplied by ten on every retry up to `1e-3`. Returns the factor and the
/// jitter that was actually applied.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_MAX,
        });
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        if factor_is_finite(&c) {
            return Ok((c, 0.0));
        }
    }
    let n = m.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-12) {
        let shifted = m + DMatrix::<f64>::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            if factor_is_finite(&c) {
                return Ok((c, jitter));
            }
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        max_jitter: JITTER_MAX,
    })
}

fn factor_is_finite(c: &Cholesky<f64, Dyn>) -> bool {
    let l = c.l_dirty();
    (0..l.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry |m_ij − m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Log-determinant from a Cholesky factor.
pub fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Solves `L y = b` for the lower factor `L`.
pub fn solve_lower(c: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let l = c.l_dirty();
    let n = b.len();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Squared Mahalanobis norm ‖L⁻¹ d‖².
pub fn mahalanobis_sq(c: &Cholesky<f64, Dyn>, d: &DVector<f64>) -> f64 {
    solve_lower(c, d).norm_squared()
}

pub fn logsumexp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
