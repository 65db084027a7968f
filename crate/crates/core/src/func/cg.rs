//! Conjugate gradient for damped symmetric positive-semidefinite systems.

use ndarray::Array1;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Array1<f64>,
    pub iterations: usize,
    /// Final `||(A + damping I) x - b||_2`.
    pub residual_norm: f64,
    /// Whether the relative tolerance was met before `max_iters`.
    pub converged: bool,
}

/// Solves `(A + damping I) x = b` where `matvec(v) = A v` with `A` symmetric
/// PSD, stopping when `||residual|| <= tol * ||b||` or after `max_iters`.
pub fn conjugate_gradient(
    matvec: &dyn Fn(&Array1<f64>) -> Array1<f64>,
    b: &Array1<f64>,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<CgResult> {
    cg_impl(matvec, b, damping, max_iters, tol, &mut |_| {})
}

pub(crate) fn cg_impl(
    matvec: &dyn Fn(&Array1<f64>) -> Array1<f64>,
    b: &Array1<f64>,
    damping: f64,
    max_iters: usize,
    tol: f64,
    observe: &mut dyn FnMut(&Array1<f64>),
) -> Result<CgResult> {
    let apply = |v: &Array1<f64>| -> Array1<f64> { matvec(v) + &(v * damping) };
    let b_norm = b.dot(b).sqrt();
    let mut x = Array1::zeros(b.len());
    if b_norm == 0.0 {
        return Ok(CgResult { x, iterations: 0, residual_norm: 0.0, converged: true });
    }
    let threshold = tol * b_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let mut iterations = 0;
    while iterations < max_iters {
        if rs.sqrt() <= threshold {
            break;
        }
        let ap = apply(&p);
        let p_ap = p.dot(&ap);
        if !p_ap.is_finite() || p_ap <= 0.0 {
            return Err(Error::NonFiniteIterate);
        }
        let alpha = rs / p_ap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_next = r.dot(&r);
        if !rs_next.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        p = &r + &(&p * (rs_next / rs));
        rs = rs_next;
        iterations += 1;
        observe(&x);
    }
    let residual_norm = rs.sqrt();
    Ok(CgResult { x, iterations, residual_norm, converged: residual_norm <= threshold })
}
