//! Inequality-constrained QP subproblem solved through its dual.
//!
//! For `min ½dᵀBd + gᵀd  s.t.  c + A d ≥ 0` with `H = B⁻¹` known, the primal
//! step for multipliers `λ` is `d(λ) = H(Aᵀλ − g)`, and the dual reduces to
//! the bound-constrained problem
//!
//! ```text
//! min_λ ½λᵀMλ + λᵀ(c − AHg),   M = AHAᵀ,   0 ≤ λ ≤ ρ
//! ```
//!
//! The upper bound `ρ` is an elastic (ℓ₁ penalty) relaxation: when the
//! linearized constraints are inconsistent the multipliers saturate and the
//! step minimizes the penalized violation instead of failing.

use nalgebra::{DMatrix, DVector};

pub struct QpSolution {
    pub step: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// `Aᵀλ − g`, which equals `B·step`.
    pub b_step: DVector<f64>,
}

/// `rows` holds the constraint gradients `aᵢ` (dense over all variables).
pub fn solve(h: &DMatrix<f64>, g: &DVector<f64>, rows: &[DVector<f64>], c: &[f64], rho: f64) -> QpSolution {
    let m = rows.len();
    let n = g.len();
    let mut a = DMatrix::zeros(m, n);
    for (i, r) in rows.iter().enumerate() {
        a.row_mut(i).copy_from(&r.transpose());
    }
    let hat = h * a.transpose();
    let mm = &a * &hat;
    let hg = h * g;
    let lin: DVector<f64> = DVector::from_iterator(m, c.iter().copied()) - &a * &hg;

    // Projected coordinate descent; M is small and positive semidefinite.
    let mut lambda = DVector::zeros(m);
    // grad = Mλ + lin, kept up to date incrementally.
    let mut grad = lin.clone();
    for _sweep in 0..2000 {
        let mut largest = 0.0_f64;
        for i in 0..m {
            let mii = mm[(i, i)];
            let target = if mii > 1e-14 {
                lambda[i] - grad[i] / mii
            } else if grad[i] < 0.0 {
                rho
            } else {
                0.0
            };
            let new = target.clamp(0.0, rho);
            let delta = new - lambda[i];
            if delta != 0.0 {
                lambda[i] = new;
                grad.axpy(delta, &mm.column(i), 1.0);
                largest = largest.max(delta.abs());
            }
        }
        if largest <= 1e-13 * (1.0 + lambda.amax()) {
            break;
        }
    }
    let b_step = a.transpose() * &lambda - g;
    let step = &hat * &lambda - hg;
    QpSolution { step, multipliers: lambda, b_step }
}
