use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{qp, Evaluation, PlppProblem, PlppReport};
use crate::error::Result;
use crate::planner::JointPath;

/// Exact-penalty weight of the ℓ₁ merit and upper bound of the QP
/// multipliers. Kept fixed so merit values are comparable across steps.
const PENALTY: f64 = 10.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

fn violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0_f64, |m, v| m.max(-v))
}

fn violation_l1(c: &[f64]) -> f64 {
    c.iter().map(|v| (-v).max(0.0)).sum()
}

fn merit(e: &Evaluation) -> f64 {
    e.objective + PENALTY * violation_l1(&e.constraints)
}

fn dense_rows(problem: &PlppProblem, e: &Evaluation) -> Vec<DVector<f64>> {
    let dof = problem.dof();
    let n = problem.n_vars();
    e.constraint_rows
        .as_ref()
        .expect("derivatives requested")
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut full = DVector::zeros(n);
            full.rows_mut(i * dof, dof).copy_from(r);
            full
        })
        .collect()
}

fn lagrangian_gradient(g: &DVector<f64>, rows: &[DVector<f64>], lambda: &DVector<f64>) -> DVector<f64> {
    let mut out = g.clone();
    for (r, l) in rows.iter().zip(lambda.iter()) {
        if *l != 0.0 {
            out.axpy(-*l, r, 1.0);
        }
    }
    out
}

fn clip(d: &mut DVector<f64>, max_step: f64) -> f64 {
    let m = d.amax();
    if m > max_step {
        let s = max_step / m;
        *d *= s;
        s
    } else {
        1.0
    }
}

/// Minimum-norm projection steps onto the linearized clearance constraints,
/// accepted while they reduce the worst violation. Returns the restored
/// point, or `None` if the violation is still above tolerance.
fn restore(problem: &PlppProblem, z: &DVector<f64>, iterations: usize) -> Result<Option<DVector<f64>>> {
    let tol = problem.params.feas_tol;
    let n = problem.n_vars();
    let identity = DMatrix::identity(n, n);
    let zero = DVector::zeros(n);
    let mut z = z.clone();
    let mut e = problem.evaluate(&z, true)?;
    for _ in 0..iterations {
        let v = violation(&e.constraints);
        if v <= tol {
            return Ok(Some(z));
        }
        // Aim slightly inside the feasible set so curvature does not leave
        // the projected point just outside.
        let shifted: Vec<f64> = e.constraints.iter().map(|c| c - 10.0 * tol).collect();
        let rows = dense_rows(problem, &e);
        let mut d = qp::solve(&identity, &zero, &rows, &shifted, 1e6).step;
        clip(&mut d, problem.params.max_step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &z + &d * alpha;
            if problem.within_limits(&trial) {
                let et = problem.evaluate(&trial, false)?;
                if violation(&et.constraints) < v {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else { break };
        z = next;
        e = problem.evaluate(&z, true)?;
    }
    Ok((violation(&e.constraints) <= tol).then_some(z))
}

/// Runs the SQP on `path` (typically densified first) and returns the
/// optimized path. Endpoints are copied through unchanged.
pub fn optimize(problem: &PlppProblem, path: &JointPath) -> Result<(JointPath, PlppReport)> {
    let clock = Instant::now();
    let params = &problem.params;
    let mut report = PlppReport { initial_length: problem.combined_length(path)?, ..Default::default() };
    let z_input = problem.pack(path);
    let e_input = problem.evaluate(&z_input, false)?;
    report.initial_objective = e_input.objective;

    let mut z = z_input.clone();
    if violation(&e_input.constraints) > params.feas_tol {
        report.restored = true;
        match restore(problem, &z, params.restoration_iterations)? {
            Some(r) => z = r,
            None => {
                report.infeasible_start = true;
                report.final_objective = e_input.objective;
                report.final_length = report.initial_length;
                report.max_violation = violation(&e_input.constraints);
                report.wall_time = clock.elapsed().as_secs_f64();
                return Ok((path.clone(), report));
            }
        }
    }

    let n = problem.n_vars();
    let mut e = problem.evaluate(&z, true)?;
    let mut rows = dense_rows(problem, &e);
    let mut best = (e.objective, z.clone());
    let h_reset = |g: &DVector<f64>| DMatrix::identity(n, n) * (params.max_step / g.amax().max(1e-12));
    let mut h = h_reset(e.gradient.as_ref().expect("gradient"));
    let mut fresh = true;
    let mut scaled_once = false;

    while report.iterations < params.max_iterations {
        report.iterations += 1;
        let g = e.gradient.as_ref().expect("gradient");
        let sol = qp::solve(&h, g, &rows, &e.constraints, PENALTY);
        let mut d = sol.step.clone();
        let shrink = clip(&mut d, params.max_step);
        let predicted_violation: f64 = rows.iter().zip(&e.constraints).map(|(r, c)| (-(c + r.dot(&d))).max(0.0)).sum();
        let slope = g.dot(&d) + PENALTY * (predicted_violation - violation_l1(&e.constraints));
        let phi = merit(&e);
        if !(slope < -1e-14 * (1.0 + phi.abs())) {
            if fresh {
                break;
            }
            h = h_reset(g);
            fresh = true;
            continue;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &z + &d * alpha;
            if problem.within_limits(&trial) {
                let et = problem.evaluate(&trial, false)?;
                if merit(&et) <= phi + ARMIJO * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(z_new) = accepted else {
            if fresh {
                break;
            }
            h = h_reset(g);
            fresh = true;
            continue;
        };

        let e_new = problem.evaluate(&z_new, true)?;
        let rows_new = dense_rows(problem, &e_new);
        let s = &z_new - &z;
        let y = lagrangian_gradient(e_new.gradient.as_ref().expect("gradient"), &rows_new, &sol.multipliers)
            - lagrangian_gradient(g, &rows, &sol.multipliers);
        let bs = &sol.b_step * (alpha * shrink);
        if !scaled_once {
            // First curvature pair sets the scale of the initial inverse.
            let yy = y.norm_squared();
            let sy = s.dot(&y);
            if sy > 0.0 && yy > 0.0 {
                h = DMatrix::identity(n, n) * (sy / yy);
            }
            scaled_once = true;
        } else {
            damped_bfgs(&mut h, &s, &y, &bs);
        }

        let f_old = e.objective;
        z = z_new;
        e = e_new;
        rows = rows_new;
        fresh = false;
        report.merit_history.push(merit(&e));
        let feasible = violation(&e.constraints) <= params.feas_tol;
        if feasible && e.objective < best.0 {
            best = (e.objective, z.clone());
        }
        // A backtracked step says little about convergence, so only full
        // steps may end the iteration.
        if feasible && alpha == 1.0 && (f_old - e.objective).abs() < params.eps_rel * e.objective.abs() {
            break;
        }
    }

    if violation(&e.constraints) > params.feas_tol {
        match restore(problem, &z, params.restoration_iterations)? {
            Some(r) => {
                let er = problem.evaluate(&r, false)?;
                if er.objective < best.0 {
                    best = (er.objective, r);
                }
            }
            None => {}
        }
        z = best.1.clone();
    } else if best.0 < e.objective {
        z = best.1.clone();
    }

    let out = problem.unpack(&z);
    let e_out = problem.evaluate(&z, false)?;
    report.final_objective = e_out.objective;
    report.final_length = problem.combined_length(&out)?;
    report.max_violation = violation(&e_out.constraints);
    report.wall_time = clock.elapsed().as_secs_f64();
    Ok((out, report))
}

/// Powell-damped BFGS update applied to the inverse approximation `h`.
/// `bs` is `B·s` for the current `B = h⁻¹`.
fn damped_bfgs(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, bs: &DVector<f64>) {
    let sbs = s.dot(bs);
    let sy = s.dot(y);
    if !(sbs > 0.0) {
        return;
    }
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + bs * (1.0 - theta);
    let rs = r.dot(s);
    if !(rs > 0.0) {
        return;
    }
    let rho = 1.0 / rs;
    // H⁺ = (I − ρ s rᵀ) H (I − ρ r sᵀ) + ρ s sᵀ
    let hr = &*h * &r;
    let rhr = r.dot(&hr);
    let update = (s * hr.transpose() + &hr * s.transpose()) * (-rho) + s * s.transpose() * (rho * rho * rhr + rho);
    *h += update;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_update_satisfies_secant_condition() {
        let mut h = DMatrix::identity(3, 3) * 0.5;
        let s = DVector::from_vec(vec![0.1, -0.2, 0.05]);
        let y = DVector::from_vec(vec![0.3, -0.1, 0.2]);
        let bs = &s * 2.0;
        damped_bfgs(&mut h, &s, &y, &bs);
        // sᵀy is large enough here that no damping occurs.
        assert!((&h * &y - &s).norm() < 1e-12);
        let sym = &h - h.transpose();
        assert!(sym.amax() < 1e-14);
    }
}
