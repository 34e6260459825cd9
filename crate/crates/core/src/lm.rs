//! Damped Gauss-Newton (Levenberg-Marquardt) minimizer for small dense
//! least-squares problems.
//!
//! The fitting engine only ever optimizes 2–5 free parameters over a handful
//! of residuals, so this is a compact direct implementation: numeric central
//! difference Jacobians, Marquardt diagonal scaling, and a multiplicative
//! damping schedule.

use nalgebra::{DMatrix, DVector};

/// Relative step used for central-difference Jacobians.
const FD_STEP: f64 = 1e-6;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_SHRINK: f64 = 3.0;
const LAMBDA_GROW: f64 = 10.0;
const LAMBDA_MAX: f64 = 1e12;
const LAMBDA_MIN: f64 = 1e-12;

/// Cost improvement below which an iteration counts as stalled.
const MIN_IMPROVEMENT: f64 = 1e-14;
/// Consecutive stalled iterations that signal convergence.
const STALL_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iters: usize,
    pub param_tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub theta: DVector<f64>,
    /// Sum of squared residuals at `theta`.
    pub cost: f64,
    pub converged: bool,
}

/// Minimizes `sum_i r_i(theta)^2` starting from `theta0`.
///
/// `residuals` writes the residual vector for a parameter vector and returns
/// false when any entry is non-finite; such trial points are rejected. If
/// the starting point itself is non-finite the outcome carries infinite cost
/// so the caller can discard the start.
pub(crate) fn minimize<F>(residuals: F, theta0: DVector<f64>, n_residuals: usize, opts: LmOptions) -> LmOutcome
where
    F: Fn(&DVector<f64>, &mut DVector<f64>) -> bool,
{
    let n_params = theta0.len();
    let mut theta = theta0;
    let mut r = DVector::zeros(n_residuals);
    if !residuals(&theta, &mut r) {
        return LmOutcome {
            theta,
            cost: f64::INFINITY,
            converged: false,
        };
    }
    let mut cost = r.norm_squared();
    let mut lambda = LAMBDA_INIT;
    let mut stall = 0usize;
    let mut converged = false;

    let mut r_trial = DVector::zeros(n_residuals);
    let mut r_plus = DVector::zeros(n_residuals);
    let mut r_minus = DVector::zeros(n_residuals);

    'outer: for _ in 0..opts.max_iters {
        // Central-difference Jacobian.
        let mut jac = DMatrix::zeros(n_residuals, n_params);
        for j in 0..n_params {
            let h = FD_STEP * theta[j].abs().max(1.0);
            let mut probe = theta.clone();
            probe[j] = theta[j] + h;
            let ok_plus = residuals(&probe, &mut r_plus);
            probe[j] = theta[j] - h;
            let ok_minus = residuals(&probe, &mut r_minus);
            if !ok_plus || !ok_minus {
                // Derivative unavailable at the boundary of the finite
                // region; treat the current point as final.
                converged = false;
                break 'outer;
            }
            let scale = 1.0 / (2.0 * h);
            for i in 0..n_residuals {
                jac[(i, j)] = (r_plus[i] - r_minus[i]) * scale;
            }
        }

        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        // Damped step search: grow lambda until a descent step is found.
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj.clone();
            for j in 0..n_params {
                damped[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(chol) => chol.solve(&(-&jtr)),
                None => {
                    lambda *= LAMBDA_GROW;
                    continue;
                }
            };
            let trial = &theta + &step;
            if residuals(&trial, &mut r_trial) {
                let trial_cost = r_trial.norm_squared();
                if trial_cost < cost {
                    let improvement = cost - trial_cost;
                    let step_norm = step.norm();
                    theta = trial;
                    std::mem::swap(&mut r, &mut r_trial);
                    cost = trial_cost;
                    lambda = (lambda / LAMBDA_SHRINK).max(LAMBDA_MIN);
                    accepted = true;

                    if step_norm < opts.param_tolerance {
                        converged = true;
                        break 'outer;
                    }
                    if improvement < MIN_IMPROVEMENT {
                        stall += 1;
                        if stall >= STALL_PATIENCE {
                            converged = true;
                            break 'outer;
                        }
                    } else {
                        stall = 0;
                    }
                    break;
                }
            }
            lambda *= LAMBDA_GROW;
        }
        if !accepted {
            // No descent direction within the damping range: the point is a
            // local minimum to working precision.
            converged = true;
            break;
        }
    }

    LmOutcome {
        theta,
        cost,
        converged,
    }
}
