//! Mode finding (BFGS) and numerical Hessians.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::density::LogDensity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Stop once ‖∇f‖∞ ≤ tol · (1 + |f|).
    pub gradient_tolerance: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration budget ran out or the line search stalled
    /// before the gradient test passed; `x` is still the best point seen.
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `target` from `x0` with BFGS and a backtracking Armijo search.
pub fn bfgs_maximize<T: LogDensity + ?Sized>(
    target: &T,
    x0: &[f64],
    config: &BfgsConfig,
) -> Result<BfgsResult, OptimError> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut f = target.value_and_gradient(&x, &mut grad);
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }

    // Work on φ = −f so the update is the textbook minimization form.
    let mut g = DVector::from_iterator(n, grad.iter().map(|v| -v));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];

    for iter in 0..config.max_iterations {
        if inf_norm(g.as_slice()) <= config.gradient_tolerance * (1.0 + f.abs()) {
            return Ok(BfgsResult {
                x,
                value: f,
                iterations: iter,
                converged: true,
            });
        }

        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h_inv.fill_with_identity();
            scaled = false;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut alpha = if scaled {
            1.0
        } else {
            (1.0 / inf_norm(d.as_slice())).min(1.0)
        };

        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + alpha * d[i];
            }
            let ft = target.value_and_gradient(&trial, &mut trial_grad);
            if ft.is_finite()
                && trial_grad.iter().all(|v| v.is_finite())
                && -ft <= -f + 1e-4 * alpha * slope
            {
                accepted = Some(ft);
                break;
            }
            alpha *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Ok(BfgsResult {
                x,
                value: f,
                iterations: iter,
                converged: false,
            });
        };

        let s = &d * alpha;
        let g_new = DVector::from_iterator(n, trial_grad.iter().map(|v| -v));
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h_inv *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        let step = inf_norm(s.as_slice());
        x.copy_from_slice(&trial);
        f = f_new;
        g = g_new;
        if step <= 1e-15 * (1.0 + inf_norm(&x)) {
            let converged = inf_norm(g.as_slice()) <= config.gradient_tolerance * (1.0 + f.abs());
            return Ok(BfgsResult {
                x,
                value: f,
                iterations: iter + 1,
                converged,
            });
        }
    }

    let converged = inf_norm(g.as_slice()) <= config.gradient_tolerance * (1.0 + f.abs());
    Ok(BfgsResult {
        x,
        value: f,
        iterations: config.max_iterations,
        converged,
    })
}

/// Hessian by central differences of a gradient, step 1e-4·(1 + |x_k|),
/// symmetrized as (H + Hᵀ)/2.
pub fn central_difference_hessian<G>(x: &[f64], mut grad: G) -> DMatrix<f64>
where
    G: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for k in 0..n {
        let step = 1e-4 * (1.0 + x[k].abs());
        p[k] = x[k] + step;
        grad(&p, &mut gp);
        p[k] = x[k] - step;
        grad(&p, &mut gm);
        p[k] = x[k];
        for i in 0..n {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}
