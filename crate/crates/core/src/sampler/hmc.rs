//! Scheduled conditional HMC.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::SamplerError;
use crate::density::LogDensity;
use crate::optim::{bfgs_maximize, BfgsConfig};

/// Positive-definite mass matrix held by its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    chol: Cholesky<f64, Dyn>,
    /// Ridge added to the diagonal, 0 if none was needed.
    pub ridge: f64,
    pub fallback_used: bool,
}

impl MassMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, SamplerError> {
        Cholesky::new(m)
            .map(|chol| Self {
                chol,
                ridge: 0.0,
                fallback_used: false,
            })
            .ok_or(SamplerError::MassMatrixNotPD)
    }

    /// M = −(H_l + H_p). If M is not positive definite a ridge of
    /// 1e-6·(1 + max|diag|) is added, growing ×10 up to three times, and after
    /// that `fallback` is used as the mass matrix.
    pub fn from_hessians(
        like: &DMatrix<f64>,
        prior: &DMatrix<f64>,
        fallback: &DMatrix<f64>,
    ) -> Result<Self, SamplerError> {
        let m = -(like + prior);
        if m.iter().all(|v| v.is_finite()) {
            if let Some(chol) = Cholesky::new(m.clone()) {
                return Ok(Self {
                    chol,
                    ridge: 0.0,
                    fallback_used: false,
                });
            }
            let max_diag = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut ridge = 1e-6 * (1.0 + max_diag);
            for _ in 0..4 {
                let mut r = m.clone();
                for i in 0..r.nrows() {
                    r[(i, i)] += ridge;
                }
                if let Some(chol) = Cholesky::new(r) {
                    return Ok(Self {
                        chol,
                        ridge,
                        fallback_used: false,
                    });
                }
                ridge *= 10.0;
            }
        }
        let mut mm = Self::new(fallback.clone())?;
        mm.fallback_used = true;
        Ok(mm)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// p ∼ N(0, M) as L z.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.chol.l() * z
    }

    /// M⁻¹ p
    pub fn solve(&self, p: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(p)
    }

    /// ½ pᵀ M⁻¹ p
    pub fn kinetic(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&self.solve(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcStep {
    pub point: Vec<f64>,
    pub accepted: bool,
    /// H* − H₀; +∞ when the trajectory left the finite region.
    pub delta_h: f64,
}

/// One HMC transition with fixed mass matrix: L leapfrog steps of size ε and a
/// Metropolis correction. On rejection `point` is a copy of `current`.
pub fn schmc_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &[f64],
    mass: &MassMatrix,
    leapfrog_steps: usize,
    stepsize: f64,
    rng: &mut R,
) -> HmcStep {
    let n = current.len();
    let p0 = mass.sample_momentum(rng);
    let mut grad = vec![0.0; n];
    let u0 = -target.value_and_gradient(current, &mut grad);

    let mut x = DVector::from_column_slice(current);
    let mut p = p0.clone();
    let mut u_star = u0;
    let mut finite = u0.is_finite();
    for _ in 0..leapfrog_steps {
        if !finite {
            break;
        }
        // g = −∇ log p
        for i in 0..n {
            p[i] += 0.5 * stepsize * grad[i];
        }
        x += mass.solve(&p) * stepsize;
        u_star = -target.value_and_gradient(x.as_slice(), &mut grad);
        if !u_star.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            finite = false;
            break;
        }
        for i in 0..n {
            p[i] += 0.5 * stepsize * grad[i];
        }
    }

    let log_u = rng.random::<f64>().ln();
    if !finite {
        return HmcStep {
            point: current.to_vec(),
            accepted: false,
            delta_h: f64::INFINITY,
        };
    }
    let h0 = mass.kinetic(&p0) + u0;
    let h_star = mass.kinetic(&p) + u_star;
    let delta_h = h_star - h0;
    if log_u < -delta_h {
        HmcStep {
            point: x.as_slice().to_vec(),
            accepted: true,
            delta_h,
        }
    } else {
        HmcStep {
            point: current.to_vec(),
            accepted: false,
            delta_h,
        }
    }
}

/// A conditional posterior that separates its likelihood and prior curvature.
pub trait ConditionalTarget: LogDensity {
    fn likelihood_hessian(&self, x: &[f64]) -> DMatrix<f64>;
    fn prior_hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Conditional posterior mode, searched from `start`.
    fn mode(&self, start: &[f64]) -> Vec<f64> {
        match bfgs_maximize(self, start, &BfgsConfig::default()) {
            Ok(r) => {
                if !r.converged {
                    log::debug!("mode search stopped after {} iterations", r.iterations);
                }
                r.x
            }
            Err(_) => start.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcSettings {
    pub leapfrog_steps: usize,
    pub stepsize: f64,
}

/// Scheduled update: refresh the cached likelihood Hessian at the mode when
/// `refresh` is set (or nothing is cached), add the prior Hessian at the
/// current point, and take one HMC step. `fallback` defaults to the negated
/// prior Hessian.
pub fn schmc_update<T: ConditionalTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &[f64],
    cache: &mut Option<DMatrix<f64>>,
    refresh: bool,
    fallback: Option<&DMatrix<f64>>,
    settings: HmcSettings,
    rng: &mut R,
) -> Result<HmcStep, SamplerError> {
    if refresh || cache.is_none() {
        let mode = target.mode(current);
        *cache = Some(target.likelihood_hessian(&mode));
    }
    let like = cache.as_ref().expect("cache filled above");
    let prior = target.prior_hessian(current);
    let neg_prior;
    let fallback = match fallback {
        Some(f) => f,
        None => {
            neg_prior = -&prior;
            &neg_prior
        }
    };
    let mass = MassMatrix::from_hessians(like, &prior, fallback)?;
    Ok(schmc_step(
        target,
        current,
        &mass,
        settings.leapfrog_steps,
        settings.stepsize,
        rng,
    ))
}
