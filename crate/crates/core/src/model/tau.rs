//! Density of the Gamma(κ_τ, λ_τ) law followed by the inverse variances
//! 1/τ², in natural and log coordinates, and its profile-likelihood mode.
//!
//! λ_τ is a scale parameter. Flat priors are placed on (log κ_τ, log λ_τ), so
//! the log-space density is the likelihood evaluated at (e^u, e^v) and its
//! mode is the maximum-likelihood estimate.

use nalgebra::Matrix2;

use super::ModelError;
use crate::special::{digamma, ln_gamma, trigamma};

/// Sufficient statistics of the precision samples τ_i^{-2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauHyperDensity {
    pub n: f64,
    /// Σ log τ_i^{-2}
    pub sum_log: f64,
    /// Σ τ_i^{-2}
    pub sum: f64,
}

impl TauHyperDensity {
    pub fn from_precisions(precisions: &[f64]) -> Result<Self, ModelError> {
        if precisions.is_empty() {
            return Err(ModelError::InvalidParameter("no precision samples".into()));
        }
        let mut sum = 0.0;
        let mut sum_log = 0.0;
        for &p in precisions {
            if !(p > 0.0) || !p.is_finite() {
                return Err(ModelError::NonPositiveSample(p));
            }
            sum += p;
            sum_log += p.ln();
        }
        Ok(Self {
            n: precisions.len() as f64,
            sum_log,
            sum,
        })
    }

    pub fn value(&self, kappa: f64, lambda: f64) -> f64 {
        (kappa - 1.0) * self.sum_log - self.n * kappa * lambda.ln() - self.n * ln_gamma(kappa)
            - self.sum / lambda
    }

    pub fn grad(&self, kappa: f64, lambda: f64) -> [f64; 2] {
        [
            self.sum_log - self.n * lambda.ln() - self.n * digamma(kappa),
            -self.n * kappa / lambda + self.sum / (lambda * lambda),
        ]
    }

    pub fn hess(&self, kappa: f64, lambda: f64) -> Matrix2<f64> {
        let off = -self.n / lambda;
        Matrix2::new(
            -self.n * trigamma(kappa),
            off,
            off,
            self.n * kappa / (lambda * lambda) - 2.0 * self.sum / lambda.powi(3),
        )
    }

    pub fn value_log(&self, log_kappa: f64, log_lambda: f64) -> f64 {
        self.value(log_kappa.exp(), log_lambda.exp())
    }

    pub fn grad_log(&self, log_kappa: f64, log_lambda: f64) -> [f64; 2] {
        let (k, l) = (log_kappa.exp(), log_lambda.exp());
        let g = self.grad(k, l);
        [k * g[0], l * g[1]]
    }

    /// Chain rule from the natural-scale derivatives.
    pub fn hess_log(&self, log_kappa: f64, log_lambda: f64) -> Matrix2<f64> {
        let (k, l) = (log_kappa.exp(), log_lambda.exp());
        let g = self.grad(k, l);
        let h = self.hess(k, l);
        Matrix2::new(
            k * g[0] + k * k * h[(0, 0)],
            k * l * h[(0, 1)],
            k * l * h[(1, 0)],
            l * g[1] + l * l * h[(1, 1)],
        )
    }

    /// λ maximizing the density for fixed κ.
    pub fn lambda_mle(&self, kappa: f64) -> f64 {
        self.sum / (kappa * self.n)
    }

    pub fn profile(&self, kappa: f64) -> f64 {
        self.value(kappa, self.lambda_mle(kappa))
    }

    /// Joint mode (κ̂, λ̂). The profile derivative in κ vanishes where
    /// log κ − ψ(κ) = log(mean) − mean(log); that function of κ is strictly
    /// decreasing, so a bracketed Newton iteration in log κ finds it.
    pub fn profile_mode(&self) -> Result<(f64, f64), ModelError> {
        if self.n < 2.0 {
            return Err(ModelError::InvalidParameter(
                "profile mode needs at least two samples".into(),
            ));
        }
        let target = (self.sum / self.n).ln() - self.sum_log / self.n;
        if !(target > 1e-14) {
            return Err(ModelError::NoConvergence(
                "samples are (numerically) identical; κ is unbounded".into(),
            ));
        }
        let h = |u: f64| {
            let k = u.exp();
            k.ln() - digamma(k) - target
        };
        // h(u) decreasing in u = log κ
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        if h(hi) > 0.0 || h(lo) < 0.0 {
            return Err(ModelError::NoConvergence("κ outside [e^-30, e^30]".into()));
        }
        // Minka's closed-form start
        let mut u = ((3.0 - target + ((target - 3.0).powi(2) + 24.0 * target).sqrt())
            / (12.0 * target))
            .ln();
        if !(u > lo && u < hi) {
            u = 0.0;
        }
        for _ in 0..200 {
            let hv = h(u);
            if hv.abs() < 1e-13 {
                break;
            }
            if hv > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let k = u.exp();
            // d/du [log κ − ψ(κ)] = 1 − κ ψ'(κ)
            let dh = 1.0 - k * trigamma(k);
            let mut next = u - hv / dh;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() < 1e-15 * (1.0 + u.abs()) {
                u = next;
                break;
            }
            u = next;
        }
        let kappa = u.exp();
        Ok((kappa, self.lambda_mle(kappa)))
    }
}

/// Log density, gradient and Hessian in (log κ_τ, log λ_τ).
pub fn logpost_tau_hyper(
    log_kappa: f64,
    log_lambda: f64,
    tau2_inverse_samples: &[f64],
) -> Result<(f64, [f64; 2], Matrix2<f64>), ModelError> {
    let d = TauHyperDensity::from_precisions(tau2_inverse_samples)?;
    Ok((
        d.value_log(log_kappa, log_lambda),
        d.grad_log(log_kappa, log_lambda),
        d.hess_log(log_kappa, log_lambda),
    ))
}

pub fn tau_profile_mode(tau2_inverse_samples: &[f64]) -> Result<(f64, f64), ModelError> {
    TauHyperDensity::from_precisions(tau2_inverse_samples)?.profile_mode()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_point() {
        let (v, g, _) = logpost_tau_hyper(0.0, 0.0, &[1.0]).unwrap();
        assert_relative_eq!(v, -1.0, epsilon = 1e-14);
        // −N ψ(1) = Euler–Mascheroni
        assert_relative_eq!(g[0], 0.5772156649015329, epsilon = 1e-12);
        let d = TauHyperDensity::from_precisions(&[1.0]).unwrap();
        assert_relative_eq!(d.grad(1.0, 1.0)[0], 0.5772156649015329, epsilon = 1e-12);
    }

    #[test]
    fn lambda_mle_substitution() {
        let d = TauHyperDensity::from_precisions(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(d.lambda_mle(2.0), 1.0);
    }

    #[test]
    fn rejects_nonpositive() {
        assert_eq!(
            TauHyperDensity::from_precisions(&[1.0, 0.0]),
            Err(ModelError::NonPositiveSample(0.0))
        );
    }

    #[test]
    fn mode_beats_grid() {
        let samples = [0.5, 1.3, 2.2, 0.9, 4.0, 1.1];
        let d = TauHyperDensity::from_precisions(&samples).unwrap();
        let (k, l) = d.profile_mode().unwrap();
        let best = d.value(k, l);
        for i in -10..=10 {
            for j in -10..=10 {
                let kk = k * (1.0 + 0.05 * i as f64);
                let ll = l * (1.0 + 0.05 * j as f64);
                if kk > 0.0 && ll > 0.0 {
                    assert!(d.value(kk, ll) <= best + 1e-12);
                }
            }
        }
        let g = d.grad(k, l);
        assert!(g[0].abs() < 1e-8 && g[1].abs() < 1e-8);
    }

    #[test]
    fn identical_samples_do_not_converge() {
        assert!(matches!(
            tau_profile_mode(&[2.0, 2.0, 2.0]),
            Err(ModelError::NoConvergence(_))
        ));
    }
}
