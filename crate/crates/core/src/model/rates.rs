//! Conditional posterior of one word's log rates μ_f: a Poisson regression with
//! documents as observations, θ_d as covariates and l_d as exposure, under
//! the Gaussian diffusion prior.

use nalgebra::DMatrix;

use super::params::SparseTheta;
use super::{ModelError, RATE_FLOOR};
use crate::density::LogDensity;
use crate::tree::PrecisionMatrix;

/// Observations for one word.
#[derive(Debug, Clone, Copy)]
pub struct RateData<'a> {
    /// Σ_d l_d θ_d by node; shared by every word.
    pub exposure: &'a [f64],
    /// `(doc index, w_fd)` for documents where the word occurs.
    pub occurrences: &'a [(u32, u32)],
    /// θ for every document, indexed by doc index.
    pub thetas: &'a [SparseTheta],
}

/// Owned per-document observations `(w_fd, l_d, θ_d)` for one word.
#[derive(Debug, Clone, Default)]
pub struct WordObservations {
    exposure: Vec<f64>,
    occurrences: Vec<(u32, u32)>,
    thetas: Vec<SparseTheta>,
}

impl WordObservations {
    pub fn new(n_nodes: usize, docs: &[(u32, f64, SparseTheta)]) -> Self {
        let mut exposure = vec![0.0; n_nodes];
        let mut occurrences = Vec::new();
        let mut thetas = Vec::with_capacity(docs.len());
        for (d, (w, l, theta)) in docs.iter().enumerate() {
            for (&n, &t) in theta.nodes.iter().zip(&theta.weights) {
                exposure[n] += l * t;
            }
            if *w > 0 {
                occurrences.push((d as u32, *w));
            }
            thetas.push(theta.clone());
        }
        Self {
            exposure,
            occurrences,
            thetas,
        }
    }

    pub fn data(&self) -> RateData<'_> {
        RateData {
            exposure: &self.exposure,
            occurrences: &self.occurrences,
            thetas: &self.thetas,
        }
    }
}

/// Σ_d l_d θ_d over nodes.
pub fn exposure(n_nodes: usize, lengths: &[f64], thetas: &[SparseTheta]) -> Vec<f64> {
    let mut e = vec![0.0; n_nodes];
    for (l, th) in lengths.iter().zip(thetas) {
        for (&n, &t) in th.nodes.iter().zip(&th.weights) {
            e[n] += l * t;
        }
    }
    e
}

#[derive(Debug, Clone, Copy)]
pub struct RateTarget<'a> {
    pub data: RateData<'a>,
    pub precision: &'a PrecisionMatrix,
    pub psi: f64,
}

impl<'a> RateTarget<'a> {
    pub fn new(data: RateData<'a>, precision: &'a PrecisionMatrix, psi: f64) -> Self {
        Self {
            data,
            precision,
            psi,
        }
    }

    fn centered(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().map(|m| m - self.psi).collect()
    }

    /// Poisson log-likelihood up to constants.
    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let exposure: f64 = self.data.exposure.iter().zip(beta).map(|(e, b)| e * b).sum();
        let mut ll = -exposure;
        for &(d, w) in self.data.occurrences {
            let s = self.data.thetas[d as usize].dot(beta).max(RATE_FLOOR);
            ll += w as f64 * s.ln();
        }
        ll
    }

    /// ∂l/∂μ = −Σ l_d θ_d∘β + Σ (w/θᵀβ) θ_d∘β.
    pub fn likelihood_gradient(&self, beta: &[f64], out: &mut [f64]) {
        for ((o, e), b) in out.iter_mut().zip(self.data.exposure).zip(beta) {
            *o = -e * b;
        }
        for &(d, w) in self.data.occurrences {
            let th = &self.data.thetas[d as usize];
            let s = th.dot(beta).max(RATE_FLOOR);
            let r = w as f64 / s;
            for (&n, &t) in th.nodes.iter().zip(&th.weights) {
                out[n] += r * t * beta[n];
            }
        }
    }

    /// −ΘᵀWΘ ∘ ββᵀ + diag(∂l/∂μ).
    pub fn likelihood_hessian(&self, mu: &[f64]) -> DMatrix<f64> {
        let n = mu.len();
        let beta: Vec<f64> = mu.iter().map(|m| m.exp()).collect();
        let mut h = DMatrix::zeros(n, n);
        for &(d, w) in self.data.occurrences {
            let th = &self.data.thetas[d as usize];
            let s = th.dot(&beta).max(RATE_FLOOR);
            let wt = w as f64 / (s * s);
            for (&i, &ti) in th.nodes.iter().zip(&th.weights) {
                let xi = ti * beta[i];
                for (&j, &tj) in th.nodes.iter().zip(&th.weights) {
                    h[(i, j)] -= wt * xi * tj * beta[j];
                }
            }
        }
        let mut g = vec![0.0; n];
        self.likelihood_gradient(&beta, &mut g);
        for (i, gi) in g.iter().enumerate() {
            h[(i, i)] += gi;
        }
        h
    }

    pub fn prior_hessian(&self) -> DMatrix<f64> {
        -self.precision.to_dense()
    }

    pub fn hessian(&self, mu: &[f64]) -> DMatrix<f64> {
        self.likelihood_hessian(mu) + self.prior_hessian()
    }
}

impl LogDensity for RateTarget<'_> {
    fn dim(&self) -> usize {
        self.precision.dim()
    }

    fn log_density(&self, mu: &[f64]) -> f64 {
        let beta: Vec<f64> = mu.iter().map(|m| m.exp()).collect();
        self.log_likelihood(&beta) - 0.5 * self.precision.quad_form(&self.centered(mu))
    }

    fn gradient(&self, mu: &[f64], grad: &mut [f64]) {
        let beta: Vec<f64> = mu.iter().map(|m| m.exp()).collect();
        self.likelihood_gradient(&beta, grad);
        let prior = self.precision.mul_vec(&self.centered(mu));
        for (g, p) in grad.iter_mut().zip(prior) {
            *g -= p;
        }
    }

    fn value_and_gradient(&self, mu: &[f64], grad: &mut [f64]) -> f64 {
        let beta: Vec<f64> = mu.iter().map(|m| m.exp()).collect();
        let c = self.centered(mu);
        let prior = self.precision.mul_vec(&c);
        let quad: f64 = c.iter().zip(&prior).map(|(a, b)| a * b).sum();

        let mut value: f64 = -self.data.exposure.iter().zip(&beta).map(|(e, b)| e * b).sum::<f64>();
        for ((g, e), b) in grad.iter_mut().zip(self.data.exposure).zip(&beta) {
            *g = -e * b;
        }
        for &(d, w) in self.data.occurrences {
            let th = &self.data.thetas[d as usize];
            let s = th.dot(&beta).max(RATE_FLOOR);
            let w = w as f64;
            value += w * s.ln();
            let r = w / s;
            for (&n, &t) in th.nodes.iter().zip(&th.weights) {
                grad[n] += r * t * beta[n];
            }
        }
        for (g, p) in grad.iter_mut().zip(prior) {
            *g -= p;
        }
        value - 0.5 * quad
    }
}

fn check_finite(x: f64) -> Result<f64, ModelError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}

/// Unnormalized log conditional posterior of μ_f.
pub fn logpost_rates(
    mu: &[f64],
    data: RateData<'_>,
    precision: &PrecisionMatrix,
    psi: f64,
) -> Result<f64, ModelError> {
    check_finite(RateTarget::new(data, precision, psi).log_density(mu))
}

pub fn grad_rates(
    mu: &[f64],
    data: RateData<'_>,
    precision: &PrecisionMatrix,
    psi: f64,
) -> Result<Vec<f64>, ModelError> {
    let mut g = vec![0.0; mu.len()];
    RateTarget::new(data, precision, psi).gradient(mu, &mut g);
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}

/// Full Hessian of the log conditional posterior; ψ does not enter.
pub fn hess_rates(
    mu: &[f64],
    data: RateData<'_>,
    precision: &PrecisionMatrix,
) -> Result<DMatrix<f64>, ModelError> {
    let h = RateTarget::new(data, precision, 0.0).hessian(mu);
    if h.iter().all(|x| x.is_finite()) {
        Ok(h)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}
