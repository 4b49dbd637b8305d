//! Conditional posterior of one document's topic affinities ξ_d.
//!
//! Only labeled topics enter θ_d, so the Poisson part of the density is a
//! low-dimensional regression on the active columns of β. The Bernoulli label
//! terms and the Gaussian prior act on the full K-vector.

use nalgebra::DMatrix;

use super::params::BetaTable;
use super::{ModelError, RATE_FLOOR};
use crate::density::LogDensity;
use crate::optim::central_difference_hessian;
use crate::special::{inv_logit, log1p_exp_neg};
use crate::tree::TopicTree;

#[derive(Debug, Clone)]
pub struct AffinityTarget<'a> {
    counts: &'a [(u32, u32)],
    length: f64,
    /// Topic indices contributing to θ.
    active: Vec<usize>,
    /// Node id of each active topic.
    active_nodes: Vec<usize>,
    /// Label indicator per topic; `None` drops the Bernoulli terms.
    labels: Option<Vec<bool>>,
    beta: &'a BetaTable,
    eta: &'a [f64],
    lambda2: f64,
}

impl<'a> AffinityTarget<'a> {
    /// Labeled document: θ is gated by the labels and the Bernoulli label
    /// likelihood is included.
    pub fn labeled(
        counts: &'a [(u32, u32)],
        length: f64,
        label_nodes: &[usize],
        beta: &'a BetaTable,
        eta: &'a [f64],
        lambda2: f64,
    ) -> Result<Self, ModelError> {
        if label_nodes.is_empty() {
            return Err(ModelError::AllLabelsInactive);
        }
        let k = eta.len();
        let mut labels = vec![false; k];
        for &n in label_nodes {
            let t = TopicTree::topic_index(n)
                .filter(|&t| t < k)
                .ok_or_else(|| ModelError::InvalidParameter(format!("label node {n} is not a topic")))?;
            labels[t] = true;
        }
        let active: Vec<usize> = (0..k).filter(|&t| labels[t]).collect();
        Ok(Self {
            counts,
            length,
            active_nodes: active.iter().map(|&t| TopicTree::topic_node(t)).collect(),
            active,
            labels: Some(labels),
            beta,
            eta,
            lambda2,
        })
    }

    /// Unlabeled document for prediction: θ is a softmax over every topic and
    /// no label terms are present.
    pub fn unlabeled(
        counts: &'a [(u32, u32)],
        length: f64,
        beta: &'a BetaTable,
        eta: &'a [f64],
        lambda2: f64,
    ) -> Self {
        let active: Vec<usize> = (0..eta.len()).collect();
        Self {
            counts,
            length,
            active_nodes: active.iter().map(|&t| TopicTree::topic_node(t)).collect(),
            active,
            labels: None,
            beta,
            eta,
            lambda2,
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    fn reduce(&self, xi: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&t| xi[t]).collect()
    }

    /// Softmax over the active subvector.
    pub fn theta_active(xi_active: &[f64]) -> Vec<f64> {
        let max = xi_active.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut th: Vec<f64> = xi_active.iter().map(|x| (x - max).exp()).collect();
        let s: f64 = th.iter().sum();
        th.iter_mut().for_each(|t| *t /= s);
        th
    }

    fn mixed_rate(&self, word: usize, theta: &[f64]) -> f64 {
        let row = self.beta.row(word);
        self.active_nodes
            .iter()
            .zip(theta)
            .map(|(&n, &t)| row[n] * t)
            .sum::<f64>()
            .max(RATE_FLOOR)
    }

    /// Poisson log-likelihood of the counts as a function of θ.
    pub fn poisson_loglik(&self, theta: &[f64]) -> f64 {
        let sums = self.beta.col_sums();
        let expo: f64 = self.active_nodes.iter().zip(theta).map(|(&n, &t)| sums[n] * t).sum();
        let mut ll = -self.length * expo;
        for &(f, w) in self.counts {
            ll += w as f64 * self.mixed_rate(f as usize, theta).ln();
        }
        ll
    }

    /// ∇_θ of the Poisson log-likelihood: −l Σ_f β_f + Σ_f w β_f / (β_fᵀθ).
    pub fn poisson_grad_theta(&self, theta: &[f64]) -> Vec<f64> {
        let sums = self.beta.col_sums();
        let mut a: Vec<f64> = self.active_nodes.iter().map(|&n| -self.length * sums[n]).collect();
        for &(f, w) in self.counts {
            let s = self.mixed_rate(f as usize, theta);
            let r = w as f64 / s;
            let row = self.beta.row(f as usize);
            for (aj, &n) in a.iter_mut().zip(&self.active_nodes) {
                *aj += r * row[n];
            }
        }
        a
    }

    /// Gradient of the Poisson part in the active subspace: ∇_θ l · J(θ→ξ).
    pub fn poisson_grad_active(&self, xi_active: &[f64]) -> Vec<f64> {
        let theta = Self::theta_active(xi_active);
        let a = self.poisson_grad_theta(&theta);
        let mean: f64 = theta.iter().zip(&a).map(|(t, a)| t * a).sum();
        theta.iter().zip(&a).map(|(t, a)| t * (a - mean)).collect()
    }

    /// Central-difference Hessian of the Poisson part over the active topics.
    pub fn poisson_hessian_active(&self, xi: &[f64]) -> DMatrix<f64> {
        let x = self.reduce(xi);
        central_difference_hessian(&x, |p, g| g.copy_from_slice(&self.poisson_grad_active(p)))
    }

    /// Likelihood Hessian over all K topics: numeric Poisson block scattered
    /// onto the active coordinates plus the analytic Bernoulli diagonal.
    pub fn likelihood_hessian(&self, xi: &[f64]) -> DMatrix<f64> {
        let k = xi.len();
        let mut h = DMatrix::zeros(k, k);
        let hp = self.poisson_hessian_active(xi);
        for (i, &ti) in self.active.iter().enumerate() {
            for (j, &tj) in self.active.iter().enumerate() {
                h[(ti, tj)] = hp[(i, j)];
            }
        }
        if self.labels.is_some() {
            for (t, &x) in xi.iter().enumerate() {
                let p = inv_logit(x);
                h[(t, t)] -= p * (1.0 - p);
            }
        }
        h
    }

    pub fn prior_hessian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(self.eta.len(), self.eta.len(), -1.0 / self.lambda2)
    }

    fn label_and_prior(&self, xi: &[f64]) -> f64 {
        let mut v = 0.0;
        if let Some(labels) = &self.labels {
            for (&x, &on) in xi.iter().zip(labels) {
                v -= log1p_exp_neg(x);
                if !on {
                    v -= x;
                }
            }
        }
        let q: f64 = xi.iter().zip(self.eta).map(|(x, e)| (x - e) * (x - e)).sum();
        v - 0.5 * q / self.lambda2
    }

    /// Numeric Hessian of the full log density over the active topics.
    pub fn hessian_active_numeric(&self, xi: &[f64]) -> DMatrix<f64> {
        let x = self.reduce(xi);
        let mut full = xi.to_vec();
        let mut g = vec![0.0; xi.len()];
        central_difference_hessian(&x, |p, out| {
            for (&t, &v) in self.active.iter().zip(p) {
                full[t] = v;
            }
            self.gradient(&full, &mut g);
            for (o, &t) in out.iter_mut().zip(&self.active) {
                *o = g[t];
            }
        })
    }
}

impl LogDensity for AffinityTarget<'_> {
    fn dim(&self) -> usize {
        self.eta.len()
    }

    fn log_density(&self, xi: &[f64]) -> f64 {
        let theta = Self::theta_active(&self.reduce(xi));
        self.poisson_loglik(&theta) + self.label_and_prior(xi)
    }

    fn gradient(&self, xi: &[f64], grad: &mut [f64]) {
        for (t, g) in grad.iter_mut().enumerate() {
            let x = xi[t];
            let mut v = -(x - self.eta[t]) / self.lambda2;
            if let Some(labels) = &self.labels {
                v += 1.0 / (1.0 + x.exp());
                if !labels[t] {
                    v -= 1.0;
                }
            }
            *g = v;
        }
        let pg = self.poisson_grad_active(&self.reduce(xi));
        for (&t, v) in self.active.iter().zip(pg) {
            grad[t] += v;
        }
    }
}

/// J(θ→ξ) for a softmax: S⁻²(S e^{ξ_k} δ_kl − e^{ξ_k + ξ_l}) = diag(θ) − θθᵀ.
pub fn theta_jacobian(xi: &[f64]) -> DMatrix<f64> {
    let theta = AffinityTarget::theta_active(xi);
    let k = xi.len();
    DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { theta[i] } else { 0.0 };
        d - theta[i] * theta[j]
    })
}

pub fn logpost_affinity(xi: &[f64], target: &AffinityTarget<'_>) -> Result<f64, ModelError> {
    let v = target.log_density(xi);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}

pub fn grad_affinity(xi: &[f64], target: &AffinityTarget<'_>) -> Result<Vec<f64>, ModelError> {
    let mut g = vec![0.0; xi.len()];
    target.gradient(xi, &mut g);
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}

/// Central-difference Hessian of the analytic gradient over the active topics.
pub fn hess_affinity_numeric(
    xi: &[f64],
    target: &AffinityTarget<'_>,
) -> Result<DMatrix<f64>, ModelError> {
    let h = target.hessian_active_numeric(xi);
    if h.iter().all(|x| x.is_finite()) {
        Ok(h)
    } else {
        Err(ModelError::NonFiniteValue)
    }
}
