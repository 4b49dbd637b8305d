use serde::{Deserialize, Serialize};

use super::ModelError;

/// Corpus-level hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Mean of the corpus-level log rates.
    pub psi: f64,
    /// Variance of the corpus-level log rates.
    pub gamma2: f64,
    /// Degrees of freedom of the scaled Inv-χ² prior on τ².
    pub nu: f64,
    /// Scale of the scaled Inv-χ² prior on τ².
    pub sigma2: f64,
    /// Affinity prior mean, one entry per topic.
    pub eta: Vec<f64>,
    /// Affinity prior variance (covariance is `lambda2 · I`).
    pub lambda2: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("gamma2", self.gamma2),
            ("nu", self.nu),
            ("sigma2", self.sigma2),
            ("lambda2", self.lambda2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.psi.is_finite() || self.eta.iter().any(|e| !e.is_finite()) {
            return Err(ModelError::InvalidParameter("psi and eta must be finite".into()));
        }
        Ok(())
    }

    /// Shape κ_τ of the Gamma law followed by 1/τ².
    pub fn tau_kappa(&self) -> f64 {
        self.nu / 2.0
    }

    /// Scale λ_τ of the Gamma law followed by 1/τ².
    pub fn tau_lambda(&self) -> f64 {
        2.0 / (self.nu * self.sigma2)
    }

    /// Inverse of ([`Self::tau_kappa`], [`Self::tau_lambda`]).
    pub fn nu_sigma2_from_gamma(kappa: f64, lambda: f64) -> (f64, f64) {
        let nu = 2.0 * kappa;
        (nu, 2.0 / (nu * lambda))
    }
}

/// One word's log rates over every tree node and its per-parent variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTreeParams {
    /// Indexed by node id (root included).
    pub mu: Vec<f64>,
    /// Indexed by `TopicTree::parent_slot`.
    pub tau2: Vec<f64>,
}

impl WordTreeParams {
    pub fn beta(&self) -> Vec<f64> {
        self.mu.iter().map(|m| m.exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocParams {
    /// Topic affinities on the log-odds scale, topic index `k` ↔ node `k + 1`.
    pub xi: Vec<f64>,
}

/// Data-generation settings beyond the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub n_docs: usize,
    pub n_words: usize,
    /// Poisson mean of the raw document length.
    pub length_rate: f64,
    /// Normalizing length: `l_d = L_d / mean_length`.
    pub mean_length: f64,
    pub seed: u64,
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.length_rate > 0.0) || !(self.mean_length > 0.0) {
            return Err(ModelError::InvalidParameter(
                "length_rate and mean_length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// θ restricted to its nonzero entries, keyed by node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseTheta {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SparseTheta {
    /// θ from affinities and the document's label nodes.
    pub fn from_labels(xi: &[f64], labels: &[usize]) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::AllLabelsInactive);
        }
        let max = labels
            .iter()
            .map(|&n| xi[n - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = labels.iter().map(|&n| (xi[n - 1] - max).exp()).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Ok(Self {
            nodes: labels.to_vec(),
            weights,
        })
    }

    /// θᵀβ for a per-node rate row.
    pub fn dot(&self, beta_row: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| w * beta_row[n])
            .sum()
    }

    pub fn to_dense(&self, n_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_nodes];
        for (&n, &w) in self.nodes.iter().zip(&self.weights) {
            out[n] = w;
        }
        out
    }
}

/// θ_{dk} = e^{ξ_k} I_k / Σ_j e^{ξ_j} I_j over the topic vector.
pub fn theta_from(xi: &[f64], labels: &[bool]) -> Result<Vec<f64>, ModelError> {
    if xi.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: xi.len(),
            got: labels.len(),
        });
    }
    let max = xi
        .iter()
        .zip(labels)
        .filter(|(_, &on)| on)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ModelError::AllLabelsInactive);
    }
    let mut theta: Vec<f64> = xi
        .iter()
        .zip(labels)
        .map(|(&x, &on)| if on { (x - max).exp() } else { 0.0 })
        .collect();
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= s);
    Ok(theta)
}

/// Dense `V × N` table of rates β_{f,node}, row-major by word, plus the
/// per-node column sums Σ_f β_{f,node}.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    n_nodes: usize,
    values: Vec<f64>,
    col_sums: Vec<f64>,
}

impl BetaTable {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_nodes = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_nodes);
        let mut col_sums = vec![0.0; n_nodes];
        for r in rows {
            let r = r.as_ref();
            debug_assert_eq!(r.len(), n_nodes);
            values.extend_from_slice(r);
            for (s, v) in col_sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        Self {
            n_nodes,
            values,
            col_sums,
        }
    }

    pub fn from_words(words: &[WordTreeParams]) -> Self {
        let rows: Vec<Vec<f64>> = words.iter().map(|w| w.beta()).collect();
        Self::from_rows(&rows)
    }

    pub fn n_words(&self) -> usize {
        if self.n_nodes == 0 {
            0
        } else {
            self.values.len() / self.n_nodes
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn row(&self, word: usize) -> &[f64] {
        &self.values[word * self.n_nodes..(word + 1) * self.n_nodes]
    }

    pub fn col_sums(&self) -> &[f64] {
        &self.col_sums
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theta_examples() {
        assert_eq!(theta_from(&[0.0, 0.0], &[true, true]).unwrap(), vec![0.5, 0.5]);
        let t = theta_from(&[2f64.ln(), 0.0], &[true, true]).unwrap();
        assert_relative_eq!(t[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(theta_from(&[5.0, -3.0], &[true, false]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(
            theta_from(&[1.0, 2.0], &[false, false]),
            Err(ModelError::AllLabelsInactive)
        );
    }

    #[test]
    fn sparse_theta_matches_dense() {
        let xi = [0.3, -1.0, 2.0, 0.1];
        let dense = theta_from(&xi, &[true, false, true, true]).unwrap();
        let sparse = SparseTheta::from_labels(&xi, &[1, 3, 4]).unwrap();
        let expanded = sparse.to_dense(5);
        for k in 0..4 {
            assert_relative_eq!(expanded[k + 1], dense[k], epsilon = 1e-15);
        }
        assert_eq!(expanded[0], 0.0);
    }

    #[test]
    fn gamma_bijection() {
        let h = Hyperparams {
            psi: 0.0,
            gamma2: 1.0,
            nu: 5.0,
            sigma2: 0.3,
            eta: vec![],
            lambda2: 1.0,
        };
        let (nu, s2) = Hyperparams::nu_sigma2_from_gamma(h.tau_kappa(), h.tau_lambda());
        assert_relative_eq!(nu, 5.0);
        assert_relative_eq!(s2, 0.3, epsilon = 1e-15);
        // mean of 1/τ² is 1/σ²
        assert_relative_eq!(h.tau_kappa() * h.tau_lambda(), 1.0 / 0.3, epsilon = 1e-12);
    }
}
