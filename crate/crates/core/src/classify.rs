//! Labeling unlabeled documents from a fitted model, threshold calibration
//! and multi-label evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::density::LogDensity;
use crate::model::{AffinityTarget, BetaTable, ModelError};
use crate::optim::{bfgs_maximize, BfgsConfig};
use crate::special::inv_logit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("affinity optimization did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("document length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Posterior means held fixed for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveModel {
    /// `V × N` posterior-mean rates.
    pub beta: BetaTable,
    pub eta: Vec<f64>,
    pub lambda2: f64,
    /// Per-topic cutoffs on logit⁻¹(ξ*).
    pub thresholds: Vec<f64>,
}

impl PredictiveModel {
    pub fn new(beta: BetaTable, eta: Vec<f64>, lambda2: f64) -> Self {
        let k = eta.len();
        Self {
            beta,
            eta,
            lambda2,
            thresholds: vec![0.5; k],
        }
    }

    pub fn n_topics(&self) -> usize {
        self.eta.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub xi: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Affinity maximizing the Poisson likelihood (θ a softmax over every topic)
/// plus the Gaussian prior, searched from η̂.
pub fn fit_xi_star(
    counts: &[(u32, u32)],
    length: f64,
    model: &PredictiveModel,
) -> Result<Vec<f64>, ClassifyError> {
    if !(length > 0.0) {
        return Err(ClassifyError::NonPositiveLength(length));
    }
    let target = AffinityTarget::unlabeled(counts, length, &model.beta, &model.eta, model.lambda2);
    let r = bfgs_maximize(&target, &model.eta, &BfgsConfig::default())
        .map_err(|_| ModelError::NonFiniteValue)?;
    if !r.converged {
        return Err(ClassifyError::NoConvergence(r.iterations));
    }
    Ok(r.x)
}

/// Value of the prediction objective, for checking the optimizer.
pub fn xi_star_objective(xi: &[f64], counts: &[(u32, u32)], length: f64, model: &PredictiveModel) -> f64 {
    AffinityTarget::unlabeled(counts, length, &model.beta, &model.eta, model.lambda2).log_density(xi)
}

/// p_k = logit⁻¹(ξ*_k); label k when p_k ≥ threshold_k.
pub fn predict_membership(
    counts: &[(u32, u32)],
    length: f64,
    model: &PredictiveModel,
) -> Result<Prediction, ClassifyError> {
    let xi = fit_xi_star(counts, length, model)?;
    let probabilities: Vec<f64> = xi.iter().map(|&x| inv_logit(x)).collect();
    let labels = probabilities
        .iter()
        .zip(&model.thresholds)
        .map(|(p, t)| p >= t)
        .collect();
    Ok(Prediction {
        xi,
        probabilities,
        labels,
    })
}

/// [`predict_membership`] for every document, using its normalized length.
pub fn predict_corpus(corpus: &Corpus, model: &PredictiveModel) -> Result<Vec<Prediction>, ClassifyError> {
    corpus
        .docs()
        .par_iter()
        .map(|d| predict_membership(&d.counts, d.norm_length, model))
        .collect()
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Per-topic threshold maximizing F1. Candidates are the smallest predicted
/// probability and the midpoints between consecutive distinct ones; ties go
/// to the larger threshold. Topics with no positive example get 0.5.
pub fn calibrate_thresholds(
    probabilities: &[Vec<f64>],
    truth: &[Vec<bool>],
) -> Result<Vec<f64>, ClassifyError> {
    if probabilities.is_empty() {
        return Err(ClassifyError::EmptyValidation);
    }
    if probabilities.len() != truth.len() {
        return Err(ClassifyError::ShapeMismatch(format!(
            "{} prediction rows, {} truth rows",
            probabilities.len(),
            truth.len()
        )));
    }
    let k = probabilities[0].len();
    (0..k)
        .map(|t| {
            let mut pairs: Vec<(f64, bool)> = probabilities
                .iter()
                .zip(truth)
                .map(|(p, y)| {
                    if p.len() != k || y.len() != k {
                        return Err(ClassifyError::ShapeMismatch("ragged rows".into()));
                    }
                    Ok((p[t], y[t]))
                })
                .collect::<Result<_, _>>()?;
            let positives = pairs.iter().filter(|(_, y)| *y).count();
            if positives == 0 {
                return Ok(0.5);
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            distinct.dedup();
            let mut candidates = vec![distinct[0]];
            candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));

            let mut best = (f64::NEG_INFINITY, 0.5);
            for &c in &candidates {
                let (mut tp, mut fp) = (0, 0);
                for &(p, y) in &pairs {
                    if p >= c {
                        if y {
                            tp += 1;
                        } else {
                            fp += 1;
                        }
                    }
                }
                let score = f1(tp, fp, positives - tp);
                if score >= best.0 {
                    best = (score, c);
                }
            }
            Ok(best.1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

impl ClassificationMetrics {
    pub fn micro_f1(&self) -> f64 {
        let (p, r) = (self.micro_precision, self.micro_recall);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro averages pool every (document, topic) decision; macro averages the
/// per-topic values over topics with at least one true label. Undefined
/// precision counts as 0.
pub fn classification_metrics(
    predicted: &[Vec<bool>],
    truth: &[Vec<bool>],
) -> Result<ClassificationMetrics, ClassifyError> {
    if predicted.len() != truth.len() {
        return Err(ClassifyError::ShapeMismatch(format!(
            "{} predicted rows, {} truth rows",
            predicted.len(),
            truth.len()
        )));
    }
    let k = truth.first().map_or(0, Vec::len);
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (p, y) in predicted.iter().zip(truth) {
        if p.len() != k || y.len() != k {
            return Err(ClassifyError::ShapeMismatch("ragged rows".into()));
        }
        for t in 0..k {
            match (p[t], y[t]) {
                (true, true) => tp[t] += 1,
                (true, false) => fp[t] += 1,
                (false, true) => fn_[t] += 1,
                (false, false) => {}
            }
        }
    }
    let (stp, sfp, sfn): (usize, usize, usize) =
        (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let present: Vec<usize> = (0..k).filter(|&t| tp[t] + fn_[t] > 0).collect();
    let n = present.len().max(1) as f64;
    Ok(ClassificationMetrics {
        micro_precision: ratio(stp, stp + sfp),
        micro_recall: ratio(stp, stp + sfn),
        macro_precision: present.iter().map(|&t| ratio(tp[t], tp[t] + fp[t])).sum::<f64>() / n,
        macro_recall: present.iter().map(|&t| ratio(tp[t], tp[t] + fn_[t])).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn b(rows: &[&[u8]]) -> Vec<Vec<bool>> {
        rows.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect()
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let truth = b(&[&[1, 0], &[0, 1], &[1, 1]]);
        let m = classification_metrics(&truth, &truth).unwrap();
        assert_eq!(
            (m.micro_precision, m.micro_recall, m.macro_precision, m.macro_recall),
            (1.0, 1.0, 1.0, 1.0)
        );
        let none = b(&[&[0, 0], &[0, 0], &[0, 0]]);
        let m = classification_metrics(&none, &truth).unwrap();
        assert_eq!((m.micro_precision, m.micro_recall, m.macro_precision), (0.0, 0.0, 0.0));
    }

    #[test]
    fn four_document_macro_fixture() {
        // topic A: truth on docs 0,1; predicted on 0 only        → P = 1,   R = 0.5
        // topic B: truth on doc 2;    predicted on docs 2,3      → P = 0.5, R = 1
        let truth = b(&[&[1, 0], &[1, 0], &[0, 1], &[0, 0]]);
        let pred = b(&[&[1, 0], &[0, 0], &[0, 1], &[0, 1]]);
        let m = classification_metrics(&pred, &truth).unwrap();
        assert_relative_eq!(m.macro_precision, 0.75);
        assert_relative_eq!(m.macro_recall, 0.75);
        // pooled: tp 2, fp 1, fn 1
        assert_relative_eq!(m.micro_precision, 2.0 / 3.0);
        assert_relative_eq!(m.micro_recall, 2.0 / 3.0);
        assert!(classification_metrics(&pred[..3], &truth).is_err());
    }

    #[test]
    fn thresholds_separable_all_positive_and_none() {
        let probs = vec![vec![0.1, 0.3, 0.2], vec![0.4, 0.6, 0.25], vec![0.7, 0.9, 0.3], vec![0.8, 0.95, 0.1]];
        let truth = b(&[&[0, 1, 0], &[0, 1, 0], &[1, 1, 0], &[1, 1, 0]]);
        let t = calibrate_thresholds(&probs, &truth).unwrap();
        assert_relative_eq!(t[0], 0.55);
        assert_relative_eq!(t[1], 0.3);
        assert_eq!(t[2], 0.5);
        assert_eq!(calibrate_thresholds(&[], &[]), Err(ClassifyError::EmptyValidation));
    }

    #[test]
    fn boundary_probability_is_positive() {
        let beta = BetaTable::from_rows(&[vec![1.0, 1.0, 1.0]]);
        let model = PredictiveModel::new(beta, vec![0.0, 0.0], 1.0);
        // no counts: ξ* is the prior mode 0, p = 0.5 ≥ 0.5
        let p = predict_membership(&[], 1e-12, &model).unwrap();
        assert!(p.xi.iter().all(|x| x.abs() < 1e-6));
        assert_eq!(p.labels, vec![true, true]);
    }
}
