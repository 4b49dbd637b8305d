//! Forward simulation of the generative process.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use super::params::{BetaTable, DocParams, GenerativeConfig, Hyperparams, SparseTheta, WordTreeParams};
use super::ModelError;
use crate::corpus::{Corpus, DocRecord, LoadOptions};
use crate::dist::scaled_inv_chi2;
use crate::rng::{substream, Stream};
use crate::special::inv_logit;
use crate::tree::TopicTree;

#[derive(Debug, Clone)]
pub struct SimulatedCorpus {
    pub corpus: Corpus,
    pub words: Vec<WordTreeParams>,
    pub docs: Vec<DocParams>,
}

/// Diffuses one word's log rates down the tree.
pub fn simulate_word<R: Rng + ?Sized>(
    tree: &TopicTree,
    hyper: &Hyperparams,
    rng: &mut R,
) -> WordTreeParams {
    let mut mu = vec![0.0; tree.n_nodes()];
    let mut tau2 = vec![0.0; tree.n_parents()];
    mu[TopicTree::ROOT] = Normal::new(hyper.psi, hyper.gamma2.sqrt())
        .expect("valid normal")
        .sample(rng);
    for node in tree.breadth_first() {
        if let Some(slot) = tree.parent_slot(node) {
            let t = scaled_inv_chi2(rng, hyper.nu, hyper.sigma2);
            tau2[slot] = t;
            let sd = t.sqrt();
            for &c in tree.children(node) {
                mu[c] = mu[node] + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
    }
    WordTreeParams { mu, tau2 }
}

/// Draws affinities and labels, redrawing both until at least one label is on.
pub fn simulate_membership<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    rng: &mut R,
) -> (DocParams, Vec<usize>) {
    let sd = hyper.lambda2.sqrt();
    loop {
        let xi: Vec<f64> = hyper
            .eta
            .iter()
            .map(|&e| e + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let labels: Vec<usize> = xi
            .iter()
            .enumerate()
            .filter(|(_, &x)| rng.random::<f64>() < inv_logit(x))
            .map(|(k, _)| TopicTree::topic_node(k))
            .collect();
        if !labels.is_empty() {
            return (DocParams { xi }, labels);
        }
    }
}

pub fn simulate_corpus(
    tree: &TopicTree,
    hyper: &Hyperparams,
    gen: &GenerativeConfig,
) -> Result<SimulatedCorpus, ModelError> {
    hyper.validate()?;
    gen.validate()?;
    if hyper.eta.len() != tree.n_topics() {
        return Err(ModelError::DimensionMismatch {
            expected: tree.n_topics(),
            got: hyper.eta.len(),
        });
    }

    let words: Vec<WordTreeParams> = (0..gen.n_words)
        .into_par_iter()
        .map(|f| {
            let mut rng = substream(gen.seed, Stream::SimWord, f as u64, 0);
            simulate_word(tree, hyper, &mut rng)
        })
        .collect();
    let beta = BetaTable::from_words(&words);
    let sims = simulate_documents(hyper, &beta, gen, 0..gen.n_docs)?;
    let (docs, records): (Vec<_>, Vec<_>) = sims.into_iter().unzip();
    let vocab = (0..gen.n_words).map(|f| format!("w{f}")).collect();
    let corpus = Corpus::new(vocab, tree, records, LoadOptions::default())
        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    Ok(SimulatedCorpus {
        corpus,
        words,
        docs,
    })
}

/// Documents with the given ids drawn from fixed rates. Each id has its own
/// substream, so ids beyond `gen.n_docs` give held-out documents from the
/// same process.
fn simulate_documents(
    hyper: &Hyperparams,
    beta: &BetaTable,
    gen: &GenerativeConfig,
    ids: std::ops::Range<usize>,
) -> Result<Vec<(DocParams, DocRecord)>, ModelError> {
    let length_dist = Poisson::new(gen.length_rate).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;

    let sims: Vec<(DocParams, DocRecord)> = ids
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(gen.seed, Stream::SimDoc, d as u64, 0);
            let (params, labels) = simulate_membership(hyper, &mut rng);
            let raw_length = loop {
                let l: f64 = length_dist.sample(&mut rng);
                if l > 0.0 {
                    break l;
                }
            };
            let l = raw_length / gen.mean_length;
            let theta = SparseTheta::from_labels(&params.xi, &labels).expect("labels nonempty");
            let mut counts = Vec::new();
            for f in 0..beta.n_words() {
                let rate = l * theta.dot(beta.row(f));
                if rate > 0.0 && rate.is_finite() {
                    let w: f64 = Poisson::new(rate).expect("positive rate").sample(&mut rng);
                    if w > 0.0 {
                        counts.push((f, w as u32));
                    }
                }
            }
            let rec = DocRecord {
                id: d,
                counts,
                labels,
                length: Some(raw_length),
            };
            (params, rec)
        })
        .collect();

    Ok(sims)
}

/// `n` further documents from the process that generated `words`, with ids
/// `gen.n_docs..gen.n_docs + n`.
pub fn simulate_held_out(
    tree: &TopicTree,
    hyper: &Hyperparams,
    words: &[WordTreeParams],
    gen: &GenerativeConfig,
    n: usize,
) -> Result<(Corpus, Vec<DocParams>), ModelError> {
    hyper.validate()?;
    gen.validate()?;
    let beta = BetaTable::from_words(words);
    let sims = simulate_documents(hyper, &beta, gen, gen.n_docs..gen.n_docs + n)?;
    let (docs, records): (Vec<_>, Vec<_>) = sims.into_iter().unzip();
    let vocab = (0..words.len()).map(|f| format!("w{f}")).collect();
    let corpus = Corpus::with_mean_length(vocab, tree, records, LoadOptions::default(), gen.mean_length)
        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    Ok((corpus, docs))
}
