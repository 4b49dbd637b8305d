//! Frequency, exclusivity and FREX summaries of fitted rates, plus the
//! diversity and stability reports built on them.
//!
//! Matrices are row-per-word. Rate matrices carry one column per tree node
//! (root included); topic-level outputs carry one column per topic, with topic
//! `k` at node `k + 1`.

use thiserror::Error;

use crate::tree::TopicTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimandError {
    #[error("empty input")]
    EmptyInput,
    #[error("word {word} has zero probability under every topic")]
    ZeroDenominator { word: usize },
    #[error("summary list for topic {topic} has {len} entries, need {needed}")]
    ListTooShort { topic: usize, len: usize, needed: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ComparisonMode {
    #[default]
    Siblings,
    All,
}

impl std::str::FromStr for ComparisonMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "siblings" => Ok(Self::Siblings),
            "all" => Ok(Self::All),
            other => Err(format!("unknown comparison mode `{other}` (siblings|all)")),
        }
    }
}

/// Node ids compared against each topic, indexed by topic.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSets {
    sets: Vec<Vec<usize>>,
}

impl ComparisonSets {
    pub fn get(&self, topic: usize) -> &[usize] {
        &self.sets[topic]
    }

    pub fn n_topics(&self) -> usize {
        self.sets.len()
    }
}

pub fn comparison_sets(tree: &TopicTree, mode: ComparisonMode) -> ComparisonSets {
    let k = tree.n_topics();
    let sets = (0..k)
        .map(|t| {
            let node = TopicTree::topic_node(t);
            match mode {
                ComparisonMode::All => (1..=k).collect(),
                ComparisonMode::Siblings => {
                    let parent = tree.parent(node).expect("topic has a parent");
                    let sibs = tree.children(parent);
                    if sibs.len() == 1 {
                        vec![parent, node]
                    } else {
                        sibs.to_vec()
                    }
                }
            }
        })
        .collect();
    ComparisonSets { sets }
}

/// φ_{f,k} = β_{f,k} / Σ_{j∈𝒮(k)} β_{f,j}, one row per word, one column per topic.
pub fn exclusivity<R: AsRef<[f64]>>(beta_rows: &[R], sets: &ComparisonSets) -> Vec<Vec<f64>> {
    beta_rows
        .iter()
        .map(|row| {
            let row = row.as_ref();
            (0..sets.n_topics())
                .map(|t| {
                    let denom: f64 = sets.get(t).iter().map(|&j| row[j]).sum();
                    row[TopicTree::topic_node(t)] / denom
                })
                .collect()
        })
        .collect()
}

/// rank(x) = #{values ≤ x} / n.
pub fn ecdf_ranks(values: &[f64]) -> Result<Vec<f64>, EstimandError> {
    if values.is_empty() {
        return Err(EstimandError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    Ok(values
        .iter()
        .map(|x| sorted.partition_point(|v| v.total_cmp(x).is_le()) as f64 / n)
        .collect())
}

/// Weighted harmonic mean of the exclusivity and frequency ranks.
pub fn frex(phi_rank: f64, mu_rank: f64, w: f64) -> f64 {
    if w == 1.0 {
        return phi_rank;
    }
    if w == 0.0 {
        return mu_rank;
    }
    1.0 / (w / phi_rank + (1.0 - w) / mu_rank)
}

fn column(m: &[Vec<f64>], c: usize) -> Vec<f64> {
    m.iter().map(|r| r[c]).collect()
}

/// FREX for every (word, topic). `mu_topics` and `phi` are `V × K`.
pub fn frex_matrix(
    phi: &[Vec<f64>],
    mu_topics: &[Vec<f64>],
    w: f64,
) -> Result<Vec<Vec<f64>>, EstimandError> {
    if phi.len() != mu_topics.len() {
        return Err(EstimandError::DimensionMismatch {
            expected: phi.len(),
            got: mu_topics.len(),
        });
    }
    let v = phi.len();
    let k = phi.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; k]; v];
    for t in 0..k {
        let rp = ecdf_ranks(&column(phi, t))?;
        let rm = ecdf_ranks(&column(mu_topics, t))?;
        for f in 0..v {
            out[f][t] = frex(rp[f], rm[f], w);
        }
    }
    Ok(out)
}

/// Per-topic summary of posterior-mean rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSummary {
    /// Posterior-mean log rate, `V × K`.
    pub freq_mu: Vec<Vec<f64>>,
    /// Posterior-mean exclusivity, `V × K`.
    pub excl_phi: Vec<Vec<f64>>,
    pub frex: Vec<Vec<f64>>,
    /// Word ids per topic, best first, by FREX.
    pub by_frex: Vec<Vec<usize>>,
    /// Word ids per topic, best first, by frequency.
    pub by_freq: Vec<Vec<usize>>,
}

impl TopicSummary {
    /// `mu_nodes` is `V × N` (root included); `phi` is `V × K`.
    pub fn new(mu_nodes: &[Vec<f64>], phi: &[Vec<f64>], w: f64) -> Result<Self, EstimandError> {
        let freq_mu: Vec<Vec<f64>> = mu_nodes.iter().map(|r| r[1..].to_vec()).collect();
        let frex = frex_matrix(phi, &freq_mu, w)?;
        let by_frex = top_words_by_topic(&frex, frex.len());
        let by_freq = top_words_by_topic(&freq_mu, freq_mu.len());
        Ok(Self {
            freq_mu,
            excl_phi: phi.to_vec(),
            frex,
            by_frex,
            by_freq,
        })
    }

    pub fn n_topics(&self) -> usize {
        self.by_frex.len()
    }
}

/// Word ids by descending score; ties go to the lower id.
pub fn top_words(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// [`top_words`] for every column of a `V × K` score matrix.
pub fn top_words_by_topic(scores: &[Vec<f64>], n: usize) -> Vec<Vec<usize>> {
    let k = scores.first().map_or(0, Vec::len);
    (0..k).map(|t| top_words(&column(scores, t), n)).collect()
}

/// p(k | f) = p(f | k) p(k) / Σ_j p(f | j) p(j). Input is `K × V`, output `V × K`.
pub fn invert_conditional(
    word_given_topic: &[Vec<f64>],
    topic_priors: &[f64],
) -> Result<Vec<Vec<f64>>, EstimandError> {
    if word_given_topic.len() != topic_priors.len() {
        return Err(EstimandError::DimensionMismatch {
            expected: topic_priors.len(),
            got: word_given_topic.len(),
        });
    }
    let v = word_given_topic.first().map_or(0, Vec::len);
    (0..v)
        .map(|f| {
            let joint: Vec<f64> = word_given_topic
                .iter()
                .zip(topic_priors)
                .map(|(row, p)| row[f] * p)
                .collect();
            let s: f64 = joint.iter().sum();
            if !(s > 0.0) {
                return Err(EstimandError::ZeroDenominator { word: f });
            }
            Ok(joint.into_iter().map(|j| j / s).collect())
        })
        .collect()
}

/// Distinct words across the first `n` entries of each list, over `K · n`.
pub fn summary_diversity(lists: &[Vec<usize>], n: usize) -> Result<f64, EstimandError> {
    if lists.is_empty() || n == 0 {
        return Err(EstimandError::EmptyInput);
    }
    let mut seen = std::collections::BTreeSet::<usize>::new();
    for (t, l) in lists.iter().enumerate() {
        if l.len() < n {
            return Err(EstimandError::ListTooShort {
                topic: t,
                len: l.len(),
                needed: n,
            });
        }
        seen.extend(&l[..n]);
    }
    Ok(seen.len() as f64 / (lists.len() * n) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub word: usize,
    pub marginal_count: u64,
    /// logit of max_k β_k / Σ_j β_j over all topics.
    pub max_excl_logit: f64,
    /// Population variance of log β over topics.
    pub lograte_variance: f64,
}

/// Per-word stability coordinates from a `V × K` topic-rate matrix.
pub fn stability_profile(beta_topics: &[Vec<f64>], marginal_counts: &[u64]) -> Vec<StabilityRow> {
    const CLAMP: f64 = 1e-15;
    beta_topics
        .iter()
        .zip(marginal_counts)
        .enumerate()
        .map(|(f, (row, &count))| {
            let s: f64 = row.iter().sum();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = (max / s).clamp(CLAMP, 1.0 - CLAMP);
            let logs: Vec<f64> = row.iter().map(|b| b.ln()).collect();
            let k = logs.len() as f64;
            let mean = logs.iter().sum::<f64>() / k;
            let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / k;
            StabilityRow {
                word: f,
                marginal_count: count,
                max_excl_logit: (p / (1.0 - p)).ln(),
                lograte_variance: var,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::NodeRecord;
    use approx::assert_relative_eq;

    fn only_child_tree() -> TopicTree {
        // 0 → {1, 2}; 2 → {3}
        let recs = [(0, None), (1, Some(0)), (2, Some(0)), (3, Some(2))]
            .iter()
            .map(|&(id, parent)| NodeRecord {
                id,
                parent,
                name: format!("n{id}"),
            })
            .collect::<Vec<_>>();
        TopicTree::parse(&recs).unwrap()
    }

    #[test]
    fn sibling_sets() {
        let tree = TopicTree::balanced(&[4]);
        let s = comparison_sets(&tree, ComparisonMode::Siblings);
        for t in 0..4 {
            assert_eq!(s.get(t), &[1, 2, 3, 4]);
        }
        let s = comparison_sets(&only_child_tree(), ComparisonMode::Siblings);
        assert_eq!(s.get(2), &[2, 3]);
        assert_eq!(s.get(0), &[1, 2]);
        let s = comparison_sets(&only_child_tree(), ComparisonMode::All);
        assert!((0..3).all(|t| s.get(t).len() == 3));
    }

    #[test]
    fn exclusivity_examples() {
        let tree = TopicTree::balanced(&[4]);
        let sets = comparison_sets(&tree, ComparisonMode::Siblings);
        let phi = exclusivity(&[vec![9.0, 2.0, 2.0, 2.0, 2.0]], &sets);
        assert!(phi[0].iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let tree = TopicTree::balanced(&[2]);
        let sets = comparison_sets(&tree, ComparisonMode::Siblings);
        let phi = exclusivity(&[vec![1.0, 3.0, 1.0]], &sets);
        assert_relative_eq!(phi[0][0], 0.75);
        assert_relative_eq!(phi[0][1], 0.25);
        let scaled = exclusivity(&[vec![1.0, 30.0, 10.0]], &sets);
        assert_relative_eq!(scaled[0][0], 0.75);
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf_ranks(&[3.0, 1.0, 2.0]).unwrap(), vec![1.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(ecdf_ranks(&[1.0, 1.0, 2.0]).unwrap(), vec![2.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(ecdf_ranks(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(ecdf_ranks(&[]), Err(EstimandError::EmptyInput));
    }

    #[test]
    fn frex_examples() {
        assert_eq!(frex(1.0, 1.0, 0.5), 1.0);
        assert_relative_eq!(frex(0.5, 1.0, 0.5), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(frex(0.3, 0.9, 1.0), 0.3);
        assert_eq!(frex(0.3, 0.9, 0.0), 0.9);
    }

    #[test]
    fn inversion_examples() {
        let out = invert_conditional(&[vec![0.2], vec![0.3], vec![0.5]], &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in out[0].iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let out = invert_conditional(&[vec![0.2], vec![0.6]], &[0.75, 0.25]).unwrap();
        assert_relative_eq!(out[0][0], 0.5, epsilon = 1e-15);
        let out = invert_conditional(&[vec![0.2, 0.8], vec![0.6, 0.4]], &[1.0, 0.0]).unwrap();
        assert_eq!(out[1], vec![1.0, 0.0]);
        assert_eq!(
            invert_conditional(&[vec![0.0], vec![0.0]], &[0.5, 0.5]),
            Err(EstimandError::ZeroDenominator { word: 0 })
        );
    }

    #[test]
    fn diversity_examples() {
        let a = vec![0, 1, 2, 3, 4];
        let b = vec![3, 4, 5, 6, 7];
        assert_relative_eq!(summary_diversity(&[a.clone(), b], 5).unwrap(), 0.8);
        assert_relative_eq!(summary_diversity(&[a.clone(), a.clone(), a.clone()], 5).unwrap(), 1.0 / 3.0);
        assert!(matches!(
            summary_diversity(&[a], 6),
            Err(EstimandError::ListTooShort { .. })
        ));
    }

    #[test]
    fn top_word_ordering() {
        assert_eq!(top_words(&[0.9, 0.1, 0.5], 2), vec![0, 2]);
        assert_eq!(top_words(&[0.5, 0.5, 0.5], 3), vec![0, 1, 2]);
    }

    #[test]
    fn stability_examples() {
        let rows = stability_profile(&[vec![2.0; 4], vec![1.0, 1e-9, 1e-9, 1e-9]], &[10, 3]);
        assert_eq!(rows.len(), 2);
        assert_relative_eq!(rows[0].max_excl_logit, (0.25f64 / 0.75).ln(), epsilon = 1e-12);
        assert_eq!(rows[0].lograte_variance, 0.0);
        assert!(rows[1].max_excl_logit > 15.0);
    }
}
