//! Sparse document-term counts with multi-label annotations.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::tree::TopicTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("document {doc} references unknown topic id {topic}")]
    UnknownTopicId { doc: usize, topic: usize },
    #[error("document {0} has no labels")]
    EmptyLabelSet(usize),
    #[error("document {0} has zero length")]
    ZeroLengthDocument(usize),
}

/// Raw per-document input before normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocRecord {
    pub id: usize,
    /// `(word_id, count)`; duplicates are summed.
    pub counts: Vec<(usize, u32)>,
    /// Topic node ids.
    pub labels: Vec<usize>,
    /// Explicit token total; defaults to the sum of `counts`.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Drop unlabeled documents instead of failing.
    pub drop_unlabeled: bool,
    /// Allow documents with no labels at all (prediction inputs).
    pub labels_optional: bool,
    /// Remove labels that are strict ancestors of another label.
    pub strip_ancestors: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            drop_unlabeled: false,
            labels_optional: false,
            strip_ancestors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: usize,
    /// Sorted by word id, no zero counts.
    pub counts: Vec<(u32, u32)>,
    /// Sorted topic node ids.
    pub labels: Vec<usize>,
    pub raw_length: f64,
    /// `raw_length / mean_length`
    pub norm_length: f64,
}

impl Document {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vec<String>,
    n_topics: usize,
    docs: Vec<Document>,
    mean_length: f64,
    /// Word-major transpose: `(doc index, count)` per word.
    by_word: Vec<Vec<(u32, u32)>>,
}

impl Corpus {
    /// Builds a corpus, normalizing lengths by the corpus mean.
    pub fn new(
        vocab: Vec<String>,
        tree: &TopicTree,
        records: Vec<DocRecord>,
        opts: LoadOptions,
    ) -> Result<Self, CorpusError> {
        Self::build(vocab, tree, records, opts, None)
    }

    /// Like [`Corpus::new`] but normalizes lengths by a fixed mean, e.g. the
    /// training corpus mean when preparing documents for prediction.
    pub fn with_mean_length(
        vocab: Vec<String>,
        tree: &TopicTree,
        records: Vec<DocRecord>,
        opts: LoadOptions,
        mean_length: f64,
    ) -> Result<Self, CorpusError> {
        Self::build(vocab, tree, records, opts, Some(mean_length))
    }

    fn build(
        vocab: Vec<String>,
        tree: &TopicTree,
        mut records: Vec<DocRecord>,
        opts: LoadOptions,
        fixed_mean: Option<f64>,
    ) -> Result<Self, CorpusError> {
        let n_words = vocab.len();
        records.sort_by_key(|r| r.id);
        for w in records.windows(2) {
            if w[0].id == w[1].id {
                return Err(CorpusError::MalformedRecord(format!(
                    "duplicate document id {}",
                    w[0].id
                )));
            }
        }

        let mut docs = Vec::with_capacity(records.len());
        for rec in records {
            let mut merged: BTreeMap<u32, u32> = BTreeMap::new();
            for &(word, c) in &rec.counts {
                if word >= n_words {
                    return Err(CorpusError::MalformedRecord(format!(
                        "document {} word id {} >= vocabulary size {}",
                        rec.id, word, n_words
                    )));
                }
                if c > 0 {
                    *merged.entry(word as u32).or_default() += c;
                }
            }
            let counts: Vec<(u32, u32)> = merged.into_iter().collect();

            let mut labels = BTreeSet::new();
            for &topic in &rec.labels {
                if !tree.is_topic(topic) {
                    return Err(CorpusError::UnknownTopicId {
                        doc: rec.id,
                        topic,
                    });
                }
                labels.insert(topic);
            }
            let mut labels: Vec<usize> = labels.into_iter().collect();
            if opts.strip_ancestors {
                labels = strip_redundant_ancestors(&labels, tree)?;
            }
            if labels.is_empty() && !opts.labels_optional {
                if opts.drop_unlabeled {
                    continue;
                }
                return Err(CorpusError::EmptyLabelSet(rec.id));
            }

            let total: u64 = counts.iter().map(|&(_, c)| c as u64).sum();
            let raw_length = match rec.length {
                Some(len) if !(len >= 0.0) || !len.is_finite() => {
                    return Err(CorpusError::MalformedRecord(format!(
                        "document {} has invalid length {}",
                        rec.id, len
                    )))
                }
                Some(len) => len,
                None => total as f64,
            };
            if raw_length <= 0.0 {
                return Err(CorpusError::ZeroLengthDocument(rec.id));
            }
            docs.push(Document {
                id: rec.id,
                counts,
                labels,
                raw_length,
                norm_length: 0.0,
            });
        }

        let mean_length = match fixed_mean {
            Some(m) => m,
            None if docs.is_empty() => 0.0,
            None => docs.iter().map(|d| d.raw_length).sum::<f64>() / docs.len() as f64,
        };
        if !docs.is_empty() && !(mean_length > 0.0) {
            return Err(CorpusError::MalformedRecord(format!(
                "mean document length must be positive, got {mean_length}"
            )));
        }
        for d in &mut docs {
            d.norm_length = d.raw_length / mean_length;
        }

        let mut by_word = vec![Vec::new(); n_words];
        for (di, d) in docs.iter().enumerate() {
            for &(w, c) in &d.counts {
                by_word[w as usize].push((di as u32, c));
            }
        }

        Ok(Self {
            vocab,
            n_topics: tree.n_topics(),
            docs,
            mean_length,
            by_word,
        })
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, d: usize) -> &Document {
        &self.docs[d]
    }

    pub fn mean_length(&self) -> f64 {
        self.mean_length
    }

    pub fn word_occurrences(&self, word: usize) -> &[(u32, u32)] {
        &self.by_word[word]
    }

    /// Total count of each word over the corpus.
    pub fn word_totals(&self) -> Vec<u64> {
        self.by_word
            .iter()
            .map(|occ| occ.iter().map(|&(_, c)| c as u64).sum())
            .collect()
    }

    /// Binary `D × K` label indicator, topic index `k` ↔ node `k + 1`.
    pub fn label_matrix(&self) -> Vec<Vec<bool>> {
        self.docs
            .iter()
            .map(|d| {
                let mut row = vec![false; self.n_topics];
                for &node in &d.labels {
                    row[node - 1] = true;
                }
                row
            })
            .collect()
    }

    /// Records that rebuild this corpus exactly (lengths are explicit).
    pub fn to_records(&self) -> Vec<DocRecord> {
        self.docs
            .iter()
            .map(|d| DocRecord {
                id: d.id,
                counts: d.counts.iter().map(|&(w, c)| (w as usize, c)).collect(),
                labels: d.labels.clone(),
                length: Some(d.raw_length),
            })
            .collect()
    }
}

/// Removes every label that is a strict ancestor of another label in the set.
pub fn strip_redundant_ancestors(
    labels: &[usize],
    tree: &TopicTree,
) -> Result<Vec<usize>, CorpusError> {
    for &l in labels {
        if !tree.is_topic(l) {
            return Err(CorpusError::UnknownTopicId { doc: 0, topic: l });
        }
    }
    let set: BTreeSet<usize> = labels.iter().copied().collect();
    Ok(set
        .iter()
        .copied()
        .filter(|&a| !set.iter().any(|&b| b != a && tree.is_strict_ancestor(a, b)))
        .collect())
}

/// Per-topic mixed-membership statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipRow {
    pub topic: usize,
    pub n_docs: usize,
    /// Fraction of the topic's documents carrying any other label.
    pub any_mm: f64,
    /// `cross_branch[x - 1]`: fraction co-labeled to a topic whose deepest
    /// common ancestor with this one sits at depth `x - 1`, i.e. the two
    /// labels first split at level `x`.
    pub cross_branch: Vec<f64>,
}

pub fn membership_stats(corpus: &Corpus, tree: &TopicTree) -> Vec<MembershipRow> {
    let levels = tree.max_depth();
    let mut n_docs = vec![0usize; tree.n_nodes()];
    let mut any = vec![0usize; tree.n_nodes()];
    let mut cross = vec![vec![0usize; levels]; tree.n_nodes()];

    for d in corpus.docs() {
        for &k in &d.labels {
            n_docs[k] += 1;
            if d.labels.len() > 1 {
                any[k] += 1;
            }
            let mut hit = vec![false; levels];
            for &j in &d.labels {
                if j != k {
                    let dca = tree.deepest_common_ancestor(k, j);
                    let lvl = tree.depth(dca);
                    if lvl < levels {
                        hit[lvl] = true;
                    }
                }
            }
            for (c, h) in cross[k].iter_mut().zip(hit) {
                *c += h as usize;
            }
        }
    }

    (1..tree.n_nodes())
        .map(|k| {
            let n = n_docs[k];
            let frac = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
            MembershipRow {
                topic: k,
                n_docs: n,
                any_mm: frac(any[k]),
                cross_branch: cross[k].iter().map(|&c| frac(c)).collect(),
            }
        })
        .collect()
}
