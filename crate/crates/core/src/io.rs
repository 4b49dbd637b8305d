//! CSV readers and writers for trees, corpora, parameters and reports.
//!
//! A corpus directory holds `vocab.csv` (`word_id,token`), `counts.csv`
//! (`doc_id,word_id,count`), `labels.csv` (`doc_id,topic_id`) and optionally
//! `lengths.csv` (`doc_id,length`). Documents are the union of ids in
//! `lengths.csv`, `labels.csv` and `counts.csv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::classify::Prediction;
use crate::corpus::{Corpus, CorpusError, DocRecord, LoadOptions};
use crate::estimands::{StabilityRow, TopicSummary};
use crate::model::{DocParams, WordTreeParams};
use crate::sampler::{DiagnosticRow, PosteriorEstimates};
use crate::tree::{NodeRecord, TopicTree, TreeError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    rdr.deserialize()
        .map(|r| r.map_err(|e| format_err(path, e)))
        .collect()
}

/// Writes a header and rows. Empty inputs still produce the header line.
pub fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| format_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| format_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeRow {
    child_id: usize,
    parent_id: Option<usize>,
    name: String,
}

pub fn read_tree(path: &Path) -> Result<TopicTree, IoError> {
    let rows: Vec<TreeRow> = read_rows(path)?;
    let recs: Vec<NodeRecord> = rows
        .into_iter()
        .map(|r| NodeRecord {
            id: r.child_id,
            parent: r.parent_id,
            name: r.name,
        })
        .collect();
    Ok(TopicTree::parse(&recs)?)
}

pub fn write_tree(path: &Path, tree: &TopicTree) -> Result<(), IoError> {
    let rows: Vec<TreeRow> = tree
        .records()
        .into_iter()
        .map(|r| TreeRow {
            child_id: r.id,
            parent_id: r.parent,
            name: r.name,
        })
        .collect();
    write_rows(path, &["child_id", "parent_id", "name"], &rows)
}

pub const VOCAB_FILE: &str = "vocab.csv";
pub const COUNTS_FILE: &str = "counts.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const LENGTHS_FILE: &str = "lengths.csv";

#[derive(Debug, Serialize, Deserialize)]
struct VocabRow {
    word_id: usize,
    token: String,
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>, IoError> {
    let rows: Vec<VocabRow> = read_rows(path)?;
    let mut vocab = vec![None; rows.len()];
    for r in rows {
        if r.word_id >= vocab.len() || vocab[r.word_id].is_some() {
            return Err(format_err(
                path,
                format!("word ids must be 0..V-1 without repeats (saw {})", r.word_id),
            ));
        }
        vocab[r.word_id] = Some(r.token);
    }
    Ok(vocab.into_iter().map(|t| t.expect("filled")).collect())
}

pub fn write_vocab(path: &Path, vocab: &[String]) -> Result<(), IoError> {
    let rows: Vec<(usize, &str)> = vocab.iter().enumerate().map(|(i, t)| (i, t.as_str())).collect();
    write_rows(path, &["word_id", "token"], &rows)
}

/// Reads the corpus files in `dir`. With `mean_length` set, lengths are
/// normalized by it instead of the corpus mean.
pub fn read_corpus(
    dir: &Path,
    tree: &TopicTree,
    opts: LoadOptions,
    mean_length: Option<f64>,
) -> Result<Corpus, IoError> {
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let mut docs: BTreeMap<usize, DocRecord> = BTreeMap::new();
    fn entry(docs: &mut BTreeMap<usize, DocRecord>, id: usize) -> &mut DocRecord {
        docs.entry(id).or_insert_with(|| DocRecord {
            id,
            ..Default::default()
        })
    }
    let lengths = dir.join(LENGTHS_FILE);
    if lengths.exists() {
        for (id, len) in read_rows::<(usize, f64)>(&lengths)? {
            entry(&mut docs, id).length = Some(len);
        }
    }
    let labels = dir.join(LABELS_FILE);
    if labels.exists() {
        for (id, topic) in read_rows::<(usize, usize)>(&labels)? {
            entry(&mut docs, id).labels.push(topic);
        }
    }
    for (id, word, count) in read_rows::<(usize, usize, u32)>(&dir.join(COUNTS_FILE))? {
        entry(&mut docs, id).counts.push((word, count));
    }
    let records: Vec<DocRecord> = docs.into_values().collect();
    Ok(match mean_length {
        Some(m) => Corpus::with_mean_length(vocab, tree, records, opts, m)?,
        None => Corpus::new(vocab, tree, records, opts)?,
    })
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_vocab(&dir.join(VOCAB_FILE), corpus.vocab())?;
    let docs = corpus.docs();
    let counts: Vec<(usize, u32, u32)> = docs
        .iter()
        .flat_map(|d| d.counts.iter().map(move |&(w, c)| (d.id, w, c)))
        .collect();
    write_rows(&dir.join(COUNTS_FILE), &["doc_id", "word_id", "count"], &counts)?;
    let labels: Vec<(usize, usize)> = docs
        .iter()
        .flat_map(|d| d.labels.iter().map(move |&l| (d.id, l)))
        .collect();
    write_rows(&dir.join(LABELS_FILE), &["doc_id", "topic_id"], &labels)?;
    let lengths: Vec<(usize, f64)> = docs.iter().map(|d| (d.id, d.raw_length)).collect();
    write_rows(&dir.join(LENGTHS_FILE), &["doc_id", "length"], &lengths)
}

/// Ground-truth μ and τ² of simulated words.
pub fn write_word_params(dir: &Path, tree: &TopicTree, words: &[WordTreeParams]) -> Result<(), IoError> {
    let mu: Vec<(usize, usize, f64)> = words
        .iter()
        .enumerate()
        .flat_map(|(f, w)| w.mu.iter().enumerate().map(move |(n, &m)| (f, n, m)))
        .collect();
    write_rows(&dir.join("true_mu.csv"), &["word_id", "node_id", "mu"], &mu)?;
    let tau: Vec<(usize, usize, f64)> = words
        .iter()
        .enumerate()
        .flat_map(|(f, w)| {
            tree.parents()
                .iter()
                .zip(&w.tau2)
                .map(move |(&p, &t)| (f, p, t))
        })
        .collect();
    write_rows(&dir.join("true_tau2.csv"), &["word_id", "parent_id", "tau2"], &tau)
}

pub fn write_doc_params(path: &Path, doc_ids: &[usize], docs: &[DocParams]) -> Result<(), IoError> {
    let rows: Vec<(usize, usize, f64)> = doc_ids
        .iter()
        .zip(docs)
        .flat_map(|(&d, p)| p.xi.iter().enumerate().map(move |(k, &x)| (d, TopicTree::topic_node(k), x)))
        .collect();
    write_rows(path, &["doc_id", "topic_id", "xi"], &rows)
}

pub const EST_MU_FILE: &str = "est_mu.csv";
pub const EST_PHI_FILE: &str = "est_phi.csv";
pub const EST_TAU2_FILE: &str = "est_tau2.csv";
pub const EST_XI_FILE: &str = "est_xi.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Posterior-mean tables. The hyperparameter means and run metadata are
/// written separately as JSON by the caller.
pub fn write_estimates(
    dir: &Path,
    tree: &TopicTree,
    doc_ids: &[usize],
    est: &PosteriorEstimates,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut mu = Vec::new();
    for (f, row) in est.mu_mean.iter().enumerate() {
        for n in 0..row.len() {
            mu.push((f, n, row[n], est.mu_sd[f][n], est.beta_mean[f][n]));
        }
    }
    write_rows(
        &dir.join(EST_MU_FILE),
        &["word_id", "node_id", "mu_mean", "mu_sd", "beta_mean"],
        &mu,
    )?;
    let mut phi = Vec::new();
    for (f, row) in est.phi_siblings.iter().enumerate() {
        for k in 0..row.len() {
            phi.push((f, TopicTree::topic_node(k), row[k], est.phi_all[f][k]));
        }
    }
    write_rows(
        &dir.join(EST_PHI_FILE),
        &["word_id", "topic_id", "phi_siblings", "phi_all"],
        &phi,
    )?;
    let mut tau = Vec::new();
    for (f, row) in est.tau2_mean.iter().enumerate() {
        for (&p, &t) in tree.parents().iter().zip(row) {
            tau.push((f, p, t));
        }
    }
    write_rows(&dir.join(EST_TAU2_FILE), &["word_id", "parent_id", "tau2_mean"], &tau)?;
    let xi: Vec<DocParams> = est.xi_mean.iter().map(|x| DocParams { xi: x.clone() }).collect();
    write_doc_params(&dir.join(EST_XI_FILE), doc_ids, &xi)?;
    write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &est.diagnostics)
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<(), IoError> {
    let rows: Vec<(usize, &str, f64, f64)> = rows
        .iter()
        .map(|r| (r.iter, r.block.name(), r.acceptance_rate, r.mean_delta_h))
        .collect();
    write_rows(path, &["iter", "block", "acceptance_rate", "mean_delta_H"], &rows)
}

/// Rate tables read back from an estimates directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimates {
    /// `V × N`
    pub mu_mean: Vec<Vec<f64>>,
    /// `V × N`
    pub beta_mean: Vec<Vec<f64>>,
    /// `V × K`
    pub phi_siblings: Vec<Vec<f64>>,
    /// `V × K`
    pub phi_all: Vec<Vec<f64>>,
}

pub fn read_rate_estimates(dir: &Path, n_words: usize, tree: &TopicTree) -> Result<RateEstimates, IoError> {
    let n = tree.n_nodes();
    let k = tree.n_topics();
    let mut mu_mean = vec![vec![f64::NAN; n]; n_words];
    let mut beta_mean = vec![vec![f64::NAN; n]; n_words];
    let path = dir.join(EST_MU_FILE);
    for (f, node, m, _sd, b) in read_rows::<(usize, usize, f64, f64, f64)>(&path)? {
        if f >= n_words || node >= n {
            return Err(format_err(&path, format!("word {f} / node {node} out of range")));
        }
        mu_mean[f][node] = m;
        beta_mean[f][node] = b;
    }
    let mut phi_siblings = vec![vec![f64::NAN; k]; n_words];
    let mut phi_all = vec![vec![f64::NAN; k]; n_words];
    let path = dir.join(EST_PHI_FILE);
    for (f, topic, s, a) in read_rows::<(usize, usize, f64, f64)>(&path)? {
        let t = TopicTree::topic_index(topic).filter(|&t| t < k && f < n_words);
        let Some(t) = t else {
            return Err(format_err(&path, format!("word {f} / topic {topic} out of range")));
        };
        phi_siblings[f][t] = s;
        phi_all[f][t] = a;
    }
    let complete = |m: &[Vec<f64>]| m.iter().flatten().all(|v| !v.is_nan());
    if !complete(&mu_mean) || !complete(&phi_siblings) {
        return Err(format_err(dir, "estimate tables are incomplete"));
    }
    Ok(RateEstimates {
        mu_mean,
        beta_mean,
        phi_siblings,
        phi_all,
    })
}

/// One row per (topic, word), ordered by topic and then FREX rank.
pub fn write_summary(path: &Path, summary: &TopicSummary, vocab: &[String]) -> Result<(), IoError> {
    let mut rows = Vec::new();
    for (t, order) in summary.by_frex.iter().enumerate() {
        for (rank, &f) in order.iter().enumerate() {
            rows.push((
                TopicTree::topic_node(t),
                f,
                vocab[f].as_str(),
                summary.freq_mu[f][t],
                summary.excl_phi[f][t],
                summary.frex[f][t],
                rank + 1,
            ));
        }
    }
    write_rows(
        path,
        &["topic_id", "word_id", "token", "freq_mu", "excl_phi", "frex", "frex_rank"],
        &rows,
    )
}

/// The top `n` words per topic under both rankings, side by side.
pub fn write_top_words(path: &Path, summary: &TopicSummary, vocab: &[String], n: usize) -> Result<(), IoError> {
    let mut rows = Vec::new();
    for t in 0..summary.n_topics() {
        for r in 0..n.min(summary.by_frex[t].len()) {
            let (a, b) = (summary.by_frex[t][r], summary.by_freq[t][r]);
            rows.push((TopicTree::topic_node(t), r + 1, vocab[a].as_str(), vocab[b].as_str()));
        }
    }
    write_rows(path, &["topic_id", "rank", "frex_token", "frequency_token"], &rows)
}

pub fn write_diversity(path: &Path, rows: &[(usize, &str, f64)]) -> Result<(), IoError> {
    write_rows(path, &["n", "summary_type", "proportion_unique"], rows)
}

pub fn write_stability(path: &Path, rows: &[StabilityRow]) -> Result<(), IoError> {
    let rows: Vec<(usize, u64, f64, f64)> = rows
        .iter()
        .map(|r| (r.word, r.marginal_count, r.max_excl_logit, r.lograte_variance))
        .collect();
    write_rows(
        path,
        &["word_id", "marginal_count", "max_excl_logit", "lograte_variance"],
        &rows,
    )
}

pub fn write_predictions(path: &Path, doc_ids: &[usize], preds: &[Prediction]) -> Result<(), IoError> {
    let rows: Vec<(usize, usize, f64, u8)> = doc_ids
        .iter()
        .zip(preds)
        .flat_map(|(&d, p)| {
            p.probabilities
                .iter()
                .zip(&p.labels)
                .enumerate()
                .map(move |(k, (&pr, &l))| (d, TopicTree::topic_node(k), pr, l as u8))
        })
        .collect();
    write_rows(path, &["doc_id", "topic_id", "probability", "label"], &rows)
}

pub fn write_thresholds(path: &Path, thresholds: &[f64]) -> Result<(), IoError> {
    let rows: Vec<(usize, f64)> = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| (TopicTree::topic_node(k), t))
        .collect();
    write_rows(path, &["topic_id", "threshold"], &rows)
}

pub fn read_thresholds(path: &Path, n_topics: usize) -> Result<Vec<f64>, IoError> {
    let mut out = vec![f64::NAN; n_topics];
    for (topic, t) in read_rows::<(usize, f64)>(path)? {
        match TopicTree::topic_index(topic).filter(|&k| k < n_topics) {
            Some(k) if t > 0.0 && t < 1.0 => out[k] = t,
            _ => return Err(format_err(path, format!("bad threshold row ({topic}, {t})"))),
        }
    }
    if out.iter().any(|t| t.is_nan()) {
        return Err(format_err(path, "missing topics"));
    }
    Ok(out)
}

/// External `p(word | topic)` table: `topic_id,word_id,probability`, returned `K × V`.
pub fn read_word_given_topic(path: &Path, n_topics: usize, n_words: usize) -> Result<Vec<Vec<f64>>, IoError> {
    let mut m = vec![vec![0.0; n_words]; n_topics];
    for (topic, word, p) in read_rows::<(usize, usize, f64)>(path)? {
        match TopicTree::topic_index(topic).filter(|&k| k < n_topics && word < n_words) {
            Some(k) if p >= 0.0 => m[k][word] = p,
            _ => return Err(format_err(path, format!("bad row ({topic}, {word}, {p})"))),
        }
    }
    Ok(m)
}
