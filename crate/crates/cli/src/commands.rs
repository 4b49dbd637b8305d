use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use hpc_core::checkgrad::{run_checks, CheckConfig};
use hpc_core::classify::{
    calibrate_thresholds, classification_metrics, predict_corpus, PredictiveModel,
};
use hpc_core::corpus::{Corpus, LoadOptions};
use hpc_core::estimands::{
    frex_matrix, invert_conditional, stability_profile, summary_diversity, top_words_by_topic,
    ComparisonMode, TopicSummary,
};
use hpc_core::io::{self, RateEstimates};
use hpc_core::model::{simulate_corpus, simulate_held_out, BetaTable, GenerativeConfig, Hyperparams};
use hpc_core::sampler::{run_chain_checkpointed, Checkpoint, SamplerConfig};
use hpc_core::tree::TopicTree;

use crate::args::*;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::settings::Settings;

pub const TREE_FILE: &str = "tree.csv";
pub const ESTIMATES_META_FILE: &str = "estimates.json";
pub const WORD_TOTALS_FILE: &str = "word_totals.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
/// Summary lengths of the diversity table.
pub const DIVERSITY_LENGTHS: [usize; 4] = [5, 10, 25, 50];

pub struct Context {
    pub seed: u64,
    pub parallelism: usize,
    pub settings: Settings,
    pub strip_ancestors: bool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_options(ctx: &Context) -> LoadOptions {
    LoadOptions {
        strip_ancestors: ctx.strip_ancestors,
        ..LoadOptions::default()
    }
}

fn parse_mode(mode: &str) -> Result<ComparisonMode, CliError> {
    mode.parse().map_err(CliError::Config)
}

fn check_weight(w: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(CliError::Config(format!("FREX weight must lie in [0, 1], got {w}")))
    }
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> Result<(), CliError> {
    let mut sim = ctx.settings.simulate.clone();
    sim.n_docs = args.docs.unwrap_or(sim.n_docs);
    sim.n_words = args.words.unwrap_or(sim.n_words);
    sim.held_out = args.held_out.unwrap_or(sim.held_out);
    let mut m = RunManifest::new(
        "simulate",
        Some(ctx.seed),
        ctx.parallelism,
        json!({ "simulate": sim, "hyper": ctx.settings.hyper }),
    );
    let tree = match &args.tree {
        Some(p) => {
            m.add_input(p)?;
            io::read_tree(p)?
        }
        None => {
            if sim.levels.is_empty() || sim.levels.contains(&0) {
                return Err(CliError::Config("simulate.levels must be nonempty and positive".into()));
            }
            TopicTree::balanced(&sim.levels)
        }
    };
    let h = &ctx.settings.hyper;
    let hyper = Hyperparams {
        psi: h.psi,
        gamma2: h.gamma2,
        nu: h.nu,
        sigma2: h.sigma2,
        eta: h.eta.resolve(tree.n_topics())?,
        lambda2: h.lambda2,
    };
    let gen = GenerativeConfig {
        n_docs: sim.n_docs,
        n_words: sim.n_words,
        length_rate: sim.length_rate,
        mean_length: sim.mean_length,
        seed: ctx.seed,
    };
    let s = m.time("simulate", || simulate_corpus(&tree, &hyper, &gen))?;
    let held = if sim.held_out > 0 {
        Some(m.time("simulate_held_out", || {
            simulate_held_out(&tree, &hyper, &s.words, &gen, sim.held_out)
        })?)
    } else {
        None
    };

    let out = &args.out;
    create_dir(out)?;
    let start = std::time::Instant::now();
    io::write_corpus(out, &s.corpus)?;
    io::write_tree(&out.join(TREE_FILE), &tree)?;
    io::write_word_params(out, &tree, &s.words)?;
    let ids: Vec<usize> = s.corpus.docs().iter().map(|d| d.id).collect();
    io::write_doc_params(&out.join("true_xi.csv"), &ids, &s.docs)?;
    write_json(&out.join("true_hyper.json"), &hyper)?;
    if let Some((corpus, docs)) = held {
        let dir = out.join("held_out");
        io::write_corpus(&dir, &corpus)?;
        io::write_tree(&dir.join(TREE_FILE), &tree)?;
        let ids: Vec<usize> = corpus.docs().iter().map(|d| d.id).collect();
        io::write_doc_params(&dir.join("true_xi.csv"), &ids, &docs)?;
    }
    m.timings.push(("write".into(), start.elapsed().as_secs_f64()));
    m.finish(out)
}

/// Run metadata stored next to the estimate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesMeta {
    pub hyper_mean: Hyperparams,
    pub n_draws: usize,
    pub word_acceptance: f64,
    pub doc_acceptance: f64,
    pub tau_acceptance: f64,
    /// Raw-length normalizer of the training corpus; new documents use it too.
    pub mean_length: f64,
    pub n_words: usize,
    pub n_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct SavedCheckpoint {
    /// Digest of the corpus and tree files the chain was run on.
    inputs_digest: String,
    checkpoint: Checkpoint,
}

fn inputs_digest(m: &RunManifest) -> String {
    let joined: String = m.inputs.values().map(|d| format!("{d}\n")).collect();
    use sha2::Digest;
    sha2::Sha256::digest(joined.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn save_checkpoint(path: &Path, saved: &SavedCheckpoint) -> Result<(), String> {
    let bytes = bincode::serialize(saved).map_err(|e| e.to_string())?;
    let tmp = path.with_extension("bin.tmp");
    std::fs::write(&tmp, bytes).map_err(|e| e.to_string())?;
    std::fs::rename(&tmp, path).map_err(|e| e.to_string())
}

fn load_checkpoint(path: &Path) -> Result<SavedCheckpoint, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    bincode::deserialize(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn fit(ctx: &Context, args: &FitArgs) -> Result<(), CliError> {
    let s = &ctx.settings.sampler;
    let config = SamplerConfig {
        n_iterations: args.iterations.unwrap_or(s.n_iterations),
        burn_in: args.burn_in.unwrap_or(s.burn_in),
        leapfrog_steps: s.leapfrog_steps,
        stepsize: s.stepsize,
        hessian_refresh_period: s.hessian_refresh_period,
        seed: ctx.seed,
        parallelism_width: ctx.parallelism,
        adapt_stepsize: s.adapt_stepsize,
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let every = args.checkpoint_every.unwrap_or(s.checkpoint_every);
    let mut m = RunManifest::new(
        "fit",
        Some(ctx.seed),
        ctx.parallelism,
        json!({ "sampler": config, "checkpoint_every": every, "strip_ancestors": ctx.strip_ancestors,
                "drop_unlabeled": args.drop_unlabeled }),
    );
    let tree_path = args.tree.clone().unwrap_or_else(|| args.corpus.join(TREE_FILE));
    m.add_input(&tree_path)?;
    m.add_input(&args.corpus)?;
    let digest = inputs_digest(&m);

    let (tree, corpus) = m.time("load", || -> Result<_, CliError> {
        let tree = io::read_tree(&tree_path)?;
        let opts = LoadOptions {
            drop_unlabeled: args.drop_unlabeled,
            ..load_options(ctx)
        };
        let corpus = io::read_corpus(&args.corpus, &tree, opts, None)?;
        Ok((tree, corpus))
    })?;

    let out = &args.out;
    create_dir(out)?;
    let cp_path = out.join(CHECKPOINT_FILE);
    let resume = if args.resume {
        let saved = load_checkpoint(&cp_path)?;
        if saved.inputs_digest != digest {
            return Err(CliError::Config("checkpoint was written for different input files".into()));
        }
        m.notes.push(format!("resumed from scan {}", saved.checkpoint.state.iteration));
        Some(saved.checkpoint)
    } else {
        None
    };
    let est = m.time("fit", || {
        run_chain_checkpointed(&corpus, &tree, &config, resume, every, |cp| {
            save_checkpoint(
                &cp_path,
                &SavedCheckpoint {
                    inputs_digest: digest.clone(),
                    checkpoint: cp.clone(),
                },
            )
        })
    })?;

    let start = std::time::Instant::now();
    io::write_tree(&out.join(TREE_FILE), &tree)?;
    io::write_vocab(&out.join(io::VOCAB_FILE), corpus.vocab())?;
    let totals: Vec<(usize, u64)> = corpus.word_totals().into_iter().enumerate().collect();
    io::write_rows(&out.join(WORD_TOTALS_FILE), &["word_id", "count"], &totals)?;
    let ids: Vec<usize> = corpus.docs().iter().map(|d| d.id).collect();
    io::write_estimates(out, &tree, &ids, &est)?;
    write_json(
        &out.join(ESTIMATES_META_FILE),
        &EstimatesMeta {
            hyper_mean: est.hyper_mean.clone(),
            n_draws: est.n_draws,
            word_acceptance: est.word_acceptance,
            doc_acceptance: est.doc_acceptance,
            tau_acceptance: est.tau_acceptance,
            mean_length: corpus.mean_length(),
            n_words: corpus.n_words(),
            n_docs: corpus.n_docs(),
        },
    )?;
    m.timings.push(("write".into(), start.elapsed().as_secs_f64()));
    m.finish(out)
}

/// Everything `fit` leaves in its output directory.
pub struct Fitted {
    pub tree: TopicTree,
    pub vocab: Vec<String>,
    pub word_totals: Vec<u64>,
    pub rates: RateEstimates,
    pub meta: EstimatesMeta,
}

pub fn load_fitted(dir: &Path, m: &mut RunManifest) -> Result<Fitted, CliError> {
    m.add_input(dir)?;
    let tree = io::read_tree(&dir.join(TREE_FILE))?;
    let vocab = io::read_vocab(&dir.join(io::VOCAB_FILE))?;
    let mut word_totals = vec![0u64; vocab.len()];
    let path = dir.join(WORD_TOTALS_FILE);
    for (f, c) in io::read_rows::<(usize, u64)>(&path)? {
        *word_totals
            .get_mut(f)
            .ok_or_else(|| CliError::Io(format!("{}: word {f} out of range", path.display())))? = c;
    }
    let rates = io::read_rate_estimates(dir, vocab.len(), &tree)?;
    let meta: EstimatesMeta = read_json(&dir.join(ESTIMATES_META_FILE))?;
    if meta.hyper_mean.eta.len() != tree.n_topics() {
        return Err(CliError::Io(format!("{}: eta does not match the tree", dir.display())));
    }
    Ok(Fitted {
        tree,
        vocab,
        word_totals,
        rates,
        meta,
    })
}

fn diversity_rows(
    label: &'static str,
    lists: &[Vec<usize>],
    n_words: usize,
    rows: &mut Vec<(usize, &'static str, f64)>,
) -> Result<(), CliError> {
    for n in DIVERSITY_LENGTHS.into_iter().filter(|&n| n <= n_words) {
        rows.push((n, label, summary_diversity(lists, n)?));
    }
    Ok(())
}

pub fn summarize(ctx: &Context, args: &SummarizeArgs) -> Result<(), CliError> {
    let set = &ctx.settings.summarize;
    let w = check_weight(args.w.unwrap_or(set.w))?;
    let n = args.n.unwrap_or(set.n);
    let mode_name = args.mode.clone().unwrap_or_else(|| set.mode.clone());
    let mode = parse_mode(&mode_name)?;
    let mut m = RunManifest::new(
        "summarize",
        None,
        ctx.parallelism,
        json!({ "w": w, "n": n, "mode": mode_name }),
    );
    let fitted = load_fitted(&args.estimates, &mut m)?;
    let v = fitted.vocab.len();
    if n == 0 || n > v {
        return Err(CliError::Config(format!("n must lie in 1..={v}, got {n}")));
    }
    let phi = match mode {
        ComparisonMode::Siblings => &fitted.rates.phi_siblings,
        ComparisonMode::All => &fitted.rates.phi_all,
    };
    let (summary, stability) = m.time("summarize", || -> Result<_, CliError> {
        let summary = TopicSummary::new(&fitted.rates.mu_mean, phi, w)?;
        let beta_topics: Vec<Vec<f64>> = fitted.rates.beta_mean.iter().map(|r| r[1..].to_vec()).collect();
        Ok((summary, stability_profile(&beta_topics, &fitted.word_totals)))
    })?;
    let mut rows = Vec::new();
    diversity_rows("frex", &summary.by_frex, v, &mut rows)?;
    diversity_rows("frequency", &summary.by_freq, v, &mut rows)?;

    let out = &args.out;
    create_dir(out)?;
    io::write_summary(&out.join("summary.csv"), &summary, &fitted.vocab)?;
    io::write_top_words(&out.join("top_words.csv"), &summary, &fitted.vocab, n)?;
    io::write_diversity(&out.join("diversity.csv"), &rows)?;
    io::write_stability(&out.join("stability.csv"), &stability)?;
    m.finish(out)
}

fn predictive_model(fitted: &Fitted) -> PredictiveModel {
    PredictiveModel::new(
        BetaTable::from_rows(&fitted.rates.beta_mean),
        fitted.meta.hyper_mean.eta.clone(),
        fitted.meta.hyper_mean.lambda2,
    )
}

fn load_target_corpus(ctx: &Context, dir: &Path, fitted: &Fitted, labels_optional: bool) -> Result<Corpus, CliError> {
    let opts = LoadOptions {
        labels_optional,
        ..load_options(ctx)
    };
    let corpus = io::read_corpus(dir, &fitted.tree, opts, Some(fitted.meta.mean_length))?;
    if corpus.n_words() != fitted.vocab.len() {
        return Err(CliError::Io(format!(
            "{}: vocabulary has {} words, the fitted model {}",
            dir.display(),
            corpus.n_words(),
            fitted.vocab.len()
        )));
    }
    Ok(corpus)
}

/// Label matrix aligned with `corpus`, from `doc_id,topic_id` rows.
fn read_truth(path: &Path, corpus: &Corpus) -> Result<Vec<Vec<bool>>, CliError> {
    let k = corpus.n_topics();
    let index: BTreeMap<usize, usize> = corpus.docs().iter().enumerate().map(|(i, d)| (d.id, i)).collect();
    let mut truth = vec![vec![false; k]; corpus.n_docs()];
    for (doc, topic) in io::read_rows::<(usize, usize)>(path)? {
        let t = TopicTree::topic_index(topic)
            .filter(|&t| t < k)
            .ok_or_else(|| CliError::Io(format!("{}: {topic} is not a topic", path.display())))?;
        if let Some(&d) = index.get(&doc) {
            truth[d][t] = true;
        }
    }
    Ok(truth)
}

pub fn classify(ctx: &Context, args: &ClassifyArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new(
        "classify",
        None,
        ctx.parallelism,
        json!({ "strip_ancestors": ctx.strip_ancestors }),
    );
    let fitted = load_fitted(&args.estimates, &mut m)?;
    m.add_input(&args.corpus)?;
    let mut model = predictive_model(&fitted);
    match &args.thresholds {
        Some(p) => {
            m.add_input(p)?;
            model.thresholds = io::read_thresholds(p, fitted.tree.n_topics())?;
        }
        None => m.notes.push("no thresholds file; 0.5 used for every topic".into()),
    }
    if let Some(p) = &args.truth {
        m.add_input(p)?;
    }
    let corpus = load_target_corpus(ctx, &args.corpus, &fitted, true)?;
    let preds = m.time("predict", || predict_corpus(&corpus, &model))?;

    let out = &args.out;
    create_dir(out)?;
    let ids: Vec<usize> = corpus.docs().iter().map(|d| d.id).collect();
    io::write_predictions(&out.join("predictions.csv"), &ids, &preds)?;
    if let Some(p) = &args.truth {
        let truth = read_truth(p, &corpus)?;
        let labels: Vec<Vec<bool>> = preds.iter().map(|p| p.labels.clone()).collect();
        write_json(&out.join("metrics.json"), &classification_metrics(&labels, &truth)?)?;
    }
    m.finish(out)
}

pub fn calibrate(ctx: &Context, args: &CalibrateArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new(
        "calibrate",
        None,
        ctx.parallelism,
        json!({ "strip_ancestors": ctx.strip_ancestors }),
    );
    let fitted = load_fitted(&args.estimates, &mut m)?;
    m.add_input(&args.corpus)?;
    let mut model = predictive_model(&fitted);
    let corpus = load_target_corpus(ctx, &args.corpus, &fitted, false)?;
    let mut preds = m.time("predict", || predict_corpus(&corpus, &model))?;
    let probs: Vec<Vec<f64>> = preds.iter().map(|p| p.probabilities.clone()).collect();
    let truth = corpus.label_matrix();
    model.thresholds = calibrate_thresholds(&probs, &truth)?;
    for p in &mut preds {
        p.labels = p.probabilities.iter().zip(&model.thresholds).map(|(p, t)| p >= t).collect();
    }
    let labels: Vec<Vec<bool>> = preds.iter().map(|p| p.labels.clone()).collect();

    let out = &args.out;
    create_dir(out)?;
    io::write_thresholds(&out.join("thresholds.csv"), &model.thresholds)?;
    let ids: Vec<usize> = corpus.docs().iter().map(|d| d.id).collect();
    io::write_predictions(&out.join("validation_predictions.csv"), &ids, &preds)?;
    write_json(&out.join("metrics.json"), &classification_metrics(&labels, &truth)?)?;
    m.finish(out)
}

/// `K × V` external table whose rows must be distributions.
fn read_external(path: &Path, n_words: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let rows: Vec<(usize, usize, f64)> = io::read_rows(path)?;
    let k = rows
        .iter()
        .filter_map(|r| TopicTree::topic_index(r.0))
        .max()
        .map_or(0, |t| t + 1);
    if k == 0 {
        return Err(CliError::Io(format!("{}: no topics", path.display())));
    }
    let m = io::read_word_given_topic(path, k, n_words)?;
    for (t, row) in m.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(CliError::Io(format!(
                "{}: probabilities of topic {} sum to {s}",
                path.display(),
                TopicTree::topic_node(t)
            )));
        }
    }
    Ok(m)
}

fn read_priors(path: Option<&PathBuf>, k: usize) -> Result<Vec<f64>, CliError> {
    let Some(path) = path else {
        return Ok(vec![1.0 / k as f64; k]);
    };
    let mut priors = vec![f64::NAN; k];
    for (topic, p) in io::read_rows::<(usize, f64)>(path)? {
        match TopicTree::topic_index(topic).filter(|&t| t < k) {
            Some(t) if p >= 0.0 => priors[t] = p,
            _ => return Err(CliError::Io(format!("{}: bad row ({topic}, {p})", path.display()))),
        }
    }
    let s: f64 = priors.iter().sum();
    if !((s - 1.0).abs() <= 1e-6) {
        return Err(CliError::Io(format!("{}: priors must cover every topic and sum to 1", path.display())));
    }
    Ok(priors)
}

pub fn diversity(ctx: &Context, args: &DiversityArgs) -> Result<(), CliError> {
    let set = &ctx.settings.summarize;
    let w = check_weight(args.w.unwrap_or(set.w))?;
    let mode_name = args.mode.clone().unwrap_or_else(|| set.mode.clone());
    let mode = parse_mode(&mode_name)?;
    let mut m = RunManifest::new("diversity", None, ctx.parallelism, json!({ "w": w, "mode": mode_name }));
    let fitted = load_fitted(&args.estimates, &mut m)?;
    let v = fitted.vocab.len();
    let phi = match mode {
        ComparisonMode::Siblings => &fitted.rates.phi_siblings,
        ComparisonMode::All => &fitted.rates.phi_all,
    };
    let summary = TopicSummary::new(&fitted.rates.mu_mean, phi, w)?;
    let mut rows = Vec::new();
    diversity_rows("frex", &summary.by_frex, v, &mut rows)?;
    diversity_rows("frequency", &summary.by_freq, v, &mut rows)?;

    if let Some(path) = &args.external {
        m.add_input(path)?;
        if let Some(p) = &args.priors {
            m.add_input(p)?;
        }
        let word_given_topic = read_external(path, v)?;
        let priors = read_priors(args.priors.as_ref(), word_given_topic.len())?;
        let topic_given_word = invert_conditional(&word_given_topic, &priors)?;
        // rank-equivalent to the log rates
        let freq: Vec<Vec<f64>> = (0..v).map(|f| word_given_topic.iter().map(|r| r[f]).collect()).collect();
        let frex = frex_matrix(&topic_given_word, &freq, w)?;
        diversity_rows("external_frex", &top_words_by_topic(&frex, v), v, &mut rows)?;
        diversity_rows("external_frequency", &top_words_by_topic(&freq, v), v, &mut rows)?;
    }

    let out = &args.out;
    create_dir(out)?;
    io::write_diversity(&out.join("diversity.csv"), &rows)?;
    m.finish(out)
}

pub fn check_grad(ctx: &Context, args: &CheckGradArgs) -> Result<(), CliError> {
    if args.points == 0 || args.words == 0 || args.levels.is_empty() || args.levels.contains(&0) {
        return Err(CliError::Config("points, words and every level size must be positive".into()));
    }
    let cfg = CheckConfig {
        seed: ctx.seed,
        n_points: args.points,
        n_words: args.words,
        n_docs: args.docs,
        level_sizes: args.levels.clone(),
        corrupt: args.corrupt,
    };
    let mut m = RunManifest::new("check-grad", Some(ctx.seed), ctx.parallelism, &cfg);
    let report = m.time("checks", || run_checks(&cfg));
    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        create_dir(out)?;
        let rows: Vec<(&str, usize, f64, f64, bool)> = report
            .checks
            .iter()
            .map(|c| (c.name.as_str(), c.points, c.max_relative_error, c.tolerance, c.passed()))
            .collect();
        io::write_rows(
            &out.join("checkgrad.csv"),
            &["check", "points", "max_relative_error", "tolerance", "passed"],
            &rows,
        )?;
        m.finish(out)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed("derivative checks failed".into()))
    }
}
