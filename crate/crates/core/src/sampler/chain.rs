//! The block Gibbs scan and the chain driver.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conjugate::{draw_gamma2_psi, draw_lambda2_eta, tau2_conditional};
use super::hmc::{schmc_update, ConditionalTarget, HmcSettings, HmcStep};
use super::{ConfigError, SamplerConfig, SamplerError};
use crate::corpus::Corpus;
use crate::density::LogDensity;
use crate::estimands::{comparison_sets, exclusivity, ComparisonMode};
use crate::model::{
    exposure, AffinityTarget, BetaTable, DocParams, Hyperparams, RateData, RateTarget,
    SparseTheta, TauHyperDensity, WordTreeParams,
};
use crate::rng::{substream, Stream};
use crate::tree::{build_precision, TopicTree};

/// Initial ν and σ² of the τ² prior. All initial τ² coincide, so moments of
/// the initial state carry no information about them.
pub const INIT_NU: f64 = 4.0;
pub const INIT_SIGMA2: f64 = 0.5;
/// Lower bound on the moment-matched initial γ² and λ².
pub const INIT_VARIANCE_FLOOR: f64 = 0.1;
/// A block's stepsize is halved during burn-in when its acceptance rate in a
/// scan drops below this.
pub const ADAPT_TARGET: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Word,
    Doc,
    TauHyper,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Word => "word",
            Block::Doc => "doc",
            Block::TauHyper => "tau_hyper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockCounter {
    pub accepted: u64,
    pub proposed: u64,
}

impl BlockCounter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub iter: usize,
    pub block: Block,
    pub acceptance_rate: f64,
    /// Mean |H* − H₀| over the block's finite trajectories.
    pub mean_delta_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub words: Vec<WordTreeParams>,
    pub docs: Vec<DocParams>,
    pub hyper: Hyperparams,
    /// Likelihood Hessians cached at the last scheduled mode.
    pub word_hessians: Vec<Option<DMatrix<f64>>>,
    pub doc_hessians: Vec<Option<DMatrix<f64>>>,
    pub tau_hessian: Option<DMatrix<f64>>,
    /// Completed scans.
    pub iteration: usize,
    pub word_counter: BlockCounter,
    pub doc_counter: BlockCounter,
    pub tau_counter: BlockCounter,
    pub word_stepsize: f64,
    pub doc_stepsize: f64,
    pub tau_stepsize: f64,
}

impl ChainState {
    /// State from given parameters, with empty Hessian caches.
    pub fn from_parts(
        words: Vec<WordTreeParams>,
        docs: Vec<DocParams>,
        hyper: Hyperparams,
        stepsize: f64,
    ) -> Self {
        Self {
            word_hessians: vec![None; words.len()],
            doc_hessians: vec![None; docs.len()],
            tau_hessian: None,
            words,
            docs,
            hyper,
            iteration: 0,
            word_counter: BlockCounter::default(),
            doc_counter: BlockCounter::default(),
            tau_counter: BlockCounter::default(),
            word_stepsize: stepsize,
            doc_stepsize: stepsize,
            tau_stepsize: stepsize,
        }
    }

    /// Data-driven starting point: every node of word f starts at
    /// log(count_f / total exposure + 1e-8), τ² at the prior scale, ξ at +1
    /// for labels and −2 otherwise, and ψ, γ², η, λ² at the moments of those.
    pub fn initial(corpus: &Corpus, tree: &TopicTree, stepsize: f64) -> Self {
        let total_exposure: f64 = corpus.docs().iter().map(|d| d.norm_length).sum();
        let words: Vec<WordTreeParams> = corpus
            .word_totals()
            .iter()
            .map(|&c| {
                let m = (c as f64 / total_exposure.max(f64::MIN_POSITIVE) + 1e-8).ln();
                WordTreeParams {
                    mu: vec![m; tree.n_nodes()],
                    tau2: vec![INIT_SIGMA2; tree.n_parents()],
                }
            })
            .collect();
        let k = tree.n_topics();
        let docs: Vec<DocParams> = corpus
            .docs()
            .iter()
            .map(|d| {
                let mut xi = vec![-2.0; k];
                for &n in &d.labels {
                    xi[n - 1] = 1.0;
                }
                DocParams { xi }
            })
            .collect();

        let roots: Vec<f64> = words.iter().map(|w| w.mu[TopicTree::ROOT]).collect();
        let (psi, gamma2) = mean_var(&roots);
        let mut eta = vec![0.0; k];
        let mut ss = 0.0;
        if !docs.is_empty() {
            for d in &docs {
                for (e, x) in eta.iter_mut().zip(&d.xi) {
                    *e += x;
                }
            }
            eta.iter_mut().for_each(|e| *e /= docs.len() as f64);
            for d in &docs {
                ss += d.xi.iter().zip(&eta).map(|(x, e)| (x - e).powi(2)).sum::<f64>();
            }
            ss /= (docs.len() * k.max(1)) as f64;
        }
        let hyper = Hyperparams {
            psi,
            gamma2: gamma2.max(INIT_VARIANCE_FLOOR),
            nu: INIT_NU,
            sigma2: INIT_SIGMA2,
            eta,
            lambda2: ss.max(INIT_VARIANCE_FLOOR),
        };
        Self::from_parts(words, docs, hyper, stepsize)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

impl ConditionalTarget for RateTarget<'_> {
    fn likelihood_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        RateTarget::likelihood_hessian(self, x)
    }

    fn prior_hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        RateTarget::prior_hessian(self)
    }
}

impl ConditionalTarget for AffinityTarget<'_> {
    fn likelihood_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        AffinityTarget::likelihood_hessian(self, x)
    }

    fn prior_hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        AffinityTarget::prior_hessian(self)
    }
}

/// Density of (log κ_τ, log λ_τ) given the current τ² draws.
struct TauLogTarget(TauHyperDensity);

impl LogDensity for TauLogTarget {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.0.value_log(x[0], x[1])
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&self.0.grad_log(x[0], x[1]));
    }
}

impl ConditionalTarget for TauLogTarget {
    fn likelihood_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let h = self.0.hess_log(x[0], x[1]);
        DMatrix::from_fn(2, 2, |i, j| h[(i, j)])
    }

    fn prior_hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }

    fn mode(&self, start: &[f64]) -> Vec<f64> {
        match self.0.profile_mode() {
            Ok((k, l)) => vec![k.ln(), l.ln()],
            Err(e) => {
                log::warn!("tau hyperparameter mode unavailable: {e}");
                start.to_vec()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct StepTally {
    accepted: u64,
    proposed: u64,
    sum_abs_dh: f64,
    n_finite: u64,
}

impl StepTally {
    fn add(&mut self, s: &HmcStep) {
        self.proposed += 1;
        self.accepted += s.accepted as u64;
        if s.delta_h.is_finite() {
            self.sum_abs_dh += s.delta_h.abs();
            self.n_finite += 1;
        }
    }

    fn row(&self, iter: usize, block: Block) -> DiagnosticRow {
        DiagnosticRow {
            iter,
            block,
            acceptance_rate: if self.proposed == 0 {
                0.0
            } else {
                self.accepted as f64 / self.proposed as f64
            },
            mean_delta_h: if self.n_finite == 0 {
                f64::NAN
            } else {
                self.sum_abs_dh / self.n_finite as f64
            },
        }
    }
}

fn doc_thetas(state: &ChainState, corpus: &Corpus) -> Result<Vec<SparseTheta>, SamplerError> {
    corpus
        .docs()
        .iter()
        .zip(&state.docs)
        .map(|(d, p)| SparseTheta::from_labels(&p.xi, &d.labels).map_err(SamplerError::from))
        .collect()
}

/// Draws τ²_f and then μ_f for every word, given the current affinities.
pub fn update_word_block(
    state: &mut ChainState,
    corpus: &Corpus,
    tree: &TopicTree,
    config: &SamplerConfig,
    scan: usize,
) -> Result<DiagnosticRow, SamplerError> {
    let thetas = doc_thetas(state, corpus)?;
    let lengths: Vec<f64> = corpus.docs().iter().map(|d| d.norm_length).collect();
    let expo = exposure(tree.n_nodes(), &lengths, &thetas);
    let hyper = &state.hyper;
    let refresh = config.in_schedule(scan);
    let settings = HmcSettings {
        leapfrog_steps: config.leapfrog_steps,
        stepsize: state.word_stepsize,
    };

    let steps: Vec<HmcStep> = state
        .words
        .par_iter_mut()
        .zip(state.word_hessians.par_iter_mut())
        .enumerate()
        .map(|(f, (w, cache))| {
            let mut rng = substream(config.seed, Stream::WordBlock, scan as u64, f as u64);
            for (slot, &p) in tree.parents().iter().enumerate() {
                let children: Vec<f64> = tree.children(p).iter().map(|&c| w.mu[c]).collect();
                w.tau2[slot] = tau2_conditional(hyper.nu, hyper.sigma2, w.mu[p], &children).sample(&mut rng);
            }
            let precision = build_precision(tree, hyper.gamma2, &w.tau2)?;
            let data = RateData {
                exposure: &expo,
                occurrences: corpus.word_occurrences(f),
                thetas: &thetas,
            };
            let target = RateTarget::new(data, &precision, hyper.psi);
            let step = schmc_update(&target, &w.mu, cache, refresh, None, settings, &mut rng)?;
            if step.accepted {
                w.mu.copy_from_slice(&step.point);
            }
            Ok(step)
        })
        .collect::<Result<_, SamplerError>>()?;

    let mut tally = StepTally::default();
    steps.iter().for_each(|s| tally.add(s));
    state.word_counter.accepted += tally.accepted;
    state.word_counter.proposed += tally.proposed;
    Ok(tally.row(scan, Block::Word))
}

/// Draws ξ_d for every document, given the current rates.
pub fn update_doc_block(
    state: &mut ChainState,
    corpus: &Corpus,
    config: &SamplerConfig,
    scan: usize,
) -> Result<DiagnosticRow, SamplerError> {
    let beta = BetaTable::from_words(&state.words);
    let hyper = &state.hyper;
    let refresh = config.in_schedule(scan);
    let settings = HmcSettings {
        leapfrog_steps: config.leapfrog_steps,
        stepsize: state.doc_stepsize,
    };

    let steps: Vec<HmcStep> = state
        .docs
        .par_iter_mut()
        .zip(state.doc_hessians.par_iter_mut())
        .enumerate()
        .map(|(d, (p, cache))| {
            let mut rng = substream(config.seed, Stream::DocBlock, scan as u64, d as u64);
            let doc = corpus.doc(d);
            let target = AffinityTarget::labeled(
                &doc.counts,
                doc.norm_length,
                &doc.labels,
                &beta,
                &hyper.eta,
                hyper.lambda2,
            )?;
            let step = schmc_update(&target, &p.xi, cache, refresh, None, settings, &mut rng)?;
            if step.accepted {
                p.xi.copy_from_slice(&step.point);
            }
            Ok(step)
        })
        .collect::<Result<_, SamplerError>>()?;

    let mut tally = StepTally::default();
    steps.iter().for_each(|s| tally.add(s));
    state.doc_counter.accepted += tally.accepted;
    state.doc_counter.proposed += tally.proposed;
    Ok(tally.row(scan, Block::Doc))
}

/// Draws (γ², ψ), then (ν, σ²) by SCHMC in (log κ_τ, log λ_τ), then (λ², η).
pub fn update_hyperparams(
    state: &mut ChainState,
    config: &SamplerConfig,
    scan: usize,
) -> Result<DiagnosticRow, SamplerError> {
    let mut rng = substream(config.seed, Stream::Hyper, scan as u64, 0);

    let roots: Vec<f64> = state.words.iter().map(|w| w.mu[TopicTree::ROOT]).collect();
    let (gamma2, psi) = draw_gamma2_psi(&mut rng, &roots, state.hyper.psi)?;
    state.hyper.gamma2 = gamma2;
    state.hyper.psi = psi;

    let mut tally = StepTally::default();
    let precisions: Vec<f64> = state
        .words
        .iter()
        .flat_map(|w| w.tau2.iter().map(|t| 1.0 / t))
        .collect();
    if !precisions.is_empty() {
        let target = TauLogTarget(TauHyperDensity::from_precisions(&precisions)?);
        let current = [state.hyper.tau_kappa().ln(), state.hyper.tau_lambda().ln()];
        let settings = HmcSettings {
            leapfrog_steps: config.leapfrog_steps,
            stepsize: state.tau_stepsize,
        };
        let identity = DMatrix::identity(2, 2);
        let step = schmc_update(
            &target,
            &current,
            &mut state.tau_hessian,
            config.in_schedule(scan),
            Some(&identity),
            settings,
            &mut rng,
        )?;
        if step.accepted {
            let (nu, sigma2) =
                Hyperparams::nu_sigma2_from_gamma(step.point[0].exp(), step.point[1].exp());
            state.hyper.nu = nu;
            state.hyper.sigma2 = sigma2;
        }
        tally.add(&step);
        state.tau_counter.accepted += tally.accepted;
        state.tau_counter.proposed += tally.proposed;
    }

    if !state.docs.is_empty() {
        let xis: Vec<&[f64]> = state.docs.iter().map(|d| d.xi.as_slice()).collect();
        let (lambda2, eta) = draw_lambda2_eta(&mut rng, &xis)?;
        state.hyper.lambda2 = lambda2;
        state.hyper.eta = eta;
    }
    Ok(tally.row(scan, Block::TauHyper))
}

/// One full scan: word block, doc block (using the fresh rates), then the
/// hyperparameters. Stepsizes adapt during burn-in.
pub fn gibbs_scan(
    state: &mut ChainState,
    corpus: &Corpus,
    tree: &TopicTree,
    config: &SamplerConfig,
) -> Result<Vec<DiagnosticRow>, SamplerError> {
    let scan = state.iteration + 1;
    let rows = vec![
        update_word_block(state, corpus, tree, config, scan)?,
        update_doc_block(state, corpus, config, scan)?,
        update_hyperparams(state, config, scan)?,
    ];
    state.iteration = scan;
    if config.adapt_stepsize && scan <= config.burn_in {
        for row in &rows {
            let eps = match row.block {
                Block::Word => &mut state.word_stepsize,
                Block::Doc => &mut state.doc_stepsize,
                Block::TauHyper => &mut state.tau_stepsize,
            };
            let proposed = match row.block {
                Block::Word => !state.words.is_empty(),
                Block::Doc => !state.docs.is_empty(),
                Block::TauHyper => true,
            };
            if proposed && row.acceptance_rate < ADAPT_TARGET {
                *eps *= 0.5;
            }
        }
    }
    Ok(rows)
}

/// Posterior means over the post-burn-in scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimates {
    /// `V × N` posterior mean of μ.
    pub mu_mean: Vec<Vec<f64>>,
    pub mu_sd: Vec<Vec<f64>>,
    /// `V × N` posterior mean of β = e^μ.
    pub beta_mean: Vec<Vec<f64>>,
    /// `V × K` posterior mean of φ with sibling comparison sets.
    pub phi_siblings: Vec<Vec<f64>>,
    /// `V × K` posterior mean of φ against all topics.
    pub phi_all: Vec<Vec<f64>>,
    /// `V × P` posterior mean of τ².
    pub tau2_mean: Vec<Vec<f64>>,
    /// `D × K` posterior mean of ξ.
    pub xi_mean: Vec<Vec<f64>>,
    pub hyper_mean: Hyperparams,
    pub n_draws: usize,
    pub diagnostics: Vec<DiagnosticRow>,
    pub word_acceptance: f64,
    pub doc_acceptance: f64,
    pub tau_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Accumulator {
    n: usize,
    mu: Vec<Vec<f64>>,
    mu2: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    phi_sib: Vec<Vec<f64>>,
    phi_all: Vec<Vec<f64>>,
    tau2: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    hyper: Hyperparams,
}

fn add_into(acc: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(x) {
        for (ai, v) in a.iter_mut().zip(r) {
            *ai += v;
        }
    }
}

fn scaled(m: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

impl Accumulator {
    fn new(state: &ChainState) -> Self {
        let zeros = |rows: usize, cols: usize| vec![vec![0.0; cols]; rows];
        let v = state.words.len();
        let n = state.words.first().map_or(0, |w| w.mu.len());
        let p = state.words.first().map_or(0, |w| w.tau2.len());
        let k = state.hyper.eta.len();
        let d = state.docs.len();
        Self {
            n: 0,
            mu: zeros(v, n),
            mu2: zeros(v, n),
            beta: zeros(v, n),
            phi_sib: zeros(v, k),
            phi_all: zeros(v, k),
            tau2: zeros(v, p),
            xi: zeros(d, k),
            hyper: Hyperparams {
                psi: 0.0,
                gamma2: 0.0,
                nu: 0.0,
                sigma2: 0.0,
                eta: vec![0.0; k],
                lambda2: 0.0,
            },
        }
    }

    fn add(&mut self, state: &ChainState, tree: &TopicTree) {
        self.n += 1;
        let mu: Vec<Vec<f64>> = state.words.iter().map(|w| w.mu.clone()).collect();
        let beta: Vec<Vec<f64>> = state.words.iter().map(|w| w.beta()).collect();
        add_into(&mut self.mu, &mu);
        let sq: Vec<Vec<f64>> = mu.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
        add_into(&mut self.mu2, &sq);
        add_into(&mut self.beta, &beta);
        add_into(
            &mut self.phi_sib,
            &exclusivity(&beta, &comparison_sets(tree, ComparisonMode::Siblings)),
        );
        add_into(
            &mut self.phi_all,
            &exclusivity(&beta, &comparison_sets(tree, ComparisonMode::All)),
        );
        let tau2: Vec<Vec<f64>> = state.words.iter().map(|w| w.tau2.clone()).collect();
        add_into(&mut self.tau2, &tau2);
        let xi: Vec<Vec<f64>> = state.docs.iter().map(|d| d.xi.clone()).collect();
        add_into(&mut self.xi, &xi);
        let h = &state.hyper;
        self.hyper.psi += h.psi;
        self.hyper.gamma2 += h.gamma2;
        self.hyper.nu += h.nu;
        self.hyper.sigma2 += h.sigma2;
        self.hyper.lambda2 += h.lambda2;
        for (a, e) in self.hyper.eta.iter_mut().zip(&h.eta) {
            *a += e;
        }
    }

    fn finish(self, state: &ChainState, diagnostics: Vec<DiagnosticRow>) -> PosteriorEstimates {
        let s = 1.0 / self.n as f64;
        let mu_mean = scaled(&self.mu, s);
        let mu_sd = mu_mean
            .iter()
            .zip(&self.mu2)
            .map(|(m, q)| {
                m.iter()
                    .zip(q)
                    .map(|(m, q)| (q * s - m * m).max(0.0).sqrt())
                    .collect()
            })
            .collect();
        let h = &self.hyper;
        PosteriorEstimates {
            mu_mean,
            mu_sd,
            beta_mean: scaled(&self.beta, s),
            phi_siblings: scaled(&self.phi_sib, s),
            phi_all: scaled(&self.phi_all, s),
            tau2_mean: scaled(&self.tau2, s),
            xi_mean: scaled(&self.xi, s),
            hyper_mean: Hyperparams {
                psi: h.psi * s,
                gamma2: h.gamma2 * s,
                nu: h.nu * s,
                sigma2: h.sigma2 * s,
                eta: h.eta.iter().map(|e| e * s).collect(),
                lambda2: h.lambda2 * s,
            },
            n_draws: self.n,
            diagnostics,
            word_acceptance: state.word_counter.rate(),
            doc_acceptance: state.doc_counter.rate(),
            tau_acceptance: state.tau_counter.rate(),
        }
    }
}

fn validate_inputs(corpus: &Corpus, tree: &TopicTree) -> Result<(), SamplerError> {
    if corpus.n_topics() != tree.n_topics() {
        return Err(SamplerError::Model(crate::model::ModelError::DimensionMismatch {
            expected: tree.n_topics(),
            got: corpus.n_topics(),
        }));
    }
    if corpus.n_words() == 0 {
        return Err(SamplerError::EmptyBlock("words"));
    }
    Ok(())
}

/// Runs `config.n_iterations` scans from the default initialization.
pub fn run_chain(
    corpus: &Corpus,
    tree: &TopicTree,
    config: &SamplerConfig,
) -> Result<PosteriorEstimates, SamplerError> {
    run_chain_checkpointed(corpus, tree, config, None, 0, |_| Ok(()))
}

/// Everything needed to continue an interrupted run bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SamplerConfig,
    pub state: ChainState,
    accumulator: Accumulator,
    pub diagnostics: Vec<DiagnosticRow>,
}

impl Checkpoint {
    /// Whether `config` describes the same chain; only the width may differ.
    pub fn compatible_with(&self, config: &SamplerConfig) -> bool {
        let mut c = self.config.clone();
        c.parallelism_width = config.parallelism_width;
        c == *config
    }
}

/// Runs the chain to `config.n_iterations` total scans, starting from
/// `resume` when given. `on_checkpoint` is called after every `every`-th
/// scan short of the last (never when `every` is 0).
pub fn run_chain_checkpointed<F>(
    corpus: &Corpus,
    tree: &TopicTree,
    config: &SamplerConfig,
    resume: Option<Checkpoint>,
    every: usize,
    mut on_checkpoint: F,
) -> Result<PosteriorEstimates, SamplerError>
where
    F: FnMut(&Checkpoint) -> Result<(), String> + Send,
{
    config.validate()?;
    validate_inputs(corpus, tree)?;
    let cp = match resume {
        Some(cp) => {
            if !cp.compatible_with(config) {
                return Err(ConfigError::ResumeMismatch.into());
            }
            if cp.state.words.len() != corpus.n_words() || cp.state.docs.len() != corpus.n_docs() {
                return Err(ConfigError::ResumeMismatch.into());
            }
            cp
        }
        None => {
            let state = ChainState::initial(corpus, tree, config.stepsize);
            Checkpoint {
                config: config.clone(),
                accumulator: Accumulator::new(&state),
                state,
                diagnostics: Vec::with_capacity(3 * config.n_iterations),
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism_width)
        .build()
        .map_err(|e| SamplerError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let mut cp = cp;
        while cp.state.iteration < config.n_iterations {
            let rows = gibbs_scan(&mut cp.state, corpus, tree, config)?;
            cp.diagnostics.extend(rows);
            let it = cp.state.iteration;
            if it > config.burn_in {
                cp.accumulator.add(&cp.state, tree);
            }
            if it % 100 == 0 {
                log::info!("scan {it}/{}", config.n_iterations);
            }
            if every > 0 && it % every == 0 && it < config.n_iterations {
                on_checkpoint(&cp).map_err(SamplerError::Checkpoint)?;
            }
        }
        let Checkpoint {
            state,
            accumulator,
            diagnostics,
            ..
        } = cp;
        Ok(accumulator.finish(&state, diagnostics))
    })
}

/// Runs `config.n_iterations` further scans from `state`, averaging the
/// draws after the first `config.burn_in`.
pub fn run_chain_from(
    mut state: ChainState,
    corpus: &Corpus,
    tree: &TopicTree,
    config: &SamplerConfig,
) -> Result<(PosteriorEstimates, ChainState), SamplerError> {
    config.validate()?;
    validate_inputs(corpus, tree)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism_width)
        .build()
        .map_err(|e| SamplerError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let start = state.iteration;
        let mut acc = Accumulator::new(&state);
        let mut diagnostics = Vec::with_capacity(3 * config.n_iterations);
        // Burn-in and adaptation are counted relative to this run.
        let local = SamplerConfig {
            burn_in: start + config.burn_in,
            ..config.clone()
        };
        for i in 0..config.n_iterations {
            diagnostics.extend(gibbs_scan(&mut state, corpus, tree, &local)?);
            if i >= config.burn_in {
                acc.add(&state, tree);
            }
        }
        let est = acc.finish(&state, diagnostics);
        Ok((est, state))
    })
}
