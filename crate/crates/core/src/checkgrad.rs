//! Finite-difference checks of every analytic derivative in the model.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::model::{theta_jacobian, AffinityTarget, BetaTable, RateTarget, SparseTheta, TauHyperDensity, WordObservations};
use crate::rng::{substream, Stream, StreamRng};
use crate::tree::{build_precision, TopicTree};

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const HESSIAN_TOLERANCE: f64 = 1e-4;
/// Step relative to max(|x|, 1).
pub const GRADIENT_STEP: f64 = 1e-5;
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub seed: u64,
    pub n_points: usize,
    pub n_words: usize,
    pub n_docs: usize,
    pub level_sizes: Vec<usize>,
    /// Perturbs the analytic rate gradient so the harness must fail.
    pub corrupt: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_points: 20,
            n_words: 30,
            n_docs: 40,
            level_sizes: vec![2, 2],
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub points: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} points={} max_rel_err={:.3e} tol={:e}\n",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.points,
                c.max_relative_error,
                c.tolerance
            ));
        }
        s
    }
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂); 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else if diff.is_nan() {
        f64::INFINITY
    } else {
        diff / scale
    }
}

fn step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f: Rⁿ → Rᵐ`, row-major `m × n`.
pub fn numeric_jacobian(x: &[f64], m: usize, rel: f64, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; m * n];
    let mut p = x.to_vec();
    for j in 0..n {
        let h = step(x[j], rel);
        p[j] = x[j] + h;
        let up = f(&p);
        p[j] = x[j] - h;
        let down = f(&p);
        p[j] = x[j];
        for i in 0..m {
            out[i * n + j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    out
}

pub fn numeric_gradient(x: &[f64], rel: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    numeric_jacobian(x, 1, rel, |p| vec![f(p)])
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn normal_vec(rng: &mut StreamRng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_labels(rng: &mut StreamRng, k: usize) -> Vec<usize> {
    loop {
        let l: Vec<usize> = (0..k)
            .filter(|_| rng.random::<f64>() < 0.4)
            .map(TopicTree::topic_node)
            .collect();
        if !l.is_empty() {
            return l;
        }
    }
}

fn random_beta(rng: &mut StreamRng, n_words: usize, n_nodes: usize) -> BetaTable {
    let rows: Vec<Vec<f64>> = (0..n_words)
        .map(|_| normal_vec(rng, n_nodes, 1.0).into_iter().map(|m| (m - 1.0).exp()).collect())
        .collect();
    BetaTable::from_rows(&rows)
}

/// Running maximum over points.
struct Tracker {
    name: &'static str,
    tolerance: f64,
    max: f64,
    points: usize,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            max: 0.0,
            points: 0,
        }
    }

    fn add(&mut self, analytic: &[f64], numeric: &[f64]) {
        let e = relative_error(analytic, numeric);
        self.max = if e.is_nan() { f64::INFINITY } else { self.max.max(e) };
        self.points += 1;
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            points: self.points,
            max_relative_error: self.max,
            tolerance: self.tolerance,
        }
    }
}

fn check_rates(cfg: &CheckConfig, tree: &TopicTree) -> Vec<CheckResult> {
    let n = tree.n_nodes();
    let k = tree.n_topics();
    let mut grad = Tracker::new("rate_gradient", GRADIENT_TOLERANCE);
    let mut hess = Tracker::new("rate_hessian", HESSIAN_TOLERANCE);
    for pt in 0..cfg.n_points {
        let mut rng = substream(cfg.seed, Stream::Check, 0, pt as u64);
        let tau2: Vec<f64> = (0..tree.n_parents()).map(|_| 0.2 + rng.random::<f64>()).collect();
        let gamma2 = 0.5 + rng.random::<f64>();
        let lam = build_precision(tree, gamma2, &tau2).expect("positive variances");
        let docs: Vec<(u32, f64, SparseTheta)> = (0..cfg.n_docs)
            .map(|_| {
                let xi = normal_vec(&mut rng, k, 1.0);
                let labels = random_labels(&mut rng, k);
                let theta = SparseTheta::from_labels(&xi, &labels).expect("labels nonempty");
                let w = if rng.random::<f64>() < 0.6 { rng.random_range(1..6) } else { 0 };
                (w, 0.3 + 1.5 * rng.random::<f64>(), theta)
            })
            .collect();
        let obs = WordObservations::new(n, &docs);
        let psi = rng.random::<f64>() - 1.0;
        let target = RateTarget::new(obs.data(), &lam, psi);
        let mu: Vec<f64> = normal_vec(&mut rng, n, 0.8).into_iter().map(|m| m + psi).collect();

        let mut g = vec![0.0; n];
        target.gradient(&mu, &mut g);
        if cfg.corrupt {
            g[0] *= 1.01;
            g[0] += 1e-3;
        }
        let fd = numeric_gradient(&mu, GRADIENT_STEP, |x| target.log_density(x));
        grad.add(&g, &fd);

        let h = row_major(&target.hessian(&mu));
        let fd = numeric_jacobian(&mu, n, HESSIAN_STEP, |x| {
            let mut g = vec![0.0; n];
            target.gradient(x, &mut g);
            g
        });
        hess.add(&h, &fd);
    }
    vec![grad.finish(), hess.finish()]
}

fn check_affinity(cfg: &CheckConfig, tree: &TopicTree) -> Vec<CheckResult> {
    let n = tree.n_nodes();
    let k = tree.n_topics();
    let mut grad = Tracker::new("affinity_gradient", GRADIENT_TOLERANCE);
    let mut unl = Tracker::new("affinity_gradient_unlabeled", GRADIENT_TOLERANCE);
    let mut hess = Tracker::new("affinity_numeric_hessian", HESSIAN_TOLERANCE);
    let mut jac = Tracker::new("theta_jacobian", GRADIENT_TOLERANCE);
    for pt in 0..cfg.n_points {
        let mut rng = substream(cfg.seed, Stream::Check, 1, pt as u64);
        let beta = random_beta(&mut rng, cfg.n_words, n);
        let eta = normal_vec(&mut rng, k, 1.0);
        let lambda2 = 0.5 + 2.0 * rng.random::<f64>();
        let mut counts: Vec<(u32, u32)> = Vec::new();
        for f in 0..cfg.n_words as u32 {
            if rng.random::<f64>() < 0.5 {
                counts.push((f, rng.random_range(1..8)));
            }
        }
        let length = 0.3 + 1.5 * rng.random::<f64>();
        let labels = random_labels(&mut rng, k);
        let xi = normal_vec(&mut rng, k, 1.5);

        let target = AffinityTarget::labeled(&counts, length, &labels, &beta, &eta, lambda2).expect("labels nonempty");
        let mut g = vec![0.0; k];
        target.gradient(&xi, &mut g);
        grad.add(&g, &numeric_gradient(&xi, GRADIENT_STEP, |x| target.log_density(x)));

        // numeric Hessian of the gradient against second differences of the value
        let active: Vec<usize> = target.active().to_vec();
        let h = row_major(&target.hessian_active_numeric(&xi));
        let x_act: Vec<f64> = active.iter().map(|&t| xi[t]).collect();
        let mut full = xi.clone();
        let fd = second_differences(&x_act, HESSIAN_STEP, |p| {
            for (&t, &v) in active.iter().zip(p) {
                full[t] = v;
            }
            target.log_density(&full)
        });
        hess.add(&h, &fd);

        let target = AffinityTarget::unlabeled(&counts, length, &beta, &eta, lambda2);
        target.gradient(&xi, &mut g);
        unl.add(&g, &numeric_gradient(&xi, GRADIENT_STEP, |x| target.log_density(x)));

        let j = row_major(&theta_jacobian(&x_act));
        let fd = numeric_jacobian(&x_act, x_act.len(), GRADIENT_STEP, AffinityTarget::theta_active);
        jac.add(&j, &fd);
    }
    vec![grad.finish(), unl.finish(), hess.finish(), jac.finish()]
}

/// Symmetric second-difference Hessian of a scalar function.
fn second_differences(x: &[f64], rel: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    let mut p = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        let hi = step(x[i], rel);
        p[i] = x[i] + hi;
        let up = f(&p);
        p[i] = x[i] - hi;
        let down = f(&p);
        p[i] = x[i];
        out[i * n + i] = (up - 2.0 * f0 + down) / (hi * hi);
        for j in 0..i {
            let hj = step(x[j], rel);
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

fn check_tau(cfg: &CheckConfig) -> Vec<CheckResult> {
    let mut grad = Tracker::new("tau_gradient", GRADIENT_TOLERANCE);
    let mut hess = Tracker::new("tau_hessian", HESSIAN_TOLERANCE);
    let mut grad_log = Tracker::new("tau_gradient_log", GRADIENT_TOLERANCE);
    let mut hess_log = Tracker::new("tau_hessian_log", HESSIAN_TOLERANCE);
    for pt in 0..cfg.n_points {
        let mut rng = substream(cfg.seed, Stream::Check, 2, pt as u64);
        let shape = 0.5 + 4.0 * rng.random::<f64>();
        let scale = 0.2 + 2.0 * rng.random::<f64>();
        let gamma = Gamma::new(shape, scale).expect("valid gamma");
        let samples: Vec<f64> = (0..cfg.n_words.max(2)).map(|_| gamma.sample(&mut rng).max(1e-8)).collect();
        let d = TauHyperDensity::from_precisions(&samples).expect("positive samples");
        let x = [0.3 + 4.0 * rng.random::<f64>(), 0.1 + 3.0 * rng.random::<f64>()];

        grad.add(&d.grad(x[0], x[1]), &numeric_gradient(&x, GRADIENT_STEP, |p| d.value(p[0], p[1])));
        let h = d.hess(x[0], x[1]);
        hess.add(
            &[h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]],
            &numeric_jacobian(&x, 2, HESSIAN_STEP, |p| d.grad(p[0], p[1]).to_vec()),
        );

        let u = [x[0].ln(), x[1].ln()];
        grad_log.add(
            &d.grad_log(u[0], u[1]),
            &numeric_gradient(&u, GRADIENT_STEP, |p| d.value_log(p[0], p[1])),
        );
        let h = d.hess_log(u[0], u[1]);
        hess_log.add(
            &[h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]],
            &numeric_jacobian(&u, 2, HESSIAN_STEP, |p| d.grad_log(p[0], p[1]).to_vec()),
        );
    }
    vec![grad.finish(), hess.finish(), grad_log.finish(), hess_log.finish()]
}

pub fn run_checks(cfg: &CheckConfig) -> CheckReport {
    let tree = TopicTree::balanced(&cfg.level_sizes);
    let mut checks = check_rates(cfg, &tree);
    checks.extend(check_affinity(cfg, &tree));
    checks.extend(check_tau(cfg));
    CheckReport { checks }
}
