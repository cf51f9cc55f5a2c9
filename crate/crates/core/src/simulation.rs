//! Simulated two-class benchmark: copula data-generating processes, a
//! class-weighted logistic regression baseline, and the comparison harness.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::bicop::{tau_to_param, Bicop, Family};
use crate::classifier::{auc, evaluate, fit_class_vine, fit_classifier, ClassifierConfig, ClassifierModel, Evaluation, PriorMode};
use crate::data::{Dataset, Schema, VariableSpec};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::margins::MarginMethod;
use crate::numeric::norm_quantile;
use crate::rng::{key, stream, tags};
use crate::vine::VineFitOptions;

/// Ordinal levels used for Poisson counts: code = count + 1, with counts of
/// `POISSON_LEVELS - 1` and above sharing the top level.
pub const POISSON_LEVELS: u32 = 16;
pub const DEFAULT_TRAIN_PER_CLASS: usize = 700;
pub const DEFAULT_TEST_PER_CLASS: usize = 300;
const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;
const RIDGE_PENALTY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Both coordinates normal.
    Continuous,
    /// Second coordinate Poisson, stored as an ordinal code.
    Mixed,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Continuous => "continuous",
            Variant::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    /// Kendall's tau of the Frank copula of the first DGP class.
    pub tau_frank: f64,
    /// Kendall's tau of the Gumbel copula of the second DGP class.
    pub tau_gumbel: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu_y: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            tau_frank: 0.5,
            tau_gumbel: 0.9,
            mu1: -1.5,
            mu2: 0.0,
            mu_y: 0.0,
            sigma: 1.0,
            lambda: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub variant: Variant,
    pub n_per_class: usize,
    pub seed: u64,
    /// Selects an independent sample for the same seed (e.g. train vs test).
    pub replicate: u64,
    pub params: DgpParams,
}

impl DgpConfig {
    pub fn new(variant: Variant, n_per_class: usize, seed: u64) -> Self {
        DgpConfig {
            variant,
            n_per_class,
            seed,
            replicate: 0,
            params: DgpParams::default(),
        }
    }
}

/// Label of the Frank (first DGP) class; the Gumbel class is labelled 0.
pub const FRANK_LABEL: u32 = 1;
pub const GUMBEL_LABEL: u32 = 0;

pub fn dgp_schema(variant: Variant) -> Schema {
    let x2 = match variant {
        Variant::Continuous => VariableSpec::continuous("x2"),
        Variant::Mixed => VariableSpec::ordinal("x2", POISSON_LEVELS),
    };
    Schema::new(vec![VariableSpec::continuous("x1"), x2]).expect("two distinct names")
}

/// Rows of the Frank class followed by rows of the Gumbel class.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<Dataset> {
    if cfg.n_per_class == 0 {
        return Err(Error::InvalidArgument("n per class must be at least 1".into()));
    }
    let p = &cfg.params;
    if !(p.sigma > 0.0 && p.lambda > 0.0) {
        return Err(Error::InvalidArgument("sigma and lambda must be positive".into()));
    }
    let poisson = Poisson::new(p.lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let classes = [
        (Family::Frank, p.tau_frank, p.mu1, FRANK_LABEL),
        (Family::Gumbel, p.tau_gumbel, p.mu2, GUMBEL_LABEL),
    ];
    let mut rows = Vec::with_capacity(2 * cfg.n_per_class);
    let mut labels = Vec::with_capacity(2 * cfg.n_per_class);
    for (c, (family, tau, mu, label)) in classes.into_iter().enumerate() {
        let copula = Bicop::new(family, 0, tau_to_param(family, 0, tau)?)?;
        let mut r = stream(cfg.seed, key(tags::DGP, 2 * cfg.replicate + c as u64));
        for (u1, u2) in copula.sample_with(cfg.n_per_class, &mut r)? {
            let x1 = mu + p.sigma * norm_quantile(u1);
            let x2 = match cfg.variant {
                Variant::Continuous => p.mu_y + p.sigma * norm_quantile(u2),
                Variant::Mixed => {
                    let count = poisson.inverse_cdf(u2).min(POISSON_LEVELS as u64 - 1);
                    count as f64 + 1.0
                }
            };
            rows.push(vec![x1, x2]);
            labels.push(label);
        }
    }
    Dataset::from_rows(dgp_schema(cfg.variant), &rows, Some(labels), None)
}

/// Logistic regression for `P(label = 1)`; ordinal variables enter as their
/// numeric codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Observation weight for class 0 and class 1 rows.
    pub class_weights: [f64; 2],
    pub iterations: usize,
    /// Whether the ridge-penalized fit was used because of separation.
    pub ridge: bool,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

struct Design {
    x: DMatrix<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn weighted_loglik(d: &Design, beta: &DVector<f64>, penalty: f64) -> f64 {
    let eta = &d.x * beta;
    let ll: f64 = (0..d.y.len())
        .map(|i| d.w[i] * (d.y[i] * eta[i] - softplus(eta[i])))
        .sum();
    ll - 0.5 * penalty * beta.rows(1, beta.len() - 1).norm_squared()
}

fn score(d: &Design, beta: &DVector<f64>, penalty: f64) -> DVector<f64> {
    let eta = &d.x * beta;
    let resid = DVector::from_iterator(d.y.len(), (0..d.y.len()).map(|i| d.w[i] * (d.y[i] - sigmoid(eta[i]))));
    let mut g = d.x.transpose() * resid;
    for j in 1..g.len() {
        g[j] -= penalty * beta[j];
    }
    g
}

/// Newton-Raphson (iteratively reweighted least squares) with step halving.
/// Returns the coefficients, the iteration count and whether it converged.
fn irls(d: &Design, penalty: f64) -> (DVector<f64>, usize, bool) {
    let p = d.x.ncols();
    let mut beta = DVector::zeros(p);
    let mut ll = weighted_loglik(d, &beta, penalty);
    for it in 1..=IRLS_MAX_ITER {
        let eta = &d.x * &beta;
        let mut h = DMatrix::zeros(p, p);
        for i in 0..d.y.len() {
            let pi = sigmoid(eta[i]);
            let s = d.w[i] * pi * (1.0 - pi);
            let row = d.x.row(i);
            h += s * row.transpose() * row;
        }
        for j in 1..p {
            h[(j, j)] += penalty;
        }
        let g = score(d, &beta, penalty);
        let Some(step) = h.clone().cholesky().map(|c| c.solve(&g)).or_else(|| h.lu().solve(&g)) else {
            return (beta, it, false);
        };
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = weighted_loglik(d, &next, penalty);
        while next_ll < ll && t > 1e-10 {
            t *= 0.5;
            next = &beta + t * &step;
            next_ll = weighted_loglik(d, &next, penalty);
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        if change < IRLS_TOL {
            return (beta, it, true);
        }
    }
    (beta, IRLS_MAX_ITER, false)
}

/// Weighted maximum-likelihood logistic regression. Each row is weighted
/// inversely to its class frequency, scaled so the weights sum to `n`. When
/// the classes are separable the fit is repeated with a small ridge penalty.
pub fn fit_weighted_logistic(train: &Dataset) -> Result<(LogisticModel, Vec<String>)> {
    let labels = train.labels().ok_or(Error::LabelsAbsent)?;
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("logistic baseline needs labels 0 and 1".into()));
    }
    let n = labels.len();
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels);
    }
    let class_weights = [n as f64 / (2.0 * n0 as f64), n as f64 / (2.0 * n1 as f64)];
    let p = train.n_vars() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { train.column(j - 1)[i] });
    let design = Design {
        x,
        y: labels.iter().map(|&y| y as f64).collect(),
        w: labels.iter().map(|&y| class_weights[y as usize]).collect(),
    };
    let mut warnings = Vec::new();
    let (mut beta, mut iterations, converged) = irls(&design, 0.0);
    let eta = &design.x * &beta;
    let separated = (0..n).all(|i| (sigmoid(eta[i]) - design.y[i]).abs() < 1e-6);
    let ridge = !converged || separated;
    if ridge {
        warnings.push(format!(
            "logistic fit did not converge or the classes are separable; refitting with ridge penalty {RIDGE_PENALTY}"
        ));
        let (b, it, ok) = irls(&design, RIDGE_PENALTY);
        if !ok {
            warnings.push("ridge-penalized logistic fit reached the iteration limit".into());
        }
        beta = b;
        iterations = it;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence("logistic regression coefficients".into()));
    }
    Ok((
        LogisticModel {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
            class_weights,
            iterations,
            ridge,
        },
        warnings,
    ))
}

impl LogisticModel {
    pub fn prob(&self, row: &[f64]) -> f64 {
        sigmoid(self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>())
    }

    /// Posterior rows `(P(0), P(1))` for every row of `data`.
    pub fn posteriors(&self, data: &Dataset) -> Vec<Vec<f64>> {
        (0..data.n_rows())
            .map(|i| {
                let p = self.prob(&data.row(i));
                vec![1.0 - p, p]
            })
            .collect()
    }

    /// Weighted score vector at the stored coefficients.
    pub fn gradient(&self, train: &Dataset) -> Vec<f64> {
        let labels = train.labels().unwrap_or(&[]);
        let mut g = vec![0.0; self.coefficients.len() + 1];
        for (i, &y) in labels.iter().enumerate() {
            let row = train.row(i);
            let r = self.class_weights[y as usize] * (y as f64 - self.prob(&row));
            g[0] += r;
            for (gj, x) in g[1..].iter_mut().zip(&row) {
                *gj += r * x;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaMode {
    /// True families per class (Frank / Gumbel), parameters estimated.
    Oracle,
    /// Families and truncation selected by the modified BIC.
    Mbic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub modes: Vec<CopulaMode>,
    pub margins: MarginMethod,
    pub psi0: f64,
    /// Points per axis of the probability grid (0 disables it).
    pub grid_points: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            variant: Variant::Continuous,
            seeds: (1..=20).collect(),
            n_train: DEFAULT_TRAIN_PER_CLASS,
            n_test: DEFAULT_TEST_PER_CLASS,
            modes: vec![CopulaMode::Oracle, CopulaMode::Mbic],
            margins: MarginMethod::Kernel,
            psi0: crate::vine::DEFAULT_PSI0,
            grid_points: 50,
        }
    }
}

/// One value in the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub seed: u64,
    pub method: String,
    pub mode: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Class-1 probability of one method at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub seed: u64,
    pub method: String,
    pub mode: String,
    pub x1: f64,
    pub x2: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub records: Vec<BenchmarkRecord>,
    pub grid: Vec<GridRecord>,
    pub warnings: Vec<String>,
}

impl BenchmarkOutput {
    /// Value of one metric, if recorded.
    pub fn value(&self, seed: u64, method: &str, mode: &str, split: &str, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.seed == seed && r.method == method && r.mode == mode && r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["seed", "method", "mode", "split", "metric", "value"])?;
        for r in &self.records {
            w.write_record([
                r.seed.to_string(),
                r.method.clone(),
                r.mode.clone(),
                r.split.clone(),
                r.metric.clone(),
                sig6(r.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_grid_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["seed", "method", "mode", "x1", "x2", "p1"])?;
        for r in &self.grid {
            w.write_record([
                r.seed.to_string(),
                r.method.clone(),
                r.mode.clone(),
                sig6(r.x1),
                sig6(r.x2),
                sig6(r.p1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn metric_records(seed: u64, method: &str, mode: &str, split: &str, e: &Evaluation, auc: Option<f64>) -> Vec<BenchmarkRecord> {
    let rec = |metric: String, value: f64| BenchmarkRecord {
        seed,
        method: method.into(),
        mode: mode.into(),
        split: split.into(),
        metric,
        value,
    };
    let mut out = vec![rec("nll_sum".into(), e.nll_sum), rec("nll_mean".into(), e.nll_mean)];
    for c in &e.per_class {
        if let Some(v) = c.nll {
            out.push(rec(format!("nll_class{}", c.class), v));
        }
        if let Some(v) = c.brier {
            out.push(rec(format!("brier_class{}", c.class), v));
        }
    }
    if let Some(a) = auc {
        out.push(rec("auc".into(), a));
    }
    out
}

fn grid_axes(train: &Dataset, variant: Variant, points: usize) -> (Vec<f64>, Vec<f64>) {
    let span = |c: &[f64]| {
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let lin = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64)
            .collect()
    };
    let x1 = lin(span(train.column(0)));
    let x2 = match variant {
        Variant::Continuous => lin(span(train.column(1))),
        Variant::Mixed => {
            let (lo, hi) = span(train.column(1));
            (lo as u32..=hi as u32).map(f64::from).collect()
        }
    };
    (x1, x2)
}

fn copula_config(cfg: &BenchmarkConfig) -> ClassifierConfig {
    ClassifierConfig {
        margins: cfg.margins,
        vine: VineFitOptions {
            psi0: cfg.psi0,
            ..Default::default()
        },
        priors: PriorMode::Equal,
    }
}

/// Fits the copula classifier in the given mode. In oracle mode each class
/// vine is restricted to its true family.
pub fn fit_copula_mode(train: &Dataset, mode: CopulaMode, cfg: &BenchmarkConfig) -> Result<ClassifierModel> {
    let base = copula_config(cfg);
    match mode {
        CopulaMode::Mbic => fit_classifier(train, &base),
        CopulaMode::Oracle => {
            let labels = train.labels().ok_or(Error::LabelsAbsent)?;
            let mut vines = Vec::new();
            let mut classes = Vec::new();
            for (label, family) in [(GUMBEL_LABEL, Family::Gumbel), (FRANK_LABEL, Family::Frank)] {
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
                let part = train.subset(&idx);
                let opts = ClassifierConfig {
                    vine: VineFitOptions {
                        fixed_family: Some(family),
                        ..base.vine.clone()
                    },
                    ..base.clone()
                };
                vines.push(fit_class_vine(&part, &opts)?);
                classes.push(label);
            }
            ClassifierModel::new(train.schema().clone(), classes, vec![0.5, 0.5], vines)
        }
    }
}

fn run_seed(cfg: &BenchmarkConfig, seed: u64, with_grid: bool) -> Result<BenchmarkOutput> {
    let mut train_cfg = DgpConfig::new(cfg.variant, cfg.n_train, seed);
    train_cfg.replicate = 0;
    let mut test_cfg = DgpConfig::new(cfg.variant, cfg.n_test, seed);
    test_cfg.replicate = 1;
    let train = simulate_dgp(&train_cfg)?;
    let test = simulate_dgp(&test_cfg)?;
    let classes = [0u32, 1];
    let mut out = BenchmarkOutput::default();
    let splits = [("train", &train), ("test", &test)];

    let (logit, warnings) = fit_weighted_logistic(&train)?;
    out.warnings.extend(warnings.into_iter().map(|w| format!("seed {seed}: {w}")));
    for (name, d) in splits {
        let probs = logit.posteriors(d);
        let labels = d.labels().expect("simulated data is labelled");
        let e = evaluate(&probs, labels, &classes)?;
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let a = auc(&scores, labels, 1).ok();
        out.records.extend(metric_records(seed, "logistic", "weighted", name, &e, a));
    }
    let axes = with_grid.then(|| grid_axes(&train, cfg.variant, cfg.grid_points));
    if let Some((x1, x2)) = &axes {
        for &b in x2 {
            for &a in x1 {
                out.grid.push(GridRecord {
                    seed,
                    method: "logistic".into(),
                    mode: "weighted".into(),
                    x1: a,
                    x2: b,
                    p1: logit.prob(&[a, b]),
                });
            }
        }
    }
    for &mode in &cfg.modes {
        let mode_name = match mode {
            CopulaMode::Oracle => "oracle",
            CopulaMode::Mbic => "mbic",
        };
        let model = fit_copula_mode(&train, mode, cfg)?;
        let j1 = model.class_index(1)?;
        for (name, d) in splits {
            let post = model.posteriors(d)?;
            // reorder to (P(0), P(1))
            let probs: Vec<Vec<f64>> = post.iter().map(|p| vec![1.0 - p[j1], p[j1]]).collect();
            let labels = d.labels().expect("simulated data is labelled");
            let e = evaluate(&probs, labels, &classes)?;
            let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
            let a = auc(&scores, labels, 1).ok();
            out.records.extend(metric_records(seed, "copula", mode_name, name, &e, a));
        }
        if let Some((x1, x2)) = &axes {
            let rows: Vec<Vec<f64>> = x2.iter().flat_map(|&b| x1.iter().map(move |&a| vec![a, b])).collect();
            for (r, p) in rows.iter().zip(model.posteriors_rows(&rows)?) {
                out.grid.push(GridRecord {
                    seed,
                    method: "copula".into(),
                    mode: mode_name.into(),
                    x1: r[0],
                    x2: r[1],
                    p1: p[j1],
                });
            }
        }
    }
    Ok(out)
}

/// Runs every seed (in parallel) and concatenates the results in seed
/// order. The probability grid is produced for the first seed only.
pub fn benchmark_run(cfg: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one seed".into()));
    }
    if cfg.n_train < 10 || cfg.n_test < 1 {
        return Err(Error::InvalidArgument("need at least 10 training and 1 test row per class".into()));
    }
    let per_seed: Vec<BenchmarkOutput> = cfg
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| run_seed(cfg, s, i == 0 && cfg.grid_points >= 2))
        .collect::<Result<_>>()?;
    let mut out = BenchmarkOutput::default();
    for o in per_seed {
        out.records.extend(o.records);
        out.grid.extend(o.grid);
        out.warnings.extend(o.warnings);
    }
    Ok(out)
}
