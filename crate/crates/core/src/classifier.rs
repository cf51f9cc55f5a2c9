//! Generative classification with one vine per class: Bayes posteriors,
//! per-class calibration metrics, AUC, and low/moderate/high risk groups.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_by_class, Dataset, Schema};
use crate::error::{Error, Result};
use crate::latent::latent_matrix;
use crate::margins::{fit_margins, MarginMethod};
use crate::numeric::{log_floor, mean, sample_variance};
use crate::rank::midranks;
use crate::vine::{fit_vine, select_structure, VineFitOptions, VineModel};

/// Minimum number of training rows per class.
pub const MIN_CLASS_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    #[default]
    Equal,
    /// Class frequencies in the training data.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub margins: MarginMethod,
    pub vine: VineFitOptions,
    pub priors: PriorMode,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            margins: MarginMethod::Kernel,
            vine: VineFitOptions::default(),
            priors: PriorMode::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    schema: Schema,
    classes: Vec<u32>,
    priors: Vec<f64>,
    vines: Vec<VineModel>,
}

/// Fits margins, structure and vine separately for every class in `train`.
pub fn fit_classifier(train: &Dataset, config: &ClassifierConfig) -> Result<ClassifierModel> {
    let split = split_by_class(train)?;
    let present: Vec<u32> = split
        .parts
        .iter()
        .filter(|(_, d)| d.n_rows() > 0)
        .map(|(&c, _)| c)
        .collect();
    if present.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    for (&class, part) in &split.parts {
        if part.n_rows() < MIN_CLASS_ROWS {
            return Err(Error::ClassTooSmall {
                class,
                got: part.n_rows(),
                needed: MIN_CLASS_ROWS,
            });
        }
    }
    let classes: Vec<u32> = split.parts.keys().copied().collect();
    let vines = split
        .parts
        .values()
        .map(|part| fit_class_vine(part, config))
        .collect::<Result<Vec<_>>>()?;
    let priors = match config.priors {
        PriorMode::Equal => vec![1.0 / classes.len() as f64; classes.len()],
        PriorMode::Empirical => {
            let n = train.n_rows() as f64;
            split.parts.values().map(|p| p.n_rows() as f64 / n).collect()
        }
    };
    ClassifierModel::new(train.schema().clone(), classes, priors, vines)
}

/// Margins, structure and pair-copulas for the rows of one class.
pub fn fit_class_vine(part: &Dataset, config: &ClassifierConfig) -> Result<VineModel> {
    let margins = fit_margins(part, config.margins)?;
    let structure = select_structure(&latent_matrix(part)?)?;
    fit_vine(part, &margins, &structure, &config.vine)
}

/// Bayes posterior from class priors and class-conditional log densities,
/// normalized with the log-sum-exp shift.
pub fn posterior_from_log(priors: &[f64], log_densities: &[f64]) -> Vec<f64> {
    let terms: Vec<f64> = priors
        .iter()
        .zip(log_densities)
        .map(|(&p, &l)| p.ln() + l)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // every class density underflowed: fall back to the priors
        return priors.to_vec();
    }
    let weights: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

impl ClassifierModel {
    pub fn new(schema: Schema, classes: Vec<u32>, priors: Vec<f64>, vines: Vec<VineModel>) -> Result<Self> {
        let m = ClassifierModel {
            schema,
            classes,
            priors,
            vines,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let k = self.classes.len();
        if k < 2 || self.priors.len() != k || self.vines.len() != k {
            return Err(Error::InvalidArgument(
                "classifier needs one prior and one vine per class, with at least two classes".into(),
            ));
        }
        if self.priors.iter().any(|&p| !(p > 0.0 && p.is_finite()))
            || (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidArgument(format!(
                "priors {:?} must be positive and sum to one",
                self.priors
            )));
        }
        for v in &self.vines {
            v.validate()?;
            if v.dim() != self.schema.len() {
                return Err(Error::SchemaMismatch("vine dimension differs from the schema".into()));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn vines(&self) -> &[VineModel] {
        &self.vines
    }

    /// Position of `class` in [`Self::classes`].
    pub fn class_index(&self, class: u32) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::InvalidArgument(format!("class {class} is not modelled")))
    }

    /// Replaces the priors (they must be positive and sum to one).
    pub fn with_priors(mut self, priors: Vec<f64>) -> Result<Self> {
        self.priors = priors;
        self.validate()?;
        Ok(self)
    }

    /// Class-conditional log densities of one row.
    pub fn log_densities(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.schema.check_row(row)?;
        Ok(self.vines.iter().map(|v| v.log_density(row)).collect())
    }

    /// Posterior class probabilities of one row, ordered as [`Self::classes`].
    pub fn posterior(&self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(posterior_from_log(&self.priors, &self.log_densities(row)?))
    }

    /// Posteriors of every row of `data` (which must share the model schema).
    pub fn posteriors(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.posteriors_rows(&data.rows())
    }

    pub fn posteriors_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for r in rows {
            self.schema.check_row(r)?;
        }
        let per_class: Vec<Vec<f64>> = self.vines.iter().map(|v| v.log_densities(rows)).collect();
        Ok((0..rows.len())
            .into_par_iter()
            .map(|i| {
                let logs: Vec<f64> = per_class.iter().map(|c| c[i]).collect();
                posterior_from_log(&self.priors, &logs)
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Calibration scores of one class; `None` when the class has no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: u32,
    pub n: usize,
    pub nll: Option<f64>,
    pub brier: Option<f64>,
}

/// Per-class and overall scores of a set of posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_class: Vec<ClassScores>,
    /// Sum over rows of `-ln p(true class)`.
    pub nll_sum: f64,
    /// `nll_sum / n`, equal to the `n_j`-weighted mean of the per-class nll.
    pub nll_mean: f64,
    pub n: usize,
}

fn true_class_probs(probs: &[Vec<f64>], labels: &[u32], classes: &[u32]) -> Result<Vec<f64>> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let j = classes
                .iter()
                .position(|&c| c == y)
                .ok_or_else(|| Error::InvalidArgument(format!("label {y} is not a modelled class")))?;
            p.get(j)
                .copied()
                .ok_or_else(|| Error::InvalidArgument("probability row too short".into()))
        })
        .collect()
}

/// Mean of `-ln p_j` over the rows of each class.
pub fn per_class_nll(probs: &[Vec<f64>], labels: &[u32], classes: &[u32]) -> Result<Vec<Option<f64>>> {
    per_class_mean(probs, labels, classes, |p| -log_floor(p))
}

/// Mean of `(1 - p_j)^2` over the rows of each class.
pub fn per_class_brier(probs: &[Vec<f64>], labels: &[u32], classes: &[u32]) -> Result<Vec<Option<f64>>> {
    per_class_mean(probs, labels, classes, |p| (1.0 - p) * (1.0 - p))
}

fn per_class_mean(
    probs: &[Vec<f64>],
    labels: &[u32],
    classes: &[u32],
    score: impl Fn(f64) -> f64,
) -> Result<Vec<Option<f64>>> {
    let p = true_class_probs(probs, labels, classes)?;
    Ok(classes
        .iter()
        .map(|&c| {
            let s: Vec<f64> = p
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y == c)
                .map(|(&q, _)| score(q))
                .collect();
            (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
        })
        .collect())
}

/// Per-class nll and Brier scores plus the overall summed and mean nll.
pub fn evaluate(probs: &[Vec<f64>], labels: &[u32], classes: &[u32]) -> Result<Evaluation> {
    let p = true_class_probs(probs, labels, classes)?;
    let nll = per_class_nll(probs, labels, classes)?;
    let brier = per_class_brier(probs, labels, classes)?;
    let per_class = classes
        .iter()
        .zip(nll.into_iter().zip(brier))
        .map(|(&class, (nll, brier))| ClassScores {
            class,
            n: labels.iter().filter(|&&y| y == class).count(),
            nll,
            brier,
        })
        .collect();
    let nll_sum: f64 = p.iter().map(|&q| -log_floor(q)).sum();
    let n = labels.len();
    Ok(Evaluation {
        per_class,
        nll_sum,
        nll_mean: if n == 0 { f64::NAN } else { nll_sum / n as f64 },
        n,
    })
}

/// Area under the ROC curve for scores of the `positive` class, as the
/// Mann-Whitney statistic with midranks for ties.
pub fn auc(scores: &[f64], labels: &[u32], positive: u32) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    let ranks = midranks(scores);
    let n_pos = labels.iter().filter(|&&y| y == positive).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == positive)
        .map(|(r, _)| r)
        .sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    Low,
    Moderate,
    High,
}

impl RiskGroup {
    pub const ALL: [RiskGroup; 3] = [RiskGroup::Low, RiskGroup::Moderate, RiskGroup::High];

    pub fn name(self) -> &'static str {
        match self {
            RiskGroup::Low => "low",
            RiskGroup::Moderate => "moderate",
            RiskGroup::High => "high",
        }
    }
}

/// Threshold parameter for risk groups: low when `p <= alpha`, high when
/// `p >= 1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPolicy {
    alpha: f64,
}

impl RiskPolicy {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 0.5)")));
        }
        Ok(RiskPolicy { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn group(&self, p_adverse: f64) -> RiskGroup {
        if p_adverse <= self.alpha {
            RiskGroup::Low
        } else if p_adverse >= 1.0 - self.alpha {
            RiskGroup::High
        } else {
            RiskGroup::Moderate
        }
    }
}

pub fn assign_risk_groups(p_adverse: &[f64], policy: RiskPolicy) -> Vec<RiskGroup> {
    p_adverse.iter().map(|&p| policy.group(p)).collect()
}

/// One row of a risk-group table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGroupRow {
    pub alpha: f64,
    pub group: RiskGroup,
    /// `(class, count)` for every class in the report.
    pub counts: Vec<(u32, usize)>,
    pub total: usize,
    pub aux_mean: Option<f64>,
    /// Sample standard deviation (n - 1 denominator); absent below two rows.
    pub aux_sd: Option<f64>,
}

/// Counts per true class and auxiliary-outcome summaries for each group.
pub fn risk_group_report(
    groups: &[RiskGroup],
    labels: &[u32],
    classes: &[u32],
    aux: Option<&[f64]>,
    alpha: f64,
) -> Result<Vec<RiskGroupRow>> {
    if groups.len() != labels.len() || aux.is_some_and(|a| a.len() != labels.len()) {
        return Err(Error::InvalidArgument("groups, labels and aux differ in length".into()));
    }
    Ok(RiskGroup::ALL
        .iter()
        .map(|&g| {
            let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
            let counts = classes
                .iter()
                .map(|&c| (c, members.iter().filter(|&&i| labels[i] == c).count()))
                .collect();
            let values: Vec<f64> = aux
                .map(|a| members.iter().map(|&i| a[i]).collect())
                .unwrap_or_default();
            RiskGroupRow {
                alpha,
                group: g,
                counts,
                total: members.len(),
                aux_mean: (!values.is_empty()).then(|| mean(&values)),
                aux_sd: (values.len() >= 2).then(|| sample_variance(&values).sqrt()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableSpec;
    use crate::rng::{open01, stream};
    use proptest::prelude::*;

    #[test]
    fn worked_posterior() {
        let p = posterior_from_log(&[0.2, 0.8], &[2f64.ln(), 0.0]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        let eq = posterior_from_log(&[0.5, 0.5], &[-3.0, -3.0]);
        assert_eq!(eq, vec![0.5, 0.5]);
    }

    #[test]
    fn floored_density_still_normalized() {
        let p = posterior_from_log(&[0.5, 0.5], &[-690.0, 0.0]);
        assert!(p[0] > 0.0 && p[0] < 1e-290);
        assert_eq!(p[0] + p[1], 1.0);
        let huge = posterior_from_log(&[0.5, 0.5], &[-1e4, -1e4 - 1.0]);
        assert!((huge[0] + huge[1] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn posterior_sums_to_one(
            prior in 0.001f64..0.999,
            a in -800.0f64..50.0,
            b in -800.0f64..50.0,
        ) {
            let p = posterior_from_log(&[prior, 1.0 - prior], &[a, b]);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn prior_monotonicity(a in -50.0f64..50.0, b in -50.0f64..50.0, p1 in 0.01f64..0.98, dp in 0.001f64..0.5) {
            let p2 = (p1 + dp).min(0.99);
            let lo = posterior_from_log(&[1.0 - p1, p1], &[a, b])[1];
            let hi = posterior_from_log(&[1.0 - p2, p2], &[a, b])[1];
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn risk_groups_partition(ps in proptest::collection::vec(0.0f64..=1.0, 1..200)) {
            let mut last_low = usize::MAX;
            for alpha in [0.45, 0.35, 0.25, 0.2, 0.15, 0.05] {
                let g = assign_risk_groups(&ps, RiskPolicy::new(alpha).unwrap());
                let rows = risk_group_report(&g, &vec![0; ps.len()], &[0, 1], None, alpha).unwrap();
                prop_assert_eq!(rows.iter().map(|r| r.total).sum::<usize>(), ps.len());
                let low = rows[0].total;
                prop_assert!(low <= last_low);
                last_low = low;
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            s in proptest::collection::vec(-5.0f64..5.0, 4..60),
        ) {
            let labels: Vec<u32> = (0..s.len()).map(|i| (i % 2) as u32).collect();
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            let a = auc(&s, &labels, 1).unwrap();
            let b = auc(&t, &labels, 1).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn risk_policy_cases() {
        let p = RiskPolicy::new(0.25).unwrap();
        assert_eq!(p.group(0.95), RiskGroup::High);
        assert_eq!(p.group(0.10), RiskGroup::Low);
        assert_eq!(p.group(0.60), RiskGroup::Moderate);
        assert_eq!(p.group(0.25), RiskGroup::Low);
        assert_eq!(p.group(0.75), RiskGroup::High);
        assert!(RiskPolicy::new(0.5).is_err());
        assert!(RiskPolicy::new(0.0).is_err());
    }

    #[test]
    fn report_counts_and_aux() {
        let groups = vec![RiskGroup::Low; 4];
        let labels = vec![0, 0, 1, 0];
        let aux = vec![5.0; 4];
        let rows = risk_group_report(&groups, &labels, &[0, 1], Some(&aux), 0.2).unwrap();
        assert_eq!(rows[0].counts, vec![(0, 3), (1, 1)]);
        assert_eq!(rows[0].aux_mean, Some(5.0));
        assert_eq!(rows[0].aux_sd, Some(0.0));
        for r in &rows[1..] {
            assert_eq!(r.total, 0);
            assert_eq!(r.counts, vec![(0, 0), (1, 0)]);
            assert_eq!(r.aux_mean, None);
        }
        let rows = risk_group_report(&groups, &labels, &[0, 1], Some(&[1.0, 2.0, 3.0, 4.0]), 0.2).unwrap();
        assert!((rows[0].aux_sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_identities() {
        let classes = [0, 1];
        let labels = vec![0, 1, 1, 0, 1];
        let perfect: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| if y == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let e = evaluate(&perfect, &labels, &classes).unwrap();
        assert!(e.per_class.iter().all(|c| c.nll == Some(0.0) && c.brier == Some(0.0)));
        let half = vec![vec![0.5, 0.5]; 5];
        let e = evaluate(&half, &labels, &classes).unwrap();
        assert!(e.per_class.iter().all(|c| c.brier == Some(0.25)));
        let single = evaluate(&[vec![1.0 - (-1f64).exp(), (-1f64).exp()]], &[1], &classes).unwrap();
        assert!((single.per_class[1].nll.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(single.per_class[0].nll, None);
    }

    #[test]
    fn weighted_nll_decomposition() {
        let mut r = stream(3, 0);
        let labels: Vec<u32> = (0..101).map(|i| u32::from(i % 3 == 0)).collect();
        let probs: Vec<Vec<f64>> = labels
            .iter()
            .map(|_| {
                let p = open01(&mut r);
                vec![1.0 - p, p]
            })
            .collect();
        let e = evaluate(&probs, &labels, &[0, 1]).unwrap();
        let weighted: f64 = e
            .per_class
            .iter()
            .map(|c| c.n as f64 * c.nll.unwrap())
            .sum::<f64>()
            / e.n as f64;
        assert!((weighted - e.nll_mean).abs() < 1e-12);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 1).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 0, 1], 1).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[1, 1], 1).unwrap_err().kind(), "DegenerateLabels");
        let mut r = stream(9, 1);
        let s: Vec<f64> = (0..10_000).map(|_| open01(&mut r)).collect();
        let l: Vec<u32> = (0..10_000).map(|i| (i % 2) as u32).collect();
        assert!((auc(&s, &l, 1).unwrap() - 0.5).abs() < 0.02);
    }

    fn two_class_data(n0: usize, n1: usize) -> Dataset {
        let mut r = stream(11, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (class, n) in [(0u32, n0), (1u32, n1)] {
            for _ in 0..n {
                let z = open01(&mut r) + class as f64;
                let k = if open01(&mut r) < 0.3 + 0.3 * class as f64 { 2.0 } else { 1.0 };
                rows.push(vec![z + 0.2 * open01(&mut r), k]);
                labels.push(class);
            }
        }
        let schema = Schema::new(vec![VariableSpec::continuous("x"), VariableSpec::ordinal("k", 2)]).unwrap();
        Dataset::from_rows(schema, &rows, Some(labels), None).unwrap()
    }

    #[test]
    fn fit_priors_and_errors() {
        let d = two_class_data(60, 40);
        let m = fit_classifier(&d, &ClassifierConfig::default()).unwrap();
        assert_eq!(m.classes(), &[0, 1]);
        assert_eq!(m.priors(), &[0.5, 0.5]);
        let cfg = ClassifierConfig {
            priors: PriorMode::Empirical,
            ..Default::default()
        };
        let m = fit_classifier(&d, &cfg).unwrap();
        assert!((m.priors()[0] - 0.6).abs() < 1e-12);
        let post = m.posteriors(&d).unwrap();
        assert!(post.iter().all(|p| (p[0] + p[1] - 1.0).abs() < 1e-12));
        let again = ClassifierModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(again.posteriors(&d).unwrap(), post);

        let single = d.subset(&(0..60).collect::<Vec<_>>());
        assert_eq!(
            fit_classifier(&single, &ClassifierConfig::default()).unwrap_err().kind(),
            "DegenerateLabels"
        );
        let small = d.subset(&(0..69).collect::<Vec<_>>());
        assert_eq!(
            fit_classifier(&small, &ClassifierConfig::default()).unwrap_err().kind(),
            "ClassTooSmall"
        );
    }
}
