//! Univariate margins: Gaussian kernel and empirical CDFs for continuous
//! variables, smoothed categorical distributions for ordinal ones.

use serde::{Deserialize, Serialize};

use crate::data::{VariableKind, VariableSpec};
use crate::error::{Error, Result};
use crate::numeric::{clamp_unit, norm_cdf, norm_pdf, quantile_sorted, sample_variance};

/// Pseudo-count added to every ordinal level.
pub const ORDINAL_PSEUDO_COUNT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginMethod {
    Kernel,
    Empirical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarginModel {
    KernelContinuous {
        centers: Vec<f64>,
        bandwidth: f64,
        min: f64,
        max: f64,
    },
    /// Piecewise-linear interpolation of `(x_(i), rank_i / (n + 1))` over the
    /// distinct sorted values, with linear tails of one average spacing.
    EmpiricalContinuous { values: Vec<f64>, cum: Vec<f64>, spacing: f64 },
    OrdinalCategorical { probs: Vec<f64> },
}

fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sd = sample_variance(xs).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Fits a margin to one column.
pub fn fit_margin(column: &[f64], spec: &VariableSpec, method: MarginMethod) -> Result<MarginModel> {
    match (spec.kind, method) {
        (VariableKind::Continuous, MarginMethod::Kernel | MarginMethod::Empirical) => {
            if column.len() < 2 {
                return Err(Error::TooFewObservations {
                    needed: 2,
                    got: column.len(),
                });
            }
            let (min, max) = column
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            if max <= min {
                return Err(Error::DegenerateMargin(spec.name.clone()));
            }
            if method == MarginMethod::Kernel {
                Ok(MarginModel::KernelContinuous {
                    centers: column.to_vec(),
                    bandwidth: silverman_bandwidth(column),
                    min,
                    max,
                })
            } else {
                let mut sorted = column.to_vec();
                sorted.sort_by(f64::total_cmp);
                let n1 = (sorted.len() + 1) as f64;
                let mut values: Vec<f64> = Vec::new();
                let mut cum: Vec<f64> = Vec::new();
                for (i, &x) in sorted.iter().enumerate() {
                    if values.last() == Some(&x) {
                        *cum.last_mut().unwrap() = (i + 1) as f64 / n1;
                    } else {
                        values.push(x);
                        cum.push((i + 1) as f64 / n1);
                    }
                }
                let spacing = (max - min) / (values.len() - 1) as f64;
                Ok(MarginModel::EmpiricalContinuous {
                    values,
                    cum,
                    spacing,
                })
            }
        }
        (VariableKind::Ordinal, MarginMethod::Categorical) => {
            let levels = spec.level_count() as usize;
            let mut counts = vec![0.0; levels];
            for &x in column {
                if !spec.admits(x) {
                    return Err(Error::OrdinalOutOfRange {
                        row: 0,
                        column: spec.name.clone(),
                        value: x.to_string(),
                        levels: levels as u32,
                    });
                }
                counts[x as usize - 1] += 1.0;
            }
            let total = column.len() as f64 + ORDINAL_PSEUDO_COUNT * levels as f64;
            let probs = counts
                .iter()
                .map(|c| (c + ORDINAL_PSEUDO_COUNT) / total)
                .collect();
            Ok(MarginModel::ordinal_from_probs(probs))
        }
        (kind, method) => Err(Error::InvalidArgument(format!(
            "margin method {method:?} is incompatible with {kind:?} variable `{}`",
            spec.name
        ))),
    }
}

/// Unsmoothed relative level frequencies of an ordinal column.
pub fn level_frequencies(column: &[f64], levels: u32) -> Vec<f64> {
    let mut counts = vec![0.0; levels as usize];
    for &x in column {
        counts[x as usize - 1] += 1.0;
    }
    counts.iter().map(|c| c / column.len() as f64).collect()
}

impl MarginModel {
    /// Builds an ordinal margin from level probabilities, renormalized to sum to 1.
    pub fn ordinal_from_probs(probs: Vec<f64>) -> Self {
        let s: f64 = probs.iter().sum();
        MarginModel::OrdinalCategorical {
            probs: probs.into_iter().map(|p| p / s).collect(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MarginModel::OrdinalCategorical { .. })
    }

    /// Exact (unclamped) distribution function.
    pub fn cdf_unclamped(&self, x: f64) -> f64 {
        match self {
            MarginModel::KernelContinuous {
                centers, bandwidth, ..
            } => {
                centers
                    .iter()
                    .map(|c| norm_cdf((x - c) / bandwidth))
                    .sum::<f64>()
                    / centers.len() as f64
            }
            MarginModel::EmpiricalContinuous {
                values,
                cum,
                spacing,
            } => {
                let first = values[0];
                let last = *values.last().unwrap();
                if x <= first {
                    (cum[0] * (1.0 - (first - x) / spacing)).max(0.0)
                } else if x >= last {
                    let top = *cum.last().unwrap();
                    (top + (1.0 - top) * (x - last) / spacing).min(1.0)
                } else {
                    let k = values.partition_point(|&v| v <= x);
                    let (x0, x1) = (values[k - 1], values[k]);
                    cum[k - 1] + (cum[k] - cum[k - 1]) * (x - x0) / (x1 - x0)
                }
            }
            MarginModel::OrdinalCategorical { probs } => {
                if x < 1.0 {
                    return 0.0;
                }
                let k = (x.floor() as usize).min(probs.len());
                probs[..k].iter().sum::<f64>().min(1.0)
            }
        }
    }

    /// Left limit `F(x - 1)` for ordinal margins, unclamped.
    pub fn cdf_left_unclamped(&self, x: f64) -> Result<f64> {
        match self {
            MarginModel::OrdinalCategorical { .. } => Ok(self.cdf_unclamped(x - 1.0)),
            _ => Err(Error::InvalidArgument(
                "left-limit CDF is defined for ordinal margins only".into(),
            )),
        }
    }

    /// Distribution function clamped to `[EPS, 1 - EPS]`.
    pub fn cdf(&self, x: f64) -> f64 {
        clamp_unit(self.cdf_unclamped(x))
    }

    /// `F(x - 1)` for ordinal margins; `EPS` at the lowest level.
    pub fn cdf_left(&self, x: f64) -> Result<f64> {
        self.cdf_left_unclamped(x).map(clamp_unit)
    }

    /// Density for continuous margins, probability mass for ordinal ones.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            MarginModel::KernelContinuous {
                centers, bandwidth, ..
            } => {
                centers
                    .iter()
                    .map(|c| norm_pdf((x - c) / bandwidth))
                    .sum::<f64>()
                    / (centers.len() as f64 * bandwidth)
            }
            MarginModel::EmpiricalContinuous {
                values,
                cum,
                spacing,
            } => {
                let first = values[0];
                let last = *values.last().unwrap();
                if x < first - spacing || x > last + spacing {
                    0.0
                } else if x < first {
                    cum[0] / spacing
                } else if x >= last {
                    (1.0 - cum.last().unwrap()) / spacing
                } else {
                    let k = values.partition_point(|&v| v <= x);
                    (cum[k] - cum[k - 1]) / (values[k] - values[k - 1])
                }
            }
            MarginModel::OrdinalCategorical { probs } => {
                if x.fract() == 0.0 && x >= 1.0 && x <= probs.len() as f64 {
                    probs[x as usize - 1]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {u} outside (0,1)")));
        }
        Ok(match self {
            MarginModel::OrdinalCategorical { probs } => {
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if acc >= u {
                        return Ok((k + 1) as f64);
                    }
                }
                probs.len() as f64
            }
            MarginModel::KernelContinuous {
                bandwidth, min, max, ..
            } => self.invert(u, min - 40.0 * bandwidth, max + 40.0 * bandwidth),
            MarginModel::EmpiricalContinuous {
                values, spacing, ..
            } => self.invert(u, values[0] - spacing, values.last().unwrap() + spacing),
        })
    }

    // Safeguarded Newton on a continuous, nondecreasing CDF.
    fn invert(&self, u: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf_unclamped(x) - u;
            if f.abs() < 1e-15 {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.density(x);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-13 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    /// `(F(x), F(x-1))` for ordinal margins and `(F(x), F(x))` otherwise.
    pub fn pseudo_obs(&self, x: f64) -> (f64, f64) {
        let up = self.cdf(x);
        if self.is_discrete() {
            (up, self.cdf(x - 1.0).min(up))
        } else {
            (up, up)
        }
    }
}

/// Fits one margin per schema variable, using `continuous` for continuous
/// columns and categorical fits for ordinal ones.
pub fn fit_margins(
    data: &crate::data::Dataset,
    continuous: MarginMethod,
) -> Result<Vec<MarginModel>> {
    data.schema()
        .vars()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let method = if spec.is_discrete() {
                MarginMethod::Categorical
            } else {
                continuous
            };
            fit_margin(data.column(j), spec, method)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::quadrature::integrate;
    use crate::numeric::EPS;
    use proptest::prelude::*;

    fn ord3() -> MarginModel {
        MarginModel::ordinal_from_probs(vec![0.5, 0.3, 0.2])
    }

    #[test]
    fn ordinal_frequencies_match_table() {
        let mut col = vec![1.0; 327];
        col.extend(vec![2.0; 118]);
        col.extend(vec![3.0; 73]);
        let raw = level_frequencies(&col, 3);
        assert!((raw[0] - 0.631).abs() < 5e-4);
        assert!((raw[1] - 0.228).abs() < 5e-4);
        assert!((raw[2] - 0.141).abs() < 5e-4);
        let m = fit_margin(&col, &VariableSpec::ordinal("b", 3), MarginMethod::Categorical).unwrap();
        if let MarginModel::OrdinalCategorical { probs } = &m {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, r) in probs.iter().zip(&raw) {
                assert!((p - r).abs() < 1e-3);
            }
        } else {
            panic!()
        }
    }

    #[test]
    fn zero_count_level_is_smoothed() {
        let col = vec![1.0, 1.0, 2.0];
        let m = fit_margin(&col, &VariableSpec::ordinal("b", 3), MarginMethod::Categorical).unwrap();
        assert!(m.density(3.0) > 0.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let e = fit_margin(&[2.0; 10], &VariableSpec::continuous("x"), MarginMethod::Kernel);
        assert_eq!(e.unwrap_err().kind(), "DegenerateMargin");
    }

    #[test]
    fn method_kind_mismatch() {
        let e = fit_margin(&[1.0, 2.0], &VariableSpec::continuous("x"), MarginMethod::Categorical);
        assert_eq!(e.unwrap_err().kind(), "InvalidArgument");
    }

    #[test]
    fn empirical_rank_scaling() {
        let m = fit_margin(&[0.0, 1.0], &VariableSpec::continuous("x"), MarginMethod::Empirical)
            .unwrap();
        assert!((m.cdf(0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.cdf(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ordinal_cdf_and_left_limit() {
        let m = ord3();
        assert!((m.cdf(2.0) - 0.8).abs() < 1e-15);
        assert!((m.cdf_left(2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(m.cdf_left(1.0).unwrap(), EPS);
        for k in 1..=3 {
            let k = k as f64;
            let diff = m.cdf_unclamped(k) - m.cdf_left_unclamped(k).unwrap();
            assert!((diff - m.density(k)).abs() < 1e-15);
        }
        let total: f64 = (1..=3)
            .map(|k| m.cdf_unclamped(k as f64) - m.cdf_left_unclamped(k as f64).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(m.quantile(0.75).unwrap(), 2.0);
        assert_eq!(m.quantile(0.5).unwrap(), 1.0);
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn left_limit_rejects_continuous() {
        let m = fit_margin(&[0.0, 1.0, 3.0], &VariableSpec::continuous("x"), MarginMethod::Kernel)
            .unwrap();
        assert!(m.cdf_left(1.0).is_err());
    }

    fn sample_column(n: usize) -> Vec<f64> {
        // deterministic, symmetric around 10
        (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                10.0 + 2.0 * crate::numeric::norm_quantile(p)
            })
            .collect()
    }

    #[test]
    fn kernel_median_and_clamp() {
        let col = sample_column(501);
        let m = fit_margin(&col, &VariableSpec::continuous("x"), MarginMethod::Kernel).unwrap();
        assert!((m.cdf(10.0) - 0.5).abs() < 0.05);
        assert_eq!(m.cdf(-1e6), EPS);
        assert!((m.quantile(0.5).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_density_integrates_to_one() {
        let col = sample_column(200);
        let m = fit_margin(&col, &VariableSpec::continuous("x"), MarginMethod::Kernel).unwrap();
        if let MarginModel::KernelContinuous {
            bandwidth, min, max, ..
        } = &m
        {
            let v = integrate(
                |x| m.density(x),
                min - 5.0 * bandwidth,
                max + 5.0 * bandwidth,
                1e-10,
                1e-10,
            );
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn empirical_density_integrates_to_one() {
        let col = vec![0.3, 1.2, 1.2, 2.0, 5.5];
        let m = fit_margin(&col, &VariableSpec::continuous("x"), MarginMethod::Empirical).unwrap();
        let mut knots = vec![-3.0, 0.3 - 5.2 / 3.0, 0.3, 1.2, 2.0, 5.5, 5.5 + 5.2 / 3.0, 9.0];
        knots.sort_by(f64::total_cmp);
        let v: f64 = knots
            .windows(2)
            .map(|w| integrate(|x| m.density(x), w[0], w[1], 1e-12, 1e-12))
            .sum();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn continuous_round_trip_on_grid() {
        let col = sample_column(300);
        for method in [MarginMethod::Kernel, MarginMethod::Empirical] {
            let m = fit_margin(&col, &VariableSpec::continuous("x"), method).unwrap();
            let (lo, hi) = (col[0], col[col.len() - 1]);
            let range = hi - lo;
            for i in 1..=100 {
                let x = lo + range * i as f64 / 101.0;
                let back = m.quantile(m.cdf(x)).unwrap();
                assert!((back - x).abs() < 1e-6 * range, "{method:?} {x} {back}");
            }
        }
    }

    proptest! {
        #[test]
        fn cdf_monotone(a in -5.0f64..25.0, b in -5.0f64..25.0) {
            let col = sample_column(50);
            let (x1, x2) = if a < b { (a, b) } else { (b, a) };
            for method in [MarginMethod::Kernel, MarginMethod::Empirical] {
                let m = fit_margin(&col, &VariableSpec::continuous("x"), method).unwrap();
                prop_assert!(m.cdf(x1) <= m.cdf(x2));
            }
            let o = ord3();
            prop_assert!(o.cdf(x1.round()) <= o.cdf(x2.round()));
        }
    }
}
