//! Fit diagnostics for vines with ordinal conditioning variables:
//! conditional Spearman's rho per category with bootstrap bands, and latent
//! normal scores for continuous-ordinal pairs.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{sig6, sig6_opt};
use crate::latent::{polyserial, thresholds};
use crate::numeric::{norm_cdf, norm_quantile, quantile_sorted};
use crate::rank::{midranks, spearman};
use crate::rng::{key, open01, stream, tags};
use crate::vine::{VineModel, SPEARMAN_SAMPLES};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_BAND_LEVEL: f64 = 0.90;
pub const MIN_REPLICATES: usize = 100;
/// Categories with fewer rows are reported without a correlation.
pub const MIN_CATEGORY_ROWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRho {
    pub category: u32,
    pub n: usize,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryBand {
    pub category: u32,
    pub n: usize,
    pub observed: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Model-implied Spearman's rho of the corresponding pair copula.
    pub modeled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRhoResult {
    pub level: f64,
    pub replicates: usize,
    pub categories: Vec<CategoryBand>,
}

fn check_columns(x: &[f64], y: &[f64], z: &[f64], levels: u32) -> Result<()> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(Error::InvalidArgument("diagnostic columns differ in length".into()));
    }
    if let Some(bad) = z
        .iter()
        .find(|&&k| k.fract() != 0.0 || k < 1.0 || k > levels as f64)
    {
        return Err(Error::InvalidArgument(format!(
            "conditioning code {bad} outside 1..={levels}"
        )));
    }
    Ok(())
}

fn spearman_by_category(x: &[f64], y: &[f64], z: &[f64], rows: &[usize], levels: u32) -> Vec<(usize, Option<f64>)> {
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); levels as usize];
    for &i in rows {
        let g = &mut groups[z[i] as usize - 1];
        g.0.push(x[i]);
        g.1.push(y[i]);
    }
    groups
        .iter()
        .map(|(a, b)| {
            let rho = if a.len() >= MIN_CATEGORY_ROWS {
                spearman(a, b)
            } else {
                None
            };
            (a.len(), rho)
        })
        .collect()
}

/// Spearman's rho of `(x, y)` within each level `1..=levels` of `z`.
pub fn conditional_spearman(x: &[f64], y: &[f64], z: &[f64], levels: u32) -> Result<Vec<CategoryRho>> {
    check_columns(x, y, z, levels)?;
    let rows: Vec<usize> = (0..x.len()).collect();
    Ok(spearman_by_category(x, y, z, &rows, levels)
        .into_iter()
        .enumerate()
        .map(|(c, (n, rho))| CategoryRho {
            category: c as u32 + 1,
            n,
            rho,
        })
        .collect())
}

/// Percentile bootstrap bands for the conditional Spearman's rho. Rows are
/// resampled with replacement; replicate `b` draws from its own stream, so
/// the result depends only on `seed`.
pub fn bootstrap_bands(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    levels: u32,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<ConditionalRhoResult> {
    check_columns(x, y, z, levels)?;
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "{replicates} bootstrap replicates; at least {MIN_REPLICATES} required"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("band level {level} outside (0,1)")));
    }
    let n = x.len();
    let observed = conditional_spearman(x, y, z, levels)?;
    let draws: Vec<Vec<(usize, Option<f64>)>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = stream(seed, key(tags::BOOTSTRAP, b as u64));
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            spearman_by_category(x, y, z, &rows, levels)
        })
        .collect();
    let lo_p = (1.0 - level) / 2.0;
    let categories = observed
        .into_iter()
        .enumerate()
        .map(|(c, obs)| {
            let mut vals: Vec<f64> = if obs.rho.is_some() {
                draws.iter().filter_map(|d| d[c].1).collect()
            } else {
                Vec::new()
            };
            vals.sort_by(f64::total_cmp);
            let band = |p: f64| (!vals.is_empty()).then(|| quantile_sorted(&vals, p));
            CategoryBand {
                category: obs.category,
                n: obs.n,
                observed: obs.rho,
                lower: band(lo_p),
                upper: band(1.0 - lo_p),
                modeled: None,
            }
        })
        .collect();
    Ok(ConditionalRhoResult {
        level,
        replicates,
        categories,
    })
}

impl ConditionalRhoResult {
    /// Sets the model-implied value on every reported category.
    pub fn with_modeled(mut self, rho: f64) -> Self {
        for c in &mut self.categories {
            if c.observed.is_some() {
                c.modeled = Some(rho);
            }
        }
        self
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["category", "n", "observed", "lower", "upper", "modeled"])?;
        for c in &self.categories {
            w.write_record([
                c.category.to_string(),
                c.n.to_string(),
                sig6_opt(c.observed),
                sig6_opt(c.lower),
                sig6_opt(c.upper),
                sig6_opt(c.modeled),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Spearman's rho implied by the pair copula on edge `label`. Under the
/// simplifying assumption the value is the same for every category.
pub fn model_conditional_spearman(v: &VineModel, label: &str, seed: u64) -> Result<f64> {
    let (t, e) = v.find_edge(label)?;
    v.bicop(t, e).spearman_mc(SPEARMAN_SAMPLES, seed)
}

/// Draws from `N(mu, sigma^2)` truncated to `(lo, hi)` by inversion; the
/// result lies strictly inside the interval.
fn truncated_normal<R: Rng>(r: &mut R, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
    let w = open01(r);
    // invert in the lower tail for accuracy, reflecting when the interval
    // lies above the mean
    let z = if a > 0.0 {
        let (pa, pb) = (norm_cdf(-a), norm_cdf(-b));
        -norm_quantile(pb + w * (pa - pb))
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile(pa + w * (pb - pa))
    };
    let v = mu + sigma * z;
    if v.is_nan() {
        return if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo.next_up()
        } else {
            hi.next_down()
        };
    }
    v.clamp(lo.next_up(), hi.next_down())
}

/// Paired scores for a continuous column `x` and an ordinal column `k`: the
/// normal scores of `x`, and for `k` one draw per row from the latent normal
/// conditional on the normal score, restricted to that row's threshold
/// interval.
pub fn latent_normal_scores(x: &[f64], k: &[f64], levels: u32, seed: u64) -> Result<Vec<(f64, f64)>> {
    let rho = polyserial(x, k, levels)?;
    let t = thresholds(k, levels as usize)?;
    let n = x.len() as f64;
    let z: Vec<f64> = midranks(x)
        .iter()
        .map(|r| norm_quantile(r / (n + 1.0)))
        .collect();
    let sigma = (1.0 - rho * rho).sqrt();
    let mut r = stream(seed, key(tags::LATENT_SCORES, 0));
    Ok(z.iter()
        .zip(k)
        .map(|(&zi, &ki)| {
            let c = ki as usize;
            (zi, truncated_normal(&mut r, rho * zi, sigma, t[c - 1], t[c]))
        })
        .collect())
}

pub fn write_scores_csv(path: impl AsRef<Path>, scores: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["z_continuous", "z_latent"])?;
    for (a, b) in scores {
        w.write_record([sig6(*a), sig6(*b)])?;
    }
    w.flush()?;
    Ok(())
}
