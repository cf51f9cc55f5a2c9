//! Latent Gaussian correlations between mixed-type columns, and partial
//! correlations derived from them for structure selection.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::optimize::brent_minimize;
use crate::numeric::{bvn_cdf, norm_cdf, norm_quantile, DENSITY_FLOOR};
use crate::rank::{normal_scores, pearson};

const RHO_LIMIT: f64 = 0.999;
const EIGEN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Unit,
    Pearson,
    Polyserial,
    Polychoric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    values: Vec<Vec<f64>>,
    tags: Vec<Vec<Estimator>>,
    repaired: bool,
}

/// Pearson correlation of the normal scores of two continuous columns.
pub fn normal_scores_pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 3 || x.len() != y.len() {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: x.len().min(y.len()),
        });
    }
    pearson(&normal_scores(x), &normal_scores(y))
        .map(|r| r.clamp(-RHO_LIMIT, RHO_LIMIT))
        .ok_or_else(|| Error::DegenerateInput("constant column in normal-scores correlation".into()))
}

/// Thresholds `Phi^{-1}` of the cumulative level proportions, padded with
/// `-inf` and `+inf`; index `k` bounds level `k` from above.
pub(crate) fn thresholds(codes: &[f64], levels: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; levels];
    for &k in codes {
        let i = k as usize;
        if k.fract() != 0.0 || i < 1 || i > levels {
            return Err(Error::InvalidArgument(format!(
                "ordinal code {k} outside 1..{levels}"
            )));
        }
        counts[i - 1] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateInput(
            "ordinal column has fewer than two observed levels".into(),
        ));
    }
    let n = codes.len() as f64;
    let mut t = vec![f64::NEG_INFINITY];
    let mut acc = 0usize;
    for &c in &counts[..levels - 1] {
        acc += c;
        t.push(norm_quantile(acc as f64 / n));
    }
    t.push(f64::INFINITY);
    Ok(t)
}

fn maximize_rho<F: Fn(f64) -> f64>(loglik: F) -> Result<f64> {
    let m = brent_minimize(|r| -loglik(r), -RHO_LIMIT, RHO_LIMIT, Some(0.0), 1e-9, 300);
    if !m.fx.is_finite() {
        return Err(Error::NonConvergence("latent correlation likelihood".into()));
    }
    Ok(m.x.clamp(-RHO_LIMIT, RHO_LIMIT))
}

/// Two-step polyserial correlation between a continuous column and an
/// ordinal column with `levels` levels.
pub fn polyserial(x: &[f64], k: &[f64], levels: u32) -> Result<f64> {
    if x.len() < 10 || x.len() != k.len() {
        return Err(Error::TooFewObservations {
            needed: 10,
            got: x.len().min(k.len()),
        });
    }
    let t = thresholds(k, levels as usize)?;
    let z = normal_scores(x);
    if z.iter().all(|&v| v == z[0]) {
        return Err(Error::DegenerateInput("constant continuous column".into()));
    }
    maximize_rho(|r| {
        let s = (1.0 - r * r).sqrt();
        z.iter()
            .zip(k)
            .map(|(&zi, &ki)| {
                let ki = ki as usize;
                let p = norm_cdf((t[ki] - r * zi) / s) - norm_cdf((t[ki - 1] - r * zi) / s);
                p.max(DENSITY_FLOOR).ln()
            })
            .sum()
    })
}

fn level_count(k: &[f64]) -> usize {
    k.iter().fold(0.0f64, |m, &v| m.max(v)) as usize
}

/// Two-step polychoric correlation between two ordinal columns.
pub fn polychoric(k1: &[f64], k2: &[f64]) -> Result<f64> {
    polychoric_with_levels(k1, k2, level_count(k1), level_count(k2))
}

pub fn polychoric_with_levels(k1: &[f64], k2: &[f64], l1: usize, l2: usize) -> Result<f64> {
    if k1.len() != k2.len() || k1.is_empty() {
        return Err(Error::InvalidArgument("polychoric inputs differ in length".into()));
    }
    let t1 = thresholds(k1, l1)?;
    let t2 = thresholds(k2, l2)?;
    let mut table = vec![vec![0usize; l2]; l1];
    for (&a, &b) in k1.iter().zip(k2) {
        table[a as usize - 1][b as usize - 1] += 1;
    }
    let cells: Vec<(usize, usize, f64)> = (0..l1)
        .flat_map(|a| (0..l2).map(move |b| (a, b)))
        .filter(|&(a, b)| table[a][b] > 0)
        .map(|(a, b)| (a, b, table[a][b] as f64))
        .collect();
    maximize_rho(|r| {
        cells
            .iter()
            .map(|&(a, b, n)| {
                let p = bvn_cdf(t1[a + 1], t2[b + 1], r) - bvn_cdf(t1[a], t2[b + 1], r)
                    - bvn_cdf(t1[a + 1], t2[b], r)
                    + bvn_cdf(t1[a], t2[b], r);
                n * p.max(DENSITY_FLOOR).ln()
            })
            .sum()
    })
}

impl LatentMatrix {
    /// Wraps a correlation matrix; used for tests and externally supplied matrices.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let d = values.len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidArgument("latent matrix must be square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if (v - values[j][i]).abs() > 1e-12 || (i == j && v != 1.0) || (i != j && v.abs() >= 1.0) {
                    return Err(Error::InvalidArgument(
                        "latent matrix must be symmetric with unit diagonal and entries in (-1,1)".into(),
                    ));
                }
            }
        }
        let tags = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { Estimator::Unit } else { Estimator::Pearson })
                    .collect()
            })
            .collect();
        Ok(LatentMatrix {
            values,
            tags,
            repaired: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a][b]
    }

    pub fn estimator(&self, a: usize, b: usize) -> Estimator {
        self.tags[a][b]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Whether eigenvalue clipping was applied.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![String::new()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| crate::format::sig6(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairwise latent correlations with the estimator chosen by column kinds,
/// repaired to positive definiteness when needed.
pub fn latent_matrix(data: &Dataset) -> Result<LatentMatrix> {
    let d = data.n_vars();
    let vars = data.schema().vars();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect();
    let estimates: Vec<(f64, Estimator)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (data.column(i), data.column(j));
            match (vars[i].is_discrete(), vars[j].is_discrete()) {
                (false, false) => normal_scores_pearson(x, y).map(|r| (r, Estimator::Pearson)),
                (false, true) => {
                    polyserial(x, y, vars[j].level_count()).map(|r| (r, Estimator::Polyserial))
                }
                (true, false) => {
                    polyserial(y, x, vars[i].level_count()).map(|r| (r, Estimator::Polyserial))
                }
                (true, true) => polychoric_with_levels(
                    x,
                    y,
                    vars[i].level_count() as usize,
                    vars[j].level_count() as usize,
                )
                .map(|r| (r, Estimator::Polychoric)),
            }
        })
        .collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; d]; d];
    let mut tags = vec![vec![Estimator::Unit; d]; d];
    for i in 0..d {
        values[i][i] = 1.0;
    }
    for (&(i, j), &(r, tag)) in pairs.iter().zip(&estimates) {
        values[i][j] = r;
        values[j][i] = r;
        tags[i][j] = tag;
        tags[j][i] = tag;
    }
    let repaired = repair_positive_definite(&mut values);
    Ok(LatentMatrix {
        values,
        tags,
        repaired,
    })
}

/// Clips eigenvalues below `1e-6` and rescales to unit diagonal. Returns
/// whether the matrix changed.
pub fn repair_positive_definite(values: &mut [Vec<f64>]) -> bool {
    let d = values.len();
    if d < 2 {
        return false;
    }
    let m = DMatrix::from_fn(d, d, |i, j| values[i][j]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.min() >= EIGEN_FLOOR {
        return false;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    for i in 0..d {
        for j in 0..d {
            let s = (rebuilt[(i, i)] * rebuilt[(j, j)]).sqrt();
            values[i][j] = if i == j { 1.0 } else { (rebuilt[(i, j)] / s).clamp(-RHO_LIMIT, RHO_LIMIT) };
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            values[j][i] = values[i][j];
        }
    }
    true
}

/// Partial correlation `rho_{ab;S}` by the standard recursion, removing the
/// largest index of `S` at each step.
pub fn partial_correlation(m: &LatentMatrix, a: usize, b: usize, s: &[usize]) -> Result<f64> {
    let d = m.dim();
    if a == b || a >= d || b >= d || s.iter().any(|&c| c == a || c == b || c >= d) {
        return Err(Error::InvalidArgument(format!(
            "invalid partial correlation indices ({a}, {b} | {s:?})"
        )));
    }
    let mut set = s.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.len() != s.len() {
        return Err(Error::InvalidArgument("duplicate conditioning index".into()));
    }
    let mut memo = HashMap::new();
    partial_rec(m, a.min(b), a.max(b), &set, &mut memo)
}

type Memo = HashMap<(usize, usize, Vec<usize>), f64>;

fn partial_rec(m: &LatentMatrix, a: usize, b: usize, s: &[usize], memo: &mut Memo) -> Result<f64> {
    if s.is_empty() {
        return Ok(m.get(a, b));
    }
    let key = (a, b, s.to_vec());
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    let (c, rest) = s.split_last().unwrap();
    let c = *c;
    let r_ab = partial_rec(m, a, b, rest, memo)?;
    let r_ac = partial_rec(m, a.min(c), a.max(c), rest, memo)?;
    let r_bc = partial_rec(m, b.min(c), b.max(c), rest, memo)?;
    let denom = (1.0 - r_ac * r_ac) * (1.0 - r_bc * r_bc);
    if denom < 1e-14 {
        return Err(Error::NearSingular);
    }
    let r = ((r_ab - r_ac * r_bc) / denom.sqrt()).clamp(-1.0, 1.0);
    memo.insert(key, r);
    Ok(r)
}
