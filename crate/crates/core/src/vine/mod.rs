//! Vine copula models for mixed continuous and ordinal data.
//!
//! Pseudo-observations travel through the trees as `(F(x), F(x-1))` pairs.
//! When the conditioning variable of an edge is continuous they are updated
//! with h-functions; when it is discrete the update is the finite difference
//! `[C(u, v+) - C(u, v-)] / (v+ - v-)`. Each edge contributes its copula term
//! divided by the cell masses of its discrete coordinates, so the product of
//! margins and edge terms is the joint density/mass function.

mod structure;

pub use structure::{select_structure, select_structure_levels, EdgeSpec, VineStructure};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::{fit_bicop, Bicop, Direction, Family, PseudoObs, PseudoValue};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margins::MarginModel;
use crate::numeric::{clamp_unit, log_floor};

/// Default prior sparsity base for the modified BIC.
pub const DEFAULT_PSI0: f64 = 0.9;
/// Monte Carlo sample size for Spearman's rho in edge reports.
pub const SPEARMAN_SAMPLES: usize = 100_000;
const CONDITIONAL_MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationSearch {
    /// Stop at the first tree whose edges are all independence.
    #[default]
    Greedy,
    /// Fit every tree and keep the level that minimizes the modified BIC.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineFitOptions {
    /// Candidate families; independence is always added unless `fixed_family` is set.
    pub families: Vec<Family>,
    pub psi0: f64,
    pub truncation: TruncationSearch,
    /// Fit exactly this family on every first-tree edge (no selection, no
    /// higher trees). Falls back to independence if the family cannot be fitted.
    pub fixed_family: Option<Family>,
}

impl Default for VineFitOptions {
    fn default() -> Self {
        VineFitOptions {
            families: Family::ALL.to_vec(),
            psi0: DEFAULT_PSI0,
            truncation: TruncationSearch::Greedy,
            fixed_family: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub n: usize,
    pub psi0: f64,
    /// Sum of marginal log densities/masses on the training data.
    pub margin_loglik: f64,
    /// Copula part of the log-likelihood (sum of edge terms).
    pub copula_loglik: f64,
    pub mbic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineModel {
    structure: VineStructure,
    pair_copulas: Vec<Vec<Bicop>>,
    edge_loglik: Vec<Vec<f64>>,
    truncation_level: usize,
    margins: Vec<MarginModel>,
    fit: Option<FitInfo>,
}

/// Propagated conditional pseudo-observations of one edge:
/// `[F(x | y, D), F(y | x, D)]` for conditioned pair `(x, y)`.
type EdgeColumns = [Vec<PseudoValue>; 2];

fn pseudo_columns(margins: &[MarginModel], columns: &[&[f64]]) -> Vec<Vec<PseudoValue>> {
    margins
        .iter()
        .zip(columns)
        .map(|(m, col)| {
            col.iter()
                .map(|&x| {
                    let (plus, minus) = m.pseudo_obs(x);
                    if m.is_discrete() {
                        PseudoValue::discrete(plus, minus)
                    } else {
                        PseudoValue::continuous(plus)
                    }
                })
                .collect()
        })
        .collect()
}

fn edge_inputs<'a>(
    spec: &EdgeSpec,
    tree: usize,
    base: &'a [Vec<PseudoValue>],
    prev: &'a [EdgeColumns],
    prev_specs: Option<&[EdgeSpec]>,
) -> (&'a [PseudoValue], &'a [PseudoValue]) {
    if tree == 0 {
        return (&base[spec.conditioned.0], &base[spec.conditioned.1]);
    }
    let specs = prev_specs.expect("previous tree present");
    let pick = |node: usize, var: usize| -> &'a [PseudoValue] {
        let side = if specs[node].conditioned.0 == var { 0 } else { 1 };
        &prev[node][side]
    };
    (
        pick(spec.nodes.0, spec.conditioned.0),
        pick(spec.nodes.1, spec.conditioned.1),
    )
}

fn pair_obs(u: &[PseudoValue], v: &[PseudoValue]) -> Vec<PseudoObs> {
    u.iter().zip(v).map(|(&u, &v)| PseudoObs { u, v }).collect()
}

fn conditional(b: &Bicop, given: PseudoValue, target: f64, target_is_u: bool) -> f64 {
    let value = if given.discrete {
        let mass = (given.plus - given.minus).max(CONDITIONAL_MASS_FLOOR);
        if target_is_u {
            (b.cdf(target, given.plus) - b.cdf(target, given.minus)) / mass
        } else {
            (b.cdf(given.plus, target) - b.cdf(given.minus, target)) / mass
        }
    } else if target_is_u {
        b.hfunc(target, given.plus, Direction::OneGivenTwo)
    } else {
        b.hfunc(given.plus, target, Direction::TwoGivenOne)
    };
    clamp_unit(value)
}

fn propagate_one(b: &Bicop, target: PseudoValue, given: PseudoValue, target_is_u: bool) -> PseudoValue {
    let plus = conditional(b, given, target.plus, target_is_u);
    if target.discrete {
        let minus = conditional(b, given, target.minus, target_is_u).min(plus);
        PseudoValue::discrete(plus, minus)
    } else {
        PseudoValue::continuous(plus)
    }
}

fn propagate(b: &Bicop, u: &[PseudoValue], v: &[PseudoValue]) -> EdgeColumns {
    if b.is_independence() {
        return [u.to_vec(), v.to_vec()];
    }
    let first = u
        .iter()
        .zip(v)
        .map(|(&a, &c)| propagate_one(b, a, c, true))
        .collect();
    let second = u
        .iter()
        .zip(v)
        .map(|(&a, &c)| propagate_one(b, c, a, false))
        .collect();
    [first, second]
}

fn edge_term(b: &Bicop, o: &PseudoObs) -> f64 {
    if b.is_independence() {
        0.0
    } else {
        b.log_contribution(o) - o.u.mass().ln() - o.v.mass().ln()
    }
}

/// Candidate score of one edge under the modified BIC.
pub fn edge_mbic(loglik_relative: f64, n_params: usize, n: usize, psi_m: f64, independence: bool) -> f64 {
    if independence {
        -2.0 * (1.0 - psi_m).ln()
    } else {
        -2.0 * loglik_relative + n_params as f64 * (n as f64).ln() - 2.0 * psi_m.ln()
    }
}

struct EdgeChoice {
    bicop: Bicop,
    loglik: f64,
}

fn choose_edge(obs: &[PseudoObs], opts: &VineFitOptions, n: usize, psi_m: f64) -> EdgeChoice {
    let discrete = obs.first().is_some_and(|o| o.u.discrete || o.v.discrete);
    if let Some(family) = opts.fixed_family {
        let best = family
            .rotations()
            .iter()
            .filter_map(|&rot| fit_bicop(family, rot, obs).ok())
            .max_by(|a, b| a.loglik_relative.total_cmp(&b.loglik_relative));
        return match best {
            Some(f) => EdgeChoice {
                bicop: f.bicop,
                loglik: f.loglik_relative,
            },
            None => EdgeChoice {
                bicop: Bicop::independence(),
                loglik: 0.0,
            },
        };
    }
    let mut best = EdgeChoice {
        bicop: Bicop::independence(),
        loglik: 0.0,
    };
    let mut best_score = edge_mbic(0.0, 0, n, psi_m, true);
    for &family in &opts.families {
        if family == Family::Independence || (discrete && family == Family::StudentT) {
            continue;
        }
        for &rot in family.rotations() {
            let Ok(f) = fit_bicop(family, rot, obs) else {
                continue;
            };
            let score = edge_mbic(f.loglik_relative, f.bicop.parameter_count(), n, psi_m, false);
            if score < best_score {
                best_score = score;
                best = EdgeChoice {
                    bicop: f.bicop,
                    loglik: f.loglik_relative,
                };
            }
        }
    }
    best
}

/// Fits a vine to `data` with the given margins and structure. Pair-copula
/// families are selected edge by edge with the modified BIC and the vine is
/// truncated according to `opts.truncation`.
pub fn fit_vine(
    data: &Dataset,
    margins: &[MarginModel],
    structure: &VineStructure,
    opts: &VineFitOptions,
) -> Result<VineModel> {
    let n = data.n_rows();
    if n < 10 {
        return Err(Error::TooFewObservations { needed: 10, got: n });
    }
    let d = data.n_vars();
    if margins.len() != d || structure.dim() != d {
        return Err(Error::SchemaMismatch(format!(
            "vine over {} variables given {} margins and {} columns",
            structure.dim(),
            margins.len(),
            d
        )));
    }
    if !(opts.psi0 > 0.0 && opts.psi0 < 1.0) {
        return Err(Error::InvalidArgument(format!("psi0 {} outside (0,1)", opts.psi0)));
    }
    let cols: Vec<&[f64]> = (0..d).map(|j| data.column(j)).collect();
    let base = pseudo_columns(margins, &cols);
    let n_trees = if opts.fixed_family.is_some() {
        structure.trees().len().min(1)
    } else {
        structure.trees().len()
    };
    let mut pair_copulas: Vec<Vec<Bicop>> = Vec::new();
    let mut edge_loglik: Vec<Vec<f64>> = Vec::new();
    let mut improvement: Vec<f64> = Vec::new();
    let mut prev: Vec<EdgeColumns> = Vec::new();
    for t in 0..n_trees {
        let specs = &structure.trees()[t];
        let prev_specs = if t == 0 { None } else { Some(structure.trees()[t - 1].as_slice()) };
        let psi_m = opts.psi0.powi(t as i32 + 1);
        let results: Vec<(EdgeChoice, EdgeColumns)> = specs
            .par_iter()
            .map(|spec| {
                let (u, v) = edge_inputs(spec, t, &base, &prev, prev_specs);
                let obs = pair_obs(u, v);
                let choice = choose_edge(&obs, opts, n, psi_m);
                let next = if t + 1 < n_trees {
                    propagate(&choice.bicop, u, v)
                } else {
                    [Vec::new(), Vec::new()]
                };
                (choice, next)
            })
            .collect();
        let mut copulas = Vec::new();
        let mut lls = Vec::new();
        let mut next_prev = Vec::new();
        let mut delta = 0.0;
        for (choice, cols) in results {
            let indep = edge_mbic(0.0, 0, n, psi_m, true);
            delta += if choice.bicop.is_independence() {
                0.0
            } else {
                edge_mbic(choice.loglik, choice.bicop.parameter_count(), n, psi_m, false) - indep
            };
            copulas.push(choice.bicop);
            lls.push(choice.loglik);
            next_prev.push(cols);
        }
        let all_independent = copulas.iter().all(Bicop::is_independence);
        pair_copulas.push(copulas);
        edge_loglik.push(lls);
        improvement.push(delta);
        prev = next_prev;
        if all_independent && opts.truncation == TruncationSearch::Greedy {
            break;
        }
    }
    let truncation_level = match opts.truncation {
        _ if opts.fixed_family.is_some() => n_trees,
        TruncationSearch::Greedy => improvement
            .iter()
            .position(|&x| x >= 0.0)
            .unwrap_or(improvement.len()),
        TruncationSearch::Full => {
            let mut best = (0usize, 0.0f64);
            let mut acc = 0.0;
            for (k, &dlt) in improvement.iter().enumerate() {
                acc += dlt;
                if acc < best.1 {
                    best = (k + 1, acc);
                }
            }
            best.0
        }
    };
    for t in 0..structure.trees().len() {
        let width = structure.trees()[t].len();
        if t >= pair_copulas.len() {
            pair_copulas.push(vec![Bicop::independence(); width]);
            edge_loglik.push(vec![0.0; width]);
        } else if t >= truncation_level {
            pair_copulas[t] = vec![Bicop::independence(); width];
            edge_loglik[t] = vec![0.0; width];
        }
    }
    let mut model = VineModel {
        structure: structure.clone(),
        pair_copulas,
        edge_loglik,
        truncation_level,
        margins: margins.to_vec(),
        fit: None,
    };
    let margin_loglik: f64 = (0..d)
        .map(|j| cols[j].iter().map(|&x| log_floor(margins[j].density(x))).sum::<f64>())
        .sum();
    let copula_loglik: f64 = model.edge_loglik.iter().flatten().sum();
    let mbic = model.mbic_from_loglik(copula_loglik, n, opts.psi0);
    model.fit = Some(FitInfo {
        n,
        psi0: opts.psi0,
        margin_loglik,
        copula_loglik,
        mbic,
    });
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub tree: usize,
    pub label: String,
    pub family: Family,
    pub rotation: u16,
    pub params: Vec<f64>,
    pub copula: String,
    pub tau: f64,
    pub spearman: f64,
    pub loglik: f64,
}

impl VineModel {
    /// Assembles a model from explicit pair-copulas (one vector per tree).
    pub fn from_parts(
        structure: VineStructure,
        pair_copulas: Vec<Vec<Bicop>>,
        margins: Vec<MarginModel>,
        truncation_level: usize,
    ) -> Result<Self> {
        structure.validate()?;
        if margins.len() != structure.dim() {
            return Err(Error::SchemaMismatch("margin count differs from vine dimension".into()));
        }
        if pair_copulas.len() != structure.trees().len()
            || pair_copulas
                .iter()
                .zip(structure.trees())
                .any(|(c, t)| c.len() != t.len())
        {
            return Err(Error::InvalidArgument("pair-copula layout differs from the structure".into()));
        }
        if truncation_level > structure.trees().len() {
            return Err(Error::InvalidArgument("truncation level exceeds the tree count".into()));
        }
        for b in pair_copulas.iter().flatten() {
            b.validate()?;
        }
        let mut pair_copulas = pair_copulas;
        for tree in pair_copulas.iter_mut().skip(truncation_level) {
            for b in tree.iter_mut() {
                *b = Bicop::independence();
            }
        }
        let edge_loglik = pair_copulas.iter().map(|t| vec![0.0; t.len()]).collect();
        Ok(VineModel {
            structure,
            pair_copulas,
            edge_loglik,
            truncation_level,
            margins,
            fit: None,
        })
    }

    /// Checks structural and parametric invariants, e.g. after loading JSON.
    pub fn validate(&self) -> Result<()> {
        VineModel::from_parts(
            self.structure.clone(),
            self.pair_copulas.clone(),
            self.margins.clone(),
            self.truncation_level,
        )
        .and_then(|m| {
            if m.pair_copulas == self.pair_copulas {
                Ok(())
            } else {
                Err(Error::InvalidArgument(
                    "non-independence pair-copula beyond the truncation level".into(),
                ))
            }
        })
    }

    pub fn structure(&self) -> &VineStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn pair_copulas(&self) -> &[Vec<Bicop>] {
        &self.pair_copulas
    }

    pub fn bicop(&self, tree: usize, edge: usize) -> &Bicop {
        &self.pair_copulas[tree][edge]
    }

    pub fn truncation_level(&self) -> usize {
        self.truncation_level
    }

    pub fn margins(&self) -> &[MarginModel] {
        &self.margins
    }

    pub fn fit_info(&self) -> Option<&FitInfo> {
        self.fit.as_ref()
    }

    /// Copy of the model with every tree beyond `k` set to independence.
    pub fn truncated(&self, k: usize) -> VineModel {
        let mut m = self.clone();
        for (t, tree) in m.pair_copulas.iter_mut().enumerate() {
            if t >= k {
                for b in tree.iter_mut() {
                    *b = Bicop::independence();
                }
                m.edge_loglik[t].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        m.truncation_level = k.min(self.truncation_level);
        m.fit = None;
        m
    }

    /// Same copulas, but every tree is evaluated explicitly.
    pub fn untruncated_view(&self) -> VineModel {
        let mut m = self.clone();
        m.truncation_level = m.structure.trees().len();
        m
    }

    fn mbic_from_loglik(&self, copula_loglik: f64, n: usize, psi0: f64) -> f64 {
        let d = self.dim();
        let mut penalty = 0.0;
        let mut nu = 0usize;
        for (t, tree) in self.pair_copulas.iter().enumerate() {
            let m = t + 1;
            let psi_m = psi0.powi(m as i32);
            let q = tree.iter().filter(|b| !b.is_independence()).count();
            nu += tree.iter().map(Bicop::parameter_count).sum::<usize>();
            penalty += q as f64 * psi_m.ln() + (d - m - q) as f64 * (1.0 - psi_m).ln();
        }
        -2.0 * copula_loglik + nu as f64 * (n as f64).ln() - 2.0 * penalty
    }

    /// Marginal and copula log-likelihood contributions per row.
    fn log_terms(&self, columns: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
        let n = columns.first().map_or(0, |c| c.len());
        let base = pseudo_columns(&self.margins, columns);
        let mut margin = vec![0.0; n];
        for (m, col) in self.margins.iter().zip(columns) {
            for (acc, &x) in margin.iter_mut().zip(col.iter()) {
                *acc += log_floor(m.density(x));
            }
        }
        let mut copula = vec![0.0; n];
        let levels = self.truncation_level.min(self.structure.trees().len());
        let mut prev: Vec<EdgeColumns> = Vec::new();
        for t in 0..levels {
            let specs = &self.structure.trees()[t];
            let prev_specs = if t == 0 { None } else { Some(self.structure.trees()[t - 1].as_slice()) };
            let mut next = Vec::with_capacity(specs.len());
            for (e, spec) in specs.iter().enumerate() {
                let b = &self.pair_copulas[t][e];
                let (u, v) = edge_inputs(spec, t, &base, &prev, prev_specs);
                if !b.is_independence() {
                    for ((acc, a), c) in copula.iter_mut().zip(u).zip(v) {
                        *acc += edge_term(b, &PseudoObs { u: *a, v: *c });
                    }
                }
                next.push(if t + 1 < levels {
                    propagate(b, u, v)
                } else {
                    [Vec::new(), Vec::new()]
                });
            }
            prev = next;
        }
        (margin, copula)
    }

    /// Log joint density (continuous coordinates) / mass (ordinal coordinates) of one row.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let cols: Vec<&[f64]> = x.iter().map(std::slice::from_ref).collect();
        let (m, c) = self.log_terms(&cols);
        m[0] + c[0]
    }

    /// Log densities of many rows, evaluated in parallel chunks.
    pub fn log_densities(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.par_chunks(256)
            .flat_map_iter(|chunk| {
                let d = self.dim();
                let cols: Vec<Vec<f64>> = (0..d).map(|j| chunk.iter().map(|r| r[j]).collect()).collect();
                let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
                let (m, c) = self.log_terms(&refs);
                m.into_iter().zip(c).map(|(a, b)| a + b).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Copula part of the log-likelihood of a dataset.
    pub fn copula_loglik(&self, data: &Dataset) -> f64 {
        let cols: Vec<&[f64]> = (0..data.n_vars()).map(|j| data.column(j)).collect();
        self.log_terms(&cols).1.iter().sum()
    }

    /// Modified BIC of the model on `data`.
    pub fn mbic(&self, data: &Dataset, psi0: f64) -> f64 {
        self.mbic_from_loglik(self.copula_loglik(data), data.n_rows(), psi0)
    }

    /// One report line per edge up to the truncation level.
    pub fn edge_report(&self, seed: u64) -> Result<Vec<EdgeReport>> {
        let d = self.dim();
        let mut out = Vec::new();
        for (t, tree) in self.structure.trees().iter().enumerate() {
            for (e, spec) in tree.iter().enumerate() {
                let b = &self.pair_copulas[t][e];
                out.push(EdgeReport {
                    tree: t + 1,
                    label: spec.label(d),
                    family: b.family(),
                    rotation: b.rotation(),
                    params: b.params().to_vec(),
                    copula: b.label(),
                    tau: b.tau(),
                    spearman: b.spearman_mc(SPEARMAN_SAMPLES, seed)?,
                    loglik: self.edge_loglik[t][e],
                });
            }
        }
        Ok(out)
    }

    /// Locates an edge by its label (e.g. `23;1`).
    pub fn find_edge(&self, label: &str) -> Result<(usize, usize)> {
        let d = self.dim();
        for (t, tree) in self.structure.trees().iter().enumerate() {
            for (e, spec) in tree.iter().enumerate() {
                if spec.label(d) == label {
                    return Ok((t, e));
                }
            }
        }
        Err(Error::EdgeAbsent(label.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, VariableSpec};
    use crate::latent::{latent_matrix, LatentMatrix};
    use crate::margins::{fit_margins, MarginMethod};
    use crate::rng::{open01, stream};

    fn ordinal_margin(p: &[f64]) -> MarginModel {
        MarginModel::ordinal_from_probs(p.to_vec())
    }

    fn cvine3() -> VineStructure {
        VineStructure::from_node_pairs(3, &[vec![(0, 1), (0, 2)], vec![(0, 1)]]).unwrap()
    }

    #[test]
    fn ordinal_vine_sums_to_one() {
        let margins = vec![
            ordinal_margin(&[0.2, 0.5, 0.3]),
            ordinal_margin(&[0.6, 0.3, 0.1]),
            ordinal_margin(&[0.3, 0.3, 0.4]),
        ];
        let copulas = vec![
            vec![
                Bicop::new(Family::Gumbel, 0, vec![2.0]).unwrap(),
                Bicop::new(Family::Clayton, 90, vec![1.5]).unwrap(),
            ],
            vec![Bicop::new(Family::Frank, 0, vec![4.0]).unwrap()],
        ];
        let v = VineModel::from_parts(cvine3(), copulas, margins, 2).unwrap();
        let mut total = 0.0;
        for a in 1..=3 {
            for b in 1..=3 {
                for c in 1..=3 {
                    total += v.log_density(&[a as f64, b as f64, c as f64]).exp();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn independence_factorizes() {
        let margins = vec![
            MarginModel::KernelContinuous {
                centers: vec![0.0, 1.0, 2.0],
                bandwidth: 0.5,
                min: 0.0,
                max: 2.0,
            },
            ordinal_margin(&[0.5, 0.5]),
        ];
        let s = VineStructure::from_node_pairs(2, &[vec![(0, 1)]]).unwrap();
        let v = VineModel::from_parts(s, vec![vec![Bicop::independence()]], margins.clone(), 1).unwrap();
        let x = [0.7, 2.0];
        let expect = margins[0].density(0.7).ln() + 0.5f64.ln();
        assert!((v.log_density(&x) - expect).abs() < 1e-15);
    }

    #[test]
    fn truncation_equals_explicit_independence() {
        let margins = vec![
            ordinal_margin(&[0.2, 0.5, 0.3]),
            ordinal_margin(&[0.6, 0.3, 0.1]),
            ordinal_margin(&[0.3, 0.3, 0.4]),
        ];
        let copulas = vec![
            vec![
                Bicop::new(Family::Joe, 0, vec![2.0]).unwrap(),
                Bicop::new(Family::Gaussian, 0, vec![0.4]).unwrap(),
            ],
            vec![Bicop::independence()],
        ];
        let one = VineModel::from_parts(cvine3(), copulas, margins, 1).unwrap();
        let explicit = one.untruncated_view();
        for x in [[1.0, 2.0, 3.0], [3.0, 3.0, 1.0]] {
            assert_eq!(one.log_density(&x), explicit.log_density(&x));
        }
    }

    fn dataset(cols: Vec<Vec<f64>>, specs: Vec<VariableSpec>) -> Dataset {
        Dataset::new(Schema::new(specs).unwrap(), cols, None, None).unwrap()
    }

    #[test]
    fn all_independence_mbic_and_selection_never_worse() {
        let mut r = stream(21, 0);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..500).map(|_| open01(&mut r)).collect()).collect();
        let d = dataset(
            cols,
            vec![
                VariableSpec::continuous("a"),
                VariableSpec::continuous("b"),
                VariableSpec::continuous("c"),
            ],
        );
        let margins = fit_margins(&d, MarginMethod::Empirical).unwrap();
        let s = select_structure(&latent_matrix(&d).unwrap()).unwrap();
        let indep = vec![vec![Bicop::independence(); 2], vec![Bicop::independence()]];
        let forced = VineModel::from_parts(s.clone(), indep, margins.clone(), 0).unwrap();
        let expect: f64 = -2.0 * (2.0 * (1.0 - 0.9f64).ln() + (1.0 - 0.81f64).ln());
        assert!((forced.mbic(&d, 0.9) - expect).abs() < 1e-12);
        let v = fit_vine(&d, &margins, &s, &VineFitOptions::default()).unwrap();
        let info = v.fit_info().unwrap();
        assert!(info.mbic <= expect + 1e-9);
        assert!((v.mbic(&d, 0.9) - info.mbic).abs() < 1e-6);
        for b in v.pair_copulas().iter().flatten() {
            assert!(b.tau().abs() < 0.15, "{}", b.label());
        }
    }

    #[test]
    fn mixed_vine_recovers_dependence() {
        let truth = Bicop::new(Family::Gumbel, 0, vec![2.5]).unwrap();
        let mut r = stream(5, 0);
        let pairs = truth.sample_with(800, &mut r).unwrap();
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let k: Vec<f64> = pairs
            .iter()
            .map(|p| if p.1 < 0.4 { 1.0 } else if p.1 < 0.75 { 2.0 } else { 3.0 })
            .collect();
        let d = dataset(
            vec![x, k],
            vec![VariableSpec::continuous("x"), VariableSpec::ordinal("k", 3)],
        );
        let margins = fit_margins(&d, MarginMethod::Empirical).unwrap();
        let s = select_structure(&latent_matrix(&d).unwrap()).unwrap();
        let v = fit_vine(&d, &margins, &s, &VineFitOptions::default()).unwrap();
        assert_eq!(v.truncation_level(), 1);
        assert!(v.bicop(0, 0).tau() > 0.4);
        let info = v.fit_info().unwrap();
        let forced = v.truncated(0);
        assert!(info.mbic < forced.mbic(&d, 0.9));
        let rows = d.rows();
        let dens = v.log_densities(&rows);
        let total: f64 = dens.iter().sum();
        assert!((total - info.margin_loglik - info.copula_loglik).abs() < 1e-6);
        assert_eq!(dens[3], v.log_density(&rows[3]));
    }

    #[test]
    fn too_few_rows() {
        let d = dataset(
            vec![(0..9).map(|i| i as f64).collect(), (0..9).map(|i| (i * 7 % 9) as f64).collect()],
            vec![VariableSpec::continuous("a"), VariableSpec::continuous("b")],
        );
        let margins = fit_margins(&d, MarginMethod::Empirical).unwrap();
        let s = select_structure(&LatentMatrix::from_values(vec![vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap())
            .unwrap();
        assert_eq!(
            fit_vine(&d, &margins, &s, &VineFitOptions::default()).unwrap_err().kind(),
            "TooFewObservations"
        );
    }

    #[test]
    fn edge_report_labels() {
        let margins = vec![
            ordinal_margin(&[0.2, 0.5, 0.3]),
            ordinal_margin(&[0.6, 0.3, 0.1]),
            ordinal_margin(&[0.3, 0.3, 0.4]),
        ];
        let copulas = vec![
            vec![Bicop::new(Family::Gumbel, 0, vec![1.4]).unwrap(), Bicop::independence()],
            vec![Bicop::new(Family::Gaussian, 0, vec![0.5]).unwrap()],
        ];
        let v = VineModel::from_parts(cvine3(), copulas, margins, 2).unwrap();
        let rep = v.edge_report(1).unwrap();
        assert_eq!(rep[0].label, "12");
        assert!((rep[0].tau - (1.0 - 1.0 / 1.4)).abs() < 1e-12);
        assert_eq!(rep[1].spearman, 0.0);
        assert_eq!(rep[2].label, "23;1");
        let exact = 6.0 / std::f64::consts::PI * (0.25f64).asin();
        assert!((rep[2].spearman - exact).abs() < 0.01);
        assert_eq!(v.find_edge("23;1").unwrap(), (1, 0));
        assert!(v.find_edge("13;2").is_err());
        let json = serde_json::to_string(&v).unwrap();
        let back: VineModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        back.validate().unwrap();
    }
}
