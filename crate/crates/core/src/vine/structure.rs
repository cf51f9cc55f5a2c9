//! Regular-vine structures and their selection by maximum spanning trees on
//! absolute (partial) latent correlations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{partial_correlation, LatentMatrix};

/// One edge of a vine tree. `nodes` indexes variables in the first tree and
/// edges of the previous tree otherwise. `conditioned.0` belongs to the
/// complete set of `nodes.0`, `conditioned.1` to that of `nodes.1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub conditioned: (usize, usize),
    pub conditioning: Vec<usize>,
    pub nodes: (usize, usize),
}

impl EdgeSpec {
    /// Conditioned and conditioning variables together, sorted.
    pub fn complete_set(&self) -> Vec<usize> {
        let mut s = self.conditioning.clone();
        s.push(self.conditioned.0);
        s.push(self.conditioned.1);
        s.sort_unstable();
        s
    }

    /// Ordering key used for deterministic tie-breaking.
    pub fn key(&self) -> (usize, usize, Vec<usize>) {
        let (a, b) = self.conditioned;
        (a.min(b), a.max(b), self.conditioning.clone())
    }

    /// Label such as `23;1` with 1-based variable numbers; commas separate
    /// numbers when the dimension exceeds 9.
    pub fn label(&self, d: usize) -> String {
        let sep = if d > 9 { "," } else { "" };
        let (a, b) = self.conditioned;
        let head = format!("{}{sep}{}", a.min(b) + 1, a.max(b) + 1);
        if self.conditioning.is_empty() {
            head
        } else {
            let tail: Vec<String> = self.conditioning.iter().map(|c| (c + 1).to_string()).collect();
            format!("{head};{}", tail.join(sep))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VineStructure {
    d: usize,
    trees: Vec<Vec<EdgeSpec>>,
}

fn union_find_root(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

/// Builds the edge joining two nodes of a tree, or `None` if the proximity
/// condition fails.
fn join(prev: Option<&[EdgeSpec]>, i: usize, j: usize) -> Option<EdgeSpec> {
    match prev {
        None => Some(EdgeSpec {
            conditioned: (i, j),
            conditioning: Vec::new(),
            nodes: (i, j),
        }),
        Some(edges) => {
            let (ei, ej) = (&edges[i], &edges[j]);
            let share = ei.nodes.0 == ej.nodes.0
                || ei.nodes.0 == ej.nodes.1
                || ei.nodes.1 == ej.nodes.0
                || ei.nodes.1 == ej.nodes.1;
            if !share {
                return None;
            }
            let ci = ei.complete_set();
            let cj = ej.complete_set();
            let common: Vec<usize> = ci.iter().copied().filter(|v| cj.contains(v)).collect();
            let only_i: Vec<usize> = ci.iter().copied().filter(|v| !cj.contains(v)).collect();
            let only_j: Vec<usize> = cj.iter().copied().filter(|v| !ci.contains(v)).collect();
            if only_i.len() != 1 || only_j.len() != 1 {
                return None;
            }
            Some(EdgeSpec {
                conditioned: (only_i[0], only_j[0]),
                conditioning: common,
                nodes: (i, j),
            })
        }
    }
}

impl VineStructure {
    /// Builds a structure from node pairs per tree: variable pairs in the
    /// first tree, pairs of previous-tree edge indices afterwards. Fewer than
    /// `d - 1` trees may be given; the structure then ends early.
    pub fn from_node_pairs(d: usize, pairs: &[Vec<(usize, usize)>]) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidArgument("vine dimension must be positive".into()));
        }
        let mut trees: Vec<Vec<EdgeSpec>> = Vec::new();
        for (t, level) in pairs.iter().enumerate() {
            let n_nodes = d - t;
            if level.len() + 1 != n_nodes {
                return Err(Error::InvalidArgument(format!(
                    "tree {} needs {} edges, got {}",
                    t + 1,
                    n_nodes - 1,
                    level.len()
                )));
            }
            let mut parent: Vec<usize> = (0..n_nodes).collect();
            let mut edges = Vec::new();
            for &(i, j) in level {
                if i >= n_nodes || j >= n_nodes || i == j {
                    return Err(Error::InvalidArgument(format!("invalid node pair ({i}, {j})")));
                }
                let (ri, rj) = (union_find_root(&mut parent, i), union_find_root(&mut parent, j));
                if ri == rj {
                    return Err(Error::InvalidArgument(format!("tree {} has a cycle", t + 1)));
                }
                parent[ri] = rj;
                let e = join(trees.last().map(|v| v.as_slice()), i, j).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "edge ({i}, {j}) in tree {} violates the proximity condition",
                        t + 1
                    ))
                })?;
                edges.push(e);
            }
            trees.push(edges);
        }
        Ok(VineStructure { d, trees })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn trees(&self) -> &[Vec<EdgeSpec>] {
        &self.trees
    }

    pub fn edge(&self, tree: usize, edge: usize) -> &EdgeSpec {
        &self.trees[tree][edge]
    }

    /// Checks edge counts, acyclicity and proximity for every tree.
    pub fn validate(&self) -> Result<()> {
        let pairs: Vec<Vec<(usize, usize)>> = self
            .trees
            .iter()
            .map(|t| t.iter().map(|e| e.nodes).collect())
            .collect();
        let rebuilt = VineStructure::from_node_pairs(self.d, &pairs)?;
        if rebuilt != *self {
            return Err(Error::InvalidArgument("vine structure is inconsistent".into()));
        }
        Ok(())
    }

    /// Sum of absolute weights of a tree under the latent matrix.
    pub fn tree_weight(&self, m: &LatentMatrix, tree: usize) -> Result<f64> {
        self.trees[tree]
            .iter()
            .map(|e| {
                partial_correlation(m, e.conditioned.0, e.conditioned.1, &e.conditioning)
                    .map(f64::abs)
            })
            .sum()
    }
}

/// Selects a vine tree by tree: each tree is a maximum spanning tree of the
/// proximity-admissible edges under absolute partial correlation. Equal
/// weights are broken in favour of the lexicographically smallest edge.
pub fn select_structure(m: &LatentMatrix) -> Result<VineStructure> {
    select_structure_levels(m, m.dim().saturating_sub(1))
}

/// Like [`select_structure`] but builds at most `levels` trees.
pub fn select_structure_levels(m: &LatentMatrix, levels: usize) -> Result<VineStructure> {
    let d = m.dim();
    if d < 2 {
        return Err(Error::InvalidArgument("structure selection needs at least two variables".into()));
    }
    let mut trees: Vec<Vec<EdgeSpec>> = Vec::new();
    for t in 0..levels.min(d - 1) {
        let n_nodes = d - t;
        let prev = trees.last().map(|v| v.as_slice());
        let mut candidates: Vec<(f64, EdgeSpec)> = Vec::new();
        for i in 0..n_nodes {
            for j in (i + 1)..n_nodes {
                if let Some(e) = join(prev, i, j) {
                    let w = partial_correlation(m, e.conditioned.0, e.conditioned.1, &e.conditioning)?
                        .abs();
                    candidates.push((w, e));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.key().cmp(&b.1.key())));
        let mut parent: Vec<usize> = (0..n_nodes).collect();
        let mut chosen = Vec::new();
        for (_, e) in candidates {
            let (ri, rj) = (
                union_find_root(&mut parent, e.nodes.0),
                union_find_root(&mut parent, e.nodes.1),
            );
            if ri != rj {
                parent[ri] = rj;
                chosen.push(e);
                if chosen.len() == n_nodes - 1 {
                    break;
                }
            }
        }
        if chosen.len() != n_nodes - 1 {
            return Err(Error::InvalidArgument(format!(
                "no spanning tree exists at level {}",
                t + 1
            )));
        }
        trees.push(chosen);
    }
    Ok(VineStructure { d, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn matrix3() -> LatentMatrix {
        LatentMatrix::from_values(vec![
            vec![1.0, 0.9, 0.8],
            vec![0.9, 1.0, 0.1],
            vec![0.8, 0.1, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn three_dimensional_selection() {
        let s = select_structure(&matrix3()).unwrap();
        let t1: Vec<String> = s.trees()[0].iter().map(|e| e.label(3)).collect();
        assert_eq!(t1, vec!["12", "13"]);
        assert_eq!(s.trees()[1][0].label(3), "23;1");
        s.validate().unwrap();
    }

    #[test]
    fn two_dimensional_selection() {
        let m = LatentMatrix::from_values(vec![vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let s = select_structure(&m).unwrap();
        assert_eq!(s.trees().len(), 1);
        assert_eq!(s.trees()[0][0].conditioned, (0, 1));
    }

    #[test]
    fn ties_pick_smallest_edge() {
        let m = LatentMatrix::from_values(vec![
            vec![1.0, 0.5, 0.5],
            vec![0.5, 1.0, 0.5],
            vec![0.5, 0.5, 1.0],
        ])
        .unwrap();
        let s = select_structure(&m).unwrap();
        let t1: Vec<String> = s.trees()[0].iter().map(|e| e.label(3)).collect();
        assert_eq!(t1, vec!["12", "13"]);
    }

    #[test]
    fn label_uses_commas_above_nine() {
        let e = EdgeSpec {
            conditioned: (10, 1),
            conditioning: vec![0, 4],
            nodes: (0, 1),
        };
        assert_eq!(e.label(11), "2,11;1,5");
        assert_eq!(e.label(9), "211;15");
    }

    fn random_matrix(seed: u64, d: usize) -> LatentMatrix {
        let mut r = stream(seed, 1);
        let a = nalgebra::DMatrix::from_fn(d, d + 1, |_, _| r.random::<f64>() - 0.5);
        let s = &a * a.transpose();
        LatentMatrix::from_values(
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| if i == j { 1.0 } else { s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt() })
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_spanning_tree<R: Rng>(d: usize, r: &mut R) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(r);
        (1..d).map(|k| (order[r.random_range(0..k)], order[k])).collect()
    }

    #[test]
    fn first_tree_beats_random_spanning_trees() {
        let m = random_matrix(3, 5);
        let s = select_structure(&m).unwrap();
        s.validate().unwrap();
        for t in 0..4 {
            assert_eq!(s.trees()[t].len(), 4 - t);
        }
        let best = s.tree_weight(&m, 0).unwrap();
        let mut r = stream(4, 2);
        for _ in 0..1000 {
            let tree = random_spanning_tree(5, &mut r);
            let w: f64 = tree.iter().map(|&(a, b)| m.get(a, b).abs()).sum();
            assert!(best >= w - 1e-12);
        }
    }

    #[test]
    fn rejects_proximity_violation() {
        // D-vine 0-1-2-3: edges 0:(0,1), 1:(1,2), 2:(2,3); edges 0 and 2 share no node
        let err = VineStructure::from_node_pairs(4, &[vec![(0, 1), (1, 2), (2, 3)], vec![(0, 2), (1, 2)]]);
        assert!(err.is_err());
        let ok = VineStructure::from_node_pairs(4, &[vec![(0, 1), (1, 2), (2, 3)], vec![(0, 1), (1, 2)]]);
        assert!(ok.is_ok());
    }
}
