//! Minimum spanning tree over correlation distances.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CorrelationNet, SectorId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub sectors: Vec<SectorId>,
    /// `N - 1` edges with `i < j`, in the order Kruskal accepted them.
    pub edges: Vec<Edge>,
    pub total_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneReport {
    pub is_connected_subtree: bool,
    pub components: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

pub fn minimum_spanning_tree(net: &CorrelationNet) -> Result<Tree> {
    minimum_spanning_tree_from_distances(net.sectors().to_vec(), net.dist())
}

/// Kruskal on the complete graph. Ties are broken by `(min(i,j), max(i,j))`.
pub fn minimum_spanning_tree_from_distances(sectors: Vec<SectorId>, dist: &DMatrix<f64>) -> Result<Tree> {
    let n = sectors.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("spanning tree needs at least 2 sectors, got {n}")));
    }
    if dist.nrows() != n || dist.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "distance matrix is {}x{} for {n} sectors",
            dist.nrows(),
            dist.ncols()
        )));
    }
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = dist[(i, j)];
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!("distance ({i},{j}) is {w}")));
            }
            candidates.push(Edge { i, j, weight: w });
        }
    }
    candidates.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));

    let mut sets = DisjointSet::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for e in candidates {
        if sets.union(e.i, e.j) {
            edges.push(e);
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    // accepted in ascending weight order, so this sum is order-stable
    let total_weight = edges.iter().map(|e| e.weight).sum();
    Ok(Tree {
        sectors,
        edges,
        total_weight,
    })
}

/// Connectivity of the core-labelled nodes within the tree.
///
/// With no core nodes the report is `false` with zero components.
pub fn backbone_check(tree: &Tree, core: &[bool]) -> Result<BackboneReport> {
    let n = tree.sectors.len();
    if core.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: core.len(),
        });
    }
    let mut sets = DisjointSet::new(n);
    for e in &tree.edges {
        if core[e.i] && core[e.j] {
            sets.union(e.i, e.j);
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| sets.find(i)).collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(BackboneReport {
        is_connected_subtree: roots.len() == 1,
        components: roots.len(),
    })
}

/// Undirected DOT graph. Core nodes carry `group=core`.
pub fn write_dot<W: Write>(tree: &Tree, core: Option<&[bool]>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "graph mst {{")?;
    for (i, s) in tree.sectors.iter().enumerate() {
        if core.is_some_and(|c| c[i]) {
            writeln!(out, "  \"{}\" [group=core];", s.code())?;
        } else {
            writeln!(out, "  \"{}\";", s.code())?;
        }
    }
    for e in &tree.edges {
        writeln!(
            out,
            "  \"{}\" -- \"{}\" [weight={:?}];",
            tree.sectors[e.i].code(),
            tree.sectors[e.j].code(),
            e.weight
        )?;
    }
    writeln!(out, "}}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    #[serde(flatten)]
    pub tree: Tree,
    pub core: Option<Vec<bool>>,
    pub backbone: Option<BackboneReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sectors_from_codes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn codes(n: usize) -> Vec<SectorId> {
        let all = ["FN", "IT", "ID", "BM", "CD", "CS", "EG", "HC", "TC", "UT"];
        sectors_from_codes(&all[..n]).unwrap()
    }

    fn sym(n: usize, upper: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        m
    }

    fn path_tree(n: usize) -> Tree {
        Tree {
            sectors: codes(n),
            edges: (0..n - 1).map(|i| Edge { i, j: i + 1, weight: 1.0 }).collect(),
            total_weight: (n - 1) as f64,
        }
    }

    #[test]
    fn two_nodes() {
        let t = minimum_spanning_tree_from_distances(codes(2), &sym(2, &[0.7])).unwrap();
        assert_eq!(t.edges, vec![Edge { i: 0, j: 1, weight: 0.7 }]);
        assert_eq!(t.total_weight, 0.7);
    }

    #[test]
    fn triangle_drops_heaviest_edge() {
        let t = minimum_spanning_tree_from_distances(codes(3), &sym(3, &[1.0, 2.0, 3.0])).unwrap();
        let pairs: Vec<_> = t.edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2)]);
        assert_eq!(t.total_weight, 3.0);
    }

    #[test]
    fn ties_follow_index_order() {
        let t = minimum_spanning_tree_from_distances(codes(4), &DMatrix::from_element(4, 4, 1.0)).unwrap();
        let pairs: Vec<_> = t.edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(minimum_spanning_tree_from_distances(codes(1), &DMatrix::zeros(1, 1)).is_err());
        let mut d = sym(3, &[1.0, 2.0, 3.0]);
        d[(0, 2)] = f64::NAN;
        assert!(minimum_spanning_tree_from_distances(codes(3), &d).is_err());
    }

    #[test]
    fn backbone_examples() {
        let path = path_tree(4);
        let r = backbone_check(&path, &[false, true, true, false]).unwrap();
        assert!(r.is_connected_subtree);
        assert_eq!(r.components, 1);
        let r = backbone_check(&path, &[true, false, false, true]).unwrap();
        assert!(!r.is_connected_subtree);
        assert_eq!(r.components, 2);

        let star = Tree {
            sectors: codes(4),
            edges: (1..4).map(|j| Edge { i: 0, j, weight: 1.0 }).collect(),
            total_weight: 3.0,
        };
        assert!(backbone_check(&star, &[true, false, true, false]).unwrap().is_connected_subtree);
        assert_eq!(
            backbone_check(&star, &[false; 4]).unwrap(),
            BackboneReport {
                is_connected_subtree: false,
                components: 0
            }
        );
        assert!(backbone_check(&star, &[true]).is_err());
    }

    #[test]
    fn dot_marks_core_nodes() {
        let t = minimum_spanning_tree_from_distances(codes(3), &sym(3, &[0.1, 0.2, 0.3])).unwrap();
        let mut buf = Vec::new();
        write_dot(&t, Some(&[true, false, false]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"FN\" [group=core];"));
        assert!(text.contains("\"IT\";"));
        assert!(text.contains("\"FN\" -- \"IT\" [weight=0.1];"));
        assert!(text.contains("\"FN\" -- \"ID\" [weight=0.2];"));
    }

    /// Decode a Prüfer sequence into the edge list of a labelled tree.
    fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    /// Minimum total weight over all `n^(n-2)` labelled spanning trees.
    fn exhaustive_minimum(d: &DMatrix<f64>) -> f64 {
        let n = d.nrows();
        let mut best = f64::INFINITY;
        let mut seq = vec![0usize; n - 2];
        loop {
            let mut weights: Vec<f64> = prufer_edges(&seq, n).iter().map(|&(a, b)| d[(a, b)]).collect();
            weights.sort_by(f64::total_cmp);
            best = best.min(weights.iter().sum());
            let mut k = 0;
            loop {
                if k == seq.len() {
                    return best;
                }
                seq[k] += 1;
                if seq[k] < n {
                    break;
                }
                seq[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn prufer_count_is_cayley() {
        let mut count = 0;
        let mut seq = vec![0usize; 4];
        'outer: loop {
            let e = prufer_edges(&seq, 6);
            let mut sets = DisjointSet::new(6);
            assert!(e.iter().all(|&(a, b)| sets.union(a, b)));
            count += 1;
            for k in 0..4 {
                seq[k] += 1;
                if seq[k] < 6 {
                    continue 'outer;
                }
                seq[k] = 0;
            }
            break;
        }
        assert_eq!(count, 1296);
    }

    #[test]
    fn kruskal_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let upper: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..2.0)).collect();
            let d = sym(6, &upper);
            let t = minimum_spanning_tree_from_distances(codes(6), &d).unwrap();
            assert_eq!(t.edges.len(), 5);
            assert_eq!(t.total_weight, exhaustive_minimum(&d));
        }
    }

    proptest! {
        #[test]
        fn total_weight_is_permutation_invariant(upper in prop::collection::vec(0.0f64..2.0, 21), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let n = 7;
            let d = sym(n, &upper);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = DMatrix::from_fn(n, n, |i, j| d[(order[i], order[j])]);
            let all = sectors_from_codes(&["FN", "IT", "ID", "BM", "CD", "CS", "EG"]).unwrap();
            let a = minimum_spanning_tree_from_distances(all.clone(), &d).unwrap();
            let b = minimum_spanning_tree_from_distances(all, &permuted).unwrap();
            prop_assert_eq!(a.total_weight, b.total_weight);
        }

        #[test]
        fn constant_shift_keeps_edges(upper in prop::collection::vec(0.0f64..2.0, 15), shift in 0.0f64..5.0) {
            let d = sym(6, &upper);
            let shifted = d.map(|v| v + shift);
            let a = minimum_spanning_tree_from_distances(codes(6), &d).unwrap();
            let b = minimum_spanning_tree_from_distances(codes(6), &shifted).unwrap();
            let pa: Vec<_> = a.edges.iter().map(|e| (e.i, e.j)).collect();
            let pb: Vec<_> = b.edges.iter().map(|e| (e.i, e.j)).collect();
            prop_assert_eq!(pa, pb);
        }
    }
}
