//! Hamming-1 graphs over sampled subnetworks: Laplacian, Dirichlet energy,
//! generalizing clusters and effective resistance.
//!
//! Dense matrices throughout; graphs here have at most a few hundred nodes.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{hamming, Mask, SeededRng};
use crate::metrics::ContributionRecord;
use crate::stats::pearson;

/// Condition number above which a pseudoinverse carries a warning.
pub const CONDITION_WARNING: f64 = 1e12;

/// Maximum number of pairs used by [`resistance_score_correlation`].
pub const MAX_CORRELATION_PAIRS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `false` if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Groups of elements, each sorted, ordered by smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: HashMap<usize, usize> = HashMap::new();
        let mut out: Vec<Vec<usize>> = Vec::new();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            let slot = *by_root.entry(r).or_insert_with(|| {
                out.push(Vec::new());
                out.len() - 1
            });
            out[slot].push(x);
        }
        out
    }
}

/// Connected components of an edge list over `n` nodes.
pub fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut ds = DisjointSets::new(n);
    for &(i, j) in edges {
        ds.union(i, j);
    }
    ds.groups()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubnetGraph {
    masks: Vec<Mask>,
    scores: Vec<f64>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl SubnetGraph {
    pub fn from_masks(masks: Vec<Mask>, scores: Vec<f64>) -> Result<Self> {
        if masks.len() != scores.len() {
            return Err(Error::Consistency(format!(
                "{} masks but {} scores",
                masks.len(),
                scores.len()
            )));
        }
        if let Some(first) = masks.first() {
            if let Some(bad) = masks.iter().find(|m| m.len() != first.len()) {
                return Err(Error::Shape(format!(
                    "mask lengths {} and {} in one graph",
                    first.len(),
                    bad.len()
                )));
            }
        }
        let mut seen: HashMap<&Mask, usize> = HashMap::with_capacity(masks.len());
        for (i, m) in masks.iter().enumerate() {
            if let Some(&first) = seen.get(m) {
                return Err(Error::DuplicateNode { first, second: i });
            }
            seen.insert(m, i);
        }

        // Hamming-1 neighbors differ in popcount by exactly one, so only
        // adjacent popcount buckets need comparing.
        let mut buckets: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, m) in masks.iter().enumerate() {
            buckets.entry(m.count_ones()).or_default().push(i);
        }
        let mut edges = Vec::new();
        for (&c, lower) in &buckets {
            if let Some(upper) = buckets.get(&(c + 1)) {
                for &i in lower {
                    for &j in upper {
                        if hamming(&masks[i], &masks[j])? == 1 {
                            edges.push((i.min(j), i.max(j)));
                        }
                    }
                }
            }
        }
        edges.sort_unstable();

        let mut adjacency = vec![Vec::new(); masks.len()];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        Ok(SubnetGraph {
            masks,
            scores,
            edges,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.len(), &self.edges)
    }
}

/// Graph over the records' masks with their scores as node values.
pub fn build_graph(records: &[ContributionRecord]) -> Result<SubnetGraph> {
    SubnetGraph::from_masks(
        records.iter().map(|r| r.mask.clone()).collect(),
        records.iter().map(|r| r.score).collect(),
    )
}

/// `L = D − A` for an undirected edge list over `n` nodes.
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
    }
    l
}

pub fn laplacian(g: &SubnetGraph) -> DMatrix<f64> {
    laplacian_from_edges(g.len(), &g.edges)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return None;
    }
    m.clone().symmetric_eigen().eigenvalues.iter().copied().reduce(f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletEnergy {
    /// `Σ_{(i,j)∈E} (C_i − C_j)²`
    pub raw: f64,
    /// `raw / |E|`, 0 without edges.
    pub per_edge: f64,
    /// `Cᵀ L C`, computed independently of `raw`.
    pub quadratic_form: f64,
    pub n_nodes: usize,
    pub n_edges: usize,
}

impl DirichletEnergy {
    /// Relative agreement of the edge sum and the quadratic form.
    pub fn consistent(&self, tol: f64) -> bool {
        (self.raw - self.quadratic_form).abs() <= tol * self.raw.abs().max(1.0)
    }
}

pub fn dirichlet_energy(g: &SubnetGraph) -> DirichletEnergy {
    let c = &g.scores;
    let raw: f64 = g.edges.iter().map(|&(i, j)| (c[i] - c[j]).powi(2)).sum();
    let cv = nalgebra::DVector::from_column_slice(c);
    let quadratic_form = if g.is_empty() {
        0.0
    } else {
        cv.dot(&(laplacian(g) * &cv))
    };
    DirichletEnergy {
        raw,
        per_edge: if g.edges.is_empty() {
            0.0
        } else {
            raw / g.edges.len() as f64
        },
        quadratic_form,
        n_nodes: g.len(),
        n_edges: g.edges.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clusters {
    /// Components of the subgraph induced by nodes with score `< eps`,
    /// largest first.
    pub clusters: Vec<Vec<usize>>,
    /// `|largest| / |G_eps|`, absent when no node generalizes.
    pub largest_fraction: Option<f64>,
    pub n_generalizing: usize,
}

pub fn generalizing_clusters(g: &SubnetGraph, eps: f64) -> Clusters {
    let good: Vec<bool> = g.scores.iter().map(|&s| s < eps).collect();
    let mut ds = DisjointSets::new(g.len());
    for &(i, j) in &g.edges {
        if good[i] && good[j] {
            ds.union(i, j);
        }
    }
    let mut clusters: Vec<Vec<usize>> = ds.groups().into_iter().filter(|c| good[c[0]]).collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let n_generalizing = good.iter().filter(|&&b| b).count();
    let largest_fraction = clusters.first().map(|c| c.len() as f64 / n_generalizing as f64);
    Clusters {
        clusters,
        largest_fraction,
        n_generalizing,
    }
}

#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// Component label per node.
    pub component_of: Vec<usize>,
    /// Set when some component's solve had condition estimate above
    /// [`CONDITION_WARNING`].
    pub warning: Option<String>,
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Moore–Penrose pseudoinverse of a graph Laplacian, one component at a time:
/// `L⁺ = (L + J/n)⁻¹ − J/n` on each component's block, zero across blocks.
pub fn laplacian_pseudoinverse(l: &DMatrix<f64>, components: &[Vec<usize>]) -> Result<PseudoInverse> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Shape(format!("Laplacian is {}x{}", n, l.ncols())));
    }
    let mut component_of = vec![usize::MAX; n];
    for (c, nodes) in components.iter().enumerate() {
        for &v in nodes {
            if v >= n || component_of[v] != usize::MAX {
                return Err(Error::Consistency(format!("node {v} missing or repeated in partition")));
            }
            component_of[v] = c;
        }
    }
    if component_of.contains(&usize::MAX) {
        return Err(Error::Consistency("partition does not cover every node".into()));
    }

    let mut pinv = DMatrix::zeros(n, n);
    let mut warning = None;
    for (c, nodes) in components.iter().enumerate() {
        let k = nodes.len();
        let shift = 1.0 / k as f64;
        let block = DMatrix::from_fn(k, k, |a, b| l[(nodes[a], nodes[b])] + shift);
        let inv = match block.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => block
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numeric(format!("component {c} block is singular")))?,
        };
        let cond = norm1(&block) * norm1(&inv);
        if !cond.is_finite() || cond > CONDITION_WARNING {
            warning = Some(format!("component {c}: condition estimate {cond:e}"));
        }
        for a in 0..k {
            for b in 0..k {
                // symmetrize away rounding asymmetry of the inverse
                pinv[(nodes[a], nodes[b])] = 0.5 * (inv[(a, b)] + inv[(b, a)]) - shift;
            }
        }
    }
    Ok(PseudoInverse {
        matrix: pinv,
        component_of,
        warning,
    })
}

/// `ρ(i, j) = L⁺_ii + L⁺_jj − 2 L⁺_ij`; `None` across components.
pub fn effective_resistance(pinv: &PseudoInverse, i: usize, j: usize) -> Result<Option<f64>> {
    let n = pinv.matrix.nrows();
    if i >= n || j >= n {
        return Err(Error::Domain(format!("node index out of range for {n} nodes")));
    }
    if pinv.component_of[i] != pinv.component_of[j] {
        return Ok(None);
    }
    if i == j {
        return Ok(Some(0.0));
    }
    let m = &pinv.matrix;
    Ok(Some((m[(i, i)] + m[(j, j)] - 2.0 * m[(i, j)]).max(0.0)))
}

/// Unit current into `i`, `j` grounded: the potential at `i` from a direct
/// Gaussian-elimination solve of the grounded Kirchhoff system on `i`'s
/// component.
pub fn resistance_oracle_edges(n: usize, edges: &[(usize, usize)], i: usize, j: usize) -> Result<f64> {
    if i >= n || j >= n {
        return Err(Error::Domain(format!("node index out of range for {n} nodes")));
    }
    if i == j {
        return Ok(0.0);
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    // nodes reachable from i, in BFS order
    let mut local = vec![usize::MAX; n];
    let mut reach = vec![i];
    local[i] = 0;
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if local[v] == usize::MAX {
                local[v] = reach.len();
                reach.push(v);
                queue.push_back(v);
            }
        }
    }
    if local[j] == usize::MAX {
        return Err(Error::Disconnected(i, j));
    }

    // Kirchhoff current law at every reachable node except the ground j.
    let unknowns: Vec<usize> = reach.iter().copied().filter(|&v| v != j).collect();
    let k = unknowns.len();
    let mut col = vec![usize::MAX; n];
    for (c, &v) in unknowns.iter().enumerate() {
        col[v] = c;
    }
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for (r, &u) in unknowns.iter().enumerate() {
        for &v in &adj[u] {
            a[r][r] += 1.0;
            if v != j {
                a[r][col[v]] -= 1.0;
            }
        }
        if u == i {
            a[r][k] = 1.0;
        }
    }
    for p in 0..k {
        let pivot = (p..k).max_by(|&x, &y| a[x][p].abs().total_cmp(&a[y][p].abs())).unwrap();
        if a[pivot][p].abs() < 1e-12 {
            return Err(Error::Disconnected(i, j));
        }
        a.swap(p, pivot);
        for r in p + 1..k {
            let f = a[r][p] / a[p][p];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (dst, src) in bottom[0][p..].iter_mut().zip(&top[p][p..]) {
                    *dst -= f * src;
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][k] - s) / a[r][r];
    }
    Ok(x[col[i]])
}

pub fn resistance_oracle(g: &SubnetGraph, i: usize, j: usize) -> Result<f64> {
    resistance_oracle_edges(g.len(), &g.edges, i, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistancePair {
    pub node_i: usize,
    pub node_j: usize,
    pub rho: f64,
    pub score_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceResult {
    pub pairs: Vec<ResistancePair>,
    /// Absent when either column has zero variance.
    pub pearson_r: Option<f64>,
}

/// `(ρ, |ΔC|)` over connected pairs `i < j` (a seeded sample of
/// [`MAX_CORRELATION_PAIRS`] when there are more) and their Pearson r.
pub fn resistance_score_correlation(
    g: &SubnetGraph,
    pinv: &PseudoInverse,
    rng: &mut SeededRng,
) -> Result<ResistanceResult> {
    let mut connected = Vec::new();
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            if pinv.component_of[i] == pinv.component_of[j] {
                connected.push((i, j));
            }
        }
    }
    if connected.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} connected pairs, need at least 3",
            connected.len()
        )));
    }
    if connected.len() > MAX_CORRELATION_PAIRS {
        let mut keep = index::sample(rng, connected.len(), MAX_CORRELATION_PAIRS).into_vec();
        keep.sort_unstable();
        connected = keep.into_iter().map(|k| connected[k]).collect();
    }
    let pairs = connected
        .into_iter()
        .map(|(i, j)| {
            Ok(ResistancePair {
                node_i: i,
                node_j: j,
                rho: effective_resistance(pinv, i, j)?.expect("same component"),
                score_gap: (g.scores[i] - g.scores[j]).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rho: Vec<f64> = pairs.iter().map(|p| p.rho).collect();
    let gap: Vec<f64> = pairs.iter().map(|p| p.score_gap).collect();
    Ok(ResistanceResult {
        pearson_r: pearson(&rho, &gap),
        pairs,
    })
}

/// The full `d`-cube as masks `0..2^d`.
pub fn hypercube_masks(d: usize) -> Vec<Mask> {
    (0..1u64 << d).map(|i| Mask::from_index(d, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> Mask {
        Mask::from_bits(&s.chars().map(|c| c == '1').collect::<Vec<_>>())
    }

    fn graph(masks: &[&str], scores: &[f64]) -> SubnetGraph {
        SubnetGraph::from_masks(masks.iter().map(|s| bits(s)).collect(), scores.to_vec()).unwrap()
    }

    fn star() -> SubnetGraph {
        graph(
            &["11110000", "01110000", "10110000", "11010000"],
            &[0.0, 0.01, 0.02, 0.03],
        )
    }

    fn pinv_of(g: &SubnetGraph) -> PseudoInverse {
        laplacian_pseudoinverse(&laplacian(g), &g.components()).unwrap()
    }

    /// Every pair, directly from the definition.
    fn brute_force_edges(masks: &[Mask]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                if hamming(&masks[i], &masks[j]).unwrap() == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn star_graph_construction() {
        let g = star();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
    }

    #[test]
    fn three_cube() {
        let g = SubnetGraph::from_masks(hypercube_masks(3), vec![0.0; 8]).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.edges().len(), 12);
        assert!((0..8).all(|i| g.neighbors(i).len() == 3));
        let l = laplacian(&g);
        for i in 0..8 {
            assert_eq!(l[(i, i)], 3.0);
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn duplicate_masks_rejected() {
        let err = SubnetGraph::from_masks(vec![bits("101"), bits("101")], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DuplicateNode { first: 0, second: 1 }));
    }

    #[test]
    fn random_bernoulli_masks_have_no_edges() {
        let mut rng = SeededRng::new(0, 0);
        let masks: Vec<Mask> = (0..300)
            .map(|_| crate::mask::sample_mask(10_000, 0.8, &mut rng).unwrap())
            .collect();
        let g = SubnetGraph::from_masks(masks, vec![0.0; 300]).unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn single_edge_laplacian_and_pinv() {
        let g = graph(&["0", "1"], &[0.0, 1.0]);
        let l = laplacian(&g);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let p = pinv_of(&g);
        let want = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((p.matrix - want).abs().max() < 1e-12);
        let e = dirichlet_energy(&g);
        assert_eq!(e.raw, 1.0);
        assert_eq!(e.per_edge, 1.0);
    }

    #[test]
    fn empty_graph_pinv_is_zero() {
        let g = graph(&["00", "11"], &[0.0, 0.0]);
        let p = pinv_of(&g);
        assert!(p.matrix.iter().all(|&v| v.abs() < 1e-15));
        assert_eq!(effective_resistance(&p, 0, 1).unwrap(), None);
        assert!(matches!(resistance_oracle(&g, 0, 1), Err(Error::Disconnected(0, 1))));
    }

    #[test]
    fn dirichlet_examples() {
        let e = dirichlet_energy(&star());
        assert!((e.raw - 0.0014).abs() < 1e-15);
        assert!(e.consistent(1e-9));
        let mut flat = star();
        flat.scores = vec![0.7; 4];
        assert_eq!(dirichlet_energy(&flat).raw, 0.0);
        let none = graph(&["00", "11"], &[0.0, 1.0]);
        assert_eq!(dirichlet_energy(&none).per_edge, 0.0);
    }

    #[test]
    fn cluster_examples() {
        let c = generalizing_clusters(&star(), 0.5);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.largest_fraction, Some(1.0));
        // two disjoint edges: 000-001 and 110-111
        let g = graph(&["000", "001", "110", "111"], &[0.0; 4]);
        let c = generalizing_clusters(&g, 0.5);
        assert_eq!(c.clusters.len(), 2);
        assert_eq!(c.largest_fraction, Some(0.5));
        assert_eq!(generalizing_clusters(&g, -1.0).largest_fraction, None);
        let single = generalizing_clusters(&graph(&["0", "1"], &[0.0, 1.0]), 0.5);
        assert_eq!(single.largest_fraction, Some(1.0));
    }

    #[test]
    fn resistance_examples() {
        let g = graph(&["0", "1"], &[0.0, 0.0]);
        assert!((effective_resistance(&pinv_of(&g), 0, 1).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((resistance_oracle(&g, 0, 1).unwrap() - 1.0).abs() < 1e-12);

        // 4-cycle 00-10-11-01
        let c4 = graph(&["00", "10", "11", "01"], &[0.0; 4]);
        let r = effective_resistance(&pinv_of(&c4), 0, 1).unwrap().unwrap();
        assert!((r - 0.75).abs() < 1e-12);

        // path 000-100-110-111
        let path = graph(&["000", "100", "110", "111"], &[0.0; 4]);
        assert!((resistance_oracle(&path, 0, 3).unwrap() - 3.0).abs() < 1e-12);
        assert!((effective_resistance(&pinv_of(&path), 0, 3).unwrap().unwrap() - 3.0).abs() < 1e-12);

        let cube = SubnetGraph::from_masks(hypercube_masks(3), vec![0.0; 8]).unwrap();
        let oracle = resistance_oracle(&cube, 0, 1).unwrap();
        assert!((oracle - 7.0 / 12.0).abs() < 1e-12);
        let r = effective_resistance(&pinv_of(&cube), 0, 1).unwrap().unwrap();
        assert!((r - oracle).abs() < 1e-8);
    }

    #[test]
    fn correlation_examples() {
        // path graph: rho = |i - j|; scores i make |ΔC| = rho exactly
        let path = graph(&["000", "100", "110", "111"], &[0.0, 1.0, 2.0, 3.0]);
        let res = resistance_score_correlation(&path, &pinv_of(&path), &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(res.pairs.len(), 6);
        assert!((res.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        let flat = graph(&["000", "100", "110", "111"], &[0.5; 4]);
        let res = resistance_score_correlation(&flat, &pinv_of(&flat), &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(res.pearson_r, None);
        let tiny = graph(&["0", "1"], &[0.0, 1.0]);
        assert!(matches!(
            resistance_score_correlation(&tiny, &pinv_of(&tiny), &mut SeededRng::new(0, 0)),
            Err(Error::InsufficientData(_))
        ));
    }

    fn random_graph(seed: u64, n: usize, d: usize, p: f64) -> SubnetGraph {
        // dense sampling from a small cube gives plenty of Hamming-1 edges
        let mut rng = SeededRng::new(seed, 0);
        let mut seen = std::collections::HashSet::new();
        let mut masks = Vec::new();
        while masks.len() < n {
            let m = crate::mask::sample_mask(d, p, &mut rng).unwrap();
            if seen.insert(m.clone()) {
                masks.push(m);
            }
        }
        let scores = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        SubnetGraph::from_masks(masks, scores).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn edge_builder_matches_brute_force(seed in 0u64..1000, n in 2usize..120) {
            let g = random_graph(seed, n, 9, 0.5);
            prop_assert_eq!(g.edges().to_vec(), brute_force_edges(g.masks()));
        }

        #[test]
        fn laplacian_properties(seed in 0u64..1000, n in 2usize..40) {
            let g = random_graph(seed, n, 7, 0.5);
            let l = laplacian(&g);
            prop_assert_eq!(&l, &l.transpose());
            for i in 0..n {
                prop_assert_eq!(l.row(i).sum(), 0.0);
            }
            prop_assert!(min_eigenvalue(&l).unwrap() >= -1e-9);
            let p = laplacian_pseudoinverse(&l, &g.components()).unwrap();
            prop_assert!((&l * &p.matrix * &l - &l).abs().max() < 1e-8);
            let e = dirichlet_energy(&g);
            prop_assert!(e.consistent(1e-9));
        }

        #[test]
        fn resistance_is_a_metric_matching_the_oracle(seed in 0u64..1000, n in 3usize..32) {
            let g = random_graph(seed, n, 6, 0.5);
            let p = pinv_of(&g);
            let rho = |i, j| effective_resistance(&p, i, j).unwrap();
            for i in 0..n {
                for j in 0..n {
                    match rho(i, j) {
                        Some(r) => {
                            prop_assert!(r >= 0.0);
                            prop_assert_eq!(Some(r), rho(j, i));
                            let o = resistance_oracle(&g, i, j).unwrap();
                            prop_assert!((r - o).abs() < 1e-8, "{} vs {}", r, o);
                            for k in 0..n {
                                if let (Some(a), Some(b)) = (rho(i, k), rho(k, j)) {
                                    prop_assert!(r <= a + b + 1e-9);
                                }
                            }
                        }
                        None => prop_assert!(resistance_oracle(&g, i, j).is_err()),
                    }
                }
            }
        }

        #[test]
        fn adding_an_edge_never_raises_resistance(seed in 0u64..1000, n in 3usize..20) {
            let g = random_graph(seed, n, 6, 0.5);
            let mut rng = SeededRng::new(seed, 7);
            use rand::Rng;
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            prop_assume!(a != b);
            let mut more = g.edges().to_vec();
            if !more.contains(&(a.min(b), a.max(b))) {
                more.push((a.min(b), a.max(b)));
            }
            for i in 0..n {
                for j in i + 1..n {
                    if let Ok(before) = resistance_oracle_edges(n, g.edges(), i, j) {
                        let after = resistance_oracle_edges(n, &more, i, j).unwrap();
                        prop_assert!(after <= before + 1e-9);
                    }
                }
            }
        }
    }
}
