//! Weighted directed interaction graphs.
//!
//! Weights follow the receiving-row convention: `a_ij > 0` means node `i`
//! receives information from node `j`, i.e. the edge `j -> i` exists. With
//! this convention the Laplacian `L = D - A` has the in-degrees on its
//! diagonal and every row sums to zero.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Singular values below this (relative to the largest) count as zero when
/// sizing the left null space of the Laplacian.
const NULL_SPACE_RTOL: f64 = 1e-10;
/// Strict positivity threshold for eigenvalue real parts.
pub const EIGEN_POSITIVE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("weight matrix has {got} entries, expected {n}x{n}")]
    BadShape { n: usize, got: usize },
    #[error("edge weight a[{row}][{col}] = {weight} is negative or not finite")]
    BadWeight { row: usize, col: usize, weight: f64 },
    #[error("self-loop on node {0} (diagonal weights must be zero)")]
    SelfLoop(usize),
    #[error("edge endpoint {index} outside 1..={n}")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("left null space of the Laplacian has dimension {0}, expected 1")]
    NumericalRankFailure(usize),
    #[error("graph has {0} root components; a spanning tree needs exactly one")]
    NoSpanningTree(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Weighted directed graph over nodes `0..n` (1-based in files and output).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    /// Row-major `n x n`, `weights[i * n + j] = a_ij`.
    weights: Vec<f64>,
}

/// One edge in the graph file format; `from` and `to` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Serialized graph: `{"n": 3, "edges": [{"from": 1, "to": 2, "weight": 1.0}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<EdgeSpec>,
}

impl DirectedGraph {
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if weights.len() != n * n {
            return Err(GraphError::BadShape { n, got: weights.len() });
        }
        for row in 0..n {
            for col in 0..n {
                let w = weights[row * n + col];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { row, col, weight: w });
                }
                if row == col && w != 0.0 {
                    return Err(GraphError::SelfLoop(row + 1));
                }
            }
        }
        Ok(Self { n, weights })
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::from_weights(n, vec![0.0; n * n])
    }

    /// Builds a graph from 0-based `(from, to, weight)` triples. Repeated
    /// edges accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut weights = vec![0.0; n * n];
        for &(from, to, w) in edges {
            for idx in [from, to] {
                if idx >= n {
                    return Err(GraphError::NodeOutOfRange { index: idx + 1, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from + 1));
            }
            weights[to * n + from] += w;
        }
        Self::from_weights(n, weights)
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0` with unit weights.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n == 1 {
            return Self::empty(1);
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `a_ij`: weight with which node `i` listens to node `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Nonzero in-neighbors of `i` as `(j, a_ij)`.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.weights[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(j, &w)| (j, w))
    }

    pub fn in_degrees(&self) -> Vec<f64> {
        self.weights.chunks(self.n).map(|row| row.iter().sum()).collect()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        let degrees = self.in_degrees();
        DMatrix::from_fn(n, n, |i, j| if i == j { degrees[i] } else { -self.weight(i, j) })
    }

    /// Nodes reachable from `start` along edge direction (information flow).
    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(j) = queue.pop_front() {
            for i in 0..self.n {
                if !seen[i] && self.weight(i, j) > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strong_components().len() == 1
    }

    pub fn has_spanning_tree(&self) -> bool {
        self.root_components().len() == 1
    }

    /// A node reaching every other node, if one exists (lowest index wins).
    pub fn spanning_tree_root(&self) -> Option<usize> {
        let roots = self.root_components();
        match roots.as_slice() {
            [only] => {
                let root = only[0];
                debug_assert!(self.reachable_from(root).iter().all(|&r| r));
                Some(root)
            }
            _ => None,
        }
    }

    /// Strongly connected components, each sorted ascending.
    fn strong_components(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.n, 0);
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for i in 0..self.n {
            for (j, _) in self.in_neighbors(i) {
                g.add_edge(nodes[j], nodes[i], ());
            }
        }
        petgraph::algo::tarjan_scc(&g)
            .into_iter()
            .map(|comp| {
                let mut members: Vec<usize> = comp.into_iter().map(|ix| ix.index()).collect();
                members.sort_unstable();
                members
            })
            .collect()
    }

    /// Components that receive no edge from outside themselves.
    fn root_components(&self) -> Vec<Vec<usize>> {
        let comps = self.strong_components();
        let mut comp_of = vec![0; self.n];
        for (c, members) in comps.iter().enumerate() {
            for &v in members {
                comp_of[v] = c;
            }
        }
        comps
            .iter()
            .enumerate()
            .filter(|(c, members)| {
                members
                    .iter()
                    .all(|&i| self.in_neighbors(i).all(|(j, _)| comp_of[j] == *c))
            })
            .map(|(_, members)| members.clone())
            .collect()
    }

    /// Positive left eigenvector of the Laplacian, normalized to sum 1.
    pub fn left_eigenvector(&self) -> Result<Vec<f64>, GraphError> {
        if !self.is_strongly_connected() {
            return Err(GraphError::NotStronglyConnected);
        }
        let n = self.n;
        if n == 1 {
            return Ok(vec![1.0]);
        }
        // omega L = 0  <=>  L^T omega^T = 0: right null space of L^T.
        let lt = self.laplacian().transpose();
        let svd = lt.svd(false, true);
        let sv = &svd.singular_values;
        let scale = sv.max().max(1.0);
        let null_dims: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= NULL_SPACE_RTOL * scale).collect();
        if null_dims.len() != 1 {
            return Err(GraphError::NumericalRankFailure(null_dims.len()));
        }
        let v_t = svd.v_t.expect("v_t requested");
        let row = v_t.row(null_dims[0]);
        let total: f64 = row.iter().sum();
        let mut omega: Vec<f64> = row.iter().map(|v| v / total).collect();
        if omega.iter().any(|&w| w <= 0.0) {
            return Err(GraphError::NumericalRankFailure(1));
        }
        refine_left_null_vector(&self.laplacian(), &mut omega);
        Ok(omega)
    }

    /// `W L + L^T W` with `W = diag(omega)`.
    pub fn lhat(&self, omega: &[f64]) -> Result<DMatrix<f64>, GraphError> {
        if omega.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: omega.len(),
            });
        }
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(omega));
        let l = self.laplacian();
        Ok(&w * &l + l.transpose() * &w)
    }

    /// Relabels nodes into lower block-triangular (Perron-Frobenius) form.
    pub fn perron_frobenius_form(&self) -> Result<GraphDecomposition, GraphError> {
        let comps = self.strong_components();
        let k = comps.len();
        let mut comp_of = vec![0; self.n];
        for (c, members) in comps.iter().enumerate() {
            for &v in members {
                comp_of[v] = c;
            }
        }
        // Condensation edges: source component -> receiving component.
        let mut succ = vec![Vec::new(); k];
        let mut indegree = vec![0usize; k];
        for i in 0..self.n {
            for (j, _) in self.in_neighbors(i) {
                let (from, to) = (comp_of[j], comp_of[i]);
                if from != to && !succ[from].contains(&to) {
                    succ[from].push(to);
                    indegree[to] += 1;
                }
            }
        }
        let roots = indegree.iter().filter(|&&d| d == 0).count();
        if roots != 1 {
            return Err(GraphError::NoSpanningTree(roots));
        }
        // Kahn's algorithm; ties broken by smallest member label.
        let mut order = Vec::with_capacity(k);
        let mut ready: Vec<usize> = (0..k).filter(|&c| indegree[c] == 0).collect();
        while !ready.is_empty() {
            ready.sort_by_key(|&c| std::cmp::Reverse(comps[c][0]));
            let c = ready.pop().expect("nonempty");
            order.push(c);
            for &s in &succ[c] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        let blocks: Vec<Vec<usize>> = order.iter().map(|&c| comps[c].clone()).collect();
        let permutation = blocks.iter().flatten().copied().collect();
        Ok(GraphDecomposition { permutation, blocks })
    }

    pub fn to_spec(&self) -> GraphSpec {
        let mut edges = Vec::new();
        for to in 0..self.n {
            for (from, weight) in self.in_neighbors(to) {
                edges.push(EdgeSpec {
                    from: from + 1,
                    to: to + 1,
                    weight,
                });
            }
        }
        edges.sort_by_key(|e| (e.from, e.to));
        GraphSpec { n: self.n, edges }
    }
}

impl TryFrom<&GraphSpec> for DirectedGraph {
    type Error = GraphError;

    fn try_from(spec: &GraphSpec) -> Result<Self, GraphError> {
        if spec.n == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = Vec::with_capacity(spec.edges.len());
        for e in &spec.edges {
            for idx in [e.from, e.to] {
                if idx == 0 || idx > spec.n {
                    return Err(GraphError::NodeOutOfRange { index: idx, n: spec.n });
                }
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(GraphError::BadWeight {
                    row: e.to,
                    col: e.from,
                    weight: e.weight,
                });
            }
            edges.push((e.from - 1, e.to - 1, e.weight));
        }
        DirectedGraph::from_edges(spec.n, &edges)
    }
}

/// One Newton-style correction step: the SVD vector is accurate to roughly
/// `eps * cond`, re-solving with the sum constraint tightens the residual.
fn refine_left_null_vector(l: &DMatrix<f64>, omega: &mut [f64]) {
    let n = omega.len();
    // Solve omega M = e_n^T, where M is L with its last column replaced by ones.
    let mut m = l.clone();
    for i in 0..n {
        m[(i, n - 1)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    if let Some(sol) = m.transpose().lu().solve(&rhs) {
        if sol.iter().all(|&w| w > 0.0 && w.is_finite()) {
            omega.copy_from_slice(sol.as_slice());
        }
    }
}

/// Node relabeling that puts the Laplacian in lower block-triangular form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphDecomposition {
    /// `permutation[new] = old` (0-based).
    pub permutation: Vec<usize>,
    /// Node groups in block order. The first is the root component; the
    /// diagonal Laplacian blocks of the others are nonsingular M-matrices.
    pub blocks: Vec<Vec<usize>>,
}

impl GraphDecomposition {
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// `P L P^T`, rows and columns reordered by `permutation`.
    pub fn permuted_laplacian(&self, g: &DirectedGraph) -> DMatrix<f64> {
        let l = g.laplacian();
        let p = &self.permutation;
        DMatrix::from_fn(p.len(), p.len(), |r, c| l[(p[r], p[c])])
    }

    /// Diagonal block `L_ll` of the permuted Laplacian.
    pub fn diagonal_block(&self, g: &DirectedGraph, block: usize) -> DMatrix<f64> {
        let nodes = &self.blocks[block];
        let l = g.laplacian();
        DMatrix::from_fn(nodes.len(), nodes.len(), |r, c| l[(nodes[r], nodes[c])])
    }

    /// True if every entry above the diagonal blocks is exactly zero.
    pub fn is_lower_block_triangular(&self, g: &DirectedGraph) -> bool {
        let pl = self.permuted_laplacian(g);
        let mut block_of = Vec::with_capacity(self.permutation.len());
        for (b, nodes) in self.blocks.iter().enumerate() {
            block_of.extend(std::iter::repeat_n(b, nodes.len()));
        }
        (0..pl.nrows()).all(|r| (0..pl.ncols()).all(|c| block_of[c] <= block_of[r] || pl[(r, c)] == 0.0))
    }
}

/// Nonpositive off-diagonal entries and every eigenvalue with real part
/// above [`EIGEN_POSITIVE_TOL`].
pub fn is_nonsingular_m_matrix(mat: &DMatrix<f64>) -> bool {
    if !mat.is_square() || mat.nrows() == 0 {
        return false;
    }
    let n = mat.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && mat[(i, j)] > 0.0 {
                return false;
            }
        }
    }
    mat.clone()
        .complex_eigenvalues()
        .iter()
        .all(|ev| ev.re > EIGEN_POSITIVE_TOL)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    mat.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
