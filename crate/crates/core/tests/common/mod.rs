#![allow(dead_code)]

use std::collections::VecDeque;

use consensus_core::graph::DirectedGraph;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random Hamiltonian cycle over a shuffled node order plus sparse extra
/// edges; weights in `[0.1, 5)`.
pub fn random_strongly_connected<R: Rng>(rng: &mut R, n: usize) -> DirectedGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    if n > 1 {
        for w in 0..n {
            edges.push((order[w], order[(w + 1) % n], rng.random_range(0.1..5.0)));
        }
    }
    let p: f64 = rng.random_range(0.0..0.3);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                edges.push((j, i, rng.random_range(0.1..5.0)));
            }
        }
    }
    DirectedGraph::from_edges(n, &edges).unwrap()
}

/// Random graph whose condensation has a single source component and at
/// least two components, so it has a spanning tree but is not strongly
/// connected. Needs `n >= 2`.
pub fn random_spanning_tree_graph<R: Rng>(rng: &mut R, n: usize) -> DirectedGraph {
    assert!(n >= 2);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let k = rng.random_range(2..=n.min(6));
    // Split points give k nonempty groups.
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort();
    let mut groups = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        groups.push(nodes[start..c].to_vec());
        start = c;
    }
    let mut edges = Vec::new();
    for g in &groups {
        if g.len() > 1 {
            for w in 0..g.len() {
                edges.push((g[w], g[(w + 1) % g.len()], rng.random_range(0.1..5.0)));
            }
            for &a in g {
                for &b in g {
                    if a != b && rng.random_bool(0.15) {
                        edges.push((a, b, rng.random_range(0.1..5.0)));
                    }
                }
            }
        }
    }
    for c in 1..groups.len() {
        let src_group = &groups[rng.random_range(0..c)];
        let from = src_group[rng.random_range(0..src_group.len())];
        let to = groups[c][rng.random_range(0..groups[c].len())];
        edges.push((from, to, rng.random_range(0.1..5.0)));
        for earlier in &groups[..c] {
            for &a in earlier {
                for &b in &groups[c] {
                    if rng.random_bool(0.05) {
                        edges.push((a, b, rng.random_range(0.1..5.0)));
                    }
                }
            }
        }
    }
    DirectedGraph::from_edges(n, &edges).unwrap()
}

/// `reach[s][t]`: a directed path `s -> ... -> t` exists (edges follow
/// information flow `j -> i` when `a_ij > 0`).
pub fn reachability(g: &DirectedGraph) -> Vec<Vec<bool>> {
    let n = g.n();
    let mut out_adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if g.weight(i, j) > 0.0 {
                out_adj[j].push(i);
            }
        }
    }
    (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &out_adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen
        })
        .collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Left null vector of the Laplacian normalized to sum 1, computed from
/// the transposed system with one equation swapped for the normalization.
pub fn omega_oracle(g: &DirectedGraph) -> Option<Vec<f64>> {
    let n = g.n();
    let l = g.laplacian();
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| l[(c, r)]).collect()).collect();
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    gauss_solve(a, b)
}

/// Inverse by column-wise solves; `None` when singular.
pub fn inverse(m: &nalgebra::DMatrix<f64>) -> Option<Vec<Vec<f64>>> {
    let n = m.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| m[(r, c)]).collect()).collect();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cols.push(gauss_solve(rows.clone(), e)?);
    }
    Some((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
}
