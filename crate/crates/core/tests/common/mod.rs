//! Brute-force reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;

use patentscope::graph::CollabNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Undirected simple graph as an edge list over `0..n`.
#[derive(Debug, Clone)]
pub struct SmallGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn node_name(i: usize) -> String {
    format!("n{i:02}")
}

impl SmallGraph {
    /// G(n, p) with weights drawn from `weights`.
    pub fn random(n: usize, p: f64, weights: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v, weights[rng.gen_range(0..weights.len())]));
                }
            }
        }
        SmallGraph { n, edges }
    }

    /// Nodes are named so that name order equals index order. Isolated
    /// nodes cannot be expressed in an edge list, so callers map through
    /// [`SmallGraph::index_map`].
    pub fn network(&self) -> CollabNetwork {
        let names: Vec<String> = (0..self.n).map(node_name).collect();
        CollabNetwork::from_weighted_pairs(
            self.edges
                .iter()
                .map(|&(u, v, w)| (names[u].as_str(), names[v].as_str(), w)),
        )
        .unwrap()
    }

    /// Graph index of every network node.
    pub fn index_map(&self, net: &CollabNetwork) -> Vec<usize> {
        net.names().iter().map(|n| n[1..].parse::<usize>().unwrap()).collect()
    }

    /// Nodes that appear on at least one edge.
    pub fn present(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        for &(u, v, _) in &self.edges {
            seen[u] = true;
            seen[v] = true;
        }
        seen
    }

    /// Path lengths: 1 per hop, or `1 / w` when `weighted`.
    pub fn lengths(&self, weighted: bool) -> Vec<Vec<Option<f64>>> {
        let mut adj = vec![vec![None; self.n]; self.n];
        for &(u, v, w) in &self.edges {
            let len = if weighted { 1.0 / w } else { 1.0 };
            adj[u][v] = Some(len);
            adj[v][u] = Some(len);
        }
        adj
    }
}

/// All-pairs distances by Floyd-Warshall; `INFINITY` when unreachable.
pub fn floyd_warshall(g: &SmallGraph, weighted: bool) -> Vec<Vec<f64>> {
    let adj = g.lengths(weighted);
    let mut d = vec![vec![f64::INFINITY; g.n]; g.n];
    for i in 0..g.n {
        d[i][i] = 0.0;
        for j in 0..g.n {
            if let Some(l) = adj[i][j] {
                d[i][j] = l;
            }
        }
    }
    for k in 0..g.n {
        for i in 0..g.n {
            for j in 0..g.n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Every shortest path from `s` to `t`, found by depth-first enumeration.
pub fn shortest_paths(g: &SmallGraph, d: &[Vec<f64>], weighted: bool, s: usize, t: usize) -> Vec<Vec<usize>> {
    let adj = g.lengths(weighted);
    let mut out = Vec::new();
    let mut path = vec![s];
    fn walk(
        adj: &[Vec<Option<f64>>],
        d: &[Vec<f64>],
        t: usize,
        walked: f64,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for (v, len) in adj[u].iter().enumerate() {
            let Some(len) = len else { continue };
            if path.contains(&v) {
                continue;
            }
            let so_far = walked + len;
            if close(so_far + d[v][t], d[path[0]][t]) {
                path.push(v);
                walk(adj, d, t, so_far, path, out);
                path.pop();
            }
        }
    }
    walk(&adj, d, t, 0.0, &mut path, &mut out);
    out
}

/// Union-find component sizes per node.
pub fn component_sizes(g: &SmallGraph) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..g.n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for &(u, v, _) in &g.edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a] = b;
        }
    }
    let roots: Vec<usize> = (0..g.n).map(|x| find(&mut parent, x)).collect();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &r in &roots {
        *counts.entry(r).or_default() += 1;
    }
    roots.iter().map(|r| counts[r]).collect()
}

/// Closeness `(m - 1) / Σ d` over reachable nodes.
pub fn brute_closeness(g: &SmallGraph, weighted: bool) -> Vec<f64> {
    let d = floyd_warshall(g, weighted);
    (0..g.n)
        .map(|i| {
            let reach: Vec<f64> = d[i].iter().copied().filter(|x| x.is_finite()).collect();
            let total: f64 = reach.iter().sum();
            if reach.len() <= 1 || total == 0.0 {
                0.0
            } else {
                (reach.len() - 1) as f64 / total
            }
        })
        .collect()
}

/// Betweenness by enumerating every shortest path of every unordered pair.
pub fn brute_betweenness(g: &SmallGraph, weighted: bool, normalized: bool) -> Vec<f64> {
    let d = floyd_warshall(g, weighted);
    let mut b = vec![0.0; g.n];
    for s in 0..g.n {
        for t in s + 1..g.n {
            if !d[s][t].is_finite() {
                continue;
            }
            let paths = shortest_paths(g, &d, weighted, s, t);
            let total = paths.len() as f64;
            for path in &paths {
                for &v in &path[1..path.len() - 1] {
                    b[v] += 1.0 / total;
                }
            }
        }
    }
    if normalized {
        let sizes = component_sizes(g);
        for (v, x) in b.iter_mut().enumerate() {
            let m = sizes[v] as f64;
            *x = if m < 3.0 {
                0.0
            } else {
                *x / ((m - 1.0) * (m - 2.0) / 2.0)
            };
        }
    }
    b
}

/// `Q = (1/2W) Σ_ij [A_ij - γ k_i k_j / 2W] δ(c_i, c_j)` from the dense matrix.
pub fn brute_modularity(g: &SmallGraph, assignment: &[usize], resolution: f64) -> f64 {
    let mut a = vec![vec![0.0; g.n]; g.n];
    for &(u, v, w) in &g.edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_w: f64 = k.iter().sum();
    if two_w == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..g.n {
        for j in 0..g.n {
            if assignment[i] == assignment[j] {
                q += a[i][j] - resolution * k[i] * k[j] / two_w;
            }
        }
    }
    q / two_w
}

/// Maximum modularity over every partition of `0..n` (restricted growth
/// strings), with the maximizing assignment.
pub fn best_partition(g: &SmallGraph, resolution: f64) -> (f64, Vec<usize>) {
    let n = g.n;
    let mut labels = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, labels.clone());
    fn rec(
        g: &SmallGraph,
        resolution: f64,
        i: usize,
        max_label: usize,
        labels: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if i == labels.len() {
            let q = brute_modularity(g, labels, resolution);
            if q > best.0 {
                *best = (q, labels.clone());
            }
            return;
        }
        for l in 0..=max_label + 1 {
            labels[i] = l;
            rec(g, resolution, i + 1, max_label.max(l), labels, best);
        }
    }
    if n == 0 {
        return (0.0, Vec::new());
    }
    labels[0] = 0;
    rec(g, resolution, 1, 0, &mut labels, &mut best);
    best
}

/// Davies-Bouldin straight from the definition, against given centroids.
pub fn naive_davies_bouldin(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() };
    let k = centroids.len();
    let s: Vec<f64> = (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            members.iter().map(|p| dist(p, &centroids[c])).sum::<f64>() / members.len() as f64
        })
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (s[i] + s[j]) / dist(&centroids[i], &centroids[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

/// `count` Gaussian blobs of `per` points in `dim` dimensions, centered on
/// scaled unit axes, with the planted label of each point.
pub fn gaussian_blobs(
    count: usize,
    per: usize,
    dim: usize,
    spread: f64,
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut points = Vec::with_capacity(count * per);
    let mut labels = Vec::with_capacity(count * per);
    for c in 0..count {
        for _ in 0..per {
            let p: Vec<f64> = (0..dim)
                .map(|d| if d == c % dim { spread } else { 0.0 } + noise.sample(&mut rng))
                .collect();
            points.push(p);
            labels.push(c);
        }
    }
    (points, labels)
}

/// True when two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(x, y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

/// Relative error helper.
pub fn rel_err(found: f64, expected: f64) -> f64 {
    (found - expected).abs() / expected.abs()
}
