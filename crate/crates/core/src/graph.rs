//! Collaboration network construction and centrality measures.
//!
//! Shortest paths are unweighted hop counts unless `weighted` is set, in which
//! case an edge of weight `w` has length `1/w`. Closeness and betweenness are
//! computed per connected component with component-local node counts.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::CoRegistrationEdge;

/// Undirected weighted graph of contributors. Node indices follow name order.
#[derive(Debug, Clone, PartialEq)]
pub struct CollabNetwork {
    names: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl CollabNetwork {
    /// Builds a network from `(source, target, weight)` triples. Repeated
    /// pairs have their weights summed.
    pub fn from_weighted_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let mut name_set = BTreeSet::new();
        for &(s, t, w) in &pairs {
            if s == t {
                return Err(Error::SelfLoop(s.to_string()));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge {s}--{t} has non-positive weight {w}"
                )));
            }
            name_set.insert(s);
            name_set.insert(t);
        }
        let names: Vec<String> = name_set.into_iter().map(str::to_string).collect();
        let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
        for (s, t, w) in pairs {
            let (a, b) = (index[s], index[t]);
            *merged.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
        }
        let mut adjacency = vec![Vec::new(); names.len()];
        for (&(a, b), &w) in &merged {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        Ok(CollabNetwork {
            names,
            index,
            adjacency,
            edge_count: merged.len(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn strength(&self, node: usize) -> f64 {
        self.adjacency[node].iter().map(|&(_, w)| w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.node_count()).map(|v| self.strength(v)).sum::<f64>() / 2.0
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&(v, _)| u < v).map(move |&(v, w)| (u, v, w)))
    }
}

/// Every name in the edge list becomes a node.
pub fn build_network(edges: &[CoRegistrationEdge]) -> Result<CollabNetwork> {
    CollabNetwork::from_weighted_pairs(
        edges
            .iter()
            .map(|e| (e.source.as_str(), e.target.as_str(), e.weight as f64)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeStats {
    pub nodes: usize,
    pub edges: usize,
    pub average_degree: f64,
    pub average_weighted_degree: f64,
    pub density: f64,
}

pub fn degree_stats(net: &CollabNetwork) -> DegreeStats {
    degree_stats_from_totals(net.node_count(), net.edge_count(), net.total_weight())
}

/// Closed forms from node count, edge count and total edge weight.
pub fn degree_stats_from_totals(nodes: usize, edges: usize, total_weight: f64) -> DegreeStats {
    let n = nodes as f64;
    let e = edges as f64;
    let (average_degree, average_weighted_degree) = if nodes == 0 {
        (0.0, 0.0)
    } else {
        (2.0 * e / n, 2.0 * total_weight / n)
    };
    let density = if nodes < 2 { 0.0 } else { 2.0 * e / (n * (n - 1.0)) };
    DegreeStats {
        nodes,
        edges,
        average_degree,
        average_weighted_degree,
        density,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Degree,
    WeightedDegree,
    Closeness,
    Betweenness,
    Eigenvector,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::WeightedDegree => "weighted_degree",
            Measure::Closeness => "closeness",
            Measure::Betweenness => "betweenness",
            Measure::Eigenvector => "eigenvector",
        }
    }
}

/// One score per node, indexed like [`CollabNetwork::names`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityScores {
    pub measure: Measure,
    pub values: Vec<f64>,
    pub normalization: String,
    /// Only meaningful for iterative measures.
    pub converged: bool,
}

pub fn degree(net: &CollabNetwork) -> CentralityScores {
    CentralityScores {
        measure: Measure::Degree,
        values: (0..net.node_count()).map(|v| net.degree(v) as f64).collect(),
        normalization: "none (neighbor count)".into(),
        converged: true,
    }
}

pub fn weighted_degree(net: &CollabNetwork) -> CentralityScores {
    CentralityScores {
        measure: Measure::WeightedDegree,
        values: (0..net.node_count()).map(|v| net.strength(v)).collect(),
        normalization: "none (sum of incident weights)".into(),
        converged: true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Components {
    /// Component id per node.
    pub component_of: Vec<usize>,
    /// Size per component id, non-increasing.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_of(&self, node: usize) -> usize {
        self.sizes[self.component_of[node]]
    }
}

/// Component ids are ordered by decreasing size, then smallest member name.
pub fn connected_components(net: &CollabNetwork) -> Components {
    let n = net.node_count();
    let mut raw = vec![usize::MAX; n];
    // (size, smallest member index) per raw component; nodes are in name order
    // so the first node reached is the smallest name.
    let mut found: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if raw[start] != usize::MAX {
            continue;
        }
        let id = found.len();
        raw[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &(v, _) in net.neighbors(u) {
                if raw[v] == usize::MAX {
                    raw[v] = id;
                    queue.push_back(v);
                }
            }
        }
        found.push((size, start));
    }
    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| found[b].0.cmp(&found[a].0).then(found[a].1.cmp(&found[b].1)));
    let mut remap = vec![0; found.len()];
    for (new_id, &old) in order.iter().enumerate() {
        remap[old] = new_id;
    }
    Components {
        component_of: raw.iter().map(|&c| remap[c]).collect(),
        sizes: order.iter().map(|&c| found[c].0).collect(),
    }
}

/// Single-source shortest-path DAG: distances, path counts, predecessors and
/// the nodes in non-decreasing distance order.
struct PathDag {
    dist: Vec<f64>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
    order: Vec<usize>,
}

const UNREACHED: f64 = f64::INFINITY;

fn shortest_paths(net: &CollabNetwork, source: usize, weighted: bool) -> PathDag {
    if weighted {
        dijkstra_dag(net, source)
    } else {
        bfs_dag(net, source)
    }
}

fn bfs_dag(net: &CollabNetwork, source: usize) -> PathDag {
    let n = net.node_count();
    let mut dist = vec![UNREACHED; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    dist[source] = 0.0;
    sigma[source] = 1.0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, _) in net.neighbors(u) {
            if dist[v] == UNREACHED {
                dist[v] = dist[u] + 1.0;
                queue.push_back(v);
            }
            if dist[v] == dist[u] + 1.0 {
                sigma[v] += sigma[u];
                preds[v].push(u);
            }
        }
    }
    PathDag {
        dist,
        sigma,
        preds,
        order,
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn dijkstra_dag(net: &CollabNetwork, source: usize) -> PathDag {
    let n = net.node_count();
    let mut dist = vec![UNREACHED; n];
    let mut sigma = vec![0.0; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::new();
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    sigma[source] = 1.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        order.push(u);
        for &(v, w) in net.neighbors(u) {
            if settled[v] {
                continue;
            }
            let candidate = d + 1.0 / w;
            if dist[v] == UNREACHED || (candidate < dist[v] && !same_length(candidate, dist[v])) {
                dist[v] = candidate;
                sigma[v] = sigma[u];
                preds[v] = vec![u];
                heap.push(HeapEntry {
                    dist: candidate,
                    node: v,
                });
            } else if same_length(candidate, dist[v]) {
                sigma[v] += sigma[u];
                preds[v].push(u);
            }
        }
    }
    PathDag {
        dist,
        sigma,
        preds,
        order,
    }
}

/// Closeness `(m - 1) / Σ dis(i, j)` over the `m` nodes of `i`'s component;
/// singleton components score 0.
pub fn closeness(net: &CollabNetwork, weighted: bool) -> CentralityScores {
    let values = (0..net.node_count())
        .into_par_iter()
        .map(|s| {
            let dag = shortest_paths(net, s, weighted);
            let reached = dag.order.len();
            let total: f64 = dag.order.iter().map(|&v| dag.dist[v]).sum();
            if reached <= 1 || total <= 0.0 {
                0.0
            } else {
                (reached - 1) as f64 / total
            }
        })
        .collect();
    CentralityScores {
        measure: Measure::Closeness,
        values,
        normalization: "(component size - 1) / sum of distances within component".into(),
        converged: true,
    }
}

/// Sources per reduction chunk. Fixed so the summation order does not depend
/// on the number of worker threads.
const BETWEENNESS_CHUNK: usize = 32;

/// Betweenness over unordered pairs `{j, k}` with `j != i != k`.
///
/// When `normalized`, each node's value is divided by `(m-1)(m-2)/2` where `m`
/// is its component size (components smaller than 3 score 0).
pub fn betweenness(net: &CollabNetwork, normalized: bool, weighted: bool) -> CentralityScores {
    let n = net.node_count();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(BETWEENNESS_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut delta = vec![0.0; n];
            for &s in chunk {
                let dag = shortest_paths(net, s, weighted);
                for &v in &dag.order {
                    delta[v] = 0.0;
                }
                for &w in dag.order.iter().rev() {
                    let coeff = (1.0 + delta[w]) / dag.sigma[w];
                    for &v in &dag.preds[w] {
                        delta[v] += dag.sigma[v] * coeff;
                    }
                    if w != s {
                        acc[w] += delta[w];
                    }
                }
            }
            acc
        })
        .collect();

    let mut values = vec![0.0; n];
    for partial in &partials {
        for (v, p) in values.iter_mut().zip(partial) {
            *v += p;
        }
    }
    // Every unordered pair was counted from both endpoints.
    for v in &mut values {
        *v /= 2.0;
    }

    let normalization = if normalized {
        let comps = connected_components(net);
        for (node, v) in values.iter_mut().enumerate() {
            let m = comps.size_of(node) as f64;
            *v = if m < 3.0 {
                0.0
            } else {
                *v / ((m - 1.0) * (m - 2.0) / 2.0)
            };
        }
        "divided by (m-1)(m-2)/2, m = component size"
    } else {
        "raw unordered-pair sum"
    };
    CentralityScores {
        measure: Measure::Betweenness,
        values,
        normalization: normalization.into(),
        converged: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvectorOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EigenvectorOptions {
    fn default() -> Self {
        EigenvectorOptions {
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

/// Power iteration on the weighted adjacency, each component scaled so its
/// largest entry is 1.
///
/// Iterates `x <- (A + I) x`, which has the same eigenvectors as `A` but a
/// strictly dominant eigenvalue on bipartite components, where plain `A x`
/// oscillates.
pub fn eigenvector(net: &CollabNetwork, opts: EigenvectorOptions) -> CentralityScores {
    let n = net.node_count();
    let comps = connected_components(net);
    let mut x = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut converged = n == 0;
    for _ in 0..opts.max_iter {
        for (u, out) in next.iter_mut().enumerate() {
            *out = x[u] + net.neighbors(u).iter().map(|&(v, w)| w * x[v]).sum::<f64>();
        }
        scale_max_per_component(&mut next, &comps);
        let diff = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if diff < opts.tol {
            converged = true;
            break;
        }
    }
    CentralityScores {
        measure: Measure::Eigenvector,
        values: x,
        normalization: "max entry = 1 per connected component".into(),
        converged,
    }
}

fn scale_max_per_component(x: &mut [f64], comps: &Components) {
    let mut max = vec![0.0f64; comps.count()];
    for (v, &c) in comps.component_of.iter().enumerate() {
        max[c] = max[c].max(x[v]);
    }
    for (v, &c) in comps.component_of.iter().enumerate() {
        if max[c] > 0.0 {
            x[v] /= max[c];
        }
    }
}

/// Highest `k` scores, ties broken by ascending name.
pub fn top_k(net: &CollabNetwork, scores: &CentralityScores, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<usize> = (0..scores.values.len()).collect();
    ranked.sort_by(|&a, &b| {
        scores.values[b]
            .total_cmp(&scores.values[a])
            .then_with(|| net.name(a).cmp(net.name(b)))
    });
    ranked
        .into_iter()
        .take(k)
        .map(|v| (net.name(v).to_string(), scores.values[v]))
        .collect()
}
