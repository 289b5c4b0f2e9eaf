//! Community detection by weighted Louvain modularity maximization.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::CollabNetwork;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    /// Community id per node; ids are dense and numbered by first appearance
    /// in node order.
    pub assignment: Vec<usize>,
    pub modularity: f64,
    pub resolution: f64,
    pub seed: u64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&m| m + 1)
    }
}

/// Weighted Newman modularity with resolution `gamma`:
/// `Q = Σ_c [ 2·in_c / 2W − γ (tot_c / 2W)² ]`.
pub fn modularity(net: &CollabNetwork, assignment: &[usize], resolution: f64) -> Result<f64> {
    if assignment.len() != net.node_count() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} nodes, network has {}",
            assignment.len(),
            net.node_count()
        )));
    }
    let two_w = 2.0 * net.total_weight();
    if two_w == 0.0 {
        return Ok(0.0);
    }
    let communities = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut internal = vec![0.0; communities];
    let mut total = vec![0.0; communities];
    for (u, v, w) in net.edges() {
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += w;
        }
    }
    for (u, &c) in assignment.iter().enumerate() {
        total[c] += net.strength(u);
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&inside, &tot)| 2.0 * inside / two_w - resolution * (tot / two_w).powi(2))
        .sum())
}

/// One aggregation level: nodes are communities of the level below.
struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_network(net: &CollabNetwork) -> Self {
        let n = net.node_count();
        Level {
            adjacency: (0..n).map(|u| net.neighbors(u).to_vec()).collect(),
            self_loops: vec![0.0; n],
            strength: (0..n).map(|u| net.strength(u)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    /// Moves nodes greedily until a full sweep changes nothing. Returns the
    /// community of each node, densely renumbered, and whether anything moved.
    fn local_moves(&self, resolution: f64, two_w: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut total = self.strength.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let eps = 1e-12 * two_w.max(1.0);
        let mut moved_any = false;
        let mut links: HashMap<usize, f64> = HashMap::new();
        loop {
            let mut moved = false;
            for &u in &order {
                links.clear();
                for &(v, w) in &self.adjacency[u] {
                    *links.entry(community[v]).or_insert(0.0) += w;
                }
                let current = community[u];
                let k = self.strength[u];
                total[current] -= k;

                let gain = |c: usize, links: &HashMap<usize, f64>| {
                    links.get(&c).copied().unwrap_or(0.0) - resolution * total[c] * k / two_w
                };
                let stay = gain(current, &links);
                let mut candidates: Vec<usize> = links.keys().copied().filter(|&c| c != current).collect();
                candidates.sort_unstable();
                let mut best = current;
                let mut best_gain = stay;
                for c in candidates {
                    let g = gain(c, &links);
                    let beats_stay = g > stay + eps;
                    if beats_stay && (best == current || g > best_gain) {
                        best = c;
                        best_gain = g;
                    }
                }
                total[best] += k;
                if best != current {
                    community[u] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (renumber(&community), moved_any)
    }

    fn aggregate(&self, community: &[usize]) -> Level {
        let count = community.iter().max().map_or(0, |&m| m + 1);
        let mut self_loops = vec![0.0; count];
        let mut strength = vec![0.0; count];
        let mut merged: Vec<HashMap<usize, f64>> = vec![HashMap::new(); count];
        for u in 0..self.len() {
            let cu = community[u];
            self_loops[cu] += self.self_loops[u];
            strength[cu] += self.strength[u];
            for &(v, w) in &self.adjacency[u] {
                let cv = community[v];
                if cu == cv {
                    // Seen from both endpoints.
                    self_loops[cu] += w / 2.0;
                } else {
                    *merged[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        let adjacency = merged
            .into_iter()
            .map(|m| {
                let mut list: Vec<(usize, f64)> = m.into_iter().collect();
                list.sort_by_key(|&(v, _)| v);
                list
            })
            .collect();
        Level {
            adjacency,
            self_loops,
            strength,
        }
    }
}

/// Dense ids in order of first appearance.
fn renumber(community: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    community
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Louvain: local moves then aggregation, repeated until no node moves.
/// Node visiting order is shuffled from `seed`.
pub fn detect_communities(net: &CollabNetwork, resolution: f64, seed: u64) -> Partition {
    let n = net.node_count();
    let two_w = 2.0 * net.total_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<usize> = (0..n).collect();
    if two_w > 0.0 {
        let mut level = Level::from_network(net);
        loop {
            let (community, moved) = level.local_moves(resolution, two_w, &mut rng);
            if !moved {
                break;
            }
            for c in &mut assignment {
                *c = community[*c];
            }
            level = level.aggregate(&community);
        }
    }
    let assignment = renumber(&assignment);
    let modularity = modularity(net, &assignment, resolution).unwrap_or(0.0);
    Partition {
        assignment,
        modularity,
        resolution,
        seed,
    }
}

/// Per-community counts, shares and density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityStats {
    pub community: usize,
    pub node_count: usize,
    pub node_share_pct: f64,
    pub edge_count: usize,
    pub edge_share_pct: f64,
    pub internal_weight: f64,
    pub density: f64,
    pub top_members: Vec<String>,
}

/// Stats for every community, largest first (ties by id). Shares are against
/// whole-network totals; top members are ranked by network degree.
pub fn community_stats(net: &CollabNetwork, part: &Partition, top_n: usize) -> Vec<CommunityStats> {
    let count = part.community_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (u, &c) in part.assignment.iter().enumerate() {
        members[c].push(u);
    }
    let mut edges = vec![0usize; count];
    let mut weight = vec![0.0; count];
    for (u, v, w) in net.edges() {
        let c = part.assignment[u];
        if c == part.assignment[v] {
            edges[c] += 1;
            weight[c] += w;
        }
    }
    let n = net.node_count() as f64;
    let e = net.edge_count() as f64;
    let mut stats: Vec<CommunityStats> = members
        .into_iter()
        .enumerate()
        .map(|(c, mut nodes)| {
            let m = nodes.len();
            nodes.sort_by(|&a, &b| {
                net.degree(b)
                    .cmp(&net.degree(a))
                    .then_with(|| net.name(a).cmp(net.name(b)))
            });
            let density = if m >= 2 {
                2.0 * edges[c] as f64 / (m as f64 * (m as f64 - 1.0))
            } else {
                0.0
            };
            CommunityStats {
                community: c,
                node_count: m,
                node_share_pct: if n > 0.0 { 100.0 * m as f64 / n } else { 0.0 },
                edge_count: edges[c],
                edge_share_pct: if e > 0.0 { 100.0 * edges[c] as f64 / e } else { 0.0 },
                internal_weight: weight[c],
                density,
                top_members: nodes.iter().take(top_n).map(|&u| net.name(u).to_string()).collect(),
            }
        })
        .collect();
    stats.sort_by(|a, b| b.node_count.cmp(&a.node_count).then(a.community.cmp(&b.community)));
    stats
}
