//! k-means with k-means++ seeding, Davies-Bouldin scoring and selection of k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::textvec::{TokenizedDoc, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    /// Independent runs; run `r` is seeded with `seed + r`.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansOptions {
            k,
            seed,
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id per input point.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Seed of the winning restart.
    pub seed: u64,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidArgument("no points to cluster".into()));
    };
    let dim = first.as_ref().len();
    if let Some(i) = points.iter().position(|p| p.as_ref().len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "point {i} has dimension {}, expected {dim}",
            points[i].as_ref().len()
        )));
    }
    Ok(dim)
}

/// Best-of-restarts Lloyd k-means. Ties in inertia keep the earlier restart.
pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], opts: KMeansOptions) -> Result<ClusterModel> {
    check_points(points)?;
    if opts.k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {}", opts.k)));
    }
    if opts.k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {} points",
            opts.k,
            points.len()
        )));
    }
    let runs: Vec<ClusterModel> = (0..opts.restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| lloyd(points, opts, opts.seed.wrapping_add(r)))
        .collect();
    let mut best: Option<ClusterModel> = None;
    for run in runs {
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<P: AsRef<[f64]>>(points: &[P], opts: KMeansOptions, seed: u64) -> ClusterModel {
    let k = opts.k;
    let dim = points[0].as_ref().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..opts.max_iter.max(1) {
        iterations += 1;
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p.as_ref(), &centroids).0;
        }
        repair_empty(points, &centroids, &mut assignment, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(distance(&mean, &centroids[j]));
            centroids[j] = mean;
        }
        history.push(inertia(points, &centroids, &assignment));
        if shift < opts.tol {
            break;
        }
    }

    ClusterModel {
        k,
        inertia: *history.last().expect("one iteration"),
        centroids,
        assignment,
        iterations,
        seed,
        inertia_history: history,
    }
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from clusters that can spare one.
fn repair_empty<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let d = squared_distance(p.as_ref(), &centroids[a]);
            if donor.map_or(true, |(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        if let Some((i, _)) = donor {
            counts[assignment[i]] -= 1;
            assignment[i] = j;
            counts[j] = 1;
        }
    }
}

fn inertia<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_distance(p.as_ref(), &centroids[a]))
        .sum()
}

/// `DB = (1/k) Σ_i max_{j≠i} (s_i + s_j) / d_ij`, with `s_i` the mean member
/// distance to centroid `i` and `d_ij` the centroid distance.
pub fn davies_bouldin<P: AsRef<[f64]>>(points: &[P], model: &ClusterModel) -> Result<f64> {
    let k = model.k;
    if k < 2 {
        return Err(Error::InvalidArgument("Davies-Bouldin needs k >= 2".into()));
    }
    if points.len() != model.assignment.len() {
        return Err(Error::InvalidArgument(format!(
            "model covers {} points, got {}",
            model.assignment.len(),
            points.len()
        )));
    }
    let mut scatter = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(&model.assignment) {
        scatter[a] += distance(p.as_ref(), &model.centroids[a]);
        counts[a] += 1;
    }
    for (s, &c) in scatter.iter_mut().zip(&counts) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = distance(&model.centroids[i], &model.centroids[j]);
            if d == 0.0 {
                return Err(Error::DegenerateClustering(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KCandidate {
    pub k: usize,
    /// `None` when the clustering was degenerate and the k was skipped.
    pub db: Option<f64>,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelectionReport {
    pub candidates: Vec<KCandidate>,
    pub chosen_k: usize,
}

/// The candidate with the lowest DB score; ties go to the smaller k.
pub fn choose_k(candidates: &[KCandidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        let Some(db) = c.db else { continue };
        let better = match best {
            None => true,
            Some((k, score)) => db < score || (db == score && c.k < k),
        };
        if better {
            best = Some((c.k, db));
        }
    }
    best.map(|(k, _)| k)
}

/// Fits every k in `k_min..=k_max` and keeps the model with minimal DB.
pub fn select_k<P: AsRef<[f64]> + Sync>(
    points: &[P],
    k_min: usize,
    k_max: usize,
    base: KMeansOptions,
) -> Result<(KSelectionReport, ClusterModel)> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidArgument(format!("invalid k range {k_min}..={k_max}")));
    }
    if points.len() <= k_max {
        return Err(Error::InvalidArgument(format!(
            "k scan up to {k_max} needs more than {k_max} points, got {}",
            points.len()
        )));
    }
    let fits: Vec<Result<(ClusterModel, Option<f64>)>> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let model = kmeans(points, KMeansOptions { k, ..base })?;
            match davies_bouldin(points, &model) {
                Ok(db) => Ok((model, Some(db))),
                Err(Error::DegenerateClustering(i, j)) => {
                    log::warn!("k = {k}: centroids {i} and {j} coincide, skipping");
                    Ok((model, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut candidates = Vec::new();
    let mut models = Vec::new();
    for fit in fits {
        let (model, db) = fit?;
        candidates.push(KCandidate {
            k: model.k,
            db,
            inertia: model.inertia,
        });
        models.push(model);
    }
    let chosen_k =
        choose_k(&candidates).ok_or_else(|| Error::InvalidArgument("every k in the scan was degenerate".into()))?;
    let model = models
        .into_iter()
        .find(|m| m.k == chosen_k)
        .expect("chosen k was fitted");
    Ok((KSelectionReport { candidates, chosen_k }, model))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterTerms {
    pub cluster: usize,
    /// `(term, mean TF-IDF weight)`, best first.
    pub terms: Vec<(String, f64)>,
}

/// Terms ranked by mean TF-IDF weight over each cluster's documents
/// (ties by term); zero-weight terms are never listed.
pub fn representative_terms(
    model: &ClusterModel,
    docs: &[TokenizedDoc],
    vocab: &Vocabulary,
    top_n: usize,
) -> Result<Vec<ClusterTerms>> {
    if docs.len() != model.assignment.len() {
        return Err(Error::InvalidArgument(format!(
            "model covers {} documents, got {}",
            model.assignment.len(),
            docs.len()
        )));
    }
    let mut sums = vec![vec![0.0; vocab.len()]; model.k];
    for (doc, &c) in docs.iter().zip(&model.assignment) {
        for (s, w) in sums[c].iter_mut().zip(vocab.weights(doc)) {
            *s += w;
        }
    }
    let sizes = model.sizes();
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(cluster, sum)| {
            let n = sizes[cluster].max(1) as f64;
            let mut ranked: Vec<(usize, f64)> = sum
                .into_iter()
                .map(|s| s / n)
                .enumerate()
                .filter(|&(_, w)| w > 0.0)
                .collect();
            ranked.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| vocab.terms[a.0].cmp(&vocab.terms[b.0]))
            });
            ClusterTerms {
                cluster,
                terms: ranked
                    .into_iter()
                    .take(top_n)
                    .map(|(t, w)| (vocab.terms[t].clone(), w))
                    .collect(),
            }
        })
        .collect())
}

/// Percentage of documents per cluster, rounded to one decimal.
pub fn cluster_share(model: &ClusterModel) -> Vec<f64> {
    let total = model.assignment.len() as f64;
    model
        .sizes()
        .into_iter()
        .map(|s| (1000.0 * s as f64 / total).round() / 10.0)
        .collect()
}
