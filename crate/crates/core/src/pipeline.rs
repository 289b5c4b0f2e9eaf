//! Stage orchestration, report bundle and run manifest.
//!
//! Every stage reads its inputs from memory or from prior artifacts and
//! writes its reports into a [`Bundle`]. The bundle records a SHA-256 of each
//! file it writes in `run_manifest.json`, next to the config echo and the
//! corpus hash; consumers of an artifact check both before trusting it.
//! Wall-clock timings go to `timings.json` so the rest of the bundle stays
//! byte-identical across runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{
    cluster_share, davies_bouldin, kmeans, representative_terms, select_k, ClusterModel, KCandidate, KMeansOptions,
    KSelectionReport,
};
use crate::community::{community_stats, detect_communities, CommunityStats, Partition};
use crate::config::{PipelineConfig, VectorSpec};
use crate::error::{Error, Result};
use crate::export;
use crate::graph::{
    betweenness, build_network, closeness, connected_components, degree, degree_stats, eigenvector, top_k,
    weighted_degree, CentralityScores, CollabNetwork, DegreeStats,
};
use crate::ingest::{
    build_edge_list, parse_corpus_bytes, yearly_series, CoRegistrationEdge, ParsedCorpus, PatentRecord, YearlySeries,
};
use crate::lifecycle::{scurve_samples, stage_report, StageReport};
use crate::textvec::{import_embeddings, l2_normalize, preprocess, tfidf_vectorize, Stopwords, VectorSource};

pub const MANIFEST: &str = "run_manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const TOOL: &str = "patentscope";

/// Name of the series covering the whole corpus.
pub const ALL_SERIES: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Ingest,
    Network,
    Communities,
    Cluster,
    Lifecycle,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Ingest => "ingest",
            StageName::Network => "network",
            StageName::Communities => "communities",
            StageName::Cluster => "cluster",
            StageName::Lifecycle => "lifecycle",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: StageName,
        #[source]
        source: Error,
    },
    #[error(transparent)]
    Other(#[from] Error),
}

impl RunError {
    pub fn stage(&self) -> Option<StageName> {
        match self {
            RunError::Stage { stage, .. } => Some(*stage),
            RunError::Other(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: StageName,
    /// `ok` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Seeds {
    pub kmeans: u64,
    pub louvain: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub corpus_hash: Option<String>,
    pub seeds: Seeds,
    pub stages: Vec<StageStatus>,
    pub failed_stage: Option<StageName>,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct StageTiming {
    stage: StageName,
    seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Output directory plus the manifest being assembled for it.
#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    manifest: RunManifest,
    prior: Option<RunManifest>,
    timings: Vec<StageTiming>,
    started: Instant,
}

impl Bundle {
    /// Creates `dir` if needed. A manifest already in `dir` is kept as the
    /// prior run; its entries carry over when the corpus hash matches, so
    /// chained stage commands can share one directory.
    pub fn open(dir: &Path, command: &str, cfg: &PipelineConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prior_path = dir.join(MANIFEST);
        let prior = if prior_path.exists() {
            match RunManifest::load(&prior_path) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("ignoring unreadable {}: {e}", prior_path.display());
                    None
                }
            }
        } else {
            None
        };
        Ok(Bundle {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: TOOL.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config: serde_json::to_value(cfg.echo())?,
                corpus_hash: None,
                seeds: Seeds {
                    kmeans: cfg.seed,
                    louvain: cfg.seed,
                },
                ..RunManifest::default()
            },
            prior,
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn corpus_hash(&self) -> Option<&str> {
        self.manifest.corpus_hash.as_deref()
    }

    /// Sets the corpus identity and, when it matches the prior run in this
    /// directory, carries over the prior outputs that are still intact.
    pub fn set_corpus_hash(&mut self, hash: Option<String>) {
        self.manifest.corpus_hash = hash;
        let Some(prior) = self.prior.take() else { return };
        if prior.corpus_hash.is_none() || prior.corpus_hash != self.manifest.corpus_hash {
            return;
        }
        for (name, digest) in prior.outputs {
            if self.manifest.outputs.contains_key(&name) {
                continue;
            }
            if file_hash(&self.dir.join(&name)).ok().as_ref() == Some(&digest) {
                self.manifest.outputs.insert(name, digest);
            }
        }
        for status in prior.stages {
            if status.status == "ok" && !self.manifest.stages.iter().any(|s| s.stage == status.stage) {
                self.manifest.stages.push(status);
            }
        }
        self.manifest.stages.sort_by_key(|s| s.stage);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.manifest.warnings.push(message);
    }

    /// Writes `name` through `write` and records its hash.
    pub fn write_with(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        write(&path)?;
        let digest = file_hash(&path)?;
        self.manifest.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |p| export::write_json(p, value))
    }

    /// Runs one stage, recording its status and timing.
    pub fn run_stage<T>(&mut self, stage: StageName, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T, RunError> {
        let start = Instant::now();
        log::info!("stage {stage}: start");
        let outcome = body(self);
        self.timings.push(StageTiming {
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
        self.manifest.stages.retain(|s| s.stage != stage);
        let status = match &outcome {
            Ok(_) => StageStatus {
                stage,
                status: "ok".into(),
                error: None,
            },
            Err(e) => StageStatus {
                stage,
                status: "failed".into(),
                error: Some(e.to_string()),
            },
        };
        self.manifest.stages.push(status);
        self.manifest.stages.sort_by_key(|s| s.stage);
        match outcome {
            Ok(v) => {
                log::info!("stage {stage}: done");
                Ok(v)
            }
            Err(source) => {
                self.manifest.failed_stage = Some(stage);
                Err(RunError::Stage { stage, source })
            }
        }
    }

    /// Writes the manifest and the timings file.
    pub fn close(mut self) -> Result<RunManifest> {
        if self.manifest.corpus_hash.is_none() {
            // Never touched a corpus: nothing to merge against.
            self.prior = None;
        }
        let total = self.started.elapsed().as_secs_f64();
        export::write_json(
            &self.dir.join(TIMINGS),
            &serde_json::json!({ "stages": self.timings, "total_seconds": total }),
        )?;
        export::write_json(&self.dir.join(MANIFEST), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Checks an artifact against the manifest in its directory. Artifacts with
/// no sibling manifest are taken as hand-written and accepted. Returns the
/// corpus hash the artifact was derived from, if known.
pub fn verify_artifact(path: &Path, expected_corpus: Option<&str>) -> Result<Option<String>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let manifest_path = path.parent().unwrap_or_else(|| Path::new("")).join(MANIFEST);
    if !manifest_path.exists() {
        return Ok(None);
    }
    let manifest = RunManifest::load(&manifest_path).map_err(|e| Error::StaleArtifact {
        path: path.to_path_buf(),
        reason: format!("sibling {MANIFEST} is unreadable: {e}"),
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stale = |reason: String| Error::StaleArtifact {
        path: path.to_path_buf(),
        reason,
    };
    let Some(recorded) = manifest.outputs.get(&name) else {
        return Err(stale(format!(
            "not recorded in {}; it belongs to another run",
            manifest_path.display()
        )));
    };
    if file_hash(path)? != *recorded {
        return Err(stale(format!(
            "contents changed since {} was written",
            manifest_path.display()
        )));
    }
    if let (Some(expected), Some(found)) = (expected_corpus, manifest.corpus_hash.as_deref()) {
        if expected != found {
            return Err(stale(format!(
                "derived from corpus {} but the configured input hashes to {}",
                short(found),
                short(expected)
            )));
        }
    }
    Ok(manifest.corpus_hash)
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Reads and parses the configured corpus; returns it with its SHA-256.
pub fn load_corpus(cfg: &PipelineConfig) -> Result<(ParsedCorpus, String)> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no input corpus configured".into()))?;
    let bytes = std::fs::read(input).map_err(|e| Error::io(input, e))?;
    let hash = sha256_hex(&bytes);
    let corpus = parse_corpus_bytes(&bytes, cfg.format, &cfg.schema)?;
    if corpus.records.is_empty() {
        return Err(Error::EmptyScope(format!("no valid records in {}", input.display())));
    }
    Ok((corpus, hash))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct IngestSummary {
    records: usize,
    rejects: usize,
    duplicates: usize,
    contributors: usize,
    edges: usize,
    first_year: i32,
    last_year: i32,
}

/// Parsed corpus plus the artifacts derived from it.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: ParsedCorpus,
    pub edges: Vec<CoRegistrationEdge>,
    pub yearly: YearlySeries,
}

/// Writes `edges.csv`, `yearly.csv`, `rejects.jsonl` and `ingest.json`.
pub fn ingest_stage(cfg: &PipelineConfig, bundle: &mut Bundle) -> Result<Ingested> {
    let (corpus, hash) = load_corpus(cfg)?;
    bundle.set_corpus_hash(Some(hash));
    if !corpus.rejects.is_empty() {
        bundle.warn(format!(
            "{} input rows rejected, see rejects.jsonl",
            corpus.rejects.len()
        ));
    }
    let edges = build_edge_list(&corpus.records);
    let yearly = yearly_series(&corpus.records, None)?;
    let contributors: HashSet<&str> = corpus
        .records
        .iter()
        .flat_map(|r| r.contributors.iter().map(String::as_str))
        .collect();
    let summary = IngestSummary {
        records: corpus.records.len(),
        rejects: corpus.rejects.len(),
        duplicates: corpus.duplicates,
        contributors: contributors.len(),
        edges: edges.len(),
        first_year: yearly.start_year,
        last_year: yearly.end_year(),
    };
    bundle.write_with("edges.csv", |p| export::write_edges_csv(p, &edges))?;
    bundle.write_with("yearly.csv", |p| export::write_yearly_csv(p, &yearly))?;
    bundle.write_with("rejects.jsonl", |p| export::write_rejects(p, &corpus.rejects))?;
    bundle.write_json("ingest.json", &summary)?;
    Ok(Ingested { corpus, edges, yearly })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MeasureInfo {
    measure: String,
    normalization: String,
    converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct NodeCentrality {
    name: String,
    degree: f64,
    weighted_degree: f64,
    closeness: f64,
    betweenness: f64,
    betweenness_raw: f64,
    eigenvector: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CentralityReport {
    weighted_distance: bool,
    measures: Vec<MeasureInfo>,
    nodes: Vec<NodeCentrality>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ComponentSummary {
    count: usize,
    sizes: Vec<usize>,
    largest_share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RankedNode {
    name: String,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TopList {
    measure: String,
    nodes: Vec<RankedNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct NetworkReport {
    stats: DegreeStats,
    components: ComponentSummary,
    top: Vec<TopList>,
}

fn measure_info(name: &str, scores: &CentralityScores) -> MeasureInfo {
    MeasureInfo {
        measure: name.into(),
        normalization: scores.normalization.clone(),
        converged: scores.converged,
    }
}

/// Writes `graph.gexf`, `centrality.json`, `centrality.csv` and
/// `network.json`.
pub fn network_stage(cfg: &PipelineConfig, edges: &[CoRegistrationEdge], bundle: &mut Bundle) -> Result<CollabNetwork> {
    let net = build_network(edges)?;
    if net.node_count() == 0 {
        bundle.warn("co-registration network is empty: no patent lists two contributors");
    }
    let deg = degree(&net);
    let wdeg = weighted_degree(&net);
    let close = closeness(&net, cfg.weighted_distance);
    let between = betweenness(&net, true, cfg.weighted_distance);
    let between_raw = betweenness(&net, false, cfg.weighted_distance);
    let eigen = eigenvector(&net, cfg.eigen);
    if !eigen.converged {
        bundle.warn(format!(
            "eigenvector centrality did not converge within {} iterations",
            cfg.eigen.max_iter
        ));
    }

    let ranked: [(&str, &CentralityScores); 6] = [
        ("degree", &deg),
        ("weighted_degree", &wdeg),
        ("closeness", &close),
        ("betweenness", &between),
        ("betweenness_raw", &between_raw),
        ("eigenvector", &eigen),
    ];
    let report = CentralityReport {
        weighted_distance: cfg.weighted_distance,
        measures: ranked.iter().map(|(n, s)| measure_info(n, s)).collect(),
        nodes: (0..net.node_count())
            .map(|v| NodeCentrality {
                name: net.name(v).to_string(),
                degree: deg.values[v],
                weighted_degree: wdeg.values[v],
                closeness: close.values[v],
                betweenness: between.values[v],
                betweenness_raw: between_raw.values[v],
                eigenvector: eigen.values[v],
            })
            .collect(),
    };

    let components = connected_components(&net);
    let largest = components.sizes.first().copied().unwrap_or(0);
    let network = NetworkReport {
        stats: degree_stats(&net),
        components: ComponentSummary {
            count: components.count(),
            sizes: components.sizes.clone(),
            largest_share_pct: if net.node_count() == 0 {
                0.0
            } else {
                100.0 * largest as f64 / net.node_count() as f64
            },
        },
        top: ranked
            .iter()
            .filter(|(n, _)| *n != "betweenness_raw")
            .map(|(n, s)| TopList {
                measure: n.to_string(),
                nodes: top_k(&net, s, cfg.top_k)
                    .into_iter()
                    .map(|(name, value)| RankedNode { name, value })
                    .collect(),
            })
            .collect(),
    };

    bundle.write_with("graph.gexf", |p| export::write_gexf(p, &net))?;
    bundle.write_json("centrality.json", &report)?;
    bundle.write_with("centrality.csv", |p| {
        export::write_csv(
            p,
            &[
                "name",
                "degree",
                "weighted_degree",
                "closeness",
                "betweenness",
                "betweenness_raw",
                "eigenvector",
            ],
            report.nodes.iter().map(|n| {
                [
                    n.name.clone(),
                    n.degree.to_string(),
                    n.weighted_degree.to_string(),
                    n.closeness.to_string(),
                    n.betweenness.to_string(),
                    n.betweenness_raw.to_string(),
                    n.eigenvector.to_string(),
                ]
            }),
        )
    })?;
    bundle.write_json("network.json", &network)?;
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CommunityReport {
    resolution: f64,
    seed: u64,
    modularity: f64,
    community_count: usize,
    min_community_size: usize,
    communities: Vec<CommunityStats>,
}

/// Writes `partition.csv` and `communities.json`.
pub fn communities_stage(cfg: &PipelineConfig, net: &CollabNetwork, bundle: &mut Bundle) -> Result<Partition> {
    let part = detect_communities(net, cfg.resolution, cfg.seed);
    let stats = community_stats(net, &part, cfg.top_members);
    let report = CommunityReport {
        resolution: part.resolution,
        seed: part.seed,
        modularity: part.modularity,
        community_count: part.community_count(),
        min_community_size: cfg.min_community_size,
        communities: stats
            .into_iter()
            .filter(|s| s.node_count >= cfg.min_community_size)
            .collect(),
    };
    bundle.write_with("partition.csv", |p| {
        export::write_csv(
            p,
            &["Name", "CommunityId"],
            net.names()
                .iter()
                .zip(&part.assignment)
                .map(|(n, c)| [n.clone(), c.to_string()]),
        )
    })?;
    bundle.write_json("communities.json", &report)?;
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct KSelectionFile {
    scanned: bool,
    chosen_k: usize,
    candidates: Vec<KCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct WeightedTerm {
    term: String,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ClusterSummary {
    cluster: usize,
    size: usize,
    share_pct: f64,
    terms: Vec<WeightedTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ClusterModelSummary {
    k: usize,
    vector_source: VectorSource,
    dimension: usize,
    vocabulary_size: usize,
    inertia: f64,
    iterations: usize,
    restart_seed: u64,
    davies_bouldin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Clustered {
    pub ids: Vec<String>,
    pub model: ClusterModel,
    pub selection: KSelectionReport,
    /// `all` first, then one series per non-empty cluster.
    pub series: Vec<(String, YearlySeries)>,
}

fn load_stopwords(cfg: &PipelineConfig) -> Result<Stopwords> {
    match &cfg.stopwords {
        Some(path) => Stopwords::load(path),
        None => Ok(Stopwords::english()),
    }
}

/// Writes `clusters.csv`, `kselection.json`, `cluster.json`, `terms.json`
/// and `series.csv`.
pub fn cluster_stage(cfg: &PipelineConfig, records: &[PatentRecord], bundle: &mut Bundle) -> Result<Clustered> {
    let stopwords = load_stopwords(cfg)?;
    let docs: Vec<_> = records.iter().map(|r| preprocess(r, &stopwords)).collect();
    let (vocab, tfidf) = tfidf_vectorize(&docs, cfg.tfidf)?;
    let (source, points): (VectorSource, Vec<Vec<f64>>) = match &cfg.vectors {
        VectorSpec::Tfidf => (VectorSource::Tfidf, tfidf.into_iter().map(|v| v.values).collect()),
        VectorSpec::Imported(path) => {
            let imported = import_embeddings(path, records)?;
            if imported.ignored > 0 {
                bundle.warn(format!(
                    "{} embedding rows in {} match no corpus id",
                    imported.ignored,
                    path.display()
                ));
            }
            let mut points: Vec<Vec<f64>> = imported.vectors.into_iter().map(|v| v.values).collect();
            if cfg.normalize {
                points.iter_mut().for_each(|p| l2_normalize(p));
            }
            (VectorSource::Imported, points)
        }
    };

    let base = KMeansOptions {
        restarts: cfg.restarts,
        max_iter: cfg.kmeans_max_iter,
        tol: cfg.kmeans_tol,
        ..KMeansOptions::new(cfg.k.unwrap_or(cfg.k_min), cfg.seed)
    };
    let (selection, model, scanned) = match cfg.k {
        Some(k) => {
            let model = kmeans(&points, KMeansOptions { k, ..base })?;
            let db = match davies_bouldin(&points, &model) {
                Ok(db) => Some(db),
                Err(Error::DegenerateClustering(..)) => None,
                Err(e) => return Err(e),
            };
            let report = KSelectionReport {
                candidates: vec![KCandidate {
                    k,
                    db,
                    inertia: model.inertia,
                }],
                chosen_k: k,
            };
            (report, model, false)
        }
        None => {
            let (report, model) = select_k(&points, cfg.k_min, cfg.k_max, base)?;
            (report, model, true)
        }
    };
    let skipped: Vec<usize> = selection
        .candidates
        .iter()
        .filter(|c| c.db.is_none())
        .map(|c| c.k)
        .collect();
    if !skipped.is_empty() {
        bundle.warn(format!("degenerate clusterings skipped for k in {skipped:?}"));
    }

    let terms = representative_terms(&model, &docs, &vocab, cfg.top_terms)?;
    let sizes = model.sizes();
    let shares = cluster_share(&model);
    let summaries: Vec<ClusterSummary> = terms
        .into_iter()
        .map(|t| ClusterSummary {
            cluster: t.cluster,
            size: sizes[t.cluster],
            share_pct: shares[t.cluster],
            terms: t
                .terms
                .into_iter()
                .map(|(term, weight)| WeightedTerm { term, weight })
                .collect(),
        })
        .collect();
    let chosen_db = selection.candidates.iter().find(|c| c.k == model.k).and_then(|c| c.db);
    let summary = ClusterModelSummary {
        k: model.k,
        vector_source: source,
        dimension: points.first().map_or(0, Vec::len),
        vocabulary_size: vocab.len(),
        inertia: model.inertia,
        iterations: model.iterations,
        restart_seed: model.seed,
        davies_bouldin: chosen_db,
    };

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let series = cluster_series(records, &model.assignment)?;

    bundle.write_with("clusters.csv", |p| {
        export::write_clusters_csv(p, &ids, &model.assignment)
    })?;
    bundle.write_json(
        "kselection.json",
        &KSelectionFile {
            scanned,
            chosen_k: selection.chosen_k,
            candidates: selection.candidates.clone(),
        },
    )?;
    bundle.write_json("cluster.json", &summary)?;
    bundle.write_json("terms.json", &summaries)?;
    bundle.write_with("series.csv", |p| export::write_series_csv(p, &series))?;
    Ok(Clustered {
        ids,
        model,
        selection,
        series,
    })
}

/// The corpus-wide series followed by one series per non-empty cluster.
pub fn cluster_series(records: &[PatentRecord], assignment: &[usize]) -> Result<Vec<(String, YearlySeries)>> {
    if records.len() != assignment.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cluster assignments for {} records",
            assignment.len(),
            records.len()
        )));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut years: Vec<Vec<i32>> = vec![Vec::new(); k];
    for (r, &c) in records.iter().zip(assignment) {
        years[c].push(r.year);
    }
    let mut out = vec![(ALL_SERIES.to_string(), yearly_series(records, None)?)];
    for (c, ys) in years.into_iter().enumerate() {
        if !ys.is_empty() {
            out.push((c.to_string(), YearlySeries::from_years(ys)?));
        }
    }
    Ok(out)
}

/// Maps `id,cluster` rows onto the corpus. The id sets must agree exactly.
pub fn assignment_from_rows(records: &[PatentRecord], rows: &[(String, usize)], source: &Path) -> Result<Vec<usize>> {
    let by_id: HashMap<&str, usize> = rows.iter().map(|(id, c)| (id.as_str(), *c)).collect();
    let stale = |reason: String| Error::StaleArtifact {
        path: source.to_path_buf(),
        reason,
    };
    let missing: Vec<&str> = records
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(stale(format!(
            "{} corpus ids have no cluster (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    if rows.len() != records.len() {
        let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
        let extra = rows.iter().find(|(id, _)| !known.contains(id.as_str()));
        return Err(stale(format!(
            "{} rows for {} corpus records (first unknown id: {})",
            rows.len(),
            records.len(),
            extra.map_or("?", |(id, _)| id.as_str())
        )));
    }
    Ok(records.iter().map(|r| by_id[r.id.as_str()]).collect())
}

/// Writes `stages.json` and `scurves.csv`. Series that cannot be fitted are
/// reported as warnings and left out.
pub fn lifecycle_stage(
    cfg: &PipelineConfig,
    series: &[(String, YearlySeries)],
    bundle: &mut Bundle,
) -> Result<Vec<StageReport>> {
    if series.is_empty() {
        return Err(Error::EmptyScope("no series to fit".into()));
    }
    let prepared: Vec<(String, Result<YearlySeries>)> = series
        .iter()
        .map(|(name, s)| {
            let s = if cfg.exclude_final_year {
                s.without_final_year()
            } else {
                Ok(s.clone())
            };
            (name.clone(), s)
        })
        .collect();
    let fitted: Vec<(String, Result<(StageReport, YearlySeries)>)> = prepared
        .into_par_iter()
        .map(|(name, s)| {
            let outcome = s.and_then(|s| stage_report(name.clone(), &s, &cfg.solver, &cfg.thresholds).map(|r| (r, s)));
            (name, outcome)
        })
        .collect();

    let mut reports = Vec::new();
    let mut rows: Vec<[String; 4]> = Vec::new();
    for (name, outcome) in fitted {
        match outcome {
            Ok((report, s)) => {
                let horizon = report
                    .transition_years
                    .saturation_start
                    .clamp(s.end_year(), s.end_year() + 30);
                let observed: BTreeMap<i32, u64> = s.years().zip(s.cumulative.iter().copied()).collect();
                for (t, y) in scurve_samples(&report.fit, f64::from(s.start_year), f64::from(horizon), 1.0)? {
                    let obs = observed.get(&(t as i32)).map_or(String::new(), u64::to_string);
                    rows.push([name.clone(), t.to_string(), obs, y.to_string()]);
                }
                if !report.fit.converged {
                    bundle.warn(format!("series {name}: logistic fit hit the iteration limit"));
                }
                reports.push(report);
            }
            Err(e) => bundle.warn(format!("series {name}: no logistic fit ({e})")),
        }
    }
    bundle.write_json("stages.json", &reports)?;
    bundle.write_with("scurves.csv", |p| {
        export::write_csv(p, &["cluster", "t", "observed", "fitted"], rows)
    })?;
    Ok(reports)
}

/// Headline numbers of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: usize,
    pub nodes: usize,
    pub edges: usize,
    pub communities: usize,
    pub modularity: f64,
    pub chosen_k: usize,
    pub stages: Vec<StageReport>,
    pub manifest: RunManifest,
}

/// Runs every stage into `cfg.out`. On failure the outputs written so far
/// stay on disk and the manifest names the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, RunError> {
    let mut bundle = Bundle::open(&cfg.out, "pipeline", cfg)?;
    let outcome = run_stages(cfg, &mut bundle);
    let manifest = bundle.close()?;
    outcome.map(|mut s| {
        s.manifest = manifest;
        s
    })
}

fn run_stages(cfg: &PipelineConfig, bundle: &mut Bundle) -> Result<RunSummary, RunError> {
    let ingested = bundle.run_stage(StageName::Ingest, |b| ingest_stage(cfg, b))?;
    let net = bundle.run_stage(StageName::Network, |b| network_stage(cfg, &ingested.edges, b))?;
    let part = bundle.run_stage(StageName::Communities, |b| communities_stage(cfg, &net, b))?;
    let clustered = bundle.run_stage(StageName::Cluster, |b| cluster_stage(cfg, &ingested.corpus.records, b))?;
    let stages = bundle.run_stage(StageName::Lifecycle, |b| lifecycle_stage(cfg, &clustered.series, b))?;
    Ok(RunSummary {
        records: ingested.corpus.records.len(),
        nodes: net.node_count(),
        edges: net.edge_count(),
        communities: part.community_count(),
        modularity: part.modularity,
        chosen_k: clustered.model.k,
        stages,
        manifest: RunManifest::default(),
    })
}
