use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use patentscope::config::{PipelineConfig, VectorSpec};
use patentscope::export;
use patentscope::fixture;
use patentscope::pipeline::{self, Bundle, RunError, StageName};

#[derive(Debug, Parser)]
#[command(
    name = "patentscope",
    version,
    about = "Patent co-registration networks, topic clusters and life-cycle stages"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage: ingest, network, communities, cluster, lifecycle.
    Pipeline(Common),
    /// Parse the corpus; write edges.csv, yearly.csv and rejects.jsonl.
    Ingest(Common),
    /// Centralities and components from an edge list.
    Network {
        /// Edge list from `ingest`; defaults to deriving it from the input corpus.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Louvain communities from an edge list.
    Communities {
        #[arg(long)]
        edges: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Vectorize and cluster the corpus text.
    Cluster(Common),
    /// Fit S-curves and assign life-cycle stages.
    Lifecycle {
        /// `cluster,year,count` or `year,count` CSV.
        #[arg(long, conflicts_with = "clusters")]
        series: Option<PathBuf>,
        /// `id,cluster` CSV from `cluster`; needs the input corpus.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the bundled synthetic corpus and its config.
    Fixture {
        #[arg(long, default_value = "fixture")]
        out: PathBuf,
    },
}

/// Settings shared by the analysis commands; flags override the config file.
#[derive(Debug, Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input corpus (overrides `input`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Fixed number of clusters; skips the Davies-Bouldin scan.
    #[arg(long)]
    k: Option<usize>,
    /// `tfidf` or a path to precomputed embeddings.
    #[arg(long)]
    vectors: Option<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Drop the last (usually incomplete) year before fitting.
    #[arg(long)]
    exclude_final_year: bool,
}

impl Common {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.k_min {
            cfg.k_min = k;
        }
        if let Some(k) = self.k_max {
            cfg.k_max = k;
        }
        if let Some(k) = self.k {
            cfg.k = Some(k);
        }
        if let Some(v) = &self.vectors {
            cfg.vectors = v.parse::<VectorSpec>()?;
        }
        if let Some(p) = &self.stopwords {
            cfg.stopwords = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.out = p.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if self.exclude_final_year {
            cfg.exclude_final_year = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads(cfg: &PipelineConfig) -> anyhow::Result<()> {
    if let Some(n) = cfg.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

/// Runs one stage into its own bundle and writes the manifest even when the
/// stage fails.
fn staged<T>(
    cfg: &PipelineConfig,
    command: &str,
    body: impl FnOnce(&mut Bundle) -> Result<T, RunError>,
) -> anyhow::Result<T> {
    let mut bundle = Bundle::open(&cfg.out, command, cfg)?;
    let outcome = body(&mut bundle);
    bundle.close()?;
    Ok(outcome?)
}

/// Edges from an artifact (checked against its manifest) or, failing that,
/// from the configured corpus.
fn edges_for(
    cfg: &PipelineConfig,
    edges: Option<&Path>,
    bundle: &mut Bundle,
) -> patentscope::Result<Vec<patentscope::ingest::CoRegistrationEdge>> {
    match edges {
        Some(path) => {
            let hash = pipeline::verify_artifact(path, None)?;
            bundle.set_corpus_hash(hash);
            export::read_edges_csv(path)
        }
        None => {
            let (corpus, hash) = pipeline::load_corpus(cfg)?;
            bundle.set_corpus_hash(Some(hash));
            Ok(patentscope::ingest::build_edge_list(&corpus.records))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fixture { out } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv = fixture::default_fixture().to_csv()?;
            let data = out.join("patents_200.csv");
            std::fs::write(&data, csv).with_context(|| format!("writing {}", data.display()))?;
            let conf = out.join("pipeline.conf");
            std::fs::write(&conf, fixture::FIXTURE_CONFIG).with_context(|| format!("writing {}", conf.display()))?;
            println!("wrote {} and {}", data.display(), conf.display());
        }
        Command::Pipeline(common) => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            let summary = pipeline::run_pipeline(&cfg)?;
            println!(
                "{} records, {} contributors, {} edges, {} communities (Q = {:.4}), k = {}",
                summary.records,
                summary.nodes,
                summary.edges,
                summary.communities,
                summary.modularity,
                summary.chosen_k
            );
            for r in &summary.stages {
                println!("  {:<8} ratio {:.3}  {}", r.cluster, r.ratio, r.stage.as_str());
            }
            println!("reports in {}", cfg.out.display());
        }
        Command::Ingest(common) => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            let ingested = staged(&cfg, "ingest", |b| {
                b.run_stage(StageName::Ingest, |b| pipeline::ingest_stage(&cfg, b))
            })?;
            println!(
                "{} records, {} rejected, {} edges",
                ingested.corpus.records.len(),
                ingested.corpus.rejects.len(),
                ingested.edges.len()
            );
        }
        Command::Network { edges, common } => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            let net = staged(&cfg, "network", |b| {
                b.run_stage(StageName::Network, |b| {
                    let list = edges_for(&cfg, edges.as_deref(), b)?;
                    pipeline::network_stage(&cfg, &list, b)
                })
            })?;
            println!("{} contributors, {} edges", net.node_count(), net.edge_count());
        }
        Command::Communities { edges, common } => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            let part = staged(&cfg, "communities", |b| {
                b.run_stage(StageName::Communities, |b| {
                    let list = edges_for(&cfg, edges.as_deref(), b)?;
                    let net = patentscope::graph::build_network(&list)?;
                    pipeline::communities_stage(&cfg, &net, b)
                })
            })?;
            println!("{} communities, Q = {:.4}", part.community_count(), part.modularity);
        }
        Command::Cluster(common) => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            let clustered = staged(&cfg, "cluster", |b| {
                b.run_stage(StageName::Cluster, |b| {
                    let (corpus, hash) = pipeline::load_corpus(&cfg)?;
                    b.set_corpus_hash(Some(hash));
                    pipeline::cluster_stage(&cfg, &corpus.records, b)
                })
            })?;
            println!("k = {}, sizes {:?}", clustered.model.k, clustered.model.sizes());
        }
        Command::Lifecycle {
            series,
            clusters,
            common,
        } => {
            let cfg = common.config()?;
            init_threads(&cfg)?;
            if series.is_none() && clusters.is_none() {
                bail!("lifecycle needs --series <csv> or --clusters <csv>");
            }
            let reports = staged(&cfg, "lifecycle", |b| {
                b.run_stage(StageName::Lifecycle, |b| {
                    let list = match (&series, &clusters) {
                        (Some(path), _) => {
                            let hash = pipeline::verify_artifact(path, None)?;
                            b.set_corpus_hash(hash);
                            export::read_series_csv(path)?
                        }
                        (None, Some(path)) => {
                            let (corpus, hash) = pipeline::load_corpus(&cfg)?;
                            pipeline::verify_artifact(path, Some(&hash))?;
                            b.set_corpus_hash(Some(hash));
                            let rows = export::read_clusters_csv(path)?;
                            let assignment = pipeline::assignment_from_rows(&corpus.records, &rows, path)?;
                            pipeline::cluster_series(&corpus.records, &assignment)?
                        }
                        (None, None) => unreachable!("checked above"),
                    };
                    pipeline::lifecycle_stage(&cfg, &list, b)
                })
            })?;
            for r in &reports {
                println!("{:<8} ratio {:.3}  {}", r.cluster, r.ratio, r.stage.as_str());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
