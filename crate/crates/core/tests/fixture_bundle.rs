use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use patentscope::config::PipelineConfig;
use patentscope::export;
use patentscope::fixture::{self, SyntheticCorpus, TOPICS};
use patentscope::lifecycle::Stage;
use patentscope::pipeline::{self, Bundle, RunManifest, StageName, MANIFEST};
use serde_json::Value;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config(out: &Path) -> PipelineConfig {
    let cfg = PipelineConfig::load(&fixture_dir().join("pipeline.conf")).unwrap();
    PipelineConfig {
        out: out.to_path_buf(),
        ..cfg
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn checked_in_fixture_matches_generator() {
    let on_disk = std::fs::read_to_string(fixture_dir().join("patents_200.csv")).unwrap();
    assert_eq!(on_disk, fixture::default_fixture().to_csv().unwrap());
    let conf = std::fs::read_to_string(fixture_dir().join("pipeline.conf")).unwrap();
    assert_eq!(conf, fixture::FIXTURE_CONFIG);
}

#[test]
fn pipeline_recovers_planted_structure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture_config(tmp.path());
    let summary = pipeline::run_pipeline(&cfg).unwrap();
    let truth = fixture::default_fixture();

    // Contributor communities are exactly the planted groups.
    assert_eq!(summary.communities, 3);
    let partition = std::fs::read_to_string(tmp.path().join("partition.csv")).unwrap();
    let mut group_to_community = HashMap::new();
    for line in partition.lines().skip(1) {
        let (name, community) = line.rsplit_once(',').unwrap();
        let name = name.trim_matches('"');
        let group = SyntheticCorpus::group_of(name).unwrap();
        let seen = group_to_community.entry(group).or_insert(community.to_string()).clone();
        assert_eq!(seen, community, "{name} split from its group");
    }
    assert_eq!(group_to_community.values().collect::<HashSet<_>>().len(), 3);

    // Text clusters are exactly the planted topics.
    assert_eq!(summary.chosen_k, 3);
    let rows = export::read_clusters_csv(&tmp.path().join("clusters.csv")).unwrap();
    let mut topic_to_cluster = HashMap::new();
    for (id, cluster) in &rows {
        let topic = truth.topic_of(id).unwrap();
        assert_eq!(
            *topic_to_cluster.entry(topic).or_insert(*cluster),
            *cluster,
            "{id} misclustered"
        );
    }
    assert_eq!(topic_to_cluster.len(), 3);

    // Representative terms come from the planted vocabulary of the topic.
    let terms = json(&tmp.path().join("terms.json"));
    for (topic, cluster) in &topic_to_cluster {
        let entry = &terms[*cluster];
        let top = entry["terms"][0]["term"].as_str().unwrap();
        assert!(TOPICS[*topic].terms.contains(&top), "cluster {cluster} led by {top}");
    }

    // Fitted inflections follow the planted order; the late topic is the
    // only one not yet saturated.
    let by_name: HashMap<String, _> = summary.stages.iter().map(|r| (r.cluster.clone(), r)).collect();
    let fitted: Vec<_> = (0..3).map(|t| by_name[&topic_to_cluster[&t].to_string()]).collect();
    assert!(fitted[0].fit.inflection < fitted[1].fit.inflection);
    assert!(fitted[1].fit.inflection < fitted[2].fit.inflection);
    assert_eq!(fitted[0].stage, Stage::Saturation);
    assert!(fitted[2].stage < Stage::Saturation);
    assert!((fitted[0].fit.inflection - TOPICS[0].inflection).abs() < 1.5);
    assert!(by_name.contains_key(pipeline::ALL_SERIES));
}

fn assert_keys(v: &Value, keys: &[&str], what: &str) {
    let obj = v.as_object().unwrap_or_else(|| panic!("{what} is not an object"));
    for k in keys {
        assert!(obj.contains_key(*k), "{what} lacks `{k}`");
    }
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or("")
        .to_string()
}

#[test]
fn report_files_follow_documented_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    pipeline::run_pipeline(&fixture_config(out)).unwrap();

    assert_eq!(csv_header(&out.join("edges.csv")), "Source,Target,Weight");
    assert_eq!(csv_header(&out.join("yearly.csv")), "year,count,cumulative");
    assert_eq!(csv_header(&out.join("partition.csv")), "Name,CommunityId");
    assert_eq!(csv_header(&out.join("clusters.csv")), "id,cluster");
    assert_eq!(csv_header(&out.join("series.csv")), "cluster,year,count");
    assert_eq!(csv_header(&out.join("scurves.csv")), "cluster,t,observed,fitted");
    assert_eq!(
        csv_header(&out.join("centrality.csv")),
        "name,degree,weighted_degree,closeness,betweenness,betweenness_raw,eigenvector"
    );
    let gexf = std::fs::read_to_string(out.join("graph.gexf")).unwrap();
    assert!(gexf.starts_with("<?xml") && gexf.contains("version=\"1.2\"") && gexf.trim_end().ends_with("</gexf>"));

    let centrality = json(&out.join("centrality.json"));
    assert_keys(
        &centrality,
        &["weighted_distance", "measures", "nodes"],
        "centrality.json",
    );
    for node in centrality["nodes"].as_array().unwrap() {
        assert_keys(
            node,
            &[
                "name",
                "degree",
                "weighted_degree",
                "closeness",
                "betweenness",
                "betweenness_raw",
                "eigenvector",
            ],
            "centrality node",
        );
    }
    let network = json(&out.join("network.json"));
    assert_keys(&network, &["stats", "components", "top"], "network.json");
    assert_keys(
        &network["stats"],
        &["nodes", "edges", "average_degree", "average_weighted_degree", "density"],
        "stats",
    );

    let communities = json(&out.join("communities.json"));
    assert_keys(
        &communities,
        &["resolution", "seed", "modularity", "community_count", "communities"],
        "communities.json",
    );
    for c in communities["communities"].as_array().unwrap() {
        assert_keys(
            c,
            &[
                "community",
                "node_count",
                "node_share_pct",
                "edge_count",
                "density",
                "top_members",
            ],
            "community",
        );
    }

    let ksel = json(&out.join("kselection.json"));
    assert_keys(&ksel, &["scanned", "chosen_k", "candidates"], "kselection.json");
    assert_eq!(ksel["candidates"].as_array().unwrap().len(), 10);
    for c in ksel["candidates"].as_array().unwrap() {
        assert_keys(c, &["k", "db", "inertia"], "k candidate");
    }
    for t in json(&out.join("terms.json")).as_array().unwrap() {
        assert_keys(t, &["cluster", "size", "share_pct", "terms"], "terms entry");
    }
    assert_keys(
        &json(&out.join("cluster.json")),
        &["k", "vector_source", "dimension", "inertia"],
        "cluster.json",
    );
    for s in json(&out.join("stages.json")).as_array().unwrap() {
        assert_keys(
            s,
            &[
                "cluster",
                "n_patents",
                "t_now",
                "ratio",
                "stage",
                "transition_years",
                "crossings",
                "fit",
            ],
            "stage report",
        );
        assert_keys(&s["fit"], &["K", "a", "b", "rss", "converged"], "fit");
    }

    let manifest = json(&out.join(MANIFEST));
    assert_keys(
        &manifest,
        &[
            "tool",
            "version",
            "command",
            "config",
            "corpus_hash",
            "seeds",
            "stages",
            "failed_stage",
            "outputs",
            "warnings",
        ],
        "run_manifest.json",
    );
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 5);
    assert!(manifest["failed_stage"].is_null());
    let timings = json(&out.join(pipeline::TIMINGS));
    assert_eq!(timings["stages"].as_array().unwrap().len(), 5);

    // Every recorded hash matches the file on disk.
    let parsed: RunManifest = serde_json::from_value(manifest).unwrap();
    for (name, digest) in &parsed.outputs {
        assert_eq!(
            &pipeline::sha256_hex(&std::fs::read(out.join(name)).unwrap()),
            digest,
            "{name}"
        );
    }
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap();
            n != MANIFEST && n != pipeline::TIMINGS
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn staged_run_equals_monolithic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("whole");
    let cfg = fixture_config(&whole);
    pipeline::run_pipeline(&cfg).unwrap();

    let staged = tmp.path().join("staged");
    let cfg = PipelineConfig {
        out: staged.clone(),
        ..cfg
    };
    let mut bundle = Bundle::open(&staged, "ingest", &cfg).unwrap();
    let ingested = pipeline::ingest_stage(&cfg, &mut bundle).unwrap();
    bundle.close().unwrap();

    let edges_path = staged.join("edges.csv");
    let hash = pipeline::verify_artifact(&edges_path, None).unwrap();
    let edges = export::read_edges_csv(&edges_path).unwrap();
    let mut bundle = Bundle::open(&staged, "network", &cfg).unwrap();
    bundle.set_corpus_hash(hash.clone());
    let net = bundle
        .run_stage(StageName::Network, |b| pipeline::network_stage(&cfg, &edges, b))
        .unwrap();
    bundle
        .run_stage(StageName::Communities, |b| pipeline::communities_stage(&cfg, &net, b))
        .unwrap();
    bundle
        .run_stage(StageName::Cluster, |b| {
            pipeline::cluster_stage(&cfg, &ingested.corpus.records, b)
        })
        .unwrap();
    bundle.close().unwrap();

    let series_path = staged.join("series.csv");
    pipeline::verify_artifact(&series_path, hash.as_deref()).unwrap();
    let series = export::read_series_csv(&series_path).unwrap();
    let mut bundle = Bundle::open(&staged, "lifecycle", &cfg).unwrap();
    bundle.set_corpus_hash(hash);
    pipeline::lifecycle_stage(&cfg, &series, &mut bundle).unwrap();
    let manifest = bundle.close().unwrap();
    // Outputs of earlier stages carried over into the shared manifest.
    assert!(manifest.outputs.contains_key("edges.csv") && manifest.outputs.contains_key("stages.json"));

    assert_eq!(read_all(&whole), read_all(&staged));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundles = Vec::new();
    for threads in [1, 4] {
        let out = tmp.path().join(format!("t{threads}"));
        let cfg = fixture_config(&out);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pipeline::run_pipeline(&cfg)).unwrap();
        let mut files = read_all(&out);
        files.insert(MANIFEST.into(), std::fs::read(out.join(MANIFEST)).unwrap());
        bundles.push(files);
    }
    assert_eq!(bundles[0], bundles[1]);
}

#[test]
fn fixed_k_skips_the_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        k: Some(6),
        ..fixture_config(tmp.path())
    };
    let summary = pipeline::run_pipeline(&cfg).unwrap();
    assert_eq!(summary.chosen_k, 6);
    let ksel = json(&tmp.path().join("kselection.json"));
    assert_eq!(ksel["scanned"], Value::Bool(false));
    assert_eq!(ksel["candidates"].as_array().unwrap().len(), 1);
}
