use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patentscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}

#[test]
fn stage_commands_compose_to_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("pipeline.conf");
    let whole = tmp.path().join("whole");
    ok(&["pipeline", "--config", s(&conf), "--out", s(&whole)]);

    let ingest = tmp.path().join("ingest");
    let net = tmp.path().join("net");
    let comm = tmp.path().join("comm");
    let clus = tmp.path().join("clus");
    let life = tmp.path().join("life");
    ok(&["ingest", "--config", s(&conf), "--out", s(&ingest)]);
    let edges = ingest.join("edges.csv");
    ok(&["network", "--edges", s(&edges), "--config", s(&conf), "--out", s(&net)]);
    ok(&[
        "communities",
        "--edges",
        s(&edges),
        "--config",
        s(&conf),
        "--out",
        s(&comm),
    ]);
    ok(&["cluster", "--config", s(&conf), "--out", s(&clus)]);
    ok(&[
        "lifecycle",
        "--clusters",
        s(&clus.join("clusters.csv")),
        "--config",
        s(&conf),
        "--out",
        s(&life),
    ]);

    for (dir, files) in [
        (
            &ingest,
            &["edges.csv", "yearly.csv", "rejects.jsonl", "ingest.json"][..],
        ),
        (
            &net,
            &["centrality.json", "centrality.csv", "network.json", "graph.gexf"][..],
        ),
        (&comm, &["communities.json", "partition.csv"][..]),
        (
            &clus,
            &[
                "clusters.csv",
                "kselection.json",
                "terms.json",
                "series.csv",
                "cluster.json",
            ][..],
        ),
        (&life, &["stages.json", "scurves.csv"][..]),
    ] {
        for f in files {
            assert_eq!(
                read(&dir.join(f)),
                read(&whole.join(f)),
                "{f} differs between staged and full runs"
            );
        }
    }

    // Staged manifests inherit the corpus identity of their inputs.
    let hash = json(&whole.join("run_manifest.json"))["corpus_hash"].clone();
    assert!(hash.is_string());
    for dir in [&ingest, &net, &comm, &clus, &life] {
        assert_eq!(json(&dir.join("run_manifest.json"))["corpus_hash"], hash);
    }
}

#[test]
fn chained_commands_can_share_one_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("pipeline.conf");
    let out = tmp.path().join("shared");
    ok(&["ingest", "--config", s(&conf), "--out", s(&out)]);
    ok(&[
        "network",
        "--edges",
        s(&out.join("edges.csv")),
        "--config",
        s(&conf),
        "--out",
        s(&out),
    ]);
    ok(&["cluster", "--config", s(&conf), "--out", s(&out)]);
    ok(&[
        "lifecycle",
        "--series",
        s(&out.join("series.csv")),
        "--config",
        s(&conf),
        "--out",
        s(&out),
    ]);
    let manifest = json(&out.join("run_manifest.json"));
    let outputs = manifest["outputs"].as_object().unwrap();
    for f in ["edges.csv", "centrality.json", "clusters.csv", "stages.json"] {
        assert!(outputs.contains_key(f), "manifest lost {f}");
    }
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no_such_corpus.csv");
    let out = run(&["pipeline", "--input", s(&missing), "--out", s(&tmp.path().join("out"))]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_corpus.csv"), "{stderr}");
    assert!(stderr.contains("ingest"), "{stderr}");
    let manifest = json(&tmp.path().join("out/run_manifest.json"));
    assert_eq!(manifest["failed_stage"], "ingest");
}

#[test]
fn fixed_k_flag_skips_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k6");
    ok(&[
        "cluster",
        "--config",
        s(&fixture("pipeline.conf")),
        "--k",
        "6",
        "--out",
        s(&out),
    ]);
    let ksel = json(&out.join("kselection.json"));
    assert_eq!(ksel["chosen_k"], 6);
    assert_eq!(ksel["scanned"], false);
    assert_eq!(json(&out.join("cluster.json"))["k"], 6);
}

#[test]
fn lifecycle_runs_on_a_hand_written_series() {
    let tmp = tempfile::tempdir().unwrap();
    let series = tmp.path().join("series.csv");
    let mut text = String::from("year,count\n");
    let mut prev = 0.0;
    for t in 2008..=2024 {
        let y = 657.0 / (1.0 + (-(f64::from(t) - 2018.0) / 1.5).exp());
        let total = y.round();
        text.push_str(&format!("{t},{}\n", (total - prev) as u64));
        prev = total;
    }
    std::fs::write(&series, text).unwrap();
    let out = tmp.path().join("out");
    let stdout = ok(&["lifecycle", "--series", s(&series), "--out", s(&out)]);
    assert!(stdout.contains("all"), "{stdout}");
    let stages = json(&out.join("stages.json"));
    let report = &stages[0];
    assert_eq!(report["cluster"], "all");
    assert_eq!(report["stage"], "saturation");
    assert!((report["fit"]["a"].as_f64().unwrap() - 2018.0).abs() < 0.1);
    assert!(!out.join("clusters.csv").exists());
}

#[test]
fn edited_artifact_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("pipeline.conf");
    let ingest = tmp.path().join("ingest");
    ok(&["ingest", "--config", s(&conf), "--out", s(&ingest)]);
    let edges = ingest.join("edges.csv");
    let mut text = std::fs::read_to_string(&edges).unwrap();
    text.push_str("Zed Extra,Zed Other,1\n");
    std::fs::write(&edges, text).unwrap();
    let out = run(&["network", "--edges", s(&edges), "--out", s(&tmp.path().join("net"))]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("stale artifact") && stderr.contains("edges.csv"),
        "{stderr}"
    );
}

#[test]
fn clusters_from_another_corpus_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("pipeline.conf");
    let clus = tmp.path().join("clus");
    ok(&["cluster", "--config", s(&conf), "--out", s(&clus)]);

    // Same ids, one title changed: a different corpus.
    let original = std::fs::read_to_string(fixture("patents_200.csv")).unwrap();
    let changed = original.replacen("SYN-0001,", "SYN-0001,Revised ", 1);
    assert_ne!(original, changed);
    let other = tmp.path().join("other.csv");
    std::fs::write(&other, changed).unwrap();
    let out = run(&[
        "lifecycle",
        "--clusters",
        s(&clus.join("clusters.csv")),
        "--config",
        s(&conf),
        "--input",
        s(&other),
        "--out",
        s(&tmp.path().join("life")),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("different") || stderr.contains("derived from corpus"),
        "{stderr}"
    );
}

#[test]
fn thread_count_does_not_change_the_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture("pipeline.conf");
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    ok(&["pipeline", "--config", s(&conf), "--threads", "1", "--out", s(&one)]);
    ok(&["pipeline", "--config", s(&conf), "--threads", "4", "--out", s(&four)]);
    for f in [
        "centrality.json",
        "communities.json",
        "clusters.csv",
        "stages.json",
        "run_manifest.json",
    ] {
        assert_eq!(read(&one.join(f)), read(&four.join(f)), "{f}");
    }
}

#[test]
fn fixture_command_writes_the_bundled_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fx");
    ok(&["fixture", "--out", s(&out)]);
    assert_eq!(read(&out.join("patents_200.csv")), read(&fixture("patents_200.csv")));
    assert_eq!(read(&out.join("pipeline.conf")), read(&fixture("pipeline.conf")));
}

#[test]
fn bad_config_line_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    std::fs::write(&conf, "seed = 1\nnonsense_key = 3\n").unwrap();
    let out = run(&["pipeline", "--config", s(&conf)]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2") && stderr.contains("nonsense_key"), "{stderr}");
}
