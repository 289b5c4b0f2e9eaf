//! Report and artifact file formats.
//!
//! Writers produce byte-stable output: fixed column order, fixed key order,
//! shortest round-trip float formatting. The readers parse the artifacts the
//! stage-scoped commands exchange (edge lists, cluster assignments, series).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::CollabNetwork;
use crate::ingest::{CoRegistrationEdge, Reject, YearlySeries};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

/// CSV with the given header; rows are written verbatim through the csv
/// quoting rules.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    finish(path, inner)
}

pub const EDGE_HEADER: [&str; 3] = ["Source", "Target", "Weight"];

pub fn write_edges_csv(path: &Path, edges: &[CoRegistrationEdge]) -> Result<()> {
    write_csv(
        path,
        &EDGE_HEADER,
        edges
            .iter()
            .map(|e| [e.source.clone(), e.target.clone(), e.weight.to_string()]),
    )
}

/// Edge rows of a network, `Source < Target` by name.
pub fn network_edges(net: &CollabNetwork) -> Vec<CoRegistrationEdge> {
    let mut edges: Vec<CoRegistrationEdge> = net
        .edges()
        .map(|(u, v, w)| CoRegistrationEdge {
            source: net.name(u).to_string(),
            target: net.name(v).to_string(),
            weight: w.round() as u64,
        })
        .collect();
    edges.sort();
    edges
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().map(|h| h.trim().trim_start_matches('\u{feff}')).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

/// Parses a `Source,Target,Weight` edge list. Endpoints are put in
/// canonical order; weights must be positive integers.
pub fn parse_edges_csv(bytes: &[u8]) -> Result<Vec<CoRegistrationEdge>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    check_header(reader.headers()?, &EDGE_HEADER)?;
    let mut edges = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = line_of(&record, i + 2);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() < 3 {
            return Err(bad(format!("expected 3 fields, found {}", record.len())));
        }
        let (a, b) = (record[0].to_string(), record[1].to_string());
        if a.is_empty() || b.is_empty() {
            return Err(bad("empty node name".into()));
        }
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        let weight: u64 = record[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("weight `{}` is not a positive integer", &record[2])))?;
        if weight == 0 {
            return Err(bad("weight must be at least 1".into()));
        }
        let (source, target) = if a < b { (a, b) } else { (b, a) };
        edges.push(CoRegistrationEdge { source, target, weight });
    }
    edges.sort();
    Ok(edges)
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<CoRegistrationEdge>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_edges_csv(&bytes)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {}
            c => out.push(c),
        }
    }
    out
}

/// GEXF 1.2 document: one node per contributor (`label` = name) and one
/// undirected weighted edge per pair.
pub fn gexf_string(net: &CollabNetwork) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<gexf xmlns=\"http://www.gexf.net/1.2draft\" version=\"1.2\">\n");
    s.push_str("  <meta>\n    <creator>patentscope</creator>\n    <description>patent co-registration network</description>\n  </meta>\n");
    s.push_str("  <graph mode=\"static\" defaultedgetype=\"undirected\">\n");
    s.push_str("    <nodes>\n");
    for (i, name) in net.names().iter().enumerate() {
        s.push_str(&format!("      <node id=\"{i}\" label=\"{}\" />\n", xml_escape(name)));
    }
    s.push_str("    </nodes>\n    <edges>\n");
    for (id, (u, v, w)) in net.edges().enumerate() {
        s.push_str(&format!(
            "      <edge id=\"{id}\" source=\"{u}\" target=\"{v}\" weight=\"{w}\" />\n"
        ));
    }
    s.push_str("    </edges>\n  </graph>\n</gexf>\n");
    s
}

pub fn write_gexf(path: &Path, net: &CollabNetwork) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(gexf_string(net).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let mut w = create(path)?;
    for r in rejects {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn write_yearly_csv(path: &Path, series: &YearlySeries) -> Result<()> {
    write_csv(
        path,
        &["year", "count", "cumulative"],
        series
            .years()
            .zip(series.counts.iter().zip(&series.cumulative))
            .map(|(y, (c, cum))| [y.to_string(), c.to_string(), cum.to_string()]),
    )
}

pub const SERIES_HEADER: [&str; 3] = ["cluster", "year", "count"];

/// Per-year counts of several named series, one row per (cluster, year).
pub fn write_series_csv(path: &Path, series: &[(String, YearlySeries)]) -> Result<()> {
    write_csv(
        path,
        &SERIES_HEADER,
        series.iter().flat_map(|(name, s)| {
            s.years()
                .zip(&s.counts)
                .map(move |(y, c)| [name.clone(), y.to_string(), c.to_string()])
        }),
    )
}

/// Parses `cluster,year,count` rows (or `year,count` for a single series
/// named `all`). Years may come in any order; missing years count zero;
/// repeated (cluster, year) rows add up. Series are returned in order of
/// first appearance.
pub fn parse_series_csv(bytes: &[u8]) -> Result<Vec<(String, YearlySeries)>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let named = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["cluster", "year", "count", ..] => true,
        ["year", "count", ..] => false,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header `cluster,year,count` or `year,count`, found `{}`",
                    header.join(",")
                ),
            })
        }
    };
    let mut order: Vec<String> = Vec::new();
    let mut tallies: BTreeMap<String, BTreeMap<i32, u64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = line_of(&record, i + 2);
        let bad = |message: String| Error::Parse { line, message };
        let offset = usize::from(named);
        if record.len() < 2 + offset {
            return Err(bad(format!("expected {} fields, found {}", 2 + offset, record.len())));
        }
        let name = if named {
            record[0].to_string()
        } else {
            "all".to_string()
        };
        let year: i32 = record[offset]
            .parse()
            .map_err(|_| bad(format!("year `{}` is not an integer", &record[offset])))?;
        let count: u64 = record[offset + 1]
            .parse()
            .map_err(|_| bad(format!("count `{}` is not a non-negative integer", &record[offset + 1])))?;
        if !(-9999..=9999).contains(&year) {
            return Err(bad(format!("year {year} out of range")));
        }
        let tally = tallies.entry(name.clone()).or_insert_with(|| {
            order.push(name.clone());
            BTreeMap::new()
        });
        let slot = tally.entry(year).or_insert(0);
        *slot = slot.checked_add(count).ok_or_else(|| bad("count overflow".into()))?;
    }
    order
        .into_iter()
        .map(|name| {
            let tally = tallies.remove(&name).unwrap_or_default();
            let tally: BTreeMap<i32, u64> = trim_zero_edges(tally);
            let series = YearlySeries::from_counts(tally)
                .map_err(|_| Error::EmptyScope(format!("series `{name}` has no patents")))?;
            Ok((name, series))
        })
        .collect()
}

fn trim_zero_edges(tally: BTreeMap<i32, u64>) -> BTreeMap<i32, u64> {
    let first = tally.iter().find(|(_, &c)| c > 0).map(|(&y, _)| y);
    let last = tally.iter().rev().find(|(_, &c)| c > 0).map(|(&y, _)| y);
    match (first, last) {
        (Some(f), Some(l)) => tally.into_iter().filter(|(y, _)| (f..=l).contains(y)).collect(),
        _ => BTreeMap::new(),
    }
}

pub fn read_series_csv(path: &Path) -> Result<Vec<(String, YearlySeries)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_series_csv(&bytes)
}

pub const CLUSTER_HEADER: [&str; 2] = ["id", "cluster"];

pub fn write_clusters_csv(path: &Path, ids: &[String], assignment: &[usize]) -> Result<()> {
    write_csv(
        path,
        &CLUSTER_HEADER,
        ids.iter().zip(assignment).map(|(id, c)| [id.clone(), c.to_string()]),
    )
}

/// Parses `id,cluster` rows.
pub fn parse_clusters_csv(bytes: &[u8]) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    check_header(reader.headers()?, &CLUSTER_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = line_of(&record, i + 2);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() < 2 {
            return Err(bad(format!("expected 2 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(bad(format!("id `{id}` listed twice")));
        }
        let cluster: usize = record[1]
            .parse()
            .map_err(|_| bad(format!("cluster `{}` is not a non-negative integer", &record[1])))?;
        if cluster > 1_000_000 {
            return Err(bad(format!("cluster id {cluster} is implausibly large")));
        }
        rows.push((id, cluster));
    }
    Ok(rows)
}

pub fn read_clusters_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_clusters_csv(&bytes)
}
