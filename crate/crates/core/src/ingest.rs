//! Patent-record parsing, co-registration edge lists and yearly count series.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// One patent document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatentRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// Inventor and/or applicant names, canonicalized and unique per patent.
    pub contributors: Vec<String>,
    pub year: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "json-lines" | "jsonlines" | "ndjson" => Ok(InputFormat::JsonLines),
            other => Err(Error::InvalidArgument(format!("unknown input format `{other}`"))),
        }
    }
}

impl InputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            InputFormat::Csv => "csv",
            InputFormat::JsonLines => "jsonl",
        }
    }
}

/// Maps the record fields onto input column (or JSON key) names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaMap {
    pub id: String,
    pub title: String,
    pub abstract_text: String,
    /// Every listed column contributes names; the union is deduplicated per patent.
    pub contributors: Vec<String>,
    pub date: String,
    /// Separator between names inside one contributors cell.
    pub separator: String,
    pub year_min: i32,
    pub year_max: i32,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            id: "id".into(),
            title: "title".into(),
            abstract_text: "abstract".into(),
            contributors: vec!["inventors".into(), "applicants".into()],
            date: "publication_date".into(),
            separator: ";".into(),
            year_min: 1900,
            year_max: 2100,
        }
    }
}

/// A quarantined input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCorpus {
    pub records: Vec<PatentRecord>,
    pub rejects: Vec<Reject>,
    /// Rows dropped because their id was already seen.
    pub duplicates: usize,
}

/// Reads a corpus file. See [`parse_corpus_str`].
pub fn parse_corpus(path: &Path, format: InputFormat, schema: &SchemaMap) -> Result<ParsedCorpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_bytes(&bytes, format, schema)
}

pub fn parse_corpus_str(text: &str, format: InputFormat, schema: &SchemaMap) -> Result<ParsedCorpus> {
    parse_corpus_bytes(text.as_bytes(), format, schema)
}

/// Parses corpus bytes in file order.
///
/// Schema problems (a mapped CSV column missing from the header) abort the
/// parse. Problems local to one row are collected as [`Reject`]s.
pub fn parse_corpus_bytes(bytes: &[u8], format: InputFormat, schema: &SchemaMap) -> Result<ParsedCorpus> {
    let rows = match format {
        InputFormat::Csv => read_csv_rows(bytes, schema)?,
        InputFormat::JsonLines => read_jsonl_rows(bytes, schema),
    };

    let mut out = ParsedCorpus::default();
    let mut seen_ids = HashSet::new();
    let mut names = NameTable::default();
    for row in rows {
        let raw = match row {
            Ok(raw) => raw,
            Err(reject) => {
                out.rejects.push(reject);
                continue;
            }
        };
        match raw.validate(schema) {
            Ok(mut record) => {
                if !seen_ids.insert(record.id.clone()) {
                    out.duplicates += 1;
                    out.rejects.push(Reject {
                        line_no: raw.line_no,
                        reason: format!("duplicate id `{}`", record.id),
                    });
                    continue;
                }
                for name in &mut record.contributors {
                    *name = names.display(name).to_string();
                }
                out.records.push(record);
            }
            Err(reason) => out.rejects.push(Reject {
                line_no: raw.line_no,
                reason,
            }),
        }
    }
    Ok(out)
}

struct RawRow {
    line_no: usize,
    id: Option<String>,
    title: String,
    abstract_text: String,
    contributor_cells: Vec<ContributorCell>,
    date: Option<String>,
}

enum ContributorCell {
    Joined(String),
    List(Vec<String>),
}

impl RawRow {
    fn validate(&self, schema: &SchemaMap) -> std::result::Result<PatentRecord, String> {
        let id = self.id.as_deref().map(str::trim).unwrap_or_default();
        if id.is_empty() {
            return Err("empty id".into());
        }
        let date = self.date.as_deref().unwrap_or_default();
        let year = parse_year(date).ok_or_else(|| format!("unparseable date `{date}`"))?;
        if year < schema.year_min || year > schema.year_max {
            return Err(format!(
                "year {year} outside window {}..={}",
                schema.year_min, schema.year_max
            ));
        }

        let mut contributors = Vec::new();
        let mut keys = HashSet::new();
        let mut push = |name: &str| {
            let name = clean_name(name);
            if !name.is_empty() && keys.insert(fold_name(&name)) {
                contributors.push(name);
            }
        };
        for cell in &self.contributor_cells {
            match cell {
                ContributorCell::Joined(s) => {
                    if schema.separator.is_empty() {
                        push(s);
                    } else {
                        s.split(schema.separator.as_str()).for_each(&mut push);
                    }
                }
                ContributorCell::List(items) => items.iter().for_each(|s| push(s)),
            }
        }

        Ok(PatentRecord {
            id: id.to_string(),
            title: self.title.clone(),
            abstract_text: self.abstract_text.clone(),
            contributors,
            year,
        })
    }
}

type RowResult = std::result::Result<RawRow, Reject>;

fn read_csv_rows(bytes: &[u8], schema: &SchemaMap) -> Result<Vec<RowResult>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = reader.byte_records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(Err(e)) => return Err(Error::Csv(e)),
        Some(Ok(h)) => h,
    };
    let header: Vec<String> = header
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let s = String::from_utf8_lossy(cell);
            let s = if i == 0 { s.trim_start_matches('\u{feff}') } else { &s };
            s.trim().to_string()
        })
        .collect();
    let column = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = column(&schema.id)?;
    let title_col = column(&schema.title)?;
    let abstract_col = column(&schema.abstract_text)?;
    let date_col = column(&schema.date)?;
    let contributor_cols = schema
        .contributors
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (index, record) in records.enumerate() {
        // Header is line 1; the csv position is exact when available.
        let fallback_line = index + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(Error::Csv(e));
                }
                let line_no = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
                rows.push(Err(Reject {
                    line_no,
                    reason: format!("malformed csv row: {e}"),
                }));
                continue;
            }
        };
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        if record.len() == 1 && record.get(0).is_some_and(|f| f.is_empty()) {
            continue;
        }
        let field = |col: usize| -> std::result::Result<String, Reject> {
            let raw = record.get(col).ok_or_else(|| Reject {
                line_no,
                reason: format!("row has {} fields, column {} missing", record.len(), col + 1),
            })?;
            String::from_utf8(raw.to_vec()).map_err(|_| Reject {
                line_no,
                reason: format!("column {} is not valid UTF-8", col + 1),
            })
        };
        let row = (|| {
            Ok(RawRow {
                line_no,
                id: Some(field(id_col)?),
                title: field(title_col)?,
                abstract_text: field(abstract_col)?,
                contributor_cells: contributor_cols
                    .iter()
                    .map(|&c| field(c).map(ContributorCell::Joined))
                    .collect::<std::result::Result<_, _>>()?,
                date: Some(field(date_col)?),
            })
        })();
        rows.push(row);
    }
    Ok(rows)
}

fn read_jsonl_rows(bytes: &[u8], schema: &SchemaMap) -> Vec<RowResult> {
    let mut rows = Vec::new();
    for (index, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = index + 1;
        let reject = |reason: String| Err(Reject { line_no, reason });
        let Ok(line) = std::str::from_utf8(line) else {
            rows.push(reject("line is not valid UTF-8".into()));
            continue;
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                rows.push(reject(format!("invalid json: {e}")));
                continue;
            }
        };
        let Value::Object(map) = value else {
            rows.push(reject("json row is not an object".into()));
            continue;
        };
        let scalar = |key: &str| -> Option<String> {
            match map.get(key)? {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                Value::Bool(b) => Some(b.to_string()),
                _ => None,
            }
        };
        let contributor_cells = schema
            .contributors
            .iter()
            .filter_map(|key| match map.get(key)? {
                Value::String(s) => Some(ContributorCell::Joined(s.clone())),
                Value::Array(items) => Some(ContributorCell::List(
                    items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
                )),
                _ => None,
            })
            .collect();
        rows.push(Ok(RawRow {
            line_no,
            id: scalar(&schema.id),
            title: scalar(&schema.title).unwrap_or_default(),
            abstract_text: scalar(&schema.abstract_text).unwrap_or_default(),
            contributor_cells,
            date: scalar(&schema.date),
        }));
    }
    rows
}

/// Extracts the calendar year from `YYYY`, `YYYYMMDD` or a `YYYY<sep>...` date.
pub fn parse_year(date: &str) -> Option<i32> {
    let date = date.trim();
    let bytes = date.as_bytes();
    if bytes.len() < 4 || !bytes[..4].iter().all(u8::is_ascii_digit) {
        return None;
    }
    let ok = bytes.len() == 4
        || (bytes.len() == 8 && bytes.iter().all(u8::is_ascii_digit))
        || matches!(bytes.get(4), Some(b'-' | b'/' | b'.' | b'T' | b' '));
    if !ok {
        return None;
    }
    date[..4].parse().ok()
}

/// Trims and collapses internal whitespace runs to one space.
pub fn clean_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity key of a contributor name.
pub fn fold_name(name: &str) -> String {
    clean_name(name).to_lowercase()
}

/// First-seen display casing per folded name.
#[derive(Debug, Default)]
struct NameTable {
    display: HashMap<String, String>,
}

impl NameTable {
    fn display(&mut self, name: &str) -> &str {
        let cleaned = clean_name(name);
        self.display.entry(cleaned.to_lowercase()).or_insert(cleaned)
    }
}

/// An undirected co-registration link; `source < target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CoRegistrationEdge {
    pub source: String,
    pub target: String,
    /// Number of patents registered jointly by the pair.
    pub weight: u64,
}

/// Aggregates every unordered contributor pair of every patent.
pub fn build_edge_list(corpus: &[PatentRecord]) -> Vec<CoRegistrationEdge> {
    let mut names = NameTable::default();
    let mut weights: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut seen_ids = HashSet::new();
    for record in corpus {
        if !seen_ids.insert(record.id.as_str()) {
            continue;
        }
        let mut team: Vec<String> = Vec::with_capacity(record.contributors.len());
        for name in &record.contributors {
            let display = names.display(name).to_string();
            if !display.is_empty() && !team.contains(&display) {
                team.push(display);
            }
        }
        team.sort();
        for (i, source) in team.iter().enumerate() {
            for target in &team[i + 1..] {
                *weights.entry((source.clone(), target.clone())).or_insert(0) += 1;
            }
        }
    }
    weights
        .into_iter()
        .map(|((source, target), weight)| CoRegistrationEdge { source, target, weight })
        .collect()
}

/// Patent counts per consecutive year.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YearlySeries {
    pub start_year: i32,
    pub counts: Vec<u64>,
    pub cumulative: Vec<u64>,
}

impl YearlySeries {
    /// Builds a zero-filled series spanning the min..max of `years`.
    pub fn from_years(years: impl IntoIterator<Item = i32>) -> Result<Self> {
        let mut tally: BTreeMap<i32, u64> = BTreeMap::new();
        for y in years {
            *tally.entry(y).or_insert(0) += 1;
        }
        Self::from_counts(tally)
    }

    /// Builds a series from per-year counts; missing years are zero.
    pub fn from_counts(tally: BTreeMap<i32, u64>) -> Result<Self> {
        let (Some((&first, _)), Some((&last, _))) = (tally.first_key_value(), tally.last_key_value()) else {
            return Err(Error::EmptyScope("no records in scope".into()));
        };
        let counts: Vec<u64> = (first..=last).map(|y| tally.get(&y).copied().unwrap_or(0)).collect();
        let cumulative = counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        Ok(YearlySeries {
            start_year: first,
            counts,
            cumulative,
        })
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.counts.len() as i32 - 1
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.counts.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// `(year, cumulative)` pairs, the data a logistic curve is fitted to.
    pub fn cumulative_points(&self) -> Vec<(f64, f64)> {
        self.years()
            .zip(&self.cumulative)
            .map(|(t, &y)| (f64::from(t), y as f64))
            .collect()
    }

    /// Drops the last (possibly still running) year.
    pub fn without_final_year(&self) -> Result<Self> {
        if self.counts.len() <= 1 {
            return Err(Error::EmptyScope("excluding the final year leaves no data".into()));
        }
        let n = self.counts.len() - 1;
        Ok(YearlySeries {
            start_year: self.start_year,
            counts: self.counts[..n].to_vec(),
            cumulative: self.cumulative[..n].to_vec(),
        })
    }
}

/// Yearly and cumulative counts of the records whose id is in `filter` (all
/// records when `None`).
pub fn yearly_series(corpus: &[PatentRecord], filter: Option<&HashSet<String>>) -> Result<YearlySeries> {
    let years = corpus
        .iter()
        .filter(|r| filter.map_or(true, |ids| ids.contains(&r.id)))
        .map(|r| r.year);
    YearlySeries::from_years(years)
}
