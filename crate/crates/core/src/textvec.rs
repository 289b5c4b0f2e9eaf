//! Document preprocessing, TF-IDF vectors and imported embeddings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::PatentRecord;

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Identifier of the bundled list, echoed into run manifests.
pub const BUNDLED_STOPWORDS: &str = "bundled-en-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    terms: HashSet<String>,
}

impl Stopwords {
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    /// One term per line; blank lines ignored, terms case-folded.
    pub fn parse(text: &str) -> Self {
        Stopwords {
            terms: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords {
            terms: iter.into_iter().map(|s| s.as_ref().to_lowercase()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenizedDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Lowercases, splits on non-alphanumeric runs, drops one-character tokens
/// and stopwords.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2 && !stopwords.contains(t))
        .map(str::to_string)
        .collect()
}

/// Tokens of `title + " " + abstract`.
pub fn preprocess(record: &PatentRecord, stopwords: &Stopwords) -> TokenizedDoc {
    let text = format!("{} {}", record.title, record.abstract_text);
    TokenizedDoc {
        id: record.id.clone(),
        tokens: tokenize(&text, stopwords),
    }
}

/// Retained terms in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub document_frequency: Vec<usize>,
    pub total_docs: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: usize) -> f64 {
        smoothed_idf(self.total_docs, self.document_frequency[term])
    }

    /// L2-normalized TF-IDF weights of one document over this vocabulary.
    pub fn weights(&self, doc: &TokenizedDoc) -> Vec<f64> {
        let mut values = vec![0.0; self.len()];
        for t in &doc.tokens {
            if let Some(i) = self.index_of(t) {
                values[i] += 1.0;
            }
        }
        let length = doc.tokens.len() as f64;
        for (i, v) in values.iter_mut().enumerate() {
            if *v > 0.0 {
                *v = *v / length * self.idf(i);
            }
        }
        l2_normalize(&mut values);
        values
    }
}

pub fn smoothed_idf(total_docs: usize, df: usize) -> f64 {
    ((1.0 + total_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorSource {
    Tfidf,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocVector {
    pub id: String,
    pub values: Vec<f64>,
    pub source: VectorSource,
}

impl DocVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl AsRef<[f64]> for DocVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfidfOptions {
    /// Terms in fewer documents are dropped.
    pub min_df: usize,
    /// Keep only this many terms, by total occurrence count (ties by term).
    pub max_terms: Option<usize>,
}

impl Default for TfidfOptions {
    fn default() -> Self {
        TfidfOptions {
            min_df: 1,
            max_terms: None,
        }
    }
}

/// L2-normalized TF-IDF vectors with `tf = count / doc length`.
pub fn tfidf_vectorize(docs: &[TokenizedDoc], opts: TfidfOptions) -> Result<(Vocabulary, Vec<DocVector>)> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut occurrences: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for t in &doc.tokens {
            *occurrences.entry(t).or_insert(0) += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<&str> = df
        .iter()
        .filter(|&(_, &d)| d >= opts.min_df.max(1))
        .map(|(&t, _)| t)
        .collect();
    if let Some(max) = opts.max_terms {
        if kept.len() > max {
            kept.sort_by(|a, b| occurrences[b].cmp(&occurrences[a]).then_with(|| a.cmp(b)));
            kept.truncate(max);
            kept.sort_unstable();
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let index: HashMap<String, usize> = kept.iter().enumerate().map(|(i, &t)| (t.to_string(), i)).collect();
    let vocab = Vocabulary {
        terms: kept.iter().map(|t| t.to_string()).collect(),
        document_frequency: kept.iter().map(|t| df[t]).collect(),
        total_docs: docs.len(),
        index,
    };
    let vectors = docs
        .iter()
        .map(|doc| DocVector {
            id: doc.id.clone(),
            values: vocab.weights(doc),
            source: VectorSource::Tfidf,
        })
        .collect();
    Ok((vocab, vectors))
}

/// Scales to unit Euclidean norm; all-zero vectors are left alone.
pub fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Embeddings matched against a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedEmbeddings {
    /// In corpus order.
    pub vectors: Vec<DocVector>,
    /// Ids present in the file but not in the corpus.
    pub ignored: usize,
}

pub fn import_embeddings(path: &Path, corpus: &[PatentRecord]) -> Result<ImportedEmbeddings> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_embeddings(&bytes)?;
    match_embeddings(rows, corpus)
}

/// Parses `id,v0,v1,...` CSV (optional header whose first cell is `id`) or
/// JSON-lines `{"id": ..., "vector": [...]}`; the format is sniffed from the
/// first non-blank byte. Rows must share one dimension and be finite.
pub fn parse_embeddings(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    let rows = match first {
        None => Vec::new(),
        Some(b'{') => parse_embedding_jsonl(bytes)?,
        Some(_) => parse_embedding_csv(bytes)?,
    };
    let mut seen = HashSet::new();
    let mut dim = None;
    for (id, v) in &rows {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidArgument(format!("embedding id `{id}` appears twice")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(id.clone()));
        }
        match dim {
            None if v.is_empty() => {
                return Err(Error::DimensionMismatch {
                    id: id.clone(),
                    expected: 1,
                    found: 0,
                })
            }
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::DimensionMismatch {
                    id: id.clone(),
                    expected: d,
                    found: v.len(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(rows)
}

fn parse_embedding_csv(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        let Some(id) = record.get(0) else { continue };
        if i == 0 && id.eq_ignore_ascii_case("id") {
            continue;
        }
        if id.is_empty() && record.len() == 1 {
            continue;
        }
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{cell}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id.to_string(), values));
    }
    Ok(rows)
}

fn parse_embedding_jsonl(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = match value.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing `id`".into())),
        };
        let Some(Value::Array(items)) = value.get("vector") else {
            return Err(bad("missing `vector` array".into()));
        };
        let values = items
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::NonFinite(id.clone())))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id, values));
    }
    Ok(rows)
}

/// Orders imported rows by corpus; every corpus id must be present.
pub fn match_embeddings(rows: Vec<(String, Vec<f64>)>, corpus: &[PatentRecord]) -> Result<ImportedEmbeddings> {
    let mut by_id: HashMap<String, Vec<f64>> = rows.into_iter().collect();
    let missing: Vec<String> = corpus
        .iter()
        .filter(|r| !by_id.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let vectors: Vec<DocVector> = corpus
        .iter()
        .map(|r| DocVector {
            id: r.id.clone(),
            values: by_id.remove(&r.id).unwrap_or_default(),
            source: VectorSource::Imported,
        })
        .collect();
    if !by_id.is_empty() {
        log::warn!(
            "{} embedding rows have no matching patent and were ignored",
            by_id.len()
        );
    }
    Ok(ImportedEmbeddings {
        vectors,
        ignored: by_id.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, tokens: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            id: id.into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn record(id: &str, title: &str, abs: &str) -> PatentRecord {
        PatentRecord {
            id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
            contributors: vec![],
            year: 2020,
        }
    }

    #[test]
    fn preprocess_rules() {
        let stop: Stopwords = ["iot"].into_iter().collect();
        let d = preprocess(&record("1", "Secure IoT Key Exchange", ""), &stop);
        assert_eq!(d.tokens, vec!["secure", "key", "exchange"]);

        let none = Stopwords::parse("");
        assert_eq!(tokenize("Wi-Fi/BLE gateway", &none), vec!["wi", "fi", "ble", "gateway"]);

        let all: Stopwords = ["the", "of"].into_iter().collect();
        assert!(preprocess(&record("1", "The of", "of the a"), &all).tokens.is_empty());
    }

    #[test]
    fn bundled_list_loads() {
        let s = Stopwords::english();
        assert!(s.contains("the") && s.contains("and"));
        assert!(!s.contains("sensor"));
    }

    #[test]
    fn smoothed_idf_values() {
        let (vocab, _) = tfidf_vectorize(
            &[doc("1", &["iot", "sensor"]), doc("2", &["iot", "cloud"])],
            TfidfOptions::default(),
        )
        .unwrap();
        let iot = vocab.index_of("iot").unwrap();
        let sensor = vocab.index_of("sensor").unwrap();
        assert!((vocab.idf(iot) - 1.0).abs() < 1e-15);
        assert!((vocab.idf(sensor) - ((1.5f64).ln() + 1.0)).abs() < 1e-15);
        assert!((vocab.idf(sensor) - 1.4055).abs() < 1e-4);
        assert!(vocab.idf(iot) < vocab.idf(sensor));
        assert_eq!(vocab.terms, vec!["cloud", "iot", "sensor"]);
    }

    #[test]
    fn single_doc_is_unit_one_hot() {
        let (_, v) = tfidf_vectorize(&[doc("1", &["a", "a"])], TfidfOptions::default()).unwrap();
        assert_eq!(v[0].values, vec![1.0]);
    }

    #[test]
    fn empty_docs_error() {
        let err = tfidf_vectorize(&[doc("1", &[]), doc("2", &[])], TfidfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyVocabulary));
    }

    #[test]
    fn pruning_by_df_and_count() {
        let docs = [
            doc("1", &["x", "y", "y", "z"]),
            doc("2", &["x", "y"]),
            doc("3", &["x", "w"]),
        ];
        let (vocab, _) = tfidf_vectorize(
            &docs,
            TfidfOptions {
                min_df: 2,
                max_terms: None,
            },
        )
        .unwrap();
        assert_eq!(vocab.terms, vec!["x", "y"]);
        let (vocab, _) = tfidf_vectorize(
            &docs,
            TfidfOptions {
                min_df: 1,
                max_terms: Some(2),
            },
        )
        .unwrap();
        assert_eq!(vocab.terms, vec!["x", "y"]);
        let (vocab, _) = tfidf_vectorize(
            &docs,
            TfidfOptions {
                min_df: 1,
                max_terms: Some(3),
            },
        )
        .unwrap();
        assert_eq!(vocab.terms, vec!["w", "x", "y"]);
    }

    #[test]
    fn embedding_csv_and_jsonl() {
        let corpus = [record("a", "", ""), record("b", "", "")];
        let rows = parse_embeddings(b"id,v0,v1\nb,1,2\na,3,4\nc,0,0\n").unwrap();
        let out = match_embeddings(rows, &corpus).unwrap();
        assert_eq!(out.vectors[0].values, vec![3.0, 4.0]);
        assert_eq!(out.vectors[1].id, "b");
        assert_eq!(out.ignored, 1);

        let rows = parse_embeddings(b"{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[0.5,2]}\n").unwrap();
        assert_eq!(
            match_embeddings(rows, &corpus).unwrap().vectors[1].values,
            vec![0.5, 2.0]
        );
    }

    #[test]
    fn embedding_errors() {
        let corpus = [record("a", "", ""), record("b", "", "")];
        let rows = parse_embeddings(b"a,1,2\n").unwrap();
        assert!(matches!(match_embeddings(rows, &corpus), Err(Error::MissingEmbeddings(ref ids)) if ids == &["b"]));
        assert!(matches!(parse_embeddings(b"a,1,2\nb,1\n"), Err(Error::DimensionMismatch { ref id, .. }) if id == "b"));
        assert!(matches!(parse_embeddings(b"a,1,NaN\n"), Err(Error::NonFinite(ref id)) if id == "a"));
        assert!(matches!(parse_embeddings(b"a,1,inf\n"), Err(Error::NonFinite(_))));
        assert!(parse_embeddings(b"a,1,x\n").is_err());
    }
}
