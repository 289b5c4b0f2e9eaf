//! Pipeline configuration.
//!
//! The config file is flat `key = value` text:
//!
//! ```text
//! # comment lines start with '#'
//! input = patents.csv
//! schema.contributors = inventors | applicants
//! # an empty value unsets an optional key; here k is scanned over k_min..=k_max
//! k =
//! ```
//!
//! A `#` after a value is part of the value, not a comment.
//!
//! * one assignment per line, split at the first `=`; key and value trimmed;
//! * blank lines and lines whose first non-blank character is `#` are skipped;
//! * a value wrapped in double quotes keeps its inner whitespace verbatim;
//! * list values (`schema.contributors`) are separated by `|`;
//! * relative paths are resolved against the config file's directory;
//! * unknown keys and unparseable values are errors naming the line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::EigenvectorOptions;
use crate::ingest::{InputFormat, SchemaMap};
use crate::lifecycle::{SolverConfig, StageThresholds};
use crate::textvec::TfidfOptions;

/// Where document vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VectorSpec {
    Tfidf,
    Imported(PathBuf),
}

impl FromStr for VectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty vector source".into()));
        }
        Ok(if s.eq_ignore_ascii_case("tfidf") {
            VectorSpec::Tfidf
        } else {
            VectorSpec::Imported(PathBuf::from(s))
        })
    }
}

impl std::fmt::Display for VectorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorSpec::Tfidf => f.write_str("tfidf"),
            VectorSpec::Imported(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub schema: SchemaMap,
    /// `None` selects the bundled English list.
    pub stopwords: Option<PathBuf>,
    pub vectors: VectorSpec,
    /// L2-normalize vectors before clustering.
    pub normalize: bool,
    pub tfidf: TfidfOptions,
    pub k_min: usize,
    pub k_max: usize,
    /// Fixed k; skips the Davies-Bouldin scan.
    pub k: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub top_terms: usize,
    pub solver: SolverConfig,
    pub thresholds: StageThresholds,
    pub exclude_final_year: bool,
    pub resolution: f64,
    pub min_community_size: usize,
    pub top_members: usize,
    pub eigen: EigenvectorOptions,
    pub weighted_distance: bool,
    pub top_k: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            format: InputFormat::Csv,
            schema: SchemaMap::default(),
            stopwords: None,
            vectors: VectorSpec::Tfidf,
            normalize: true,
            tfidf: TfidfOptions::default(),
            k_min: 2,
            k_max: 11,
            k: None,
            seed: 42,
            restarts: 10,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
            top_terms: 12,
            solver: SolverConfig::default(),
            thresholds: StageThresholds::default(),
            exclude_final_year: false,
            resolution: 1.0,
            min_community_size: 1,
            top_members: 5,
            eigen: EigenvectorOptions::default(),
            weighted_distance: false,
            top_k: 10,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("invalid value `{value}` for `{key}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            message: format!("invalid boolean `{value}` for `{key}`"),
        }),
    }
}

fn optional<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_value(line, key, value).map(Some)
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses config text on top of the defaults; relative paths are joined
    /// onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() || base.as_os_str().is_empty() {
                p
            } else {
                base.join(p)
            }
        };
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key = value`, got `{trimmed}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let value = if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                &value[1..value.len() - 1]
            } else {
                value
            };
            cfg.set(line, key, value, &path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str, path: &dyn Fn(&str) -> PathBuf) -> Result<()> {
        match key {
            "input" => self.input = Some(path(value)),
            "format" => self.format = parse_value(line, key, value)?,
            "schema.id" => self.schema.id = value.to_string(),
            "schema.title" => self.schema.title = value.to_string(),
            "schema.abstract" => self.schema.abstract_text = value.to_string(),
            "schema.contributors" => {
                self.schema.contributors = value
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            "schema.date" => self.schema.date = value.to_string(),
            "contributor_separator" => self.schema.separator = value.to_string(),
            "year_min" => self.schema.year_min = parse_value(line, key, value)?,
            "year_max" => self.schema.year_max = parse_value(line, key, value)?,
            "stopwords" => {
                self.stopwords = if value.is_empty() || value.eq_ignore_ascii_case("bundled") {
                    None
                } else {
                    Some(path(value))
                }
            }
            "vectors" => {
                self.vectors = match parse_value::<VectorSpec>(line, key, value)? {
                    VectorSpec::Imported(p) => VectorSpec::Imported(path(&p.to_string_lossy())),
                    tfidf => tfidf,
                }
            }
            "normalize" => self.normalize = parse_bool(line, key, value)?,
            "min_df" => self.tfidf.min_df = parse_value(line, key, value)?,
            "max_terms" => self.tfidf.max_terms = optional(line, key, value)?,
            "k_min" => self.k_min = parse_value(line, key, value)?,
            "k_max" => self.k_max = parse_value(line, key, value)?,
            "k" => self.k = optional(line, key, value)?,
            "seed" => self.seed = parse_value(line, key, value)?,
            "restarts" => self.restarts = parse_value(line, key, value)?,
            "kmeans.max_iter" => self.kmeans_max_iter = parse_value(line, key, value)?,
            "kmeans.tol" => self.kmeans_tol = parse_value(line, key, value)?,
            "top_terms" => self.top_terms = parse_value(line, key, value)?,
            "solver.max_iter" => self.solver.max_iter = parse_value(line, key, value)?,
            "solver.rss_tol" => self.solver.rss_tol = parse_value(line, key, value)?,
            "solver.step_tol" => self.solver.step_tol = parse_value(line, key, value)?,
            "solver.shape_floor" => self.solver.shape_floor = parse_value(line, key, value)?,
            "thresholds.emerging" => self.thresholds.emerging_upper = parse_value(line, key, value)?,
            "thresholds.growth" => self.thresholds.growth_upper = parse_value(line, key, value)?,
            "thresholds.maturity" => self.thresholds.maturity_upper = parse_value(line, key, value)?,
            "exclude_final_year" => self.exclude_final_year = parse_bool(line, key, value)?,
            "resolution" => self.resolution = parse_value(line, key, value)?,
            "min_community_size" => self.min_community_size = parse_value(line, key, value)?,
            "top_members" => self.top_members = parse_value(line, key, value)?,
            "eigen.max_iter" => self.eigen.max_iter = parse_value(line, key, value)?,
            "eigen.tol" => self.eigen.tol = parse_value(line, key, value)?,
            "weighted_distance" => self.weighted_distance = parse_bool(line, key, value)?,
            "top_k" => self.top_k = parse_value(line, key, value)?,
            "out" => self.out = path(value),
            "threads" => self.threads = optional(line, key, value)?,
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { line: 0, message });
        if self.k_min < 2 || self.k_max < self.k_min {
            return bad(format!("k range {}..={} is invalid", self.k_min, self.k_max));
        }
        if let Some(k) = self.k {
            if k < 2 {
                return bad(format!("k = {k} must be at least 2"));
            }
        }
        if self.schema.year_min > self.schema.year_max {
            return bad("year_min exceeds year_max".into());
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad(format!("resolution {} must be positive", self.resolution));
        }
        if !(self.kmeans_tol >= 0.0 && self.eigen.tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        self.thresholds.validate().map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })
    }

    /// Every setting that influences outputs, for the run manifest. The
    /// output directory and thread count are left out; neither changes any
    /// output byte.
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            input: self.input.as_ref().map(|p| p.display().to_string()),
            format: self.format.as_str().into(),
            schema_id: self.schema.id.clone(),
            schema_title: self.schema.title.clone(),
            schema_abstract: self.schema.abstract_text.clone(),
            schema_contributors: self.schema.contributors.clone(),
            schema_date: self.schema.date.clone(),
            contributor_separator: self.schema.separator.clone(),
            year_min: self.schema.year_min,
            year_max: self.schema.year_max,
            stopwords: self.stopwords.as_ref().map_or_else(
                || crate::textvec::BUNDLED_STOPWORDS.to_string(),
                |p| p.display().to_string(),
            ),
            vectors: self.vectors.to_string(),
            normalize: self.normalize,
            min_df: self.tfidf.min_df,
            max_terms: self.tfidf.max_terms,
            k_min: self.k_min,
            k_max: self.k_max,
            k: self.k,
            seed: self.seed,
            restarts: self.restarts,
            kmeans_max_iter: self.kmeans_max_iter,
            kmeans_tol: self.kmeans_tol,
            top_terms: self.top_terms,
            solver: self.solver,
            thresholds: self.thresholds,
            exclude_final_year: self.exclude_final_year,
            resolution: self.resolution,
            min_community_size: self.min_community_size,
            top_members: self.top_members,
            eigen_max_iter: self.eigen.max_iter,
            eigen_tol: self.eigen.tol,
            weighted_distance: self.weighted_distance,
            top_k: self.top_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub input: Option<String>,
    pub format: String,
    pub schema_id: String,
    pub schema_title: String,
    pub schema_abstract: String,
    pub schema_contributors: Vec<String>,
    pub schema_date: String,
    pub contributor_separator: String,
    pub year_min: i32,
    pub year_max: i32,
    pub stopwords: String,
    pub vectors: String,
    pub normalize: bool,
    pub min_df: usize,
    pub max_terms: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub k: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub top_terms: usize,
    pub solver: SolverConfig,
    pub thresholds: StageThresholds,
    pub exclude_final_year: bool,
    pub resolution: f64,
    pub min_community_size: usize,
    pub top_members: usize,
    pub eigen_max_iter: usize,
    pub eigen_tol: f64,
    pub weighted_distance: bool,
    pub top_k: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = PipelineConfig::parse("", Path::new("")).unwrap();
        assert_eq!((cfg.k_min, cfg.k_max, cfg.seed, cfg.restarts), (2, 11, 42, 10));
        assert_eq!(cfg.schema.separator, ";");
        assert_eq!(cfg.vectors, VectorSpec::Tfidf);
        assert_eq!(cfg.top_terms, 12);
    }

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = "# fixture\n\ninput = data/p.csv\nschema.contributors = Inventors | Applicants \n\
                    contributor_separator = \";; \"\nk = 6\nvectors = emb.csv\nexclude_final_year = yes\n\
                    thresholds.maturity = 0.95\n";
        let cfg = PipelineConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.input, Some(PathBuf::from("/cfg/data/p.csv")));
        assert_eq!(cfg.schema.contributors, vec!["Inventors", "Applicants"]);
        assert_eq!(cfg.schema.separator, ";; ");
        assert_eq!(cfg.k, Some(6));
        assert_eq!(cfg.vectors, VectorSpec::Imported(PathBuf::from("/cfg/emb.csv")));
        assert!(cfg.exclude_final_year);
        assert_eq!(cfg.thresholds.maturity_upper, 0.95);
    }

    #[test]
    fn errors_name_the_line() {
        let err = PipelineConfig::parse("seed = 1\nbogus = 2\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        let err = PipelineConfig::parse("seed = x\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = PipelineConfig::parse("just text\n", Path::new("")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        assert!(PipelineConfig::parse("k_min = 5\nk_max = 3\n", Path::new("")).is_err());
    }

    #[test]
    fn empty_k_means_scan() {
        let cfg = PipelineConfig::parse("k =\n", Path::new("")).unwrap();
        assert_eq!(cfg.k, None);
    }
}
