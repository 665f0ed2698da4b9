//! Experiment configuration.
//!
//! Settings are read from an INI file, either with sections (`[encoder]`
//! then `dim = 64`) or as flat dotted keys (`encoder.dim = 64`). Command-line
//! flags set the same keys afterwards and win. Relative paths are resolved
//! against the working directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use zeco_core::encoder::{EncoderConfig, Provider};
use zeco_core::eval::{Gain, MetricConfig};
use zeco_core::query::Variant;

use crate::{Error, Result};

/// Every key accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "data.conversations",
    "data.corpus",
    "data.qrels",
    "data.rewrites",
    "data.doc_map",
    "encoder.dim",
    "encoder.alpha",
    "encoder.max_tokens",
    "encoder.provider",
    "encoder.archive_path",
    "index.dir",
    "query.use_responses",
    "search.variants",
    "search.k",
    "search.probe_depth",
    "eval.maxp",
    "eval.relevance_threshold",
    "eval.gain",
    "eval.metrics",
    "analysis.seed",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub conversations: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub rewrites: Option<PathBuf>,
    pub doc_map: Option<PathBuf>,
    pub encoder: EncoderConfig,
    pub archive_path: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub use_responses: bool,
    pub variants: Vec<Variant>,
    pub k: usize,
    /// Two-stage search when set, exhaustive scoring otherwise.
    pub probe_depth: Option<usize>,
    pub maxp: bool,
    pub relevance_threshold: u32,
    pub metrics: MetricConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            conversations: None,
            corpus: None,
            qrels: None,
            rewrites: None,
            doc_map: None,
            encoder: EncoderConfig::default(),
            archive_path: None,
            index_dir: PathBuf::from("index"),
            use_responses: false,
            variants: Variant::ALL.to_vec(),
            k: 1000,
            probe_depth: None,
            maxp: false,
            relevance_threshold: 1,
            metrics: MetricConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, found {value:?}"
        ))),
    }
}

/// Parses `ndcg@3,recall@100` (either order, either may be omitted).
fn parse_metrics(value: &str, metrics: &mut MetricConfig) -> Result<()> {
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, depth) = item
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("eval.metrics: {item:?} lacks a @depth")))?;
        let depth: usize = parse("eval.metrics", depth)?;
        if depth == 0 {
            return Err(Error::Config(format!("eval.metrics: {item} has depth 0")));
        }
        match name.to_ascii_lowercase().as_str() {
            "ndcg" => metrics.ndcg_depth = depth,
            "recall" | "r" => metrics.recall_depth = depth,
            other => {
                return Err(Error::Config(format!(
                    "eval.metrics: unsupported metric {other:?}"
                )))
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.merge_file(path)?;
        Ok(cfg)
    }

    /// Applies every key of an INI file on top of the current values.
    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ini = ini::Ini::load_from_file(path).map_err(|e| match e {
            ini::Error::Io(source) => Error::io(path, source),
            ini::Error::Parse(p) => Error::Config(format!("{}: {p}", path.display())),
        })?;
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let full = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_string(),
                };
                self.set(&full, value)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "data.conversations" => self.conversations = path(),
            "data.corpus" => self.corpus = path(),
            "data.qrels" => self.qrels = path(),
            "data.rewrites" => self.rewrites = path(),
            "data.doc_map" => self.doc_map = path(),
            "encoder.dim" => self.encoder.dim = parse(key, value)?,
            "encoder.alpha" => self.encoder.alpha = parse(key, value)?,
            "encoder.max_tokens" => self.encoder.max_tokens = parse(key, value)?,
            "encoder.provider" => self.encoder.provider = parse::<Provider>(key, value)?,
            "encoder.archive_path" => self.archive_path = path(),
            "index.dir" => self.index_dir = PathBuf::from(value.trim()),
            "query.use_responses" => self.use_responses = parse_bool(key, value)?,
            "search.variants" => {
                self.variants = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse::<Variant>(key, s))
                    .collect::<Result<_>>()?;
            }
            "search.k" => self.k = parse(key, value)?,
            "search.probe_depth" => {
                self.probe_depth = match value.trim() {
                    "" | "none" | "exact" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "eval.maxp" => self.maxp = parse_bool(key, value)?,
            "eval.relevance_threshold" => self.relevance_threshold = parse(key, value)?,
            "eval.gain" => self.metrics.gain = parse::<Gain>(key, value)?,
            "eval.metrics" => parse_metrics(value, &mut self.metrics)?,
            "analysis.seed" => self.seed = parse(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value.trim()),
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses and applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, found {pair:?}")))?;
        self.set(k.trim(), v)
    }

    /// Checks value ranges and that every configured input path exists.
    pub fn validate(&self) -> Result<()> {
        if let Some(path) = &self.rewrites {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "data.rewrites points to {}, which does not exist",
                    path.display()
                )));
            }
        }
        let inputs = [
            ("data.conversations", &self.conversations),
            ("data.corpus", &self.corpus),
            ("data.qrels", &self.qrels),
            ("data.doc_map", &self.doc_map),
            ("encoder.archive_path", &self.archive_path),
        ];
        for (key, path) in inputs {
            if let Some(path) = path.as_deref().filter(|p| !p.exists()) {
                let source = std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{key}: no such file"),
                );
                return Err(Error::io(path, source));
            }
        }
        self.encoder
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.variants.is_empty() {
            return Err(Error::Config("search.variants is empty".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("search.k must be at least 1".into()));
        }
        if self.k < self.metrics.recall_depth {
            return Err(Error::Config(format!(
                "search.k = {} is below the recall depth {}; deeper metrics would be truncated",
                self.k, self.metrics.recall_depth
            )));
        }
        if self.probe_depth == Some(0) {
            return Err(Error::Config(
                "search.probe_depth must be at least 1".into(),
            ));
        }
        if self.metrics.ndcg_depth == 0 || self.metrics.recall_depth == 0 {
            return Err(Error::Config("metric depths must be at least 1".into()));
        }
        Ok(())
    }

    /// The path behind an optional key, or a configuration error naming it.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| {
            Error::Config(format!(
                "{key} is not set (config file or command-line flag)"
            ))
        })
    }
}
