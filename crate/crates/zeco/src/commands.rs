//! The `zeco` workflow: index, search, eval, analyze and ttest.
//!
//! Each command takes an [`ExperimentConfig`] (already merged with
//! command-line overrides), does its work and writes its outputs. Outputs are
//! deterministic for fixed inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeco_core::analysis::{
    aggregate_drift, best_closest_match, delta_recall_per_query, delta_sim, history_encodings,
    prepare_case, random_term_control, token_drift, ControlTable, DriftSummary,
};
use zeco_core::encoder::{ArchiveEncoder, EmbeddingArchive, Encoder, Provider, ToyEncoder};
use zeco_core::eval::{evaluate, maxp_aggregate, MetricReport, QrelSet};
use zeco_core::index::{search_exact, search_two_stage, TokenIndex};
use zeco_core::query::{encode_variant, Variant};
use zeco_core::stats::{paired_t_test, pearson, Correlation, TTest};
use zeco_core::{Conversation, Ranking, TokenMatrix};

use crate::archive::{decode_archive, encode_archive, read_archive};
use crate::config::ExperimentConfig;
use crate::conversations::{apply_rewrites, load_conversations, load_rewrites};
use crate::corpus::{load_corpus, load_doc_map};
use crate::tables::{write_cases_csv, write_control_csv, write_drift_csv, CaseRow};
use crate::trec::{read_qrels, read_run, read_values, write_run_file};
use crate::{Error, Result};

pub const ARCHIVE_FILE: &str = "passages.zeco";
pub const MANIFEST_FILE: &str = "manifest.json";

pub type DynEncoder = Box<dyn Encoder + Send + Sync>;

pub fn make_encoder(cfg: &ExperimentConfig) -> Result<DynEncoder> {
    cfg.encoder
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    match cfg.encoder.provider {
        Provider::Toy => Ok(Box::new(ToyEncoder::new(cfg.encoder.clone())?)),
        Provider::File => {
            let path = cfg.require("encoder.archive_path", &cfg.archive_path)?;
            let archive = read_archive(path)?;
            if archive.dim() != cfg.encoder.dim {
                return Err(Error::Config(format!(
                    "archive {} has dim {} but encoder.dim is {}",
                    path.display(),
                    archive.dim(),
                    cfg.encoder.dim
                )));
            }
            Ok(Box::new(ArchiveEncoder::new(archive)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub passage_count: usize,
    pub token_count: usize,
    pub dim: usize,
    pub provider: String,
    pub archive_sha256: String,
    pub passage_ids: Vec<String>,
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes the corpus and writes `passages.zeco` and `manifest.json` to the
/// index directory.
pub fn cmd_index(cfg: &ExperimentConfig) -> Result<IndexManifest> {
    cfg.validate()?;
    let corpus = load_corpus(cfg.require("data.corpus", &cfg.corpus)?)?;
    if corpus.is_empty() {
        return Err(Error::Data("empty corpus".into()));
    }
    let encoder = make_encoder(cfg)?;
    let passages: Vec<(&str, &str)> = corpus.iter().collect();
    let encoded: Vec<TokenMatrix> = passages
        .par_iter()
        .map(|(id, text)| encoder.encode_passage(id, text))
        .collect::<std::result::Result<_, _>>()?;
    let mut archive = EmbeddingArchive::new(encoder.dim())?;
    for ((id, _), m) in passages.iter().zip(encoded) {
        archive.push(*id, m)?;
    }
    let bytes = encode_archive(&archive)?;
    let manifest = IndexManifest {
        passage_count: archive.len(),
        token_count: archive.records().iter().map(|r| r.matrix.len()).sum(),
        dim: archive.dim(),
        provider: cfg.encoder.provider.to_string(),
        archive_sha256: hex_sha256(&bytes),
        passage_ids: archive.records().iter().map(|r| r.id.clone()).collect(),
    };
    create_dir(&cfg.index_dir)?;
    write_file(&cfg.index_dir.join(ARCHIVE_FILE), &bytes)?;
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    write_file(&cfg.index_dir.join(MANIFEST_FILE), &json)?;
    log::info!(
        "indexed {} passages ({} tokens)",
        manifest.passage_count,
        manifest.token_count
    );
    Ok(manifest)
}

/// Reads an index directory written by [`cmd_index`], checking the archive
/// against the manifest checksum.
pub fn load_index(dir: &Path) -> Result<(TokenIndex, IndexManifest)> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: IndexManifest = serde_json::from_slice(&text).map_err(|e| Error::Parse {
        path: mpath.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let apath = dir.join(ARCHIVE_FILE);
    let bytes = fs::read(&apath).map_err(|e| Error::io(&apath, e))?;
    if hex_sha256(&bytes) != manifest.archive_sha256 {
        return Err(Error::Data(format!(
            "{} does not match the manifest checksum",
            apath.display()
        )));
    }
    let archive = decode_archive(&bytes)?;
    let index = TokenIndex::build(
        archive.dim(),
        archive.records().iter().map(|r| (r.id.clone(), &r.matrix)),
    )?;
    Ok((index, manifest))
}

/// Loads conversations, attaching rewrites from `data.rewrites` when set.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<Conversation>> {
    let convs = load_conversations(cfg.require("data.conversations", &cfg.conversations)?)?;
    match &cfg.rewrites {
        None => Ok(convs),
        Some(path) => apply_rewrites(convs, &load_rewrites(path)?),
    }
}

fn all_turns(convs: &[Conversation]) -> Vec<(&Conversation, usize)> {
    convs
        .iter()
        .flat_map(|c| (1..=c.len()).map(move |t| (c, t)))
        .collect()
}

/// Runs `f` over every turn in parallel. Failures are collected and reported
/// together, naming each query.
fn per_turn<'a, T, F>(convs: &'a [Conversation], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&'a Conversation, usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = all_turns(convs)
        .into_par_iter()
        .map(|(c, t)| f(c, t))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, (c, t)) in results.into_iter().zip(all_turns(convs)) {
        match r {
            Ok(v) => out.push(v),
            Err(e) => failures.push((c.query_id(t), e)),
        }
    }
    match failures.len() {
        0 => Ok(out),
        1 => Err(failures
            .pop()
            .map(|(_, e)| e)
            .unwrap_or_else(|| Error::Internal("lost error".into()))),
        n => {
            let detail: Vec<String> = failures.iter().map(|(q, e)| format!("{q}: {e}")).collect();
            Err(Error::Data(format!(
                "{n} queries failed: {}",
                detail.join("; ")
            )))
        }
    }
}

/// Ranks the corpus for every turn with one query variant.
pub fn run_variant<E: Encoder + Sync + ?Sized>(
    convs: &[Conversation],
    encoder: &E,
    index: &TokenIndex,
    variant: Variant,
    cfg: &ExperimentConfig,
) -> Result<Vec<Ranking>> {
    per_turn(convs, |c, t| {
        let q = encode_variant(c, t, variant, encoder, cfg.use_responses)?;
        let r = match cfg.probe_depth {
            Some(depth) => search_two_stage(&q, index, cfg.k, depth)?,
            None => search_exact(&q, index, cfg.k)?,
        };
        Ok(r)
    })
}

pub fn run_path(out_dir: &Path, variant: Variant) -> PathBuf {
    out_dir.join(format!("{}.run", variant.name()))
}

/// Searches with every configured variant and writes one run file per
/// variant, tagged with the variant name.
pub fn cmd_search(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let convs = load_dataset(cfg)?;
    let (index, manifest) = load_index(&cfg.index_dir)?;
    let encoder = make_encoder(cfg)?;
    if encoder.dim() != index.dim() {
        return Err(Error::Config(format!(
            "index has dim {} but the encoder produces dim {}",
            index.dim(),
            encoder.dim()
        )));
    }
    if manifest.provider != cfg.encoder.provider.to_string() {
        log::warn!(
            "index built with provider {} but searching with {}",
            manifest.provider,
            cfg.encoder.provider
        );
    }
    create_dir(&cfg.output_dir)?;
    let mut paths = Vec::new();
    for &variant in &cfg.variants {
        let run = run_variant(&convs, encoder.as_ref(), &index, variant, cfg)?;
        let path = run_path(&cfg.output_dir, variant);
        write_run_file(&path, &run, variant.name())?;
        log::info!("{variant}: {} queries -> {}", run.len(), path.display());
        paths.push(path);
    }
    Ok(paths)
}

fn doc_map(cfg: &ExperimentConfig) -> Result<BTreeMap<String, String>> {
    if let Some(path) = &cfg.doc_map {
        return load_doc_map(path);
    }
    if let Some(path) = &cfg.corpus {
        if let Some(map) = load_corpus(path)?.doc_of() {
            return Ok(map.clone());
        }
    }
    Err(Error::Config(
        "eval.maxp needs data.doc_map or a corpus with a document column".into(),
    ))
}

fn load_scored_run(path: &Path, doc_of: Option<&BTreeMap<String, String>>) -> Result<Vec<Ranking>> {
    let run = read_run(path)?;
    match doc_of {
        None => Ok(run),
        Some(map) => run.iter().map(|r| Ok(maxp_aggregate(r, map)?)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub a: MetricReport,
    pub b: Option<MetricReport>,
    /// Paired t-tests of B against A for NDCG and recall.
    pub tests: Option<[TTest; 2]>,
}

impl EvalOutcome {
    pub fn render(&self) -> String {
        let c = self.a.config;
        let (nd, rd) = (
            format!("ndcg@{}", c.ndcg_depth),
            format!("recall@{}", c.recall_depth),
        );
        let mut s = String::new();
        match &self.b {
            None => {
                let _ = writeln!(s, "query\t{nd}\t{rd}");
                for (q, m) in &self.a.per_query {
                    let _ = writeln!(s, "{q}\t{:.4}\t{:.4}", m.ndcg, m.recall);
                }
                let _ = writeln!(
                    s,
                    "mean\t{:.4}\t{:.4}",
                    self.a.mean.ndcg, self.a.mean.recall
                );
            }
            Some(b) => {
                let _ = writeln!(s, "query\t{nd}_a\t{nd}_b\t{rd}_a\t{rd}_b");
                for (q, m) in &self.a.per_query {
                    let mb = b.per_query[q];
                    let _ = writeln!(
                        s,
                        "{q}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                        m.ndcg, mb.ndcg, m.recall, mb.recall
                    );
                }
                let _ = writeln!(s, "\nmetric\tmean_a\tmean_b\tdelta\tt\tp");
                let means = [
                    (&nd, self.a.mean.ndcg, b.mean.ndcg),
                    (&rd, self.a.mean.recall, b.mean.recall),
                ];
                for ((name, ma, mb), test) in means.into_iter().zip(self.tests.iter().flatten()) {
                    let mark = if test.significant(0.05) { "*" } else { "" };
                    let _ = writeln!(
                        s,
                        "{name}\t{ma:.4}\t{mb:.4}\t{:+.4}\t{:.4}\t{:.4}{mark}",
                        mb - ma,
                        test.t,
                        test.p
                    );
                }
            }
        }
        s
    }
}

/// Evaluates run A, and optionally compares run B against it with paired
/// t-tests over the shared queries.
pub fn cmd_eval(cfg: &ExperimentConfig, run_a: &Path, run_b: Option<&Path>) -> Result<EvalOutcome> {
    cfg.validate()?;
    let qrels = read_qrels(
        cfg.require("data.qrels", &cfg.qrels)?,
        cfg.relevance_threshold,
    )?;
    let doc_of = if cfg.maxp { Some(doc_map(cfg)?) } else { None };
    let a = evaluate(
        &load_scored_run(run_a, doc_of.as_ref())?,
        &qrels,
        cfg.metrics,
    )?;
    warn_unjudged(run_a, &a);
    let Some(run_b) = run_b else {
        return Ok(EvalOutcome {
            a,
            b: None,
            tests: None,
        });
    };
    let b = evaluate(
        &load_scored_run(run_b, doc_of.as_ref())?,
        &qrels,
        cfg.metrics,
    )?;
    warn_unjudged(run_b, &b);
    if !a.per_query.keys().eq(b.per_query.keys()) {
        return Err(Error::Data(format!(
            "{} and {} cover different queries",
            run_a.display(),
            run_b.display()
        )));
    }
    let pick = |r: &MetricReport, f: fn(&zeco_core::eval::QueryMetrics) -> f64| -> Vec<f64> {
        r.per_query.values().map(f).collect()
    };
    let tests = [
        paired_t_test(&pick(&a, |m| m.ndcg), &pick(&b, |m| m.ndcg))?,
        paired_t_test(&pick(&a, |m| m.recall), &pick(&b, |m| m.recall))?,
    ];
    Ok(EvalOutcome {
        a,
        b: Some(b),
        tests: Some(tests),
    })
}

fn warn_unjudged(path: &Path, report: &MetricReport) {
    if !report.unjudged_queries.is_empty() {
        log::warn!(
            "{}: {} queries have no judgments and score 0: {}",
            path.display(),
            report.unjudged_queries.len(),
            report.unjudged_queries.join(", ")
        );
    }
}

/// Paired t-test between two `query_id value` files.
pub fn cmd_ttest(a: &Path, b: &Path) -> Result<TTest> {
    let (va, vb) = (read_values(a)?, read_values(b)?);
    if !va.keys().eq(vb.keys()) {
        return Err(Error::Data(format!(
            "{} and {} cover different queries",
            a.display(),
            b.display()
        )));
    }
    let xs: Vec<f64> = va.values().copied().collect();
    let ys: Vec<f64> = vb.values().copied().collect();
    Ok(paired_t_test(&xs, &ys)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    pub drift: DriftSummary,
    pub cases: Vec<CaseRow>,
    /// Rewritten non-first turns that produced no usable case.
    pub cases_skipped: usize,
    pub control: ControlTable,
    /// Pearson correlation of delta_sim and delta_recall; needs at least three
    /// cases with non-constant values.
    pub correlation: Option<Correlation>,
}

impl AnalysisOutcome {
    pub fn summary(&self) -> String {
        let corr = match &self.correlation {
            Some(c) => format!("pearson_r={:.4} pearson_p={:.4}", c.r, c.p),
            None => "pearson_r=n/a pearson_p=n/a".into(),
        };
        format!(
            "cases={} skipped={} drift_macro={:.4} drift_micro={:.4} {corr} control_used={}",
            self.cases.len(),
            self.cases_skipped,
            self.drift.macro_avg,
            self.drift.micro_avg,
            self.control.cases_used
        )
    }
}

/// Token drift, anaphora cases and the random-term control. Writes
/// `drift.csv`, `cases.csv`, `control.csv` and `summary.txt` to the output
/// directory.
pub fn cmd_analyze(
    cfg: &ExperimentConfig,
    run_baseline: &Path,
    run_zeco2: &Path,
) -> Result<AnalysisOutcome> {
    cfg.validate()?;
    let convs = load_dataset(cfg)?;
    if convs.is_empty() {
        return Err(Error::Data("no conversations".into()));
    }
    let rewritten = |c: &Conversation, t: usize| c.turns()[t - 1].human_rewrite.is_some();
    if !all_turns(&convs).iter().any(|&(c, t)| rewritten(c, t)) {
        return Err(Error::Config(
            "no human rewrites found; set data.rewrites to a query_id<TAB>rewrite file \
             or add human_rewrite to the conversations"
                .into(),
        ));
    }
    let qrels: QrelSet = read_qrels(
        cfg.require("data.qrels", &cfg.qrels)?,
        cfg.relevance_threshold,
    )?;
    let encoder = make_encoder(cfg)?;
    let encoder = encoder.as_ref();

    let samples = per_turn(&convs, |c, t| {
        Ok(token_drift(c, t, encoder, cfg.use_responses)?)
    })?;
    let drift = aggregate_drift(&samples.concat())?;

    let (base, zeco2) = (read_run(run_baseline)?, read_run(run_zeco2)?);
    let delta_recall = delta_recall_per_query(&base, &zeco2, &qrels, cfg.metrics.recall_depth)?;

    let prepared = per_turn(&convs, |c, t| {
        let Some(case) = prepare_case(c, t, encoder, cfg.use_responses)? else {
            return Ok(None);
        };
        let history = history_encodings(c, t, encoder)?;
        let refs: Vec<(usize, &TokenMatrix)> = history.iter().map(|(t, m)| (*t, m)).collect();
        let last = best_closest_match(&case.anaphora_last_turn, &refs).ok();
        let zeco = best_closest_match(&case.anaphora_zeco2, &refs).ok();
        Ok(Some((case, last, zeco)))
    })?;
    let candidates = all_turns(&convs)
        .iter()
        .filter(|&&(c, t)| t > 1 && rewritten(c, t))
        .count();

    let mut cases = Vec::new();
    let mut embeddings = Vec::new();
    for (case, last, zeco) in prepared.into_iter().flatten() {
        let Some(ds) = delta_sim(&case) else { continue };
        let dr = *delta_recall.get(&case.query_id).ok_or_else(|| {
            Error::Data(format!("query {} is missing from the runs", case.query_id))
        })?;
        cases.push(CaseRow {
            query_id: case.query_id.clone(),
            anaphora: case.anaphora.clone(),
            resolution: case.resolution.clone(),
            delta_sim: ds,
            delta_recall: dr,
            closest_last_turn: last,
            closest_zeco2: zeco,
        });
        embeddings.push(case);
    }
    let control = random_term_control(&embeddings, encoder, cfg.seed)?;

    let correlation = if cases.len() >= 3 {
        let xs: Vec<f64> = cases.iter().map(|c| c.delta_sim).collect();
        let ys: Vec<f64> = cases.iter().map(|c| c.delta_recall).collect();
        match pearson(&xs, &ys) {
            Ok(c) => Some(c),
            Err(zeco_core::Error::UndefinedCorrelation(why)) => {
                log::warn!("correlation undefined: {why}");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    if cases.is_empty() {
        log::warn!("no anaphora cases found");
    }

    let outcome = AnalysisOutcome {
        drift,
        cases_skipped: candidates - cases.len(),
        cases,
        control,
        correlation,
    };
    let out = &cfg.output_dir;
    create_dir(out)?;
    write_drift_csv(&out.join("drift.csv"), &outcome.drift)?;
    write_cases_csv(&out.join("cases.csv"), &outcome.cases)?;
    write_control_csv(&out.join("control.csv"), &outcome.control)?;
    write_file(
        &out.join("summary.txt"),
        format!("{}\n", outcome.summary()).as_bytes(),
    )?;
    Ok(outcome)
}
