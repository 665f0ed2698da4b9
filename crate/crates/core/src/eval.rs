//! TREC-style effectiveness metrics and MaxP document aggregation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::types::Ranking;
use crate::{Error, Result};

/// Graded relevance judgments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
    relevance_threshold: u32,
}

impl Default for QrelSet {
    fn default() -> Self {
        QrelSet::new(1)
    }
}

impl QrelSet {
    /// `relevance_threshold` is the minimum grade counted as relevant by
    /// recall.
    pub fn new(relevance_threshold: u32) -> Self {
        QrelSet {
            judgments: BTreeMap::new(),
            relevance_threshold,
        }
    }

    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> Result<()> {
        let (query_id, doc_id) = (query_id.into(), doc_id.into());
        let docs = self.judgments.entry(query_id.clone()).or_default();
        if docs.contains_key(&doc_id) {
            return Err(Error::Data(format!(
                "duplicate judgment for ({query_id}, {doc_id})"
            )));
        }
        docs.insert(doc_id, grade);
        Ok(())
    }

    pub fn relevance_threshold(&self) -> u32 {
        self.relevance_threshold
    }

    pub fn set_relevance_threshold(&mut self, threshold: u32) {
        self.relevance_threshold = threshold;
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.judgments.get(query_id).map_or(0, |docs| {
            docs.values()
                .filter(|&&g| g >= self.relevance_threshold)
                .count()
        })
    }
}

/// Gain assigned to a relevance grade by DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// `2^grade - 1`.
    #[default]
    Exponential,
    /// `grade`, as computed by `trec_eval`'s `ndcg_cut`.
    Linear,
}

impl Gain {
    pub fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => libm::exp2(f64::from(grade)) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

impl core::str::FromStr for Gain {
    type Err = crate::types::ParseNameError;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Gain::Exponential),
            "linear" | "trec_eval" => Ok(Gain::Linear),
            _ => Err(crate::types::ParseNameError(s.to_string())),
        }
    }
}

fn discount(rank: usize) -> f64 {
    libm::log2(rank as f64 + 1.0)
}

/// NDCG@k with exponential gain. Unjudged documents have grade 0; a query
/// with no positive judgments scores 0.
pub fn ndcg_at_k(ranking: &Ranking, qrels: &QrelSet, k: usize) -> f64 {
    ndcg_at_k_with(ranking, qrels, k, Gain::Exponential)
}

pub fn ndcg_at_k_with(ranking: &Ranking, qrels: &QrelSet, k: usize, gain: Gain) -> f64 {
    let Some(judged) = qrels.judged(ranking.query_id()) else {
        return 0.0;
    };
    let dcg: f64 = ranking
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.of(judged.get(d).copied().unwrap_or(0)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.of(g) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Fraction of the query's relevant documents (grade at or above the qrels'
/// threshold) found in the top `k`. Zero when nothing is relevant.
pub fn recall_at_k(ranking: &Ranking, qrels: &QrelSet, k: usize) -> f64 {
    let total = qrels.relevant_count(ranking.query_id());
    if total == 0 {
        return 0.0;
    }
    let threshold = qrels.relevance_threshold();
    let found = ranking
        .doc_ids()
        .take(k)
        .filter(|d| {
            qrels
                .grade(ranking.query_id(), d)
                .is_some_and(|g| g >= threshold)
        })
        .count();
    found as f64 / total as f64
}

/// Collapses a passage ranking to documents, each scored by its best passage.
pub fn maxp_aggregate(
    passage_ranking: &Ranking,
    doc_of: &BTreeMap<String, String>,
) -> Result<Ranking> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for e in passage_ranking.entries() {
        let doc = doc_of
            .get(&e.doc_id)
            .ok_or_else(|| Error::Data(format!("passage {} has no document mapping", e.doc_id)))?;
        best.entry(doc.as_str())
            .and_modify(|s| *s = s.max(e.score))
            .or_insert(e.score);
    }
    if best.is_empty() {
        return Ok(Ranking::empty(
            passage_ranking.query_id(),
            passage_ranking.depth(),
        ));
    }
    Ranking::from_scores(passage_ranking.query_id(), best, passage_ranking.depth())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub ndcg_depth: usize,
    pub recall_depth: usize,
    pub gain: Gain,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            ndcg_depth: 3,
            recall_depth: 100,
            gain: Gain::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueryMetrics {
    pub ndcg: f64,
    pub recall: f64,
}

/// Per-query and mean metrics of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub config: MetricConfig,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub mean: QueryMetrics,
    /// Run queries without any judgments; they score 0.
    pub unjudged_queries: Vec<String>,
}

/// Evaluates every ranking in `run`.
pub fn evaluate(run: &[Ranking], qrels: &QrelSet, config: MetricConfig) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    let mut unjudged = Vec::new();
    for ranking in run {
        let qid = ranking.query_id().to_string();
        if !qrels.contains_query(&qid) {
            unjudged.push(qid.clone());
        }
        let m = QueryMetrics {
            ndcg: ndcg_at_k_with(ranking, qrels, config.ndcg_depth, config.gain),
            recall: recall_at_k(ranking, qrels, config.recall_depth),
        };
        if per_query.insert(qid.clone(), m).is_some() {
            return Err(Error::Data(format!("query {qid} appears twice in the run")));
        }
    }
    let n = per_query.len().max(1) as f64;
    let mean = QueryMetrics {
        ndcg: per_query.values().map(|m| m.ndcg).sum::<f64>() / n,
        recall: per_query.values().map(|m| m.recall).sum::<f64>() / n,
    };
    Ok(MetricReport {
        config,
        per_query,
        mean,
        unjudged_queries: unjudged,
    })
}
