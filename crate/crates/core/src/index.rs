//! Token-level passage index and masked MaxSim search.
//!
//! A passage's score is the sum, over the query's matched tokens, of the best
//! inner product with any of the passage's tokens. Products and sums are
//! accumulated in `f64`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::query::QueryEncoding;
use crate::types::{Ranking, TokenMatrix};
use crate::vector::dot;
use crate::{Error, Result};

/// Immutable flat store of every passage token embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenIndex {
    passage_ids: Vec<String>,
    /// Row-major embeddings of all passage tokens.
    rows: Vec<f32>,
    /// Owning passage ordinal of each row.
    row_passage: Vec<u32>,
    /// `offsets[p]..offsets[p + 1]` are the rows of passage `p`.
    offsets: Vec<usize>,
    dim: usize,
}

impl TokenIndex {
    /// Builds an index from passages in the given order.
    pub fn build<'a, I, S>(dim: usize, passages: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, &'a TokenMatrix)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "index dimension must be positive".into(),
            ));
        }
        let mut index = TokenIndex {
            passage_ids: Vec::new(),
            rows: Vec::new(),
            row_passage: Vec::new(),
            offsets: alloc::vec![0],
            dim,
        };
        let mut seen = BTreeSet::new();
        for (id, matrix) in passages {
            let id = id.into();
            if matrix.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: matrix.dim(),
                });
            }
            if matrix.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "passage {id} has no tokens"
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Data(format!("duplicate passage id {id}")));
            }
            let ordinal = u32::try_from(index.passage_ids.len())
                .map_err(|_| Error::InvalidArgument("too many passages".into()))?;
            index.rows.extend_from_slice(matrix.as_slice());
            index
                .row_passage
                .extend(core::iter::repeat_n(ordinal, matrix.len()));
            index.offsets.push(index.row_passage.len());
            index.passage_ids.push(id);
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn passage_count(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn token_count(&self) -> usize {
        self.row_passage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passage_ids.is_empty()
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    /// Row-major token embeddings of passage `ordinal`.
    pub fn passage_rows(&self, ordinal: usize) -> &[f32] {
        &self.rows[self.offsets[ordinal] * self.dim..self.offsets[ordinal + 1] * self.dim]
    }

    fn row(&self, r: usize) -> &[f32] {
        &self.rows[r * self.dim..(r + 1) * self.dim]
    }
}

/// Masked MaxSim of `query` against a passage given as row-major embeddings.
pub fn score(query: &QueryEncoding, passage_rows: &[f32]) -> Result<f64> {
    let dim = query.dim();
    if passage_rows.is_empty() || !passage_rows.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!(
            "passage payload of {} values is not a non-empty multiple of dim {dim}",
            passage_rows.len()
        )));
    }
    Ok(masked_maxsim(query, passage_rows))
}

fn masked_maxsim(query: &QueryEncoding, passage_rows: &[f32]) -> f64 {
    let dim = query.dim();
    query
        .masked_rows()
        .map(|q| {
            passage_rows
                .chunks_exact(dim)
                .map(|d| dot(q, d))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

fn check_query(query: &QueryEncoding, index: &TokenIndex, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if query.dim() != index.dim() {
        return Err(Error::DimMismatch {
            expected: index.dim(),
            found: query.dim(),
        });
    }
    Ok(())
}

fn rank_ordinals<I>(
    query: &QueryEncoding,
    index: &TokenIndex,
    ordinals: I,
    k: usize,
) -> Result<Ranking>
where
    I: IntoIterator<Item = usize>,
{
    let scored = ordinals.into_iter().map(|p| {
        (
            index.passage_ids[p].as_str(),
            masked_maxsim(query, index.passage_rows(p)),
        )
    });
    Ranking::from_scores(query.query_id(), scored, k)
}

/// Scores every passage and returns the top `k`.
pub fn search_exact(query: &QueryEncoding, index: &TokenIndex, k: usize) -> Result<Ranking> {
    check_query(query, index, k)?;
    rank_ordinals(query, index, 0..index.passage_count(), k)
}

/// Candidate passages for two-stage search: the owners of the `probe_depth`
/// most similar store tokens of each matched query token. Similarity ties
/// resolve to the earlier row. Returned ordinals are sorted.
pub fn candidate_passages(
    query: &QueryEncoding,
    index: &TokenIndex,
    probe_depth: usize,
) -> Result<Vec<usize>> {
    if probe_depth == 0 {
        return Err(Error::InvalidArgument(
            "probe depth must be at least 1".into(),
        ));
    }
    if query.dim() != index.dim() {
        return Err(Error::DimMismatch {
            expected: index.dim(),
            found: query.dim(),
        });
    }
    let total = index.token_count();
    let mut hit = alloc::vec![false; index.passage_count()];
    if total == 0 {
        return Ok(Vec::new());
    }
    let depth = probe_depth.min(total);
    let mut sims: Vec<(f64, usize)> = Vec::with_capacity(total);
    for q in query.masked_rows() {
        sims.clear();
        sims.extend((0..total).map(|r| (dot(q, index.row(r)), r)));
        let by_sim = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if depth < total {
            sims.select_nth_unstable_by(depth - 1, by_sim);
        }
        for &(_, r) in &sims[..depth] {
            hit[index.row_passage[r] as usize] = true;
        }
    }
    Ok(hit
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(p, _)| p)
        .collect())
}

/// Retrieve-then-score: candidate generation by per-token nearest neighbours,
/// followed by exact MaxSim over the candidates.
pub fn search_two_stage(
    query: &QueryEncoding,
    index: &TokenIndex,
    k: usize,
    probe_depth: usize,
) -> Result<Ranking> {
    check_query(query, index, k)?;
    let candidates = candidate_passages(query, index, probe_depth)?;
    rank_ordinals(query, index, candidates, k)
}

/// Fraction of `exact`'s passages that also appear in `candidate_ids`.
/// `1.0` for an empty exact ranking.
pub fn candidate_recall<'a>(
    exact: &Ranking,
    candidate_ids: impl IntoIterator<Item = &'a str>,
) -> f64 {
    if exact.is_empty() {
        return 1.0;
    }
    let candidates: BTreeSet<&str> = candidate_ids.into_iter().collect();
    let found = exact.doc_ids().filter(|id| candidates.contains(id)).count();
    found as f64 / exact.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Variant;
    use crate::types::{Role, Token};
    use alloc::vec;

    fn matrix(rows: &[[f32; 2]], role: Role) -> TokenMatrix {
        let tokens = (0..rows.len())
            .map(|i| Token::new(format!("t{i}"), role).unwrap())
            .collect();
        TokenMatrix::new(tokens, rows.iter().flatten().copied().collect(), 2).unwrap()
    }

    fn query(rows: &[[f32; 2]], mask: Vec<bool>) -> QueryEncoding {
        QueryEncoding::new("q", matrix(rows, Role::LastTurn), mask, Variant::Zeco2).unwrap()
    }

    #[test]
    fn score_examples() {
        let passage = [1.0, 0.0, 0.0, -1.0];
        let q = query(&[[1.0, 0.0], [0.0, 1.0]], vec![true, true]);
        assert_eq!(score(&q, &passage).unwrap(), 1.0);
        let q = query(&[[1.0, 0.0], [0.0, 1.0]], vec![true, false]);
        assert_eq!(score(&q, &passage).unwrap(), 1.0);
        assert!(score(&q, &[1.0, 0.0, 0.0]).is_err());
        assert!(score(&q, &[]).is_err());
    }

    #[test]
    fn single_passage_index() {
        let p = matrix(&[[1.0, 0.0]], Role::Doc);
        let index = TokenIndex::build(2, [("p", &p)]).unwrap();
        let q = query(&[[0.0, 1.0]], vec![true]);
        assert_eq!(search_exact(&q, &index, 10).unwrap().len(), 1);
        assert!(search_exact(&q, &index, 0).is_err());
    }

    #[test]
    fn empty_index_gives_empty_ranking() {
        let index = TokenIndex::build::<_, &str>(2, []).unwrap();
        let q = query(&[[0.0, 1.0]], vec![true]);
        assert!(search_exact(&q, &index, 3).unwrap().is_empty());
        assert!(search_two_stage(&q, &index, 3, 5).unwrap().is_empty());
    }

    #[test]
    fn build_rejects_bad_input() {
        let p = matrix(&[[1.0, 0.0]], Role::Doc);
        assert!(TokenIndex::build(2, [("a", &p), ("a", &p)]).is_err());
        assert!(matches!(
            TokenIndex::build(3, [("a", &p)]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn probe_depth_one_finds_exact_match() {
        let a = matrix(&[[0.6, 0.8], [0.8, 0.6]], Role::Doc);
        let b = matrix(&[[1.0, 0.0]], Role::Doc);
        let c = matrix(&[[0.0, 1.0]], Role::Doc);
        let index = TokenIndex::build(2, [("a", &a), ("b", &b), ("c", &c)]).unwrap();
        let q = query(&[[1.0, 0.0]], vec![true]);
        let r = search_two_stage(&q, &index, 3, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.entries()[0].doc_id, "b");
        assert_eq!(candidate_passages(&q, &index, 1).unwrap(), [1]);
        assert_eq!(r.entries(), search_exact(&q, &index, 1).unwrap().entries());
    }

    #[test]
    fn full_probe_equals_exact() {
        let a = matrix(&[[0.6, 0.8], [0.8, 0.6]], Role::Doc);
        let b = matrix(&[[1.0, 0.0]], Role::Doc);
        let index = TokenIndex::build(2, [("a", &a), ("b", &b)]).unwrap();
        let q = query(&[[0.0, 1.0], [1.0, 0.0]], vec![true, true]);
        assert_eq!(
            search_two_stage(&q, &index, 2, index.token_count()).unwrap(),
            search_exact(&q, &index, 2).unwrap()
        );
    }

    #[test]
    fn candidate_recall_counts_overlap() {
        let exact = Ranking::from_scores("q", [("a", 2.0), ("b", 1.0)], 2).unwrap();
        assert_eq!(candidate_recall(&exact, ["a", "z"]), 0.5);
        assert_eq!(candidate_recall(&Ranking::empty("q", 1), ["a"]), 1.0);
    }
}
