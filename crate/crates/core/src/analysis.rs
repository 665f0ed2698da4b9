//! Embedding-space analyses of conversational contextualization.
//!
//! - Token drift: `1 - cos` between a last-utterance token encoded with and
//!   without the conversation.
//! - Closest match: the history token nearest to an anaphora embedding.
//! - Anaphora/resolution similarity shift (`delta_sim`): how much closer the
//!   contextualized anaphora gets to the terms a human rewrite substituted
//!   for it, and a random-term control for the same measurement.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{is_punctuation, tokenize, Encoder};
use crate::eval::{recall_at_k, QrelSet};
use crate::query::{encode_variant, Variant};
use crate::types::{Conversation, Ranking, Role, TokenMatrix};
use crate::vector::cosine;
use crate::{Error, Result};

/// Drift of one last-utterance token occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSample {
    pub token: String,
    pub drift: f64,
}

/// Positions of the last utterance within an encoding: the contiguous run of
/// last-turn tokens plus a directly following separator, if any.
fn last_turn_span(matrix: &TokenMatrix) -> Result<Range<usize>> {
    let tokens = matrix.tokens();
    let first = tokens
        .iter()
        .position(|t| t.role() == Role::LastTurn)
        .ok_or_else(|| Error::Internal("encoding has no last-turn tokens".into()))?;
    let mut end = first;
    while end < tokens.len() && tokens[end].role() == Role::LastTurn {
        end += 1;
    }
    if tokens[end..].iter().any(|t| t.role() == Role::LastTurn) {
        return Err(Error::Internal(
            "last-turn tokens are not contiguous".into(),
        ));
    }
    if end < tokens.len() && tokens[end].role() == Role::Sep {
        end += 1;
    }
    Ok(first..end)
}

/// Aligned last-utterance spans of the contextualized and standalone encodings.
fn aligned_spans(
    contextual: &TokenMatrix,
    standalone: &TokenMatrix,
) -> Result<(Range<usize>, Range<usize>)> {
    let (zs, ls) = (last_turn_span(contextual)?, last_turn_span(standalone)?);
    let z_texts = contextual.tokens()[zs.clone()].iter().map(|t| t.text());
    let l_texts = standalone.tokens()[ls.clone()].iter().map(|t| t.text());
    if zs.len() != ls.len() || !z_texts.eq(l_texts) {
        return Err(Error::Internal(format!(
            "last-turn spans differ between encodings ({} vs {} tokens)",
            zs.len(),
            ls.len()
        )));
    }
    Ok((zs, ls))
}

/// Per-token drift of turn `t`'s utterance, matched by position.
pub fn token_drift<E: Encoder + ?Sized>(
    conversation: &Conversation,
    t: usize,
    encoder: &E,
    use_responses: bool,
) -> Result<Vec<DriftSample>> {
    let z = encode_variant(conversation, t, Variant::Zeco2, encoder, use_responses)?;
    let l = encode_variant(conversation, t, Variant::LastTurn, encoder, use_responses)?;
    let (zm, lm) = (z.matrix(), l.matrix());
    let (zs, ls) = aligned_spans(zm, lm)?;
    Ok(zs
        .zip(ls)
        .map(|(i, j)| DriftSample {
            token: String::from(zm.tokens()[i].text()),
            drift: 1.0 - cosine(zm.row(i), lm.row(j)),
        })
        .collect())
}

/// Drift statistics of one token text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDriftRecord {
    pub token: String,
    pub frequency: usize,
    pub mean_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSummary {
    /// Sorted by mean drift descending, then token.
    pub records: Vec<TokenDriftRecord>,
    /// Mean over distinct tokens of their mean drift.
    pub macro_avg: f64,
    /// Mean over all occurrences.
    pub micro_avg: f64,
}

pub fn aggregate_drift(samples: &[DriftSample]) -> Result<DriftSummary> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "no drift samples to aggregate".into(),
        ));
    }
    let mut by_token: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for s in samples {
        let e = by_token.entry(s.token.as_str()).or_default();
        e.0 += 1;
        e.1 += s.drift;
    }
    let mut records: Vec<TokenDriftRecord> = by_token
        .into_iter()
        .map(|(token, (frequency, sum))| TokenDriftRecord {
            token: String::from(token),
            frequency,
            mean_drift: sum / frequency as f64,
        })
        .collect();
    records.sort_by(|a, b| {
        b.mean_drift
            .total_cmp(&a.mean_drift)
            .then_with(|| a.token.cmp(&b.token))
    });
    let macro_avg = records.iter().map(|r| r.mean_drift).sum::<f64>() / records.len() as f64;
    let micro_avg = samples.iter().map(|s| s.drift).sum::<f64>() / samples.len() as f64;
    Ok(DriftSummary {
        records,
        macro_avg,
        micro_avg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosestMatch {
    pub turn_id: usize,
    pub position: usize,
    pub token: String,
    pub similarity: f64,
}

/// History token with the highest cosine to `embedding`. `history` pairs a
/// turn id with that turn's encoding; ties go to the lowest
/// `(turn_id, position)`.
pub fn closest_match(embedding: &[f32], history: &[(usize, &TokenMatrix)]) -> Result<ClosestMatch> {
    let mut turns: Vec<&(usize, &TokenMatrix)> = history.iter().collect();
    turns.sort_by_key(|(turn_id, _)| *turn_id);
    let mut best: Option<ClosestMatch> = None;
    for &&(turn_id, matrix) in &turns {
        for (position, row) in matrix.rows().enumerate() {
            let similarity = cosine(embedding, row);
            if best.as_ref().is_none_or(|b| similarity > b.similarity) {
                best = Some(ClosestMatch {
                    turn_id,
                    position,
                    token: String::from(matrix.tokens()[position].text()),
                    similarity,
                });
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("closest match needs a non-empty history".into()))
}

/// Terms the human rewrite removed (anaphora) and added (resolution).
///
/// Both texts are tokenized and compared as multisets; punctuation-only
/// tokens are dropped. Order follows the source text.
pub fn extract_anaphora_resolution(utterance: &str, rewrite: &str) -> (Vec<String>, Vec<String>) {
    fn difference(from: &[String], remove: &[String]) -> Vec<String> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in remove {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        from.iter()
            .filter(|t| match counts.get_mut(t.as_str()) {
                Some(c) if *c > 0 => {
                    *c -= 1;
                    false
                }
                _ => true,
            })
            .filter(|t| !is_punctuation(t))
            .cloned()
            .collect()
    }
    let (u, r) = (tokenize(utterance), tokenize(rewrite));
    (difference(&u, &r), difference(&r, &u))
}

/// Highest cosine over all pairs.
pub fn max_pair_similarity<A: AsRef<[f32]>, B: AsRef<[f32]>>(a: &[A], b: &[B]) -> Option<f64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| cosine(x.as_ref(), y.as_ref())))
        .reduce(f64::max)
}

/// `max sim(A_contextual, R) - max sim(A_standalone, R)`; `None` when any
/// side is empty.
pub fn delta_sim_rows<A: AsRef<[f32]>, B: AsRef<[f32]>, C: AsRef<[f32]>>(
    anaphora_contextual: &[A],
    anaphora_standalone: &[B],
    resolution: &[C],
) -> Option<f64> {
    let z = max_pair_similarity(anaphora_contextual, resolution)?;
    let l = max_pair_similarity(anaphora_standalone, resolution)?;
    Some(z - l)
}

/// Everything the similarity analyses need about one rewritten turn.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEmbeddings {
    pub query_id: String,
    pub turn: usize,
    pub anaphora: Vec<String>,
    pub resolution: Vec<String>,
    /// Anaphora rows from the contextualized encoding.
    pub anaphora_zeco2: Vec<Vec<f32>>,
    /// Anaphora rows from the standalone utterance encoding.
    pub anaphora_last_turn: Vec<Vec<f32>>,
    /// Rows of every resolution term, each term encoded on its own.
    pub resolution_rows: Vec<Vec<f32>>,
    /// Candidate random terms: non-punctuation, non-anaphora tokens of earlier
    /// utterances.
    pub random_pool: Vec<String>,
}

/// Builds the case for turn `t`, or `None` when the turn has no rewrite, is
/// the first turn, or yields no anaphora/resolution terms.
pub fn prepare_case<E: Encoder + ?Sized>(
    conversation: &Conversation,
    t: usize,
    encoder: &E,
    use_responses: bool,
) -> Result<Option<CaseEmbeddings>> {
    let turn = conversation.turn(t)?;
    let Some(rewrite) = turn.human_rewrite.as_deref() else {
        return Ok(None);
    };
    if t == 1 {
        return Ok(None);
    }
    let (anaphora, resolution) = extract_anaphora_resolution(&turn.utterance, rewrite);
    if anaphora.is_empty() || resolution.is_empty() {
        return Ok(None);
    }

    let z = encode_variant(conversation, t, Variant::Zeco2, encoder, use_responses)?;
    let l = encode_variant(conversation, t, Variant::LastTurn, encoder, use_responses)?;
    let (zm, lm) = (z.matrix(), l.matrix());
    let (zs, ls) = aligned_spans(zm, lm)?;
    let wanted: BTreeSet<&str> = anaphora.iter().map(String::as_str).collect();
    let mut anaphora_zeco2 = Vec::new();
    let mut anaphora_last_turn = Vec::new();
    for (i, j) in zs.zip(ls) {
        if wanted.contains(zm.tokens()[i].text()) {
            anaphora_zeco2.push(zm.row(i).to_vec());
            anaphora_last_turn.push(lm.row(j).to_vec());
        }
    }
    if anaphora_zeco2.is_empty() {
        return Ok(None);
    }

    let mut resolution_rows = Vec::new();
    for term in &resolution {
        let m = encoder.encode_term(term)?;
        resolution_rows.extend(m.rows().map(<[f32]>::to_vec));
    }

    let random_pool = conversation.turns()[..t - 1]
        .iter()
        .flat_map(|prior| tokenize(&prior.utterance))
        .filter(|tok| !is_punctuation(tok) && !wanted.contains(tok.as_str()))
        .collect();

    Ok(Some(CaseEmbeddings {
        query_id: conversation.query_id(t),
        turn: t,
        anaphora,
        resolution,
        anaphora_zeco2,
        anaphora_last_turn,
        resolution_rows,
        random_pool,
    }))
}

/// Similarity shift of the case's anaphora towards its resolution.
pub fn delta_sim(case: &CaseEmbeddings) -> Option<f64> {
    delta_sim_rows(
        &case.anaphora_zeco2,
        &case.anaphora_last_turn,
        &case.resolution_rows,
    )
}

/// Encodings of turns `1..t`, each utterance encoded on its own.
pub fn history_encodings<E: Encoder + ?Sized>(
    conversation: &Conversation,
    t: usize,
    encoder: &E,
) -> Result<Vec<(usize, TokenMatrix)>> {
    conversation.turn(t)?;
    (1..t)
        .map(|prior| {
            let q = encode_variant(conversation, prior, Variant::LastTurn, encoder, false)?;
            Ok((prior, q.matrix().clone()))
        })
        .collect()
}

/// The best [`closest_match`] over several anaphora rows.
pub fn best_closest_match<A: AsRef<[f32]>>(
    anaphora_rows: &[A],
    history: &[(usize, &TokenMatrix)],
) -> Result<ClosestMatch> {
    let mut best: Option<ClosestMatch> = None;
    for row in anaphora_rows {
        let m = closest_match(row.as_ref(), history)?;
        if best.as_ref().is_none_or(|b| m.similarity > b.similarity) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no anaphora rows".into()))
}

/// Mean anaphora similarity to resolutions and to random terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityPair {
    pub resolution: f64,
    pub random: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTable {
    pub last_turn: SimilarityPair,
    pub zeco2: SimilarityPair,
    pub cases_used: usize,
    /// Cases without any eligible random term.
    pub cases_skipped: usize,
}

/// Compares anaphora→resolution similarity with anaphora→random-term
/// similarity, for both anaphora encodings.
///
/// One random term is drawn uniformly per case from its pool with a ChaCha8
/// generator seeded by `seed`, then encoded on its own. Means are NaN when no
/// case is usable.
pub fn random_term_control<E: Encoder + ?Sized>(
    cases: &[CaseEmbeddings],
    encoder: &E,
    seed: u64,
) -> Result<ControlTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = [0.0f64; 4];
    let (mut used, mut skipped) = (0usize, 0usize);
    for case in cases {
        if case.random_pool.is_empty() {
            skipped += 1;
            continue;
        }
        let term = &case.random_pool[rng.random_range(0..case.random_pool.len())];
        let random_rows: Vec<Vec<f32>> = encoder
            .encode_term(term)?
            .rows()
            .map(<[f32]>::to_vec)
            .collect();
        let sims = [
            max_pair_similarity(&case.anaphora_last_turn, &case.resolution_rows),
            max_pair_similarity(&case.anaphora_last_turn, &random_rows),
            max_pair_similarity(&case.anaphora_zeco2, &case.resolution_rows),
            max_pair_similarity(&case.anaphora_zeco2, &random_rows),
        ];
        if sims.iter().any(Option::is_none) {
            skipped += 1;
            continue;
        }
        for (s, v) in sums.iter_mut().zip(sims) {
            *s += v.unwrap_or_default();
        }
        used += 1;
    }
    let n = used as f64;
    let mean = |i: usize| if used == 0 { f64::NAN } else { sums[i] / n };
    Ok(ControlTable {
        last_turn: SimilarityPair {
            resolution: mean(0),
            random: mean(1),
        },
        zeco2: SimilarityPair {
            resolution: mean(2),
            random: mean(3),
        },
        cases_used: used,
        cases_skipped: skipped,
    })
}

/// One row of the anaphora case table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnaphoraCase {
    pub query_id: String,
    pub anaphora: Vec<String>,
    pub resolution: Vec<String>,
    pub delta_sim: f64,
    pub delta_recall: f64,
}

/// `recall@k(b) - recall@k(a)` per query. Both runs must cover the same
/// queries.
pub fn delta_recall_per_query(
    run_a: &[Ranking],
    run_b: &[Ranking],
    qrels: &QrelSet,
    k: usize,
) -> Result<BTreeMap<String, f64>> {
    let a: BTreeMap<&str, &Ranking> = run_a.iter().map(|r| (r.query_id(), r)).collect();
    let b: BTreeMap<&str, &Ranking> = run_b.iter().map(|r| (r.query_id(), r)).collect();
    let only_a: Vec<&str> = a.keys().filter(|q| !b.contains_key(*q)).copied().collect();
    let only_b: Vec<&str> = b.keys().filter(|q| !a.contains_key(*q)).copied().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(Error::Data(format!(
            "runs cover different queries; only in first: [{}]; only in second: [{}]",
            only_a.join(", "),
            only_b.join(", ")
        )));
    }
    Ok(a.iter()
        .map(|(q, ra)| {
            let delta = recall_at_k(b[q], qrels, k) - recall_at_k(ra, qrels, k);
            (String::from(*q), delta)
        })
        .collect())
}
