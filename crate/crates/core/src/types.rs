//! Domain types shared by every stage of the pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::{vector, Error, Result};

/// Rows of a [`TokenMatrix`] must have an L2 norm within this distance of 1.
pub const NORM_TOLERANCE: f64 = 1e-3;

/// Surface form of the separator placed between context and last utterance.
pub const SEP_TEXT: &str = "[SEP]";

/// What part of an encoded input a token came from.
///
/// The discriminants are the on-disk role codes of the embedding archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Role {
    Cls = 0,
    QueryMarker = 1,
    Expansion = 2,
    Sep = 3,
    Context = 4,
    LastTurn = 5,
    Doc = 6,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Cls,
        Role::QueryMarker,
        Role::Expansion,
        Role::Sep,
        Role::Context,
        Role::LastTurn,
        Role::Doc,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Role> {
        Role::ALL.get(usize::from(code)).copied()
    }

    /// Encoder bookkeeping tokens that never take part in matching.
    pub fn is_special(self) -> bool {
        matches!(self, Role::Cls | Role::QueryMarker | Role::Expansion)
    }
}

/// A token surface form together with its role. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    text: String,
    role: Role,
}

impl Token {
    /// Fails on empty text, except for expansion tokens.
    pub fn new(text: impl Into<String>, role: Role) -> Result<Self> {
        let text = text.into();
        if text.is_empty() && role != Role::Expansion {
            return Err(Error::InvalidArgument(format!(
                "empty token text for role {role:?}"
            )));
        }
        Ok(Token { text, role })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

/// An encoded text: tokens and one unit-norm embedding row per token.
///
/// Rows are stored contiguously in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    tokens: Vec<Token>,
    data: Vec<f32>,
    dim: usize,
}

impl TokenMatrix {
    /// Builds a matrix, checking the row count and that every row is unit-norm.
    pub fn new(tokens: Vec<Token>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        if data.len() != tokens.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} tokens need {} values at dim {dim}, got {}",
                tokens.len(),
                tokens.len() * dim,
                data.len()
            )));
        }
        if let Some((i, n)) = data
            .chunks_exact(dim)
            .map(vector::norm)
            .enumerate()
            .find(|(_, n)| !((1.0 - NORM_TOLERANCE)..=(1.0 + NORM_TOLERANCE)).contains(n))
        {
            return Err(Error::InvalidArgument(format!(
                "row {i} ('{}') has norm {n}, expected 1",
                tokens[i].text()
            )));
        }
        Ok(TokenMatrix { tokens, data, dim })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// The flat row-major embedding payload.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Positions of tokens with the given role, in order.
    pub fn positions_with_role(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.role() == role)
            .map(|(i, _)| i)
    }
}

/// One user turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationTurn {
    /// 1-based position within the conversation.
    pub turn_id: usize,
    pub utterance: String,
    pub canonical_response: Option<String>,
    pub human_rewrite: Option<String>,
}

impl ConversationTurn {
    pub fn new(turn_id: usize, utterance: impl Into<String>) -> Self {
        ConversationTurn {
            turn_id,
            utterance: utterance.into(),
            canonical_response: None,
            human_rewrite: None,
        }
    }

    pub fn with_response(mut self, response: impl Into<String>) -> Self {
        self.canonical_response = Some(response.into());
        self
    }

    pub fn with_rewrite(mut self, rewrite: impl Into<String>) -> Self {
        self.human_rewrite = Some(rewrite.into());
        self
    }
}

/// An ordered sequence of turns with ids `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    id: String,
    turns: Vec<ConversationTurn>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, turns: Vec<ConversationTurn>) -> Result<Self> {
        let id = id.into();
        for (i, turn) in turns.iter().enumerate() {
            if turn.turn_id != i + 1 {
                return Err(Error::Data(format!(
                    "conversation {id}: turn ids must be contiguous from 1, found {} at position {}",
                    turn.turn_id,
                    i + 1
                )));
            }
            if turn.utterance.trim().is_empty() {
                return Err(Error::Data(format!(
                    "conversation {id}: turn {} has an empty utterance",
                    turn.turn_id
                )));
            }
        }
        Ok(Conversation { id, turns })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn turns(&self) -> &[ConversationTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Turn `t` (1-based).
    pub fn turn(&self, t: usize) -> Result<&ConversationTurn> {
        if t == 0 || t > self.turns.len() {
            return Err(Error::TurnOutOfRange {
                turn: t,
                len: self.turns.len(),
            });
        }
        Ok(&self.turns[t - 1])
    }

    /// TREC CAsT style query id, `<conversation>_<turn>`.
    pub fn query_id(&self, t: usize) -> String {
        format!("{}_{}", self.id, t)
    }

    /// Context of turn `t` as one text segment per prior turn, oldest first.
    ///
    /// Each segment is the turn's utterance, followed by its canonical response
    /// when `use_responses` is set and a response exists.
    pub fn context_segments(&self, t: usize, use_responses: bool) -> Result<Vec<String>> {
        self.turn(t)?;
        Ok(self.turns[..t - 1]
            .iter()
            .map(|turn| match (&turn.canonical_response, use_responses) {
                (Some(resp), true) => format!("{} {}", turn.utterance, resp),
                _ => turn.utterance.clone(),
            })
            .collect())
    }
}

/// Concatenates turns `1..t` (and their responses if requested) with single
/// spaces. Empty at the first turn.
pub fn build_context(conversation: &Conversation, t: usize, use_responses: bool) -> Result<String> {
    Ok(conversation.context_segments(t, use_responses)?.join(" "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Score-sorted result list for one query.
///
/// Entries are sorted by score descending with ties broken by ascending
/// `doc_id`, hold no duplicate ids, and number at most `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    query_id: String,
    entries: Vec<RankedDoc>,
    depth: usize,
}

/// Ordering used for every ranking in the crate.
pub fn ranking_order(a: &RankedDoc, b: &RankedDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl Ranking {
    /// Sorts `scores` into a ranking truncated to `depth`.
    pub fn from_scores<I, S>(query_id: impl Into<String>, scores: I, depth: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        if depth == 0 {
            return Err(Error::InvalidArgument(
                "ranking depth must be positive".into(),
            ));
        }
        let mut entries: Vec<RankedDoc> = scores
            .into_iter()
            .map(|(doc_id, score)| RankedDoc {
                doc_id: doc_id.into(),
                score,
            })
            .collect();
        if let Some(bad) = entries.iter().find(|e| e.score.is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "NaN score for {}",
                bad.doc_id
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate document {} in ranking",
                    e.doc_id
                )));
            }
        }
        entries.sort_by(ranking_order);
        entries.truncate(depth);
        Ok(Ranking {
            query_id: query_id.into(),
            entries,
            depth,
        })
    }

    pub fn empty(query_id: impl Into<String>, depth: usize) -> Self {
        Ranking {
            query_id: query_id.into(),
            entries: Vec::new(),
            depth: depth.max(1),
        }
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[RankedDoc] {
        &self.entries
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

/// Passage collection. Iteration follows insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    passages: Vec<(String, String)>,
    positions: BTreeMap<String, usize>,
    doc_of: Option<BTreeMap<String, String>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, passage_id: impl Into<String>, text: impl Into<String>) -> Result<()> {
        let passage_id = passage_id.into();
        if self.positions.contains_key(&passage_id) {
            return Err(Error::Data(format!("duplicate passage id {passage_id}")));
        }
        self.positions
            .insert(passage_id.clone(), self.passages.len());
        self.passages.push((passage_id, text.into()));
        Ok(())
    }

    /// Attaches the passage → document mapping used for MaxP. Every passage
    /// must be mapped.
    pub fn set_doc_of(&mut self, doc_of: BTreeMap<String, String>) -> Result<()> {
        if let Some((pid, _)) = self
            .passages
            .iter()
            .find(|(pid, _)| !doc_of.contains_key(pid))
        {
            return Err(Error::Data(format!(
                "passage {pid} has no document mapping"
            )));
        }
        self.doc_of = Some(doc_of);
        Ok(())
    }

    pub fn doc_of(&self) -> Option<&BTreeMap<String, String>> {
        self.doc_of.as_ref()
    }

    pub fn get(&self, passage_id: &str) -> Option<&str> {
        self.positions
            .get(passage_id)
            .map(|&i| self.passages[i].1.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.passages
            .iter()
            .map(|(id, text)| (id.as_str(), text.as_str()))
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Generic "name ↔ string" parse error for the small enums in this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNameError(pub String);

impl fmt::Display for ParseNameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unrecognized name '{}'", self.0)
    }
}

impl core::error::Error for ParseNameError {}

impl FromStr for Role {
    type Err = ParseNameError;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "cls" => Role::Cls,
            "query_marker" | "q" => Role::QueryMarker,
            "expansion" | "mask" => Role::Expansion,
            "sep" => Role::Sep,
            "context" => Role::Context,
            "last_turn" => Role::LastTurn,
            "doc" => Role::Doc,
            _ => return Err(ParseNameError(s.to_string())),
        })
    }
}
