//! Query variants as token matrices plus match masks.
//!
//! | variant       | encoder input                 | matched tokens          |
//! |---------------|-------------------------------|-------------------------|
//! | `last_turn`   | utterance                     | utterance               |
//! | `all_history` | context `[SEP]` utterance     | context and utterance   |
//! | `zeco2`       | context `[SEP]` utterance     | utterance only          |
//! | `human`       | human rewrite                 | rewrite                 |
//!
//! `all_history` and `zeco2` share the same matrix and differ only in the
//! mask. `[CLS]`, `[Q]`, expansion and separator tokens are never matched.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::encoder::{Encoder, QueryForm, QueryInput};
use crate::types::{Conversation, ParseNameError, Role, TokenMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    LastTurn,
    AllHistory,
    Zeco2,
    Human,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LastTurn,
        Variant::AllHistory,
        Variant::Zeco2,
        Variant::Human,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LastTurn => "last_turn",
            Variant::AllHistory => "all_history",
            Variant::Zeco2 => "zeco2",
            Variant::Human => "human",
        }
    }

    fn form(self) -> QueryForm {
        match self {
            Variant::LastTurn => QueryForm::Standalone,
            Variant::AllHistory | Variant::Zeco2 => QueryForm::Contextual,
            Variant::Human => QueryForm::Rewrite,
        }
    }

    /// Whether a token with `role` takes part in matching for this variant.
    pub fn matches_role(self, role: Role) -> bool {
        match role {
            Role::LastTurn => true,
            Role::Context => self == Variant::AllHistory,
            _ => false,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ParseNameError;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| ParseNameError(s.to_string()))
    }
}

/// An encoded query and the tokens allowed to match.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEncoding {
    query_id: String,
    matrix: TokenMatrix,
    mask: Vec<bool>,
    variant: Variant,
}

impl QueryEncoding {
    /// Checks that the mask is aligned, excludes special tokens and selects at
    /// least one token.
    pub fn new(
        query_id: impl Into<String>,
        matrix: TokenMatrix,
        mask: Vec<bool>,
        variant: Variant,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if mask.len() != matrix.len() {
            return Err(Error::InvalidArgument(format!(
                "query {query_id}: mask has {} entries for {} tokens",
                mask.len(),
                matrix.len()
            )));
        }
        if let Some(t) = matrix
            .tokens()
            .iter()
            .zip(&mask)
            .find(|(t, &m)| m && t.role().is_special())
        {
            return Err(Error::InvalidArgument(format!(
                "query {query_id}: special token '{}' ({:?}) cannot be matched",
                t.0.text(),
                t.0.role()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument(format!(
                "query {query_id}: no token is matched"
            )));
        }
        Ok(QueryEncoding {
            query_id,
            matrix,
            mask,
            variant,
        })
    }

    /// Masks `matrix` with the role rules of `variant`.
    pub fn from_roles(
        query_id: impl Into<String>,
        matrix: TokenMatrix,
        variant: Variant,
    ) -> Result<Self> {
        let mask = matrix
            .tokens()
            .iter()
            .map(|t| variant.matches_role(t.role()))
            .collect();
        Self::new(query_id, matrix, mask, variant)
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn matrix(&self) -> &TokenMatrix {
        &self.matrix
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Embedding rows of the matched tokens.
    pub fn masked_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.matrix
            .rows()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(r, _)| r)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Encodes turn `t` of `conversation` as `variant`.
pub fn encode_variant<E: Encoder + ?Sized>(
    conversation: &Conversation,
    t: usize,
    variant: Variant,
    encoder: &E,
    use_responses: bool,
) -> Result<QueryEncoding> {
    let turn = conversation.turn(t)?;
    let query_id = conversation.query_id(t);
    let context = match variant {
        Variant::AllHistory | Variant::Zeco2 => conversation.context_segments(t, use_responses)?,
        Variant::LastTurn | Variant::Human => Vec::new(),
    };
    let utterance = match variant {
        Variant::Human => turn
            .human_rewrite
            .as_deref()
            .ok_or_else(|| Error::MissingData(format!("query {query_id} has no human rewrite")))?,
        _ => turn.utterance.as_str(),
    };
    let input = QueryInput {
        query_id: &query_id,
        form: variant.form(),
        context: &context,
        utterance,
    };
    let matrix = encoder.encode_query(&input)?;
    QueryEncoding::from_roles(query_id, matrix, variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, ToyEncoder};
    use crate::types::{ConversationTurn, Token};
    use alloc::vec;

    fn throat_cancer() -> Conversation {
        Conversation::new(
            "31",
            vec![
                ConversationTurn::new(1, "tell me about throat cancer"),
                ConversationTurn::new(2, "what is the first sign of it ?")
                    .with_rewrite("what is the first sign of throat cancer ?"),
            ],
        )
        .unwrap()
    }

    fn toy() -> ToyEncoder {
        ToyEncoder::new(EncoderConfig {
            dim: 32,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn first_turn_variants_coincide() {
        let c = throat_cancer();
        let enc = toy();
        let last = encode_variant(&c, 1, Variant::LastTurn, &enc, false).unwrap();
        for v in [Variant::Zeco2, Variant::AllHistory] {
            let q = encode_variant(&c, 1, v, &enc, false).unwrap();
            assert_eq!(q.matrix(), last.matrix());
            assert_eq!(q.mask(), last.mask());
        }
    }

    #[test]
    fn zeco2_masks_only_the_last_turn() {
        let q = encode_variant(&throat_cancer(), 2, Variant::Zeco2, &toy(), false).unwrap();
        assert_eq!(q.matrix().len(), 5 + 1 + 8);
        let expect: Vec<bool> = (0..14).map(|i| i >= 6).collect();
        assert_eq!(q.mask(), expect.as_slice());
        assert_eq!(q.matrix().tokens()[5].role(), Role::Sep);
    }

    #[test]
    fn all_history_masks_everything_but_sep() {
        let c = throat_cancer();
        let all = encode_variant(&c, 2, Variant::AllHistory, &toy(), false).unwrap();
        let z = encode_variant(&c, 2, Variant::Zeco2, &toy(), false).unwrap();
        assert_eq!(all.masked_count(), 13);
        assert!(!all.mask()[5]);
        assert_eq!(all.matrix(), z.matrix());
    }

    #[test]
    fn human_variant() {
        let c = throat_cancer();
        let h = encode_variant(&c, 2, Variant::Human, &toy(), false).unwrap();
        assert_eq!(h.masked_count(), 9);
        assert!(matches!(
            encode_variant(&c, 1, Variant::Human, &toy(), false),
            Err(Error::MissingData(_))
        ));
        assert!(matches!(
            encode_variant(&c, 3, Variant::Zeco2, &toy(), false),
            Err(Error::TurnOutOfRange { .. })
        ));
    }

    #[test]
    fn contextualization_changes_last_turn_embeddings() {
        let c = throat_cancer();
        let last = encode_variant(&c, 2, Variant::LastTurn, &toy(), false).unwrap();
        let z = encode_variant(&c, 2, Variant::Zeco2, &toy(), false).unwrap();
        let zr: Vec<_> = z.masked_rows().collect();
        let lr: Vec<_> = last.masked_rows().collect();
        assert_eq!(zr.len(), lr.len());
        assert!(zr.iter().zip(&lr).all(|(a, b)| a != b));
    }

    #[test]
    fn special_tokens_are_never_matched() {
        let tokens = vec![
            Token::new("[CLS]", Role::Cls).unwrap(),
            Token::new("[Q]", Role::QueryMarker).unwrap(),
            Token::new("it", Role::LastTurn).unwrap(),
            Token::new("", Role::Expansion).unwrap(),
        ];
        let data = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let m = TokenMatrix::new(tokens, data, 2).unwrap();
        let q = QueryEncoding::from_roles("q", m.clone(), Variant::Zeco2).unwrap();
        assert_eq!(q.mask(), [false, false, true, false]);
        assert!(QueryEncoding::new(
            "q",
            m.clone(),
            vec![true, false, true, false],
            Variant::Zeco2
        )
        .is_err());
        assert!(QueryEncoding::new("q", m, vec![false; 4], Variant::Zeco2).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("ZeCo2".parse::<Variant>().unwrap(), Variant::Zeco2);
        assert!("rewrite".parse::<Variant>().is_err());
    }
}
