//! Text → [`TokenMatrix`] providers.
//!
//! Two providers implement [`Encoder`]:
//!
//! - [`ToyEncoder`] derives embeddings deterministically from token strings.
//!   Each token starts from a pseudo-random base vector seeded by its FNV-1a
//!   hash and is mixed with the mean of the other tokens in the sequence, so
//!   the same word gets a different embedding in a different conversation.
//! - [`ArchiveEncoder`] serves precomputed embeddings from an
//!   [`EmbeddingArchive`], keyed as described in [`record_key`].
//!
//! Query inputs are assembled as `context [SEP] utterance`. When that exceeds
//! `max_tokens`, whole context turns are dropped oldest first; the utterance
//! itself is never cut.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::types::{ParseNameError, Role, Token, TokenMatrix, SEP_TEXT};
use crate::{vector, Error, Result};

/// Characters split off into their own tokens.
const PUNCTUATION: [char; 4] = ['?', '.', ',', '!'];

/// Lowercased whitespace tokenization with `? . , !` split into separate
/// tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    out.push(core::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// True for tokens made only of punctuation characters.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// The splitmix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in the open interval (-1, 1).
    pub fn next_symmetric(&mut self) -> f64 {
        // 53 random bits, centred in their bucket so neither endpoint occurs.
        let unit = ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        2.0 * unit - 1.0
    }
}

/// Deterministic unit vector for a token string.
pub fn toy_base_vector(token_text: &str, dim: usize) -> Result<Vec<f32>> {
    if token_text.is_empty() {
        return Err(Error::InvalidArgument("empty token text".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let mut rng = SplitMix64::new(fnv1a64(token_text.as_bytes()));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
    if !vector::normalize_f64(&mut v) {
        return Err(Error::Internal(format!(
            "degenerate base vector for '{token_text}'"
        )));
    }
    Ok(v.into_iter().map(|x| x as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    Toy,
    File,
}

impl FromStr for Provider {
    type Err = ParseNameError;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "toy" => Ok(Provider::Toy),
            "file" => Ok(Provider::File),
            _ => Err(ParseNameError(s.to_string())),
        }
    }
}

impl core::fmt::Display for Provider {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Provider::Toy => "toy",
            Provider::File => "file",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    /// Weight of a token's own base vector in the toy encoder.
    pub alpha: f64,
    pub max_tokens: usize,
    pub provider: Provider,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 128,
            alpha: 0.7,
            max_tokens: 512,
            provider: Provider::Toy,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "encoder dim must be >= 2, got {}",
                self.dim
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "encoder alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument(
                "encoder max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Toy contextual encoding of `tokens`.
///
/// `e_i = normalize(alpha * v(tok_i) + (1 - alpha) * mean_{j != i} v(tok_j))`,
/// where `v` is [`toy_base_vector`]. A single token keeps its base vector.
/// Inputs longer than `config.max_tokens` are truncated at the end.
pub fn toy_encode(tokens: &[Token], config: &EncoderConfig) -> Result<TokenMatrix> {
    config.validate()?;
    let kept = &tokens[..tokens.len().min(config.max_tokens)];
    encode_mixed(kept, config.dim, config.alpha)
}

fn encode_mixed(tokens: &[Token], dim: usize, alpha: f64) -> Result<TokenMatrix> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot encode an empty token sequence".into(),
        ));
    }
    let mut cache: BTreeMap<&str, Vec<f32>> = BTreeMap::new();
    for t in tokens {
        if !cache.contains_key(t.text()) {
            let text = if t.text().is_empty() {
                "[MASK]"
            } else {
                t.text()
            };
            cache.insert(t.text(), toy_base_vector(text, dim)?);
        }
    }
    let base: Vec<&[f32]> = tokens.iter().map(|t| cache[t.text()].as_slice()).collect();

    let n = tokens.len();
    let mut data = Vec::with_capacity(n * dim);
    if n == 1 {
        data.extend_from_slice(base[0]);
    } else {
        let mut sum = alloc::vec![0.0f64; dim];
        for v in &base {
            sum.iter_mut()
                .zip(v.iter())
                .for_each(|(s, &x)| *s += f64::from(x));
        }
        let others = (n - 1) as f64;
        let mut mixed = alloc::vec![0.0f64; dim];
        for v in &base {
            for ((m, &s), &x) in mixed.iter_mut().zip(&sum).zip(v.iter()) {
                let x = f64::from(x);
                *m = alpha * x + (1.0 - alpha) * (s - x) / others;
            }
            if vector::normalize_f64(&mut mixed) {
                data.extend(mixed.iter().map(|&x| x as f32));
            } else {
                // Own vector cancelled by the context mean.
                data.extend_from_slice(v);
            }
        }
    }
    TokenMatrix::new(tokens.to_vec(), data, dim)
}

/// Which encoder input a query needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryForm {
    /// `context [SEP] utterance`.
    Contextual,
    /// The utterance alone.
    Standalone,
    /// The human rewrite alone (passed as the utterance).
    Rewrite,
}

#[derive(Debug, Clone, Copy)]
pub struct QueryInput<'a> {
    pub query_id: &'a str,
    pub form: QueryForm,
    /// Prior turns, oldest first, one segment per turn.
    pub context: &'a [String],
    pub utterance: &'a str,
}

/// Produces token matrices for passages, queries and standalone terms.
pub trait Encoder {
    fn dim(&self) -> usize;

    fn encode_passage(&self, passage_id: &str, text: &str) -> Result<TokenMatrix>;

    fn encode_query(&self, input: &QueryInput<'_>) -> Result<TokenMatrix>;

    /// Encodes a single term on its own, outside any conversation.
    fn encode_term(&self, term: &str) -> Result<TokenMatrix>;
}

fn role_tokens(texts: Vec<String>, role: Role) -> Vec<Token> {
    texts
        .into_iter()
        .map(|text| Token::new(text, role).expect("tokenizer never yields empty tokens"))
        .collect()
}

/// Builds the token sequence `context [SEP] utterance`, dropping whole context
/// turns oldest first until it fits in `max_tokens`. With no context left the
/// separator is omitted. The utterance is kept whole even if it alone exceeds
/// the limit.
pub fn assemble_query_tokens(context: &[String], utterance: &str, max_tokens: usize) -> Vec<Token> {
    let last = role_tokens(tokenize(utterance), Role::LastTurn);
    let segments: Vec<Vec<String>> = context
        .iter()
        .map(|s| tokenize(s))
        .filter(|s| !s.is_empty())
        .collect();
    let mut first = 0;
    let mut ctx_len: usize = segments.iter().map(Vec::len).sum();
    while first < segments.len() && ctx_len + 1 + last.len() > max_tokens {
        ctx_len -= segments[first].len();
        first += 1;
    }
    if first == segments.len() {
        return last;
    }
    let mut tokens: Vec<Token> = segments[first..]
        .iter()
        .flat_map(|s| role_tokens(s.clone(), Role::Context))
        .collect();
    tokens.push(Token::new(SEP_TEXT, Role::Sep).expect("non-empty"));
    tokens.extend(last);
    tokens
}

/// The deterministic toy provider.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    config: EncoderConfig,
}

impl ToyEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(ToyEncoder { config })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }
}

impl Encoder for ToyEncoder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode_passage(&self, passage_id: &str, text: &str) -> Result<TokenMatrix> {
        let tokens = role_tokens(tokenize(text), Role::Doc);
        if tokens.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "passage {passage_id} has no tokens"
            )));
        }
        toy_encode(&tokens, &self.config)
    }

    fn encode_query(&self, input: &QueryInput<'_>) -> Result<TokenMatrix> {
        let context: &[String] = match input.form {
            QueryForm::Contextual => input.context,
            QueryForm::Standalone | QueryForm::Rewrite => &[],
        };
        let tokens = assemble_query_tokens(context, input.utterance, self.config.max_tokens);
        if tokens.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "query {} has no tokens",
                input.query_id
            )));
        }
        // Only an overlong utterance can still exceed the limit; keep it whole.
        encode_mixed(&tokens, self.config.dim, self.config.alpha)
    }

    fn encode_term(&self, term: &str) -> Result<TokenMatrix> {
        let tokens = role_tokens(tokenize(term), Role::LastTurn);
        if tokens.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "term '{term}' has no tokens"
            )));
        }
        toy_encode(&tokens, &self.config)
    }
}

/// Record ids used by [`ArchiveEncoder`].
///
/// Passages are stored under their passage id. Query records use the query id
/// with a suffix; the contextualized encoding is shared by the all-history and
/// contextualized-last-turn variants.
pub mod record_key {
    use alloc::format;
    use alloc::string::String;

    pub fn contextual(query_id: &str) -> String {
        format!("{query_id}#ctx")
    }

    pub fn standalone(query_id: &str) -> String {
        format!("{query_id}#last")
    }

    pub fn rewrite(query_id: &str) -> String {
        format!("{query_id}#human")
    }

    pub fn term(term: &str) -> String {
        format!("#term:{term}")
    }
}

pub const ARCHIVE_MAGIC: [u8; 4] = *b"ZECO";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveRecord {
    pub id: String,
    pub matrix: TokenMatrix,
}

/// An ordered set of named token matrices sharing one dimension.
///
/// Record order is preserved so that a decoded archive re-encodes to the same
/// bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingArchive {
    dim: usize,
    records: Vec<ArchiveRecord>,
    by_id: BTreeMap<String, usize>,
}

impl EmbeddingArchive {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "archive dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingArchive {
            dim,
            records: Vec::new(),
            by_id: BTreeMap::new(),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, matrix: TokenMatrix) -> Result<()> {
        let id = id.into();
        if matrix.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: matrix.dim(),
            });
        }
        if matrix.is_empty() {
            return Err(Error::InvalidArgument(format!("record {id} has no tokens")));
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::Data(format!("duplicate archive record {id}")));
        }
        self.by_id.insert(id.clone(), self.records.len());
        self.records.push(ArchiveRecord { id, matrix });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TokenMatrix> {
        self.by_id.get(id).map(|&i| &self.records[i].matrix)
    }

    pub fn records(&self) -> &[ArchiveRecord] {
        &self.records
    }
}

/// Serves precomputed encodings from an archive.
#[derive(Debug, Clone)]
pub struct ArchiveEncoder {
    archive: EmbeddingArchive,
}

impl ArchiveEncoder {
    pub fn new(archive: EmbeddingArchive) -> Self {
        ArchiveEncoder { archive }
    }

    pub fn archive(&self) -> &EmbeddingArchive {
        &self.archive
    }

    fn lookup(&self, key: &str) -> Result<TokenMatrix> {
        self.archive
            .get(key)
            .cloned()
            .ok_or_else(|| Error::MissingData(format!("no archive record '{key}'")))
    }
}

impl Encoder for ArchiveEncoder {
    fn dim(&self) -> usize {
        self.archive.dim()
    }

    fn encode_passage(&self, passage_id: &str, _text: &str) -> Result<TokenMatrix> {
        self.lookup(passage_id)
    }

    fn encode_query(&self, input: &QueryInput<'_>) -> Result<TokenMatrix> {
        let key = match input.form {
            QueryForm::Contextual if !input.context.is_empty() => {
                record_key::contextual(input.query_id)
            }
            QueryForm::Contextual | QueryForm::Standalone => record_key::standalone(input.query_id),
            QueryForm::Rewrite => record_key::rewrite(input.query_id),
        };
        self.lookup(&key)
    }

    fn encode_term(&self, term: &str) -> Result<TokenMatrix> {
        self.lookup(&record_key::term(term))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(texts: &[&str], role: Role) -> Vec<Token> {
        texts
            .iter()
            .map(|t| Token::new(*t, role).unwrap())
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("What is it?"), ["what", "is", "it", "?"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("bronze age collapse."),
            ["bronze", "age", "collapse", "."]
        );
        assert_eq!(tokenize("  Hi,  there!! "), ["hi", ",", "there", "!", "!"]);
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of splitmix64 seeded with 1234567.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn base_vector_is_deterministic_and_unit() {
        let a = toy_base_vector("it", 128).unwrap();
        let b = toy_base_vector("it", 128).unwrap();
        assert_eq!(a, b);
        assert!((vector::norm(&a) - 1.0).abs() < 1e-6);
        assert!(toy_base_vector("", 8).is_err());
    }

    #[test]
    fn distinct_tokens_are_far_apart() {
        let it = toy_base_vector("it", 128).unwrap();
        let cancer = toy_base_vector("cancer", 128).unwrap();
        assert!(vector::cosine(&it, &cancer) < 0.5);
    }

    #[test]
    fn single_token_keeps_base_vector() {
        let m = toy_encode(&toks(&["it"], Role::LastTurn), &EncoderConfig::default()).unwrap();
        assert_eq!(m.row(0), toy_base_vector("it", 128).unwrap().as_slice());
    }

    #[test]
    fn alpha_one_disables_mixing() {
        let cfg = EncoderConfig {
            alpha: 1.0,
            dim: 16,
            ..Default::default()
        };
        let words = ["tell", "me", "about", "it"];
        let m = toy_encode(&toks(&words, Role::Doc), &cfg).unwrap();
        for (i, w) in words.iter().enumerate() {
            let base = toy_base_vector(w, 16).unwrap();
            for (x, y) in m.row(i).iter().zip(&base) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_token_mixing_matches_hand_computation() {
        let cfg = EncoderConfig {
            dim: 8,
            alpha: 0.7,
            ..Default::default()
        };
        let m = toy_encode(&toks(&["a", "b"], Role::Doc), &cfg).unwrap();
        let va = toy_base_vector("a", 8).unwrap();
        let vb = toy_base_vector("b", 8).unwrap();
        let expect: Vec<f64> = va
            .iter()
            .zip(&vb)
            .map(|(a, b)| 0.7 * *a as f64 + 0.3 * *b as f64)
            .collect();
        let n = expect.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in m.row(0).iter().zip(&expect) {
            assert!((*got as f64 - want / n).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_and_overlong_inputs() {
        let cfg = EncoderConfig {
            dim: 4,
            max_tokens: 2,
            ..Default::default()
        };
        assert!(toy_encode(&[], &cfg).is_err());
        let m = toy_encode(&toks(&["a", "b", "c"], Role::Doc), &cfg).unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig {
            dim: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig {
            alpha: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }

    #[test]
    fn truncation_drops_oldest_turns_first() {
        let ctx = vec!["one two three".to_string(), "four five".to_string()];
        let all = assemble_query_tokens(&ctx, "six seven", 100);
        assert_eq!(all.len(), 3 + 2 + 1 + 2);
        // 2 + 1 + 2 fits in 5: the first turn goes.
        let cut = assemble_query_tokens(&ctx, "six seven", 5);
        let texts: Vec<_> = cut.iter().map(Token::text).collect();
        assert_eq!(texts, ["four", "five", "[SEP]", "six", "seven"]);
        // Utterance alone exceeds the limit: it is kept whole, without SEP.
        let only = assemble_query_tokens(&ctx, "a b c d e f", 3);
        assert_eq!(only.len(), 6);
        assert!(only.iter().all(|t| t.role() == Role::LastTurn));
    }

    #[test]
    fn archive_encoder_keys() {
        let mut archive = EmbeddingArchive::new(2).unwrap();
        let m = TokenMatrix::new(toks(&["x"], Role::LastTurn), vec![1.0, 0.0], 2).unwrap();
        archive
            .push(record_key::standalone("c_1"), m.clone())
            .unwrap();
        assert!(archive
            .push(record_key::standalone("c_1"), m.clone())
            .is_err());
        let enc = ArchiveEncoder::new(archive);
        let input = QueryInput {
            query_id: "c_1",
            form: QueryForm::Contextual,
            context: &[],
            utterance: "x",
        };
        assert_eq!(enc.encode_query(&input).unwrap(), m);
        let missing = QueryInput {
            form: QueryForm::Rewrite,
            ..input
        };
        assert!(matches!(
            enc.encode_query(&missing),
            Err(Error::MissingData(_))
        ));
    }
}
