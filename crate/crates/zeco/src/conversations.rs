//! Conversation files: one JSON object per line, one line per turn.
//!
//! ```json
//! {"conversation_id": "31", "turn_id": 2, "utterance": "what is the first sign of it ?",
//!  "canonical_response": null, "human_rewrite": "what is the first sign of throat cancer ?"}
//! ```
//!
//! `canonical_response` and `human_rewrite` are optional. Turns of a
//! conversation may appear in any order but must number `1..=n`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use zeco_core::{Conversation, ConversationTurn};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub conversation_id: String,
    pub turn_id: usize,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_rewrite: Option<String>,
}

pub fn parse_conversations<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Conversation>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<ConversationTurn>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TurnRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let turns = grouped
            .entry(rec.conversation_id.clone())
            .or_insert_with(|| {
                order.push(rec.conversation_id.clone());
                Vec::new()
            });
        turns.push(ConversationTurn {
            turn_id: rec.turn_id,
            utterance: rec.utterance,
            canonical_response: rec.canonical_response,
            human_rewrite: rec.human_rewrite,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let mut turns = grouped.remove(&id).unwrap_or_default();
            turns.sort_by_key(|t| t.turn_id);
            Ok(Conversation::new(id, turns)?)
        })
        .collect()
}

pub fn load_conversations(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_conversations(BufReader::new(file), path)
}

pub fn write_conversations<W: Write>(
    mut writer: W,
    conversations: &[Conversation],
) -> std::io::Result<()> {
    for c in conversations {
        for t in c.turns() {
            let rec = TurnRecord {
                conversation_id: c.id().to_string(),
                turn_id: t.turn_id,
                utterance: t.utterance.clone(),
                canonical_response: t.canonical_response.clone(),
                human_rewrite: t.human_rewrite.clone(),
            };
            serde_json::to_writer(&mut writer, &rec)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads a `query_id<TAB>rewrite` file.
pub fn load_rewrites(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected query_id<TAB>rewrite".into(),
        })?;
        out.insert(qid.trim().to_string(), text.trim().to_string());
    }
    Ok(out)
}

/// Sets `human_rewrite` from `rewrites`, keyed by `<conversation>_<turn>`.
pub fn apply_rewrites(
    conversations: Vec<Conversation>,
    rewrites: &BTreeMap<String, String>,
) -> Result<Vec<Conversation>> {
    let mut unused: Vec<&str> = rewrites.keys().map(String::as_str).collect();
    let out = conversations
        .into_iter()
        .map(|c| {
            let turns = c
                .turns()
                .iter()
                .map(|t| {
                    let qid = c.query_id(t.turn_id);
                    let mut t = t.clone();
                    if let Some(r) = rewrites.get(&qid) {
                        unused.retain(|u| *u != qid);
                        t.human_rewrite = Some(r.clone());
                    }
                    t
                })
                .collect();
            Conversation::new(c.id(), turns)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if !unused.is_empty() {
        return Err(Error::Data(format!(
            "rewrites for unknown queries: {}",
            unused.join(", ")
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_groups_turns() {
        let text = r#"{"conversation_id":"31","turn_id":2,"utterance":"what is it ?","human_rewrite":"what is cancer ?"}
{"conversation_id":"31","turn_id":1,"utterance":"tell me about cancer"}

{"conversation_id":"32","turn_id":1,"utterance":"hi","canonical_response":"hello"}
"#;
        let convs = parse_conversations(text.as_bytes(), Path::new("x.jsonl")).unwrap();
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].id(), "31");
        assert_eq!(convs[0].turns()[0].utterance, "tell me about cancer");
        assert_eq!(
            convs[0].turns()[1].human_rewrite.as_deref(),
            Some("what is cancer ?")
        );
        assert_eq!(
            convs[1].turns()[0].canonical_response.as_deref(),
            Some("hello")
        );

        let mut buf = Vec::new();
        write_conversations(&mut buf, &convs).unwrap();
        assert_eq!(
            parse_conversations(buf.as_slice(), Path::new("y")).unwrap(),
            convs
        );
    }

    #[test]
    fn reports_line_of_bad_record() {
        let text = "{\"conversation_id\":\"1\",\"turn_id\":1,\"utterance\":\"a\"}\nnot json\n";
        match parse_conversations(text.as_bytes(), Path::new("c.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let gap = "{\"conversation_id\":\"1\",\"turn_id\":2,\"utterance\":\"a\"}\n";
        assert!(parse_conversations(gap.as_bytes(), Path::new("c")).is_err());
    }

    #[test]
    fn rewrites_attach_by_query_id() {
        let convs = vec![Conversation::new("7", vec![ConversationTurn::new(1, "a")]).unwrap()];
        let map: BTreeMap<String, String> = [("7_1".to_string(), "b".to_string())].into();
        let out = apply_rewrites(convs.clone(), &map).unwrap();
        assert_eq!(out[0].turns()[0].human_rewrite.as_deref(), Some("b"));
        let bad: BTreeMap<String, String> = [("8_1".to_string(), "b".to_string())].into();
        assert!(apply_rewrites(convs, &bad).is_err());
    }
}
