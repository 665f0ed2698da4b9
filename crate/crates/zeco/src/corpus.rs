//! Passage collections as tab-separated `passage_id<TAB>text[<TAB>doc_id]`.
//!
//! The optional third column maps passages to documents for MaxP; it must be
//! present on every line or on none.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use zeco_core::Corpus;

use crate::{Error, Result};

pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    let mut doc_of = BTreeMap::new();
    let mut with_docs: Option<bool> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let has_doc = match fields.len() {
            2 => false,
            3 => true,
            n => {
                return Err(parse_err(format!(
                    "expected 2 or 3 tab-separated fields, found {n}"
                )))
            }
        };
        if *with_docs.get_or_insert(has_doc) != has_doc {
            return Err(parse_err(
                "document column must be present on all lines or none".into(),
            ));
        }
        let id = fields[0].trim();
        corpus
            .insert(id, fields[1])
            .map_err(|e| parse_err(e.to_string()))?;
        if has_doc {
            doc_of.insert(id.to_string(), fields[2].trim().to_string());
        }
    }
    if with_docs == Some(true) {
        corpus.set_doc_of(doc_of)?;
    }
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path)
}

/// Reads a `passage_id<TAB>doc_id` mapping.
pub fn load_doc_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (p, d) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected passage_id<TAB>doc_id".into(),
        })?;
        out.insert(p.trim().to_string(), d.trim().to_string());
    }
    Ok(out)
}
