//! TREC-style qrels and run files.
//!
//! - qrels: `query_id iteration doc_id grade`
//! - runs: `query_id Q0 doc_id rank score tag`
//!
//! Fields are whitespace separated. Runs are regrouped per query and re-sorted
//! by score; the rank column is ignored on input.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use zeco_core::eval::QrelSet;
use zeco_core::Ranking;

use crate::{Error, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Negative grades are read as 0 (non-relevant), as trec_eval does.
pub fn parse_qrels<R: BufRead>(
    reader: R,
    path: &Path,
    relevance_threshold: u32,
) -> Result<QrelSet> {
    let mut qrels = QrelSet::new(relevance_threshold);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 4 fields, found {}", f.len()),
            ));
        }
        let grade: i64 = f[3]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad grade {:?}", f[3])))?;
        let grade = u32::try_from(grade.max(0))
            .map_err(|_| parse_err(path, i + 1, "grade out of range"))?;
        qrels
            .insert(f[0], f[2], grade)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
    }
    Ok(qrels)
}

pub fn read_qrels(path: impl AsRef<Path>, relevance_threshold: u32) -> Result<QrelSet> {
    let path = path.as_ref();
    parse_qrels(open(path)?, path, relevance_threshold)
}

pub fn write_qrels<W: Write>(mut writer: W, qrels: &QrelSet) -> std::io::Result<()> {
    for (q, d, g) in qrels.iter() {
        writeln!(writer, "{q} 0 {d} {g}")?;
    }
    Ok(())
}

/// Rankings in order of each query's first line. Each ranking's depth is its
/// number of lines.
pub fn parse_run<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Ranking>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let score: f64 = f[4]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad score {:?}", f[4])))?;
        if score.is_nan() {
            return Err(parse_err(path, i + 1, "score is NaN"));
        }
        grouped
            .entry(f[0].to_string())
            .or_insert_with(|| {
                order.push(f[0].to_string());
                Vec::new()
            })
            .push((f[2].to_string(), score));
    }
    order
        .into_iter()
        .map(|q| {
            let docs = grouped.remove(&q).unwrap_or_default();
            let depth = docs.len();
            Ranking::from_scores(q.clone(), docs, depth)
                .map_err(|e| Error::Data(format!("{}: query {q}: {e}", path.display())))
        })
        .collect()
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<Ranking>> {
    let path = path.as_ref();
    parse_run(open(path)?, path)
}

/// Scores are written with Rust's shortest round-trip formatting, so reading
/// a written run gives back the same rankings.
pub fn write_run<W: Write>(mut writer: W, rankings: &[Ranking], tag: &str) -> std::io::Result<()> {
    for r in rankings {
        for (rank, e) in r.entries().iter().enumerate() {
            writeln!(
                writer,
                "{} Q0 {} {} {:?} {tag}",
                r.query_id(),
                e.doc_id,
                rank + 1,
                e.score
            )?;
        }
    }
    Ok(())
}

pub fn write_run_file(path: impl AsRef<Path>, rankings: &[Ranking], tag: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_run(&mut w, rankings, tag)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads `query_id value` lines, as used for per-query metric files.
pub fn read_values(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 2 {
            return Err(parse_err(path, i + 1, "expected query_id value"));
        }
        let v: f64 = f[1]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad value {:?}", f[1])))?;
        if !v.is_finite() {
            return Err(parse_err(path, i + 1, "value is not finite"));
        }
        if out.insert(f[0].to_string(), v).is_some() {
            return Err(parse_err(path, i + 1, format!("duplicate query {}", f[0])));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qrels_parse_and_clamp_negative() {
        let q = parse_qrels(
            "31_1 0 d1 2\n31_1 0 d2 -1\n\n32_1 0 d3 1\n".as_bytes(),
            Path::new("q"),
            1,
        )
        .unwrap();
        assert_eq!(q.grade("31_1", "d1"), Some(2));
        assert_eq!(q.grade("31_1", "d2"), Some(0));
        assert_eq!(q.relevant_count("31_1"), 1);
        assert!(parse_qrels("31_1 0 d1\n".as_bytes(), Path::new("q"), 1).is_err());
        assert!(parse_qrels("a 0 d 1\na 0 d 2\n".as_bytes(), Path::new("q"), 1).is_err());
    }

    #[test]
    fn run_round_trip_resorts() {
        let text = "b Q0 d2 1 0.5 x\na Q0 d1 1 1.0 x\nb Q0 d3 2 0.9 x\n";
        let run = parse_run(text.as_bytes(), Path::new("r")).unwrap();
        assert_eq!(run[0].query_id(), "b");
        assert_eq!(run[0].entries()[0].doc_id, "d3");
        let mut buf = Vec::new();
        write_run(&mut buf, &run, "tag").unwrap();
        assert_eq!(parse_run(buf.as_slice(), Path::new("r")).unwrap(), run);
    }

    #[test]
    fn run_rejects_duplicates_and_garbage() {
        assert!(matches!(
            parse_run(
                "a Q0 d 1 1.0 x\na Q0 d 2 0.5 x\n".as_bytes(),
                Path::new("r")
            ),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            parse_run("a Q0 d 1 abc x\n".as_bytes(), Path::new("r")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
