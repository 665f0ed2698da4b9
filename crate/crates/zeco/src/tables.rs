//! CSV outputs of `zeco analyze`.

use std::path::Path;

use zeco_core::analysis::{ClosestMatch, ControlTable, DriftSummary};

use crate::Result;

/// A case-table row: the anaphora case plus the history token each anaphora
/// encoding lands closest to.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub query_id: String,
    pub anaphora: Vec<String>,
    pub resolution: Vec<String>,
    pub delta_sim: f64,
    pub delta_recall: f64,
    pub closest_last_turn: Option<ClosestMatch>,
    pub closest_zeco2: Option<ClosestMatch>,
}

pub const DRIFT_HEADER: [&str; 3] = ["token", "frequency", "mean_drift"];

pub const CASE_HEADER: [&str; 11] = [
    "query_id",
    "anaphora",
    "resolution",
    "delta_sim",
    "delta_recall",
    "closest_last_turn_token",
    "closest_last_turn_turn",
    "closest_last_turn_similarity",
    "closest_zeco2_token",
    "closest_zeco2_turn",
    "closest_zeco2_similarity",
];

pub const CONTROL_HEADER: [&str; 3] = ["encoding", "resolution", "random"];

fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

fn match_fields(m: &Option<ClosestMatch>) -> [String; 3] {
    match m {
        Some(m) => [m.token.clone(), m.turn_id.to_string(), float(m.similarity)],
        None => Default::default(),
    }
}

pub fn write_drift_csv(path: &Path, summary: &DriftSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DRIFT_HEADER)?;
    for r in &summary.records {
        w.write_record([
            r.token.clone(),
            r.frequency.to_string(),
            float(r.mean_drift),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Anaphora and resolution lists are space-joined.
pub fn write_cases_csv(path: &Path, rows: &[CaseRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CASE_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.query_id.clone(),
            r.anaphora.join(" "),
            r.resolution.join(" "),
            float(r.delta_sim),
            float(r.delta_recall),
        ];
        rec.extend(match_fields(&r.closest_last_turn));
        rec.extend(match_fields(&r.closest_zeco2));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

pub fn write_control_csv(path: &Path, table: &ControlTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONTROL_HEADER)?;
    for (name, pair) in [("last_turn", table.last_turn), ("zeco2", table.zeco2)] {
        w.write_record([name.to_string(), float(pair.resolution), float(pair.random)])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}
