//! Per-stage recall: did the entity binder, the relation binder and the
//! drafted frames contain what the gold logical form needs?

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logical_form::{ParseError, extract_slots, parse_draft, skeleton};

use super::{DatasetRecord, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnoseError {
    #[error("question `{0}` has no gold logical form")]
    MissingGold(String),
    #[error("gold logical form of `{qid}` does not parse: {error}")]
    BadGold { qid: String, error: ParseError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFlags {
    pub qid: String,
    pub entity_recalled: bool,
    pub relation_recalled: bool,
    pub frame_recalled: bool,
    pub answered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub entity_recall: f64,
    pub relation_recall: f64,
    pub frame_recall: f64,
    pub coverage: f64,
    pub questions: Vec<QuestionFlags>,
}

/// Compares each record's gold form with the artifacts captured in its
/// prediction. A record without a prediction recalls nothing.
pub fn diagnose(
    records: &[DatasetRecord],
    predictions: &[Prediction],
) -> Result<DiagnosticsReport, DiagnoseError> {
    let by_qid: HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.qid.as_str(), p)).collect();
    let mut flags = Vec::with_capacity(records.len());
    for rec in records {
        let gold_text = rec
            .s_expression
            .as_deref()
            .ok_or_else(|| DiagnoseError::MissingGold(rec.qid.clone()))?;
        let gold = parse_draft(gold_text).map_err(|error| DiagnoseError::BadGold {
            qid: rec.qid.clone(),
            error,
        })?;
        let gold_mids: BTreeSet<&str> = gold.mids().into_iter().collect();
        let gold_relations: BTreeSet<String> = extract_slots(&gold)
            .relations
            .into_iter()
            .map(|s| s.token)
            .collect();
        let gold_skeleton = skeleton(&gold).to_string();

        let f = match by_qid.get(rec.qid.as_str()) {
            Some(p) => QuestionFlags {
                qid: rec.qid.clone(),
                entity_recalled: gold_mids.iter().all(|m| p.entity_candidates.contains(*m)),
                relation_recalled: gold_relations.is_subset(&p.relation_candidates),
                frame_recalled: p
                    .drafts
                    .iter()
                    .any(|d| d.skeleton.as_deref() == Some(gold_skeleton.as_str())),
                answered: p.answers.is_some(),
            },
            None => QuestionFlags {
                qid: rec.qid.clone(),
                entity_recalled: false,
                relation_recalled: false,
                frame_recalled: false,
                answered: false,
            },
        };
        flags.push(f);
    }
    let share = |pick: fn(&QuestionFlags) -> bool| {
        if flags.is_empty() {
            0.0
        } else {
            flags.iter().filter(|f| pick(f)).count() as f64 / flags.len() as f64
        }
    };
    Ok(DiagnosticsReport {
        entity_recall: share(|f| f.entity_recalled),
        relation_recall: share(|f| f.relation_recalled),
        frame_recall: share(|f| f.frame_recalled),
        coverage: share(|f| f.answered),
        questions: flags,
    })
}
