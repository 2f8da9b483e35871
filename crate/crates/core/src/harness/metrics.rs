//! Answer-set and logical-form metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::executor::AnswerSet;
use crate::logical_form::{Literal, em_match, parse_draft};

use super::{DatasetRecord, Prediction};

/// Comparable key of one answer: literal nodes reduce to their value, and
/// numerals to a canonical decimal form.
pub fn answer_key(node: &str) -> String {
    let value = Literal::decode(node)
        .map(|l| l.value().to_string())
        .unwrap_or_else(|| node.to_string());
    match value.trim().parse::<f64>() {
        Ok(x) if x.is_finite() && looks_numeric(value.trim()) => format!("{x}"),
        _ => value,
    }
}

fn looks_numeric(s: &str) -> bool {
    s.bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'))
        && s.bytes().any(|b| b.is_ascii_digit())
}

pub fn answer_keys(answer: &AnswerSet) -> BTreeSet<String> {
    match answer {
        AnswerSet::Entities(e) => e.iter().map(|n| answer_key(n)).collect(),
        AnswerSet::Count(n) => BTreeSet::from([answer_key(&n.to_string())]),
    }
}

pub fn gold_keys(gold: &[String]) -> BTreeSet<String> {
    gold.iter().map(|g| answer_key(g)).collect()
}

/// Harmonic mean of precision and recall; 1 when both sides are empty.
pub fn f1(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let hit = pred.intersection(gold).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let p = hit / pred.len() as f64;
    let r = hit / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// The whole winning set counts as the rank-1 prediction.
pub fn hits_at_1(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if pred.intersection(gold).next().is_some() {
        1.0
    } else {
        0.0
    }
}

/// Syntactic exact match after AND canonicalization; unparseable sides never
/// match.
pub fn exact_match(pred: Option<&str>, gold: &str) -> f64 {
    match (pred.map(parse_draft), parse_draft(gold)) {
        (Some(Ok(p)), Ok(g)) if em_match(&p, &g) => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: usize,
    pub coverage: f64,
    /// Over records with a gold logical form.
    pub em: f64,
    /// Over records with gold answers.
    pub f1: f64,
    pub hits1: f64,
    pub em_support: usize,
    pub answer_support: usize,
}

/// Scores predictions against the dataset by qid; a record without a
/// prediction counts as unanswered.
pub fn evaluate_predictions(records: &[DatasetRecord], predictions: &[Prediction]) -> EvalReport {
    let by_qid: std::collections::HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.qid.as_str(), p)).collect();
    let mut r = EvalReport {
        questions: records.len(),
        ..EvalReport::default()
    };
    let (mut em, mut f1_sum, mut hits, mut answered) = (0.0, 0.0, 0.0, 0usize);
    for rec in records {
        let pred = by_qid.get(rec.qid.as_str()).copied();
        if pred.is_some_and(|p| p.answers.is_some()) {
            answered += 1;
        }
        if let Some(gold) = &rec.s_expression {
            r.em_support += 1;
            em += exact_match(pred.and_then(|p| p.lf.as_deref()), gold);
        }
        if let Some(gold) = &rec.answers {
            r.answer_support += 1;
            let gold = gold_keys(gold);
            let got = pred
                .and_then(|p| p.answers.as_ref())
                .map(answer_keys)
                .unwrap_or_default();
            f1_sum += f1(&got, &gold);
            hits += hits_at_1(&got, &gold);
        }
    }
    let ratio = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
    r.coverage = ratio(answered as f64, r.questions);
    r.em = ratio(em, r.em_support);
    r.f1 = ratio(f1_sum, r.answer_support);
    r.hits1 = ratio(hits, r.answer_support);
    r
}
