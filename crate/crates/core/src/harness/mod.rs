//! End-to-end runs: exemplars, prompt, drafts, binding, execution and vote
//! per question, then metrics, recall diagnostics and parameter sweeps.

mod dataset;
mod diagnose;
pub mod metrics;
mod sweep;

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binder::{Binder, HopCache, KbIndexes};
use crate::draft_gen::{
    CompletionRequest, DraftStatus, ExemplarError, ExemplarPool, LlmClient, PipelineConfig,
    build_prompt, generate_drafts, prepare_exemplar,
};
use crate::executor::{AnswerSet, Provenance, SparqlEndpoint, Voter, evaluate};
use crate::kb_store::{EntityCatalog, TripleStore};
use crate::logical_form::{Expr, skeleton};
use crate::throttle::RetryPolicy;

pub use dataset::{DatasetError, DatasetRecord, load_dataset, parse_dataset};
pub use diagnose::{DiagnoseError, DiagnosticsReport, QuestionFlags, diagnose};
pub use metrics::{EvalReport, evaluate_predictions};
pub use sweep::{SweepRow, sweep, write_sweep_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftReport {
    pub text: String,
    #[serde(flatten)]
    pub status: DraftStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<String>,
    /// Grounded candidates enumerated from this draft.
    pub candidates: usize,
    /// Of those, how many executed to an answerable result.
    pub answerable: usize,
    /// Surface name that found no catalog entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unbound: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub answer: AnswerSet,
    pub votes: usize,
    pub lf: String,
    pub provenance: Provenance,
}

/// Result for one question. `lf` is absent exactly when unanswered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub lf: Option<String>,
    pub answers: Option<AnswerSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub drafts: Vec<DraftReport>,
    #[serde(default)]
    pub tally: Vec<TallyEntry>,
    /// Union of entity-binding candidates over all drafts.
    #[serde(default)]
    pub entity_candidates: BTreeSet<String>,
    /// Union of relation-slot candidates over all drafts and permutations.
    #[serde(default)]
    pub relation_candidates: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

impl Prediction {
    fn unanswered(qid: &str) -> Self {
        Prediction {
            qid: qid.to_string(),
            lf: None,
            answers: None,
            provenance: None,
            drafts: Vec::new(),
            tally: Vec::new(),
            entity_candidates: BTreeSet::new(),
            relation_candidates: BTreeSet::new(),
            error: None,
            elapsed_ms: None,
        }
    }

    /// `{"qid": .., "answers": [..]}`; counts render as one numeral.
    pub fn compact(&self) -> serde_json::Value {
        let answers: Vec<String> = match &self.answers {
            Some(AnswerSet::Entities(e)) => e.iter().cloned().collect(),
            Some(AnswerSet::Count(n)) => vec![n.to_string()],
            None => Vec::new(),
        };
        serde_json::json!({ "qid": self.qid, "answers": answers })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::draft_gen::ConfigError),
    #[error(transparent)]
    Exemplar(#[from] ExemplarError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Builds the exemplar pool from training records with gold logical forms.
/// Records whose form does not parse or names an unknown mid are skipped
/// and returned alongside the error.
pub fn exemplar_pool(
    records: &[DatasetRecord],
    catalog: &EntityCatalog,
) -> (ExemplarPool, Vec<(String, ExemplarError)>) {
    let mut exemplars = Vec::new();
    let mut skipped = Vec::new();
    for r in records {
        let Some(lf) = &r.s_expression else { continue };
        match prepare_exemplar(&r.question, lf, catalog) {
            Ok(e) => exemplars.push(e),
            Err(e) => skipped.push((r.qid.clone(), e)),
        }
    }
    (ExemplarPool::new(exemplars), skipped)
}

/// Where grounded candidates are executed. Binding always uses the local
/// store; only execution moves to the endpoint.
#[derive(Clone, Copy)]
pub enum Execution<'a> {
    Local,
    Remote(&'a SparqlEndpoint),
}

pub struct Pipeline<'a> {
    pub store: &'a TripleStore,
    pub catalog: &'a EntityCatalog,
    pub indexes: &'a KbIndexes,
    pub pool: &'a ExemplarPool,
    pub llm: &'a dyn LlmClient,
    pub execution: Execution<'a>,
    pub retry: RetryPolicy,
    pub config: PipelineConfig,
    /// Record wall-clock time per question (makes output non-reproducible).
    pub timing: bool,
}

impl Pipeline<'_> {
    /// Answers every record on `config.workers` threads; the result is sorted
    /// by qid. Per-question failures are recorded in the prediction.
    pub fn run(&self, records: &[DatasetRecord]) -> Result<Vec<Prediction>, RunError> {
        self.config.validate()?;
        if self.config.shots > self.pool.len() {
            return Err(ExemplarError::PoolTooSmall {
                available: self.pool.len(),
                requested: self.config.shots,
            }
            .into());
        }
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        let mut out: Vec<Prediction> =
            workers.install(|| records.par_iter().map(|r| self.answer(r)).collect());
        out.sort_by(|a, b| a.qid.cmp(&b.qid));
        Ok(out)
    }

    pub fn answer(&self, record: &DatasetRecord) -> Prediction {
        let start = Instant::now();
        let mut p = Prediction::unanswered(&record.qid);
        if let Err(e) = self.answer_into(record, &mut p) {
            p.error = Some(e);
        }
        if self.timing {
            p.elapsed_ms = Some(start.elapsed().as_millis() as u64);
        }
        p
    }

    fn answer_into(&self, record: &DatasetRecord, p: &mut Prediction) -> Result<(), String> {
        let cfg = &self.config;
        let exemplars = self
            .pool
            .select(&record.question, cfg.exemplar_mode, cfg.shots, cfg.seed)
            .map_err(|e| e.to_string())?;
        let prompt = build_prompt(exemplars, &record.question).map_err(|e| e.to_string())?;
        let request = CompletionRequest::new(&record.qid, prompt, cfg.drafts, cfg.temperature);
        let batch = generate_drafts(self.llm, &request, &self.retry).map_err(|e| e.to_string())?;

        let binder = Binder {
            store: self.store,
            catalog: self.catalog,
            indexes: self.indexes,
            config: cfg.binder(),
        };
        let mut hops = HopCache::default();
        let mut executed: HashMap<Expr, Option<AnswerSet>> = HashMap::new();
        let mut voter: Voter<String> = Voter::new(cfg.vote_mode);

        for (rank, draft) in batch.drafts.iter().enumerate() {
            let mut report = DraftReport {
                text: draft.text.clone(),
                status: draft.status.clone(),
                skeleton: None,
                candidates: 0,
                answerable: 0,
                unbound: None,
            };
            if let Some(expr) = &draft.expr {
                report.skeleton = Some(skeleton(expr).to_string());
                let enumeration = binder.enumerate(expr, &record.question, rank, &mut hops);
                report.candidates = enumeration.candidates.len();
                report.unbound = enumeration.trace.unbound;
                for binding in &enumeration.trace.entity_bindings {
                    p.entity_candidates
                        .extend(binding.candidates.iter().map(|c| c.mid.clone()));
                }
                p.relation_candidates
                    .extend(enumeration.trace.relation_candidates);
                for candidate in enumeration.candidates {
                    let answer = executed
                        .entry(candidate.expr.clone())
                        .or_insert_with(|| self.execute(&candidate.expr));
                    if let Some(answer) = answer.as_ref().filter(|a| a.is_answerable()) {
                        report.answerable += 1;
                        voter.cast(&candidate.provenance, answer, &candidate.expr.to_string());
                    }
                }
            }
            p.drafts.push(report);
        }

        let outcome = voter.finish();
        if let Some(w) = outcome.winner() {
            p.lf = Some(w.payload.clone());
            p.answers = Some(w.answer.clone());
            p.provenance = Some(w.best.clone());
        }
        p.tally = outcome
            .tally
            .into_iter()
            .map(|row| TallyEntry {
                answer: row.answer,
                votes: row.votes,
                lf: row.payload,
                provenance: row.best,
            })
            .collect();
        Ok(())
    }

    fn execute(&self, expr: &Expr) -> Option<AnswerSet> {
        match self.execution {
            Execution::Local => evaluate(self.store, expr).ok(),
            Execution::Remote(endpoint) => endpoint.evaluate(expr).ok(),
        }
    }
}

/// One JSON object per line, in the given order.
pub fn write_predictions(
    mut w: impl std::io::Write,
    predictions: &[Prediction],
    compact: bool,
) -> std::io::Result<()> {
    for p in predictions {
        let line = if compact {
            p.compact().to_string()
        } else {
            serde_json::to_string(p)?
        };
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_predictions(reader: impl std::io::Read) -> Result<Vec<Prediction>, DatasetError> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
