//! Few-shot drafting: exemplar preparation and selection, prompt assembly,
//! and K-draft generation through an [`LlmClient`].

mod config;
mod llm;

use rand::SeedableRng;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb_store::EntityCatalog;
use crate::logical_form::{EntityRef, Expr, Leaf, ParseError, parse_draft, skeleton};
use crate::retrieval::{Bm25Index, Bm25Params, Document, Retriever};

pub use config::{ConfigError, ExemplarMode, PipelineConfig, Preset};
pub use llm::{
    CompletionRequest, Draft, DraftBatch, DraftError, DraftStatus, HttpLlm, LlmClient, LlmError,
    MockLlm, generate_drafts, truncate_completion,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExemplarError {
    #[error("mid `{0}` is not in the entity catalog")]
    UnknownMid(String),
    #[error("logical form does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("logical form `{0}` contains surface names")]
    NotGrounded(String),
    #[error("pool has {available} exemplars, {requested} requested")]
    PoolTooSmall { available: usize, requested: usize },
    #[error("a prompt needs at least one exemplar")]
    NoExemplars,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub raw: String,
    pub friendly: String,
}

/// Replaces every mid leaf of `raw_lf` by its catalog friendly name.
///
/// Names that would not read back as a single entity leaf (they look like a
/// number, keyword or schema id after stripping brackets and quotes) keep the
/// mid, so the skeleton is always preserved.
pub fn prepare_exemplar(
    question: &str,
    raw_lf: &str,
    catalog: &EntityCatalog,
) -> Result<Exemplar, ExemplarError> {
    let raw = parse_draft(raw_lf)?;
    if !raw.is_grounded() {
        return Err(ExemplarError::NotGrounded(raw_lf.to_string()));
    }
    let friendly = rename(&raw, catalog)?;
    Ok(Exemplar {
        question: question.to_string(),
        raw: raw.to_string(),
        friendly: friendly.to_string(),
    })
}

fn rename(expr: &Expr, catalog: &EntityCatalog) -> Result<Expr, ExemplarError> {
    Ok(match expr {
        Expr::Leaf(Leaf::Entity(EntityRef::Mid(mid))) => {
            let record = catalog
                .get(mid)
                .ok_or_else(|| ExemplarError::UnknownMid(mid.clone()))?;
            let name = printable_name(&record.friendly_name);
            if reads_as_entity(&name) {
                Expr::surface(name)
            } else {
                expr.clone()
            }
        }
        Expr::Leaf(_) => expr.clone(),
        Expr::And(a, b) => {
            let (x, y) = (rename(a, catalog)?, rename(b, catalog)?);
            // Two bare operands would read back as one multi-word name.
            let glued = |x: &Expr, y: &Expr| {
                let e = Expr::and(x.clone(), y.clone());
                parse_draft(&e.to_string()).ok() != Some(e)
            };
            if !glued(&x, &y) {
                Expr::and(x, y)
            } else if !glued(a, &y) {
                Expr::and((**a).clone(), y)
            } else {
                Expr::and(x, (**b).clone())
            }
        }
        Expr::Join(r, s) => Expr::join(rename(r, catalog)?, rename(s, catalog)?),
        Expr::Reverse(r) => Expr::reverse(rename(r, catalog)?),
        Expr::Count(s) => Expr::count(rename(s, catalog)?),
        Expr::ArgMax(s, r) => Expr::arg_max(rename(s, catalog)?, rename(r, catalog)?),
        Expr::ArgMin(s, r) => Expr::arg_min(rename(s, catalog)?, rename(r, catalog)?),
        Expr::Compare(op, r, v) => Expr::compare(*op, rename(r, catalog)?, rename(v, catalog)?),
    })
}

fn printable_name(name: &str) -> String {
    name.replace(['(', ')', '"'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn reads_as_entity(name: &str) -> bool {
    // Wrapped in a JOIN so the name sits in a set position.
    let probe = format!("(JOIN a.b {name})");
    match parse_draft(&probe) {
        Ok(Expr::Join(_, arg)) => *arg == Expr::surface(name),
        _ => false,
    }
}

/// Training exemplars with a BM25 index over their questions.
#[derive(Debug, Clone)]
pub struct ExemplarPool {
    exemplars: Vec<Exemplar>,
    index: Bm25Index,
}

impl ExemplarPool {
    pub fn new(exemplars: Vec<Exemplar>) -> Self {
        let docs = exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| Document::new(i.to_string(), e.question.as_str()));
        let index = Bm25Index::build(docs, Bm25Params::default()).expect("ids are distinct");
        ExemplarPool { exemplars, index }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// Picks `n` exemplars for `target`. Random mode ignores the target, so
    /// every question of a run sees the same demonstrations.
    pub fn select(
        &self,
        target: &str,
        mode: ExemplarMode,
        n: usize,
        seed: u64,
    ) -> Result<Vec<&Exemplar>, ExemplarError> {
        if n > self.len() {
            return Err(ExemplarError::PoolTooSmall {
                available: self.len(),
                requested: n,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked: Vec<usize> = match mode {
            ExemplarMode::Random => index::sample(&mut rng, self.len(), n).into_vec(),
            ExemplarMode::Retrieved => {
                let mut picked: Vec<usize> = self
                    .index
                    .top_k(target, n)
                    .into_iter()
                    .map(|(id, _)| id.parse().expect("numeric id"))
                    .collect();
                let rest: Vec<usize> = (0..self.len()).filter(|i| !picked.contains(i)).collect();
                let fill = n - picked.len();
                picked.extend(
                    index::sample(&mut rng, rest.len(), fill)
                        .into_iter()
                        .map(|i| rest[i]),
                );
                picked
            }
        };
        Ok(picked.into_iter().map(|i| &self.exemplars[i]).collect())
    }
}

/// Checks the skeleton contract between an exemplar's two forms.
pub fn skeletons_agree(exemplar: &Exemplar) -> bool {
    match (parse_draft(&exemplar.raw), parse_draft(&exemplar.friendly)) {
        (Ok(a), Ok(b)) => skeleton(&a) == skeleton(&b),
        _ => false,
    }
}

/// Few-shot prompt: one `Question:`/`Logical Form:` block per exemplar,
/// separated by blank lines, ending with the open target block.
pub fn build_prompt<'a>(
    exemplars: impl IntoIterator<Item = &'a Exemplar>,
    target: &str,
) -> Result<String, ExemplarError> {
    let mut prompt = String::new();
    let mut any = false;
    for e in exemplars {
        any = true;
        prompt.push_str(&format!(
            "Question: {}\nLogical Form: {}\n\n",
            e.question, e.friendly
        ));
    }
    if !any {
        return Err(ExemplarError::NoExemplars);
    }
    prompt.push_str(&format!("Question: {target}\nLogical Form:"));
    Ok(prompt)
}
