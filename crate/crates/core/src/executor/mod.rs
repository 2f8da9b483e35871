//! Execution of grounded logical forms and answer aggregation.
//!
//! `JOIN r S` denotes `{x : (x, r, s) in KB, s in S}`; `(R r)` flips the
//! edge so the same JOIN walks from subject to object.

mod sparql;
mod vote;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb_store::{Direction, TripleStore};
use crate::logical_form::{EntityRef, Expr, Leaf, Literal};

pub(crate) use sparql::retryable;
pub use sparql::{
    CompileError, NS, RdfTerm, SparqlEndpoint, answers_from_solutions, compile_sparql,
    literal_term, node_from_term, node_term, parse_results_json,
};
pub use vote::{Provenance, TallyRow, VoteMode, VoteOutcome, Voter, vote};

/// The denotation of a whole logical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSet {
    Entities(BTreeSet<String>),
    Count(u64),
}

impl AnswerSet {
    /// Executable answers that may vote: any count, or a non-empty entity set.
    pub fn is_answerable(&self) -> bool {
        match self {
            AnswerSet::Entities(e) => !e.is_empty(),
            AnswerSet::Count(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonExecutable {
    #[error("relation `{0}` not in the knowledge base")]
    UnknownRelation(String),
    #[error("class `{0}` not in the knowledge base")]
    UnknownClass(String),
    #[error("surface name `{0}` is not grounded")]
    Ungrounded(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

/// Evaluates a grounded logical form against the in-memory store.
pub fn evaluate(store: &TripleStore, expr: &Expr) -> Result<AnswerSet, NonExecutable> {
    match expr {
        Expr::Count(inner) => Ok(AnswerSet::Count(eval_set(store, inner)?.len() as u64)),
        _ => Ok(AnswerSet::Entities(eval_set(store, expr)?)),
    }
}

/// Resolves a relation-position expression to (relation id, inverted?).
pub(crate) fn resolve_relation<'a>(
    store: Option<&TripleStore>,
    rel: &'a Expr,
) -> Result<(&'a str, bool), NonExecutable> {
    match rel {
        Expr::Leaf(Leaf::Schema(r)) => {
            if store.is_some_and(|s| !s.has_relation(r)) {
                return Err(NonExecutable::UnknownRelation(r.clone()));
            }
            Ok((r, false))
        }
        Expr::Reverse(inner) => resolve_relation(store, inner).map(|(r, inv)| (r, !inv)),
        other => Err(NonExecutable::Type(format!("`{other}` is not a relation"))),
    }
}

fn eval_set(store: &TripleStore, expr: &Expr) -> Result<BTreeSet<String>, NonExecutable> {
    match expr {
        Expr::Leaf(Leaf::Entity(EntityRef::Mid(m))) => Ok(BTreeSet::from([m.clone()])),
        Expr::Leaf(Leaf::Entity(EntityRef::Surface(s))) => {
            Err(NonExecutable::Ungrounded(s.clone()))
        }
        Expr::Leaf(Leaf::Literal(l)) => Ok(BTreeSet::from([l.encode()])),
        Expr::Leaf(Leaf::Schema(class)) => {
            if !store.has_class(class) {
                return Err(NonExecutable::UnknownClass(class.clone()));
            }
            Ok(store.members(class).cloned().unwrap_or_default())
        }
        Expr::And(a, b) => {
            let a = eval_set(store, a)?;
            let b = eval_set(store, b)?;
            Ok(a.intersection(&b).cloned().collect())
        }
        Expr::Join(rel, set) => {
            let (r, inverted) = resolve_relation(Some(store), rel)?;
            let dir = if inverted {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            let mut out = BTreeSet::new();
            for node in eval_set(store, set)? {
                if let Some(ns) = store.neighbors(&node, r, dir) {
                    out.extend(ns.iter().cloned());
                }
            }
            Ok(out)
        }
        Expr::ArgMax(set, rel) => arg_extreme(store, set, rel, Ordering::Greater),
        Expr::ArgMin(set, rel) => arg_extreme(store, set, rel, Ordering::Less),
        Expr::Compare(op, rel, value) => {
            let (r, inverted) = resolve_relation(Some(store), rel)?;
            let Expr::Leaf(Leaf::Literal(bound)) = value.as_ref() else {
                return Err(NonExecutable::Type(format!("`{value}` is not a literal")));
            };
            let mut out = BTreeSet::new();
            for (s, o) in store.edges(r) {
                let (entity, attr) = if inverted { (o, s) } else { (s, o) };
                let attr = attribute(attr)?;
                let ord = attr
                    .compare(bound)
                    .ok_or_else(|| type_mismatch(&attr, bound))?;
                if op.holds(ord) {
                    out.insert(entity.to_string());
                }
            }
            Ok(out)
        }
        Expr::Count(_) => Err(NonExecutable::Type("COUNT used as a set".into())),
        Expr::Reverse(_) => Err(NonExecutable::Type("(R ...) used as a set".into())),
    }
}

fn attribute(node: &str) -> Result<Literal, NonExecutable> {
    Literal::decode(node)
        .ok_or_else(|| NonExecutable::Type(format!("`{node}` is not a literal value")))
}

fn type_mismatch(a: &Literal, b: &Literal) -> NonExecutable {
    NonExecutable::Type(format!(
        "cannot compare {} with {}",
        a.kind().tag(),
        b.kind().tag()
    ))
}

/// Members of `set` whose attribute value is extreme in direction `want`.
/// Members without the attribute are skipped.
fn arg_extreme(
    store: &TripleStore,
    set: &Expr,
    rel: &Expr,
    want: Ordering,
) -> Result<BTreeSet<String>, NonExecutable> {
    let (r, inverted) = resolve_relation(Some(store), rel)?;
    let dir = if inverted {
        Direction::Reverse
    } else {
        Direction::Forward
    };
    let better = |a: &Literal, b: &Literal| -> Result<bool, NonExecutable> {
        Ok(a.compare(b).ok_or_else(|| type_mismatch(a, b))? == want)
    };
    let mut keyed: Vec<(String, Literal)> = Vec::new();
    for x in eval_set(store, set)? {
        let mut best: Option<Literal> = None;
        for v in store.neighbors(&x, r, dir).into_iter().flatten() {
            let v = attribute(v)?;
            best = match best {
                Some(b) if !better(&v, &b)? => Some(b),
                _ => Some(v),
            };
        }
        if let Some(b) = best {
            keyed.push((x, b));
        }
    }
    let mut top: Option<&Literal> = None;
    for (_, v) in &keyed {
        if top.is_none_or(|t| better(v, t).unwrap_or(false)) {
            top = Some(v);
        }
    }
    let Some(top) = top.cloned() else {
        return Ok(BTreeSet::new());
    };
    let mut out = BTreeSet::new();
    for (x, v) in keyed {
        if v.compare(&top).ok_or_else(|| type_mismatch(&v, &top))? == Ordering::Equal {
            out.insert(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb_store::Triple;
    use crate::logical_form::parse_draft;

    fn store(rows: &[(&str, &str, &str)]) -> TripleStore {
        TripleStore::from_triples(rows.iter().map(|(s, r, o)| Triple::new(*s, *r, *o)))
    }

    fn eval(s: &TripleStore, text: &str) -> Result<AnswerSet, NonExecutable> {
        evaluate(s, &parse_draft(text).unwrap())
    }

    fn ents(items: &[&str]) -> AnswerSet {
        AnswerSet::Entities(items.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn file_format_example() {
        let s = store(&[
            ("f1", "type.object.type", "computer.file_format"),
            ("f1", "computer.file_format.genre", "m.0279m"),
        ]);
        let got = eval(
            &s,
            "(AND computer.file_format (JOIN computer.file_format.genre m.0279m))",
        )
        .unwrap();
        assert_eq!(got, ents(&["f1"]));
    }

    #[test]
    fn count_of_empty_set() {
        let s = store(&[("a", "r.x", "b")]);
        assert_eq!(
            eval(&s, "(COUNT (JOIN r.x m.nothing))").unwrap(),
            AnswerSet::Count(0)
        );
        assert!(AnswerSet::Count(0).is_answerable());
        assert!(!ents(&[]).is_answerable());
    }

    #[test]
    fn unknown_schema_is_not_executable() {
        let s = store(&[("a", "r.x", "b")]);
        assert_eq!(
            eval(&s, "(JOIN r.nope m.b)").unwrap_err(),
            NonExecutable::UnknownRelation("r.nope".into())
        );
        assert_eq!(
            eval(&s, "(JOIN r.x b)").unwrap_err(),
            NonExecutable::Ungrounded("b".into())
        );
        assert_eq!(
            eval(&s, "(AND c.nope m.b)").unwrap_err(),
            NonExecutable::UnknownClass("c.nope".into())
        );
    }

    #[test]
    fn join_direction_and_reverse() {
        let s = store(&[("m.a", "r.x", "m.b")]);
        assert_eq!(eval(&s, "(JOIN r.x m.b)").unwrap(), ents(&["m.a"]));
        assert_eq!(eval(&s, "(JOIN (R r.x) m.a)").unwrap(), ents(&["m.b"]));
        assert_eq!(eval(&s, "(JOIN (R (R r.x)) m.b)").unwrap(), ents(&["m.a"]));
    }

    #[test]
    fn argmax_argmin_with_missing_and_ties() {
        let s = store(&[
            ("m.a", "type.object.type", "c.k"),
            ("m.b", "type.object.type", "c.k"),
            ("m.c", "type.object.type", "c.k"),
            ("m.d", "type.object.type", "c.k"),
            ("m.a", "r.size", "\"3\"^^int"),
            ("m.b", "r.size", "\"9\"^^int"),
            ("m.c", "r.size", "\"9\"^^int"),
        ]);
        assert_eq!(
            eval(&s, "(ARGMAX c.k r.size)").unwrap(),
            ents(&["m.b", "m.c"])
        );
        assert_eq!(eval(&s, "(ARGMIN c.k r.size)").unwrap(), ents(&["m.a"]));
        assert_eq!(
            eval(&s, "(ARGMIN (JOIN r.size 100) r.size)").unwrap(),
            ents(&[])
        );
    }

    #[test]
    fn comparatives() {
        let s = store(&[
            ("m.a", "r.year", "\"1990\"^^int"),
            ("m.b", "r.year", "\"2000\"^^int"),
            ("m.c", "r.when", "\"2001-05-01\"^^date"),
        ]);
        assert_eq!(eval(&s, "(LT r.year 2000)").unwrap(), ents(&["m.a"]));
        assert_eq!(eval(&s, "(LE r.year 2000)").unwrap(), ents(&["m.a", "m.b"]));
        assert_eq!(eval(&s, "(GT r.year 1990)").unwrap(), ents(&["m.b"]));
        assert_eq!(eval(&s, "(GE r.when 2001-01-01)").unwrap(), ents(&["m.c"]));
        assert!(matches!(
            eval(&s, "(GT r.year 1990.5)").unwrap_err(),
            NonExecutable::Type(_)
        ));
    }

    #[test]
    fn literal_leaf_in_join() {
        let s = store(&[("m.a", "r.year", "\"1990\"^^int")]);
        assert_eq!(eval(&s, "(JOIN r.year 1990)").unwrap(), ents(&["m.a"]));
        assert_eq!(
            eval(&s, "(JOIN (R r.year) m.a)").unwrap(),
            ents(&["\"1990\"^^int"])
        );
    }

    #[test]
    fn count_inside_set_is_type_error() {
        let s = store(&[("m.a", "r.x", "m.b")]);
        let e = Expr::and(Expr::count(Expr::mid("m.a")), Expr::mid("m.a"));
        assert!(matches!(
            evaluate(&s, &e).unwrap_err(),
            NonExecutable::Type(_)
        ));
    }
}
