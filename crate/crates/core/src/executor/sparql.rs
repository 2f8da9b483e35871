//! Logical form to SPARQL compilation and a SPARQL 1.1 Protocol client.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{AnswerSet, NonExecutable, resolve_relation};
use crate::logical_form::{EntityRef, Expr, Leaf, Literal, LiteralKind, TYPE_RELATION};
use crate::throttle::{RetryPolicy, Throttle};

/// Namespace that bare node and schema ids live under.
pub const NS: &str = "http://rdf.freebase.com/ns/";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("logical form is not grounded: `{0}`")]
    NotGrounded(String),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
}

struct Compiler {
    next_var: usize,
    lines: Vec<String>,
    depth: usize,
}

impl Compiler {
    fn fresh(&mut self) -> String {
        let v = format!("?x{}", self.next_var);
        self.next_var += 1;
        v
    }

    fn emit(&mut self, line: impl AsRef<str>) {
        self.lines
            .push(format!("{}{}", "  ".repeat(self.depth), line.as_ref()));
    }

    fn edge(&mut self, subject: &str, relation: &str, object: &str) {
        self.emit(format!("{subject} {} {object} .", iri(relation)));
    }

    /// Emits patterns binding `var` to the members of `expr`.
    fn set(&mut self, expr: &Expr, var: &str) -> Result<(), CompileError> {
        match expr {
            Expr::Leaf(Leaf::Entity(EntityRef::Surface(s))) => {
                return Err(CompileError::NotGrounded(s.clone()));
            }
            Expr::Leaf(Leaf::Entity(EntityRef::Mid(_)) | Leaf::Literal(_)) => {
                let term = constant(expr).expect("constant leaf");
                self.emit(format!("VALUES {var} {{ {term} }}"));
            }
            Expr::Leaf(Leaf::Schema(class)) => self.edge(var, TYPE_RELATION, &iri(class)),
            Expr::And(a, b) => {
                self.set(a, var)?;
                self.set(b, var)?;
            }
            Expr::Join(rel, inner) => {
                let (r, inverted) = relation(rel)?;
                let other = match constant(inner) {
                    Some(term) => term,
                    None => {
                        let v = self.fresh();
                        self.set(inner, &v)?;
                        v
                    }
                };
                if inverted {
                    self.edge(&other, r, var)
                } else {
                    self.edge(var, r, &other)
                }
            }
            Expr::ArgMax(inner, rel) => self.extreme(inner, rel, var, "DESC")?,
            Expr::ArgMin(inner, rel) => self.extreme(inner, rel, var, "ASC")?,
            Expr::Compare(op, rel, value) => {
                let (r, inverted) = relation(rel)?;
                let bound = constant(value).ok_or_else(|| {
                    CompileError::UnsupportedConstruct(format!("comparison against `{value}`"))
                })?;
                let attr = self.fresh();
                if inverted {
                    self.edge(&attr, r, var)
                } else {
                    self.edge(var, r, &attr)
                }
                let sym = match op {
                    crate::logical_form::Comparison::Lt => "<",
                    crate::logical_form::Comparison::Le => "<=",
                    crate::logical_form::Comparison::Gt => ">",
                    crate::logical_form::Comparison::Ge => ">=",
                };
                self.emit(format!("FILTER({attr} {sym} {bound})"));
            }
            Expr::Count(_) => {
                return Err(CompileError::UnsupportedConstruct("nested COUNT".into()));
            }
            Expr::Reverse(_) => {
                return Err(CompileError::UnsupportedConstruct(
                    "(R ...) in set position".into(),
                ));
            }
        }
        Ok(())
    }

    /// ARGMAX/ARGMIN: the subquery selects the extreme attribute value, and
    /// the outer pattern keeps every member carrying that value.
    fn extreme(
        &mut self,
        inner: &Expr,
        rel: &Expr,
        var: &str,
        order: &str,
    ) -> Result<(), CompileError> {
        let (r, inverted) = relation(rel)?;
        self.set(inner, var)?;
        let attr = self.fresh();
        if inverted {
            self.edge(&attr, r, var)
        } else {
            self.edge(var, r, &attr)
        }
        let sub_var = self.fresh();
        self.emit("{");
        self.depth += 1;
        self.emit(format!("SELECT {attr} WHERE {{"));
        self.depth += 1;
        self.set(inner, &sub_var)?;
        if inverted {
            self.edge(&attr, r, &sub_var)
        } else {
            self.edge(&sub_var, r, &attr)
        }
        // Entities have no order; a superlative over them selects nothing.
        self.emit(format!("FILTER(isLiteral({attr}))"));
        self.depth -= 1;
        self.emit(format!("}} ORDER BY {order}({attr}) LIMIT 1"));
        self.depth -= 1;
        self.emit("}");
        Ok(())
    }
}

fn relation(rel: &Expr) -> Result<(&str, bool), CompileError> {
    resolve_relation(None, rel).map_err(|e| CompileError::UnsupportedConstruct(e.to_string()))
}

fn constant(expr: &Expr) -> Option<String> {
    match expr {
        Expr::Leaf(Leaf::Entity(EntityRef::Mid(m))) => Some(node_term(m)),
        Expr::Leaf(Leaf::Literal(l)) => Some(literal_term(l)),
        _ => None,
    }
}

/// Full IRI under the namespace. Prefixed names with several dots trip up
/// some parsers, so ids are never abbreviated. Bytes not allowed in an IRI
/// reference, and `%` itself, are percent-encoded.
fn iri(id: &str) -> String {
    let mut out = String::with_capacity(NS.len() + id.len() + 2);
    out.push('<');
    out.push_str(NS);
    for c in id.chars() {
        if c <= ' '
            || matches!(
                c,
                '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' | '%'
            )
        {
            let mut buf = [0; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(c);
        }
    }
    out.push('>');
    out
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let hex = bytes
            .get(i + 1..i + 3)
            .and_then(|h| std::str::from_utf8(h).ok());
        match (bytes[i], hex.and_then(|h| u8::from_str_radix(h, 16).ok())) {
            (b'%', Some(b)) => {
                out.push(b);
                i += 3;
            }
            (b, _) => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// RDF term for a store node id (entity or encoded literal).
pub fn node_term(node: &str) -> String {
    match Literal::decode(node) {
        Some(l) => literal_term(&l),
        None => iri(node),
    }
}

pub fn literal_term(l: &Literal) -> String {
    let datatype = match l.kind() {
        LiteralKind::Int => "integer",
        LiteralKind::Float => "double",
        LiteralKind::Date => match l.value().len() {
            4 => "gYear",
            7 => "gYearMonth",
            _ => "date",
        },
        LiteralKind::Str => "string",
    };
    let mut escaped = String::with_capacity(l.value().len());
    for c in l.value().chars() {
        match c {
            '"' => escaped.push_str("\\\""),
            '\\' => escaped.push_str("\\\\"),
            '\n' => escaped.push_str("\\n"),
            '\r' => escaped.push_str("\\r"),
            c => escaped.push(c),
        }
    }
    format!("\"{escaped}\"^^xsd:{datatype}")
}

/// Compiles a grounded logical form into an engine-agnostic SELECT query.
/// The projection is `?x0`, or `?count` for a COUNT form.
pub fn compile_sparql(expr: &Expr) -> Result<String, CompileError> {
    let mut c = Compiler {
        next_var: 0,
        lines: Vec::new(),
        depth: 1,
    };
    let root = c.fresh();
    let select = match expr {
        Expr::Count(inner) => {
            c.set(inner, &root)?;
            format!("SELECT (COUNT(DISTINCT {root}) AS ?count) WHERE {{")
        }
        _ => {
            c.set(expr, &root)?;
            format!("SELECT DISTINCT {root} WHERE {{")
        }
    };
    let mut out = format!("PREFIX xsd: <{XSD}>\n{select}\n");
    for line in c.lines {
        out.push_str(&line);
        out.push('\n');
    }
    out.push('}');
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RdfTerm {
    Iri(String),
    Literal {
        value: String,
        datatype: Option<String>,
    },
    Blank(String),
}

/// Maps a result term back to a store node id.
pub fn node_from_term(term: &RdfTerm) -> String {
    match term {
        RdfTerm::Iri(iri) => match iri.strip_prefix(NS) {
            Some(id) => percent_decode(id),
            None => iri.clone(),
        },
        RdfTerm::Blank(id) => format!("_:{id}"),
        RdfTerm::Literal { value, datatype } => {
            let kind = datatype
                .as_deref()
                .and_then(LiteralKind::from_tag)
                .unwrap_or(LiteralKind::Str);
            Literal::new(kind, value)
                .unwrap_or_else(|| Literal::string(value))
                .encode()
        }
    }
}

/// Converts SELECT results into an answer set: a lone `count` column is a
/// count, otherwise the first column holds the entities.
pub fn answers_from_solutions(
    vars: &[String],
    rows: &[HashMap<String, RdfTerm>],
) -> Result<AnswerSet, NonExecutable> {
    let Some(first) = vars.first() else {
        return Ok(AnswerSet::Entities(Default::default()));
    };
    if vars.len() == 1 && first == "count" {
        let Some(term) = rows.first().and_then(|r| r.get(first)) else {
            return Ok(AnswerSet::Count(0));
        };
        let value = match term {
            RdfTerm::Literal { value, .. } => value,
            other => return Err(NonExecutable::Type(format!("non-literal count {other:?}"))),
        };
        return value
            .trim()
            .parse::<u64>()
            .map(AnswerSet::Count)
            .map_err(|_| NonExecutable::Type(format!("bad count `{value}`")));
    }
    Ok(AnswerSet::Entities(
        rows.iter()
            .filter_map(|r| r.get(first))
            .map(node_from_term)
            .collect(),
    ))
}

#[derive(Deserialize)]
struct ResultsDoc {
    head: Head,
    #[serde(default)]
    results: Option<Bindings>,
}

#[derive(Deserialize)]
struct Head {
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Deserialize)]
struct Bindings {
    bindings: Vec<HashMap<String, JsonTerm>>,
}

#[derive(Deserialize)]
struct JsonTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    datatype: Option<String>,
}

impl From<JsonTerm> for RdfTerm {
    fn from(t: JsonTerm) -> Self {
        match t.kind.as_str() {
            "uri" => RdfTerm::Iri(t.value),
            "bnode" => RdfTerm::Blank(t.value),
            _ => RdfTerm::Literal {
                value: t.value,
                datatype: t.datatype,
            },
        }
    }
}

/// Parses an `application/sparql-results+json` document.
pub fn parse_results_json(text: &str) -> Result<AnswerSet, NonExecutable> {
    let doc: ResultsDoc = serde_json::from_str(text)
        .map_err(|e| NonExecutable::Transport(format!("malformed results: {e}")))?;
    let rows: Vec<HashMap<String, RdfTerm>> = doc
        .results
        .map(|r| r.bindings)
        .unwrap_or_default()
        .into_iter()
        .map(|row| row.into_iter().map(|(k, v)| (k, v.into())).collect())
        .collect();
    answers_from_solutions(&doc.head.vars, &rows)
}

/// Remote SPARQL 1.1 Protocol endpoint (query via form POST, JSON results).
pub struct SparqlEndpoint {
    url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    throttle: Arc<Throttle>,
}

impl SparqlEndpoint {
    pub fn new(
        url: impl Into<String>,
        timeout: Duration,
        retry: RetryPolicy,
        throttle: Arc<Throttle>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        SparqlEndpoint {
            url: url.into(),
            agent,
            retry,
            throttle,
        }
    }

    fn attempt(&self, sparql: &str) -> Result<String, ureq::Error> {
        let _permit = self.throttle.acquire();
        self.agent
            .post(&self.url)
            .header("Accept", "application/sparql-results+json")
            .send_form([("query", sparql)])?
            .body_mut()
            .read_to_string()
    }

    /// Runs a query; transport failures become `NonExecutable::Transport`
    /// after the retry budget is spent.
    pub fn execute(&self, sparql: &str) -> Result<AnswerSet, NonExecutable> {
        let body =
            self.retry
                .run(|| self.attempt(sparql), retryable)
                .map_err(|(e, attempts)| {
                    NonExecutable::Transport(format!("{e} (after {attempts} attempt(s))"))
                })?;
        parse_results_json(&body)
    }

    pub fn evaluate(&self, expr: &Expr) -> Result<AnswerSet, NonExecutable> {
        let query = compile_sparql(expr).map_err(|e| match e {
            CompileError::NotGrounded(s) => NonExecutable::Ungrounded(s),
            CompileError::UnsupportedConstruct(s) => NonExecutable::Unsupported(s),
        })?;
        self.execute(&query)
    }
}

pub(crate) fn retryable(e: &ureq::Error) -> bool {
    match e {
        ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound => true,
        _ => false,
    }
}
