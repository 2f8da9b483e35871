#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use proptest::prelude::*;

use kbbind::binder::KbIndexes;
use kbbind::draft_gen::{ExemplarPool, MockLlm, PipelineConfig};
use kbbind::executor::{AnswerSet, RdfTerm, answers_from_solutions, node_term};
use kbbind::harness::{
    DatasetRecord, Execution, Pipeline, Prediction, exemplar_pool, load_dataset,
};
use kbbind::kb_store::{EntityCatalog, Triple, TripleStore};
use kbbind::logical_form::{Comparison, Expr, Leaf, Literal, LiteralKind, TYPE_RELATION, is_mid};
use kbbind::retrieval::{Bm25Params, tokenize};
use kbbind::throttle::RetryPolicy;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

// ------------------------------------------------------------------ fixtures

pub struct Bench {
    pub store: TripleStore,
    pub catalog: EntityCatalog,
    pub indexes: KbIndexes,
    pub pool: ExemplarPool,
    pub llm: MockLlm,
    pub records: Vec<DatasetRecord>,
}

impl Bench {
    pub fn load(dir: &str, dataset: &str) -> Bench {
        let dir = fixture(dir);
        let store = TripleStore::load(dir.join("kb.tsv")).unwrap();
        let catalog = EntityCatalog::load(dir.join("catalog.tsv")).unwrap();
        let indexes = KbIndexes::build(&store, &catalog, Bm25Params::default()).unwrap();
        let train = load_dataset(dir.join("train.jsonl")).unwrap();
        let (pool, skipped) = exemplar_pool(&train, &catalog);
        assert!(skipped.is_empty(), "{skipped:?}");
        let llm = MockLlm::load(dir.join("drafts.jsonl")).unwrap();
        let records = load_dataset(dir.join(dataset)).unwrap();
        Bench {
            store,
            catalog,
            indexes,
            pool,
            llm,
            records,
        }
    }

    pub fn synthetic() -> Bench {
        Bench::load("synthetic", "test.jsonl")
    }

    pub fn diagnose_chain() -> Bench {
        Bench::load("diagnose", "dataset.jsonl")
    }

    pub fn pipeline(&self, config: PipelineConfig) -> Pipeline<'_> {
        Pipeline {
            store: &self.store,
            catalog: &self.catalog,
            indexes: &self.indexes,
            pool: &self.pool,
            llm: &self.llm,
            execution: Execution::Local,
            retry: RetryPolicy::immediate(1),
            config,
            timing: false,
        }
    }

    /// Every mock draft recorded for `qid`.
    pub fn llm_drafts(&self, qid: &str) -> Vec<String> {
        use kbbind::draft_gen::{CompletionRequest, LlmClient};
        self.llm
            .complete(&CompletionRequest::new(qid, "", usize::MAX, 0.0))
            .unwrap()
    }

    pub fn run(&self, config: PipelineConfig) -> Vec<Prediction> {
        self.pipeline(config).run(&self.records).unwrap()
    }
}

/// Default configuration with the shot count capped by the pool.
pub fn bench_config(shots: usize, drafts: usize) -> PipelineConfig {
    PipelineConfig {
        shots,
        drafts,
        ..PipelineConfig::default()
    }
}

// ------------------------------------------------------- draft AST strategies

const KEYWORDS: [&str; 10] = [
    "and", "join", "r", "count", "argmax", "argmin", "lt", "le", "gt", "ge",
];

fn surface_name() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{1,6}( [A-Z][a-z]{1,6}){0,2}".prop_filter("keyword inside a name", |s| {
        s.split(' ')
            .all(|w| !KEYWORDS.contains(&w.to_lowercase().as_str()))
    })
}

fn schema_token() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,5}(\\.[a-z][a-z0-9_]{0,5}){1,2}".prop_filter("reads as a mid", |s| !is_mid(s))
}

fn mid() -> impl Strategy<Value = String> {
    "[mg]\\.0[0-9a-z_]{1,6}"
}

pub fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::int),
        any::<f64>().prop_filter_map("finite", Literal::float),
        (1000..2999i32, 1..=12u8, 1..=28u8)
            .prop_map(|(y, m, d)| Literal::date(&format!("{y:04}-{m:02}-{d:02}")).unwrap()),
        (1000..2999i32).prop_map(|y| Literal::date(&format!("{y:04}")).unwrap()),
        (1000..2999i32, 1..=12u8)
            .prop_map(|(y, m)| Literal::date(&format!("{y:04}-{m:02}")).unwrap()),
        "[ -~]{0,12}".prop_map(|s| Literal::string(&s)),
    ]
}

fn relation() -> impl Strategy<Value = Expr> {
    (schema_token(), 0..3usize)
        .prop_map(|(r, flips)| (0..flips).fold(Expr::schema(r), |e, _| Expr::reverse(e)))
}

fn comparison() -> impl Strategy<Value = Comparison> {
    prop_oneof![
        Just(Comparison::Lt),
        Just(Comparison::Le),
        Just(Comparison::Gt),
        Just(Comparison::Ge)
    ]
}

/// Leaves that the parser would glue into one multi-word name when adjacent.
fn word_like(e: &Expr) -> bool {
    match e {
        Expr::Leaf(Leaf::Entity(kbbind::logical_form::EntityRef::Surface(_))) => true,
        Expr::Leaf(Leaf::Literal(l)) => {
            let s = l.to_string();
            !s.contains('.') && !s.contains("^^") && !s.starts_with('"')
        }
        _ => false,
    }
}

/// Draft ASTs of depth at most `depth` in the full grammar, restricted to
/// trees whose rendering is unambiguous.
pub fn draft_ast(depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        surface_name().prop_map(Expr::surface),
        mid().prop_map(Expr::mid),
        schema_token().prop_map(Expr::schema),
        literal().prop_map(Expr::literal),
    ];
    leaf.prop_recursive(depth, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_filter("adjacent bare words", |(a, b)| !(word_like(a)
                    && word_like(b)))
                .prop_map(|(a, b)| Expr::and(a, b)),
            (relation(), inner.clone()).prop_map(|(r, s)| Expr::join(r, s)),
            inner.clone().prop_map(Expr::count),
            (inner.clone(), relation()).prop_map(|(s, r)| Expr::arg_max(s, r)),
            (inner, relation()).prop_map(|(s, r)| Expr::arg_min(s, r)),
            (comparison(), relation(), literal()).prop_map(|(op, r, l)| Expr::compare(
                op,
                r,
                Expr::literal(l)
            )),
        ]
    })
}

pub fn depth(e: &Expr) -> usize {
    1 + e.children().into_iter().map(depth).max().unwrap_or(0)
}

// ----------------------------------------------------- random KB + grounded LF

pub const ENT_RELS: [&str; 2] = ["r.a.x", "r.a.y"];
pub const NUM_REL: &str = "r.n.v";
pub const MIXED_REL: &str = "r.n.w";
pub const CLASSES: [&str; 2] = ["c.k0", "c.k1"];

fn entity(i: usize) -> String {
    format!("m.e{i}")
}

fn int_node(v: i64) -> String {
    Literal::int(v).encode()
}

/// Up to `max` triples over 8 entities: entity-valued relations, an integer
/// attribute, a mostly-integer attribute with stray entity values, and class
/// membership.
pub fn random_store(max: usize) -> impl Strategy<Value = Vec<Triple>> {
    let triple = prop_oneof![
        4 => (0..8usize, 0..2usize, 0..8usize).prop_map(|(s, r, o)| Triple::new(entity(s), ENT_RELS[r], entity(o))),
        2 => (0..8usize, 0..6i64).prop_map(|(s, v)| Triple::new(entity(s), NUM_REL, int_node(v))),
        1 => (0..8usize, 0..10usize).prop_map(|(s, v)| {
            let o = if v < 9 { int_node(v as i64) } else { entity(v % 8) };
            Triple::new(entity(s), MIXED_REL, o)
        }),
        2 => (0..8usize, 0..2usize).prop_map(|(s, c)| Triple::new(entity(s), TYPE_RELATION, CLASSES[c])),
    ];
    proptest::collection::vec(triple, 0..=max)
}

fn grounded_relation() -> impl Strategy<Value = Expr> {
    let name = prop_oneof![
        Just(ENT_RELS[0]),
        Just(ENT_RELS[1]),
        Just(NUM_REL),
        Just(MIXED_REL),
        Just("r.zz.unknown"),
    ];
    (name, any::<bool>()).prop_map(|(r, rev)| {
        if rev {
            Expr::reverse(Expr::schema(r))
        } else {
            Expr::schema(r)
        }
    })
}

/// Grounded set expressions of depth at most `depth`, optionally counted.
pub fn grounded_ast(depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        4 => (0..10usize).prop_map(|i| Expr::mid(entity(i))),
        2 => prop_oneof![Just("c.k0"), Just("c.k1"), Just("c.k9")].prop_map(Expr::schema),
        1 => (0..6i64).prop_map(|v| Expr::literal(Literal::int(v))),
    ];
    let set = leaf.prop_recursive(depth.saturating_sub(1), 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (grounded_relation(), inner.clone()).prop_map(|(r, s)| Expr::join(r, s)),
            (inner.clone(), grounded_relation()).prop_map(|(s, r)| Expr::arg_max(s, r)),
            (inner, grounded_relation()).prop_map(|(s, r)| Expr::arg_min(s, r)),
            (comparison(), grounded_relation(), 0..6i64).prop_map(|(op, r, v)| Expr::compare(
                op,
                r,
                Expr::literal(Literal::int(v))
            )),
        ]
    });
    (set, proptest::bool::weighted(0.2))
        .prop_map(|(s, count)| if count { Expr::count(s) } else { s })
}

// ------------------------------------------------------------ naive evaluator

/// Full-scan reference semantics over a plain triple list. Errors carry no
/// detail; only success and the answer are compared.
pub fn naive_eval(triples: &[Triple], e: &Expr) -> Result<AnswerSet, ()> {
    match e {
        Expr::Count(inner) => Ok(AnswerSet::Count(naive_set(triples, inner)?.len() as u64)),
        _ => Ok(AnswerSet::Entities(naive_set(triples, e)?)),
    }
}

fn naive_relation(triples: &[Triple], e: &Expr) -> Result<(String, bool), ()> {
    match e {
        Expr::Leaf(Leaf::Schema(r)) if triples.iter().any(|t| &t.relation == r) => {
            Ok((r.clone(), false))
        }
        Expr::Reverse(inner) => naive_relation(triples, inner).map(|(r, inv)| (r, !inv)),
        _ => Err(()),
    }
}

fn int_value(node: &str) -> Result<i64, ()> {
    let rest = node.strip_prefix('"').ok_or(())?;
    let (v, tag) = rest.split_once("\"^^").ok_or(())?;
    if tag != "int" {
        return Err(());
    }
    v.parse().map_err(|_| ())
}

/// (entity, value) pairs of relation `r` read in the relation's direction.
fn oriented(triples: &[Triple], r: &str, inv: bool) -> Vec<(String, String)> {
    triples
        .iter()
        .filter(|t| t.relation == r)
        .map(|t| {
            if inv {
                (t.object.clone(), t.subject.clone())
            } else {
                (t.subject.clone(), t.object.clone())
            }
        })
        .collect()
}

fn naive_set(triples: &[Triple], e: &Expr) -> Result<BTreeSet<String>, ()> {
    match e {
        Expr::Leaf(Leaf::Entity(kbbind::logical_form::EntityRef::Mid(m))) => {
            Ok(BTreeSet::from([m.clone()]))
        }
        Expr::Leaf(Leaf::Literal(l)) => Ok(BTreeSet::from([l.encode()])),
        Expr::Leaf(Leaf::Schema(c)) => {
            let members: BTreeSet<String> = triples
                .iter()
                .filter(|t| t.relation == TYPE_RELATION && &t.object == c)
                .map(|t| t.subject.clone())
                .collect();
            if members.is_empty() {
                Err(())
            } else {
                Ok(members)
            }
        }
        Expr::And(a, b) => {
            let a = naive_set(triples, a)?;
            let b = naive_set(triples, b)?;
            Ok(a.intersection(&b).cloned().collect())
        }
        Expr::Join(rel, s) => {
            let (r, inv) = naive_relation(triples, rel)?;
            let s = naive_set(triples, s)?;
            // (x, r, y) with y in S yields x; reversed, (y, r, x) with y in S yields x
            Ok(oriented(triples, &r, !inv)
                .into_iter()
                .filter(|(y, _)| s.contains(y))
                .map(|(_, x)| x)
                .collect())
        }
        Expr::ArgMax(s, rel) | Expr::ArgMin(s, rel) => {
            let (r, inv) = naive_relation(triples, rel)?;
            let s = naive_set(triples, s)?;
            let mut keyed: BTreeMap<String, i64> = BTreeMap::new();
            for (x, v) in oriented(triples, &r, inv) {
                if !s.contains(&x) {
                    continue;
                }
                let v = int_value(&v)?;
                let slot = keyed.entry(x).or_insert(v);
                *slot = if matches!(e, Expr::ArgMax(..)) {
                    (*slot).max(v)
                } else {
                    (*slot).min(v)
                };
            }
            let best = if matches!(e, Expr::ArgMax(..)) {
                keyed.values().max()
            } else {
                keyed.values().min()
            };
            Ok(match best {
                Some(&b) => keyed
                    .into_iter()
                    .filter(|&(_, v)| v == b)
                    .map(|(x, _)| x)
                    .collect(),
                None => BTreeSet::new(),
            })
        }
        Expr::Compare(op, rel, bound) => {
            let (r, inv) = naive_relation(triples, rel)?;
            let Expr::Leaf(Leaf::Literal(l)) = bound.as_ref() else {
                return Err(());
            };
            if l.kind() != LiteralKind::Int {
                return Err(());
            }
            let bound: i64 = l.value().parse().unwrap();
            let mut out = BTreeSet::new();
            for (x, v) in oriented(triples, &r, inv) {
                let v = int_value(&v)?;
                let keep = match op {
                    Comparison::Lt => v < bound,
                    Comparison::Le => v <= bound,
                    Comparison::Gt => v > bound,
                    Comparison::Ge => v >= bound,
                };
                if keep {
                    out.insert(x);
                }
            }
            Ok(out)
        }
        Expr::Count(_) | Expr::Reverse(_) | Expr::Leaf(Leaf::Entity(_)) => Err(()),
    }
}

// ---------------------------------------------------------------- BM25 oracle

/// Okapi BM25 computed from scratch for every document, in query-token order.
pub fn bm25_oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = toks.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let q = tokenize(query);
    docs.iter()
        .zip(&toks)
        .map(|((id, _), d)| {
            let mut score = 0.0;
            for term in &q {
                let tf = d.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = toks.iter().filter(|t| t.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let norm = 1.0 - b + b * d.len() as f64 / avgdl;
                score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            (id.clone(), score)
        })
        .collect()
}

/// Score-all-and-sort: positive scores, descending, ties by id.
pub fn oracle_top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.retain(|(_, s)| *s > 0.0);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

// ----------------------------------------------------------- SPARQL reference

/// Loads `store` into an in-memory oxigraph store.
pub fn oxigraph_store(store: &TripleStore) -> oxigraph::store::Store {
    let mut turtle = String::from("@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .\n");
    for t in store.triples() {
        turtle.push_str(&format!(
            "{} {} {} .\n",
            node_term(&t.subject),
            node_term(&t.relation),
            node_term(&t.object)
        ));
    }
    let ox = oxigraph::store::Store::new().unwrap();
    ox.load_from_reader(oxigraph::io::RdfFormat::Turtle, turtle.as_bytes())
        .unwrap();
    ox
}

fn to_rdf_term(term: &oxigraph::model::Term) -> RdfTerm {
    use oxigraph::model::Term;
    match term {
        Term::NamedNode(n) => RdfTerm::Iri(n.as_str().to_string()),
        Term::BlankNode(b) => RdfTerm::Blank(b.as_str().to_string()),
        Term::Literal(l) => RdfTerm::Literal {
            value: l.value().to_string(),
            datatype: Some(l.datatype().as_str().to_string()),
        },
        #[allow(unreachable_patterns)]
        _ => RdfTerm::Blank(String::new()),
    }
}

/// Runs a SELECT on oxigraph and maps the solutions back to an answer set.
pub fn oxigraph_answers(ox: &oxigraph::store::Store, sparql: &str) -> AnswerSet {
    use oxigraph::sparql::{QueryResults, SparqlEvaluator};
    let QueryResults::Solutions(solutions) = SparqlEvaluator::new()
        .parse_query(sparql)
        .unwrap_or_else(|e| panic!("{e}\n{sparql}"))
        .on_store(ox)
        .execute()
        .unwrap()
    else {
        panic!("not a SELECT")
    };
    let vars: Vec<String> = solutions
        .variables()
        .iter()
        .map(|v| v.as_str().to_string())
        .collect();
    let rows: Vec<HashMap<String, RdfTerm>> = solutions
        .map(|s| {
            let s = s.unwrap();
            s.iter()
                .map(|(v, t)| (v.as_str().to_string(), to_rdf_term(t)))
                .collect()
        })
        .collect();
    answers_from_solutions(&vars, &rows).unwrap()
}

/// SPARQL JSON results for a SELECT, as an endpoint would return them.
pub fn oxigraph_results_json(ox: &oxigraph::store::Store, sparql: &str) -> Vec<u8> {
    use oxigraph::sparql::results::{QueryResultsFormat, QueryResultsSerializer};
    use oxigraph::sparql::{QueryResults, SparqlEvaluator};
    let QueryResults::Solutions(solutions) = SparqlEvaluator::new()
        .parse_query(sparql)
        .unwrap_or_else(|e| panic!("{e}\n{sparql}"))
        .on_store(ox)
        .execute()
        .unwrap()
    else {
        panic!("not a SELECT")
    };
    let mut w = QueryResultsSerializer::from_format(QueryResultsFormat::Json)
        .serialize_solutions_to_writer(Vec::new(), solutions.variables().to_vec())
        .unwrap();
    for s in solutions {
        w.serialize(&s.unwrap()).unwrap();
    }
    w.finish().unwrap()
}

// ------------------------------------------------------------ mock endpoint

/// Minimal SPARQL protocol server answering form-POSTed queries from an
/// oxigraph store. `fail_first` requests get a 503 before real answers start.
pub struct MockEndpoint {
    pub url: String,
    pub requests: std::sync::Arc<std::sync::atomic::AtomicUsize>,
}

impl MockEndpoint {
    pub fn start(store: oxigraph::store::Store, fail_first: usize, status: u16) -> MockEndpoint {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::sync::atomic::Ordering;
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/sparql", listener.local_addr().unwrap());
        let requests = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let seen = requests.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(mut conn) = conn else { continue };
                let store = store.clone();
                let n = seen.fetch_add(1, Ordering::SeqCst);
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(conn.try_clone().unwrap());
                    let mut length = 0;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        let line = line.trim_end();
                        if line.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = line.split_once(':')
                            && k.eq_ignore_ascii_case("content-length")
                        {
                            length = v.trim().parse().unwrap();
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let (code, payload) = if n < fail_first {
                        (status, b"unavailable".to_vec())
                    } else {
                        let query = form_urlencoded::parse(&body)
                            .find(|(k, _)| k == "query")
                            .map(|(_, v)| v.into_owned())
                            .unwrap_or_default();
                        (200, oxigraph_results_json(&store, &query))
                    };
                    let head = format!(
                        "HTTP/1.1 {code} X\r\nContent-Type: application/sparql-results+json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        payload.len()
                    );
                    let _ = conn.write_all(head.as_bytes());
                    let _ = conn.write_all(&payload);
                });
            }
        });
        MockEndpoint { url, requests }
    }
}

// ------------------------------------------------- random KB for the binder

pub const NAMES: [&str; 6] = [
    "Red Fox",
    "Blue Lake",
    "Old Mill",
    "Red Lake",
    "Stone Bridge",
    "Silver Moon",
];

/// A random KB plus catalog: entity `m.e{i}` is named `NAMES[names[i]]`, so
/// homonyms are common.
pub fn random_kb() -> impl Strategy<Value = (Vec<Triple>, EntityCatalog)> {
    (
        random_store(60),
        proptest::collection::vec((0..NAMES.len(), 1..100u32), 8),
    )
        .prop_map(|(triples, names)| {
            let catalog =
                EntityCatalog::from_records(names.into_iter().enumerate().map(|(i, (n, pop))| {
                    kbbind::kb_store::EntityRecord {
                        mid: entity(i),
                        friendly_name: NAMES[n].to_string(),
                        popularity: pop as f64,
                    }
                }))
                .unwrap();
            (triples, catalog)
        })
}

fn draft_relation() -> impl Strategy<Value = Expr> {
    let name = prop_oneof![
        Just("r.a.x"),
        Just("r.a.y"),
        Just("r.n.v"),
        Just("r.n.w"),
        Just("r.a.xx"),
        Just("q.zz.unknown"),
    ];
    (name, any::<bool>()).prop_map(|(r, rev)| {
        if rev {
            Expr::reverse(Expr::schema(r))
        } else {
            Expr::schema(r)
        }
    })
}

/// Drafts over the random KB vocabulary: catalog names with case noise,
/// one unknown name, real and hallucinated schema tokens.
pub fn kb_draft(depth: u32) -> impl Strategy<Value = Expr> {
    let name = prop_oneof![
        4 => (0..NAMES.len(), any::<bool>()).prop_map(|(i, lower)| {
            if lower { NAMES[i].to_lowercase() } else { NAMES[i].to_string() }
        }),
        1 => Just("Zzq Unknown".to_string()),
    ];
    let leaf = prop_oneof![
        4 => name.prop_map(Expr::surface),
        2 => prop_oneof![Just("c.k0"), Just("c.k1"), Just("c.k9")].prop_map(Expr::schema),
        1 => (0..6i64).prop_map(|v| Expr::literal(Literal::int(v))),
    ];
    let set = leaf.prop_recursive(depth.saturating_sub(1), 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_filter("adjacent bare words", |(a, b)| !(word_like(a)
                    && word_like(b)))
                .prop_map(|(a, b)| Expr::and(a, b)),
            (draft_relation(), inner.clone()).prop_map(|(r, s)| Expr::join(r, s)),
            (inner.clone(), draft_relation()).prop_map(|(s, r)| Expr::arg_max(s, r)),
            (inner, draft_relation()).prop_map(|(s, r)| Expr::arg_min(s, r)),
            (comparison(), draft_relation(), 0..6i64).prop_map(|(op, r, v)| Expr::compare(
                op,
                r,
                Expr::literal(Literal::int(v))
            )),
        ]
    });
    (set, proptest::bool::weighted(0.2))
        .prop_map(|(s, count)| if count { Expr::count(s) } else { s })
}

/// Relation slots of `candidate` that fall outside the two-hop set of its
/// own entities. Drafts without entities are unconstrained.
pub fn hop_violations(
    store: &TripleStore,
    candidate: &Expr,
    mode: kbbind::kb_store::HopMode,
) -> Vec<String> {
    let mids = candidate.mids();
    if mids.is_empty() {
        return Vec::new();
    }
    let hop = store.two_hop_relations(mids.iter().copied(), mode);
    kbbind::logical_form::extract_slots(candidate)
        .relations
        .into_iter()
        .map(|s| s.token)
        .filter(|r| !hop.contains(r))
        .collect()
}
