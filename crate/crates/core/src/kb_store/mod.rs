//! In-memory knowledge base: a deduplicated triple store with forward and
//! backward adjacency, plus the entity catalog.

mod catalog;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logical_form::{Literal, TYPE_RELATION, is_schema_token};

pub use catalog::{EntityCatalog, EntityRecord};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("duplicate mid `{0}` in catalog")]
    DuplicateMid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_error(line: usize, reason: impl Into<String>) -> KbError {
    KbError::Format {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Objects of `(node, relation, ·)`.
    Forward,
    /// Subjects of `(·, relation, node)`.
    Reverse,
}

/// Which edges count as a hop when collecting the two-hop relation set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopMode {
    #[default]
    Undirected,
    /// Outgoing edges only.
    Directed,
}

type Adjacency = HashMap<String, BTreeMap<String, BTreeSet<String>>>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    len: usize,
    forward: Adjacency,
    backward: Adjacency,
    /// relation -> (subject, object) pairs
    by_relation: HashMap<String, BTreeSet<(String, String)>>,
    relations: BTreeSet<String>,
    classes: BTreeSet<String>,
}

impl TripleStore {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut store = TripleStore::default();
        for t in triples {
            store.insert(t);
        }
        store
    }

    fn insert(&mut self, t: Triple) {
        let fresh = self
            .forward
            .entry(t.subject.clone())
            .or_default()
            .entry(t.relation.clone())
            .or_default()
            .insert(t.object.clone());
        if !fresh {
            return;
        }
        self.len += 1;
        if t.relation == TYPE_RELATION {
            self.classes.insert(t.object.clone());
        }
        self.relations.insert(t.relation.clone());
        self.by_relation
            .entry(t.relation.clone())
            .or_default()
            .insert((t.subject.clone(), t.object.clone()));
        self.backward
            .entry(t.object)
            .or_default()
            .entry(t.relation)
            .or_default()
            .insert(t.subject);
    }

    /// Reads `subject<TAB>relation<TAB>object` lines. Blank lines are skipped;
    /// literal nodes are canonicalized.
    pub fn parse(reader: impl Read) -> Result<Self, KbError> {
        let mut store = TripleStore::default();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [subject, relation, object] = cols[..] else {
                return Err(format_error(
                    line_no,
                    format!("expected 3 tab-separated columns, found {}", cols.len()),
                ));
            };
            if !is_schema_token(relation) {
                return Err(format_error(
                    line_no,
                    format!("`{relation}` is not a valid relation id"),
                ));
            }
            let subject = node_id(subject)
                .ok_or_else(|| format_error(line_no, format!("bad node `{subject}`")))?;
            let object = node_id(object)
                .ok_or_else(|| format_error(line_no, format!("bad node `{object}`")))?;
            store.insert(Triple::new(subject, relation, object));
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::parse(File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        let mut subjects: Vec<&String> = self.forward.keys().collect();
        subjects.sort();
        subjects.into_iter().flat_map(move |s| {
            self.forward[s].iter().flat_map(move |(r, objs)| {
                objs.iter()
                    .map(move |o| Triple::new(s.as_str(), r.as_str(), o.as_str()))
            })
        })
    }

    pub fn neighbors(
        &self,
        node: &str,
        relation: &str,
        direction: Direction,
    ) -> Option<&BTreeSet<String>> {
        let adj = match direction {
            Direction::Forward => &self.forward,
            Direction::Reverse => &self.backward,
        };
        adj.get(node)?.get(relation)
    }

    /// All `(subject, object)` pairs connected by `relation`.
    pub fn edges(&self, relation: &str) -> impl Iterator<Item = (&str, &str)> {
        self.by_relation
            .get(relation)
            .into_iter()
            .flatten()
            .map(|(s, o)| (s.as_str(), o.as_str()))
    }

    /// Relation ids (all edge labels).
    pub fn relations(&self) -> &BTreeSet<String> {
        &self.relations
    }

    /// Class ids (objects of the type relation).
    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn has_relation(&self, id: &str) -> bool {
        self.relations.contains(id)
    }

    pub fn has_class(&self, id: &str) -> bool {
        self.classes.contains(id)
    }

    /// Instances of a class.
    pub fn members(&self, class: &str) -> Option<&BTreeSet<String>> {
        self.neighbors(class, TYPE_RELATION, Direction::Reverse)
    }

    /// Relations on edges touching `node`, honoring `mode`.
    fn incident<'a>(
        &'a self,
        node: &str,
        mode: HopMode,
    ) -> impl Iterator<Item = (&'a String, &'a BTreeSet<String>)> {
        let fwd = self.forward.get(node).into_iter().flatten();
        let bwd = match mode {
            HopMode::Undirected => self.backward.get(node),
            HopMode::Directed => None,
        };
        fwd.chain(bwd.into_iter().flatten())
    }

    /// Relations within two hops of any of `mids`: labels of edges incident
    /// to each mid and of edges incident to its one-hop neighbors.
    pub fn two_hop_relations<'a>(
        &self,
        mids: impl IntoIterator<Item = &'a str>,
        mode: HopMode,
    ) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut frontier = BTreeSet::new();
        for mid in mids {
            for (rel, nodes) in self.incident(mid, mode) {
                out.insert(rel.clone());
                frontier.extend(nodes.iter().map(String::as_str));
            }
        }
        for node in frontier {
            for (rel, _) in self.incident(node, mode) {
                out.insert(rel.clone());
            }
        }
        out
    }
}

/// Accepts a bare node id or an encoded literal, returning its canonical form.
fn node_id(raw: &str) -> Option<String> {
    if raw.is_empty() {
        return None;
    }
    if raw.starts_with('"') {
        return Literal::decode(raw).map(|l| l.encode());
    }
    Some(raw.to_string())
}
