//! Grounding drafts against the knowledge base.
//!
//! Entity slots bind to mids by case-insensitive friendly-name match (top-n
//! by popularity), falling back to the best BM25 friendly name as an anchor.
//! Relation slots bind to the top-m BM25 matches for `slot text + question`
//! that lie within two hops of the current entity permutation; class slots
//! bind the same way against the class vocabulary, without the hop
//! constraint. Candidates are emitted permutation by permutation, and within
//! a permutation best-first by summed schema score.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::Provenance;
use crate::kb_store::{EntityCatalog, HopMode, TripleStore};
use crate::logical_form::{Bindings, EntityRef, Expr, SlotPath, extract_slots, substitute};
use crate::retrieval::{Bm25Index, Bm25Params, Document, RetrievalError, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("no catalog entity resembles `{0}`")]
    NoCandidate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    Exact,
    Bm25Anchored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub mid: String,
    pub friendly_name: String,
    pub popularity: f64,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityBinding {
    pub path: SlotPath,
    pub candidates: Vec<EntityCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Relation,
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaCandidate {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaBinding {
    pub path: SlotPath,
    pub kind: SchemaKind,
    pub candidates: Vec<SchemaCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedCandidate {
    pub expr: Expr,
    pub provenance: Provenance,
    /// Rank of the chosen mid in each entity slot's binding.
    pub entity_ranks: Vec<usize>,
    /// Summed BM25 score of the chosen schema items.
    pub score: f64,
}

/// Retrieval indexes over the KB vocabularies.
#[derive(Debug, Clone)]
pub struct KbIndexes {
    /// One document per case-folded friendly name.
    pub names: Bm25Index,
    pub relations: Bm25Index,
    pub classes: Bm25Index,
}

impl KbIndexes {
    pub fn build(
        store: &TripleStore,
        catalog: &EntityCatalog,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let names = Bm25Index::build(
            catalog
                .folded_names()
                .into_iter()
                .map(|n| Document::new(n, n)),
            params,
        )?;
        let relations = Bm25Index::build(
            store
                .relations()
                .iter()
                .map(|r| Document::new(r.as_str(), r.as_str())),
            params,
        )?;
        let classes = Bm25Index::build(
            store
                .classes()
                .iter()
                .map(|c| Document::new(c.as_str(), c.as_str())),
            params,
        )?;
        Ok(KbIndexes {
            names,
            relations,
            classes,
        })
    }
}

/// Binds one surface name (or literal mid) to at most `n` catalog entities.
pub fn bind_entity(
    entity: &EntityRef,
    catalog: &EntityCatalog,
    names: &Bm25Index,
    n: usize,
) -> Result<Vec<EntityCandidate>, BindError> {
    let to_candidates = |records: Vec<&crate::kb_store::EntityRecord>, kind| {
        records
            .into_iter()
            .take(n)
            .map(|r| EntityCandidate {
                mid: r.mid.clone(),
                friendly_name: r.friendly_name.clone(),
                popularity: r.popularity,
                kind,
            })
            .collect::<Vec<_>>()
    };
    let surface = match entity {
        EntityRef::Mid(mid) => {
            if let Some(r) = catalog.get(mid) {
                return Ok(to_candidates(vec![r], MatchKind::Exact));
            }
            mid
        }
        EntityRef::Surface(s) => s,
    };
    let exact = catalog.name_to_mids(surface, true);
    if !exact.is_empty() {
        return Ok(to_candidates(exact, MatchKind::Exact));
    }
    let anchor = names.top_k_tokens(&tokenize(surface), 1);
    let Some((anchor, _)) = anchor.first() else {
        return Err(BindError::NoCandidate(surface.clone()));
    };
    Ok(to_candidates(
        catalog.name_to_mids(anchor, true),
        MatchKind::Bm25Anchored,
    ))
}

/// Full ranking of a vocabulary for one schema slot: the slot token itself
/// first when it exists verbatim, then BM25 over `slot text + question`.
pub fn rank_schema(slot_text: &str, question: &str, index: &Bm25Index) -> Vec<SchemaCandidate> {
    let query = tokenize(&format!("{slot_text} {question}"));
    let mut ranked: Vec<SchemaCandidate> = index
        .top_k_tokens(&query, index.len().max(1))
        .into_iter()
        .map(|(id, score)| SchemaCandidate { id, score })
        .collect();
    if let Some(pos) = ranked.iter().position(|c| c.id == slot_text) {
        let hit = ranked.remove(pos);
        ranked.insert(0, hit);
    } else if index.doc_len(slot_text).is_some() {
        let score = index.score(&query, slot_text).unwrap_or(0.0);
        ranked.insert(
            0,
            SchemaCandidate {
                id: slot_text.to_string(),
                score,
            },
        );
    }
    ranked
}

/// Top `m` schema items for a slot, restricted to `constraint` when given.
pub fn bind_schema(
    slot_text: &str,
    question: &str,
    index: &Bm25Index,
    constraint: Option<&BTreeSet<String>>,
    m: usize,
) -> Vec<SchemaCandidate> {
    filter_top(&rank_schema(slot_text, question, index), constraint, m)
}

fn filter_top(
    ranked: &[SchemaCandidate],
    constraint: Option<&BTreeSet<String>>,
    m: usize,
) -> Vec<SchemaCandidate> {
    ranked
        .iter()
        .filter(|c| constraint.is_none_or(|set| set.contains(&c.id)))
        .take(m)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinderConfig {
    /// Entity candidates per slot.
    pub entity_top: usize,
    /// Schema candidates per slot.
    pub relation_top: usize,
    /// Maximum grounded candidates per draft.
    pub budget: usize,
    pub hop_mode: HopMode,
}

impl Default for BinderConfig {
    fn default() -> Self {
        BinderConfig {
            entity_top: 15,
            relation_top: 10,
            budget: 2000,
            hop_mode: HopMode::Undirected,
        }
    }
}

/// Two-hop relation sets memoized by mid set. Shareable across the drafts of
/// one question.
#[derive(Debug, Default)]
pub struct HopCache {
    sets: HashMap<Vec<String>, Arc<BTreeSet<String>>>,
}

impl HopCache {
    pub fn get(
        &mut self,
        store: &TripleStore,
        mids: &[&str],
        mode: HopMode,
    ) -> Arc<BTreeSet<String>> {
        let mut key: Vec<String> = mids.iter().map(|m| m.to_string()).collect();
        key.sort();
        key.dedup();
        self.sets
            .entry(key)
            .or_insert_with_key(|k| {
                Arc::new(store.two_hop_relations(k.iter().map(String::as_str), mode))
            })
            .clone()
    }
}

/// Everything the binder looked at for one draft, kept for diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BindingTrace {
    pub entity_bindings: Vec<EntityBinding>,
    /// Union over permutations of relation-slot candidates.
    pub relation_candidates: BTreeSet<String>,
    pub class_candidates: BTreeSet<String>,
    pub permutations: usize,
    /// Slot whose entity binding failed, if any.
    pub unbound: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub candidates: Vec<GroundedCandidate>,
    pub trace: BindingTrace,
}

pub struct Binder<'a> {
    pub store: &'a TripleStore,
    pub catalog: &'a EntityCatalog,
    pub indexes: &'a KbIndexes,
    pub config: BinderConfig,
}

struct SchemaSlotPlan {
    path: SlotPath,
    kind: SchemaKind,
    ranked: Vec<SchemaCandidate>,
}

impl Binder<'_> {
    /// Grounds `draft` into at most `config.budget` candidates, ordered by
    /// entity permutation then best-first schema combination.
    pub fn enumerate(
        &self,
        draft: &Expr,
        question: &str,
        draft_rank: usize,
        hops: &mut HopCache,
    ) -> Enumeration {
        let slots = extract_slots(draft);
        let mut out = Enumeration::default();

        let mut entity_lists = Vec::with_capacity(slots.entities.len());
        for slot in &slots.entities {
            match bind_entity(
                &slot.entity,
                self.catalog,
                &self.indexes.names,
                self.config.entity_top,
            ) {
                Ok(c) if !c.is_empty() => {
                    out.trace.entity_bindings.push(EntityBinding {
                        path: slot.path.clone(),
                        candidates: c.clone(),
                    });
                    entity_lists.push(c);
                }
                _ => {
                    out.trace.unbound = Some(slot.entity.text().to_string());
                    return out;
                }
            }
        }

        let plans: Vec<SchemaSlotPlan> = slots
            .relations
            .iter()
            .map(|s| (s, SchemaKind::Relation, &self.indexes.relations))
            .chain(
                slots
                    .classes
                    .iter()
                    .map(|s| (s, SchemaKind::Class, &self.indexes.classes)),
            )
            .map(|(s, kind, index)| SchemaSlotPlan {
                path: s.path.clone(),
                kind,
                ranked: rank_schema(&s.token, question, index),
            })
            .collect();
        let class_lists: Vec<Option<Vec<SchemaCandidate>>> = plans
            .iter()
            .map(|p| {
                (p.kind == SchemaKind::Class)
                    .then(|| filter_top(&p.ranked, None, self.config.relation_top))
            })
            .collect();
        for list in class_lists.iter().flatten() {
            out.trace
                .class_candidates
                .extend(list.iter().map(|c| c.id.clone()));
        }

        let permutations = entity_permutations(&entity_lists);
        for (perm_index, ranks) in permutations.iter().enumerate() {
            if out.candidates.len() >= self.config.budget {
                break;
            }
            out.trace.permutations += 1;
            let mids: Vec<&str> = ranks
                .iter()
                .zip(&entity_lists)
                .map(|(&r, l)| l[r].mid.as_str())
                .collect();
            let constraint = if mids.is_empty() {
                None
            } else {
                Some(hops.get(self.store, &mids, self.config.hop_mode))
            };

            let lists: Vec<Vec<SchemaCandidate>> = plans
                .iter()
                .zip(&class_lists)
                .map(|(p, fixed)| match fixed {
                    Some(l) => l.clone(),
                    None => filter_top(&p.ranked, constraint.as_deref(), self.config.relation_top),
                })
                .collect();
            for (p, l) in plans.iter().zip(&lists) {
                if p.kind == SchemaKind::Relation {
                    out.trace
                        .relation_candidates
                        .extend(l.iter().map(|c| c.id.clone()));
                }
            }
            if lists.iter().any(Vec::is_empty) {
                continue;
            }

            let mut bindings = Bindings::new();
            for ((slot, &r), list) in slots.entities.iter().zip(ranks).zip(&entity_lists) {
                bindings.insert(slot.path.clone(), list[r].mid.clone());
            }
            let remaining = self.config.budget - out.candidates.len();
            for (combo, score) in best_first(&lists, remaining) {
                for ((plan, list), &r) in plans.iter().zip(&lists).zip(&combo) {
                    bindings.insert(plan.path.clone(), list[r].id.clone());
                }
                let expr = substitute(draft, &bindings).expect("every slot is bound");
                out.candidates.push(GroundedCandidate {
                    expr,
                    provenance: Provenance {
                        draft_rank,
                        permutation: perm_index,
                        slot_ranks: combo,
                    },
                    entity_ranks: ranks.clone(),
                    score,
                });
            }
        }
        out
    }
}

/// Cartesian product of per-slot entity ranks, ordered by descending product
/// of popularities, ties by the mids lexicographically.
fn entity_permutations(lists: &[Vec<EntityCandidate>]) -> Vec<Vec<usize>> {
    let mut perms: Vec<Vec<usize>> = vec![Vec::new()];
    for list in lists {
        perms = perms
            .into_iter()
            .flat_map(|p| {
                (0..list.len()).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    let popularity =
        |p: &[usize]| -> f64 { p.iter().zip(lists).map(|(&i, l)| l[i].popularity).product() };
    let mids = |p: &[usize]| -> Vec<&str> {
        p.iter()
            .zip(lists)
            .map(|(&i, l)| l[i].mid.as_str())
            .collect()
    };
    perms.sort_by(|a, b| {
        popularity(b)
            .total_cmp(&popularity(a))
            .then_with(|| mids(a).cmp(&mids(b)))
            .then_with(|| a.cmp(b))
    });
    perms
}

#[derive(PartialEq)]
struct Frontier {
    score: f64,
    ranks: Vec<usize>,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher score first, then lexicographically smaller ranks
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazily enumerates up to `limit` index tuples of the product of `lists` in
/// descending order of summed score (ties by tuple). Each list is treated as
/// sorted; an item ranked above a higher-scoring one (the verbatim hit)
/// takes the maximum score seen so far in its list.
fn best_first(lists: &[Vec<SchemaCandidate>], limit: usize) -> Vec<(Vec<usize>, f64)> {
    let effective: Vec<Vec<f64>> = lists
        .iter()
        .map(|l| {
            let mut out: Vec<f64> = Vec::with_capacity(l.len());
            for c in l {
                let s = match out.last() {
                    Some(&prev) if c.score > prev => prev,
                    _ => c.score,
                };
                out.push(s);
            }
            if let (Some(first), Some(max)) =
                (out.first_mut(), l.iter().map(|c| c.score).reduce(f64::max))
            {
                *first = first.max(max);
            }
            out
        })
        .collect();
    let sum = |ranks: &[usize]| -> f64 { ranks.iter().zip(&effective).map(|(&r, s)| s[r]).sum() };
    let real = |ranks: &[usize]| -> f64 { ranks.iter().zip(lists).map(|(&r, l)| l[r].score).sum() };

    let mut out = Vec::new();
    if lists.iter().any(Vec::is_empty) || limit == 0 {
        return out;
    }
    let start = vec![0; lists.len()];
    let mut seen: HashSet<Vec<usize>> = HashSet::from([start.clone()]);
    let mut heap = BinaryHeap::from([Frontier {
        score: sum(&start),
        ranks: start,
    }]);
    while let Some(Frontier { ranks, .. }) = heap.pop() {
        for i in 0..ranks.len() {
            if ranks[i] + 1 < lists[i].len() {
                let mut next = ranks.clone();
                next[i] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Frontier {
                        score: sum(&next),
                        ranks: next,
                    });
                }
            }
        }
        let score = real(&ranks);
        out.push((ranks, score));
        if out.len() >= limit {
            break;
        }
    }
    out
}
