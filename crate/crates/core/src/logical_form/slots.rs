//! Slot decomposition, substitution, skeletons and exact-match comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EntityRef, Expr, Leaf, Literal};

/// Child-index path from the root to a leaf.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotPath(pub Vec<usize>);

impl SlotPath {
    fn child(&self, i: usize) -> SlotPath {
        let mut p = self.0.clone();
        p.push(i);
        SlotPath(p)
    }
}

impl fmt::Display for SlotPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySlot {
    pub path: SlotPath,
    pub entity: EntityRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaSlot {
    pub path: SlotPath,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralSlot {
    pub path: SlotPath,
    pub value: Literal,
}

/// Leaves of a logical form grouped by the role their position gives them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotList {
    pub entities: Vec<EntitySlot>,
    pub relations: Vec<SchemaSlot>,
    pub classes: Vec<SchemaSlot>,
    pub literals: Vec<LiteralSlot>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Position {
    Set,
    Relation,
}

/// Positions of each child of `e` (set-valued vs relation-valued).
fn child_positions(e: &Expr) -> &'static [Position] {
    use Position::*;
    match e {
        Expr::And(..) => &[Set, Set],
        Expr::Join(..) => &[Relation, Set],
        Expr::Reverse(_) => &[Relation],
        Expr::Count(_) => &[Set],
        Expr::ArgMax(..) | Expr::ArgMin(..) => &[Set, Relation],
        Expr::Compare(..) => &[Relation, Set],
        Expr::Leaf(_) => &[],
    }
}

fn visit<'a>(
    e: &'a Expr,
    pos: Position,
    path: SlotPath,
    f: &mut impl FnMut(&'a Leaf, Position, SlotPath),
) {
    if let Expr::Leaf(leaf) = e {
        f(leaf, pos, path);
        return;
    }
    for (i, (child, p)) in e.children().into_iter().zip(child_positions(e)).enumerate() {
        visit(child, *p, path.child(i), f);
    }
}

/// Splits the leaves of `ast` into entity, relation, class and literal slots.
///
/// Schema tokens in relation position (first argument of JOIN, under R, the
/// attribute of ARGMAX/ARGMIN and comparatives) are relation slots; those in
/// set position are class slots.
pub fn extract_slots(ast: &Expr) -> SlotList {
    let mut slots = SlotList::default();
    visit(
        ast,
        Position::Set,
        SlotPath::default(),
        &mut |leaf, pos, path| match leaf {
            Leaf::Entity(entity) => slots.entities.push(EntitySlot {
                path,
                entity: entity.clone(),
            }),
            Leaf::Schema(token) => {
                let slot = SchemaSlot {
                    path,
                    token: token.clone(),
                };
                match pos {
                    Position::Relation => slots.relations.push(slot),
                    Position::Set => slots.classes.push(slot),
                }
            }
            Leaf::Literal(value) => slots.literals.push(LiteralSlot {
                path,
                value: value.clone(),
            }),
        },
    );
    slots
}

pub type Bindings = BTreeMap<SlotPath, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no binding for slot {path}")]
pub struct MissingBinding {
    pub path: SlotPath,
}

/// Replaces every entity and schema leaf with its bound identifier.
pub fn substitute(ast: &Expr, bindings: &Bindings) -> Result<Expr, MissingBinding> {
    fn go(e: &Expr, path: SlotPath, b: &Bindings) -> Result<Expr, MissingBinding> {
        let bound = |path: SlotPath| b.get(&path).cloned().ok_or(MissingBinding { path });
        Ok(match e {
            Expr::Leaf(Leaf::Entity(_)) => Expr::mid(bound(path)?),
            Expr::Leaf(Leaf::Schema(_)) => Expr::schema(bound(path)?),
            Expr::Leaf(Leaf::Literal(_)) => e.clone(),
            Expr::And(a, c) => Expr::and(go(a, path.child(0), b)?, go(c, path.child(1), b)?),
            Expr::Join(a, c) => Expr::join(go(a, path.child(0), b)?, go(c, path.child(1), b)?),
            Expr::Reverse(a) => Expr::reverse(go(a, path.child(0), b)?),
            Expr::Count(a) => Expr::count(go(a, path.child(0), b)?),
            Expr::ArgMax(a, c) => Expr::arg_max(go(a, path.child(0), b)?, go(c, path.child(1), b)?),
            Expr::ArgMin(a, c) => Expr::arg_min(go(a, path.child(0), b)?, go(c, path.child(1), b)?),
            Expr::Compare(op, a, c) => {
                Expr::compare(*op, go(a, path.child(0), b)?, go(c, path.child(1), b)?)
            }
        })
    }
    go(ast, SlotPath::default(), bindings)
}

/// Operator tree with leaves replaced by role placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Skeleton(String);

impl Skeleton {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn skeleton(ast: &Expr) -> Skeleton {
    fn go(e: &Expr, pos: Position, out: &mut String) {
        match e {
            Expr::Leaf(Leaf::Entity(_)) => out.push_str("ENT"),
            Expr::Leaf(Leaf::Literal(_)) => out.push_str("LIT"),
            Expr::Leaf(Leaf::Schema(_)) => out.push_str(match pos {
                Position::Relation => "REL",
                Position::Set => "CLS",
            }),
            _ => {
                out.push('(');
                out.push_str(e.head().expect("non-leaf"));
                for (child, p) in e.children().into_iter().zip(child_positions(e)) {
                    out.push(' ');
                    go(child, *p, out);
                }
                out.push(')');
            }
        }
    }
    let mut out = String::new();
    go(ast, Position::Set, &mut out);
    Skeleton(out)
}

/// Canonical form: AND operands ordered by their rendering.
fn canonical(e: &Expr) -> Expr {
    match e {
        Expr::And(a, b) => {
            let (a, b) = (canonical(a), canonical(b));
            if b.to_string() < a.to_string() {
                Expr::and(b, a)
            } else {
                Expr::and(a, b)
            }
        }
        Expr::Join(a, b) => Expr::join(canonical(a), canonical(b)),
        Expr::Reverse(a) => Expr::reverse(canonical(a)),
        Expr::Count(a) => Expr::count(canonical(a)),
        Expr::ArgMax(a, b) => Expr::arg_max(canonical(a), canonical(b)),
        Expr::ArgMin(a, b) => Expr::arg_min(canonical(a), canonical(b)),
        Expr::Compare(op, a, b) => Expr::compare(*op, canonical(a), canonical(b)),
        Expr::Leaf(_) => e.clone(),
    }
}

/// Syntactic exact match modulo AND commutation.
pub fn em_match(pred: &Expr, gold: &Expr) -> bool {
    canonical(pred) == canonical(gold)
}
