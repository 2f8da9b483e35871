//! S-expression logical forms.
//!
//! A logical form is either a *draft* (as emitted by the language model, with
//! entity surface names and possibly hallucinated schema tokens) or
//! *grounded* (entities are machine identifiers, schema tokens are real KB
//! ids). Both flavors share [`Expr`].
//!
//! Grammar:
//!
//! ```text
//! set  := CLASS | ENTITY | LITERAL
//!       | (AND set set) | (JOIN rel set) | (COUNT set)
//!       | (ARGMAX set rel) | (ARGMIN set rel)
//!       | (LT rel LITERAL) | (LE ..) | (GT ..) | (GE ..)
//! rel  := RELATION | (R rel)
//! ```

mod literal;
mod parser;
mod slots;

use std::fmt;

pub use literal::{Literal, LiteralKind};
pub use parser::{ParseError, ParseErrorKind, parse_draft};
pub use slots::{
    Bindings, EntitySlot, LiteralSlot, MissingBinding, SchemaSlot, Skeleton, SlotList, SlotPath,
    em_match, extract_slots, skeleton, substitute,
};

/// Reserved relation linking an entity to its class.
pub const TYPE_RELATION: &str = "type.object.type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    pub fn keyword(self) -> &'static str {
        match self {
            Comparison::Lt => "LT",
            Comparison::Le => "LE",
            Comparison::Gt => "GT",
            Comparison::Ge => "GE",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparison::Lt => ord == Less,
            Comparison::Le => ord != Greater,
            Comparison::Gt => ord == Greater,
            Comparison::Ge => ord != Less,
        }
    }
}

/// Entity reference: either a surface name from a draft or a machine id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    Surface(String),
    Mid(String),
}

impl EntityRef {
    pub fn text(&self) -> &str {
        match self {
            EntityRef::Surface(s) | EntityRef::Mid(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leaf {
    /// Dotted schema identifier (relation or class, depending on position).
    Schema(String),
    Entity(EntityRef),
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    And(Box<Expr>, Box<Expr>),
    /// `(JOIN relation restrictor)`
    Join(Box<Expr>, Box<Expr>),
    Reverse(Box<Expr>),
    Count(Box<Expr>),
    ArgMax(Box<Expr>, Box<Expr>),
    ArgMin(Box<Expr>, Box<Expr>),
    Compare(Comparison, Box<Expr>, Box<Expr>),
    Leaf(Leaf),
}

impl Expr {
    pub fn schema(id: impl Into<String>) -> Self {
        Expr::Leaf(Leaf::Schema(id.into()))
    }

    pub fn mid(id: impl Into<String>) -> Self {
        Expr::Leaf(Leaf::Entity(EntityRef::Mid(id.into())))
    }

    pub fn surface(name: impl Into<String>) -> Self {
        Expr::Leaf(Leaf::Entity(EntityRef::Surface(name.into())))
    }

    pub fn literal(lit: Literal) -> Self {
        Expr::Leaf(Leaf::Literal(lit))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn join(rel: Expr, set: Expr) -> Self {
        Expr::Join(Box::new(rel), Box::new(set))
    }

    pub fn reverse(rel: Expr) -> Self {
        Expr::Reverse(Box::new(rel))
    }

    pub fn count(set: Expr) -> Self {
        Expr::Count(Box::new(set))
    }

    pub fn arg_max(set: Expr, rel: Expr) -> Self {
        Expr::ArgMax(Box::new(set), Box::new(rel))
    }

    pub fn arg_min(set: Expr, rel: Expr) -> Self {
        Expr::ArgMin(Box::new(set), Box::new(rel))
    }

    pub fn compare(op: Comparison, rel: Expr, value: Expr) -> Self {
        Expr::Compare(op, Box::new(rel), Box::new(value))
    }

    /// Children in path order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::And(a, b)
            | Expr::Join(a, b)
            | Expr::ArgMax(a, b)
            | Expr::ArgMin(a, b)
            | Expr::Compare(_, a, b) => vec![a, b],
            Expr::Reverse(a) | Expr::Count(a) => vec![a],
            Expr::Leaf(_) => Vec::new(),
        }
    }

    /// No surface-name entity leaves remain.
    pub fn is_grounded(&self) -> bool {
        match self {
            Expr::Leaf(Leaf::Entity(EntityRef::Surface(_))) => false,
            Expr::Leaf(_) => true,
            _ => self.children().into_iter().all(Expr::is_grounded),
        }
    }

    /// Machine ids of every entity leaf.
    pub fn mids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Leaf(Leaf::Entity(EntityRef::Mid(m))) = e {
                out.push(m.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    fn head(&self) -> Option<&'static str> {
        Some(match self {
            Expr::And(..) => "AND",
            Expr::Join(..) => "JOIN",
            Expr::Reverse(..) => "R",
            Expr::Count(..) => "COUNT",
            Expr::ArgMax(..) => "ARGMAX",
            Expr::ArgMin(..) => "ARGMIN",
            Expr::Compare(op, ..) => op.keyword(),
            Expr::Leaf(_) => return None,
        })
    }
}

impl fmt::Display for Leaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leaf::Schema(s) => f.write_str(s),
            Leaf::Entity(e) => f.write_str(e.text()),
            Leaf::Literal(l) => write!(f, "{l}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self, self.head()) {
            (Expr::Leaf(leaf), _) => write!(f, "{leaf}"),
            (_, Some(head)) => {
                write!(f, "({head}")?;
                for c in self.children() {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
            (_, None) => unreachable!("only leaves lack a head"),
        }
    }
}

/// `[a-z0-9_]+(\.[a-z0-9_]+)+`
pub fn is_schema_token(s: &str) -> bool {
    let mut parts = 0;
    for part in s.split('.') {
        if part.is_empty()
            || !part
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        {
            return false;
        }
        parts += 1;
    }
    parts >= 2
}

/// Freebase-style machine identifier: `m.xxxx` or `g.xxxx`.
pub fn is_mid(s: &str) -> bool {
    match s.split_once('.') {
        Some(("m" | "g", rest)) => {
            !rest.is_empty()
                && rest
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        }
        _ => false,
    }
}
