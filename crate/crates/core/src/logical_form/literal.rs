//! Typed literal values shared by logical forms and the triple store.
//!
//! Values are canonicalized on construction so that structural equality of
//! literals coincides with value equality (`"007"^^int` and `7` are the same
//! literal).

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LiteralKind {
    Int,
    Float,
    Date,
    Str,
}

impl LiteralKind {
    /// Tag used in the `"value"^^tag` node encoding.
    pub fn tag(self) -> &'static str {
        match self {
            LiteralKind::Int => "int",
            LiteralKind::Float => "float",
            LiteralKind::Date => "date",
            LiteralKind::Str => "str",
        }
    }

    /// Accepts the short tags plus common XSD datatype names, either bare or
    /// as the fragment of a full datatype IRI.
    pub fn from_tag(tag: &str) -> Option<Self> {
        let local = tag.rsplit(['#', '/', ':']).next().unwrap_or(tag);
        match local {
            "int" | "integer" | "long" => Some(LiteralKind::Int),
            "float" | "double" | "decimal" => Some(LiteralKind::Float),
            "date" | "gYear" | "gYearMonth" => Some(LiteralKind::Date),
            "str" | "string" => Some(LiteralKind::Str),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    kind: LiteralKind,
    value: String,
}

impl Literal {
    /// Validates and canonicalizes `raw` as a value of `kind`.
    pub fn new(kind: LiteralKind, raw: &str) -> Option<Self> {
        let value = match kind {
            LiteralKind::Int => raw.trim().parse::<i64>().ok()?.to_string(),
            LiteralKind::Float => {
                let v = raw.trim().parse::<f64>().ok()?;
                if !v.is_finite() {
                    return None;
                }
                canonical_float(v)
            }
            LiteralKind::Date => {
                parse_date(raw)?;
                raw.to_string()
            }
            LiteralKind::Str => raw.to_string(),
        };
        Some(Literal { kind, value })
    }

    pub fn int(v: i64) -> Self {
        Literal {
            kind: LiteralKind::Int,
            value: v.to_string(),
        }
    }

    pub fn float(v: f64) -> Option<Self> {
        v.is_finite().then(|| Literal {
            kind: LiteralKind::Float,
            value: canonical_float(v),
        })
    }

    pub fn date(v: &str) -> Option<Self> {
        Self::new(LiteralKind::Date, v)
    }

    pub fn string(v: &str) -> Self {
        Literal {
            kind: LiteralKind::Str,
            value: v.to_string(),
        }
    }

    pub fn kind(&self) -> LiteralKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    /// Node-id encoding used by the triple store: `"value"^^tag`.
    pub fn encode(&self) -> String {
        format!("\"{}\"^^{}", self.value, self.kind.tag())
    }

    /// Inverse of [`Literal::encode`]. Returns `None` for non-literal node ids.
    pub fn decode(node: &str) -> Option<Self> {
        let rest = node.strip_prefix('"')?;
        let split = rest.rfind("\"^^")?;
        let kind = LiteralKind::from_tag(&rest[split + 3..])?;
        Literal::new(kind, &rest[..split])
    }

    /// Ordering within a single type tag; `None` across tags.
    pub fn compare(&self, other: &Literal) -> Option<Ordering> {
        if self.kind != other.kind {
            return None;
        }
        match self.kind {
            LiteralKind::Int => {
                let a: i64 = self.value.parse().ok()?;
                let b: i64 = other.value.parse().ok()?;
                Some(a.cmp(&b))
            }
            LiteralKind::Float => {
                let a: f64 = self.value.parse().ok()?;
                let b: f64 = other.value.parse().ok()?;
                a.partial_cmp(&b)
            }
            LiteralKind::Date => Some(parse_date(&self.value)?.cmp(&parse_date(&other.value)?)),
            LiteralKind::Str => Some(self.value.cmp(&other.value)),
        }
    }

    /// True when a bare token with this spelling reads back as this literal.
    pub(crate) fn renders_bare(&self) -> bool {
        match self.kind {
            LiteralKind::Int | LiteralKind::Float => true,
            LiteralKind::Date => is_full_date(&self.value),
            LiteralKind::Str => false,
        }
    }
}

impl fmt::Display for Literal {
    /// s-expression spelling: bare numerals and full dates, quoted strings,
    /// and `"value"^^date` for partial dates.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LiteralKind::Str => {
                f.write_str("\"")?;
                for c in self.value.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            _ if self.renders_bare() => f.write_str(&self.value),
            _ => write!(f, "\"{}\"^^{}", self.value, self.kind.tag()),
        }
    }
}

fn canonical_float(v: f64) -> String {
    // Debug formatting always carries a '.' or an exponent.
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:?}")
}

type DateKey = (i32, Option<u8>, Option<u8>);

/// `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
fn parse_date(s: &str) -> Option<DateKey> {
    let mut parts = s.split('-');
    let year = parts.next()?;
    if year.len() != 4 || !year.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut field = |max: u8| -> Option<Option<u8>> {
        match parts.next() {
            None => Some(None),
            Some(p) if p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit()) => {
                let v: u8 = p.parse().ok()?;
                (1..=max).contains(&v).then_some(Some(v))
            }
            Some(_) => None,
        }
    };
    let month = field(12)?;
    let day = field(31)?;
    if month.is_none() && day.is_some() {
        return None;
    }
    if parts.next().is_some() {
        return None;
    }
    Some((year.parse().ok()?, month, day))
}

pub(crate) fn is_full_date(s: &str) -> bool {
    matches!(parse_date(s), Some((_, Some(_), Some(_))))
}
