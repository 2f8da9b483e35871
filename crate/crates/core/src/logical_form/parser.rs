use thiserror::Error;

use super::literal::is_full_date;
use super::{Comparison, Expr, Leaf, Literal, LiteralKind, is_mid, is_schema_token};

const KEYWORDS: [&str; 10] = [
    "AND", "JOIN", "R", "COUNT", "ARGMAX", "ARGMIN", "LT", "LE", "GT", "GE",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {kind}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty input")]
    Empty,
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unexpected ')'")]
    UnexpectedClose,
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("expected an operator after '('")]
    MissingOperator,
    #[error("empty argument list")]
    EmptyArgument,
    #[error("{op} takes {expected} argument(s), found {found}")]
    Arity {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("expected a relation or (R ...)")]
    ExpectedRelation,
    #[error("expected a literal")]
    ExpectedLiteral,
    #[error("(R ...) is only valid in relation position")]
    MisplacedReverse,
    #[error("malformed literal `{0}`")]
    BadLiteral(String),
    #[error("unterminated string literal")]
    UnterminatedString,
    #[error("operator keyword `{0}` in argument position")]
    UnexpectedKeyword(String),
    #[error("trailing input after logical form")]
    TrailingInput,
}

fn err(position: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { position, kind }
}

#[derive(Debug)]
enum Token<'a> {
    Open(usize),
    Close(usize),
    Atom(usize, &'a str),
    Quoted(usize, Literal),
}

impl Token<'_> {
    fn position(&self) -> usize {
        match self {
            Token::Open(p) | Token::Close(p) | Token::Atom(p, _) | Token::Quoted(p, _) => *p,
        }
    }
}

fn lex(text: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'(' => {
                tokens.push(Token::Open(i));
                i += 1;
            }
            b')' => {
                tokens.push(Token::Close(i));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            b'"' => {
                let start = i;
                let mut value = String::new();
                let mut chars = text[i + 1..].char_indices();
                let end = loop {
                    match chars.next() {
                        None => return Err(err(start, ParseErrorKind::UnterminatedString)),
                        Some((off, '"')) => break i + 1 + off + 1,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, esc)) => value.push(esc),
                            None => return Err(err(start, ParseErrorKind::UnterminatedString)),
                        },
                        Some((_, ch)) => value.push(ch),
                    }
                };
                i = end;
                let literal = if text[i..].starts_with("^^") {
                    let tag_start = i + 2;
                    let tag_end = atom_end(bytes, tag_start);
                    i = tag_end;
                    let tag = &text[tag_start..tag_end];
                    LiteralKind::from_tag(tag)
                        .and_then(|k| Literal::new(k, &value))
                        .ok_or_else(|| {
                            err(
                                start,
                                ParseErrorKind::BadLiteral(text[start..tag_end].to_string()),
                            )
                        })?
                } else {
                    Literal::string(&value)
                };
                tokens.push(Token::Quoted(start, literal));
            }
            _ => {
                let end = atom_end(bytes, i);
                tokens.push(Token::Atom(i, &text[i..end]));
                i = end;
            }
        }
    }
    Ok(tokens)
}

fn atom_end(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')'
    {
        i += 1;
    }
    i
}

enum Atom {
    Keyword,
    Literal(Literal),
    Mid,
    Schema,
    Word,
}

fn classify(atom: &str, position: usize) -> Result<Atom, ParseError> {
    if KEYWORDS.contains(&atom) {
        return Ok(Atom::Keyword);
    }
    if let Some((value, tag)) = atom.split_once("^^") {
        let value = value.trim_matches('"');
        return LiteralKind::from_tag(tag)
            .and_then(|k| Literal::new(k, value))
            .map(Atom::Literal)
            .ok_or_else(|| err(position, ParseErrorKind::BadLiteral(atom.to_string())));
    }
    if is_mid(atom) {
        return Ok(Atom::Mid);
    }
    if let Some(lit) = numeral(atom) {
        return Ok(Atom::Literal(lit));
    }
    if is_full_date(atom) {
        return Ok(Atom::Literal(Literal::date(atom).expect("validated date")));
    }
    if is_schema_token(atom) {
        return Ok(Atom::Schema);
    }
    Ok(Atom::Word)
}

/// `-?digits` is an integer; a decimal point and/or exponent makes a float.
fn numeral(s: &str) -> Option<Literal> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int_part, frac) = match mantissa.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (mantissa, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits(int_part) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    if let Some(exp) = exponent
        && !digits(exp.strip_prefix(['+', '-']).unwrap_or(exp))
    {
        return None;
    }
    if frac.is_none()
        && exponent.is_none()
        && let Ok(v) = s.parse::<i64>()
    {
        return Some(Literal::int(v));
    }
    Literal::float(s.parse().ok()?)
}

/// Tokens that cannot be part of a multi-word surface name.
fn breaks_run(atom: &str, class: &Atom) -> bool {
    match class {
        Atom::Keyword | Atom::Mid | Atom::Schema => true,
        Atom::Literal(_) => atom.contains('.') || atom.contains("^^"),
        Atom::Word => false,
    }
}

struct Arg {
    position: usize,
    expr: Expr,
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    next: usize,
    len: usize,
}

/// Parses a draft or grounded s-expression.
///
/// Consecutive bare words in an argument position form one surface name, so
/// `(JOIN r.s Data Compression)` has two arguments.
pub fn parse_draft(text: &str) -> Result<Expr, ParseError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(err(0, ParseErrorKind::Empty));
    }
    let mut parser = Parser {
        tokens,
        next: 0,
        len: text.len(),
    };
    let args = parser.arguments(false)?;
    let mut args = args.into_iter();
    let first = args.next().ok_or_else(|| err(0, ParseErrorKind::Empty))?;
    if let Some(extra) = args.next() {
        return Err(err(extra.position, ParseErrorKind::TrailingInput));
    }
    if matches!(first.expr, Expr::Reverse(_)) {
        return Err(err(first.position, ParseErrorKind::MisplacedReverse));
    }
    Ok(first.expr)
}

impl<'a> Parser<'a> {
    /// Reads arguments until a closing paren (`nested`) or end of input.
    fn arguments(&mut self, nested: bool) -> Result<Vec<Arg>, ParseError> {
        let mut args = Vec::new();
        let mut run: Vec<(usize, &'a str, Atom)> = Vec::new();
        loop {
            let Some(tok) = self.tokens.get(self.next) else {
                if nested {
                    return Err(err(self.len, ParseErrorKind::Unbalanced));
                }
                flush(&mut run, &mut args);
                return Ok(args);
            };
            match *tok {
                Token::Close(p) => {
                    if !nested {
                        return Err(err(p, ParseErrorKind::UnexpectedClose));
                    }
                    self.next += 1;
                    flush(&mut run, &mut args);
                    return Ok(args);
                }
                Token::Open(p) => {
                    flush(&mut run, &mut args);
                    self.next += 1;
                    let expr = self.list(p)?;
                    args.push(Arg { position: p, expr });
                }
                Token::Quoted(p, ref lit) => {
                    flush(&mut run, &mut args);
                    args.push(Arg {
                        position: p,
                        expr: Expr::literal(lit.clone()),
                    });
                    self.next += 1;
                }
                Token::Atom(p, atom) => {
                    self.next += 1;
                    let class = classify(atom, p)?;
                    if matches!(class, Atom::Keyword) {
                        return Err(err(p, ParseErrorKind::UnexpectedKeyword(atom.to_string())));
                    }
                    if breaks_run(atom, &class) {
                        flush(&mut run, &mut args);
                        args.push(Arg {
                            position: p,
                            expr: leaf(atom, class),
                        });
                    } else {
                        run.push((p, atom, class));
                    }
                }
            }
        }
    }

    /// Parses the remainder of a list whose '(' sits at `open`.
    fn list(&mut self, open: usize) -> Result<Expr, ParseError> {
        let head = match self.tokens.get(self.next) {
            None => return Err(err(self.len, ParseErrorKind::Unbalanced)),
            Some(Token::Close(_)) => return Err(err(open, ParseErrorKind::EmptyArgument)),
            Some(Token::Atom(p, atom)) => (*p, atom.to_ascii_uppercase()),
            Some(tok) => return Err(err(tok.position(), ParseErrorKind::MissingOperator)),
        };
        self.next += 1;
        let (head_pos, head) = head;
        let op: &'static str = KEYWORDS
            .iter()
            .find(|k| **k == head)
            .ok_or_else(|| err(head_pos, ParseErrorKind::UnknownOperator(head.clone())))?;
        let args = self.arguments(true)?;
        build(op, open, args)
    }
}

fn leaf(atom: &str, class: Atom) -> Expr {
    match class {
        Atom::Literal(l) => Expr::literal(l),
        Atom::Mid => Expr::mid(atom),
        Atom::Schema => Expr::schema(atom),
        Atom::Word | Atom::Keyword => Expr::surface(atom),
    }
}

fn flush(run: &mut Vec<(usize, &str, Atom)>, args: &mut Vec<Arg>) {
    match run.len() {
        0 => {}
        1 => {
            let (position, atom, class) = run.pop().expect("len checked");
            args.push(Arg {
                position,
                expr: leaf(atom, class),
            });
        }
        _ => {
            let position = run[0].0;
            let name = run.iter().map(|(_, a, _)| *a).collect::<Vec<_>>().join(" ");
            run.clear();
            args.push(Arg {
                position,
                expr: Expr::surface(name),
            });
        }
    }
}

fn build(op: &'static str, open: usize, args: Vec<Arg>) -> Result<Expr, ParseError> {
    let expected = match op {
        "R" | "COUNT" => 1,
        _ => 2,
    };
    if args.len() != expected {
        return Err(err(
            open,
            ParseErrorKind::Arity {
                op,
                expected,
                found: args.len(),
            },
        ));
    }
    let mut args = args.into_iter();
    let mut next = || args.next().expect("arity checked");
    Ok(match op {
        "AND" => Expr::and(set(next())?, set(next())?),
        "JOIN" => {
            let rel = relation(next())?;
            Expr::join(rel, set(next())?)
        }
        "R" => Expr::reverse(relation(next())?),
        "COUNT" => Expr::count(set(next())?),
        "ARGMAX" => {
            let s = set(next())?;
            Expr::arg_max(s, relation(next())?)
        }
        "ARGMIN" => {
            let s = set(next())?;
            Expr::arg_min(s, relation(next())?)
        }
        _ => {
            let cmp = match op {
                "LT" => Comparison::Lt,
                "LE" => Comparison::Le,
                "GT" => Comparison::Gt,
                _ => Comparison::Ge,
            };
            let rel = relation(next())?;
            Expr::compare(cmp, rel, literal(next())?)
        }
    })
}

fn set(arg: Arg) -> Result<Expr, ParseError> {
    match arg.expr {
        Expr::Reverse(_) => Err(err(arg.position, ParseErrorKind::MisplacedReverse)),
        e => Ok(e),
    }
}

fn relation(arg: Arg) -> Result<Expr, ParseError> {
    match arg.expr {
        e @ (Expr::Leaf(Leaf::Schema(_)) | Expr::Reverse(_)) => Ok(e),
        _ => Err(err(arg.position, ParseErrorKind::ExpectedRelation)),
    }
}

fn literal(arg: Arg) -> Result<Expr, ParseError> {
    match arg.expr {
        e @ Expr::Leaf(Leaf::Literal(_)) => Ok(e),
        _ => Err(err(arg.position, ParseErrorKind::ExpectedLiteral)),
    }
}
