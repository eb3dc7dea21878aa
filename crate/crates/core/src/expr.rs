//! A small, total expression language for user-defined detectors and
//! wrangler rules.
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := not ("and" not)*
//! not     := "not" not | cmp
//! cmp     := add (("<" | "<=" | ">" | ">=" | "==" | "!=") add)?
//! add     := mul (("+" | "-") mul)*
//! mul     := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | string | "value" | "is_null" | "is_text"
//!          | "group_size" | "group_mean" | "(" expr ")"
//! ```
//!
//! Evaluation never fails. Anything undefined (arithmetic on a null or text
//! cell, division by zero, a missing group mean, comparing text with a
//! number) yields *not applicable*, which propagates through arithmetic and
//! comparisons and follows Kleene logic through `and`/`or`/`not`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::value::{parse_strict_number, CellValue};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Num(f64),
    Str(&'a str),
    Ident(&'a str),
    Op(&'static str),
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok<'a>, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (t, at) = lx.next()?;
            out.push((t, at));
            if t == Tok::Eof {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok<'a>, usize)> {
        let b = self.src.as_bytes();
        while self.pos < b.len() && b[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= b.len() {
            return Ok((Tok::Eof, start));
        }
        let c = b[start];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'+' | b'-' | b'*' | b'/' => {
                self.pos += 1;
                Tok::Op(match c {
                    b'+' => "+",
                    b'-' => "-",
                    b'*' => "*",
                    _ => "/",
                })
            }
            b'<' | b'>' | b'=' | b'!' => {
                let eq = b.get(start + 1) == Some(&b'=');
                self.pos += if eq { 2 } else { 1 };
                match (c, eq) {
                    (b'<', false) => Tok::Op("<"),
                    (b'<', true) => Tok::Op("<="),
                    (b'>', false) => Tok::Op(">"),
                    (b'>', true) => Tok::Op(">="),
                    (b'=', true) => Tok::Op("=="),
                    (b'!', true) => Tok::Op("!="),
                    _ => return Err(parse_err(start, format!("unexpected `{}`", c as char))),
                }
            }
            b'"' => return self.string(start),
            b'0'..=b'9' | b'.' => {
                let mut i = start;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                self.pos = i;
                let text = &self.src[start..i];
                match parse_strict_number(text) {
                    Some(x) => Tok::Num(x),
                    None => return Err(parse_err(start, format!("bad number `{text}`"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut i = start;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                self.pos = i;
                Tok::Ident(&self.src[start..i])
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(parse_err(start, format!("unexpected `{ch}`")));
            }
        };
        Ok((tok, start))
    }

    fn string(&mut self, start: usize) -> Result<(Tok<'a>, usize)> {
        let b = self.src.as_bytes();
        let mut i = start + 1;
        while i < b.len() {
            match b[i] {
                b'"' => {
                    self.pos = i + 1;
                    return Ok((Tok::Str(&self.src[start + 1..i]), start));
                }
                b'\\' => i += 2,
                _ => i += 1,
            }
        }
        Err(parse_err(start, "unterminated string"))
    }
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::ExpressionParse {
        offset,
        message: message.into(),
    }
}

fn type_err(offset: usize, message: impl Into<String>) -> Error {
    Error::ExpressionType {
        offset,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Value,
    IsNull,
    IsText,
    GroupSize,
    GroupMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Str(String),
    Var(Var),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>, usize),
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    i: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Tok<'a> {
        self.toks[self.i].0
    }

    fn at(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok<'a>, usize) {
        let t = self.toks[self.i];
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn keyword(&self, kw: &str) -> bool {
        self.peek() == Tok::Ident(kw)
    }

    fn expr(&mut self) -> Result<(Node, usize)> {
        let (mut lhs, at) = self.and()?;
        while self.keyword("or") {
            let (_, op_at) = self.bump();
            let (rhs, _) = self.and()?;
            lhs = Node::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs), op_at);
        }
        Ok((lhs, at))
    }

    fn and(&mut self) -> Result<(Node, usize)> {
        let (mut lhs, at) = self.not()?;
        while self.keyword("and") {
            let (_, op_at) = self.bump();
            let (rhs, _) = self.not()?;
            lhs = Node::Bin(BinOp::And, Box::new(lhs), Box::new(rhs), op_at);
        }
        Ok((lhs, at))
    }

    fn not(&mut self) -> Result<(Node, usize)> {
        if self.keyword("not") {
            let (_, at) = self.bump();
            let (inner, _) = self.not()?;
            return Ok((Node::Not(Box::new(inner)), at));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<(Node, usize)> {
        let (lhs, at) = self.add()?;
        let op = match self.peek() {
            Tok::Op("<") => BinOp::Lt,
            Tok::Op("<=") => BinOp::Le,
            Tok::Op(">") => BinOp::Gt,
            Tok::Op(">=") => BinOp::Ge,
            Tok::Op("==") => BinOp::Eq,
            Tok::Op("!=") => BinOp::Ne,
            _ => return Ok((lhs, at)),
        };
        let (_, op_at) = self.bump();
        let (rhs, _) = self.add()?;
        if let Tok::Op("<" | "<=" | ">" | ">=" | "==" | "!=") = self.peek() {
            return Err(parse_err(self.at(), "comparisons do not chain"));
        }
        Ok((Node::Bin(op, Box::new(lhs), Box::new(rhs), op_at), at))
    }

    fn add(&mut self) -> Result<(Node, usize)> {
        let (mut lhs, at) = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok((lhs, at)),
            };
            let (_, op_at) = self.bump();
            let (rhs, _) = self.mul()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs), op_at);
        }
    }

    fn mul(&mut self) -> Result<(Node, usize)> {
        let (mut lhs, at) = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok((lhs, at)),
            };
            let (_, op_at) = self.bump();
            let (rhs, _) = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs), op_at);
        }
    }

    fn unary(&mut self) -> Result<(Node, usize)> {
        if self.peek() == Tok::Op("-") {
            let (_, at) = self.bump();
            let (inner, _) = self.unary()?;
            return Ok((Node::Neg(Box::new(inner)), at));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<(Node, usize)> {
        let (tok, at) = self.bump();
        let node = match tok {
            Tok::Num(x) => Node::Num(x),
            Tok::Str(raw) => Node::Str(unescape(raw)),
            Tok::Ident(name) => Node::Var(match name {
                "value" => Var::Value,
                "is_null" => Var::IsNull,
                "is_text" => Var::IsText,
                "group_size" => Var::GroupSize,
                "group_mean" => Var::GroupMean,
                other => return Err(parse_err(at, format!("unknown name `{other}`"))),
            }),
            Tok::LParen => {
                let (inner, _) = self.expr()?;
                if self.peek() != Tok::RParen {
                    return Err(parse_err(self.at(), "expected `)`"));
                }
                self.bump();
                inner
            }
            Tok::Eof => return Err(parse_err(at, "unexpected end of expression")),
            Tok::RParen => return Err(parse_err(at, "unexpected `)`")),
            Tok::Op(op) => return Err(parse_err(at, format!("unexpected `{op}`"))),
        };
        Ok((node, at))
    }
}

/// Static type. `Cell` is the target cell: a number, text, or null at run
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Str,
    Bool,
    Cell,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Num => "number",
            Ty::Str => "string",
            Ty::Bool => "boolean",
            Ty::Cell => "cell value",
        })
    }
}

fn check(node: &Node, at: usize) -> Result<Ty> {
    Ok(match node {
        Node::Num(_) => Ty::Num,
        Node::Str(_) => Ty::Str,
        Node::Var(Var::Value) => Ty::Cell,
        Node::Var(Var::IsNull | Var::IsText) => Ty::Bool,
        Node::Var(Var::GroupSize | Var::GroupMean) => Ty::Num,
        Node::Neg(inner) => match check(inner, at)? {
            Ty::Num | Ty::Cell => Ty::Num,
            t => return Err(type_err(at, format!("cannot negate a {t}"))),
        },
        Node::Not(inner) => match check(inner, at)? {
            Ty::Bool => Ty::Bool,
            t => return Err(type_err(at, format!("`not` needs a boolean, found {t}"))),
        },
        Node::Bin(op, l, r, op_at) => {
            let (lt, rt) = (check(l, at)?, check(r, *op_at)?);
            let numeric = |t: Ty| matches!(t, Ty::Num | Ty::Cell);
            let textual = |t: Ty| matches!(t, Ty::Str | Ty::Cell);
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    if numeric(lt) && numeric(rt) {
                        Ty::Num
                    } else {
                        return Err(type_err(
                            *op_at,
                            format!("arithmetic needs numbers, found {lt} and {rt}"),
                        ));
                    }
                }
                BinOp::And | BinOp::Or => {
                    if lt == Ty::Bool && rt == Ty::Bool {
                        Ty::Bool
                    } else {
                        return Err(type_err(
                            *op_at,
                            format!("logic needs booleans, found {lt} and {rt}"),
                        ));
                    }
                }
                BinOp::Eq | BinOp::Ne if lt == Ty::Bool && rt == Ty::Bool => Ty::Bool,
                _ => {
                    if (numeric(lt) && numeric(rt)) || (textual(lt) && textual(rt)) {
                        Ty::Bool
                    } else {
                        return Err(type_err(*op_at, format!("cannot compare {lt} with {rt}")));
                    }
                }
            }
        }
    })
}

/// Inputs visible to an expression.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub value: &'a CellValue,
    pub group_size: usize,
    pub group_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Val<'a> {
    Num(f64),
    Str(&'a str),
    Bool(bool),
    Na,
}

fn eval<'a>(node: &'a Node, ctx: &EvalContext<'a>) -> Val<'a> {
    match node {
        Node::Num(x) => Val::Num(*x),
        Node::Str(s) => Val::Str(s),
        Node::Var(Var::Value) => match ctx.value {
            CellValue::Number(x) => Val::Num(*x),
            CellValue::Text(s) => Val::Str(s),
            CellValue::Null => Val::Na,
        },
        Node::Var(Var::IsNull) => Val::Bool(ctx.value.is_null()),
        Node::Var(Var::IsText) => Val::Bool(ctx.value.is_text()),
        Node::Var(Var::GroupSize) => Val::Num(ctx.group_size as f64),
        Node::Var(Var::GroupMean) => ctx.group_mean.map_or(Val::Na, Val::Num),
        Node::Neg(inner) => match eval(inner, ctx) {
            Val::Num(x) => Val::Num(-x),
            _ => Val::Na,
        },
        Node::Not(inner) => match eval(inner, ctx) {
            Val::Bool(b) => Val::Bool(!b),
            _ => Val::Na,
        },
        Node::Bin(BinOp::And, l, r, _) => match (eval(l, ctx), eval(r, ctx)) {
            (Val::Bool(false), _) | (_, Val::Bool(false)) => Val::Bool(false),
            (Val::Bool(true), Val::Bool(true)) => Val::Bool(true),
            _ => Val::Na,
        },
        Node::Bin(BinOp::Or, l, r, _) => match (eval(l, ctx), eval(r, ctx)) {
            (Val::Bool(true), _) | (_, Val::Bool(true)) => Val::Bool(true),
            (Val::Bool(false), Val::Bool(false)) => Val::Bool(false),
            _ => Val::Na,
        },
        Node::Bin(op, l, r, _) => {
            let (a, b) = (eval(l, ctx), eval(r, ctx));
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => match (a, b) {
                    (Val::Num(x), Val::Num(y)) => {
                        let z = match op {
                            BinOp::Add => x + y,
                            BinOp::Sub => x - y,
                            BinOp::Mul => x * y,
                            _ => x / y,
                        };
                        if z.is_finite() {
                            Val::Num(z)
                        } else {
                            Val::Na
                        }
                    }
                    _ => Val::Na,
                },
                _ => {
                    let ord = match (&a, &b) {
                        (Val::Num(x), Val::Num(y)) => x.partial_cmp(y),
                        (Val::Str(x), Val::Str(y)) => Some(x.cmp(y)),
                        (Val::Bool(x), Val::Bool(y)) => Some(x.cmp(y)),
                        _ => None,
                    };
                    match ord {
                        None => Val::Na,
                        Some(o) => Val::Bool(match op {
                            BinOp::Lt => o == Ordering::Less,
                            BinOp::Le => o != Ordering::Greater,
                            BinOp::Gt => o == Ordering::Greater,
                            BinOp::Ge => o != Ordering::Less,
                            BinOp::Eq => o == Ordering::Equal,
                            _ => o != Ordering::Equal,
                        }),
                    }
                }
            }
        }
    }
}

/// Three-valued predicate outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    NotApplicable,
}

fn parse_typed(src: &str) -> Result<(Node, Ty)> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser { toks, i: 0 };
    let (node, at) = p.expr()?;
    if p.peek() != Tok::Eof {
        return Err(parse_err(p.at(), "unexpected trailing input"));
    }
    let ty = check(&node, at)?;
    Ok((node, ty))
}

/// A boolean detector expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    source: String,
    root: Node,
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Predicate> {
        let (root, ty) = parse_typed(src)?;
        if ty != Ty::Bool {
            return Err(type_err(0, format!("detector must be boolean, found {ty}")));
        }
        Ok(Predicate {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, ctx: &EvalContext<'_>) -> Truth {
        match eval(&self.root, ctx) {
            Val::Bool(true) => Truth::True,
            Val::Bool(false) => Truth::False,
            _ => Truth::NotApplicable,
        }
    }

    pub fn matches(&self, ctx: &EvalContext<'_>) -> bool {
        self.eval(ctx) == Truth::True
    }
}

/// A value-producing expression (number, text or cell typed).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueExpr {
    source: String,
    root: Node,
}

impl ValueExpr {
    pub fn parse(src: &str) -> Result<ValueExpr> {
        Self::parse_at(src, 0)
    }

    /// Parses with error offsets shifted by `base`, for embedding.
    pub(crate) fn parse_at(src: &str, base: usize) -> Result<ValueExpr> {
        let shift = |e: Error| match e {
            Error::ExpressionParse { offset, message } => Error::ExpressionParse {
                offset: offset + base,
                message,
            },
            Error::ExpressionType { offset, message } => Error::ExpressionType {
                offset: offset + base,
                message,
            },
            other => other,
        };
        let (root, ty) = parse_typed(src).map_err(shift)?;
        if ty == Ty::Bool {
            return Err(type_err(base, "expected a value, found boolean"));
        }
        Ok(ValueExpr {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// `None` when the result is not applicable.
    pub fn eval(&self, ctx: &EvalContext<'_>) -> Option<CellValue> {
        match eval(&self.root, ctx) {
            Val::Num(x) => CellValue::number(x),
            Val::Str(s) => Some(CellValue::text(s)),
            _ => None,
        }
    }
}

macro_rules! serde_by_source {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.source)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let src = String::deserialize(d)?;
                <$ty>::parse(&src).map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_source!(Predicate);
serde_by_source!(ValueExpr);
