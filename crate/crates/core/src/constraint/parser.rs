//! Lexer and recursive-descent parser for the constraint language.
//!
//! ```text
//! file        := { funcdef | constraint }
//! funcdef     := "function" NAME "(" [params] ")" "on" REL ":" "sum" "(" attrexpr ")" ["where" cond]
//! constraint  := ["rule" NAME ":"] [atom {"," atom}] "->" linear CMP number
//! atom        := REL "(" term {"," term} ")"        term := VAR | literal | "_"
//! linear      := [sign] sterm {("+"|"-") sterm}      sterm := [number "*"] NAME "(" [args] ")"
//! attrexpr    := number | ATTR | attrexpr ("+"|"-") attrexpr | number "*" "(" attrexpr ")"
//! cond        := cmp | cond "and" cond | cond "or" cond | "not" cond | "(" cond ")"
//! ```
//!
//! A constraint with an empty body is universally applicable (one grounding).

use std::collections::BTreeSet;
use thiserror::Error;

use super::ast::*;
use crate::rational::{parse_rational, Rational};
use crate::relational::{Domain, RelationSchema, Schema, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(Rational),
    Str(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Underscore,
    Arrow,
    Plus,
    Minus,
    Star,
    Cmp(CmpOp),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(q) => format!("number `{}`", crate::rational::format_rational(q)),
        Tok::Str(s) => format!("string '{s}'"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Underscore => "`_`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Cmp(op) => format!("`{}`", op.symbol()),
        Tok::Eof => "end of input".into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let err = |message: String| ParseError { line: tl, column: tc, message };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            if word == "_" {
                Tok::Underscore
            } else {
                Tok::Ident(word)
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i < chars.len() && chars[i] == '.' {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i + 1 < chars.len() && chars[i] == '/' && chars[i + 1].is_ascii_digit() {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            let literal: String = chars[start..i].iter().collect();
            Tok::Number(parse_rational(&literal).ok_or_else(|| err(format!("invalid number `{literal}`")))?)
        } else if c == '\'' || c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(err("unterminated string literal".into()));
                }
                let ch = chars[i];
                if ch == '\\' && i + 1 < chars.len() {
                    bump!();
                    s.push(chars[i]);
                    bump!();
                    continue;
                }
                bump!();
                if ch == c {
                    break;
                }
                s.push(ch);
            }
            Tok::Str(s)
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, width) = match (c, next) {
                ('-', Some('>')) => (Tok::Arrow, 2),
                ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
                ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
                ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
                ('<', Some('>')) => (Tok::Cmp(CmpOp::Ne), 2),
                ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
                ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
                ('=', _) => (Tok::Cmp(CmpOp::Eq), 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                (':', _) => (Tok::Colon, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                _ => return Err(err(format!("unexpected character `{c}`"))),
            };
            for _ in 0..width {
                bump!();
            }
            tok
        };
        tokens.push(Token { tok, line: tl, column: tc });
    }
    tokens.push(Token { tok: Tok::Eof, line, column: col });
    Ok(tokens)
}

fn literal_value(q: Rational) -> Value {
    if q.is_integer() {
        Value::Int(q.to_integer())
    } else {
        Value::Real(q)
    }
}

struct Parser<'s> {
    tokens: Vec<Token>,
    pos: usize,
    schema: &'s Schema,
    set: ConstraintSet,
}

type PResult<T> = Result<T, ParseError>;

impl<'s> Parser<'s> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> ParseError {
        let t = &self.tokens[pos];
        ParseError { line: t.line, column: t.column, message: message.into() }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.pos, message)
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected {}, found {}", describe(&want), describe(self.peek()))))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.error(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn signed_number(&mut self) -> PResult<Rational> {
        let negative = if *self.peek() == Tok::Minus {
            self.next();
            true
        } else {
            if *self.peek() == Tok::Plus {
                self.next();
            }
            false
        };
        match self.peek().clone() {
            Tok::Number(q) => {
                self.next();
                Ok(if negative { -q } else { q })
            }
            other => Err(self.error(format!("expected number, found {}", describe(&other)))),
        }
    }

    fn literal(&mut self) -> PResult<Option<Value>> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Some(Value::Str(s)))
            }
            Tok::Number(_) | Tok::Minus => Ok(Some(literal_value(self.signed_number()?))),
            _ => Ok(None),
        }
    }

    fn file(&mut self) -> PResult<()> {
        while *self.peek() != Tok::Eof {
            if self.is_keyword("function") && matches!(self.peek_at(1), Tok::Ident(_)) {
                let f = self.function()?;
                self.set.functions.push(f);
            } else {
                let c = self.constraint()?;
                self.set.constraints.push(c);
            }
        }
        Ok(())
    }

    fn relation(&mut self) -> PResult<(crate::relational::RelId, &'s RelationSchema, String)> {
        let at = self.pos;
        let name = self.ident("relation name")?;
        let schema: &'s Schema = self.schema;
        match schema.relation(&name) {
            Some((id, rel)) => Ok((id, rel, name)),
            None => Err(self.error_at(at, format!("unknown relation `{name}`"))),
        }
    }

    fn function(&mut self) -> PResult<AggregationFunction> {
        self.expect_keyword("function")?;
        let name_pos = self.pos;
        let name = self.ident("function name")?;
        if self.set.function(&name).is_some() {
            return Err(self.error_at(name_pos, format!("function `{name}` defined twice")));
        }
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let at = self.pos;
                let p = self.ident("parameter name")?;
                if params.contains(&p) {
                    return Err(self.error_at(at, format!("duplicate parameter `{p}`")));
                }
                params.push(p);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect_keyword("on")?;
        let (relation, rel, relation_name) = self.relation()?;
        self.expect(Tok::Colon)?;
        self.expect_keyword("sum")?;
        self.expect(Tok::LParen)?;
        let body = self.attr_expr(rel)?;
        self.expect(Tok::RParen)?;
        let condition = if self.is_keyword("where") {
            self.next();
            self.cond_or(rel, &params)?
        } else {
            Condition::True
        };
        Ok(AggregationFunction { name, relation, relation_name, params, body, condition })
    }

    fn attr_expr(&mut self, rel: &RelationSchema) -> PResult<AttrExpr> {
        let mut lhs = self.attr_term(rel)?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    lhs = AttrExpr::Add(Box::new(lhs), Box::new(self.attr_term(rel)?));
                }
                Tok::Minus => {
                    self.next();
                    lhs = AttrExpr::Sub(Box::new(lhs), Box::new(self.attr_term(rel)?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn attr_term(&mut self, rel: &RelationSchema) -> PResult<AttrExpr> {
        if *self.peek() == Tok::Minus && !matches!(self.peek_at(1), Tok::Number(_)) {
            self.next();
            let inner = self.attr_factor(rel)?;
            return Ok(AttrExpr::Scale(-Rational::from_integer(1.into()), Box::new(inner)));
        }
        match self.peek().clone() {
            Tok::Number(_) | Tok::Minus => {
                let c = self.signed_number()?;
                if *self.peek() == Tok::Star {
                    self.next();
                    let inner = self.attr_factor(rel)?;
                    Ok(AttrExpr::Scale(c, Box::new(inner)))
                } else {
                    Ok(AttrExpr::Const(c))
                }
            }
            _ => {
                let e = self.attr_factor(rel)?;
                if *self.peek() == Tok::Star {
                    return Err(self.error(
                        "non-linear attribute expression: only a numeric constant may multiply `(e)`; \
                         products of attributes are not allowed",
                    ));
                }
                Ok(e)
            }
        }
    }

    fn attr_factor(&mut self, rel: &RelationSchema) -> PResult<AttrExpr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                let e = self.attr_expr(rel)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Number(_) | Tok::Minus => Ok(AttrExpr::Const(self.signed_number()?)),
            Tok::Ident(name) => {
                let at = self.pos;
                self.next();
                let index = rel
                    .attribute_index(&name)
                    .ok_or_else(|| self.error_at(at, format!("relation `{}` has no attribute `{name}`", rel.name)))?;
                if !rel.attributes[index].domain.is_numeric() {
                    return Err(self.error_at(at, format!("attribute `{name}` is not numerical and cannot be summed")));
                }
                Ok(AttrExpr::Attr { index, name })
            }
            other => Err(self.error(format!("expected attribute expression, found {}", describe(&other)))),
        }
    }

    fn cond_or(&mut self, rel: &RelationSchema, params: &[String]) -> PResult<Condition> {
        let mut lhs = self.cond_and(rel, params)?;
        while self.is_keyword("or") {
            self.next();
            lhs = Condition::or(lhs, self.cond_and(rel, params)?);
        }
        Ok(lhs)
    }

    fn cond_and(&mut self, rel: &RelationSchema, params: &[String]) -> PResult<Condition> {
        let mut lhs = self.cond_not(rel, params)?;
        while self.is_keyword("and") {
            self.next();
            lhs = Condition::and(lhs, self.cond_not(rel, params)?);
        }
        Ok(lhs)
    }

    fn cond_not(&mut self, rel: &RelationSchema, params: &[String]) -> PResult<Condition> {
        if self.is_keyword("not") {
            self.next();
            return Ok(Condition::negate(self.cond_not(rel, params)?));
        }
        if *self.peek() == Tok::LParen {
            self.next();
            let c = self.cond_or(rel, params)?;
            self.expect(Tok::RParen)?;
            return Ok(c);
        }
        if self.is_keyword("true") {
            self.next();
            return Ok(Condition::True);
        }
        let lhs_pos = self.pos;
        let lhs = self.operand(rel, params)?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            other => return Err(self.error(format!("expected comparison operator, found {}", describe(other)))),
        };
        self.next();
        let rhs = self.operand(rel, params)?;
        check_operand_types(rel, &lhs, &rhs).map_err(|m| self.error_at(lhs_pos, m))?;
        Ok(Condition::Cmp(Comparison { lhs, op, rhs }))
    }

    fn operand(&mut self, rel: &RelationSchema, params: &[String]) -> PResult<Operand> {
        if let Some(v) = self.literal()? {
            return Ok(Operand::Const(v));
        }
        let at = self.pos;
        let name = self.ident("attribute, parameter or constant")?;
        let param = params.iter().position(|p| *p == name);
        let attr = rel.attribute_index(&name);
        match (param, attr) {
            (Some(_), Some(_)) => Err(self.error_at(at, format!("`{name}` is both a parameter and an attribute"))),
            (Some(index), None) => Ok(Operand::Param { index, name }),
            (None, Some(index)) => Ok(Operand::Attr { index, name }),
            (None, None) => {
                Err(self.error_at(at, format!("`{name}` is neither a parameter nor an attribute of `{}`", rel.name)))
            }
        }
    }

    fn constraint(&mut self) -> PResult<AggregateConstraint> {
        let mut named = false;
        let name = if self.is_keyword("rule") {
            self.next();
            let at = self.pos;
            let n = self.ident("rule name")?;
            if self.set.constraint(&n).is_some() {
                return Err(self.error_at(at, format!("rule `{n}` defined twice")));
            }
            self.expect(Tok::Colon)?;
            named = true;
            n
        } else {
            let mut k = self.set.constraints.len() + 1;
            while self.set.constraint(&format!("c{k}")).is_some() {
                k += 1;
            }
            format!("c{k}")
        };
        let mut body = Vec::new();
        let mut body_vars = BTreeSet::new();
        if *self.peek() != Tok::Arrow {
            loop {
                body.push(self.atom(&mut body_vars)?);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Arrow)?;
        let mut terms = Vec::new();
        let mut sign = Rational::from_integer(1.into());
        match self.peek() {
            Tok::Minus => {
                self.next();
                sign = -sign;
            }
            Tok::Plus => {
                self.next();
            }
            _ => {}
        }
        loop {
            terms.push(self.agg_term(sign.clone(), &body_vars)?);
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    sign = Rational::from_integer(1.into());
                }
                Tok::Minus => {
                    self.next();
                    sign = Rational::from_integer((-1).into());
                }
                _ => break,
            }
        }
        let cmp = match self.peek() {
            Tok::Cmp(CmpOp::Le) => Comparator::Le,
            Tok::Cmp(CmpOp::Ge) => Comparator::Ge,
            Tok::Cmp(CmpOp::Eq) => Comparator::Eq,
            other => return Err(self.error(format!("expected `<=`, `>=` or `=`, found {}", describe(other)))),
        };
        self.next();
        let bound = self.signed_number()?;
        Ok(AggregateConstraint { name, named, body, terms, cmp, bound })
    }

    fn atom(&mut self, vars: &mut BTreeSet<String>) -> PResult<Atom> {
        let (relation, rel, relation_name) = self.relation()?;
        self.expect(Tok::LParen)?;
        let mut terms = Vec::new();
        loop {
            let at = self.pos;
            let position = terms.len();
            let term = match self.peek().clone() {
                Tok::Underscore => {
                    self.next();
                    AtomTerm::Wildcard
                }
                Tok::Ident(v) => {
                    self.next();
                    AtomTerm::Var(v)
                }
                _ => match self.literal()? {
                    Some(v) => AtomTerm::Const(v),
                    None => return Err(self.error(format!("expected atom term, found {}", describe(self.peek())))),
                },
            };
            if let Some(attr) = rel.attributes.get(position) {
                match &term {
                    AtomTerm::Wildcard => {}
                    _ if attr.measure => {
                        return Err(self.error_at(
                            at,
                            format!(
                                "measure attribute `{}` of `{}` must be bound by `_` in a constraint body",
                                attr.name, rel.name
                            ),
                        ))
                    }
                    AtomTerm::Const(v) if v.is_numeric() != attr.domain.is_numeric() => {
                        return Err(self.error_at(
                            at,
                            format!(
                                "literal {} does not fit the {} attribute `{}`",
                                v.literal(),
                                attr.domain,
                                attr.name
                            ),
                        ))
                    }
                    AtomTerm::Var(v) => {
                        vars.insert(v.clone());
                    }
                    AtomTerm::Const(_) => {}
                }
            }
            terms.push(term);
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        if terms.len() != rel.arity() {
            return Err(self.error(format!(
                "relation `{}` has {} attributes, atom has {} terms",
                rel.name,
                rel.arity(),
                terms.len()
            )));
        }
        Ok(Atom { relation, relation_name, terms })
    }

    fn agg_term(&mut self, sign: Rational, vars: &BTreeSet<String>) -> PResult<AggTerm> {
        let mut coeff = sign;
        if let Tok::Number(q) = self.peek().clone() {
            self.next();
            self.expect(Tok::Star)?;
            coeff *= q;
        }
        let at = self.pos;
        let function_name = self.ident("aggregation function")?;
        let (function, func) = self
            .set
            .function(&function_name)
            .map(|(i, f)| (i, f.params.len()))
            .ok_or_else(|| self.error_at(at, format!("unknown aggregation function `{function_name}`")))?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let arg_pos = self.pos;
                let arg = match self.peek().clone() {
                    Tok::Underscore => {
                        return Err(self.error("wildcard `_` is not allowed in aggregation arguments"));
                    }
                    Tok::Ident(v) => {
                        self.next();
                        if !vars.contains(&v) {
                            return Err(
                                self.error_at(arg_pos, format!("variable `{v}` does not occur in the constraint body"))
                            );
                        }
                        Arg::Var(v)
                    }
                    _ => match self.literal()? {
                        Some(v) => Arg::Const(v),
                        None => return Err(self.error(format!("expected argument, found {}", describe(self.peek())))),
                    },
                };
                args.push(arg);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        if args.len() != func {
            return Err(
                self.error_at(at, format!("function `{function_name}` takes {func} arguments, {} given", args.len()))
            );
        }
        Ok(AggTerm { coeff, function, function_name, args })
    }
}

fn check_operand_types(rel: &RelationSchema, lhs: &Operand, rhs: &Operand) -> Result<(), String> {
    let kind = |o: &Operand| -> Option<bool> {
        match o {
            Operand::Attr { index, .. } => Some(rel.attributes[*index].domain != Domain::String),
            Operand::Const(v) => Some(v.is_numeric()),
            Operand::Param { .. } => None,
        }
    };
    match (kind(lhs), kind(rhs)) {
        (Some(a), Some(b)) if a != b => Err(format!("cannot compare `{lhs}` with `{rhs}`: mixed string and number")),
        _ => Ok(()),
    }
}

/// Reads `text` as exactly one quoted string literal of the constraint
/// language, returning its contents.
pub(crate) fn string_literal(text: &str) -> Option<String> {
    match lex(text).ok()?.as_slice() {
        [Token { tok: Tok::Str(s), .. }, Token { tok: Tok::Eof, .. }] => Some(s.clone()),
        _ => None,
    }
}

/// Parses constraint-language text against a schema.
pub fn parse_constraints(text: &str, schema: &Schema) -> Result<ConstraintSet, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0, schema, set: ConstraintSet::default() };
    parser.file()?;
    Ok(parser.set)
}
