use std::fmt;

use crate::rational::{format_rational, Rational};
use crate::relational::{RelId, Value};
use num_traits::{One, Signed};

/// Linear attribute expression: constants, attributes, `+`/`-`, and
/// scaling by a constant. Products of attributes are not representable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttrExpr {
    Const(Rational),
    Attr { index: usize, name: String },
    Add(Box<AttrExpr>, Box<AttrExpr>),
    Sub(Box<AttrExpr>, Box<AttrExpr>),
    Scale(Rational, Box<AttrExpr>),
}

impl AttrExpr {
    pub fn attributes(&self, out: &mut Vec<usize>) {
        match self {
            AttrExpr::Const(_) => {}
            AttrExpr::Attr { index, .. } => out.push(*index),
            AttrExpr::Add(a, b) | AttrExpr::Sub(a, b) => {
                a.attributes(out);
                b.attributes(out);
            }
            AttrExpr::Scale(_, e) => e.attributes(out),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Attr { index: usize, name: String },
    Param { index: usize, name: String },
    Const(Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl Comparison {
    pub fn negated(&self) -> Comparison {
        Comparison { lhs: self.lhs.clone(), op: self.op.negate(), rhs: self.rhs.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condition {
    True,
    Cmp(Comparison),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
    Not(Box<Condition>),
}

impl Condition {
    pub fn and(a: Condition, b: Condition) -> Condition {
        Condition::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Condition, b: Condition) -> Condition {
        Condition::Or(Box::new(a), Box::new(b))
    }

    pub fn negate(a: Condition) -> Condition {
        Condition::Not(Box::new(a))
    }

    pub fn comparisons(&self) -> Vec<&Comparison> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Comparison>) {
        match self {
            Condition::True => {}
            Condition::Cmp(c) => out.push(c),
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Condition::Not(a) => a.collect(out),
        }
    }
}

/// `χ(x1..xk) = SELECT sum(e) FROM R WHERE C`, with the parameter equalities
/// written explicitly inside `C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregationFunction {
    pub name: String,
    pub relation: RelId,
    pub relation_name: String,
    pub params: Vec<String>,
    pub body: AttrExpr,
    pub condition: Condition,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomTerm {
    Var(String),
    Const(Value),
    Wildcard,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub relation: RelId,
    pub relation_name: String,
    pub terms: Vec<AtomTerm>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arg {
    Var(String),
    Const(Value),
}

/// One `c · χ(X)` summand of a constraint head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggTerm {
    pub coeff: Rational,
    pub function: usize,
    pub function_name: String,
    pub args: Vec<Arg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Le,
    Ge,
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        }
    }

    pub fn holds(self, lhs: &Rational, bound: &Rational) -> bool {
        match self {
            Comparator::Le => lhs <= bound,
            Comparator::Ge => lhs >= bound,
            Comparator::Eq => lhs == bound,
        }
    }
}

/// `∀x (φ(x) ⟹ Σ ci·χi(Xi) ◇ K)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateConstraint {
    pub name: String,
    /// Whether the name came from a `rule NAME:` prefix.
    pub named: bool,
    pub body: Vec<Atom>,
    pub terms: Vec<AggTerm>,
    pub cmp: Comparator,
    pub bound: Rational,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub functions: Vec<AggregationFunction>,
    pub constraints: Vec<AggregateConstraint>,
}

impl ConstraintSet {
    pub fn function(&self, name: &str) -> Option<(usize, &AggregationFunction)> {
        self.functions.iter().enumerate().find(|(_, f)| f.name == name)
    }

    pub fn constraint(&self, name: &str) -> Option<&AggregateConstraint> {
        self.constraints.iter().find(|c| c.name == name)
    }
}

/// Replaces every equality by a pair of `≤` constraints and normalizes `≥`
/// into `≤` by negating coefficients and bound. The result only holds `≤`.
pub fn desugar_equalities(set: &ConstraintSet) -> ConstraintSet {
    let negate = |c: &AggregateConstraint, name: String| AggregateConstraint {
        name,
        named: c.named,
        body: c.body.clone(),
        terms: c.terms.iter().map(|t| AggTerm { coeff: -t.coeff.clone(), ..t.clone() }).collect(),
        cmp: Comparator::Le,
        bound: -c.bound.clone(),
    };
    let mut constraints = Vec::with_capacity(set.constraints.len() * 2);
    for c in &set.constraints {
        match c.cmp {
            Comparator::Le => constraints.push(c.clone()),
            Comparator::Ge => constraints.push(negate(c, c.name.clone())),
            Comparator::Eq => {
                constraints.push(AggregateConstraint {
                    name: format!("{}#le", c.name),
                    cmp: Comparator::Le,
                    ..c.clone()
                });
                constraints.push(negate(c, format!("{}#ge", c.name)));
            }
        }
    }
    ConstraintSet { functions: set.functions.clone(), constraints }
}

fn fmt_number(q: &Rational) -> String {
    format_rational(q)
}

impl fmt::Display for AttrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrExpr::Const(q) => f.write_str(&fmt_number(q)),
            AttrExpr::Attr { name, .. } => f.write_str(name),
            AttrExpr::Add(a, b) | AttrExpr::Sub(a, b) => {
                let op = if matches!(self, AttrExpr::Add(..)) { "+" } else { "-" };
                write!(f, "{a} {op} ")?;
                if matches!(**b, AttrExpr::Add(..) | AttrExpr::Sub(..)) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            AttrExpr::Scale(c, e) => write!(f, "{} * ({e})", fmt_number(c)),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Attr { name, .. } | Operand::Param { name, .. } => f.write_str(name),
            Operand::Const(v) => f.write_str(&v.literal()),
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

impl Condition {
    fn precedence(&self) -> u8 {
        match self {
            Condition::Or(..) => 0,
            Condition::And(..) => 1,
            Condition::Not(..) => 2,
            Condition::True | Condition::Cmp(_) => 3,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::True => f.write_str("true"),
            Condition::Cmp(c) => write!(f, "{c}"),
            Condition::Or(a, b) => {
                a.fmt_child(f, 0)?;
                f.write_str(" or ")?;
                b.fmt_child(f, 1)
            }
            Condition::And(a, b) => {
                a.fmt_child(f, 1)?;
                f.write_str(" and ")?;
                b.fmt_child(f, 2)
            }
            Condition::Not(a) => {
                f.write_str("not ")?;
                a.fmt_child(f, 2)
            }
        }
    }
}

impl fmt::Display for AggregationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "function {}({}) on {}: sum({})", self.name, self.params.join(", "), self.relation_name, self.body)?;
        if self.condition != Condition::True {
            write!(f, " where {}", self.condition)?;
        }
        Ok(())
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Var(v) => f.write_str(v),
            Arg::Const(c) => f.write_str(&c.literal()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t {
                AtomTerm::Var(v) => v.clone(),
                AtomTerm::Const(c) => c.literal(),
                AtomTerm::Wildcard => "_".to_string(),
            })
            .collect();
        write!(f, "{}({})", self.relation_name, terms.join(", "))
    }
}

impl fmt::Display for AggTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(ToString::to_string).collect();
        let call = format!("{}({})", self.function_name, args.join(", "));
        let magnitude = self.coeff.abs();
        if magnitude.is_one() {
            f.write_str(&call)
        } else {
            write!(f, "{} * {call}", fmt_number(&magnitude))
        }
    }
}

impl fmt::Display for AggregateConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.named {
            write!(f, "rule {}: ", self.name)?;
        }
        let atoms: Vec<String> = self.body.iter().map(ToString::to_string).collect();
        if atoms.is_empty() {
            f.write_str("->")?;
        } else {
            write!(f, "{} ->", atoms.join(", "))?;
        }
        for (i, term) in self.terms.iter().enumerate() {
            let negative = term.coeff.is_negative();
            match (i, negative) {
                (0, false) => write!(f, " {term}")?,
                (0, true) => write!(f, " -{term}")?,
                (_, false) => write!(f, " + {term}")?,
                (_, true) => write!(f, " - {term}")?,
            }
        }
        write!(f, " {} {}", self.cmp.symbol(), fmt_number(&self.bound))
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for func in &self.functions {
            writeln!(f, "{func}")?;
        }
        for c in &self.constraints {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}
