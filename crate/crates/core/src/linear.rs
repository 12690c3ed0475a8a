//! Linear systems over exact rationals: variables tagged integer or real,
//! rows `Σ a·x ≤ b`, `Σ a·x < b` or `Σ a·x = b`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::rational::{format_rational, is_integral, Rational};
use crate::relational::{CellRef, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Integer,
    Real,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// The cell this variable stands for, when it comes from a support.
    pub cell: Option<CellRef>,
    pub original: Option<Rational>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rel {
    Le,
    Lt,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "=",
        }
    }

    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Rel::Le => lhs <= rhs,
            Rel::Lt => lhs < rhs,
            Rel::Eq => lhs == rhs,
        }
    }
}

/// `Σ coeffs · x  rel  bound`. Coefficients are merged per variable, sorted
/// by variable index and never zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inequality {
    pub coeffs: Vec<(usize, Rational)>,
    pub rel: Rel,
    pub bound: Rational,
    /// Where the row comes from (ground constraint, frozen condition, ...).
    pub origin: String,
}

impl Inequality {
    pub fn lhs(&self, values: &[Rational]) -> Rational {
        self.coeffs.iter().fold(Rational::zero(), |acc, (v, a)| acc + a * &values[*v])
    }

    pub fn holds(&self, values: &[Rational]) -> bool {
        self.rel.holds(&self.lhs(values), &self.bound)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearSystem {
    pub vars: Vec<Variable>,
    pub rows: Vec<Inequality>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("assignment has {found} values for {expected} variables")]
    MissingVariable { expected: usize, found: usize },
}

impl LinearSystem {
    pub fn new() -> Self {
        LinearSystem::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind) -> usize {
        self.vars.push(Variable { name: name.into(), kind, cell: None, original: None });
        self.vars.len() - 1
    }

    pub fn add_cell_var(&mut self, instance: &Instance, cell: CellRef) -> usize {
        let kind = match instance.cell_domain(cell) {
            crate::relational::Domain::Integer => VarKind::Integer,
            _ => VarKind::Real,
        };
        self.vars.push(Variable {
            name: instance.display_cell(cell).to_string(),
            kind,
            cell: Some(cell),
            original: instance.value(cell).and_then(|v| v.as_rational()),
        });
        self.vars.len() - 1
    }

    /// Adds a row, merging repeated variables and dropping zero coefficients.
    pub fn add_row<I>(&mut self, coeffs: I, rel: Rel, bound: Rational, origin: impl Into<String>)
    where
        I: IntoIterator<Item = (usize, Rational)>,
    {
        self.rows.push(Inequality { coeffs: merge(coeffs), rel, bound, origin: origin.into() });
    }

    pub fn is_integer(&self, var: usize) -> bool {
        self.vars[var].kind == VarKind::Integer
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vars": self.vars.iter().map(|v| serde_json::json!({
                "name": v.name,
                "kind": v.kind,
                "original": v.original.as_ref().map(format_rational),
            })).collect::<Vec<_>>(),
            "ineqs": self.rows.iter().map(|r| serde_json::json!({
                "coeffs": r.coeffs.iter().map(|(v, a)| serde_json::json!({
                    "var": self.vars[*v].name,
                    "coeff": format_rational(a),
                })).collect::<Vec<_>>(),
                "rel": r.rel.symbol(),
                "bound": format_rational(&r.bound),
                "origin": r.origin,
            })).collect::<Vec<_>>(),
        })
    }
}

pub(crate) fn merge<I: IntoIterator<Item = (usize, Rational)>>(coeffs: I) -> Vec<(usize, Rational)> {
    let mut map: BTreeMap<usize, Rational> = BTreeMap::new();
    for (v, a) in coeffs {
        *map.entry(v).or_insert_with(Rational::zero) += a;
    }
    map.into_iter().filter(|(_, a)| !a.is_zero()).collect()
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            let terms: Vec<String> =
                row.coeffs.iter().map(|(v, a)| format!("{}·{}", format_rational(a), self.vars[*v].name)).collect();
            let lhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
            writeln!(f, "{lhs} {} {}", row.rel.symbol(), format_rational(&row.bound))?;
        }
        Ok(())
    }
}

/// Checks an assignment against every row under exact arithmetic, and
/// integrality of integer variables.
pub fn verify(system: &LinearSystem, assignment: &[Rational]) -> Result<bool, VerifyError> {
    if assignment.len() != system.vars.len() {
        return Err(VerifyError::MissingVariable { expected: system.vars.len(), found: assignment.len() });
    }
    let integral = system.vars.iter().zip(assignment).all(|(v, x)| v.kind == VarKind::Real || is_integral(x));
    Ok(integral && system.rows.iter().all(|r| r.holds(assignment)))
}
