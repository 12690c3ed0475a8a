//! Consistent answers to ground-atom queries.
//!
//! Repairs only change measure values, so a query atom can only ever be
//! matched by tuples that already agree with it on every other attribute.
//! A minimal support falsifies the query when some solution over it makes
//! every such tuple differ from the query on at least one measure.

use std::fmt;

use thiserror::Error;

use crate::constraint::{string_literal, ConstraintSet};
use crate::encode::Search;
use crate::exec;
use crate::linear::{Inequality, Rel};
use crate::rational::Rational;
use crate::relational::{apply_update_set, CellRef, Domain, Instance, RelId, Support, TupleId, UpdateSet, Value};
use crate::repair::{Limits, RepairEngine, Semantics, Verdict};

/// `R(v1, ..., vn)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundAtomQuery {
    pub relation: RelId,
    pub values: Vec<Value>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("malformed query atom: {0}")]
    Syntax(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("relation `{relation}` has {expected} attributes, query gives {found}")]
    Arity { relation: String, expected: usize, found: usize },
    #[error("value `{value}` does not fit attribute {attribute} ({domain})")]
    Domain { attribute: String, value: String, domain: Domain },
}

impl GroundAtomQuery {
    /// Parses `Rel(v1, ..., vn)`. Values may be quoted as in the constraint
    /// language; unquoted values are read in the attribute's domain.
    pub fn parse(text: &str, instance: &Instance) -> Result<Self, QueryError> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| QueryError::Syntax("expected `(`".into()))?;
        let inner =
            text[open + 1..].strip_suffix(')').ok_or_else(|| QueryError::Syntax("expected `)` at the end".into()))?;
        let name = text[..open].trim();
        let (relation, schema) =
            instance.schema().relation(name).ok_or_else(|| QueryError::UnknownRelation(name.to_string()))?;
        let fields = split_fields(inner)?;
        if fields.len() != schema.arity() {
            return Err(QueryError::Arity {
                relation: name.to_string(),
                expected: schema.arity(),
                found: fields.len(),
            });
        }
        let mut values = Vec::with_capacity(fields.len());
        for (field, attr) in fields.iter().zip(&schema.attributes) {
            let raw = field.trim();
            let value = match raw.chars().next() {
                Some('\'') | Some('"') => string_literal(raw)
                    .ok_or_else(|| QueryError::Syntax(format!("bad string literal {raw}")))
                    .map(Value::Str)?,
                _ => Value::parse_in(raw, attr.domain).ok_or_else(|| QueryError::Domain {
                    attribute: attr.name.clone(),
                    value: raw.to_string(),
                    domain: attr.domain,
                })?,
            };
            if !value.conforms_to(attr.domain) {
                return Err(QueryError::Domain {
                    attribute: attr.name.clone(),
                    value: raw.to_string(),
                    domain: attr.domain,
                });
            }
            values.push(value);
        }
        Ok(GroundAtomQuery { relation, values })
    }

    pub fn display<'a>(&'a self, instance: &'a Instance) -> impl fmt::Display + 'a {
        QueryDisplay { query: self, instance }
    }
}

struct QueryDisplay<'a> {
    query: &'a GroundAtomQuery,
    instance: &'a Instance,
}

impl fmt::Display for QueryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.query.values.iter().map(Value::literal).collect();
        write!(f, "{}({})", self.instance.schema().rel(self.query.relation).name, args.join(", "))
    }
}

/// Splits on top-level commas, leaving quoted text (with `\` escapes) alone.
fn split_fields(text: &str) -> Result<Vec<String>, QueryError> {
    let mut fields = vec![String::new()];
    let mut quote: Option<char> = None;
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (Some(_), '\\') => {
                fields.last_mut().unwrap().push(c);
                if let Some(n) = chars.next() {
                    fields.last_mut().unwrap().push(n);
                }
                continue;
            }
            (Some(q), c) if c == q => quote = None,
            (None, '\'' | '"') => quote = Some(c),
            (None, ',') => {
                fields.push(String::new());
                continue;
            }
            _ => {}
        }
        fields.last_mut().unwrap().push(c);
    }
    if quote.is_some() {
        return Err(QueryError::Syntax("unterminated string".into()));
    }
    if fields.len() == 1 && fields[0].trim().is_empty() {
        fields.clear();
    }
    Ok(fields)
}

/// Tuples agreeing with the query on every non-measure attribute.
pub fn match_tuples(instance: &Instance, query: &GroundAtomQuery) -> Vec<TupleId> {
    let schema = instance.schema().rel(query.relation);
    instance
        .rows(query.relation)
        .iter()
        .enumerate()
        .filter(|(_, row)| {
            schema.attributes.iter().zip(row.iter().zip(&query.values)).all(|(a, (v, q))| a.measure || v.same(q))
        })
        .map(|(row, _)| TupleId { relation: query.relation, row })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CqaVerdict {
    pub semantics: Semantics,
    pub answer: Verdict,
    /// A minimal repair whose result does not contain the query atom.
    pub witness: Option<UpdateSet>,
    /// Set when the instance has no repair at all (within limits).
    pub no_repair: bool,
    pub supports_checked: usize,
    pub limits: Limits,
}

impl CqaVerdict {
    pub fn to_json(&self, instance: &Instance, query: &GroundAtomQuery) -> serde_json::Value {
        let mut out = serde_json::json!({
            "query": query.display(instance).to_string(),
            "semantics": self.semantics.to_string(),
            "answer": self.answer.to_json(),
            "no_repair": self.no_repair,
            "supports_checked": self.supports_checked,
            "limits": self.limits.to_json(),
        });
        if let Verdict::Indeterminate(why) = &self.answer {
            out["reason"] = why.clone().into();
        }
        if let Some(w) = &self.witness {
            out["witness"] = w.to_json(instance);
        }
        out
    }
}

/// Looks for a solution over `support` under which no matched tuple equals
/// the query.
fn falsify(engine: &RepairEngine<'_>, matched: &[TupleId], query: &GroundAtomQuery, support: &Support) -> Search {
    let instance = engine.instance();
    let schema = instance.schema().rel(query.relation);
    let mut encoding = engine.encoder().encode(support);
    for t in matched {
        let mut alternatives = Vec::new();
        let mut differs = false;
        for attr in schema.measure_indices() {
            let cell = CellRef::new(t.relation, t.row, attr);
            let Some(target) = query.values[attr].as_rational() else {
                differs = true;
                break;
            };
            match encoding.var_of(cell) {
                Some(v) => {
                    let one = Rational::from_integer(1.into());
                    alternatives.push(vec![below(v, one.clone(), target.clone())]);
                    alternatives.push(vec![below(v, -one, -target)]);
                }
                None => {
                    if !instance.value(cell).is_some_and(|cur| cur.same(&query.values[attr])) {
                        differs = true;
                        break;
                    }
                }
            }
        }
        if !differs {
            encoding.add_choice(format!("{}[{}] differs from query", schema.name, t.row), alternatives);
        }
    }
    encoding.search(&engine.limits().search)
}

fn below(var: usize, coeff: Rational, bound: Rational) -> Inequality {
    Inequality { coeffs: vec![(var, coeff)], rel: Rel::Lt, bound, origin: "query".into() }
}

/// Is `query` true in every minimal repair?
pub fn cqa(
    instance: &Instance,
    set: &ConstraintSet,
    query: &GroundAtomQuery,
    semantics: Semantics,
    limits: &Limits,
) -> CqaVerdict {
    let engine = RepairEngine::new(instance, set, limits.clone());
    cqa_with(&engine, query, semantics)
}

pub fn cqa_with(engine: &RepairEngine<'_>, query: &GroundAtomQuery, semantics: Semantics) -> CqaVerdict {
    let report = engine.minimal_supports(semantics);
    let mut verdict = CqaVerdict {
        semantics,
        answer: Verdict::False,
        witness: None,
        no_repair: false,
        supports_checked: report.supports.len(),
        limits: engine.limits().clone(),
    };
    if report.supports.is_empty() {
        if report.complete {
            verdict.no_repair = true;
        } else {
            verdict.answer = Verdict::Indeterminate("no repair found within the search space".into());
        }
        return verdict;
    }
    let matched = match_tuples(engine.instance(), query);
    let supports: Vec<&Support> = report.supports.iter().map(|m| &m.support).collect();
    let results = exec::map(engine.limits().mode, &supports, |s| falsify(engine, &matched, query, s));
    let mut undecided = None;
    for (support, result) in supports.iter().zip(results) {
        match result {
            Search::Feasible(values) => {
                let cells: Vec<CellRef> = support.iter().copied().collect();
                verdict.witness = Some(engine.sample(&cells, &values));
                return verdict;
            }
            Search::Infeasible => {}
            Search::Indeterminate(why) => {
                undecided.get_or_insert(why);
            }
        }
    }
    verdict.answer = match undecided {
        Some(why) => Verdict::Indeterminate(why),
        None if !report.complete => Verdict::Indeterminate(format!(
            "minimal supports larger than {} cells were not enumerated",
            engine.limits().max_support
        )),
        None => Verdict::True,
    };
    verdict
}

/// Whether `query` holds in `instance` as it stands.
pub fn holds_in(instance: &Instance, query: &GroundAtomQuery) -> bool {
    instance.rows(query.relation).iter().any(|row| row.iter().zip(&query.values).all(|(v, q)| v.same(q)))
}

/// Applies a witness and reports whether the result is a consistent
/// instance lacking the query atom.
pub fn witness_falsifies(
    instance: &Instance,
    set: &ConstraintSet,
    query: &GroundAtomQuery,
    witness: &UpdateSet,
) -> bool {
    let repaired = apply_update_set(instance, witness);
    crate::eval::check(&repaired, set).is_consistent() && !holds_in(&repaired, query)
}
