use crate::rational::{format_rational, parse_rational, Rational};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use super::schema::Domain;

/// A cell value. Integer cells hold exact integers, real cells exact rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(BigInt),
    Real(Rational),
    Str(String),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Int(BigInt::from(v))
    }

    pub fn str(s: &str) -> Self {
        Value::Str(s.to_string())
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Value::Int(i) => Some(Rational::from_integer(i.clone())),
            Value::Real(q) => Some(q.clone()),
            Value::Str(_) => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Value::Str(_))
    }

    /// Parses a CSV field into the declared domain.
    pub fn parse_in(text: &str, domain: Domain) -> Option<Value> {
        match domain {
            Domain::Integer => {
                let t = text.trim();
                let t = t.strip_prefix('+').unwrap_or(t);
                let digits = t.strip_prefix('-').unwrap_or(t);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                BigInt::from_str(t).ok().map(Value::Int)
            }
            Domain::Real => parse_rational(text).map(Value::Real),
            Domain::String => Some(Value::Str(text.to_string())),
        }
    }

    /// Converts a rational into a value of the given numerical domain.
    /// Returns `None` for a fractional value in an integer domain.
    pub fn from_rational(q: Rational, domain: Domain) -> Option<Value> {
        match domain {
            Domain::Integer if q.is_integer() => Some(Value::Int(q.to_integer())),
            Domain::Integer | Domain::String => None,
            Domain::Real => Some(Value::Real(q)),
        }
    }

    pub fn conforms_to(&self, domain: Domain) -> bool {
        matches!(
            (self, domain),
            (Value::Int(_), Domain::Integer) | (Value::Real(_), Domain::Real) | (Value::Str(_), Domain::String)
        )
    }

    /// Semantic comparison: numbers compare numerically across int/real,
    /// strings lexicographically. Mixed string/number pairs are incomparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Str(_), _) | (_, Value::Str(_)) => None,
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (a, b) => Some(a.as_rational()?.cmp(&b.as_rational()?)),
        }
    }

    pub fn same(&self, other: &Value) -> bool {
        self.compare(other) == Some(Ordering::Equal)
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => match i.to_i64() {
                Some(v) => serde_json::Value::from(v),
                None => serde_json::Value::from(i.to_string()),
            },
            Value::Real(q) => serde_json::Value::from(format_rational(q)),
            Value::Str(s) => serde_json::Value::from(s.clone()),
        }
    }

    /// Renders the value as a literal of the constraint language.
    pub fn literal(&self) -> String {
        match self {
            Value::Str(s) => quote(s),
            other => other.to_string(),
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    if s.contains('\'') && !s.contains('"') {
        format!("\"{s}\"")
    } else {
        format!("'{}'", s.replace('\'', "\\'"))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(q) => f.write_str(&format_rational(q)),
            Value::Str(s) => f.write_str(s),
        }
    }
}
