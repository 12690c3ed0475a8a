//! Exact feasibility for mixed integer/real linear systems.
//!
//! The real relaxation is decided by a bounded simplex over `c + kδ`
//! values, so strict rows never need an epsilon. Infeasible relaxations come
//! with a Farkas certificate. Integer variables are handled by
//! branch-and-bound inside a search box.

mod delta;
mod simplex;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::linear::{Inequality, LinearSystem, Rel, VarKind};
use crate::rational::{ceil, floor, is_integral, Rational};
use delta::Delta;
use simplex::{Explanation, Origin, Tableau};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// `M` in the default integer box `M·(1 + Σ|coefficients| + Σ|bounds|)`.
    pub box_multiplier: u32,
    /// Branch-and-bound nodes before giving up with `BoundExhausted`.
    pub node_limit: usize,
    /// Explicit `[lo, hi]` for every variable; replaces the default box.
    pub value_box: Option<(Rational, Rational)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { box_multiplier: 2, node_limit: 20_000, value_box: None }
    }
}

/// Multipliers `λ` with `Σ λ_i · row_i` reading `0 ≤ c` with `c < 0`, or
/// `0 < 0`. Inequality rows get `λ ≥ 0`; equality rows any sign.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub multipliers: Vec<(usize, Rational)>,
}

impl Certificate {
    /// Independently re-derives the contradiction from the system rows.
    pub fn is_valid(&self, system: &LinearSystem) -> bool {
        let mut combo: BTreeMap<usize, Rational> = BTreeMap::new();
        let mut constant = Rational::zero();
        let mut strict = false;
        for (i, lambda) in &self.multipliers {
            let Some(row) = system.rows.get(*i) else {
                return false;
            };
            if row.rel != Rel::Eq && lambda.is_negative() {
                return false;
            }
            for (v, a) in &row.coeffs {
                *combo.entry(*v).or_insert_with(Rational::zero) += lambda * a;
            }
            constant += lambda * &row.bound;
            strict |= row.rel == Rel::Lt && lambda.is_positive();
        }
        combo.values().all(Zero::is_zero) && (constant.is_negative() || (constant.is_zero() && strict))
    }

    pub fn to_json(&self, system: &LinearSystem) -> serde_json::Value {
        serde_json::Value::Array(
            self.multipliers
                .iter()
                .map(|(i, l)| {
                    serde_json::json!({
                        "row": i,
                        "origin": system.rows[*i].origin,
                        "multiplier": crate::rational::format_rational(l),
                    })
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Feasible(Vec<Rational>),
    /// No solution. The certificate is present when the real relaxation is
    /// already infeasible.
    Infeasible(Option<Certificate>),
    /// Integer search ran out of box or nodes without a proof either way.
    BoundExhausted {
        bound: Rational,
    },
}

impl Outcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Feasible(_))
    }
}

fn certificate(explanation: &Explanation) -> Option<Certificate> {
    let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
    for (origin, weight) in explanation {
        match origin {
            Origin::Row { row, scale } => *acc.entry(*row).or_insert_with(Rational::zero) += weight * scale,
            Origin::Other => return None,
        }
    }
    Some(Certificate { multipliers: acc.into_iter().filter(|(_, l)| !l.is_zero()).collect() })
}

fn apply_value_box(t: &mut Tableau, n: usize, value_box: &Option<(Rational, Rational)>) {
    if let Some((lo, hi)) = value_box {
        for v in 0..n {
            t.bound(v, Delta::real(lo.clone()), false);
            t.bound(v, Delta::real(hi.clone()), true);
        }
    }
}

/// Rewrites rows over integer variables only to integer coefficients with
/// an integral bound (`< b` becomes `≤ ⌈b⌉ − 1`). `None` when an equality
/// has no integer solution.
fn tighten_integer_rows(system: &LinearSystem) -> Option<Vec<Inequality>> {
    let mut out = Vec::with_capacity(system.rows.len());
    for row in &system.rows {
        let all_int = !row.coeffs.is_empty() && row.coeffs.iter().all(|(v, _)| system.is_integer(*v));
        if !all_int {
            out.push(row.clone());
            continue;
        }
        let lcm = row.coeffs.iter().fold(BigInt::one(), |acc, (_, a)| acc.lcm(a.denom()));
        let nums: Vec<BigInt> =
            row.coeffs.iter().map(|(_, a)| (a * Rational::from_integer(lcm.clone())).to_integer()).collect();
        let gcd = nums.iter().fold(BigInt::zero(), |acc, n| acc.gcd(n));
        let factor = Rational::new(lcm, gcd.clone());
        let coeffs = row.coeffs.iter().zip(&nums).map(|((v, _), n)| (*v, Rational::from_integer(n / &gcd))).collect();
        let b = &row.bound * &factor;
        let (rel, bound) = match row.rel {
            Rel::Le => (Rel::Le, Rational::from_integer(floor(&b))),
            Rel::Lt => (Rel::Le, Rational::from_integer(ceil(&b) - 1)),
            Rel::Eq if is_integral(&b) => (Rel::Eq, b),
            Rel::Eq => return None,
        };
        out.push(Inequality { coeffs, rel, bound, origin: row.origin.clone() });
    }
    Some(out)
}

/// Default integer box `M·(1 + Σ|coefficients| + Σ|bounds|)`.
pub fn default_box(system: &LinearSystem, multiplier: u32) -> Rational {
    let mut total = Rational::one();
    for row in &system.rows {
        for (_, a) in &row.coeffs {
            total += a.abs();
        }
        total += row.bound.abs();
    }
    total * Rational::from_integer(multiplier.into())
}

/// Decides the real relaxation (after integer row tightening), honouring the
/// explicit value box.
pub fn relaxation_feasible(system: &LinearSystem, options: &SolveOptions) -> bool {
    let rows = match tighten_integer_rows(system) {
        Some(r) => r,
        None => return false,
    };
    let mut t = Tableau::new(system.vars.len(), &rows, &hint(system));
    apply_value_box(&mut t, system.vars.len(), &options.value_box);
    t.check().is_ok()
}

/// Start from the original cell values so witnesses stay close to the data.
fn hint(system: &LinearSystem) -> Vec<Rational> {
    system.vars.iter().map(|v| v.original.clone().unwrap_or_else(Rational::zero)).collect()
}

fn floor_delta(v: &Delta) -> Option<BigInt> {
    if v.k.is_zero() && is_integral(&v.c) {
        return None;
    }
    if is_integral(&v.c) {
        let c = v.c.to_integer();
        Some(if v.k.is_negative() { c - 1 } else { c })
    } else {
        Some(floor(&v.c))
    }
}

/// Exact feasibility with a witness for feasible systems.
pub fn solve(system: &LinearSystem, options: &SolveOptions) -> Outcome {
    let n = system.vars.len();
    let start = hint(system);
    let mut lp = Tableau::new(n, &system.rows, &start);
    apply_value_box(&mut lp, n, &options.value_box);
    if let Err(e) = lp.check() {
        return Outcome::Infeasible(certificate(&e));
    }
    let integers: Vec<usize> = (0..n).filter(|v| system.vars[*v].kind == VarKind::Integer).collect();
    if integers.is_empty() {
        let witness = lp.witness();
        debug_assert!(crate::linear::verify(system, &witness).unwrap_or(false));
        return Outcome::Feasible(witness);
    }
    let Some(rows) = tighten_integer_rows(system) else {
        return Outcome::Infeasible(None);
    };
    let bound = match &options.value_box {
        Some((lo, hi)) => lo.abs().max(hi.abs()),
        None => default_box(system, options.box_multiplier),
    };
    let mut root = Tableau::new(n, &rows, &start);
    apply_value_box(&mut root, n, &options.value_box);
    if options.value_box.is_none() {
        for &v in &integers {
            root.bound(v, Delta::real(-bound.clone()), false);
            root.bound(v, Delta::real(bound.clone()), true);
        }
    }
    let mut stack = vec![root];
    let mut nodes = 0usize;
    while let Some(mut t) = stack.pop() {
        nodes += 1;
        if nodes > options.node_limit {
            return Outcome::BoundExhausted { bound };
        }
        if t.check().is_err() {
            continue;
        }
        let branch = integers.iter().find_map(|&v| floor_delta(t.value(v)).map(|f| (v, f)));
        match branch {
            None => {
                let witness = t.witness();
                debug_assert!(crate::linear::verify(system, &witness).unwrap_or(false));
                return Outcome::Feasible(witness);
            }
            Some((v, f)) => {
                let f = Rational::from_integer(f);
                let mut up = t.clone();
                up.bound(v, Delta::real(&f + Rational::one()), false);
                t.bound(v, Delta::real(f), true);
                stack.push(up);
                stack.push(t);
            }
        }
    }
    if options.value_box.is_none() {
        for &v in &integers {
            for upper in [true, false] {
                let mut t = Tableau::new(n, &rows, &start);
                let edge = if upper { -(&bound + Rational::one()) } else { &bound + Rational::one() };
                t.bound(v, Delta::real(edge), upper);
                if t.check().is_ok() {
                    return Outcome::BoundExhausted { bound };
                }
            }
        }
    }
    Outcome::Infeasible(None)
}
