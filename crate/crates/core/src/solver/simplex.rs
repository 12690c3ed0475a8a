//! Bounded general simplex over `c + kδ` values with Bland's rule.
//!
//! Every row with two or more variables gets a slack variable equal to the
//! row normalized so that its leading coefficient is one; rows with the
//! same normalized form share a slack, so `a ≤ e ≤ b` costs one tableau
//! row. Rows over a single variable become plain bounds.

use num_traits::{One, Signed, Zero};

use super::delta::{max_delta, Delta};
use crate::linear::{Inequality, Rel};
use crate::rational::Rational;

/// Where a bound comes from: `scale × row` for a system row, or something
/// without a Farkas reading (branching, search boxes).
#[derive(Clone, Debug)]
pub(crate) enum Origin {
    Row { row: usize, scale: Rational },
    Other,
}

#[derive(Clone, Debug)]
struct Bound {
    value: Delta,
    origin: Origin,
}

/// Facts `(origin, weight)` whose weighted sum is a contradiction.
pub(crate) type Explanation = Vec<(Origin, Rational)>;

#[derive(Clone, Debug)]
pub(crate) struct Tableau {
    originals: usize,
    lower: Vec<Option<Bound>>,
    upper: Vec<Option<Bound>>,
    value: Vec<Delta>,
    /// `basic[r] = Σ_j rows[r][j] · x_j` over nonbasic columns.
    rows: Vec<Vec<Rational>>,
    basic: Vec<usize>,
    row_of: Vec<Option<usize>>,
    slack_keys: Vec<Vec<(usize, Rational)>>,
    immediate: Option<Explanation>,
}

impl Tableau {
    /// Builds the tableau; nonbasic variables start at `hint` (zero where
    /// missing), clamped into their bounds.
    pub fn new(originals: usize, rows: &[Inequality], hint: &[Rational]) -> Tableau {
        let mut t = Tableau {
            originals,
            lower: vec![None; originals],
            upper: vec![None; originals],
            value: vec![Delta::zero(); originals],
            rows: Vec::new(),
            basic: Vec::new(),
            row_of: vec![None; originals],
            slack_keys: Vec::new(),
            immediate: None,
        };
        for (i, row) in rows.iter().enumerate() {
            t.add_row(i, row);
        }
        let n = t.value.len();
        for r in &mut t.rows {
            r.resize(n, Rational::zero());
        }
        for v in 0..originals {
            let guess = Delta::real(hint.get(v).cloned().unwrap_or_else(Rational::zero));
            let start = match (&t.lower[v], &t.upper[v]) {
                (Some(l), _) if l.value > guess => l.value.clone(),
                (_, Some(u)) if u.value < guess => u.value.clone(),
                _ => guess,
            };
            t.value[v] = start;
        }
        for r in 0..t.rows.len() {
            let b = t.basic[r];
            t.value[b] = t.row_value(r);
        }
        t
    }

    fn row_value(&self, r: usize) -> Delta {
        let mut acc = Delta::zero();
        for (j, a) in self.rows[r].iter().enumerate() {
            if !a.is_zero() {
                acc = &acc + &self.value[j].scale(a);
            }
        }
        acc
    }

    fn add_row(&mut self, index: usize, row: &Inequality) {
        if row.coeffs.is_empty() {
            let zero = Rational::zero();
            if !row.rel.holds(&zero, &row.bound) {
                let scale =
                    if row.rel == Rel::Eq && row.bound.is_positive() { -Rational::one() } else { Rational::one() };
                self.immediate.get_or_insert_with(|| vec![(Origin::Row { row: index, scale }, Rational::one())]);
            }
            return;
        }
        let lead = row.coeffs[0].1.clone();
        let var = if row.coeffs.len() == 1 {
            row.coeffs[0].0
        } else {
            let key: Vec<(usize, Rational)> = row.coeffs.iter().map(|(v, a)| (*v, a / &lead)).collect();
            match self.slack_keys.iter().position(|k| *k == key) {
                Some(s) => self.originals + s,
                None => {
                    let var = self.value.len();
                    let mut dense = vec![Rational::zero(); self.originals];
                    for (v, a) in &key {
                        dense[*v] = a.clone();
                    }
                    self.rows.push(dense);
                    self.basic.push(var);
                    self.row_of.push(Some(self.rows.len() - 1));
                    self.lower.push(None);
                    self.upper.push(None);
                    self.value.push(Delta::zero());
                    self.slack_keys.push(key);
                    var
                }
            }
        };
        let limit = &row.bound / &lead;
        let positive = lead.is_positive();
        let strict = row.rel == Rel::Lt;
        let up = Bound {
            value: Delta::new(limit.clone(), if strict { -Rational::one() } else { Rational::zero() }),
            origin: Origin::Row { row: index, scale: Rational::one() / &lead },
        };
        let low = Bound {
            value: Delta::new(limit, if strict { Rational::one() } else { Rational::zero() }),
            origin: Origin::Row { row: index, scale: -Rational::one() / &lead },
        };
        match (row.rel, positive) {
            (Rel::Eq, _) => {
                tighten_upper(&mut self.upper[var], up);
                tighten_lower(&mut self.lower[var], low);
            }
            (_, true) => tighten_upper(&mut self.upper[var], up),
            (_, false) => tighten_lower(&mut self.lower[var], low),
        }
    }

    /// Adds `x ≤ value` (or `x ≥ value`) for an original variable.
    pub fn bound(&mut self, var: usize, value: Delta, upper: bool) {
        let b = Bound { value, origin: Origin::Other };
        if upper {
            tighten_upper(&mut self.upper[var], b);
        } else {
            tighten_lower(&mut self.lower[var], b);
        }
        if self.row_of[var].is_none() {
            let target = match (&self.lower[var], &self.upper[var]) {
                (Some(l), _) if self.value[var] < l.value => Some(l.value.clone()),
                (_, Some(u)) if self.value[var] > u.value => Some(u.value.clone()),
                _ => None,
            };
            if let Some(t) = target {
                self.update(var, t);
            }
        }
    }

    fn update(&mut self, j: usize, v: Delta) {
        let theta = &v - &self.value[j];
        self.value[j] = v;
        for r in 0..self.rows.len() {
            let a = &self.rows[r][j];
            if !a.is_zero() {
                let b = self.basic[r];
                self.value[b] = &self.value[b] + &theta.scale(a);
            }
        }
    }

    fn pivot_and_update(&mut self, r: usize, j: usize, v: Delta) {
        let i = self.basic[r];
        let a = self.rows[r][j].clone();
        let theta = (&v - &self.value[i]).scale(&(Rational::one() / &a));
        self.value[i] = v;
        self.value[j] = &self.value[j] + &theta;
        for r2 in 0..self.rows.len() {
            if r2 != r {
                let c = &self.rows[r2][j];
                if !c.is_zero() {
                    let b = self.basic[r2];
                    self.value[b] = &self.value[b] + &theta.scale(c);
                }
            }
        }
        self.pivot(r, j);
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let i = self.basic[r];
        let a = self.rows[r][j].clone();
        let inv = Rational::one() / &a;
        let mut new_row: Vec<Rational> = self.rows[r].iter().map(|c| -(c * &inv)).collect();
        new_row[j] = Rational::zero();
        new_row[i] = inv;
        for r2 in 0..self.rows.len() {
            if r2 == r {
                continue;
            }
            let c = self.rows[r2][j].clone();
            if c.is_zero() {
                continue;
            }
            let row = &mut self.rows[r2];
            for (k, nk) in new_row.iter().enumerate() {
                if !nk.is_zero() {
                    row[k] += &c * nk;
                }
            }
            row[j] = Rational::zero();
        }
        self.rows[r] = new_row;
        self.basic[r] = j;
        self.row_of[j] = Some(r);
        self.row_of[i] = None;
    }

    /// Runs the simplex until all bounds hold or a conflict is found.
    pub fn check(&mut self) -> Result<(), Explanation> {
        if let Some(e) = &self.immediate {
            return Err(e.clone());
        }
        for v in 0..self.value.len() {
            if let (Some(l), Some(u)) = (&self.lower[v], &self.upper[v]) {
                if l.value > u.value {
                    return Err(vec![(l.origin.clone(), Rational::one()), (u.origin.clone(), Rational::one())]);
                }
            }
        }
        loop {
            let mut pick: Option<(usize, usize, bool)> = None;
            for (r, &b) in self.basic.iter().enumerate() {
                let below = self.lower[b].as_ref().is_some_and(|l| self.value[b] < l.value);
                let above = self.upper[b].as_ref().is_some_and(|u| self.value[b] > u.value);
                if (below || above) && pick.is_none_or(|(_, pb, _)| b < pb) {
                    pick = Some((r, b, below));
                }
            }
            let Some((r, b, below)) = pick else {
                return Ok(());
            };
            let mut entering = None;
            for (j, a) in self.rows[r].iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                let can_rise = self.upper[j].as_ref().is_none_or(|u| self.value[j] < u.value);
                let can_fall = self.lower[j].as_ref().is_none_or(|l| self.value[j] > l.value);
                let ok = if below == a.is_positive() { can_rise } else { can_fall };
                if ok {
                    entering = Some(j);
                    break;
                }
            }
            match entering {
                Some(j) => {
                    let target = if below {
                        self.lower[b].as_ref().map(|l| l.value.clone())
                    } else {
                        self.upper[b].as_ref().map(|u| u.value.clone())
                    };
                    self.pivot_and_update(r, j, target.expect("violated bound exists"));
                }
                None => return Err(self.explain(r, b, below)),
            }
        }
    }

    fn explain(&self, r: usize, b: usize, below: bool) -> Explanation {
        let own = if below { &self.lower[b] } else { &self.upper[b] };
        let mut facts = vec![(own.as_ref().expect("bound").origin.clone(), Rational::one())];
        for (j, a) in self.rows[r].iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let use_upper = below == a.is_positive();
            let bound = if use_upper { &self.upper[j] } else { &self.lower[j] };
            facts.push((bound.as_ref().expect("blocking bound").origin.clone(), a.abs()));
        }
        facts
    }

    pub fn value(&self, var: usize) -> &Delta {
        &self.value[var]
    }

    /// A concrete `δ > 0` small enough that every bound holds numerically.
    pub fn concrete_delta(&self) -> Rational {
        let mut delta = Rational::one();
        for v in 0..self.value.len() {
            if let Some(l) = &self.lower[v] {
                if let Some(d) = max_delta(&l.value, &self.value[v]) {
                    delta = delta.min(d);
                }
            }
            if let Some(u) = &self.upper[v] {
                if let Some(d) = max_delta(&self.value[v], &u.value) {
                    delta = delta.min(d);
                }
            }
        }
        delta
    }

    pub fn witness(&self) -> Vec<Rational> {
        let delta = self.concrete_delta();
        (0..self.originals).map(|v| self.value[v].at(&delta)).collect()
    }
}

fn tighten_upper(slot: &mut Option<Bound>, b: Bound) {
    if slot.as_ref().is_none_or(|cur| b.value < cur.value) {
        *slot = Some(b);
    }
}

fn tighten_lower(slot: &mut Option<Bound>, b: Bound) {
    if slot.as_ref().is_none_or(|cur| b.value > cur.value) {
        *slot = Some(b);
    }
}
