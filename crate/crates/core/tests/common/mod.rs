//! Seeded random repair instances and an exhaustive oracle over them.
//!
//! The oracle evaluates the constraints straight from the generator's own
//! description in `i64`, without going through the constraint language.

#![allow(dead_code)]

use std::collections::BTreeMap;

use numrepair::constraint::{parse_constraints, ConstraintSet};
use numrepair::rational::int;
use numrepair::relational::{load_instance, CellRef, Instance, RelId, Support};
use numrepair::repair::Limits;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BOX: i64 = 5;

#[derive(Clone, Copy, Debug)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn holds(self, lhs: i64, k: i64) -> bool {
        match self {
            Cmp::Le => lhs <= k,
            Cmp::Ge => lhs >= k,
            Cmp::Eq => lhs == k,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

/// `a*first + b*second cmp k` in one of three shapes.
#[derive(Clone, Copy, Debug)]
pub enum Shape {
    /// grouped by K: `R(x,_,_) -> a*byg(x) + b*byk(x)`
    Groups,
    /// global: `-> a*total() + b*off()`
    Global,
    /// grouped by G with measure conditions: `R(_,x,_) -> a*above(x) + b*nz(x)`
    Conditional,
}

#[derive(Clone, Debug)]
pub struct RandomConstraint {
    pub shape: Shape,
    pub a: i64,
    pub b: i64,
    pub cmp: Cmp,
    pub k: i64,
}

/// Rows `(K, G, V)` of `R(K: int, G: int, V: int measure)`.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub rows: Vec<(i64, i64, i64)>,
    /// Threshold of `above`.
    pub t: i64,
    /// Excluded value of `off`.
    pub u: i64,
    pub constraints: Vec<RandomConstraint>,
}

fn coeff(rng: &mut ChaCha8Rng) -> i64 {
    loop {
        let c = rng.random_range(-3..=3);
        if c != 0 {
            return c;
        }
    }
}

impl RandomInstance {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=6);
        let rows =
            (0..n).map(|_| (rng.random_range(0..3), rng.random_range(0..3), rng.random_range(-BOX..=BOX))).collect();
        let m = rng.random_range(1..=3);
        let constraints = (0..m)
            .map(|_| RandomConstraint {
                shape: match rng.random_range(0..3) {
                    0 => Shape::Groups,
                    1 => Shape::Global,
                    _ => Shape::Conditional,
                },
                a: coeff(&mut rng),
                b: if rng.random_bool(0.5) { coeff(&mut rng) } else { 0 },
                cmp: match rng.random_range(0..3) {
                    0 => Cmp::Le,
                    1 => Cmp::Ge,
                    _ => Cmp::Eq,
                },
                k: rng.random_range(-BOX..=BOX),
            })
            .collect();
        RandomInstance { rows, t: rng.random_range(-2..=2), u: rng.random_range(-2..=2), constraints }
    }

    pub fn cells(&self) -> usize {
        self.rows.len()
    }

    pub fn cell(&self, i: usize) -> CellRef {
        CellRef::new(RelId(0), i, 2)
    }

    pub fn dsl(&self) -> String {
        let mut out = format!(
            "function byg(X) on R: sum(V) where G = X\n\
             function byk(X) on R: sum(V) where K = X\n\
             function total() on R: sum(V)\n\
             function above(X) on R: sum(V) where G = X and V > {}\n\
             function off() on R: sum(1) where V != {}\n\
             function nz(X) on R: sum(V + 1) where K = X and not (V = 0 or V = 1)\n",
            self.t, self.u
        );
        for c in &self.constraints {
            let (body, f, g) = match c.shape {
                Shape::Groups => ("R(x, _, _) ", "byg(x)", "byk(x)"),
                Shape::Global => ("", "total()", "off()"),
                Shape::Conditional => ("R(_, x, _) ", "above(x)", "nz(x)"),
            };
            let mut head = format!("{}*{f}", c.a);
            if c.b != 0 {
                head.push_str(&format!(" {} {}*{g}", if c.b < 0 { "-" } else { "+" }, c.b.abs()));
            }
            out.push_str(&format!("{body}-> {head} {} {}\n", c.cmp.symbol(), c.k));
        }
        out
    }

    pub fn load(&self) -> (Instance, ConstraintSet) {
        let mut csv = String::from("K,G,V\n");
        for (k, g, v) in &self.rows {
            csv.push_str(&format!("{k},{g},{v}\n"));
        }
        let inst =
            load_instance("relation R(K: int, G: int, V: int measure)", &BTreeMap::from([("R".to_string(), csv)]))
                .unwrap();
        let set = parse_constraints(&self.dsl(), inst.schema()).unwrap_or_else(|e| panic!("{e}\n{}", self.dsl()));
        (inst, set)
    }

    /// Do the constraints hold when the measure column reads `values`?
    pub fn satisfied(&self, values: &[i64]) -> bool {
        let rows = &self.rows;
        let sum = |pred: &dyn Fn(usize) -> bool, body: &dyn Fn(i64) -> i64| -> i64 {
            (0..rows.len()).filter(|&i| pred(i)).map(|i| body(values[i])).sum()
        };
        self.constraints.iter().all(|c| {
            let groups: Vec<Option<i64>> = match c.shape {
                Shape::Global => vec![None],
                Shape::Groups => distinct(rows.iter().map(|r| r.0)),
                Shape::Conditional => distinct(rows.iter().map(|r| r.1)),
            };
            groups.into_iter().all(|x| {
                let (f, g) = match (c.shape, x) {
                    (Shape::Groups, Some(x)) => (sum(&|i| rows[i].1 == x, &|v| v), sum(&|i| rows[i].0 == x, &|v| v)),
                    (Shape::Global, _) => (sum(&|_| true, &|v| v), sum(&|i| values[i] != self.u, &|_| 1)),
                    (Shape::Conditional, Some(x)) => (
                        sum(&|i| rows[i].1 == x && values[i] > self.t, &|v| v),
                        sum(&|i| rows[i].0 == x && !(values[i] == 0 || values[i] == 1), &|v| v + 1),
                    ),
                    _ => unreachable!(),
                };
                c.cmp.holds(c.a * f + c.b * g, c.k)
            })
        })
    }

    pub fn original(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.2).collect()
    }

    /// Feasibility of every support (bit mask over cells) with support
    /// values in `[-BOX, BOX]`.
    pub fn feasible_masks(&self) -> Vec<bool> {
        let n = self.cells();
        let mut feasible = vec![false; 1 << n];
        let mut masks: Vec<usize> = (0..1 << n).collect();
        masks.sort_by_key(|m| m.count_ones());
        for mask in masks {
            // A solution over a subset is also one over the mask.
            if (0..n).any(|i| mask >> i & 1 == 1 && feasible[mask & !(1 << i)]) {
                feasible[mask] = true;
                continue;
            }
            let cells: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let mut values = self.original();
            feasible[mask] = search(self, &cells, 0, &mut values);
        }
        feasible
    }

    fn support(&self, mask: usize) -> Support {
        (0..self.cells()).filter(|i| mask >> i & 1 == 1).map(|i| self.cell(i)).collect()
    }

    /// Set-minimal and card-minimal support families by brute force.
    pub fn oracle_families(&self) -> (Vec<Support>, Vec<Support>) {
        let feasible = self.feasible_masks();
        let n = self.cells();
        let set: Vec<usize> = (0..1usize << n)
            .filter(|&m| feasible[m] && (0..n).all(|i| m >> i & 1 == 0 || !feasible[m & !(1 << i)]))
            .collect();
        let kstar = set.iter().map(|m| m.count_ones()).min();
        let card: Vec<usize> = set.iter().copied().filter(|m| Some(m.count_ones()) == kstar).collect();
        let mut set: Vec<Support> = set.into_iter().map(|m| self.support(m)).collect();
        let mut card: Vec<Support> = card.into_iter().map(|m| self.support(m)).collect();
        set.sort();
        card.sort();
        (set, card)
    }

    /// Engine limits matching the oracle's search box.
    pub fn limits(&self) -> Limits {
        let mut limits = Limits { max_support: self.cells(), ..Limits::default() };
        limits.search.solve.value_box = Some((int(-BOX), int(BOX)));
        limits
    }
}

fn distinct(it: impl Iterator<Item = i64>) -> Vec<Option<i64>> {
    let mut v: Vec<i64> = it.collect();
    v.sort_unstable();
    v.dedup();
    v.into_iter().map(Some).collect()
}

fn search(inst: &RandomInstance, cells: &[usize], at: usize, values: &mut Vec<i64>) -> bool {
    if at == cells.len() {
        return inst.satisfied(values);
    }
    for v in -BOX..=BOX {
        values[cells[at]] = v;
        if search(inst, cells, at + 1, values) {
            return true;
        }
    }
    false
}
