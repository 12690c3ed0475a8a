//! Linear encoding of "repair the constraints by changing only these cells".
//!
//! Each support cell becomes a variable. A ground constraint turns into one
//! row: contributions of rows without support cells fold into the bound,
//! the rest stays symbolic. When a selection condition reads a support cell,
//! whether the tuple is counted is not known in advance. Such a tuple becomes
//! a choice point: for every aggregate it feeds, pick a disjunct of the
//! condition (counted) or of its negation (not counted), each frozen into
//! linear comparisons. `!=` splits into `<` and `>`. Combinations whose
//! single-variable bounds already clash are dropped.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::constraint::{
    desugar_equalities, normalize_condition_dnf, AttrExpr, CmpOp, Comparison, Condition, Conjunct, ConstraintSet,
    Operand,
};
use crate::eval::{compare_values, condition_holds, Program};
use crate::linear::{merge, Inequality, LinearSystem, Rel};
use crate::rational::{ceil, floor, format_rational, Rational};
use crate::relational::{CellRef, Instance, RelId, Support, Value};
use crate::solver::{relaxation_feasible, solve, Outcome, SolveOptions};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("branch explosion: {count} branches exceed the cap of {cap}")]
    BranchCap { count: String, cap: usize },
}

/// `constant + Σ a·x`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinExpr {
    pub constant: Rational,
    pub terms: Vec<(usize, Rational)>,
}

impl LinExpr {
    fn scaled(&self, c: &Rational) -> LinExpr {
        LinExpr { constant: &self.constant * c, terms: self.terms.iter().map(|(v, a)| (*v, a * c)).collect() }
    }

    fn add(&mut self, other: &LinExpr) {
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
    }
}

#[derive(Clone, Debug)]
struct Contribution {
    choice: usize,
    /// Position of the aggregate among the choice point's members.
    member: usize,
    coeff: Rational,
    expr: LinExpr,
}

#[derive(Clone, Debug)]
struct GroundRow {
    label: String,
    fixed: LinExpr,
    pending: Vec<Contribution>,
    bound: Rational,
}

/// One way a choice point can be resolved.
#[derive(Clone, Debug)]
pub struct Alternative {
    /// Per aggregate of the choice point: is the tuple counted? Empty for
    /// choice points outside any aggregate.
    pub counted: Vec<bool>,
    pub rows: Vec<Inequality>,
}

#[derive(Clone, Debug)]
pub struct ChoicePoint {
    pub label: String,
    pub alternatives: Vec<Alternative>,
}

/// Result of the lazy branch search over one support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Search {
    /// Values for the support cells, in support order.
    Feasible(Vec<Rational>),
    Infeasible,
    Indeterminate(String),
}

/// Limits that keep a search at desk scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    /// Leaves of the branch tree (solved or pruned) visited per support.
    pub max_branches: usize,
    pub solve: SolveOptions,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { max_branches: 4096, solve: SolveOptions::default() }
    }
}

/// Grounds a constraint set once and encodes supports on demand.
#[derive(Clone, Debug)]
pub struct Encoder<'a> {
    instance: &'a Instance,
    set: ConstraintSet,
    program: Program,
    dnf: Vec<(Vec<Conjunct>, Vec<Conjunct>)>,
}

impl<'a> Encoder<'a> {
    /// `set` may contain `=` and `>=`; it is desugared to `<=` form.
    pub fn new(instance: &'a Instance, set: &ConstraintSet) -> Self {
        let set = desugar_equalities(set);
        let program = Program::new(instance, &set);
        let dnf = set
            .functions
            .iter()
            .map(|f| {
                (normalize_condition_dnf(&f.condition), normalize_condition_dnf(&Condition::negate(f.condition.clone())))
            })
            .collect();
        Encoder { instance, set, program, dnf }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    /// The desugared constraint set (only `<=` heads).
    pub fn set(&self) -> &ConstraintSet {
        &self.set
    }

    /// Measure cells whose variable can occur in some encoding.
    pub fn relevant_cells(&self) -> Vec<CellRef> {
        self.program.relevant_cells(self.instance, &self.set).into_iter().collect()
    }

    pub fn encode(&self, support: &Support) -> SupportEncoding {
        let cells: Vec<CellRef> = support.iter().copied().collect();
        let mut system = LinearSystem::new();
        let mut var_of = HashMap::new();
        for &c in &cells {
            var_of.insert(c, system.add_cell_var(self.instance, c));
        }
        // Tuples whose membership in some aggregate depends on support
        // cells, in order of first use, with the calls involved.
        let mut tuples: Vec<(RelId, usize, Vec<usize>)> = Vec::new();
        let mut tuple_index: HashMap<(RelId, usize), usize> = HashMap::new();
        let mut member_of: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut grounds = Vec::with_capacity(self.program.grounds.len());
        for (g, ground) in self.program.grounds.iter().enumerate() {
            let mut row = GroundRow {
                label: ground.to_string(),
                fixed: LinExpr::default(),
                pending: Vec::new(),
                bound: ground.bound.clone(),
            };
            for (coeff, call_id) in &self.program.terms[g] {
                let call = &self.program.calls[*call_id];
                let f = &self.set.functions[call.function];
                for cr in &call.rows {
                    let values = &self.instance.rows(f.relation)[cr.row];
                    let lookup = |a: usize| var_of.get(&CellRef::new(f.relation, cr.row, a)).copied();
                    let expr = linearize(&f.body, values, &lookup);
                    let condition_reads_support = cr.dynamic
                        && f.condition.comparisons().iter().any(|c| {
                            [&c.lhs, &c.rhs]
                                .iter()
                                .any(|o| matches!(o, Operand::Attr { index, .. } if lookup(*index).is_some()))
                        });
                    if !condition_reads_support {
                        if condition_holds(&f.condition, values, &call.args) {
                            row.fixed.add(&expr.scaled(coeff));
                        }
                        continue;
                    }
                    let (choice, member) = *member_of.entry((*call_id, cr.row)).or_insert_with(|| {
                        let t = *tuple_index.entry((f.relation, cr.row)).or_insert_with(|| {
                            tuples.push((f.relation, cr.row, Vec::new()));
                            tuples.len() - 1
                        });
                        tuples[t].2.push(*call_id);
                        (t, tuples[t].2.len() - 1)
                    });
                    row.pending.push(Contribution { choice, member, coeff: coeff.clone(), expr });
                }
            }
            grounds.push(row);
        }
        let choices =
            tuples.iter().map(|(rel, row, calls)| self.choice_point(*rel, *row, calls, &var_of, &system)).collect();
        SupportEncoding { cells, base: system, grounds, choices }
    }
}

impl Encoder<'_> {
    /// One choice point per tuple: every consistent combination of
    /// condition disjuncts over the aggregates that tuple feeds.
    fn choice_point(
        &self,
        rel: RelId,
        row: usize,
        calls: &[usize],
        var_of: &HashMap<CellRef, usize>,
        system: &LinearSystem,
    ) -> ChoicePoint {
        let values = &self.instance.rows(rel)[row];
        let lookup = |a: usize| var_of.get(&CellRef::new(rel, row, a)).copied();
        let mut combos: Vec<(Vec<bool>, Vec<Inequality>)> = vec![(Vec::new(), Vec::new())];
        let mut holds = Vec::with_capacity(calls.len());
        for &call_id in calls {
            let call = &self.program.calls[call_id];
            let f = &self.set.functions[call.function];
            holds.push(condition_holds(&f.condition, values, &call.args));
            let (pos, neg) = &self.dnf[call.function];
            let mut options = Vec::new();
            for (counted, disjuncts) in [(true, pos), (false, neg)] {
                for conj in disjuncts {
                    for rows in freeze(conj, values, &call.args, &lookup) {
                        options.push((counted, rows));
                    }
                }
            }
            let mut next = Vec::with_capacity(combos.len() * options.len());
            for (flags, rows) in &combos {
                for (counted, extra) in &options {
                    let mut rows = rows.clone();
                    for r in extra {
                        if !rows.contains(r) {
                            rows.push(r.clone());
                        }
                    }
                    if bounds_consistent(&rows, system) {
                        let mut flags = flags.clone();
                        flags.push(*counted);
                        next.push((flags, rows));
                    }
                }
            }
            combos = next;
        }
        let mut alternatives: Vec<Alternative> =
            combos.into_iter().map(|(counted, rows)| Alternative { counted, rows }).collect();
        // Try what the current data satisfies first.
        alternatives.sort_by_key(|a| a.counted.iter().zip(&holds).filter(|(a, b)| a != b).count());
        let labels: Vec<String> = calls
            .iter()
            .map(|&c| {
                let call = &self.program.calls[c];
                call_label(&self.set.functions[call.function].name, &call.args)
            })
            .collect();
        ChoicePoint {
            label: format!("{}[{row}] in {}", self.instance.schema().rel(rel).name, labels.join(", ")),
            alternatives,
        }
    }
}

/// Cheap emptiness test on the single-variable rows of a conjunction.
fn bounds_consistent(rows: &[Inequality], system: &LinearSystem) -> bool {
    // (value, strict) per variable
    let mut lower: HashMap<usize, (Rational, bool)> = HashMap::new();
    let mut upper: HashMap<usize, (Rational, bool)> = HashMap::new();
    for r in rows {
        let [(v, a)] = r.coeffs.as_slice() else {
            continue;
        };
        let limit = &r.bound / a;
        let strict = r.rel == Rel::Lt;
        let mut set_upper = |b: (Rational, bool)| {
            let e = upper.entry(*v).or_insert_with(|| b.clone());
            if b.0 < e.0 || (b.0 == e.0 && b.1) {
                *e = b;
            }
        };
        if r.rel == Rel::Eq || a.is_positive() {
            set_upper((limit.clone(), strict));
        }
        let mut set_lower = |b: (Rational, bool)| {
            let e = lower.entry(*v).or_insert_with(|| b.clone());
            if b.0 > e.0 || (b.0 == e.0 && b.1) {
                *e = b;
            }
        };
        if r.rel == Rel::Eq || a.is_negative() {
            set_lower((limit, strict));
        }
    }
    lower.iter().all(|(v, (lo, lo_strict))| {
        let Some((hi, hi_strict)) = upper.get(v) else {
            return true;
        };
        if system.is_integer(*v) {
            let lo = if *lo_strict { floor(lo) + 1 } else { ceil(lo) };
            let hi = if *hi_strict { ceil(hi) - 1 } else { floor(hi) };
            lo <= hi
        } else if *lo_strict || *hi_strict {
            lo < hi
        } else {
            lo <= hi
        }
    })
}

fn call_label(name: &str, args: &[Value]) -> String {
    let args: Vec<String> = args.iter().map(Value::literal).collect();
    format!("{name}({})", args.join(", "))
}

fn linearize(expr: &AttrExpr, row: &[Value], var: &dyn Fn(usize) -> Option<usize>) -> LinExpr {
    match expr {
        AttrExpr::Const(q) => LinExpr { constant: q.clone(), terms: Vec::new() },
        AttrExpr::Attr { index, .. } => match var(*index) {
            Some(v) => LinExpr { constant: Rational::zero(), terms: vec![(v, Rational::from_integer(1.into()))] },
            None => LinExpr { constant: row[*index].as_rational().unwrap_or_else(Rational::zero), terms: Vec::new() },
        },
        AttrExpr::Add(a, b) => {
            let mut out = linearize(a, row, var);
            out.add(&linearize(b, row, var));
            out
        }
        AttrExpr::Sub(a, b) => {
            let mut out = linearize(a, row, var);
            out.add(&linearize(b, row, var).scaled(&Rational::from_integer((-1).into())));
            out
        }
        AttrExpr::Scale(c, e) => linearize(e, row, var).scaled(c),
    }
}

enum Side {
    Var(usize),
    Val(Value),
}

/// Turns one DNF conjunct into its `!=`-free linear expansions. Comparisons
/// without support cells are evaluated on the spot; an empty result means
/// the conjunct cannot hold.
fn freeze(
    conj: &[Comparison],
    row: &[Value],
    args: &[Value],
    var: &dyn Fn(usize) -> Option<usize>,
) -> Vec<Vec<Inequality>> {
    let side = |o: &Operand| match o {
        Operand::Attr { index, .. } => match var(*index) {
            Some(v) => Side::Var(v),
            None => Side::Val(row[*index].clone()),
        },
        Operand::Param { index, .. } => Side::Val(args[*index].clone()),
        Operand::Const(v) => Side::Val(v.clone()),
    };
    let mut out: Vec<Vec<Inequality>> = vec![Vec::new()];
    for c in conj {
        let (l, r) = (side(&c.lhs), side(&c.rhs));
        let mut coeffs = Vec::new();
        let mut bound = Rational::zero();
        let one = Rational::from_integer(1.into());
        for (s, sign) in [(&l, one.clone()), (&r, -one.clone())] {
            match s {
                Side::Var(v) => coeffs.push((*v, sign)),
                Side::Val(v) => match v.as_rational() {
                    Some(q) => bound -= q * sign,
                    None => {
                        // A string against a number never compares equal.
                        coeffs.clear();
                        bound = Rational::zero();
                        break;
                    }
                },
            }
        }
        if coeffs.is_empty() {
            let ok = match (&l, &r) {
                (Side::Val(a), Side::Val(b)) => compare_values(a, c.op, b),
                _ => c.op == CmpOp::Ne,
            };
            if !ok {
                return Vec::new();
            }
            continue;
        }
        let coeffs = merge(coeffs);
        let origin = format!("{c}");
        let make = |flip: bool, rel: Rel| {
            let sign = if flip { -Rational::from_integer(1.into()) } else { Rational::from_integer(1.into()) };
            Inequality {
                coeffs: coeffs.iter().map(|(v, a)| (*v, a * &sign)).collect(),
                rel,
                bound: &bound * &sign,
                origin: origin.clone(),
            }
        };
        let options: Vec<Inequality> = match c.op {
            CmpOp::Eq => vec![make(false, Rel::Eq)],
            CmpOp::Le => vec![make(false, Rel::Le)],
            CmpOp::Lt => vec![make(false, Rel::Lt)],
            CmpOp::Ge => vec![make(true, Rel::Le)],
            CmpOp::Gt => vec![make(true, Rel::Lt)],
            CmpOp::Ne => vec![make(false, Rel::Lt), make(true, Rel::Lt)],
        };
        let mut next = Vec::with_capacity(out.len() * options.len());
        for prefix in &out {
            for o in &options {
                let mut rows = prefix.clone();
                rows.push(o.clone());
                next.push(rows);
            }
        }
        out = next;
    }
    out
}

/// The branch family for one support, explored lazily.
#[derive(Clone, Debug)]
pub struct SupportEncoding {
    cells: Vec<CellRef>,
    base: LinearSystem,
    grounds: Vec<GroundRow>,
    choices: Vec<ChoicePoint>,
}

/// All branch systems of a support; their disjunction is the encoding.
#[derive(Clone, Debug)]
pub struct BranchSet {
    pub systems: Vec<LinearSystem>,
}

impl SupportEncoding {
    pub fn cells(&self) -> &[CellRef] {
        &self.cells
    }

    pub fn choices(&self) -> &[ChoicePoint] {
        &self.choices
    }

    /// Adds a choice point not tied to any aggregate (used for query
    /// falsification). An empty alternative list makes the encoding infeasible.
    pub fn add_choice(&mut self, label: impl Into<String>, alternatives: Vec<Vec<Inequality>>) {
        self.choices.push(ChoicePoint {
            label: label.into(),
            alternatives: alternatives.into_iter().map(|rows| Alternative { counted: Vec::new(), rows }).collect(),
        });
    }

    pub fn var_of(&self, cell: CellRef) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    /// Number of complete branches (product of alternative counts), as text
    /// since it can be astronomically large.
    pub fn branch_count(&self) -> num_bigint::BigUint {
        self.choices.iter().fold(num_bigint::BigUint::from(1u32), |acc, c| acc * c.alternatives.len())
    }

    /// `K′` of a ground row under a membership pattern: the bound minus the
    /// constant part of everything counted.
    pub fn adjusted_constant(&self, ground: usize, pattern: &[usize]) -> Rational {
        let row = &self.grounds[ground];
        let mut k = &row.bound - &row.fixed.constant;
        for p in &row.pending {
            if self.choices[p.choice].alternatives[pattern[p.choice]].counted[p.member] {
                k -= &p.coeff * &p.expr.constant;
            }
        }
        k
    }

    pub fn ground_labels(&self) -> Vec<&str> {
        self.grounds.iter().map(|g| g.label.as_str()).collect()
    }

    /// The system for a (possibly partial) pattern. With undecided choice
    /// points this is a relaxation: constant undecided contributions count
    /// as `min(0, c)`, and rows with undecided symbolic contributions are
    /// left out.
    pub fn system(&self, pattern: &[usize]) -> LinearSystem {
        self.relaxed_system(pattern, None)
    }

    /// Like [`SupportEncoding::system`]; inside a value box an undecided
    /// symbolic contribution counts as `min(0, its least value in the box)`
    /// instead of dropping the row.
    fn relaxed_system(&self, pattern: &[usize], value_box: Option<&(Rational, Rational)>) -> LinearSystem {
        let mut system = self.base.clone();
        'rows: for row in &self.grounds {
            let mut expr = row.fixed.clone();
            for p in &row.pending {
                match pattern.get(p.choice) {
                    Some(&alt) => {
                        if self.choices[p.choice].alternatives[alt].counted[p.member] {
                            expr.add(&p.expr.scaled(&p.coeff));
                        }
                    }
                    None if p.expr.terms.is_empty() => {
                        let c = &p.coeff * &p.expr.constant;
                        if c.is_negative() {
                            expr.constant += c;
                        }
                    }
                    None => match value_box {
                        Some((lo, hi)) => {
                            let scaled = p.expr.scaled(&p.coeff);
                            let least = scaled.terms.iter().fold(scaled.constant.clone(), |acc, (_, a)| {
                                acc + if a.is_positive() { a * lo } else { a * hi }
                            });
                            if least.is_negative() {
                                expr.constant += least;
                            }
                        }
                        None => continue 'rows,
                    },
                }
            }
            system.add_row(expr.terms, Rel::Le, &row.bound - &expr.constant, row.label.clone());
        }
        for (choice, &alt) in self.choices.iter().zip(pattern) {
            for r in &choice.alternatives[alt].rows {
                let mut r = r.clone();
                r.origin = format!("{}: {}", choice.label, r.origin);
                system.rows.push(r);
            }
        }
        system
    }

    /// Every complete branch system, or an error past `cap` branches.
    pub fn materialize(&self, cap: usize) -> Result<BranchSet, EncodeError> {
        let count = self.branch_count();
        if count > num_bigint::BigUint::from(cap) {
            return Err(EncodeError::BranchCap { count: count.to_string(), cap });
        }
        let mut systems = Vec::new();
        let mut pattern = vec![0usize; self.choices.len()];
        loop {
            systems.push(self.system(&pattern));
            let mut i = 0;
            loop {
                if i == pattern.len() {
                    return Ok(BranchSet { systems });
                }
                pattern[i] += 1;
                if pattern[i] < self.choices[i].alternatives.len() {
                    break;
                }
                pattern[i] = 0;
                i += 1;
            }
        }
    }

    /// Depth-first search over choice points with relaxation pruning.
    pub fn search(&self, limits: &SearchLimits) -> Search {
        let mut state = SearchState { visited: 0, exhausted: None };
        let mut pattern = Vec::with_capacity(self.choices.len());
        match self.dfs(&mut pattern, &mut state, limits) {
            Ok(Some(values)) => Search::Feasible(values),
            Ok(None) => match state.exhausted {
                Some(reason) => Search::Indeterminate(reason),
                None => Search::Infeasible,
            },
            Err(()) => Search::Indeterminate(format!("branch cap of {} exceeded", limits.max_branches)),
        }
    }

    fn dfs(
        &self,
        pattern: &mut Vec<usize>,
        state: &mut SearchState,
        limits: &SearchLimits,
    ) -> Result<Option<Vec<Rational>>, ()> {
        let system = self.relaxed_system(pattern, limits.solve.value_box.as_ref());
        if pattern.len() == self.choices.len() {
            state.leaf(limits)?;
            return Ok(match solve(&system, &limits.solve) {
                Outcome::Feasible(values) => Some(values),
                Outcome::Infeasible(_) => None,
                Outcome::BoundExhausted { bound } => {
                    state
                        .exhausted
                        .get_or_insert_with(|| format!("integer search bound {} exhausted", format_rational(&bound)));
                    None
                }
            });
        }
        if !relaxation_feasible(&system, &limits.solve) {
            state.leaf(limits)?;
            return Ok(None);
        }
        for alt in 0..self.choices[pattern.len()].alternatives.len() {
            pattern.push(alt);
            let found = self.dfs(pattern, state, limits)?;
            pattern.pop();
            if found.is_some() {
                return Ok(found);
            }
        }
        Ok(None)
    }
}

struct SearchState {
    visited: usize,
    exhausted: Option<String>,
}

impl SearchState {
    fn leaf(&mut self, limits: &SearchLimits) -> Result<(), ()> {
        self.visited += 1;
        if self.visited > limits.max_branches {
            Err(())
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for SupportEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variables: {}", self.base.vars.iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(", "))?;
        for c in &self.choices {
            writeln!(f, "choice {} ({} alternatives)", c.label, c.alternatives.len())?;
        }
        write!(f, "{}", self.system(&[]))
    }
}

/// Encodes a support of `instance` against `set` into its full branch family.
pub fn encode_support(
    instance: &Instance,
    set: &ConstraintSet,
    support: &Support,
    cap: usize,
) -> Result<BranchSet, EncodeError> {
    Encoder::new(instance, set).encode(support).materialize(cap)
}

/// `K′` for one ground constraint of the desugared set under a membership
/// pattern; see [`SupportEncoding::adjusted_constant`].
pub fn adjusted_constant(
    instance: &Instance,
    set: &ConstraintSet,
    support: &Support,
    ground: usize,
    pattern: &[usize],
) -> Rational {
    Encoder::new(instance, set).encode(support).adjusted_constant(ground, pattern)
}

/// Support cells that actually change in a solution, with their new values.
pub(crate) fn changed_cells(
    instance: &Instance,
    cells: &[CellRef],
    values: &[Rational],
) -> BTreeMap<CellRef, Rational> {
    cells
        .iter()
        .zip(values)
        .filter(|(c, v)| instance.value(**c).and_then(Value::as_rational).as_ref() != Some(*v))
        .map(|(c, v)| (*c, v.clone()))
        .collect()
}
