//! Grounding of constraint bodies, aggregation and violation checking.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;

use crate::constraint::{
    AggregateConstraint, AggregationFunction, Arg, AtomTerm, AttrExpr, CmpOp, Comparator, Comparison, Condition,
    ConstraintSet, Operand,
};
use crate::rational::{format_rational, Rational};
use crate::relational::{CellRef, Instance, RelId, Value};

/// One `c · χ(args)` summand with all arguments bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTerm {
    pub coeff: Rational,
    pub function: usize,
    pub args: Vec<Value>,
}

/// A constraint instantiated by one substitution of its body variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundConstraint {
    pub constraint: String,
    /// Bindings of the variables used in aggregate arguments.
    pub theta: BTreeMap<String, Value>,
    pub terms: Vec<GroundTerm>,
    pub cmp: Comparator,
    pub bound: Rational,
}

impl GroundConstraint {
    pub fn theta_json(&self) -> serde_json::Value {
        serde_json::Value::Object(self.theta.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
    }
}

impl fmt::Display for GroundConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.constraint)?;
        if !self.theta.is_empty() {
            let parts: Vec<String> = self.theta.iter().map(|(k, v)| format!("{k}={}", v.literal())).collect();
            write!(f, "[{}]", parts.join(", "))?;
        }
        Ok(())
    }
}

pub(crate) fn numeric_value(q: &Rational) -> Value {
    if q.is_integer() {
        Value::Int(q.to_integer())
    } else {
        Value::Real(q.clone())
    }
}

pub(crate) fn compare_values(a: &Value, op: CmpOp, b: &Value) -> bool {
    match a.compare(b) {
        Some(ord) => op.holds(ord),
        None => op == CmpOp::Ne,
    }
}

fn operand<'a>(op: &'a Operand, row: &'a [Value], args: &'a [Value]) -> &'a Value {
    match op {
        Operand::Attr { index, .. } => &row[*index],
        Operand::Param { index, .. } => &args[*index],
        Operand::Const(v) => v,
    }
}

pub(crate) fn comparison_holds(c: &Comparison, row: &[Value], args: &[Value]) -> bool {
    compare_values(operand(&c.lhs, row, args), c.op, operand(&c.rhs, row, args))
}

/// Evaluates a selection condition on a row with the function's arguments bound.
pub fn condition_holds(cond: &Condition, row: &[Value], args: &[Value]) -> bool {
    match cond {
        Condition::True => true,
        Condition::Cmp(c) => comparison_holds(c, row, args),
        Condition::And(a, b) => condition_holds(a, row, args) && condition_holds(b, row, args),
        Condition::Or(a, b) => condition_holds(a, row, args) || condition_holds(b, row, args),
        Condition::Not(a) => !condition_holds(a, row, args),
    }
}

/// Three-valued evaluation where comparisons touching a measure attribute are unknown.
fn condition_static(cond: &Condition, row: &[Value], args: &[Value], measure: &[bool]) -> Option<bool> {
    match cond {
        Condition::True => Some(true),
        Condition::Cmp(c) => {
            let touches = [&c.lhs, &c.rhs].iter().any(|o| matches!(o, Operand::Attr { index, .. } if measure[*index]));
            if touches {
                None
            } else {
                Some(comparison_holds(c, row, args))
            }
        }
        Condition::And(a, b) => {
            match (condition_static(a, row, args, measure), condition_static(b, row, args, measure)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            }
        }
        Condition::Or(a, b) => match (condition_static(a, row, args, measure), condition_static(b, row, args, measure))
        {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        Condition::Not(a) => condition_static(a, row, args, measure).map(|v| !v),
    }
}

/// Evaluates an attribute expression on a row.
pub fn expr_value(expr: &AttrExpr, row: &[Value]) -> Rational {
    match expr {
        AttrExpr::Const(q) => q.clone(),
        AttrExpr::Attr { index, .. } => row[*index].as_rational().unwrap_or_else(Rational::zero),
        AttrExpr::Add(a, b) => expr_value(a, row) + expr_value(b, row),
        AttrExpr::Sub(a, b) => expr_value(a, row) - expr_value(b, row),
        AttrExpr::Scale(c, e) => c * expr_value(e, row),
    }
}

/// `SELECT sum(e) FROM R WHERE α(args)`; the empty sum is zero.
pub fn eval_aggregation(instance: &Instance, function: &AggregationFunction, args: &[Value]) -> Rational {
    instance
        .rows(function.relation)
        .iter()
        .filter(|row| condition_holds(&function.condition, row, args))
        .fold(Rational::zero(), |acc, row| acc + expr_value(&function.body, row))
}

fn atom_matches(terms: &[AtomTerm], row: &[Value], binding: &mut Vec<(String, Value)>) -> bool {
    let mark = binding.len();
    for (term, value) in terms.iter().zip(row) {
        let ok = match term {
            AtomTerm::Wildcard => true,
            AtomTerm::Const(c) => c.same(value),
            AtomTerm::Var(v) => match binding.iter().find(|(name, _)| name == v) {
                Some((_, bound)) => bound.same(value),
                None => {
                    binding.push((v.clone(), value.clone()));
                    true
                }
            },
        };
        if !ok {
            binding.truncate(mark);
            return false;
        }
    }
    true
}

fn join(
    instance: &Instance,
    constraint: &AggregateConstraint,
    depth: usize,
    binding: &mut Vec<(String, Value)>,
    used: &BTreeSet<&str>,
    out: &mut BTreeSet<BTreeMap<String, Value>>,
) {
    let Some(atom) = constraint.body.get(depth) else {
        let theta = binding.iter().filter(|(name, _)| used.contains(name.as_str())).cloned().collect();
        out.insert(theta);
        return;
    };
    for row in instance.rows(atom.relation) {
        let mark = binding.len();
        if atom_matches(&atom.terms, row, binding) {
            join(instance, constraint, depth + 1, binding, used, out);
        }
        binding.truncate(mark);
    }
}

/// One ground constraint per distinct substitution of the aggregate-argument
/// variables that satisfies the body, ordered by substitution.
pub fn ground_constraint(instance: &Instance, constraint: &AggregateConstraint) -> Vec<GroundConstraint> {
    let used: BTreeSet<&str> = constraint
        .terms
        .iter()
        .flat_map(|t| t.args.iter())
        .filter_map(|a| match a {
            Arg::Var(v) => Some(v.as_str()),
            Arg::Const(_) => None,
        })
        .collect();
    let mut thetas = BTreeSet::new();
    join(instance, constraint, 0, &mut Vec::new(), &used, &mut thetas);
    thetas
        .into_iter()
        .map(|theta| {
            let terms = constraint
                .terms
                .iter()
                .map(|t| GroundTerm {
                    coeff: t.coeff.clone(),
                    function: t.function,
                    args: t
                        .args
                        .iter()
                        .map(|a| match a {
                            Arg::Var(v) => theta[v].clone(),
                            Arg::Const(c) => c.clone(),
                        })
                        .collect(),
                })
                .collect();
            GroundConstraint {
                constraint: constraint.name.clone(),
                theta,
                terms,
                cmp: constraint.cmp,
                bound: constraint.bound.clone(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub ground: GroundConstraint,
    pub lhs: Rational,
}

impl Violation {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "constraint": self.ground.constraint,
            "theta": self.ground.theta_json(),
            "lhs": format_rational(&self.lhs),
            "cmp": self.ground.cmp.symbol(),
            "k": format_rational(&self.ground.bound),
        })
    }
}

/// Violated ground constraints, ordered by constraint name and substitution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    pub ground_constraints: usize,
}

impl ViolationReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "consistent": self.is_consistent(),
            "ground_constraints": self.ground_constraints,
            "violations": self.violations.iter().map(Violation::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Decides `D ⊨ AC` and lists every violated ground constraint.
pub fn check(instance: &Instance, set: &ConstraintSet) -> ViolationReport {
    let mut report = ViolationReport::default();
    for constraint in &set.constraints {
        for ground in ground_constraint(instance, constraint) {
            report.ground_constraints += 1;
            let lhs = ground.terms.iter().fold(Rational::zero(), |acc, t| {
                acc + &t.coeff * eval_aggregation(instance, &set.functions[t.function], &t.args)
            });
            if !ground.cmp.holds(&lhs, &ground.bound) {
                report.violations.push(Violation { ground, lhs });
            }
        }
    }
    report
        .violations
        .sort_by(|a, b| (&a.ground.constraint, &a.ground.theta).cmp(&(&b.ground.constraint, &b.ground.theta)));
    report
}

/// A row that may contribute to a ground aggregate call.
#[derive(Clone, Debug)]
pub(crate) struct CallRow {
    pub row: usize,
    /// Membership depends on measure values of the row.
    pub dynamic: bool,
}

/// A distinct `χ(args)` occurring in some ground constraint.
#[derive(Clone, Debug)]
pub(crate) struct Call {
    pub function: usize,
    pub args: Vec<Value>,
    pub rows: Vec<CallRow>,
}

/// Constraints grounded once, with aggregate calls shared between them and
/// rows that can never be selected filtered out.
#[derive(Clone, Debug)]
pub(crate) struct Program {
    pub grounds: Vec<GroundConstraint>,
    pub calls: Vec<Call>,
    /// Per ground constraint: `(coefficient, call)` with repeated calls merged.
    pub terms: Vec<Vec<(Rational, usize)>>,
}

impl Program {
    pub fn new(instance: &Instance, set: &ConstraintSet) -> Program {
        let mut grounds = Vec::new();
        for c in &set.constraints {
            grounds.extend(ground_constraint(instance, c));
        }
        let mut index: HashMap<(usize, Vec<Value>), usize> = HashMap::new();
        let mut calls = Vec::new();
        let mut terms = Vec::with_capacity(grounds.len());
        for g in &grounds {
            let mut merged: Vec<(Rational, usize)> = Vec::new();
            for t in &g.terms {
                let key = (t.function, t.args.clone());
                let id = *index.entry(key).or_insert_with(|| {
                    calls.push(build_call(instance, &set.functions[t.function], t.function, &t.args));
                    calls.len() - 1
                });
                match merged.iter_mut().find(|(_, c)| *c == id) {
                    Some((coeff, _)) => *coeff += &t.coeff,
                    None => merged.push((t.coeff.clone(), id)),
                }
            }
            merged.retain(|(c, _)| !c.is_zero());
            terms.push(merged);
        }
        Program { grounds, calls, terms }
    }

    /// Measure cells whose value can influence some ground constraint.
    pub fn relevant_cells(&self, instance: &Instance, set: &ConstraintSet) -> BTreeSet<CellRef> {
        let mut out = BTreeSet::new();
        for call in &self.calls {
            let f = &set.functions[call.function];
            let rel = instance.schema().rel(f.relation);
            let mut attrs = Vec::new();
            f.body.attributes(&mut attrs);
            let mut cond_attrs = Vec::new();
            for c in f.condition.comparisons() {
                for o in [&c.lhs, &c.rhs] {
                    if let Operand::Attr { index, .. } = o {
                        cond_attrs.push(*index);
                    }
                }
            }
            for r in &call.rows {
                let touched = attrs.iter().chain(if r.dynamic { cond_attrs.iter() } else { [].iter() });
                for &a in touched {
                    if rel.attributes[a].measure {
                        out.insert(CellRef::new(f.relation, r.row, a));
                    }
                }
            }
        }
        out
    }
}

fn build_call(instance: &Instance, f: &AggregationFunction, function: usize, args: &[Value]) -> Call {
    let rel = instance.schema().rel(f.relation);
    let measure: Vec<bool> = rel.attributes.iter().map(|a| a.measure).collect();
    let rows = instance
        .rows(f.relation)
        .iter()
        .enumerate()
        .filter_map(|(r, row)| match condition_static(&f.condition, row, args, &measure) {
            Some(false) => None,
            Some(true) => Some(CallRow { row: r, dynamic: false }),
            None => Some(CallRow { row: r, dynamic: true }),
        })
        .collect();
    Call { function, args: args.to_vec(), rows }
}

/// A compiled consistency check that grounds once and then evaluates the
/// constraints under hypothetical cell values.
#[derive(Clone, Debug)]
pub struct Checker<'a> {
    instance: &'a Instance,
    set: &'a ConstraintSet,
    program: Program,
}

impl<'a> Checker<'a> {
    pub fn new(instance: &'a Instance, set: &'a ConstraintSet) -> Self {
        Checker { instance, set, program: Program::new(instance, set) }
    }

    pub fn ground_constraints(&self) -> &[GroundConstraint] {
        &self.program.grounds
    }

    fn row_with(&self, rel: RelId, row: usize, overrides: &HashMap<CellRef, Rational>) -> Cow<'a, [Value]> {
        let base: &'a [Value] = &self.instance.rows(rel)[row];
        if overrides.is_empty() {
            return Cow::Borrowed(base);
        }
        let mut owned: Option<Vec<Value>> = None;
        for a in 0..base.len() {
            if let Some(q) = overrides.get(&CellRef::new(rel, row, a)) {
                owned.get_or_insert_with(|| base.to_vec())[a] = numeric_value(q);
            }
        }
        match owned {
            Some(v) => Cow::Owned(v),
            None => Cow::Borrowed(base),
        }
    }

    fn call_value(&self, call: &Call, overrides: &HashMap<CellRef, Rational>) -> Rational {
        let f = &self.set.functions[call.function];
        let mut sum = Rational::zero();
        for r in &call.rows {
            let row = self.row_with(f.relation, r.row, overrides);
            if !r.dynamic || condition_holds(&f.condition, &row, &call.args) {
                sum += expr_value(&f.body, &row);
            }
        }
        sum
    }

    /// Left-hand sides of all ground constraints under the given cell values.
    pub fn lhs_values(&self, overrides: &HashMap<CellRef, Rational>) -> Vec<Rational> {
        let values: Vec<Rational> = self.program.calls.iter().map(|c| self.call_value(c, overrides)).collect();
        self.program
            .terms
            .iter()
            .map(|terms| terms.iter().fold(Rational::zero(), |acc, (c, id)| acc + c * &values[*id]))
            .collect()
    }

    pub fn violations_with(&self, overrides: &HashMap<CellRef, Rational>) -> Vec<Violation> {
        self.lhs_values(overrides)
            .into_iter()
            .zip(&self.program.grounds)
            .filter(|(lhs, g)| !g.cmp.holds(lhs, &g.bound))
            .map(|(lhs, g)| Violation { ground: g.clone(), lhs })
            .collect()
    }

    pub fn satisfied_with(&self, overrides: &HashMap<CellRef, Rational>) -> bool {
        self.lhs_values(overrides).iter().zip(&self.program.grounds).all(|(lhs, g)| g.cmp.holds(lhs, &g.bound))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::parse_constraints;
    use crate::rational::int;
    use crate::relational::load_instance;
    use proptest::prelude::*;

    const SCHEMA: &str = include_str!("../fixtures/cash_budget/schema.txt");
    const DATA: &str = include_str!("../fixtures/cash_budget/CashBudget.csv");
    const CONSTRAINTS: &str = include_str!("../fixtures/cash_budget/constraints.txt");

    fn fixture() -> (Instance, ConstraintSet) {
        let inst = load_instance(SCHEMA, &BTreeMap::from([("CashBudget".into(), DATA.into())])).unwrap();
        let set = parse_constraints(CONSTRAINTS, inst.schema()).unwrap();
        (inst, set)
    }

    #[test]
    fn aggregation_values_from_table() {
        let (inst, set) = fixture();
        let (_, chi1) = set.function("chi1").unwrap();
        let (_, chi2) = set.function("chi2").unwrap();
        let args = |a: &str, y: i64, t: &str| vec![Value::str(a), Value::int(y), Value::str(t)];
        assert_eq!(eval_aggregation(&inst, chi1, &args("Receipts", 2003, "det")), int(220));
        assert_eq!(eval_aggregation(&inst, chi1, &args("Disbursements", 2003, "aggr")), int(160));
        assert_eq!(eval_aggregation(&inst, chi2, &[Value::int(2004), Value::str("net cash inflow")]), int(10));
        assert_eq!(eval_aggregation(&inst, chi1, &args("Receipts", 1999, "det")), int(0));
    }

    #[test]
    fn grounding_counts() {
        let (inst, set) = fixture();
        let g1 = ground_constraint(&inst, &set.constraints[0]);
        assert_eq!(g1.len(), 6);
        let pairs: BTreeSet<(Value, Value)> = g1.iter().map(|g| (g.theta["x"].clone(), g.theta["y"].clone())).collect();
        for s in ["Receipts", "Disbursements", "Balance"] {
            for y in [2003, 2004] {
                assert!(pairs.contains(&(Value::str(s), Value::int(y))));
            }
        }
        assert_eq!(ground_constraint(&inst, &set.constraints[1]).len(), 2);
        let empty = inst.with_tables(vec![Vec::new()]);
        assert!(ground_constraint(&empty, &set.constraints[0]).is_empty());
    }

    #[test]
    fn fixture_has_two_violations_in_2003() {
        let (inst, set) = fixture();
        let report = check(&inst, &set);
        assert_eq!(report.ground_constraints, 10);
        assert_eq!(report.violations.len(), 2);
        let v1 = &report.violations[0];
        assert_eq!(v1.ground.constraint, "c1");
        assert_eq!(v1.ground.theta["x"], Value::str("Receipts"));
        assert_eq!(v1.ground.theta["y"], Value::int(2003));
        assert_eq!(v1.lhs, int(220 - 250));
        let v2 = &report.violations[1];
        assert_eq!(v2.ground.constraint, "c2");
        assert_eq!(v2.ground.theta["x"], Value::int(2003));
        assert_eq!(v2.lhs, int(60 - 250 + 160));
        let json = v2.to_json();
        assert_eq!(json["lhs"], "-30");
        assert_eq!(json["cmp"], "=");
        assert_eq!(json["k"], "0");
    }

    #[test]
    fn year_2004_alone_is_consistent() {
        let (inst, set) = fixture();
        let rows: Vec<Vec<Value>> = inst.rows(RelId(0))[10..].to_vec();
        let only_2004 = inst.with_tables(vec![rows]);
        assert!(check(&only_2004, &set).is_consistent());
    }

    #[test]
    fn repaired_fixture_is_consistent() {
        let (inst, set) = fixture();
        let mut tables = inst.tables().to_vec();
        tables[0][3][4] = Value::int(220);
        assert!(check(&inst.with_tables(tables), &set).is_consistent());
        let checker = Checker::new(&inst, &set);
        let cell = CellRef::new(RelId(0), 3, 4);
        assert!(checker.satisfied_with(&HashMap::from([(cell, int(220))])));
        assert!(!checker.satisfied_with(&HashMap::new()));
        assert_eq!(checker.violations_with(&HashMap::new()).len(), 2);
    }

    #[test]
    fn desugared_set_checks_identically() {
        let (inst, set) = fixture();
        let plain = check(&inst, &set).is_consistent();
        let desugared = check(&inst, &crate::constraint::desugar_equalities(&set)).is_consistent();
        assert_eq!(plain, desugared);
    }

    #[test]
    fn relevant_cells_skip_unreferenced_rows() {
        let schema = "relation R(K: string, V: int measure)";
        let inst = load_instance(schema, &BTreeMap::from([("R".into(), "K,V\na,1\nb,2\n".into())])).unwrap();
        let set = parse_constraints("function f() on R: sum(V) where K = 'a'\n-> f() <= 0", inst.schema()).unwrap();
        let program = Program::new(&inst, &set);
        let cells = program.relevant_cells(&inst, &set);
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![CellRef::new(RelId(0), 0, 1)]);
    }

    fn small_instance(rows: &[(i64, i64, i64)]) -> Instance {
        let mut csv = String::from("K,V,W\n");
        for (k, v, w) in rows {
            csv.push_str(&format!("{k},{v},{w}\n"));
        }
        load_instance("relation R(K: int, V: int measure, W: int measure)", &BTreeMap::from([("R".into(), csv)]))
            .unwrap()
    }

    const SMALL: &str = "function f(x) on R: sum(V - 2 * (W)) where K = x and (V > 0 or W != 1)\n\
                         function g() on R: sum(1) where V <= W\n\
                         rule a: R(x, _, _) -> f(x) - g() = 1\n\
                         rule b: R(x, _, _) -> 3 * f(x) >= -4\n";

    proptest! {
        #[test]
        fn aggregation_is_additive(
            left in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 0..5),
            right in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 0..5),
            x in 0i64..3,
        ) {
            let mut all = left.clone();
            all.extend(right.iter().cloned());
            let (l, r, w) = (small_instance(&left), small_instance(&right), small_instance(&all));
            let set = parse_constraints(SMALL, w.schema()).unwrap();
            for f in &set.functions {
                let args: Vec<Value> = if f.params.is_empty() { vec![] } else { vec![Value::int(x)] };
                prop_assert_eq!(
                    eval_aggregation(&l, f, &args) + eval_aggregation(&r, f, &args),
                    eval_aggregation(&w, f, &args)
                );
            }
        }

        #[test]
        fn grounding_is_monotone(
            base in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 0..5),
            extra in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 0..3),
        ) {
            let mut all = base.clone();
            all.extend(extra);
            let (small, big) = (small_instance(&base), small_instance(&all));
            let set = parse_constraints(SMALL, big.schema()).unwrap();
            for c in &set.constraints {
                let before: Vec<_> = ground_constraint(&small, c).into_iter().map(|g| g.theta).collect();
                let after: Vec<_> = ground_constraint(&big, c).into_iter().map(|g| g.theta).collect();
                for theta in before {
                    prop_assert!(after.contains(&theta));
                }
            }
        }

        #[test]
        fn desugaring_preserves_satisfaction(rows in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 0..5)) {
            let inst = small_instance(&rows);
            let set = parse_constraints(SMALL, inst.schema()).unwrap();
            let desugared = crate::constraint::desugar_equalities(&set);
            prop_assert_eq!(check(&inst, &set).is_consistent(), check(&inst, &desugared).is_consistent());
        }

        #[test]
        fn checker_agrees_with_applied_check(
            rows in proptest::collection::vec((0i64..3, -3i64..4, -3i64..4), 1..4),
            new in proptest::collection::vec(-3i64..4, 6),
        ) {
            let inst = small_instance(&rows);
            let set = parse_constraints(SMALL, inst.schema()).unwrap();
            let checker = Checker::new(&inst, &set);
            let mut overrides = HashMap::new();
            let mut tables = inst.tables().to_vec();
            for (i, cell) in inst.measure_cells().into_iter().enumerate() {
                overrides.insert(cell, int(new[i]));
                tables[0][cell.tuple.row][cell.attr] = Value::int(new[i]);
            }
            let applied = inst.with_tables(tables);
            prop_assert_eq!(checker.satisfied_with(&overrides), check(&applied, &set).is_consistent());
        }
    }
}
