//! Disjunctive normal form of selection conditions.
//!
//! Negation is pushed down to single comparisons, where it flips the
//! operator (`¬(a < b)` becomes `a >= b`). `!=` is kept as one comparison
//! here; callers that need order-only atoms split it themselves.

use super::ast::{Comparison, Condition};

/// A conjunction of comparisons; the empty conjunction is `true`.
pub type Conjunct = Vec<Comparison>;

/// Returns the disjuncts of an equivalent DNF. An empty result means the
/// condition is unsatisfiable as written (`not true`).
pub fn normalize_condition_dnf(condition: &Condition) -> Vec<Conjunct> {
    let mut out = dnf(condition, false);
    for conj in &mut out {
        dedup(conj);
    }
    let mut unique: Vec<Conjunct> = Vec::with_capacity(out.len());
    for conj in out {
        if !unique.contains(&conj) {
            unique.push(conj);
        }
    }
    unique
}

fn dedup(conj: &mut Conjunct) {
    let mut kept: Conjunct = Vec::with_capacity(conj.len());
    for c in conj.drain(..) {
        if !kept.contains(&c) {
            kept.push(c);
        }
    }
    *conj = kept;
}

fn dnf(condition: &Condition, negated: bool) -> Vec<Conjunct> {
    match (condition, negated) {
        (Condition::True, false) => vec![Vec::new()],
        (Condition::True, true) => Vec::new(),
        (Condition::Cmp(c), false) => vec![vec![c.clone()]],
        (Condition::Cmp(c), true) => vec![vec![c.negated()]],
        (Condition::Not(a), n) => dnf(a, !n),
        (Condition::Or(a, b), false) | (Condition::And(a, b), true) => {
            let mut left = dnf(a, negated);
            left.extend(dnf(b, negated));
            left
        }
        (Condition::And(a, b), false) | (Condition::Or(a, b), true) => {
            let left = dnf(a, negated);
            let right = dnf(b, negated);
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut conj = l.clone();
                    conj.extend(r.iter().cloned());
                    out.push(conj);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::ast::{CmpOp, Operand};
    use crate::relational::Value;
    use proptest::prelude::*;

    fn cmp(attr: usize, op: CmpOp, k: i64) -> Condition {
        Condition::Cmp(Comparison {
            lhs: Operand::Attr { index: attr, name: format!("A{attr}") },
            op,
            rhs: Operand::Const(Value::int(k)),
        })
    }

    fn eval_cmp(c: &Comparison, row: &[i64]) -> bool {
        let (Operand::Attr { index, .. }, Operand::Const(Value::Int(k))) = (&c.lhs, &c.rhs) else { unreachable!() };
        let k: i64 = k.try_into().unwrap();
        c.op.holds(row[*index].cmp(&k))
    }

    fn eval(c: &Condition, row: &[i64]) -> bool {
        match c {
            Condition::True => true,
            Condition::Cmp(x) => eval_cmp(x, row),
            Condition::And(a, b) => eval(a, row) && eval(b, row),
            Condition::Or(a, b) => eval(a, row) || eval(b, row),
            Condition::Not(a) => !eval(a, row),
        }
    }

    fn eval_dnf(d: &[Conjunct], row: &[i64]) -> bool {
        d.iter().any(|conj| conj.iter().all(|c| eval_cmp(c, row)))
    }

    fn render(d: &[Conjunct]) -> Vec<Vec<String>> {
        d.iter().map(|c| c.iter().map(|x| x.to_string()).collect()).collect()
    }

    #[test]
    fn distributes_and_over_or() {
        let c = Condition::and(cmp(0, CmpOp::Eq, 1), Condition::or(cmp(1, CmpOp::Eq, 2), cmp(2, CmpOp::Eq, 3)));
        assert_eq!(render(&normalize_condition_dnf(&c)), vec![vec!["A0 = 1", "A1 = 2"], vec!["A0 = 1", "A2 = 3"]]);
    }

    #[test]
    fn valid_input_condition_is_one_conjunct() {
        let c = Condition::and(cmp(0, CmpOp::Ne, 0), cmp(0, CmpOp::Ne, 1));
        assert_eq!(render(&normalize_condition_dnf(&c)), vec![vec!["A0 != 0", "A0 != 1"]]);
    }

    #[test]
    fn negation_flips_the_comparison() {
        let c = Condition::negate(cmp(0, CmpOp::Le, 5));
        assert_eq!(render(&normalize_condition_dnf(&c)), vec![vec!["A0 > 5"]]);
    }

    #[test]
    fn or_of_ands_is_already_normal() {
        let c = Condition::or(
            Condition::and(cmp(0, CmpOp::Ne, 0), cmp(0, CmpOp::Ne, 1)),
            Condition::and(cmp(1, CmpOp::Ne, 0), cmp(1, CmpOp::Ne, 1)),
        );
        let d = normalize_condition_dnf(&c);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|conj| conj.len() == 2));
    }

    #[test]
    fn negated_conjunction_becomes_disjunction() {
        let c = Condition::negate(Condition::and(cmp(0, CmpOp::Lt, 3), cmp(1, CmpOp::Eq, 2)));
        let d = normalize_condition_dnf(&c);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0][0].op, CmpOp::Ge);
        assert_eq!(d[1][0].op, CmpOp::Ne);
    }

    #[test]
    fn constants() {
        assert_eq!(normalize_condition_dnf(&Condition::True), vec![Vec::new()]);
        assert!(normalize_condition_dnf(&Condition::negate(Condition::True)).is_empty());
    }

    fn arb_condition() -> impl Strategy<Value = Condition> {
        let ops = prop_oneof![
            Just(CmpOp::Eq),
            Just(CmpOp::Ne),
            Just(CmpOp::Lt),
            Just(CmpOp::Le),
            Just(CmpOp::Gt),
            Just(CmpOp::Ge)
        ];
        let leaf = prop_oneof![
            1 => Just(Condition::True),
            6 => (0usize..3, ops, -1i64..3).prop_map(|(a, op, k)| cmp(a, op, k)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Condition::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Condition::or(a, b)),
                inner.prop_map(Condition::negate),
            ]
        })
    }

    proptest! {
        #[test]
        fn dnf_is_equivalent_on_every_row(c in arb_condition()) {
            let d = normalize_condition_dnf(&c);
            for a in -2..4 {
                for b in -2..4 {
                    for e in -2..4 {
                        let row = [a, b, e];
                        prop_assert_eq!(eval(&c, &row), eval_dnf(&d, &row));
                    }
                }
            }
        }
    }
}
