//! End-to-end acceptance checks, one line of output per criterion.
//! Runs as a plain binary so the lines show up in `cargo test` output.

mod common;

use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::{Signed, Zero};
use numrepair::circuit::{brute_force_sat, encode_circuit, gen_circuit};
use numrepair::cqa::{cqa_with, GroundAtomQuery};
use numrepair::eval::check;
use numrepair::linear::{verify, LinearSystem, Rel, VarKind};
use numrepair::project::Project;
use numrepair::rational::{int, Rational};
use numrepair::relational::{validate_update_set, AtomicUpdate, CellRef, Instance, RelId, Support, Value};
use numrepair::repair::{Feasibility, Limits, RepairEngine, Semantics, Verdict};
use numrepair::solver::{solve, Outcome, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::RandomInstance;

fn fixture() -> Project {
    Project::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/cash_budget")).expect("fixture loads")
}

fn value_cell(row: usize) -> CellRef {
    CellRef::new(RelId(0), row, 4)
}

// Fixture rows by subsection (2003).
const CASH_SALES: usize = 1;
const RECEIVABLES: usize = 2;
const TOTAL_RECEIPTS: usize = 3;
const LONG_TERM_FINANCING: usize = 6;
const TOTAL_DISBURSEMENTS: usize = 7;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Result<(), String> {
    let p = fixture();
    let report = check(&p.instance, &p.constraints);
    let mut found: Vec<(String, String)> =
        report.violations.iter().map(|v| (v.ground.constraint.clone(), v.ground.theta_json().to_string())).collect();
    found.sort();
    let expected = vec![
        ("c1".to_string(), r#"{"x":"Receipts","y":2003}"#.to_string()),
        ("c2".to_string(), r#"{"x":2003}"#.to_string()),
    ];
    ensure(found == expected, || format!("violations {found:?}"))
}

fn criterion_2() -> Result<(), String> {
    let p = fixture();
    let engine = RepairEngine::new(&p.instance, &p.constraints, p.limits());
    let report = engine.minimal_supports(Semantics::Card);
    ensure(report.kstar == Some(1), || format!("k* = {:?}", report.kstar))?;
    ensure(report.supports.len() == 1, || format!("{} supports", report.supports.len()))?;
    let only = &report.supports[0];
    let expected: Support = [value_cell(TOTAL_RECEIPTS)].into_iter().collect();
    ensure(only.support == expected, || format!("support {:?}", only.support))?;
    let value = only.sample.get(value_cell(TOTAL_RECEIPTS)).cloned();
    ensure(value == Some(Value::int(220)), || format!("value {value:?}"))
}

fn updates(instance: &Instance, values: &[(usize, i64)]) -> numrepair::relational::UpdateSet {
    validate_update_set(
        instance,
        values.iter().map(|&(r, v)| AtomicUpdate { cell: value_cell(r), value: Value::int(v) }).collect(),
    )
    .expect("valid update set")
}

fn criterion_3() -> Result<(), String> {
    let p = fixture();
    let engine = RepairEngine::new(&p.instance, &p.constraints, p.limits());
    let cases = [
        ("rho", updates(&p.instance, &[(TOTAL_RECEIPTS, 220)]), true, true),
        (
            "rho'",
            updates(&p.instance, &[(CASH_SALES, 130), (LONG_TERM_FINANCING, 70), (TOTAL_DISBURSEMENTS, 190)]),
            true,
            false,
        ),
        ("rho''", updates(&p.instance, &[(CASH_SALES, 110), (RECEIVABLES, 110), (TOTAL_RECEIPTS, 220)]), false, false),
    ];
    for (name, u, set_min, card_min) in cases {
        let s = engine.check_repair(&u, Semantics::Set);
        let c = engine.check_repair(&u, Semantics::Card);
        ensure(s.is_repair && c.is_repair, || format!("{name} not recognized as a repair"))?;
        let got = (s.is_minimal.clone(), c.is_minimal.clone());
        let want = (verdict(set_min), verdict(card_min));
        ensure(got == want, || format!("{name}: minimal (set, card) = {got:?}, expected {want:?}"))?;
    }
    Ok(())
}

fn verdict(b: bool) -> Verdict {
    if b {
        Verdict::True
    } else {
        Verdict::False
    }
}

fn criterion_4() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sat = 0;
    for i in 0..50 {
        let gates = rng.random_range(1..=4);
        let inputs = rng.random_range(1..=4);
        let seed = rng.random();
        let circuit = gen_circuit(gates, inputs, seed).map_err(|e| e.to_string())?;
        let expected = brute_force_sat(&circuit).map_err(|e| e.to_string())?;
        let (instance, set) = encode_circuit(&circuit);
        let engine = RepairEngine::new(&instance, &set, Limits::default());
        let got = match engine.repair_exists() {
            Feasibility::Feasible(u) => {
                let only_bits = u.updates().iter().all(|a| a.value == Value::int(0) || a.value == Value::int(1));
                ensure(only_bits, || format!("circuit {i}: repair uses values outside {{0, 1}}"))?;
                true
            }
            Feasibility::Infeasible => false,
            Feasibility::Indeterminate(why) => return Err(format!("circuit {i} indeterminate: {why}\n{circuit}")),
        };
        ensure(got == expected, || format!("circuit {i}: repair {got}, satisfiable {expected}\n{circuit}"))?;
        sat += usize::from(expected);
    }
    eprintln!("    {sat} of 50 circuits satisfiable");
    Ok(())
}

fn criterion_5() -> Result<(), String> {
    for seed in 0..100 {
        let r = RandomInstance::generate(seed);
        let (instance, set) = r.load();
        let (oracle_set, oracle_card) = r.oracle_families();
        let engine = RepairEngine::new(&instance, &set, r.limits());
        for (semantics, oracle) in [(Semantics::Set, oracle_set), (Semantics::Card, oracle_card)] {
            let report = engine.minimal_supports(semantics);
            ensure(report.complete, || format!("seed {seed} {semantics}: incomplete {:?}", report.indeterminate))?;
            let mut got: Vec<Support> = report.supports.iter().map(|m| m.support.clone()).collect();
            got.sort();
            ensure(got == oracle, || {
                format!("seed {seed} {semantics}: engine {got:?} oracle {oracle:?}\n{}{:?}", r.dsl(), r.rows)
            })?;
        }
    }
    Ok(())
}

/// Ground constraints of the fixture as `Σ coeff·cell = 0`, built from the
/// CSV directly.
fn fixture_equations(instance: &Instance) -> Vec<Vec<(usize, i64)>> {
    let rows: Vec<(i64, String, String, String)> = instance
        .rows(RelId(0))
        .iter()
        .map(|r| {
            let s = |v: &Value| match v {
                Value::Str(s) => s.clone(),
                other => other.to_string(),
            };
            (r[0].to_string().parse().unwrap(), s(&r[1]), s(&r[2]), s(&r[3]))
        })
        .collect();
    let mut eqs = Vec::new();
    let mut pairs: Vec<(i64, String)> = rows.iter().map(|r| (r.0, r.1.clone())).collect();
    pairs.sort();
    pairs.dedup();
    for (year, section) in pairs {
        let mut eq = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.0 == year && r.1 == section {
                match r.3.as_str() {
                    "det" => eq.push((i, 1)),
                    "aggr" => eq.push((i, -1)),
                    _ => {}
                }
            }
        }
        eqs.push(eq);
    }
    let mut years: Vec<i64> = rows.iter().map(|r| r.0).collect();
    years.sort();
    years.dedup();
    for year in years {
        let pick = |terms: &[(&str, i64)]| -> Vec<(usize, i64)> {
            let mut eq = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                for (name, c) in terms {
                    if r.0 == year && r.2 == *name {
                        eq.push((i, *c));
                    }
                }
            }
            eq
        };
        eqs.push(pick(&[("net cash inflow", 1), ("total cash receipts", -1), ("total disbursements", 1)]));
        eqs.push(pick(&[("ending cash balance", 1), ("beginning cash", -1), ("net cash inflow", -1)]));
    }
    eqs
}

/// Searches support values in `[0, 300]` for a solution where `cell`
/// differs from `target`.
fn oracle_falsifies(instance: &Instance, support: &Support, cell: usize, target: i64) -> bool {
    let eqs = fixture_equations(instance);
    let original: Vec<i64> = instance.rows(RelId(0)).iter().map(|r| r[4].to_string().parse().unwrap()).collect();
    let cells: Vec<usize> = support.iter().map(|c| c.tuple.row).collect();
    let mut values = original.clone();
    fn go(
        eqs: &[Vec<(usize, i64)>],
        cells: &[usize],
        at: usize,
        values: &mut Vec<i64>,
        cell: usize,
        target: i64,
    ) -> bool {
        if at == cells.len() {
            return values[cell] != target
                && eqs.iter().all(|e| e.iter().map(|(i, c)| c * values[*i]).sum::<i64>() == 0);
        }
        (0..=300).any(|v| {
            values[cells[at]] = v;
            go(eqs, cells, at + 1, values, cell, target)
        })
    }
    go(&eqs, &cells, 0, &mut values, cell, target)
}

fn criterion_6() -> Result<(), String> {
    let p = fixture();
    let limits = Limits { max_support: 3, ..p.limits() };
    let engine = RepairEngine::new(&p.instance, &p.constraints, limits);
    let cases = [
        ("cash sales", CASH_SALES, "CashBudget(2003,Receipts,cash sales,det,100)", 100, Semantics::Set, false),
        ("cash sales", CASH_SALES, "CashBudget(2003,Receipts,cash sales,det,100)", 100, Semantics::Card, true),
        (
            "total cash receipts",
            TOTAL_RECEIPTS,
            "CashBudget(2003,Receipts,total cash receipts,aggr,220)",
            220,
            Semantics::Card,
            true,
        ),
        (
            "total cash receipts",
            TOTAL_RECEIPTS,
            "CashBudget(2003,Receipts,total cash receipts,aggr,250)",
            250,
            Semantics::Card,
            false,
        ),
    ];
    for (name, row, text, target, semantics, expected) in cases {
        let q = GroundAtomQuery::parse(text, &p.instance).map_err(|e| e.to_string())?;
        let v = cqa_with(&engine, &q, semantics);
        let family = engine.minimal_supports(semantics);
        let oracle = !family.supports.iter().any(|m| oracle_falsifies(&p.instance, &m.support, row, target));
        ensure(oracle == expected, || format!("oracle disagrees on {name}={target} under {semantics}"))?;
        ensure(v.answer == verdict(expected), || format!("{name}={target} under {semantics}: {}", v.answer))?;
    }
    Ok(())
}

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    Rational::new(rng.random_range(-9..=9).into(), rng.random_range(1..=9).into())
}

fn random_system(rng: &mut ChaCha8Rng, kind: VarKind) -> LinearSystem {
    let mut s = LinearSystem::new();
    let n = rng.random_range(1..=4);
    for i in 0..n {
        s.add_var(format!("x{i}"), kind);
    }
    for r in 0..rng.random_range(1..=5) {
        let mut coeffs: Vec<(usize, Rational)> = Vec::new();
        for v in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((v, random_rational(rng)));
            }
        }
        let rel = match rng.random_range(0..3) {
            0 => Rel::Le,
            1 => Rel::Lt,
            _ => Rel::Eq,
        };
        s.add_row(coeffs, rel, random_rational(rng), format!("r{r}"));
    }
    s
}

/// Fourier–Motzkin elimination with strictness tracking.
fn fm_feasible(system: &LinearSystem) -> bool {
    // (dense coefficients, bound, strict) for Σ a·x ≤ b or < b
    let n = system.vars.len();
    let mut rows: Vec<(Vec<Rational>, Rational, bool)> = Vec::new();
    for r in &system.rows {
        let mut dense = vec![Rational::zero(); n];
        for (v, a) in &r.coeffs {
            dense[*v] = a.clone();
        }
        match r.rel {
            Rel::Le => rows.push((dense, r.bound.clone(), false)),
            Rel::Lt => rows.push((dense, r.bound.clone(), true)),
            Rel::Eq => {
                rows.push((dense.iter().map(|a| -a).collect(), -r.bound.clone(), false));
                rows.push((dense, r.bound.clone(), false));
            }
        }
    }
    for v in 0..n {
        let (pos, rest): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.0[v].is_positive());
        let (neg, zero): (Vec<_>, Vec<_>) = rest.into_iter().partition(|r| r.0[v].is_negative());
        rows = zero;
        for p in &pos {
            for q in &neg {
                let (lp, lq) = (-q.0[v].clone(), p.0[v].clone());
                let coeffs = p.0.iter().zip(&q.0).map(|(a, b)| a * &lp + b * &lq).collect();
                rows.push((coeffs, &p.1 * &lp + &q.1 * &lq, p.2 || q.2));
            }
        }
    }
    rows.iter().all(|(_, b, strict)| if *strict { b.is_positive() } else { !b.is_negative() })
}

fn grid_feasible(system: &LinearSystem) -> bool {
    let n = system.vars.len();
    let mut point = vec![int(-5); n];
    loop {
        if verify(system, &point) == Ok(true) {
            return true;
        }
        let mut i = 0;
        loop {
            if i == n {
                return false;
            }
            if point[i] < int(5) {
                point[i] += int(1);
                break;
            }
            point[i] = int(-5);
            i += 1;
        }
    }
}

fn criterion_7() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut feasible = 0;
    for i in 0..200 {
        let integer = i % 2 == 1;
        let system = random_system(&mut rng, if integer { VarKind::Integer } else { VarKind::Real });
        let opts = SolveOptions { value_box: integer.then(|| (int(-5), int(5))), ..SolveOptions::default() };
        let expected = if integer { grid_feasible(&system) } else { fm_feasible(&system) };
        match solve(&system, &opts) {
            Outcome::Feasible(values) => {
                ensure(verify(&system, &values) == Ok(true), || format!("system {i}: witness fails\n{system}"))?;
                ensure(expected, || format!("system {i}: solver feasible, reference infeasible\n{system}"))?;
                feasible += 1;
            }
            Outcome::Infeasible(cert) => {
                ensure(!expected, || format!("system {i}: solver infeasible, reference feasible\n{system}"))?;
                if let Some(c) = cert {
                    ensure(c.is_valid(&system), || format!("system {i}: bad certificate\n{system}"))?;
                }
            }
            Outcome::BoundExhausted { .. } => return Err(format!("system {i}: bound exhausted\n{system}")),
        }
    }
    eprintln!("    {feasible} of 200 systems feasible");
    Ok(())
}

/// Name, check and time limit.
type Criterion = (&'static str, fn() -> Result<(), String>, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("fixture violation detection", criterion_1, Duration::from_secs(1)),
        ("unique card-minimal repair", criterion_2, Duration::from_secs(5)),
        ("repair checking triple", criterion_3, Duration::from_secs(10)),
        ("circuit reduction equivalence", criterion_4, Duration::from_secs(300)),
        ("minimality oracle equivalence", criterion_5, Duration::from_secs(600)),
        ("consistent query answers", criterion_6, Duration::from_secs(30)),
        ("solver exactness", criterion_7, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|()| ensure(elapsed <= *limit, || format!("took {elapsed:.2?}, limit {limit:?}")));
        match result {
            Ok(()) => println!("{label}: PASS in {elapsed:.2?} (limit {limit:?})"),
            Err(why) => {
                failed += 1;
                println!("{label}: FAIL in {elapsed:.2?}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
