//! NOR circuits and their encoding as a repair problem: the circuit's
//! output can be 1 exactly when the encoded database has a repair.
//!
//! Gate 0 is the output. Gate `i` reads inputs and gates numbered above
//! `i`, so evaluating gates from the highest number down is a topological
//! order.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint::{parse_constraints, ConstraintSet};
use crate::relational::{load_instance, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Input(usize),
    Gate(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    inputs: usize,
    /// Fan-in of each gate; duplicates allowed.
    gates: Vec<Vec<Node>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("a circuit needs at least one gate and one input")]
    Empty,
    #[error("gate {0} has no incoming edge")]
    NoFanIn(usize),
    #[error("gate {gate} reads {node:?}, which is not evaluated before it")]
    NotAcyclic { gate: usize, node: Node },
    #[error("{0} inputs are too many to enumerate (limit 20)")]
    TooManyInputs(usize),
}

const MAX_BRUTE_FORCE_INPUTS: usize = 20;

impl Circuit {
    pub fn new(inputs: usize, gates: Vec<Vec<Node>>) -> Result<Self, CircuitError> {
        if inputs == 0 || gates.is_empty() {
            return Err(CircuitError::Empty);
        }
        for (g, fan_in) in gates.iter().enumerate() {
            if fan_in.is_empty() {
                return Err(CircuitError::NoFanIn(g));
            }
            for &node in fan_in {
                let ok = match node {
                    Node::Input(i) => i < inputs,
                    Node::Gate(j) => j > g && j < gates.len(),
                };
                if !ok {
                    return Err(CircuitError::NotAcyclic { gate: g, node });
                }
            }
        }
        Ok(Circuit { inputs, gates })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn gates(&self) -> &[Vec<Node>] {
        &self.gates
    }

    /// Output value under an assignment to the inputs.
    pub fn eval(&self, assignment: &[bool]) -> bool {
        let mut value = vec![false; self.gates.len()];
        for g in (0..self.gates.len()).rev() {
            value[g] = !self.gates[g].iter().any(|n| match *n {
                Node::Input(i) => assignment[i],
                Node::Gate(j) => value[j],
            });
        }
        value[0]
    }

    /// Database identifier of a node: gates keep their number, input `i`
    /// becomes `gates + i`.
    pub fn id(&self, node: Node) -> usize {
        match node {
            Node::Gate(g) => g,
            Node::Input(i) => self.gates.len() + i,
        }
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (g, fan_in) in self.gates.iter().enumerate() {
            let args: Vec<String> = fan_in
                .iter()
                .map(|n| match n {
                    Node::Input(i) => format!("x{}", i + 1),
                    Node::Gate(j) => format!("g{j}"),
                })
                .collect();
            writeln!(f, "g{g} = NOR({})", args.join(", "))?;
        }
        Ok(())
    }
}

/// A random circuit, deterministic in `seed`. Each gate draws 1 to 3
/// incoming edges from the nodes before it; inputs nothing reads are wired
/// into the output gate.
pub fn gen_circuit(gates: usize, inputs: usize, seed: u64) -> Result<Circuit, CircuitError> {
    if gates == 0 || inputs == 0 {
        return Err(CircuitError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fan = vec![Vec::new(); gates];
    for g in (0..gates).rev() {
        let available: Vec<Node> = (0..inputs).map(Node::Input).chain((g + 1..gates).map(Node::Gate)).collect();
        let k = rng.random_range(1..=3);
        for _ in 0..k {
            fan[g].push(available[rng.random_range(0..available.len())]);
        }
    }
    for i in 0..inputs {
        if !fan.iter().flatten().any(|n| *n == Node::Input(i)) {
            fan[0].push(Node::Input(i));
        }
    }
    Circuit::new(inputs, fan)
}

/// Tries every input assignment.
pub fn brute_force_sat(circuit: &Circuit) -> Result<bool, CircuitError> {
    if circuit.inputs > MAX_BRUTE_FORCE_INPUTS {
        return Err(CircuitError::TooManyInputs(circuit.inputs));
    }
    Ok((0u32..1 << circuit.inputs).any(|bits| {
        let assignment: Vec<bool> = (0..circuit.inputs).map(|i| bits >> i & 1 == 1).collect();
        circuit.eval(&assignment)
    }))
}

pub const CIRCUIT_SCHEMA: &str = "\
relation gate(IDGate: int, norVal: int measure, orVal: int measure)
relation gateInput(IDGate: int, IDIngoing: int, Val: int measure)
relation input(IDInput: int, Val: int measure)
";

pub const CIRCUIT_CONSTRAINTS: &str = "\
function NORVal(X) on gate: sum(norVal) where IDGate = X
function ORVal(X) on gate: sum(orVal) where IDGate = X
function IngoingVal(X, Y) on gateInput: sum(Val) where IDGate = X and IDIngoing = Y
function IngoingSum(X) on gateInput: sum(Val) where IDGate = X
function InputVal(X) on input: sum(Val) where IDInput = X
function ValidInput() on input: sum(1) where Val != 0 and Val != 1
function ValidGate() on gate: sum(1) where (orVal != 0 and orVal != 1) or (norVal != 0 and norVal != 1)

# every measure value is 0 or 1
rule valid: -> ValidInput() + ValidGate() = 0
# a gate's OR and NOR values are complementary
rule complement: gate(X, _, _) -> ORVal(X) + NORVal(X) = 1
# OR is 0 when every incoming value is 0
rule or_low: gate(X, _, _) -> ORVal(X) - IngoingSum(X) <= 0
# OR is 1 when some incoming value is 1
rule or_high: gateInput(X, Y, _) -> IngoingVal(X, Y) - ORVal(X) <= 0
# an edge carries the value of its source
rule edge: gateInput(X, Y, _) -> IngoingVal(X, Y) - NORVal(Y) - InputVal(Y) = 0
rule output: -> NORVal(0) = 1
";

/// Table texts (CSV) keyed by relation name. Gate rows are listed in
/// evaluation order; repeated edges become one `gateInput` row.
pub fn circuit_tables(circuit: &Circuit) -> BTreeMap<String, String> {
    let mut gate = String::from("IDGate,norVal,orVal\n");
    let mut gate_input = String::from("IDGate,IDIngoing,Val\n");
    let mut input = String::from("IDInput,Val\n");
    for g in (0..circuit.gates.len()).rev() {
        gate.push_str(&format!("{g},-1,-1\n"));
        let mut sources: Vec<usize> = circuit.gates[g].iter().map(|n| circuit.id(*n)).collect();
        sources.sort_unstable();
        sources.dedup();
        for s in sources {
            gate_input.push_str(&format!("{g},{s},-1\n"));
        }
    }
    for i in 0..circuit.inputs {
        input.push_str(&format!("{},-1\n", circuit.id(Node::Input(i))));
    }
    BTreeMap::from([("gate".to_string(), gate), ("gateInput".to_string(), gate_input), ("input".to_string(), input)])
}

/// The database and constraints whose repairs are the satisfying runs of
/// the circuit.
pub fn encode_circuit(circuit: &Circuit) -> (Instance, ConstraintSet) {
    let instance = load_instance(CIRCUIT_SCHEMA, &circuit_tables(circuit)).expect("circuit tables are well-formed");
    let set = parse_constraints(CIRCUIT_CONSTRAINTS, instance.schema()).expect("circuit constraints parse");
    (instance, set)
}
