//! `numrepair`: checks, repairs and queries numerical databases stored as
//! project directories.
//!
//! Exit status: 0 consistent / true, 1 inconsistent / false, 2 error,
//! 3 indeterminate (a search limit was hit).

mod update_file;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use numrepair::circuit::{brute_force_sat, encode_circuit, gen_circuit, CIRCUIT_CONSTRAINTS};
use numrepair::cqa::{cqa_with, GroundAtomQuery};
use numrepair::eval::check;
use numrepair::exec::ExecMode;
use numrepair::project::{Config, Project};
use numrepair::rational::format_rational;
use numrepair::relational::{Instance, Support, UpdateSet};
use numrepair::repair::{Limits, RepairEngine, RepairReport, Semantics, Verdict};

use update_file::parse_update_file;

#[derive(Parser)]
#[command(name = "numrepair", version, about = "Repairs and consistent answers for numerical databases")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Search {
    /// Project directory (schema.txt, constraints.txt, one CSV per relation).
    project: PathBuf,
    /// Branch cap per support.
    #[arg(long, env = "NUMREPAIR_MAX_BRANCHES")]
    max_branches: Option<usize>,
    /// Run feasibility checks on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Lists violated ground constraints.
    Check {
        /// Project directory.
        project: PathBuf,
    },
    /// Enumerates minimal repair supports.
    Repair {
        #[command(flatten)]
        search: Search,
        #[arg(long, default_value = "set")]
        semantics: Semantics,
        /// Largest support size searched.
        #[arg(long)]
        max_support: Option<usize>,
        /// Write the branch systems of every reported support as JSON.
        #[arg(long, value_name = "FILE")]
        dump_systems: Option<PathBuf>,
    },
    /// Decides whether an update set is a (minimal) repair.
    CheckRepair {
        #[command(flatten)]
        search: Search,
        /// JSON list of {relation, row, attribute, value}.
        #[arg(long, value_name = "FILE")]
        repair: PathBuf,
        #[arg(long, default_value = "set")]
        semantics: Semantics,
    },
    /// Decides whether a ground atom holds in every minimal repair.
    Cqa {
        #[command(flatten)]
        search: Search,
        /// Ground atom such as `CashBudget(2003, Receipts, 'cash sales', det, 100)`.
        #[arg(long)]
        atom: String,
        #[arg(long, default_value = "set")]
        semantics: Semantics,
        #[arg(long)]
        max_support: Option<usize>,
    },
    /// Writes a random NOR circuit as a project directory.
    GenCircuit {
        #[arg(long)]
        gates: usize,
        #[arg(long)]
        inputs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// `writeln!` into a `String`, which cannot fail.
macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).expect("writing to a String")
    };
}

const CONSISTENT: u8 = 0;
const INCONSISTENT: u8 = 1;
const ERROR: u8 = 2;
const INDETERMINATE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = run(&cli, &mut out);
    // a closed pipe downstream is not an error
    let _ = io::stdout().lock().write_all(out.as_bytes());
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(ERROR)
        }
    }
}

fn verdict_code(v: &Verdict) -> u8 {
    match v {
        Verdict::True => CONSISTENT,
        Verdict::False => INCONSISTENT,
        Verdict::Indeterminate(_) => INDETERMINATE,
    }
}

fn print_json(out: &mut String, value: &serde_json::Value) {
    outln!(out, "{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn load(dir: &Path) -> Result<Project, String> {
    Project::load(dir).map_err(|e| e.to_string())
}

/// Defaults, then the project's config.toml, then command-line flags.
fn limits(project: &Project, search: &Search, max_support: Option<usize>) -> Limits {
    let mut limits = project.limits();
    Config { max_support, max_branches: search.max_branches, ..Config::default() }.apply(&mut limits);
    if search.sequential {
        limits.mode = ExecMode::Sequential;
    }
    limits
}

fn run(cli: &Cli, out: &mut String) -> Result<u8, String> {
    match &cli.command {
        Command::Check { project } => {
            let p = load(project)?;
            let report = check(&p.instance, &p.constraints);
            if cli.json {
                print_json(out, &report.to_json());
            } else if report.is_consistent() {
                outln!(out, "consistent ({} ground constraints)", report.ground_constraints);
            } else {
                outln!(
                    out,
                    "inconsistent: {} of {} ground constraints violated",
                    report.violations.len(),
                    report.ground_constraints
                );
                for v in &report.violations {
                    outln!(
                        out,
                        "  {}: {} {} {} fails",
                        v.ground,
                        format_rational(&v.lhs),
                        v.ground.cmp.symbol(),
                        format_rational(&v.ground.bound)
                    );
                }
            }
            Ok(if report.is_consistent() { CONSISTENT } else { INCONSISTENT })
        }
        Command::Repair { search, semantics, max_support, dump_systems } => {
            let p = load(&search.project)?;
            let engine = RepairEngine::new(&p.instance, &p.constraints, limits(&p, search, *max_support));
            if engine.is_consistent() {
                if cli.json {
                    print_json(out, &serde_json::json!({"consistent": true, "supports": []}));
                } else {
                    outln!(out, "consistent: nothing to repair");
                }
                return Ok(CONSISTENT);
            }
            let report = engine.minimal_supports(*semantics);
            if let Some(path) = dump_systems {
                let dump = systems_json(&engine, &report);
                fs::write(path, serde_json::to_string_pretty(&dump).expect("json values serialize"))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            if cli.json {
                print_json(out, &report.to_json(&p.instance));
            } else {
                print_report(out, &p.instance, &report);
            }
            let unresolved = !report.indeterminate.is_empty() || (report.supports.is_empty() && !report.complete);
            Ok(if unresolved { INDETERMINATE } else { INCONSISTENT })
        }
        Command::CheckRepair { search, repair, semantics } => {
            let p = load(&search.project)?;
            let text = fs::read_to_string(repair).map_err(|e| format!("{}: {e}", repair.display()))?;
            let updates = parse_update_file(&text, &p.instance).map_err(|e| format!("{}: {e}", repair.display()))?;
            let engine = RepairEngine::new(&p.instance, &p.constraints, limits(&p, search, None));
            let verdict = engine.check_repair(&updates, *semantics);
            if cli.json {
                print_json(out, &verdict.to_json(&p.instance));
            } else {
                outln!(out, "repair: {}", if verdict.is_repair { "yes" } else { "no" });
                if verdict.is_repair {
                    outln!(out, "{}-minimal: {}", verdict.semantics, verdict.is_minimal);
                }
                if let Some(smaller) = &verdict.smaller {
                    outln!(out, "smaller repair:");
                    print_updates(out, &p.instance, smaller);
                }
            }
            Ok(if verdict.is_repair { verdict_code(&verdict.is_minimal) } else { INCONSISTENT })
        }
        Command::Cqa { search, atom, semantics, max_support } => {
            let p = load(&search.project)?;
            let query = GroundAtomQuery::parse(atom, &p.instance).map_err(|e| e.to_string())?;
            let engine = RepairEngine::new(&p.instance, &p.constraints, limits(&p, search, *max_support));
            let verdict = cqa_with(&engine, &query, *semantics);
            if cli.json {
                print_json(out, &verdict.to_json(&p.instance, &query));
            } else {
                outln!(out, "{}: {} under {} semantics", query.display(&p.instance), verdict.answer, verdict.semantics);
                if verdict.no_repair {
                    outln!(out, "the database has no repair");
                }
                if let Some(w) = &verdict.witness {
                    outln!(out, "minimal repair without the atom:");
                    print_updates(out, &p.instance, w);
                }
            }
            Ok(verdict_code(&verdict.answer))
        }
        Command::GenCircuit { gates, inputs, seed, out: dir } => {
            let circuit = gen_circuit(*gates, *inputs, *seed).map_err(|e| e.to_string())?;
            let (instance, constraints) = encode_circuit(&circuit);
            // every cell starts out invalid, so repairs touch all of them
            let config = Config { max_support: Some(instance.measure_cells().len()), ..Config::default() };
            let project = Project { instance, constraints, constraints_text: CIRCUIT_CONSTRAINTS.to_string(), config };
            project.write(dir).map_err(|e| e.to_string())?;
            let satisfiable = brute_force_sat(&circuit).ok();
            if cli.json {
                print_json(
                    out,
                    &serde_json::json!({
                        "out": dir.display().to_string(),
                        "gates": gates,
                        "inputs": inputs,
                        "seed": seed,
                        "circuit": circuit.to_string(),
                        "satisfiable": satisfiable,
                    }),
                );
            } else {
                out.push_str(&circuit.to_string());
                match satisfiable {
                    Some(s) => outln!(out, "satisfiable: {s}"),
                    None => outln!(out, "satisfiable: not enumerated"),
                }
                outln!(out, "wrote {}", dir.display());
            }
            Ok(CONSISTENT)
        }
    }
}

fn cell_list(instance: &Instance, support: &Support) -> String {
    support.iter().map(|c| instance.display_cell(*c).to_string()).collect::<Vec<_>>().join(", ")
}

fn print_updates(out: &mut String, instance: &Instance, updates: &UpdateSet) {
    for u in updates.updates() {
        let old = instance.value(u.cell).map(|v| v.literal()).unwrap_or_default();
        outln!(out, "  {}: {} -> {}", instance.display_cell(u.cell), old, u.value.literal());
    }
}

fn print_report(out: &mut String, instance: &Instance, report: &RepairReport) {
    outln!(out, "semantics: {}", report.semantics);
    if let Some(k) = report.kstar {
        outln!(out, "minimum support size: {k}");
    }
    for (i, m) in report.supports.iter().enumerate() {
        outln!(out, "support {}: {{{}}}", i + 1, cell_list(instance, &m.support));
        print_updates(out, instance, &m.sample);
    }
    if report.supports.is_empty() {
        outln!(out, "no repair found");
    }
    for (s, why) in &report.indeterminate {
        outln!(out, "undecided {{{}}}: {why}", cell_list(instance, s));
    }
    outln!(
        out,
        "{} (supports up to {} of {} relevant cells)",
        if report.complete { "complete" } else { "incomplete" },
        report.limits.max_support,
        report.relevant_cells
    );
}

fn systems_json(engine: &RepairEngine<'_>, report: &RepairReport) -> serde_json::Value {
    let instance = engine.instance();
    let cap = engine.limits().search.max_branches;
    let entries = report.supports.iter().map(|m| {
        let cells: Vec<_> = m.support.iter().map(|c| instance.cell_json(*c)).collect();
        match engine.encoder().encode(&m.support).materialize(cap) {
            Ok(branches) => serde_json::json!({
                "cells": cells,
                "branches": branches.systems.iter().map(|s| s.to_json()).collect::<Vec<_>>(),
            }),
            Err(e) => serde_json::json!({"cells": cells, "error": e.to_string()}),
        }
    });
    serde_json::Value::Array(entries.collect())
}
