//! Repair existence, minimal repairs and repair checking, all decided at the
//! level of supports: a set of cells is feasible when some assignment to
//! those cells alone (unchanged values allowed) satisfies every constraint.
//! Feasibility is monotone in the support, which drives the enumeration.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use thiserror::Error;

use crate::constraint::ConstraintSet;
use crate::encode::{changed_cells, Encoder, Search, SearchLimits};
use crate::eval::check;
use crate::exec::{self, ExecMode};
use crate::relational::{
    apply_update_set, validate_update_set, AtomicUpdate, CellRef, Instance, Support, UpdateSet, Value,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Semantics {
    Set,
    Card,
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semantics::Set => "set",
            Semantics::Card => "card",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown semantics `{0}` (expected set or card)")]
pub struct SemanticsError(String);

impl FromStr for Semantics {
    type Err = SemanticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "set" => Ok(Semantics::Set),
            "card" => Ok(Semantics::Card),
            other => Err(SemanticsError(other.to_string())),
        }
    }
}

/// Search space bounds shared by the repair and query engines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Largest support enumerated.
    pub max_support: usize,
    pub search: SearchLimits,
    pub mode: ExecMode,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_support: 4, search: SearchLimits::default(), mode: ExecMode::default() }
    }
}

impl Limits {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "max_support": self.max_support,
            "max_branches": self.search.max_branches,
            "node_limit": self.search.solve.node_limit,
            "box_multiplier": self.search.solve.box_multiplier,
        })
    }
}

/// Outcome of a feasibility question. `Indeterminate` means a search limit
/// was hit and nothing can be concluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feasibility {
    /// A repair whose support lies inside the asked support.
    Feasible(UpdateSet),
    Infeasible,
    Indeterminate(String),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Three-valued answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    True,
    False,
    Indeterminate(String),
}

impl Verdict {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Verdict::True => serde_json::Value::Bool(true),
            Verdict::False => serde_json::Value::Bool(false),
            Verdict::Indeterminate(_) => serde_json::Value::String("indeterminate".into()),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::True => f.write_str("true"),
            Verdict::False => f.write_str("false"),
            Verdict::Indeterminate(why) => write!(f, "indeterminate ({why})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalSupport {
    pub support: Support,
    /// A repair changing exactly the cells of `support`.
    pub sample: UpdateSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairReport {
    pub semantics: Semantics,
    /// Minimum support size, for card semantics when some repair was found.
    pub kstar: Option<usize>,
    pub supports: Vec<MinimalSupport>,
    pub limits: Limits,
    /// Number of cells any repair could usefully touch.
    pub relevant_cells: usize,
    /// Supports whose check hit a search limit.
    pub indeterminate: Vec<(Support, String)>,
    /// True when the listed supports are all the minimal ones, not just
    /// those inside the search space.
    pub complete: bool,
}

impl RepairReport {
    pub fn to_json(&self, instance: &Instance) -> serde_json::Value {
        let cells = |s: &Support| s.iter().map(|c| instance.cell_json(*c)).collect::<Vec<_>>();
        let mut out = serde_json::json!({
            "semantics": self.semantics.to_string(),
            "supports": self.supports.iter().map(|m| serde_json::json!({
                "cells": cells(&m.support),
                "sample": m.sample.to_json(instance),
            })).collect::<Vec<_>>(),
            "limits": self.limits.to_json(),
            "relevant_cells": self.relevant_cells,
            "complete": self.complete,
            "indeterminate": self.indeterminate.iter().map(|(s, why)| serde_json::json!({
                "cells": cells(s),
                "reason": why,
            })).collect::<Vec<_>>(),
        });
        if let Some(k) = self.kstar {
            out["kstar"] = k.into();
        }
        out
    }
}

/// Result of checking a proposed update set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairCheck {
    pub semantics: Semantics,
    pub is_repair: bool,
    pub is_minimal: Verdict,
    /// A repair on a smaller support, when one disproves minimality.
    pub smaller: Option<UpdateSet>,
}

impl RepairCheck {
    pub fn to_json(&self, instance: &Instance) -> serde_json::Value {
        let mut out = serde_json::json!({
            "semantics": self.semantics.to_string(),
            "is_repair": self.is_repair,
            "is_minimal": self.is_minimal.to_json(),
        });
        if let Verdict::Indeterminate(why) = &self.is_minimal {
            out["reason"] = why.clone().into();
        }
        if let Some(s) = &self.smaller {
            out["smaller_repair"] = s.to_json(instance);
        }
        out
    }
}

/// Grounds the constraints once and answers repair questions against them.
pub struct RepairEngine<'a> {
    encoder: Encoder<'a>,
    limits: Limits,
    consistent: bool,
    relevant: Vec<CellRef>,
}

impl<'a> RepairEngine<'a> {
    pub fn new(instance: &'a Instance, set: &ConstraintSet, limits: Limits) -> Self {
        let encoder = Encoder::new(instance, set);
        let consistent = check(instance, set).is_consistent();
        let relevant = encoder.relevant_cells();
        RepairEngine { encoder, limits, consistent, relevant }
    }

    pub fn instance(&self) -> &'a Instance {
        self.encoder.instance()
    }

    pub fn encoder(&self) -> &Encoder<'a> {
        &self.encoder
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// Cells that occur in some ground constraint; no other cell can help.
    pub fn relevant_cells(&self) -> &[CellRef] {
        &self.relevant
    }

    /// Is there a repair touching only cells of `support`?
    pub fn feasible(&self, support: &Support) -> Feasibility {
        if self.consistent {
            return Feasibility::Feasible(UpdateSet::empty());
        }
        let encoding = self.encoder.encode(support);
        match encoding.search(&self.limits.search) {
            Search::Feasible(values) => Feasibility::Feasible(self.sample(encoding.cells(), &values)),
            Search::Infeasible => Feasibility::Infeasible,
            Search::Indeterminate(why) => Feasibility::Indeterminate(why),
        }
    }

    pub fn sample(&self, cells: &[CellRef], values: &[crate::rational::Rational]) -> UpdateSet {
        let instance = self.instance();
        let updates = changed_cells(instance, cells, values)
            .into_iter()
            .map(|(cell, q)| AtomicUpdate {
                cell,
                value: Value::from_rational(q, instance.cell_domain(cell)).expect("solver respects cell domains"),
            })
            .collect();
        validate_update_set(instance, updates).expect("solver output is a consistent update")
    }

    /// Decides whether any repair exists. The sample is shrunk greedily so
    /// that dropping any single cell of it leaves no repair.
    pub fn repair_exists(&self) -> Feasibility {
        let full: Support = self.relevant.iter().copied().collect();
        let mut sample = match self.feasible(&full) {
            Feasibility::Feasible(s) => s,
            other => return other,
        };
        let cells: Vec<CellRef> = sample.support().into_iter().collect();
        for cell in cells {
            let mut smaller = sample.support();
            if !smaller.remove(&cell) {
                continue;
            }
            if let Feasibility::Feasible(s) = self.feasible(&smaller) {
                sample = s;
            }
        }
        Feasibility::Feasible(sample)
    }

    fn level(&self, k: usize, skip: &[Support]) -> Vec<Support> {
        self.relevant
            .iter()
            .copied()
            .combinations(k)
            .map(|c| c.into_iter().collect::<Support>())
            .filter(|s| !skip.iter().any(|m| m.is_subset(s)))
            .collect()
    }

    /// All minimal feasible supports up to `limits.max_support` cells.
    pub fn minimal_supports(&self, semantics: Semantics) -> RepairReport {
        let mut report = RepairReport {
            semantics,
            kstar: None,
            supports: Vec::new(),
            limits: self.limits.clone(),
            relevant_cells: self.relevant.len(),
            indeterminate: Vec::new(),
            complete: true,
        };
        if self.consistent {
            report.kstar = Some(0);
            report.supports.push(MinimalSupport { support: Support::new(), sample: UpdateSet::empty() });
            return report;
        }
        let top = self.limits.max_support.min(self.relevant.len());
        // Known-minimal supports and undecided ones; supersets of either are
        // never minimal or never decidable.
        let mut blockers: Vec<Support> = Vec::new();
        for k in 1..=top {
            let candidates = self.level(k, &blockers);
            let results = exec::map(self.limits.mode, &candidates, |s| self.feasible(s));
            for (support, result) in candidates.into_iter().zip(results) {
                match result {
                    Feasibility::Feasible(sample) => {
                        blockers.push(support.clone());
                        report.supports.push(MinimalSupport { support, sample });
                    }
                    Feasibility::Infeasible => {}
                    Feasibility::Indeterminate(why) => {
                        blockers.push(support.clone());
                        report.indeterminate.push((support, why));
                    }
                }
            }
            if semantics == Semantics::Card && !report.supports.is_empty() {
                report.kstar = Some(k);
                break;
            }
        }
        report.complete = report.indeterminate.is_empty()
            && match semantics {
                Semantics::Card => report.kstar.is_some() || top == self.relevant.len(),
                Semantics::Set => top == self.relevant.len(),
            };
        report
    }

    /// Checks whether `updates` is a repair and whether it is minimal.
    pub fn check_repair(&self, updates: &UpdateSet, semantics: Semantics) -> RepairCheck {
        let instance = self.instance();
        let is_repair = check(&apply_update_set(instance, updates), self.encoder.set()).is_consistent();
        let mut out = RepairCheck { semantics, is_repair, is_minimal: Verdict::False, smaller: None };
        if !is_repair {
            return out;
        }
        let support = updates.support();
        if support.is_empty() {
            out.is_minimal = Verdict::True;
            return out;
        }
        let candidates: Vec<Support> = match semantics {
            Semantics::Set => support
                .iter()
                .map(|c| {
                    let mut s = support.clone();
                    s.remove(c);
                    s
                })
                .collect(),
            // Feasibility is monotone, so the largest smaller size decides.
            Semantics::Card => {
                let k = (support.len() - 1).min(self.relevant.len());
                self.level(k, &[])
            }
        };
        let results = exec::map(self.limits.mode, &candidates, |s| self.feasible(s));
        let mut undecided = None;
        for result in results {
            match result {
                Feasibility::Feasible(sample) => {
                    out.smaller = Some(sample);
                    return out;
                }
                Feasibility::Infeasible => {}
                Feasibility::Indeterminate(why) => {
                    undecided.get_or_insert(why);
                }
            }
        }
        out.is_minimal = match undecided {
            Some(why) => Verdict::Indeterminate(why),
            None => Verdict::True,
        };
        out
    }
}

/// Is there a repair touching only cells of `support`?
pub fn feasible(instance: &Instance, set: &ConstraintSet, support: &Support, limits: &Limits) -> Feasibility {
    RepairEngine::new(instance, set, limits.clone()).feasible(support)
}

pub fn repair_exists(instance: &Instance, set: &ConstraintSet, limits: &Limits) -> Feasibility {
    RepairEngine::new(instance, set, limits.clone()).repair_exists()
}

pub fn minimal_supports(
    instance: &Instance,
    set: &ConstraintSet,
    semantics: Semantics,
    limits: &Limits,
) -> RepairReport {
    RepairEngine::new(instance, set, limits.clone()).minimal_supports(semantics)
}

pub fn check_repair(
    instance: &Instance,
    set: &ConstraintSet,
    updates: &UpdateSet,
    semantics: Semantics,
    limits: &Limits,
) -> RepairCheck {
    RepairEngine::new(instance, set, limits.clone()).check_repair(updates, semantics)
}

/// Is `support` an antichain member of `family`, i.e. no other member is a
/// proper subset of it?
pub fn is_antichain(family: &[Support]) -> bool {
    let set: HashSet<&Support> = family.iter().collect();
    set.len() == family.len() && family.iter().all(|a| family.iter().all(|b| a == b || !b.is_subset(a)))
}
