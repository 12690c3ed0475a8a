//! Attribute-level repairs of numerical databases under linear aggregate
//! constraints, and consistent answers to ground-atom queries.
//!
//! Load a project with [`project::Project::load`], check it with
//! [`eval::check`], then ask a [`repair::RepairEngine`] for minimal repair
//! supports, verdicts on proposed repairs, or (through [`cqa::cqa_with`])
//! whether a tuple survives every minimal repair.

pub mod circuit;
pub mod constraint;
pub mod cqa;
pub mod encode;
pub mod eval;
pub mod exec;
pub mod linear;
pub mod project;
pub mod rational;
pub mod relational;
pub mod repair;
pub mod solver;
