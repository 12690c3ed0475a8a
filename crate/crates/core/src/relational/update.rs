use std::collections::BTreeSet;
use thiserror::Error;

use super::instance::{CellRef, Instance};
use super::schema::Domain;
use super::value::Value;

/// An atomic update `⟨t, A, v'⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicUpdate {
    pub cell: CellRef,
    pub value: Value,
}

/// A validated consistent database update: pairwise-distinct measure cells,
/// every new value different from the current one. Kept sorted by cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateSet {
    updates: Vec<AtomicUpdate>,
}

/// The set of cells an update set touches.
pub type Support = BTreeSet<CellRef>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UpdateError {
    #[error("not a consistent database update: cell {0} is updated more than once")]
    DuplicateCell(String),
    #[error("cell {0} does not exist")]
    UnknownCell(String),
    #[error("attribute of cell {0} is not a measure attribute")]
    NotMeasure(String),
    #[error("update of cell {cell} leaves the value unchanged ({value})")]
    Unchanged { cell: String, value: String },
    #[error("value {value} does not conform to the {domain} domain of cell {cell}")]
    Domain { cell: String, value: String, domain: Domain },
}

fn cell_name(instance: &Instance, cell: CellRef) -> String {
    let in_range = instance.schema().relations.get(cell.tuple.relation.0).is_some_and(|r| cell.attr < r.arity());
    if in_range {
        instance.display_cell(cell).to_string()
    } else {
        format!("#{}[{}].{}", cell.tuple.relation.0, cell.tuple.row, cell.attr)
    }
}

/// Checks the atomic-update and consistent-update conditions.
/// Numerical values are normalized to the cell's domain (an integral real
/// becomes an integer for integer cells).
pub fn validate_update_set(instance: &Instance, updates: Vec<AtomicUpdate>) -> Result<UpdateSet, UpdateError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(updates.len());
    for AtomicUpdate { cell, value } in updates {
        let Some(current) = instance.value(cell) else {
            return Err(UpdateError::UnknownCell(cell_name(instance, cell)));
        };
        if !instance.is_measure(cell) {
            return Err(UpdateError::NotMeasure(cell_name(instance, cell)));
        }
        if !seen.insert(cell) {
            return Err(UpdateError::DuplicateCell(cell_name(instance, cell)));
        }
        let domain = instance.cell_domain(cell);
        let value = value
            .as_rational()
            .and_then(|q| Value::from_rational(q, domain))
            .ok_or_else(|| UpdateError::Domain { cell: cell_name(instance, cell), value: value.to_string(), domain })?;
        if value.same(current) {
            return Err(UpdateError::Unchanged { cell: cell_name(instance, cell), value: value.to_string() });
        }
        out.push(AtomicUpdate { cell, value });
    }
    out.sort_by_key(|u| u.cell);
    Ok(UpdateSet { updates: out })
}

/// Returns `U(D)`; the input instance is left untouched.
pub fn apply_update_set(instance: &Instance, updates: &UpdateSet) -> Instance {
    let mut tables = instance.tables().to_vec();
    for u in &updates.updates {
        tables[u.cell.tuple.relation.0][u.cell.tuple.row][u.cell.attr] = u.value.clone();
    }
    instance.with_tables(tables)
}

impl UpdateSet {
    pub fn empty() -> Self {
        UpdateSet::default()
    }

    pub fn updates(&self) -> &[AtomicUpdate] {
        &self.updates
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    /// `λ(U)`.
    pub fn support(&self) -> Support {
        self.updates.iter().map(|u| u.cell).collect()
    }

    pub fn get(&self, cell: CellRef) -> Option<&Value> {
        self.updates.iter().find(|u| u.cell == cell).map(|u| &u.value)
    }

    pub fn to_json(&self, instance: &Instance) -> serde_json::Value {
        serde_json::Value::Array(
            self.updates
                .iter()
                .map(|u| {
                    serde_json::json!({
                        "cell": instance.cell_json(u.cell),
                        "old": instance.value(u.cell).map(Value::to_json),
                        "new": u.value.to_json(),
                    })
                })
                .collect(),
        )
    }
}
