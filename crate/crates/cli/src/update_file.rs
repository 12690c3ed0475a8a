//! Proposed repairs read from JSON: a list of
//! `{"relation", "row", "attribute", "value"}` objects, rows counted from 0.

use numrepair::relational::{validate_update_set, AtomicUpdate, CellRef, Instance, UpdateError, UpdateSet, Value};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    relation: String,
    row: usize,
    #[serde(alias = "attr")]
    attribute: String,
    value: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum UpdateFileError {
    #[error("malformed repair file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("entry {index}: unknown relation {name}")]
    Relation { index: usize, name: String },
    #[error("entry {index}: relation {relation} has no attribute {name}")]
    Attribute { index: usize, relation: String, name: String },
    #[error("entry {index}: {value} is not a {domain} value")]
    Value { index: usize, value: String, domain: String },
    #[error(transparent)]
    Update(#[from] UpdateError),
}

pub fn parse_update_file(text: &str, instance: &Instance) -> Result<UpdateSet, UpdateFileError> {
    let entries: Vec<Entry> = serde_json::from_str(text)?;
    let schema = instance.schema();
    let mut updates = Vec::with_capacity(entries.len());
    for (index, e) in entries.into_iter().enumerate() {
        let (rel, rs) = schema
            .relation(&e.relation)
            .ok_or_else(|| UpdateFileError::Relation { index, name: e.relation.clone() })?;
        let attr = rs.attribute_index(&e.attribute).ok_or_else(|| UpdateFileError::Attribute {
            index,
            relation: e.relation.clone(),
            name: e.attribute.clone(),
        })?;
        let domain = rs.attributes[attr].domain;
        let text = match &e.value {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let value = Value::parse_in(&text, domain).ok_or_else(|| UpdateFileError::Value {
            index,
            value: text.clone(),
            domain: domain.to_string(),
        })?;
        updates.push(AtomicUpdate { cell: CellRef::new(rel, e.row, attr), value });
    }
    Ok(validate_update_set(instance, updates)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use numrepair::relational::load_instance;
    use std::collections::BTreeMap;

    fn instance() -> Instance {
        let tables = BTreeMap::from([("R".to_string(), "K,V,W\na,1,1/2\nb,2,3\n".to_string())]);
        load_instance("relation R(K: string, V: int measure, W: real measure)", &tables).unwrap()
    }

    #[test]
    fn reads_numbers_and_strings() {
        let u = parse_update_file(
            r#"[{"relation":"R","row":1,"attribute":"V","value":5},
                {"relation":"R","row":0,"attr":"W","value":"3/4"}]"#,
            &instance(),
        )
        .unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u.get(CellRef::new(numrepair::relational::RelId(0), 1, 1)), Some(&Value::int(5)));
    }

    #[test]
    fn rejects_bad_entries() {
        let inst = instance();
        let one = |body: &str| parse_update_file(&format!("[{body}]"), &inst).unwrap_err();
        assert!(matches!(
            one(r#"{"relation":"S","row":0,"attribute":"V","value":1}"#),
            UpdateFileError::Relation { .. }
        ));
        assert!(matches!(
            one(r#"{"relation":"R","row":0,"attribute":"X","value":1}"#),
            UpdateFileError::Attribute { .. }
        ));
        assert!(matches!(
            one(r#"{"relation":"R","row":0,"attribute":"V","value":1.5}"#),
            UpdateFileError::Value { .. }
        ));
        assert!(matches!(one(r#"{"relation":"R","row":0,"attribute":"K","value":"z"}"#), UpdateFileError::Update(_)));
        assert!(matches!(one(r#"{"relation":"R","row":0,"attribute":"V","value":1}"#), UpdateFileError::Update(_)));
        assert!(matches!(one(r#"{"relation":"R","row":0}"#), UpdateFileError::Json(_)));
    }
}
