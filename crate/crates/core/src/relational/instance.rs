use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use super::schema::{Domain, RelId, Schema, SchemaError};
use super::value::Value;

/// Tuple identity: relation plus 0-based row index in load order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TupleId {
    pub relation: RelId,
    pub row: usize,
}

/// A measure cell `⟨tuple, attribute⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellRef {
    pub tuple: TupleId,
    pub attr: usize,
}

impl CellRef {
    pub fn new(relation: RelId, row: usize, attr: usize) -> Self {
        CellRef { tuple: TupleId { relation, row }, attr }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("no table file for relation `{0}`")]
    MissingTable(String),
    #[error("table `{0}` does not correspond to any relation")]
    UnknownTable(String),
    #[error("relation `{relation}`: header {found:?} does not match schema attributes {expected:?}")]
    Header { relation: String, expected: Vec<String>, found: Vec<String> },
    #[error("relation `{relation}`, row {row}: expected {expected} fields, found {found}")]
    Arity { relation: String, row: usize, expected: usize, found: usize },
    #[error("relation `{relation}`, row {row}, column `{column}`: `{text}` is not a valid {domain} value")]
    Domain { relation: String, row: usize, column: String, text: String, domain: Domain },
    #[error("relation `{relation}`: malformed CSV: {message}")]
    Csv { relation: String, message: String },
}

/// An immutable relational instance. Rows keep their load order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    schema: Arc<Schema>,
    tables: Vec<Vec<Vec<Value>>>,
}

impl Instance {
    /// Builds an instance from in-memory rows, checking every value against its domain.
    pub fn new(schema: Arc<Schema>, tables: Vec<Vec<Vec<Value>>>) -> Result<Self, LoadError> {
        if tables.len() != schema.relations.len() {
            let missing = schema.relations.get(tables.len()).map(|r| r.name.clone()).unwrap_or_default();
            return Err(LoadError::MissingTable(missing));
        }
        for (rel, rows) in schema.relations.iter().zip(&tables) {
            for (r, row) in rows.iter().enumerate() {
                if row.len() != rel.arity() {
                    return Err(LoadError::Arity {
                        relation: rel.name.clone(),
                        row: r,
                        expected: rel.arity(),
                        found: row.len(),
                    });
                }
                for (value, attr) in row.iter().zip(&rel.attributes) {
                    if !value.conforms_to(attr.domain) {
                        return Err(LoadError::Domain {
                            relation: rel.name.clone(),
                            row: r,
                            column: attr.name.clone(),
                            text: value.to_string(),
                            domain: attr.domain,
                        });
                    }
                }
            }
        }
        Ok(Instance { schema, tables })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn rows(&self, rel: RelId) -> &[Vec<Value>] {
        &self.tables[rel.0]
    }

    pub fn tuple(&self, id: TupleId) -> Option<&[Value]> {
        self.tables.get(id.relation.0)?.get(id.row).map(Vec::as_slice)
    }

    pub fn value(&self, cell: CellRef) -> Option<&Value> {
        self.tuple(cell.tuple)?.get(cell.attr)
    }

    pub fn tuple_count(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    /// All measure cells in (relation, row, attribute) order.
    pub fn measure_cells(&self) -> Vec<CellRef> {
        let mut cells = Vec::new();
        for (r, rel) in self.schema.relations.iter().enumerate() {
            let measures: Vec<usize> = rel.measure_indices().collect();
            for row in 0..self.tables[r].len() {
                for &attr in &measures {
                    cells.push(CellRef::new(RelId(r), row, attr));
                }
            }
        }
        cells
    }

    pub fn is_measure(&self, cell: CellRef) -> bool {
        self.schema
            .relations
            .get(cell.tuple.relation.0)
            .and_then(|r| r.attributes.get(cell.attr))
            .is_some_and(|a| a.measure)
    }

    pub fn cell_domain(&self, cell: CellRef) -> Domain {
        self.schema.rel(cell.tuple.relation).attributes[cell.attr].domain
    }

    pub(crate) fn with_tables(&self, tables: Vec<Vec<Vec<Value>>>) -> Instance {
        Instance { schema: Arc::clone(&self.schema), tables }
    }

    pub(crate) fn tables(&self) -> &[Vec<Vec<Value>>] {
        &self.tables
    }

    pub fn display_cell(&self, cell: CellRef) -> CellDisplay<'_> {
        CellDisplay { schema: &self.schema, cell }
    }

    pub fn cell_json(&self, cell: CellRef) -> serde_json::Value {
        let rel = self.schema.rel(cell.tuple.relation);
        serde_json::json!({
            "relation": rel.name,
            "row": cell.tuple.row,
            "attr": rel.attributes[cell.attr].name,
        })
    }

    /// Serializes one relation back to CSV (header plus rows).
    pub fn to_csv(&self, rel: RelId) -> String {
        let schema = self.schema.rel(rel);
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer.write_record(schema.attributes.iter().map(|a| a.name.as_str())).expect("in-memory write");
        for row in &self.tables[rel.0] {
            writer.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

pub struct CellDisplay<'a> {
    schema: &'a Schema,
    cell: CellRef,
}

impl fmt::Display for CellDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = self.schema.rel(self.cell.tuple.relation);
        write!(f, "{}[{}].{}", rel.name, self.cell.tuple.row, rel.attributes[self.cell.attr].name)
    }
}

/// Loads an instance from schema text plus one CSV text per relation, keyed by relation name.
pub fn load_instance(schema_text: &str, tables: &BTreeMap<String, String>) -> Result<Instance, LoadError> {
    let schema = Arc::new(Schema::parse(schema_text)?);
    load_tables(schema, tables)
}

pub fn load_tables(schema: Arc<Schema>, tables: &BTreeMap<String, String>) -> Result<Instance, LoadError> {
    if let Some(name) = tables.keys().find(|name| schema.relation(name).is_none()) {
        return Err(LoadError::UnknownTable(name.clone()));
    }
    let mut data = Vec::with_capacity(schema.relations.len());
    for rel in &schema.relations {
        let text = tables.get(&rel.name).ok_or_else(|| LoadError::MissingTable(rel.name.clone()))?;
        let csv_err = |e: csv::Error| LoadError::Csv { relation: rel.name.clone(), message: e.to_string() };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let expected: Vec<String> = rel.attributes.iter().map(|a| a.name.clone()).collect();
        if header != expected {
            return Err(LoadError::Header { relation: rel.name.clone(), expected, found: header });
        }
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != rel.arity() {
                return Err(LoadError::Arity {
                    relation: rel.name.clone(),
                    row: r,
                    expected: rel.arity(),
                    found: record.len(),
                });
            }
            let mut row = Vec::with_capacity(rel.arity());
            for (field, attr) in record.iter().zip(&rel.attributes) {
                let value = Value::parse_in(field, attr.domain).ok_or_else(|| LoadError::Domain {
                    relation: rel.name.clone(),
                    row: r,
                    column: attr.name.clone(),
                    text: field.to_string(),
                    domain: attr.domain,
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        data.push(rows);
    }
    Instance::new(schema, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = "relation R(K: string, G: int, V: int measure, W: real measure)";

    fn tables(csv: &str) -> BTreeMap<String, String> {
        BTreeMap::from([("R".to_string(), csv.to_string())])
    }

    #[test]
    fn loads_rows_in_file_order() {
        let inst = load_instance(SCHEMA, &tables("K,G,V,W\n\"a, b\",1,5,1/2\nc,2,-3,0.25\n")).unwrap();
        let rows = inst.rows(RelId(0));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][0], Value::str("a, b"));
        assert_eq!(rows[1][2], Value::int(-3));
        assert_eq!(inst.measure_cells().len(), 4);
    }

    #[test]
    fn empty_table_with_header_has_no_rows() {
        let inst = load_instance(SCHEMA, &tables("K,G,V,W\n")).unwrap();
        assert_eq!(inst.rows(RelId(0)).len(), 0);
    }

    #[test]
    fn non_numeric_integer_field_names_the_cell() {
        let err = load_instance(SCHEMA, &tables("K,G,V,W\na,1,5,1\nb,2,abc,1\n")).unwrap_err();
        assert_eq!(
            err,
            LoadError::Domain {
                relation: "R".into(),
                row: 1,
                column: "V".into(),
                text: "abc".into(),
                domain: Domain::Integer
            }
        );
    }

    #[test]
    fn missing_table_is_an_error() {
        let err = load_instance(SCHEMA, &BTreeMap::new()).unwrap_err();
        assert_eq!(err, LoadError::MissingTable("R".into()));
    }

    #[test]
    fn header_must_match_schema_order() {
        let err = load_instance(SCHEMA, &tables("G,K,V,W\n")).unwrap_err();
        assert!(matches!(err, LoadError::Header { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let inst = load_instance(SCHEMA, &tables("K,G,V,W\n\"a, b\",1,5,1/2\n")).unwrap();
        let again = load_instance(SCHEMA, &tables(&inst.to_csv(RelId(0)))).unwrap();
        assert_eq!(inst, again);
    }
}
