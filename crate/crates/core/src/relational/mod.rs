//! Typed relational instances, tuple identity and attribute-level updates.

mod instance;
mod schema;
mod update;
mod value;

pub use instance::{load_instance, load_tables, CellDisplay, CellRef, Instance, LoadError, TupleId};
pub use schema::{Attribute, Domain, RelId, RelationSchema, Schema, SchemaError};
pub use update::{apply_update_set, validate_update_set, AtomicUpdate, Support, UpdateError, UpdateSet};
pub use value::Value;
