//! Project directories: `schema.txt`, `constraints.txt`, one `<Relation>.csv`
//! per relation and an optional `config.toml` with search limits.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{parse_constraints, ConstraintSet, ParseError};
use crate::relational::{load_tables, Instance, LoadError, RelId, Schema, SchemaError};
use crate::repair::Limits;

pub const SCHEMA_FILE: &str = "schema.txt";
pub const CONSTRAINTS_FILE: &str = "constraints.txt";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: LoadError },
    #[error("{path}:{}:{}: {}", .source.line, .source.column, .source.message)]
    Constraints { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: toml::de::Error },
}

/// Optional overrides of the default search limits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub max_support: Option<usize>,
    pub max_branches: Option<usize>,
    pub node_limit: Option<usize>,
    pub box_multiplier: Option<u32>,
}

impl Config {
    pub fn apply(&self, limits: &mut Limits) {
        if let Some(v) = self.max_support {
            limits.max_support = v;
        }
        if let Some(v) = self.max_branches {
            limits.search.max_branches = v;
        }
        if let Some(v) = self.node_limit {
            limits.search.solve.node_limit = v;
        }
        if let Some(v) = self.box_multiplier {
            limits.search.solve.box_multiplier = v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Project {
    pub instance: Instance,
    pub constraints: ConstraintSet,
    pub constraints_text: String,
    pub config: Config,
}

fn read(path: &Path) -> Result<String, ProjectError> {
    fs::read_to_string(path).map_err(|source| ProjectError::Io { path: path.to_path_buf(), source })
}

impl Project {
    pub fn load(dir: &Path) -> Result<Self, ProjectError> {
        let schema_path = dir.join(SCHEMA_FILE);
        let schema =
            Schema::parse(&read(&schema_path)?).map_err(|source| ProjectError::Schema { path: schema_path, source })?;
        let mut tables = BTreeMap::new();
        for rel in &schema.relations {
            let path = dir.join(format!("{}.csv", rel.name));
            tables.insert(rel.name.clone(), read(&path)?);
        }
        let instance = load_tables(schema.into(), &tables)
            .map_err(|source| ProjectError::Data { path: dir.to_path_buf(), source })?;
        let constraints_path = dir.join(CONSTRAINTS_FILE);
        let constraints_text = read(&constraints_path)?;
        let constraints = parse_constraints(&constraints_text, instance.schema())
            .map_err(|source| ProjectError::Constraints { path: constraints_path, source })?;
        let config_path = dir.join(CONFIG_FILE);
        let config = if config_path.exists() {
            toml::from_str(&read(&config_path)?).map_err(|source| ProjectError::Config { path: config_path, source })?
        } else {
            Config::default()
        };
        Ok(Project { instance, constraints, constraints_text, config })
    }

    /// Writes the project so that [`Project::load`] reads it back unchanged.
    pub fn write(&self, dir: &Path) -> Result<(), ProjectError> {
        let io = |path: PathBuf| move |source| ProjectError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let schema = self.instance.schema();
        let path = dir.join(SCHEMA_FILE);
        fs::write(&path, schema.render()).map_err(io(path))?;
        for (i, rel) in schema.relations.iter().enumerate() {
            let path = dir.join(format!("{}.csv", rel.name));
            fs::write(&path, self.instance.to_csv(RelId(i))).map_err(io(path))?;
        }
        let path = dir.join(CONSTRAINTS_FILE);
        fs::write(&path, &self.constraints_text).map_err(io(path))?;
        if self.config != Config::default() {
            let path = dir.join(CONFIG_FILE);
            let text = toml::to_string(&self.config).expect("config serializes");
            fs::write(&path, text).map_err(io(path))?;
        }
        Ok(())
    }

    pub fn limits(&self) -> Limits {
        let mut limits = Limits::default();
        self.config.apply(&mut limits);
        limits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{encode_circuit, gen_circuit, CIRCUIT_CONSTRAINTS};

    fn fixture_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/cash_budget")
    }

    #[test]
    fn loads_fixture() {
        let p = Project::load(&fixture_dir()).unwrap();
        assert_eq!(p.instance.tuple_count(), 20);
        assert_eq!(p.constraints.constraints.len(), 3);
        assert_eq!(p.limits(), Limits::default());
    }

    #[test]
    fn round_trips_through_a_directory() {
        let (instance, constraints) = encode_circuit(&gen_circuit(3, 2, 5).unwrap());
        let project = Project {
            instance,
            constraints,
            constraints_text: CIRCUIT_CONSTRAINTS.to_string(),
            config: Config { max_support: Some(2), ..Config::default() },
        };
        let dir = tempfile::tempdir().unwrap();
        project.write(dir.path()).unwrap();
        let back = Project::load(dir.path()).unwrap();
        assert_eq!(back.instance, project.instance);
        assert_eq!(back.constraints, project.constraints);
        assert_eq!(back.limits().max_support, 2);
    }

    #[test]
    fn missing_table_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::copy(fixture_dir().join(SCHEMA_FILE), dir.path().join(SCHEMA_FILE)).unwrap();
        fs::copy(fixture_dir().join(CONSTRAINTS_FILE), dir.path().join(CONSTRAINTS_FILE)).unwrap();
        let err = Project::load(dir.path()).unwrap_err();
        assert!(matches!(err, ProjectError::Io { ref path, .. } if path.ends_with("CashBudget.csv")), "{err}");
    }

    #[test]
    fn bad_config_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        for f in [SCHEMA_FILE, CONSTRAINTS_FILE, "CashBudget.csv"] {
            fs::copy(fixture_dir().join(f), dir.path().join(f)).unwrap();
        }
        fs::write(dir.path().join(CONFIG_FILE), "max_suport = 3\n").unwrap();
        assert!(matches!(Project::load(dir.path()), Err(ProjectError::Config { .. })));
    }
}
