use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Integer,
    Real,
    String,
}

impl Domain {
    pub fn is_numeric(self) -> bool {
        !matches!(self, Domain::String)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Integer => "int",
            Domain::Real => "real",
            Domain::String => "string",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Domain,
    pub measure: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl RelationSchema {
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn measure_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.attributes.iter().enumerate().filter(|(_, a)| a.measure).map(|(i, _)| i)
    }
}

/// Position of a relation inside its [`Schema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RelId(pub usize);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Schema {
    pub relations: Vec<RelationSchema>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("relation `{relation}`: duplicate attribute `{attribute}`")]
    DuplicateAttribute { relation: String, attribute: String },
    #[error("relation `{relation}`: measure attribute `{attribute}` must be int or real")]
    NonNumericMeasure { relation: String, attribute: String },
}

impl Schema {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self, SchemaError> {
        for (i, rel) in relations.iter().enumerate() {
            if relations[..i].iter().any(|r| r.name == rel.name) {
                return Err(SchemaError::DuplicateRelation(rel.name.clone()));
            }
            for (j, attr) in rel.attributes.iter().enumerate() {
                if rel.attributes[..j].iter().any(|a| a.name == attr.name) {
                    return Err(SchemaError::DuplicateAttribute {
                        relation: rel.name.clone(),
                        attribute: attr.name.clone(),
                    });
                }
                if attr.measure && !attr.domain.is_numeric() {
                    return Err(SchemaError::NonNumericMeasure {
                        relation: rel.name.clone(),
                        attribute: attr.name.clone(),
                    });
                }
            }
        }
        Ok(Schema { relations })
    }

    /// Parses the schema file format:
    ///
    /// ```text
    /// # comment
    /// relation CashBudget(Year: int, Section: string, Value: int measure)
    /// ```
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut relations = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: &str| SchemaError::Syntax { line, message: message.to_string() };
            let rest = content
                .strip_prefix("relation")
                .filter(|r| r.starts_with(char::is_whitespace))
                .ok_or_else(|| err("expected `relation NAME(...)`"))?
                .trim_start();
            let open = rest.find('(').ok_or_else(|| err("missing `(`"))?;
            let name = rest[..open].trim();
            if !is_identifier(name) {
                return Err(err(&format!("invalid relation name `{name}`")));
            }
            let body = rest[open + 1..].trim_end();
            let body = body.strip_suffix(')').ok_or_else(|| err("missing closing `)`"))?;
            let mut attributes = Vec::new();
            for part in body.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    return Err(err("empty attribute declaration"));
                }
                let (attr_name, decl) =
                    part.split_once(':').ok_or_else(|| err(&format!("attribute `{part}` needs `name: domain`")))?;
                let attr_name = attr_name.trim();
                if !is_identifier(attr_name) {
                    return Err(err(&format!("invalid attribute name `{attr_name}`")));
                }
                let mut words = decl.split_whitespace();
                let domain = match words.next() {
                    Some("int") | Some("integer") => Domain::Integer,
                    Some("real") => Domain::Real,
                    Some("string") => Domain::String,
                    other => {
                        return Err(err(&format!("unknown domain `{}`", other.unwrap_or(""))));
                    }
                };
                let measure = match words.next() {
                    None => false,
                    Some("measure") => true,
                    Some(w) => return Err(err(&format!("unexpected `{w}` after domain"))),
                };
                if let Some(w) = words.next() {
                    return Err(err(&format!("unexpected `{w}`")));
                }
                attributes.push(Attribute { name: attr_name.to_string(), domain, measure });
            }
            relations.push(RelationSchema { name: name.to_string(), attributes });
        }
        Schema::new(relations)
    }

    pub fn relation(&self, name: &str) -> Option<(RelId, &RelationSchema)> {
        self.relations.iter().position(|r| r.name == name).map(|i| (RelId(i), &self.relations[i]))
    }

    pub fn rel(&self, id: RelId) -> &RelationSchema {
        &self.relations[id.0]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for rel in &self.relations {
            let attrs: Vec<String> = rel
                .attributes
                .iter()
                .map(|a| {
                    if a.measure {
                        format!("{}: {} measure", a.name, a.domain)
                    } else {
                        format!("{}: {}", a.name, a.domain)
                    }
                })
                .collect();
            out.push_str(&format!("relation {}({})\n", rel.name, attrs.join(", ")));
        }
        out
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    s != "_" && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
