//! Model documents: a zoo entry with parameters or an explicit law table.
//!
//! ```json
//! {"zoo": "example2", "params": {"a": 0.1667, "c": 0.875, "d": 2.0}}
//! {"first_type": 1, "tail": "repeat_last",
//!  "laws": [[{"prob": 0.25, "offspring": {}}, {"prob": 0.75, "offspring": {"1": 2}}]]}
//! ```
//!
//! The same zoo entry can be written `zoo:example2?a=0.1667&c=0.875&d=2`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::progeny::{ProgenyModel, SparseOffspring, TableModel, TailRule, TypeIndex, TypeLaw};
use crate::zoo::{Example1, Example2, Example3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    pub prob: f64,
    /// Child type (as a string key) to count.
    #[serde(default)]
    pub offspring: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelDoc {
    Zoo {
        zoo: String,
        params: BTreeMap<String, f64>,
    },
    Table {
        first_type: TypeIndex,
        tail: TailRule,
        laws: Vec<Vec<EventDoc>>,
    },
}

fn default_first() -> TypeIndex {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZooDoc {
    zoo: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    #[serde(default = "default_first")]
    first_type: TypeIndex,
    tail: TailRule,
    laws: Vec<Vec<EventDoc>>,
}

fn child_type(key: &str) -> Result<TypeIndex, ModelError> {
    key.trim()
        .parse()
        .map_err(|_| ModelError::Parse(format!("offspring key `{key}` is not a type index")))
}

fn param(params: &BTreeMap<String, f64>, entry: &str, name: &str) -> Result<f64, ModelError> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| ModelError::Parse(format!("{entry} needs parameter `{name}`")))
}

fn check_known(
    params: &BTreeMap<String, f64>,
    entry: &str,
    known: &[&str],
) -> Result<(), ModelError> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(ModelError::Parse(format!(
            "{entry} has no parameter `{k}` (expected {known:?})"
        ))),
        None => Ok(()),
    }
}

impl ModelDoc {
    pub fn zoo(name: &str, params: &[(&str, f64)]) -> Self {
        ModelDoc::Zoo {
            zoo: name.to_string(),
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ProgenyModel>, ModelError> {
        match self {
            ModelDoc::Zoo { zoo, params } => {
                let p = |n| param(params, zoo, n);
                match zoo.as_str() {
                    "example1" => {
                        check_known(params, zoo, &["a", "b"])?;
                        Ok(Arc::new(Example1::new(p("a")?, p("b")?)?))
                    }
                    "example2" => {
                        check_known(params, zoo, &["a", "c", "d"])?;
                        Ok(Arc::new(Example2::new(p("a")?, p("c")?, p("d")?)?))
                    }
                    "example3" => {
                        check_known(params, zoo, &["p", "eps"])?;
                        Ok(Arc::new(Example3::new(p("p")?, p("eps")?)?))
                    }
                    other => Err(ModelError::Parse(format!(
                        "unknown zoo entry `{other}` (expected example1, example2 or example3)"
                    ))),
                }
            }
            ModelDoc::Table {
                first_type,
                tail,
                laws,
            } => {
                let laws = laws
                    .iter()
                    .map(|events| {
                        TypeLaw::new(
                            events
                                .iter()
                                .map(|e| Ok((e.prob, offspring_of(e)?)))
                                .collect::<Result<Vec<_>, ModelError>>()?,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Arc::new(TableModel::new(*first_type, laws, *tail)?))
            }
        }
    }
}

fn offspring_of(e: &EventDoc) -> Result<SparseOffspring, ModelError> {
    let pairs = e
        .offspring
        .iter()
        .map(|(t, &n)| Ok((child_type(t)?, n)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    SparseOffspring::new(pairs)
}

/// Parses `zoo:<name>?k=v&k=v`.
pub fn parse_zoo_uri(uri: &str) -> Result<ModelDoc, ModelError> {
    let rest = uri
        .strip_prefix("zoo:")
        .ok_or_else(|| ModelError::Parse(format!("`{uri}` is not a zoo URI")))?;
    let (name, query) = rest.split_once('?').unwrap_or((rest, ""));
    let mut params = BTreeMap::new();
    for pair in query.split('&').filter(|s| !s.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ModelError::Parse(format!("parameter `{pair}` is not key=value")))?;
        let v = parse_number(v)?;
        if params.insert(k.to_string(), v).is_some() {
            return Err(ModelError::Parse(format!("parameter `{k}` given twice")));
        }
    }
    Ok(ModelDoc::Zoo {
        zoo: name.to_string(),
        params,
    })
}

/// A decimal number or a fraction `p/q`.
fn parse_number(s: &str) -> Result<f64, ModelError> {
    let bad = || ModelError::Parse(format!("`{s}` is not a number"));
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            p / q
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// A document with a `zoo` key is a zoo entry, anything else a table.
pub fn parse_model_json(text: &str) -> Result<ModelDoc, ModelError> {
    let err = |e: serde_json::Error| ModelError::Parse(format!("model JSON: {e}"));
    let value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
    if value.get("zoo").is_some() {
        let d: ZooDoc = serde_json::from_value(value).map_err(err)?;
        Ok(ModelDoc::Zoo {
            zoo: d.zoo,
            params: d.params,
        })
    } else {
        let d: TableDoc = serde_json::from_value(value).map_err(err)?;
        Ok(ModelDoc::Table {
            first_type: d.first_type,
            tail: d.tail,
            laws: d.laws,
        })
    }
}

/// Resolves a model source: a zoo URI, inline JSON, or a path to a JSON file.
pub fn load_model_doc(source: &str) -> Result<ModelDoc, ModelError> {
    let trimmed = source.trim_start();
    if trimmed.starts_with("zoo:") {
        return parse_zoo_uri(trimmed);
    }
    if trimmed.starts_with('{') {
        return parse_model_json(trimmed);
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path).map_err(|e| {
        ModelError::Parse(format!("cannot read model file {}: {e}", path.display()))
    })?;
    parse_model_json(&text)
}

pub fn load_model(source: &str) -> Result<Arc<dyn ProgenyModel>, ModelError> {
    load_model_doc(source)?.build()
}
