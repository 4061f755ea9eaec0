//! Nucleus class files.
//!
//! The canonical form is a JSON array of `[label, "class"]` pairs sorted
//! by label. Readers also accept an object map `{"label": "class"}` and
//! arrays of record objects carrying `label` and `class` fields (the
//! nuclei.json emitted by postprocessing), so outputs feed straight back
//! into evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use histoseg_core::bundle::{FinalClass, NucleusClass};

use crate::cjson;
use crate::errors::{CmdError, CmdResult};

fn parse_pairs(path: &Path, value: &Value) -> CmdResult<Vec<(u32, String)>> {
    let bad = |what: &str| CmdError::Data(format!("{}: {what}", path.display()));
    let mut pairs = Vec::new();
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                let label: u32 = key
                    .parse()
                    .map_err(|_| bad("object keys must be numeric labels"))?;
                let class = v
                    .as_str()
                    .ok_or_else(|| bad("class values must be strings"))?;
                pairs.push((label, class.to_string()));
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Array(pair) if pair.len() == 2 => {
                        let label = pair[0]
                            .as_u64()
                            .ok_or_else(|| bad("pair labels must be non-negative integers"))?;
                        let class = pair[1]
                            .as_str()
                            .ok_or_else(|| bad("pair classes must be strings"))?;
                        pairs.push((label as u32, class.to_string()));
                    }
                    Value::Object(record) => {
                        let label = record
                            .get("label")
                            .and_then(Value::as_u64)
                            .ok_or_else(|| bad("records need an integer 'label'"))?;
                        let class = record
                            .get("class")
                            .and_then(Value::as_str)
                            .ok_or_else(|| bad("records need a string 'class'"))?;
                        pairs.push((label as u32, class.to_string()));
                    }
                    _ => return Err(bad("array entries must be [label, class] or records")),
                }
            }
        }
        _ => return Err(bad("expected a JSON object or array")),
    }
    Ok(pairs)
}

fn read_class_file(path: &Path) -> CmdResult<Vec<(u32, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CmdError::io(path.display(), e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CmdError::io(path.display(), e))?;
    parse_pairs(path, &value)
}

/// Two-way classes used by target encoding: other | epithelial.
pub fn read_nucleus_classes(path: &Path) -> CmdResult<BTreeMap<u32, NucleusClass>> {
    let mut out = BTreeMap::new();
    for (label, name) in read_class_file(path)? {
        let class = match name.as_str() {
            "other" => NucleusClass::Other,
            "epithelial" => NucleusClass::Epithelial,
            _ => {
                return Err(CmdError::Data(format!(
                    "{}: unknown nucleus class '{name}' (expected other|epithelial)",
                    path.display()
                )))
            }
        };
        out.insert(label, class);
    }
    Ok(out)
}

/// Final fused classes used by evaluation: other | basal | epithelium | keratin.
pub fn read_final_classes(path: &Path) -> CmdResult<BTreeMap<u32, FinalClass>> {
    let mut out = BTreeMap::new();
    for (label, name) in read_class_file(path)? {
        let class = match name.as_str() {
            "other" => FinalClass::Other,
            "basal" => FinalClass::Basal,
            "epithelium" => FinalClass::Epithelium,
            "keratin" => FinalClass::Keratin,
            _ => {
                return Err(CmdError::Data(format!(
                    "{}: unknown final class '{name}' (expected other|basal|epithelium|keratin)",
                    path.display()
                )))
            }
        };
        out.insert(label, class);
    }
    Ok(out)
}

pub fn write_nucleus_classes(path: &Path, classes: &BTreeMap<u32, NucleusClass>) -> CmdResult<()> {
    let pairs: Vec<Value> = classes
        .iter()
        .map(|(&label, &class)| {
            let name = match class {
                NucleusClass::Other => "other",
                NucleusClass::Epithelial => "epithelial",
            };
            Value::Array(vec![Value::from(label), Value::from(name)])
        })
        .collect();
    let text = cjson::to_canonical_string(&Value::Array(pairs));
    fs::write(path, text).map_err(|e| CmdError::io(path.display(), e))
}
