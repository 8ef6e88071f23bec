use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDiff {
    pub path: String,
    pub a: String,
    pub b: String,
    /// Relative difference for numeric fields.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub compared: usize,
    pub max_relative: f64,
    pub diffs: Vec<FieldDiff>,
}

impl Comparison {
    pub fn is_clean(&self) -> bool {
        self.diffs.is_empty()
    }
}

pub fn load_report(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::MalformedReport { path: path.to_path_buf(), source })
}

pub fn compare_files(a: &Path, b: &Path, rtol: f64) -> Result<Comparison, CliError> {
    compare_reports(&load_report(a)?, &load_report(b)?, rtol)
}

/// Field-by-field comparison; numbers differ when their relative difference
/// exceeds `rtol`, anything else when unequal.
pub fn compare_reports(a: &Value, b: &Value, rtol: f64) -> Result<Comparison, CliError> {
    let va = a.get("schema_version");
    let vb = b.get("schema_version");
    match (va, vb) {
        (Some(x), Some(y)) if x == y => {}
        _ => {
            return Err(CliError::SchemaMismatch(format!(
                "schema_version {} vs {}",
                va.map(Value::to_string).unwrap_or_else(|| "missing".into()),
                vb.map(Value::to_string).unwrap_or_else(|| "missing".into())
            )))
        }
    }
    let mut cmp = Comparison { compared: 0, max_relative: 0.0, diffs: Vec::new() };
    walk(&mut cmp, "", a, b, rtol);
    Ok(cmp)
}

fn short(v: &Value) -> String {
    match v {
        Value::Object(_) => "{…}".into(),
        Value::Array(a) => format!("[{} items]", a.len()),
        other => other.to_string(),
    }
}

fn walk(cmp: &mut Comparison, path: &str, a: &Value, b: &Value, rtol: f64) {
    let child = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let mut keys: Vec<&String> = ma.keys().chain(mb.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                match (ma.get(k), mb.get(k)) {
                    (Some(x), Some(y)) => walk(cmp, &child(k), x, y, rtol),
                    (x, y) => cmp.diffs.push(FieldDiff {
                        path: child(k),
                        a: x.map(short).unwrap_or_else(|| "missing".into()),
                        b: y.map(short).unwrap_or_else(|| "missing".into()),
                        relative: None,
                    }),
                }
            }
        }
        (Value::Array(xa), Value::Array(xb)) if xa.len() == xb.len() => {
            for (i, (x, y)) in xa.iter().zip(xb).enumerate() {
                walk(cmp, &format!("{path}[{i}]"), x, y, rtol);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            cmp.compared += 1;
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let scale = x.abs().max(y.abs());
            let rel = if x == y { 0.0 } else { (x - y).abs() / scale };
            cmp.max_relative = cmp.max_relative.max(rel);
            if rel.is_nan() || rel > rtol {
                cmp.diffs.push(FieldDiff {
                    path: path.into(),
                    a: x.to_string(),
                    b: y.to_string(),
                    relative: Some(rel),
                });
            }
        }
        (x, y) => {
            cmp.compared += 1;
            if x != y {
                cmp.diffs.push(FieldDiff { path: path.into(), a: short(x), b: short(y), relative: None });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn identical_reports_are_clean() {
        let r = json!({"schema_version": 1, "id": "a", "x": [1.0, 2.0], "y": {"z": "s"}});
        let c = compare_reports(&r, &r, 0.0).unwrap();
        assert!(c.is_clean());
        assert_eq!(c.compared, 5);
    }

    #[test]
    fn differences_are_located() {
        let a = json!({"schema_version": 1, "id": "a", "x": [1.0, 2.0]});
        let b = json!({"schema_version": 1, "id": "b", "x": [1.0, 2.2], "extra": true});
        let c = compare_reports(&a, &b, 1e-3).unwrap();
        let paths: Vec<&str> = c.diffs.iter().map(|d| d.path.as_str()).collect();
        assert_eq!(paths, ["extra", "id", "x[1]"]);
        assert!((c.diffs[2].relative.unwrap() - 0.2 / 2.2).abs() < 1e-12);
        assert!(compare_reports(&a, &b, 0.1).unwrap().diffs.len() == 2);
    }

    #[test]
    fn schema_versions_must_match() {
        let a = json!({"schema_version": 1});
        let b = json!({"schema_version": 2});
        assert!(matches!(compare_reports(&a, &b, 0.0), Err(CliError::SchemaMismatch(_))));
        assert!(matches!(compare_reports(&a, &json!({}), 0.0), Err(CliError::SchemaMismatch(_))));
    }
}
