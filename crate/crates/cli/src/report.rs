use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Fixed 17-significant-digit rendering shared by the JSON and CSV outputs.
pub fn fmt_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

/// Pretty JSON with sorted keys and every float in [`fmt_number`] form.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    let pad = |d: usize| "  ".repeat(d);
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt_number(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

/// Converts a serializable value, mapping nonfinite floats to `null`.
pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value >= bound }
    }

    pub fn holds(name: impl Into<String>, passed: bool) -> Self {
        let v = if passed { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, bound: 1.0, passed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Inconclusive => 2,
            Status::Fail => 1,
        }
    }
}

/// Rows of a per-task CSV dump.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(CliError::io(path))?;
        Ok(())
    }
}

/// Space-separated coordinates for a CSV cell.
pub fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| fmt_number(*v)).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub id: String,
    pub kind: String,
    pub result: Value,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub inconclusive: bool,
    pub table: Table,
}

impl TaskOutcome {
    pub fn new(id: &str, kind: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: kind.to_string(),
            result: Value::Null,
            summary: BTreeMap::new(),
            checks: Vec::new(),
            inconclusive: false,
            table: Table::default(),
        }
    }

    pub fn status(&self) -> Status {
        if self.checks.iter().any(|c| !c.passed) {
            Status::Fail
        } else if self.inconclusive {
            Status::Inconclusive
        } else {
            Status::Pass
        }
    }

    pub fn to_json(&self) -> Value {
        let summary: serde_json::Map<String, Value> =
            self.summary.iter().map(|(k, v)| (k.clone(), to_value(v))).collect();
        serde_json::json!({
            "id": self.id,
            "kind": self.kind,
            "status": self.status(),
            "result": self.result,
            "summary": summary,
            "checks": to_value(&self.checks),
        })
    }
}

/// `task,key,value` rows for every summary entry.
pub fn write_summary(path: &Path, outcomes: &[TaskOutcome]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task", "key", "value"])?;
    for o in outcomes {
        for (k, v) in &o.summary {
            w.write_record([o.id.as_str(), k.as_str(), fmt_number(*v).as_str()])?;
        }
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = serde_json::json!({"b": 0.1, "a": [1, 2.5], "c": {"z": null, "y": "s"}});
        let s = to_canonical_json(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("2.5000000000000000e0"));
        assert!(s.contains("    1,"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], serde_json::json!(0.1));
    }

    #[test]
    fn nonfinite_renders_null() {
        assert_eq!(fmt_number(f64::NAN), "null");
        assert_eq!(to_value(&f64::INFINITY), Value::Null);
    }

    #[test]
    fn status_precedence() {
        let mut o = TaskOutcome::new("t", "k");
        assert_eq!(o.status(), Status::Pass);
        o.inconclusive = true;
        assert_eq!(o.status(), Status::Inconclusive);
        o.checks.push(Check::at_most("x", 2.0, 1.0));
        assert_eq!(o.status(), Status::Fail);
        assert!(Status::Fail > Status::Inconclusive);
    }
}
