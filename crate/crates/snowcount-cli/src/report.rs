//! Versioned report envelope, provenance tagging and CSV flattening.

use serde_json::{json, Map, Value};

/// Schema identifier embedded in every report.
pub const SCHEMA: &str = "snowcount.report/v1";

/// Origin of an emitted number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// A closed-form expression evaluated as stated.
    PaperFormula,
    /// Computed by this implementation from certified ingredients.
    Derived,
    /// Obtained by sampling, enumeration or numerical solution.
    Measured,
}

impl Provenance {
    fn label(self) -> &'static str {
        match self {
            Provenance::PaperFormula => "paper_formula",
            Provenance::Derived => "derived",
            Provenance::Measured => "measured",
        }
    }
}

/// Wraps a value as `{value, provenance}`; used for bulk arrays that share one origin.
pub fn bulk(value: Value, p: Provenance) -> Value {
    json!({ "value": value, "provenance": p.label() })
}

fn is_wrapped(m: &Map<String, Value>) -> bool {
    m.len() == 2 && m.contains_key("value") && m.get("provenance").is_some_and(Value::is_string)
}

/// Replaces every number `x` by `{value: x, provenance}`, where the
/// provenance is chosen by `rule` from the chain of object keys above `x`.
pub fn tag(v: Value, rule: &dyn Fn(&[&str]) -> Provenance) -> Value {
    fn go(v: Value, path: &mut Vec<String>, rule: &dyn Fn(&[&str]) -> Provenance) -> Value {
        match v {
            Value::Number(_) => {
                let keys: Vec<&str> = path.iter().map(String::as_str).collect();
                bulk(v, rule(&keys))
            }
            Value::Array(a) => Value::Array(a.into_iter().map(|x| go(x, path, rule)).collect()),
            Value::Object(m) if is_wrapped(&m) => Value::Object(m),
            Value::Object(m) => Value::Object(
                m.into_iter()
                    .map(|(k, x)| {
                        path.push(k.clone());
                        let y = go(x, path, rule);
                        path.pop();
                        (k, y)
                    })
                    .collect(),
            ),
            other => other,
        }
    }
    go(v, &mut Vec::new(), rule)
}

/// Report envelope `{schema, command, config, result}`.
pub fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({ "schema": SCHEMA, "command": command, "config": config, "result": result })
}

/// Error document `{schema, error: {kind, message, violations}}`.
pub fn error_json(kind: &str, message: &str, violations: &[String]) -> Value {
    json!({ "schema": SCHEMA, "error": { "kind": kind, "message": message, "violations": violations } })
}

/// Flattens the tagged scalars of a report into CSV rows `key,value,provenance`.
pub fn flatten_csv(result: &Value) -> csv::Result<Vec<u8>> {
    fn go(v: &Value, key: String, prov: &str, out: &mut Vec<[String; 3]>) {
        match v {
            Value::Object(m) if is_wrapped(m) => go(&m["value"], key, m["provenance"].as_str().unwrap_or_default(), out),
            Value::Object(m) => m.iter().for_each(|(k, x)| go(x, join(&key, k), prov, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| go(x, join(&key, &i.to_string()), prov, out)),
            Value::String(s) => out.push([key, s.clone(), prov.to_string()]),
            other => out.push([key, other.to_string(), prov.to_string()]),
        }
    }
    fn join(a: &str, b: &str) -> String {
        if a.is_empty() {
            b.to_string()
        } else {
            format!("{a}.{b}")
        }
    }
    let mut rows = Vec::new();
    go(result, String::new(), "", &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value", "provenance"])?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
