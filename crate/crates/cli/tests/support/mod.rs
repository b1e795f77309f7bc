#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qevents"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "qevents {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

pub fn run_json(args: &[&str]) -> Value {
    let text = run_ok(args);
    let v: Value = serde_json::from_str(&text).expect("report is JSON");
    validate_report(&v);
    v
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn shipped_scenario() -> PathBuf {
    crate_dir().join("scenarios/epr_figure.json")
}

pub fn schema() -> Value {
    let text = std::fs::read_to_string(crate_dir().join("schema/report.schema.json")).expect("schema file");
    serde_json::from_str(&text).expect("schema is JSON")
}

pub fn validate_report(report: &Value) {
    let schema = schema();
    let mut errors = Vec::new();
    check(&schema, &schema, report, "$", &mut errors);
    assert!(errors.is_empty(), "report does not match schema:\n{}", errors.join("\n"));
}

/// Validator for the keyword subset the report schema uses: `type`,
/// `required`, `properties`, `additionalProperties`, `items`, `minimum`,
/// `maximum`, `enum`, `oneOf` and local `$ref`.
pub fn check(root: &Value, schema: &Value, v: &Value, at: &str, errors: &mut Vec<String>) {
    let Some(s) = schema.as_object() else { return };
    if let Some(r) = s.get("$ref").and_then(Value::as_str) {
        let target = resolve(root, r).unwrap_or_else(|| panic!("unresolved $ref {r}"));
        check(root, target, v, at, errors);
    }
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(name) => has_type(v, name),
            Value::Array(names) => names.iter().filter_map(Value::as_str).any(|n| has_type(v, n)),
            _ => true,
        };
        if !ok {
            errors.push(format!("{at}: expected type {t}, got {v}"));
            return;
        }
    }
    if let Some(Value::Array(options)) = s.get("enum") {
        if !options.contains(v) {
            errors.push(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let (Some(x), Some(min)) = (v.as_f64(), s.get("minimum").and_then(Value::as_f64)) {
        if x < min {
            errors.push(format!("{at}: {x} below minimum {min}"));
        }
    }
    if let (Some(x), Some(max)) = (v.as_f64(), s.get("maximum").and_then(Value::as_f64)) {
        if x > max {
            errors.push(format!("{at}: {x} above maximum {max}"));
        }
    }
    if let Value::Object(obj) = v {
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    errors.push(format!("{at}: missing {k}"));
                }
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, item) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => check(root, sub, item, &format!("{at}.{k}"), errors),
                None => {
                    if s.get("additionalProperties") == Some(&Value::Bool(false)) {
                        errors.push(format!("{at}: unexpected property {k}"));
                    }
                }
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (v, s.get("items")) {
        for (i, item) in items.iter().enumerate() {
            check(root, sub, item, &format!("{at}[{i}]"), errors);
        }
    }
    if let Some(Value::Array(branches)) = s.get("oneOf") {
        let passing = branches
            .iter()
            .filter(|b| {
                let mut e = Vec::new();
                check(root, b, v, at, &mut e);
                e.is_empty()
            })
            .count();
        if passing != 1 {
            errors.push(format!("{at}: {passing} oneOf branches match"));
        }
    }
}

fn has_type(v: &Value, name: &str) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        _ => false,
    }
}

fn resolve<'a>(root: &'a Value, r: &str) -> Option<&'a Value> {
    root.pointer(r.strip_prefix('#')?)
}

pub fn strip_duration(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("duration_seconds");
    }
    v
}

pub fn write_temp(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).expect("temp write");
    p
}
