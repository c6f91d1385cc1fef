//! One JSON object per line on standard error.

use std::io::Write;

use serde_json::{Map, Value};

pub fn emit(level: &str, event: &str, fields: Value) {
    let mut obj = Map::new();
    obj.insert("ts".into(), Value::String(chrono::Utc::now().to_rfc3339()));
    obj.insert("level".into(), Value::String(level.into()));
    obj.insert("event".into(), Value::String(event.into()));
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{}", Value::Object(obj));
}

pub fn info(event: &str, fields: Value) {
    emit("info", event, fields);
}

pub fn warn(event: &str, fields: Value) {
    emit("warn", event, fields);
}
