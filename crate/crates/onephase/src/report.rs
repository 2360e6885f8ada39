//! Named-metric reports: ordered scalar/flag/profile/table entries with JSON
//! serialization. Entries keep insertion order; JSON output sorts keys so
//! byte-identical reruns do not depend on construction order.

use serde_json::{json, Map, Value};

use crate::geom::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Scalar(f64),
    Flag(bool),
    Text(String),
    Profile { center: Vec2, radii: Vec<f64>, values: Vec<f64> },
    Table { columns: Vec<String>, rows: Vec<Vec<f64>> },
}

/// Ordered collection of named metrics.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub entries: Vec<(String, MetricValue)>,
}

impl Report {
    pub fn new() -> Self {
        Report { entries: Vec::new() }
    }

    pub fn push_scalar(&mut self, name: &str, v: f64) {
        self.entries.push((name.to_string(), MetricValue::Scalar(v)));
    }

    pub fn push_flag(&mut self, name: &str, v: bool) {
        self.entries.push((name.to_string(), MetricValue::Flag(v)));
    }

    pub fn push_text(&mut self, name: &str, v: &str) {
        self.entries.push((name.to_string(), MetricValue::Text(v.to_string())));
    }

    pub fn push_profile(&mut self, name: &str, center: Vec2, radii: Vec<f64>, values: Vec<f64>) {
        self.entries.push((name.to_string(), MetricValue::Profile { center, radii, values }));
    }

    pub fn push_table(&mut self, name: &str, columns: Vec<String>, rows: Vec<Vec<f64>>) {
        self.entries.push((name.to_string(), MetricValue::Table { columns, rows }));
    }

    pub fn get(&self, name: &str) -> Option<&MetricValue> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        match self.get(name) {
            Some(MetricValue::Scalar(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        match self.get(name) {
            Some(MetricValue::Flag(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        for (name, v) in &self.entries {
            let jv = match v {
                MetricValue::Scalar(x) => json!(x),
                MetricValue::Flag(x) => json!(x),
                MetricValue::Text(x) => json!(x),
                MetricValue::Profile { center, radii, values } => json!({
                    "center": [center[0], center[1]],
                    "radii": radii,
                    "values": values,
                }),
                MetricValue::Table { columns, rows } => json!({
                    "columns": columns,
                    "rows": rows,
                }),
            };
            map.insert(name.clone(), jv);
        }
        Value::Object(map)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("report serialization")
    }
}
