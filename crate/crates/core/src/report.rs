//! Machine-readable experiment reports (JSON and CSV).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::Estimate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub experiment: String,
    pub engine: String,
    pub seed: u64,
    pub shots: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub counts: BTreeMap<String, u64>,
    pub derived: BTreeMap<String, Estimate>,
    /// Wall-clock time; never serialized so reports stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn new(experiment: &str, engine: &str, seed: u64, shots: u64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            experiment: experiment.into(),
            engine: engine.into(),
            seed,
            shots,
            params: BTreeMap::new(),
            counts: BTreeMap::new(),
            derived: BTreeMap::new(),
            elapsed: Duration::ZERO,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).expect("parameters are plain data");
        self.params.insert(key.into(), v);
        self
    }

    pub fn count(&mut self, label: impl Into<String>, n: u64) {
        self.counts.insert(label.into(), n);
    }

    pub fn derive(&mut self, name: impl Into<String>, estimate: Estimate) {
        self.derived.insert(name.into(), estimate);
    }

    pub fn counts_total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Two sections: `label,count` rows, a blank line, then
    /// `name,value,ci_low,ci_high` rows. Numbers use the JSON formatting.
    pub fn to_csv(&self) -> String {
        let num = |x: f64| serde_json::to_string(&x).unwrap_or_else(|_| "null".into());
        let mut s = String::from("label,count\n");
        for (label, n) in &self.counts {
            let _ = writeln!(s, "{},{}", csv_field(label), n);
        }
        s.push('\n');
        s.push_str("name,value,ci_low,ci_high\n");
        for (name, e) in &self.derived {
            let _ = writeln!(s, "{},{},{},{}", csv_field(name), num(e.value), num(e.ci_low), num(e.ci_high));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new("mzi", "qm", 7, 10).param("config", "closed");
        r.count("Da", 0);
        r.count("Db", 10);
        r.derive("p_db", Estimate { value: 1.0, ci_low: 0.95, ci_high: 1.0 });
        r.elapsed = Duration::from_millis(12);
        r
    }

    #[test]
    fn json_round_trip_skips_elapsed() {
        let r = sample();
        let json = r.to_json().unwrap();
        assert!(!json.contains("elapsed"));
        let back = ExperimentReport::from_json(&json).unwrap();
        assert_eq!(back.counts, r.counts);
        assert_eq!(back.derived, r.derived);
        assert_eq!(back.schema, SCHEMA_VERSION);
    }

    #[test]
    fn csv_sections() {
        let csv = sample().to_csv();
        assert!(csv.starts_with("label,count\nDa,0\nDb,10\n\nname,value,ci_low,ci_high\n"));
        assert!(csv.contains("p_db,1.0,0.95,1.0"));
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a=0,b=45"), "\"a=0,b=45\"");
    }
}
