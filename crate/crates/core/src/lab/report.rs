use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One thresholded assertion inside a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Plot-ready numeric table, written as CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with shortest round-trip decimal numbers.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub anchor: String,
    pub config: BTreeMap<String, Value>,
    pub seed: u64,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub runtime_ms: u64,
    pub attachments: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl ExperimentReport {
    pub fn new(id: &str, anchor: &str, seed: u64) -> Self {
        ExperimentReport {
            id: id.into(),
            anchor: anchor.into(),
            config: BTreeMap::new(),
            seed,
            constants: BTreeMap::new(),
            checks: Vec::new(),
            verdict: Verdict::Pass,
            runtime_ms: 0,
            attachments: Vec::new(),
            notes: Vec::new(),
            tables: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn config<V: Serialize>(&mut self, key: &str, value: V) -> &mut Self {
        self.config
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn constant(&mut self, key: &str, value: f64) -> &mut Self {
        self.constants.insert(key.into(), value);
        self
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> &mut Self {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn table(&mut self, table: Table) -> &mut Self {
        self.tables.push(table);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }

    /// Sets the verdict from the checks and records the elapsed time.
    pub fn finish(mut self) -> Self {
        self.verdict = if self.checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        if let Some(t) = self.started.take() {
            self.runtime_ms = t.elapsed().as_millis() as u64;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `PASS id [anchor] name=value ...`
    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{} {} [{}]",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.anchor
        );
        for c in self.checks.iter().filter(|c| !c.passed) {
            write!(s, " failed:{}", c.name).unwrap();
        }
        s
    }

    /// Writes the CSV tables and the JSON record into `dir`.
    pub fn write(&mut self, dir: &Path, json: bool, csv: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if csv {
            self.attachments.clear();
            for t in &self.tables {
                let name = format!("{}_{}.csv", self.id, t.name);
                let path = dir.join(&name);
                fs::write(&path, t.to_csv())?;
                self.attachments.push(name);
                written.push(path);
            }
        }
        if json {
            let path = dir.join(format!("{}.json", self.id));
            fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_round_trip_numbers() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        t.push(vec![2.0, 1e-20]);
        let csv = t.to_csv();
        assert_eq!(csv, "a,b\n0.1,0.3333333333333333\n2,0.00000000000000000001\n");
        for line in csv.lines().skip(1) {
            for v in line.split(',') {
                let x: f64 = v.parse().unwrap();
                assert_eq!(format!("{x}"), v);
            }
        }
    }

    #[test]
    fn verdict_follows_checks() {
        let mut r = ExperimentReport::new("x", "x5", 1);
        r.check("a", true, "").check("b", false, "too big");
        let r = r.finish();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.summary_line().contains("failed:b"));
        let json = serde_json::to_value(&r).unwrap();
        for key in ["id", "anchor", "config", "seed", "constants", "verdict", "runtime_ms", "attachments"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
