//! Result records (JSON) and CSV tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::CliError;

/// A flat table with declared headers; cells are JSON scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

impl Table {
    /// Builds a table from serializable rows; nested objects become dotted
    /// columns and arrays stay as JSON cells.
    pub fn from_rows<T: Serialize>(name: &str, rows: &[T]) -> Result<Self, CliError> {
        let mut table = Table {
            name: name.to_string(),
            ..Table::default()
        };
        for row in rows {
            let value = serde_json::to_value(row).map_err(|e| CliError::Other(e.to_string()))?;
            let mut cells = Vec::new();
            flatten("", &value, &mut cells);
            for (k, _) in &cells {
                if !table.headers.contains(k) {
                    table.headers.push(k.clone());
                }
            }
            let line = table
                .headers
                .iter()
                .map(|h| {
                    cells
                        .iter()
                        .find(|(k, _)| k == h)
                        .map(|(_, v)| v.clone())
                        .unwrap_or(Value::Null)
                })
                .collect();
            table.rows.push(line);
        }
        let width = table.headers.len();
        for r in &mut table.rows {
            r.resize(width, Value::Null);
        }
        Ok(table)
    }

    pub fn column(&self, header: &str) -> Option<Vec<&Value>> {
        let j = self.headers.iter().position(|h| h == header)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Other(e.to_string()))?;
        w.write_record(&self.headers).map_err(|e| CliError::Other(e.to_string()))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            w.write_record(&cells).map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Other(e.to_string()))
    }
}

/// A named statistical check; `--strict` turns failures into exit code 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub outputs: Value,
    /// The main table of the experiment, used by [`report_merge`].
    pub table: Table,
    pub checks: Vec<Check>,
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Equality of everything except the wall-clock time.
    pub fn same_results(&self, other: &ResultRecord) -> bool {
        self.experiment == other.experiment
            && self.version == other.version
            && self.config == other.config
            && self.outputs == other.outputs
            && self.table == other.table
            && self.checks == other.checks
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Writes `<dir>/<experiment>.json` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.json", self.experiment));
        std::fs::write(&path, self.to_json()?).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Concatenates the main tables of records of one experiment kind, with a
/// leading `source` column holding the record position.
pub fn report_merge(records: &[ResultRecord]) -> Result<Table, CliError> {
    let first = records
        .first()
        .ok_or_else(|| CliError::Validation("report-merge needs at least one record".into()))?;
    if let Some(other) = records.iter().find(|r| r.experiment != first.experiment) {
        return Err(CliError::Validation(format!(
            "cannot merge `{}` with `{}` records",
            first.experiment, other.experiment
        )));
    }
    let mut headers = vec!["source".to_string()];
    for r in records {
        for h in &r.table.headers {
            if !headers.contains(h) {
                headers.push(h.clone());
            }
        }
    }
    let mut rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for row in &r.table.rows {
            let line = headers
                .iter()
                .map(|h| {
                    if h == "source" {
                        return Value::from(i);
                    }
                    r.table
                        .headers
                        .iter()
                        .position(|x| x == h)
                        .map(|j| row[j].clone())
                        .unwrap_or(Value::Null)
                })
                .collect();
            rows.push(line);
        }
    }
    Ok(Table {
        name: format!("{}-merged", first.experiment),
        headers,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        m: i64,
        inner: Inner,
        regime: Option<f64>,
    }

    #[derive(Serialize)]
    struct Inner {
        eta: f64,
    }

    #[test]
    fn nested_rows_flatten_to_dotted_columns() {
        let t = Table::from_rows(
            "t",
            &[Row {
                m: 1,
                inner: Inner { eta: 0.5 },
                regime: None,
            }],
        )
        .unwrap();
        assert_eq!(t.headers, ["m", "inner.eta", "regime"]);
        assert_eq!(t.rows[0][2], Value::Null);
    }

    #[test]
    fn merge_rejects_empty_input() {
        assert!(matches!(report_merge(&[]), Err(CliError::Validation(_))));
    }
}
