//! CSV tables at full double precision and the JSON run record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}

/// One CSV file. Every table ends with a `status` column: `ok` or the
/// error of a failed point, whose numeric cells are NaN.
#[derive(Clone, Debug)]
pub struct Table {
    pub suffix: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub failed: usize,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            suffix: None,
            columns: columns.iter().map(|c| c.to_string()).chain(["status".to_string()]).collect(),
            rows: Vec::new(),
            failed: 0,
        }
    }

    pub fn with_suffix(mut self, s: &str) -> Self {
        self.suffix = Some(s.to_string());
        self
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len() + 1, self.columns.len(), "row width");
        let mut cells = cells;
        cells.push(Cell::Text("ok".into()));
        self.rows.push(cells);
    }

    /// A failed point: leading key cells are kept, the rest are NaN.
    pub fn push_failed(&mut self, keys: Vec<Cell>, err: &str) {
        let mut cells = keys;
        while cells.len() + 1 < self.columns.len() {
            cells.push(Cell::Num(f64::NAN));
        }
        cells.push(Cell::Text(format!("error: {}", err.replace([',', '\n'], ";"))));
        self.rows.push(cells);
        self.failed += 1;
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    // 17 significant digits round-trip every double
                    Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
                    Cell::Num(_) => "NaN".to_string(),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn path(&self, prefix: &Path) -> PathBuf {
        let mut name = prefix.as_os_str().to_owned();
        if let Some(sfx) = &self.suffix {
            name.push(".");
            name.push(sfx);
        }
        name.push(".csv");
        PathBuf::from(name)
    }
}

pub fn json_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Run record: resolved configuration, model parameters, code version and
/// the experiment's summary. `timestamp` is the only field that changes
/// between identical runs.
pub fn metadata(experiment: &str, config: &Value, params: &Value, summary: &Value, tables: &[(PathBuf, &Table)]) -> Value {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    serde_json::json!({
        "experiment": experiment,
        "code_version": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        "timestamp": timestamp,
        "config": config,
        "parameters": params,
        "units": "rates in rad/us inside `parameters`; CSV frequencies in MHz (cycles/us), times in us",
        "outputs": tables.iter().map(|(p, t)| serde_json::json!({
            "path": p.display().to_string(),
            "columns": t.columns,
            "rows": t.rows.len(),
            "failed_rows": t.failed,
        })).collect::<Vec<_>>(),
        "summary": summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_doubles() {
        let mut t = Table::new(&["a", "b"]);
        let v = 0.1f64 + 0.2;
        t.push(vec![v.into(), 3usize.into()]);
        t.push_failed(vec![1.5.into()], "bad, point");
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("a,b,status"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0].parse::<f64>().unwrap(), v);
        assert_eq!(first[2], "ok");
        assert_eq!(lines.next(), Some("1.5000000000000000e0,NaN,error: bad; point"));
        assert_eq!(t.failed, 1);
    }

    #[test]
    fn paths() {
        let t = Table::new(&["a"]).with_suffix("heterodyne");
        assert_eq!(t.path(Path::new("out/run")), PathBuf::from("out/run.heterodyne.csv"));
        assert_eq!(json_path(Path::new("out/run")), PathBuf::from("out/run.json"));
    }
}
