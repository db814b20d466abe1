use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{Map, Value};

/// One CSV cell. Floats use 17 significant digits so that they re-parse bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::F(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::F(x) if x.is_nan() => "NaN".into(),
            Cell::F(x) if *x > 0.0 => "inf".into(),
            Cell::F(_) => "-inf".into(),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(x: $t) -> Self {
                Cell::I(x as i64)
            }
        }
    )*};
}
int_cell!(i8, i32, i64, u32, u64, usize);

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::report::Cell::from($x)),*] };
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRef {
    pub name: String,
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub code_version: String,
    pub precision_used: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: Value,
    pub tables: Vec<TableRef>,
    pub summary: Map<String, Value>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// Accumulates tables and summary values for one command.
pub struct Run {
    pub command: String,
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub warnings: Vec<String>,
    pub precision_used: Vec<String>,
}

impl Run {
    pub fn new(command: &str) -> Self {
        Run {
            command: command.to_string(),
            tables: vec![],
            summary: Map::new(),
            warnings: vec![],
            precision_used: vec![],
        }
    }

    pub fn set(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(v).expect("summary value"));
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn precision(&mut self, p: cascade_core::Precision) {
        let s = format!("{p:?}");
        if !self.precision_used.contains(&s) {
            self.precision_used.push(s);
        }
    }

    pub fn finish(self, dir: &Path, config: Value, wall_time_s: f64, gnuplot: bool) -> anyhow::Result<RunReport> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut refs = vec![];
        for t in &self.tables {
            t.write(dir)?;
            refs.push(TableRef {
                name: t.name.clone(),
                file: format!("{}.csv", t.name),
                columns: t.header.clone(),
                rows: t.rows.len(),
            });
        }
        if gnuplot {
            write_gnuplot_stub(dir, &self.command, &self.tables)?;
        }
        let report = RunReport {
            command: self.command,
            config,
            tables: refs,
            summary: self.summary,
            provenance: Provenance {
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                precision_used: self.precision_used,
                wall_time_s,
            },
            warnings: self.warnings,
        };
        let f = File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(f, &report)?;
        Ok(report)
    }
}

fn write_gnuplot_stub(dir: &Path, command: &str, tables: &[Table]) -> anyhow::Result<()> {
    let mut f = File::create(dir.join(format!("{command}.gp")))?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead")?;
    for t in tables {
        let cols = &t.header;
        writeln!(f, "\n# {}.csv: {}", t.name, cols.join(", "))?;
        if cols.len() >= 2 {
            writeln!(f, "# plot '{}.csv' using 1:{} with linespoints", t.name, cols.len())?;
        }
    }
    Ok(())
}

#[cfg(test)]
/// Reads a CSV written by [`Table::write`] back into header and string cells.
pub fn read_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = vec![];
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.5856783] {
            let s = Cell::F(x).render();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(Cell::F(f64::NEG_INFINITY).render().parse::<f64>().unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn table_write_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("demo", &["n", "value_log", "tag"]);
        t.push(row![3u32, 1.25, "V"]);
        t.push(row![4u32, -7.0e-12, "V"]);
        let p = t.write(dir.path()).unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["n", "value_log", "tag"]);
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), -7.0e-12);
    }
}
