use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fairtrade::{Error, MechanismOutcome, Result};

/// A named CSV table. Numbers are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

impl Table {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// One-row table from `(column, value)` pairs.
    pub fn record(name: &'static str, fields: Vec<(&str, String)>) -> Self {
        let (header, row): (Vec<_>, Vec<_>) =
            fields.into_iter().map(|(k, v)| (k.to_string(), v)).unzip();
        Self {
            name,
            header,
            rows: vec![row],
        }
    }

    fn write_to<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn outcome_fields(o: &MechanismOutcome) -> Vec<(&'static str, String)> {
    vec![
        ("seller_utility", num(o.seller_utility)),
        ("buyer_utility", num(o.buyer_utility)),
        ("buyer_payment", num(o.buyer_payment)),
        ("seller_receipt", num(o.seller_receipt)),
        ("gft", num(o.gft)),
    ]
}

/// Path for the `k`-th table: the first uses `out` itself, later ones get
/// `_<name>` appended to the file stem.
fn table_path(out: &Path, name: &str, k: usize) -> PathBuf {
    if k == 0 {
        return out.to_path_buf();
    }
    let stem = out
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    let ext = out
        .extension()
        .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_{name}.{ext}"))
}

/// Writes tables to `out` (see [`table_path`]), or to stdout separated by blank lines.
pub fn emit(tables: &[Table], out: Option<&Path>) -> Result<()> {
    let io_err = |path: &Path, e: &dyn std::fmt::Display| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    match out {
        Some(out) => {
            for (k, t) in tables.iter().enumerate() {
                let path = table_path(out, t.name, k);
                let file = File::create(&path).map_err(|e| io_err(&path, &e))?;
                t.write_to(file).map_err(|e| io_err(&path, &e))?;
            }
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            for (k, t) in tables.iter().enumerate() {
                if k > 0 {
                    let _ = writeln!(lock);
                }
                t.write_to(&mut lock)
                    .map_err(|e| io_err(Path::new("<stdout>"), &e))?;
            }
        }
    }
    Ok(())
}
