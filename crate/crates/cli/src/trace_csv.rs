//! Trace CSV: `k,max_residual,step_norm,e_k,beta_v,phi`, one row per
//! recorded iterate in ascending `k`, absent values empty, floats in
//! 17-significant-digit scientific notation so they read back bit-exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use feas_core::{Trace, TraceRow};
use thiserror::Error;

pub const HEADER: [&str; 6] = ["k", "max_residual", "step_norm", "e_k", "beta_v", "phi"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },

    #[error("{path}: header is {found:?}, expected {expected:?}", expected = HEADER.join(","))]
    Header { path: String, found: String },

    #[error("{path}: line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
}

/// The scalar columns of one trace row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub max_residual: f64,
    pub step_norm: Option<f64>,
    pub e_k: Option<f64>,
    pub beta_v: Option<f64>,
    pub phi: Option<f64>,
}

impl From<&TraceRow> for CsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            k: r.k,
            max_residual: r.max_residual,
            step_norm: r.step_norm,
            e_k: r.e_k,
            beta_v: r.beta_v,
            phi: r.phi,
        }
    }
}

impl CsvRow {
    /// Equality that distinguishes `-0.0`/`0.0` and treats equal NaN bit
    /// patterns as equal.
    pub fn bit_eq(&self, other: &CsvRow) -> bool {
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => same(a, b),
            _ => false,
        };
        self.k == other.k
            && same(self.max_residual, other.max_residual)
            && opt(self.step_norm, other.step_norm)
            && opt(self.e_k, other.e_k)
            && opt(self.beta_v, other.beta_v)
            && opt(self.phi, other.phi)
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn write_rows<W: Write>(rows: &[CsvRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            format_float(r.max_residual),
            format_opt(r.step_norm),
            format_opt(r.e_k),
            format_opt(r.beta_v),
            format_opt(r.phi),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn trace_rows(trace: &Trace) -> Vec<CsvRow> {
    trace.rows.iter().map(CsvRow::from).collect()
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<(), CsvError> {
    let name = path.display().to_string();
    let file = File::create(path).map_err(|source| CsvError::Io {
        path: name.clone(),
        source,
    })?;
    write_rows(&trace_rows(trace), file).map_err(|source| CsvError::Csv { path: name, source })
}

/// Reads rows back, rejecting a wrong header, malformed numbers and
/// out-of-order `k`. `name` labels errors.
pub fn read_rows<R: Read>(r: R, name: &str) -> Result<Vec<CsvRow>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let csv_err = |source| CsvError::Csv {
        path: name.to_string(),
        source,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER) {
        return Err(CsvError::Header {
            path: name.to_string(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows: Vec<CsvRow> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| CsvError::Row {
            path: name.to_string(),
            line,
            message,
        };
        let float = |j: usize| -> Result<Option<f64>, CsvError> {
            let s = &rec[j];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| bad(format!("column {}: {e}: {s:?}", HEADER[j])))
        };
        let k: usize = rec[0]
            .parse()
            .map_err(|e| bad(format!("column k: {e}: {:?}", &rec[0])))?;
        if let Some(prev) = rows.last() {
            if k <= prev.k {
                return Err(bad(format!("k = {k} does not follow k = {}", prev.k)));
            }
        }
        let max_residual = float(1)?.ok_or_else(|| bad("max_residual is empty".into()))?;
        rows.push(CsvRow {
            k,
            max_residual,
            step_norm: float(2)?,
            e_k: float(3)?,
            beta_v: float(4)?,
            phi: float(5)?,
        });
    }
    Ok(rows)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<CsvRow>, CsvError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: name.clone(),
        source,
    })?;
    read_rows(file, &name)
}
