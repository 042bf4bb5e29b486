use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::Float(v) => format!("{v:.16e}"),
            Self::Int(v) => v.to_string(),
            Self::Bool(v) => v.to_string(),
            Self::Text(v) => v.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

pub type Row = Vec<Cell>;

/// CSV text for `rows` under `schema`. Floats carry 17 significant digits.
pub fn render_csv(rows: &[Row], schema: &[&str]) -> Result<Vec<u8>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(HarnessError::Config(vec![format!(
                "row {i} has {} fields, schema has {}",
                row.len(),
                schema.len()
            )]));
        }
        if let Some((col, v)) = schema.iter().zip(row).find_map(|(c, v)| match v {
            Cell::Float(x) if !x.is_finite() => Some((c, x)),
            _ => None,
        }) {
            return Err(HarnessError::Numerical(format!(
                "row {i} has non-finite {col} = {v}"
            )));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let wrap = |e: csv::Error| HarnessError::io("CSV encoding", e.into());
    w.write_record(schema).map_err(wrap)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::io("CSV encoding", e.into_error()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so `path` either keeps its old content or holds the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let ctx = || format!("cannot write {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(ctx(), e))?;
    tmp.write_all(bytes)
        .and_then(|()| tmp.as_file().sync_all())
        .map_err(|e| HarnessError::io(ctx(), e))?;
    tmp.persist(path)
        .map_err(|e| HarnessError::io(ctx(), e.error))?;
    Ok(())
}

pub fn emit_csv(rows: &[Row], schema: &[&str], path: &Path) -> Result<()> {
    let bytes = render_csv(rows, schema)?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: [&str; 6] = [
        "eps",
        "delta",
        "ratio",
        "min_energy",
        "predicted",
        "rel_gap",
    ];

    #[test]
    fn empty_table_is_header_only() {
        let out = render_csv(&[], &SWEEP).unwrap();
        assert_eq!(out, b"eps,delta,ratio,min_energy,predicted,rel_gap\n");
    }

    #[test]
    fn floats_round_trip() {
        let v = 0.1f64 + 0.2;
        let row: Row = vec![
            v.into(),
            1e-300.into(),
            (-2.5).into(),
            3.0.into(),
            4.0.into(),
            0.0.into(),
        ];
        let text = String::from_utf8(render_csv(&[row], &SWEEP).unwrap()).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[0], v);
        assert_eq!(fields[1], 1e-300);
        assert_eq!(line.split(',').next().unwrap(), "3.0000000000000004e-1");
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn non_finite_values_are_refused() {
        let row: Row = vec![
            1.0.into(),
            f64::NAN.into(),
            1.0.into(),
            1.0.into(),
            1.0.into(),
            1.0.into(),
        ];
        let err = render_csv(&[row], &SWEEP).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("delta"));
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"old\n").unwrap();
        write_atomic(&path, b"new\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"new\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let err = write_atomic(&dir.path().join("missing/out.csv"), b"x").unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
