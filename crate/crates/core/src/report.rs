//! Versioned JSON reports and CSV tables, written atomically.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Schema tag stored in every report.
pub const SCHEMA: &str = "ucp-report/1";

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub passed: bool,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, model: &str, seed: u64, passed: bool, body: T) -> Self {
        Report {
            schema: SCHEMA,
            command: command.to_string(),
            model: model.to_string(),
            seed,
            passed,
            body,
        }
    }
}

/// Writes `bytes` to a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Numeric table with a header row; values in shortest round-trip form.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        assert_eq!(r.len(), header.len(), "row width differs from the header");
        w.write_record(r.iter().map(|&v| format_value(v)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Shortest round-trip decimal, in exponent form outside `[1e−4, 1e15)`.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/report.json");
        let r = Report::new("check", "ik2", 7, true, vec![1.5, f64::NAN]);
        write_json(&p, &r).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["seed"], 7);
        assert!(v["body"][1].is_null());
        let c = dir.path().join("t.csv");
        write_csv(&c, &["a".into(), "b".into()], &[vec![1.0, 0.1], vec![-2.0, 1e-300]]).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "a,b\n1,0.1\n-2,1e-300\n");
    }

    #[test]
    fn identical_values_give_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        let r = Report::new("certify", "ik3", 1, false, [0.1 + 0.2, 1.0 / 3.0]);
        write_json(&a, &r).unwrap();
        write_json(&b, &r).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
