//! Report emission: compact JSON with sorted keys and 17-significant-digit
//! reals, CSV tables, and the configuration echo.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Writes floats as `{:.16e}`; everything else as serde_json does.
struct RealFormatter;

impl Formatter for RealFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", real(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Decimal rendering with 17 significant digits.
pub fn real(x: f64) -> String {
    stabfield::geometry::fmt_real(x)
}

/// JSON bytes of `value`. Going through `serde_json::Value` sorts map keys;
/// non-finite reals become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, RealFormatter);
    v.serialize(&mut ser).map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Git-style blob hash: `sha256("blob <len>\0" ++ content)`, hex encoded.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Config(format!("cannot write csv: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Config(format!("cannot write csv: {e}")))
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}
