//! Result envelopes and their JSON/CSV encodings.
//!
//! Floats are always written with 17 significant digits (`{:.16e}`) so
//! identical runs give byte-identical payloads and values round-trip.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A flat table with column headers.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Column names `prefix_1 .. prefix_k`.
pub fn indexed(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|p| format!("{prefix}_{p}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Payload {
    pub summary: Value,
    pub tables: Vec<Table>,
}

#[derive(Serialize)]
struct Timing {
    elapsed_ms: f64,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    timing: Timing,
    payload: &'a Payload,
}

struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn envelope_json(command: &str, config: &RunConfig, elapsed_ms: f64, payload: &Payload) -> String {
    to_json(&Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config,
        timing: Timing { elapsed_ms },
        payload,
    })
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => format!("{:.16e}", n.as_f64().expect("f64")),
        other => other.to_string(),
    }
}

/// Comma-delimited, LF-terminated CSV with a header row.
pub fn table_csv(table: &Table) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io_err = |e: csv::Error| CliError::usage(format!("csv encoding failed: {e}"));
    w.write_record(&table.columns).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(cell_text)).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 cells"))
}
