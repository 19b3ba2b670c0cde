//! Table rendering: every command's main output is a list of records,
//! written as CSV (default) or pretty JSON, to standard output or `--out`.
//!
//! Rendering is deterministic: records arrive in a fixed order, rationals
//! are printed exactly, and floating-point columns use Rust's shortest
//! round-trip formatting. Running a command twice with the same arguments
//! produces identical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;

/// Output format of the main table.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Comma-separated values with a header row.
    Csv,
    /// A pretty-printed JSON array of objects.
    Json,
}

/// Serialize records in the requested format.
pub fn render_records<T: Serialize>(records: &[T], format: Format) -> anyhow::Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r).context("rendering CSV record")?;
            }
            w.into_inner().context("finishing CSV output")
        }
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(records).context("rendering JSON")?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Write rendered bytes to `--out` or standard output.
pub fn write_output(bytes: &[u8], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .with_context(|| format!("writing output file {}", path.display())),
        None => io::stdout()
            .write_all(bytes)
            .context("writing to standard output"),
    }
}

/// Render and write records in one go.
pub fn emit_records<T: Serialize>(
    records: &[T],
    format: Format,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    write_output(&render_records(records, format)?, out)
}
