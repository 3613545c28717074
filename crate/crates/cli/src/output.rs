//! Artifact plumbing: the CSV schema (header row, `.` decimal, 12
//! significant digits) and the write-to-path-or-stdout logic.

use crate::error::CliError;
use std::io::{Read, Write};
use std::path::Path;

/// Floats are written with exactly 12 significant digits. Parsing such a
/// field and re-formatting it reproduces the field byte for byte, which is
/// what makes emitted files stable round-trip artifacts.
#[must_use]
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.11e}")
}

/// Optional floats print as the empty field.
#[must_use]
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

/// A rectangular, fully stringified table: the exact contents of a CSV
/// artifact, with every cell already formatted under the schema rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    #[must_use]
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| (*c).to_string()).collect(), rows: Vec::new() }
    }

    /// Appends a row; its width must match the header.
    pub fn push_row(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width {} does not match the {}-column header",
            row.len(),
            self.columns.len()
        );
        self.rows.push(row);
    }

    #[must_use]
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    #[must_use]
    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Serializes with a header row and `\n` terminators.
    pub fn to_csv_string(&self) -> Result<String, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.columns).map_err(|e| CliError::run(e))?;
        for row in &self.rows {
            writer.write_record(row).map_err(|e| CliError::run(e))?;
        }
        let bytes = writer.into_inner().map_err(|e| CliError::run(e))?;
        String::from_utf8(bytes).map_err(|e| CliError::run(e))
    }

    /// Parses a CSV artifact back into the in-memory table.
    pub fn from_csv(reader: impl Read) -> Result<Self, CliError> {
        let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let columns: Vec<String> =
            csv_reader.headers().map_err(|e| CliError::run(e))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in csv_reader.records() {
            let record = record.map_err(|e| CliError::run(e))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Table { columns, rows })
    }
}

/// Writes the rendered artifact to `--out` or stdout, with path context on
/// failure.
pub fn write_artifact(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| CliError::Io { path: path.to_path_buf(), source }),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_format_is_stable_under_reparse() {
        for v in [0.0, 1.2053, -0.732050807568877, 3.4e-12, 98_765.4321, 1.0 / 3.0] {
            let once = fmt_sig(v);
            let reparsed: f64 = once.parse().expect("formatted floats parse back");
            assert_eq!(once, fmt_sig(reparsed), "unstable format for {v}");
        }
    }

    #[test]
    fn format_carries_twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_sig(1.2053), "1.20530000000e0");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut table = Table::new(&["p", "cost", "note"]);
        table.push_row(vec![fmt_sig(0.5), fmt_sig(3.25), "affine".to_string()]);
        table.push_row(vec![fmt_sig(0.85), fmt_sig(3.4), String::new()]);
        let first = table.to_csv_string().unwrap();
        let reparsed = Table::from_csv(first.as_bytes()).unwrap();
        assert_eq!(reparsed, table);
        let second = reparsed.to_csv_string().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_are_rejected() {
        let mut table = Table::new(&["a", "b"]);
        table.push_row(vec!["1".to_string()]);
    }
}
