//! CSV tables with a trailing `# key=value` metadata block.

use std::io::Write;

use crate::conditions::Verdict;
use crate::error::Result;

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Human-readable lines for stderr.
    pub summary: Vec<String>,
    /// (name, verdict) pairs, also written to the metadata block.
    pub verdicts: Vec<(String, Verdict)>,
    pub metadata: Vec<(String, String)>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn verdict(&mut self, name: impl Into<String>, verdict: Verdict) {
        self.verdicts.push((name.into(), verdict));
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut *out);
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        for (name, v) in &self.verdicts {
            writeln!(out, "# verdict.{name}={v}")?;
        }
        Ok(())
    }
}

/// Shortest round-trip formatting, so output is reproducible bit for bit.
pub fn num(x: f64) -> String {
    format!("{x}")
}
