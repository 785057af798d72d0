//! Result files: `#`-prefixed metadata lines followed by one CSV table.
//!
//! The metadata echoes the full config and the resolved seed so an output
//! file alone identifies the run that produced it. Numbers are written in
//! plain decimal with six significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

/// Formats `x` in plain decimal with `sig` significant digits.
///
/// Trailing zeros within the significant digits are kept so columns align;
/// integers above the significant range fall back to their exact form.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig > 0);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub struct OutputFile {
    writer: csv::Writer<BufWriter<File>>,
}

impl OutputFile {
    /// Creates the file and writes the metadata header.
    ///
    /// `extra` rows are mode-specific summary facts (key, value) echoed as
    /// comments ahead of the table.
    pub fn create(
        path: &Path,
        config: &ExperimentConfig,
        seed: u64,
        extra: &[(&str, String)],
    ) -> Result<OutputFile> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
            }
        }
        let file = File::create(path)
            .with_context(|| format!("cannot create output {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# banditune {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# seed = {seed}")?;
        for (key, value) in extra {
            writeln!(out, "# {key} = {value}")?;
        }
        writeln!(out, "# config:")?;
        let echo = toml::to_string(config).context("cannot serialize config")?;
        for line in echo.lines() {
            writeln!(out, "#   {line}")?;
        }
        let writer = csv::WriterBuilder::new().from_writer(out);
        Ok(OutputFile { writer })
    }

    pub fn header(&mut self, columns: &[&str]) -> Result<()> {
        self.writer.write_record(columns)?;
        Ok(())
    }

    /// Writes one row; numbers formatted to six significant digits.
    pub fn row(&mut self, fields: &[Field]) -> Result<()> {
        let rendered: Vec<String> = fields
            .iter()
            .map(|f| match f {
                Field::Num(x) => fmt_sig(*x, 6),
                Field::Int(i) => i.to_string(),
                Field::Text(s) => s.clone(),
                Field::Empty => String::new(),
            })
            .collect();
        self.writer.write_record(&rendered)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}
