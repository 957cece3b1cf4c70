//! Summary and CSV emission. Reruns with the same config and seed must be
//! byte-identical, so everything here formats deterministically: JSON keys
//! are sorted by serde_json's default map, floats use either serde_json's
//! shortest round-trip form or the fixed 17-significant-digit CSV form.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

/// 17 significant digits: enough to reconstruct any f64 bit-exactly.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_full(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// RFC-4180-style CSV: header row, comma separator, '.' decimal, LF line
/// endings. No field written here ever needs quoting.
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { lines: vec![header.join(",")] }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = self.lines.join("\n");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// The stable summary schema shared by every command.
pub struct Summary {
    pub command: &'static str,
    pub config_echo: Value,
    pub results: Value,
    pub warnings: Vec<String>,
}

impl Summary {
    /// Serialize, write `<out>/summary.json`, and print the same bytes to
    /// stdout.
    pub fn emit(&self, out_dir: &Path) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "command": self.command,
            "config_echo": self.config_echo,
            "results": self.results,
            "warnings": self.warnings,
        });
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Internal(format!("summary serialization failed: {e}")))?;
        text.push('\n');
        write_file(&out_dir.join("summary.json"), text.as_bytes())?;
        print!("{text}");
        Ok(())
    }
}

pub fn ensure_out_dir(dir: &PathBuf) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Internal(format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.9987519224031454, 1e-300] {
            let s = full(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&["1".into(), String::new()]);
        assert_eq!(csv.lines.join("\n"), "a,b\n1,");
    }
}
