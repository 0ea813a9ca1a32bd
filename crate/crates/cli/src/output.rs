//! Artifact writers. CSV files start with a `#` line naming the artifact,
//! its schema version and the columns; floats carry 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use poisson_vga::linalg::vgam::write_vgam;
use serde::Serialize;

use crate::error::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

/// A CSV cell.
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Missing,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn csv_string(artifact: &str, columns: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut s = format!(
        "# poisson-vga {artifact} v{ARTIFACT_VERSION}: {}\n",
        columns.join(",")
    );
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        for (k, cell) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            match cell {
                Cell::Int(v) => write!(s, "{v}").unwrap(),
                Cell::Float(v) => s.push_str(&format_float(*v)),
                Cell::Bool(v) => write!(s, "{v}").unwrap(),
                Cell::Missing => {}
            }
        }
        s.push('\n');
    }
    s
}

/// Writes into one run directory and remembers what it wrote.
pub struct RunDir {
    root: PathBuf,
    pub written: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.put(name, text.as_bytes())
    }

    pub fn csv(
        &mut self,
        name: &str,
        artifact: &str,
        columns: &[&str],
        rows: &[Vec<Cell>],
    ) -> Result<(), CliError> {
        self.text(name, &csv_string(artifact, columns, rows))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        self.text(name, &s)
    }

    pub fn vgam(&mut self, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        let mut buf = Vec::with_capacity(21 + 8 * m.len());
        write_vgam(&mut buf, m)?;
        self.put(name, &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s
                .split('e')
                .next()
                .unwrap()
                .trim_start_matches('-')
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn csv_layout() {
        let s = csv_string(
            "trace",
            &["k", "alpha", "ok"],
            &[
                vec![0usize.into(), 0.5.into(), true.into()],
                vec![1usize.into(), None.into(), false.into()],
            ],
        );
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# poisson-vga trace v1: k,alpha,ok");
        assert_eq!(lines[1], "k,alpha,ok");
        assert_eq!(lines[2], "0,5.0000000000000000e-1,true");
        assert_eq!(lines[3], "1,,false");
    }
}
