//! Per-iteration training metrics as a flat CSV file.
//!
//! One row per completed training iteration. Floats are written with the
//! shortest-roundtrip `%.17g` formatter so the file is byte-deterministic
//! for a deterministic run, and `aborted` marks iterations whose update was
//! rolled back after a non-finite training signal (their loss columns are
//! `nan` by design).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pifo_core::gfmt::format_g17;

use crate::error::{AppError, Result};

/// Column order of the metrics file; `HEADER` is the authoritative list.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub wall_clock_s: f64,
    pub disc_loss: f64,
    pub mean_d_imitator: f64,
    pub mean_d_expert: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_true_return: f64,
    pub mean_episode_len: f64,
    pub normalized_score: f64,
    pub aborted: bool,
}

pub const HEADER: &str = "iteration,wall_clock_s,disc_loss,mean_D_imitator,mean_D_expert,\
policy_loss,value_loss,entropy,clip_fraction,mean_true_return,mean_episode_len,\
normalized_score,aborted";

const COLUMNS: usize = 13;

impl MetricsRow {
    pub fn to_line(&self) -> String {
        let f = format_g17;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            f(self.wall_clock_s),
            f(self.disc_loss),
            f(self.mean_d_imitator),
            f(self.mean_d_expert),
            f(self.policy_loss),
            f(self.value_loss),
            f(self.entropy),
            f(self.clip_fraction),
            f(self.mean_true_return),
            f(self.mean_episode_len),
            f(self.normalized_score),
            u8::from(self.aborted),
        )
    }

    /// Parses one data row; the error text names the offending column.
    pub fn parse(line: &str) -> std::result::Result<MetricsRow, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(format!("expected {COLUMNS} columns, found {}", fields.len()));
        }
        let float = |i: usize| -> std::result::Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| format!("column {} is not a float: {:?}", i + 1, fields[i]))
        };
        Ok(MetricsRow {
            iteration: fields[0]
                .parse::<usize>()
                .map_err(|_| format!("column 1 is not an integer: {:?}", fields[0]))?,
            wall_clock_s: float(1)?,
            disc_loss: float(2)?,
            mean_d_imitator: float(3)?,
            mean_d_expert: float(4)?,
            policy_loss: float(5)?,
            value_loss: float(6)?,
            entropy: float(7)?,
            clip_fraction: float(8)?,
            mean_true_return: float(9)?,
            mean_episode_len: float(10)?,
            normalized_score: float(11)?,
            aborted: match fields[12] {
                "0" => false,
                "1" => true,
                other => return Err(format!("column 13 must be 0 or 1, found {other:?}")),
            },
        })
    }
}

/// Appends rows to a metrics file, flushing after each so a run can be
/// watched while it trains.
pub struct MetricsWriter {
    path: PathBuf,
    file: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<MetricsWriter> {
        let file = File::create(path).map_err(AppError::io(path))?;
        let mut w = MetricsWriter { path: path.to_path_buf(), file: BufWriter::new(file) };
        w.write_line(HEADER)?;
        Ok(w)
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.write_line(&row.to_line())
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let res = writeln!(self.file, "{line}").and_then(|_| self.file.flush());
        res.map_err(AppError::io(&self.path))
    }
}

/// Reads a whole metrics file; errors name the file and line number.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(AppError::io(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        Some((_, h)) => {
            return Err(AppError::Run(format!(
                "{}:1: unexpected header {h:?}",
                path.display()
            )))
        }
        None => return Err(AppError::Run(format!("{}:1: empty metrics file", path.display()))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = MetricsRow::parse(line).map_err(|e| {
            AppError::Run(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> MetricsRow {
        MetricsRow {
            iteration: 3,
            wall_clock_s: 1.5,
            disc_loss: 2.0 * std::f64::consts::LN_2,
            mean_d_imitator: 0.5,
            mean_d_expert: 0.5,
            policy_loss: -0.012345678901234567,
            value_loss: 10.25,
            entropy: 1.4189385332046727,
            clip_fraction: 0.0625,
            mean_true_return: 187.0,
            mean_episode_len: 200.0,
            normalized_score: f64::NAN,
            aborted: false,
        }
    }

    #[test]
    fn header_names_every_column_once() {
        let cols: Vec<&str> = HEADER.split(',').collect();
        assert_eq!(cols.len(), COLUMNS);
        assert_eq!(cols[0], "iteration");
        assert_eq!(cols[3], "mean_D_imitator");
        assert_eq!(cols[4], "mean_D_expert");
        assert_eq!(cols[12], "aborted");
        let mut unique = cols.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), cols.len());
    }

    #[test]
    fn row_roundtrips_through_text_exactly() {
        let row = sample_row();
        let line = row.to_line();
        let back = MetricsRow::parse(&line).unwrap();
        assert_eq!(back.iteration, row.iteration);
        assert!(back.normalized_score.is_nan());
        assert_eq!(back.to_line(), line);
    }

    #[test]
    fn parse_rejects_malformed_rows() {
        assert!(MetricsRow::parse("1,2,3").unwrap_err().contains("columns"));
        let mut line = sample_row().to_line();
        line = line.replacen("3,", "x,", 1);
        assert!(MetricsRow::parse(&line).unwrap_err().contains("column 1"));
        let line = sample_row().to_line().replace(",0", ",2"); // aborted flag
        assert!(MetricsRow::parse(&line).is_err());
    }

    #[test]
    fn file_roundtrip_and_error_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        {
            let mut w = MetricsWriter::create(&path).unwrap();
            let mut row = sample_row();
            w.append(&row).unwrap();
            row.iteration = 4;
            row.aborted = true;
            w.append(&row).unwrap();
        }
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].iteration, 3);
        assert!(rows[1].aborted);

        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("oops\n");
        std::fs::write(&path, text).unwrap();
        let err = read_metrics(&path).unwrap_err().to_string();
        assert!(err.contains("metrics.csv:4:"), "{err}");

        std::fs::write(&path, "bad,header\n").unwrap();
        let err = read_metrics(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }
}
