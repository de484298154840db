//! CSV and JSON artifacts, and readers for them.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use mlnsim_core::pep::RatioPoint;
use mlnsim_core::{BerCurve, BerPoint, PepEstimate};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PEP_HEADER: [&str; 5] = ["snr_db", "value", "std_error", "trials", "method"];
pub const BER_HEADER: [&str; 6] = ["snr_db", "ber", "ci_low", "ci_high", "error_events", "trials"];
pub const RATIO_HEADER: [&str; 3] = ["snr_db", "ratio", "std_error"];

/// Fixed 15-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.14e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<const K: usize>(path: &Path, header: [&str; K], rows: impl Iterator<Item = [String; K]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_pep_csv(path: &Path, estimates: &[PepEstimate]) -> Result<(), CliError> {
    write_rows(
        path,
        PEP_HEADER,
        estimates.iter().map(|e| {
            [
                fmt_f64(e.snr_db),
                fmt_f64(e.value),
                fmt_f64(e.std_error),
                e.trials.to_string(),
                e.method.to_string(),
            ]
        }),
    )
}

pub fn write_ber_csv(path: &Path, curve: &BerCurve) -> Result<(), CliError> {
    write_rows(
        path,
        BER_HEADER,
        curve.points.iter().map(|p| {
            [
                fmt_f64(p.snr_db),
                fmt_f64(p.ber),
                fmt_f64(p.ci_low),
                fmt_f64(p.ci_high),
                p.error_events.to_string(),
                p.trials.to_string(),
            ]
        }),
    )
}

/// Censored points leave `ratio` and `std_error` empty.
pub fn write_ratio_csv(path: &Path, points: &[RatioPoint]) -> Result<(), CliError> {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    write_rows(
        path,
        RATIO_HEADER,
        points.iter().map(|p| [fmt_f64(p.snr_db), opt(p.ratio), opt(p.std_error)]),
    )
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let got = r.headers().map_err(|e| io_err(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(io_err(path, format!("unexpected header {got:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}

pub fn read_pep_csv(path: &Path) -> Result<Vec<PepEstimate>, CliError> {
    read_rows(path, &PEP_HEADER)
}

pub fn read_ber_csv(path: &Path) -> Result<BerCurve, CliError> {
    read_rows::<BerPoint>(path, &BER_HEADER).map(BerCurve::new)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub snr_db: f64,
    pub ratio: Option<f64>,
    pub std_error: Option<f64>,
}

pub fn read_ratio_csv(path: &Path) -> Result<Vec<RatioRow>, CliError> {
    read_rows(path, &RATIO_HEADER)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| io_err(path, e))
}

/// Files written so far by one command; removed unless the command commits.
#[derive(Debug, Default)]
pub struct Artifacts {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn track(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mlnsim_core::PepMethod;

    #[test]
    fn float_format_keeps_fifteen_digits() {
        assert_eq!(fmt_f64(0.1), "1.00000000000000e-1");
        assert_eq!(fmt_f64(0.0), "0.00000000000000e0");
        assert_eq!(fmt_f64(-40.0), "-4.00000000000000e1");
        let x = 0.123_456_789_012_345_67;
        assert!((fmt_f64(x).parse::<f64>().unwrap() - x).abs() < 1e-15);
    }

    #[test]
    fn pep_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pep.csv");
        let est = vec![
            PepEstimate {
                snr_db: 10.0,
                value: 0.012_345_678_901_234,
                std_error: 1e-5,
                trials: 1000,
                method: PepMethod::QFunctionMc,
            },
            PepEstimate {
                snr_db: 15.0,
                value: 0.0,
                std_error: 0.0,
                trials: 1000,
                method: PepMethod::EigenProductMc,
            },
        ];
        write_pep_csv(&path, &est).unwrap();
        let back = read_pep_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], est[1]);
        assert!((back[0].value - est[0].value).abs() < 1e-16);
    }

    #[test]
    fn ratio_round_trip_with_censoring() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratio.csv");
        let e = PepEstimate {
            snr_db: 0.0,
            value: 0.5,
            std_error: 0.0,
            trials: 1,
            method: PepMethod::QFunctionMc,
        };
        let pts = vec![
            RatioPoint {
                snr_db: 0.0,
                ratio: Some(0.25),
                std_error: Some(0.01),
                unitary: e.clone(),
                uniform: e.clone(),
            },
            RatioPoint {
                snr_db: 5.0,
                ratio: None,
                std_error: None,
                unitary: e.clone(),
                uniform: e,
            },
        ];
        write_ratio_csv(&path, &pts).unwrap();
        let back = read_ratio_csv(&path).unwrap();
        assert_eq!(back[0].ratio, Some(0.25));
        assert_eq!(back[1].ratio, None);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_ber_csv(&path).is_err());
    }

    #[test]
    fn uncommitted_artifacts_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let keep = dir.path().join("keep.txt");
        let drop = dir.path().join("drop.txt");
        {
            let mut a = Artifacts::default();
            std::fs::write(a.track(keep.clone()), "x").unwrap();
            a.commit();
        }
        {
            let mut a = Artifacts::default();
            std::fs::write(a.track(drop.clone()), "x").unwrap();
        }
        assert!(keep.exists());
        assert!(!drop.exists());
    }
}
