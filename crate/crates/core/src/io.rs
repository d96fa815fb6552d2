//! Plain-text formats: matrix CSV, state trajectories, and trip records.
//!
//! Floats are written with 17 significant digits so every `f64` survives a
//! write/read cycle bit-exactly.

use std::io::{BufRead, Write};

use crate::chain::{Trajectory, TripRecord};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("i/o failure: {e}"))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines<R: BufRead>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if !line.trim().is_empty() {
            out.push((k + 1, line));
        }
    }
    Ok(out)
}

fn parse_float(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("not a number: {:?}", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {v}")));
    }
    Ok(v)
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One matrix row per line, comma separated.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &DenseMatrix) -> std::io::Result<()> {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&x| format_float(x)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<DenseMatrix> {
    let lines = content_lines(r)?;
    if lines.is_empty() {
        return Err(parse_err(1, "empty matrix file"));
    }
    let mut data = Vec::new();
    let mut cols = None;
    for (line, text) in &lines {
        let row: Vec<f64> = text.split(',').map(|f| parse_float(*line, f)).collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(*line, format!("expected {c} columns, found {}", row.len())))
            }
            _ => {}
        }
        data.extend(row);
    }
    DenseMatrix::new(lines.len(), cols.expect("non-empty"), data)
}

/// One value per line.
pub fn write_vector_csv<W: Write>(mut w: W, v: &[f64]) -> std::io::Result<()> {
    for &x in v {
        writeln!(w, "{}", format_float(x))?;
    }
    Ok(())
}

pub fn read_vector_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let lines = content_lines(r)?;
    if lines.is_empty() {
        return Err(parse_err(1, "empty vector file"));
    }
    lines.iter().map(|(line, text)| parse_float(*line, text)).collect()
}

pub fn write_trajectory<W: Write>(mut w: W, t: &Trajectory) -> std::io::Result<()> {
    for s in t.states() {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

/// One state index per line. The state count is `states` if given, else the
/// largest index plus one.
pub fn read_trajectory<R: BufRead>(r: R, states: Option<usize>) -> Result<Trajectory> {
    let lines = content_lines(r)?;
    if lines.is_empty() {
        return Err(parse_err(1, "empty trajectory file"));
    }
    let path: Vec<usize> = lines
        .iter()
        .map(|(line, text)| {
            text.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(*line, format!("not a state index: {:?}", text.trim())))
        })
        .collect::<Result<_>>()?;
    let max = *path.iter().max().expect("non-empty");
    let d = match states {
        Some(d) if d <= max => {
            let line = lines[path.iter().position(|&s| s >= d).expect("exists")].0;
            return Err(parse_err(line, format!("state {max} out of range for {d} states")));
        }
        Some(d) => d,
        None => max + 1,
    };
    if path.len() < 2 {
        return Err(parse_err(lines[0].0, "a trajectory needs at least two states"));
    }
    Trajectory::new(path, d)
}

/// `pickup_lon,pickup_lat,dropoff_lon,dropoff_lat` per line; the first
/// non-blank line is skipped when `header` is set.
pub fn read_trip_records<R: BufRead>(r: R, header: bool) -> Result<Vec<TripRecord>> {
    let lines = content_lines(r)?;
    let skip = usize::from(header).min(lines.len());
    let records: Vec<TripRecord> = lines[skip..]
        .iter()
        .map(|(line, text)| {
            let f: Vec<&str> = text.split(',').collect();
            if f.len() != 4 {
                return Err(parse_err(*line, format!("expected 4 fields, found {}", f.len())));
            }
            let c: Vec<f64> = f.iter().map(|x| parse_float(*line, x)).collect::<Result<_>>()?;
            TripRecord::new(c[0], c[1], c[2], c[3]).map_err(|e| parse_err(*line, e.to_string()))
        })
        .collect::<Result<_>>()?;
    if records.is_empty() {
        return Err(parse_err(1, "no trip records"));
    }
    Ok(records)
}
