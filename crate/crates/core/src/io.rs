//! Small serialization helpers shared by the report types.

use crate::error::{LabError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Writes a CSV table of numbers. `f64` values use the shortest
/// representation that round-trips.
pub fn write_csv<W: Write, I>(w: &mut W, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(LabError::Format(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn csv_string<I>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows)?;
    String::from_utf8(buf).map_err(|e| LabError::Format(e.to_string()))
}

/// Parses a numeric CSV table written by [`write_csv`]. Lines starting with
/// `#` are comments.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| LabError::Format("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Format(format!("row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(LabError::Format(format!("row {} has {} fields", i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}
