//! JSON-lines measurement logs: one `MeasurementRecord` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::photon::MeasurementRecord;

pub fn write_records<W: Write>(mut out: W, records: &[MeasurementRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses a log, skipping blank lines. `origin` is only used in error messages.
pub fn read_records<R: BufRead>(input: R, origin: &Path) -> Result<Vec<MeasurementRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            kind: "measurement log",
            path: origin.to_path_buf(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_log(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), path)
}
