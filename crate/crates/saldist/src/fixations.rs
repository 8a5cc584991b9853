//! Fixation lists as CSV with a `row,col` header and zero-based integer
//! coordinates. The grid size is not stored and must be supplied.

use std::path::Path;

use saldist_core::FixationSet;
use serde::{Deserialize, Serialize};

use crate::{IoError, IoResult};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    row: usize,
    col: usize,
}

pub fn read(path: &Path, height: usize, width: usize) -> IoResult<FixationSet> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().map(str::trim).ne(["row", "col"]) {
        return Err(IoError::format(path, "expected header \"row,col\""));
    }
    let points = reader
        .deserialize::<Record>()
        .map(|r| r.map(|r| (r.row, r.col)).map_err(|e| csv_error(path, e)))
        .collect::<IoResult<Vec<_>>>()?;
    FixationSet::new(height, width, points).map_err(|e| IoError::core(path, e))
}

pub fn write(path: &Path, fix: &FixationSet) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    // Written explicitly so an empty set still carries its header.
    w.write_record(["row", "col"]).map_err(|e| csv_error(path, e))?;
    for &(row, col) in fix.points() {
        w.write_record([row.to_string(), col.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IoError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        IoError::format(path, e.to_string())
    }
}
