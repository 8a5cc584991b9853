//! JSON-lines output: one serialized record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{IoError, IoResult};

pub struct JsonlWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> IoResult<Self> {
        let f = File::create(path).map_err(|e| IoError::io(path, e))?;
        Ok(JsonlWriter {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> IoResult<()> {
        let line = serde_json::to_string(record).map_err(|e| IoError::format(&self.path, e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| IoError::io(&self.path, e))
    }

    pub fn finish(mut self) -> IoResult<()> {
        self.out.flush().map_err(|e| IoError::io(&self.path, e))
    }
}

pub fn write_all<T: Serialize>(path: &Path, records: &[T]) -> IoResult<()> {
    let mut w = JsonlWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

/// Reads every non-blank line as one record.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> IoResult<Vec<T>> {
    let f = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IoError::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
