//! Line-delimited JSON helpers shared by the dataset, facts and gold files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::DataError;

/// Parses one value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(format!("reading line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::from_json(line_no, e))?);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl<'a, T: Serialize + 'a, W: Write>(
    mut out: W,
    items: impl IntoIterator<Item = &'a T>,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_jsonl_file<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    write_jsonl(BufWriter::new(file), items).map_err(|e| DataError::io(path.display().to_string(), e))
}
