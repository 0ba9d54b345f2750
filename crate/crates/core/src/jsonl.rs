//! Line-delimited JSON reading and writing. Paths ending in `.gz` are
//! transparently (de)compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Parses every non-blank line of `path`, running `check` on each record.
/// Any failure aborts the whole load and names the 1-based line.
pub fn read_with<T, F>(path: &Path, mut check: F) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    F: FnMut(&T) -> Option<String>,
{
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Line {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(message) = check(&record) {
            return Err(Error::Line {
                path: path.to_path_buf(),
                line: line_no,
                message,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_with(path, |_| None)
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let sink: Box<dyn Write> = if is_gz(path) {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    };
    let mut w = BufWriter::new(sink);
    for record in records {
        serde_json::to_writer(&mut w, record)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
