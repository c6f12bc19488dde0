//! Atomic file output and the CSV conventions shared by every table.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Writes a file through a temporary sibling and a rename, so readers never
/// observe a partially written file.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Comment line opening every CSV file.
pub fn csv_comment(seed: u64) -> String {
    format!("# beam-protonet {} seed={seed}", env!("CARGO_PKG_VERSION"))
}

/// Writes `rows` as CSV with a leading comment line and a header row taken
/// from the row type's field names.
pub fn write_csv<T: Serialize>(path: &Path, seed: u64, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", csv_comment(seed))?;
        let mut cw = csv::Writer::from_writer(w);
        for r in rows {
            cw.serialize(r).map_err(std::io::Error::other)?;
        }
        cw.flush()
    })
}

/// Writes a CSV with an explicit header and string records.
pub fn write_csv_records(path: &Path, seed: u64, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", csv_comment(seed))?;
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(header).map_err(std::io::Error::other)?;
        for r in rows {
            cw.write_record(r).map_err(std::io::Error::other)?;
        }
        cw.flush()
    })
}

/// Reads a CSV written by [`write_csv`], skipping comment lines.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rd.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use serde::Deserialize;

    use super::*;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Row {
        k: usize,
        acc: f64,
    }

    #[test]
    fn csv_round_trip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![Row { k: 1, acc: 0.5 }, Row { k: 2, acc: 0.75 }];
        write_csv(&p, 42, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# beam-protonet "));
        assert!(text.lines().next().unwrap().ends_with("seed=42"));
        assert_eq!(text.lines().nth(1).unwrap(), "k,acc");
        assert_eq!(read_csv::<Row>(&p).unwrap(), rows);
        // No temporary files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_csv::<Row>(Path::new("/nonexistent-dir/x.csv"), 0, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
