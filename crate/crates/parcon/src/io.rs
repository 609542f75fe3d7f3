//! Dataset ingestion: chunked, rewindable sources over CSV, JSONL, and raw
//! little-endian f64 files.
//!
//! Formats: CSV is comma-separated with '.' decimals and an optional single
//! header line; JSONL holds one JSON array of numbers per line; `f64le` is
//! row-major little-endian IEEE-754 doubles with the dimension supplied by
//! the caller. Opening a source runs one full validation scan (row count,
//! consistent dimension, finite values) and rewinds; indices follow file
//! order. An optional label column is moved to the last coordinate so
//! classification problems can treat it uniformly.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::source::{Chunk, ChunkSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Jsonl,
    F64le,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub has_header: bool,
    /// Width of one row; required for `F64le`, inferred otherwise.
    pub dims: Option<usize>,
    /// Column moved to the last coordinate.
    pub label_column: Option<usize>,
}

/// Chunked source over a data file with stable indices in file order.
#[derive(Debug)]
pub struct FileSource {
    path: PathBuf,
    format: DataFormat,
    options: IngestOptions,
    n: usize,
    d: usize,
    state: Option<ReadState>,
    cursor: usize,
}

#[derive(Debug)]
enum ReadState {
    Lines(BufReader<File>, usize), // reader + current 1-based file line
    Bytes(BufReader<File>),
}

fn reorder_label(row: &mut Vec<f64>, label_column: Option<usize>) {
    if let Some(col) = label_column {
        let label = row.remove(col);
        row.push(label);
    }
}

fn parse_csv_row(line: &str, row: usize) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(col, field)| {
            let trimmed = field.trim();
            let v: f64 = trimmed.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("{trimmed:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("non-finite value {v}"),
                });
            }
            Ok(v)
        })
        .collect()
}

fn parse_jsonl_row(line: &str, row: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = serde_json::from_str(line).map_err(|e| Error::Parse {
        row,
        column: e.column(),
        message: e.to_string(),
    })?;
    for (col, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                column: col + 1,
                message: format!("non-finite value {v}"),
            });
        }
    }
    Ok(values)
}

impl FileSource {
    fn check_dims(&mut self, got: usize, row: usize) -> Result<()> {
        if self.d == 0 {
            if got == 0 {
                return Err(Error::Parse {
                    row,
                    column: 1,
                    message: "row has no columns".into(),
                });
            }
            self.d = got;
        } else if got != self.d {
            return Err(Error::DimensionMismatch {
                context: format!("row {row}"),
                expected: self.d,
                got,
            });
        }
        if let Some(col) = self.options.label_column {
            if col >= self.d {
                return Err(Error::IndexOutOfRange {
                    index: col,
                    n: self.d,
                });
            }
        }
        Ok(())
    }

    /// Full validation pass: counts rows, pins the dimension, rejects
    /// non-finite or ragged data.
    fn scan(&mut self) -> Result<()> {
        self.reset()?;
        let mut n = 0usize;
        while self.read_row()?.is_some() {
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("data file has no rows"));
        }
        self.n = n;
        self.reset()
    }

    /// Next parsed row (already label-reordered), `None` at end.
    fn read_row(&mut self) -> Result<Option<Vec<f64>>> {
        let state = self.state.as_mut().expect("source is open");
        match state {
            ReadState::Lines(reader, line_no) => loop {
                let mut line = String::new();
                if reader.read_line(&mut line)? == 0 {
                    return Ok(None);
                }
                *line_no += 1;
                let row_no = *line_no;
                if line.trim().is_empty() {
                    continue;
                }
                let mut row = match self.format {
                    DataFormat::Csv => parse_csv_row(&line, row_no)?,
                    DataFormat::Jsonl => parse_jsonl_row(&line, row_no)?,
                    DataFormat::F64le => unreachable!("binary sources use byte state"),
                };
                self.check_dims(row.len(), row_no)?;
                reorder_label(&mut row, self.options.label_column);
                return Ok(Some(row));
            },
            ReadState::Bytes(reader) => {
                let d = self.d;
                let mut buf = vec![0u8; d * 8];
                match reader.read_exact(&mut buf) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
                let mut row: Vec<f64> = buf
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                for (col, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: self.cursor + 1,
                            column: col + 1,
                            message: format!("non-finite value {v}"),
                        });
                    }
                }
                reorder_label(&mut row, self.options.label_column);
                Ok(Some(row))
            }
        }
    }
}

impl ChunkSource for FileSource {
    fn len(&self) -> usize {
        self.n
    }

    fn dims(&self) -> usize {
        self.d
    }

    fn reset(&mut self) -> Result<()> {
        self.cursor = 0;
        match self.format {
            DataFormat::F64le => {
                let mut reader = BufReader::new(File::open(&self.path)?);
                reader.seek(SeekFrom::Start(0))?;
                self.state = Some(ReadState::Bytes(reader));
            }
            _ => {
                let mut reader = BufReader::new(File::open(&self.path)?);
                let mut line_no = 0usize;
                if self.options.has_header {
                    let mut header = String::new();
                    reader.read_line(&mut header)?;
                    line_no = 1;
                }
                self.state = Some(ReadState::Lines(reader, line_no));
            }
        }
        Ok(())
    }

    fn next_chunk(&mut self, max_points: usize) -> Result<Option<Chunk>> {
        if self.cursor >= self.n {
            return Ok(None);
        }
        let take = max_points.max(1).min(self.n - self.cursor);
        let start = self.cursor;
        let mut data = Vec::with_capacity(take * self.d);
        for _ in 0..take {
            match self.read_row()? {
                Some(row) => {
                    data.extend_from_slice(&row);
                    self.cursor += 1;
                }
                None => break,
            }
        }
        if data.is_empty() {
            return Ok(None);
        }
        Ok(Some(Chunk {
            start,
            d: self.d,
            data,
        }))
    }
}

/// Opens and fully validates a data file, returning a rewindable source.
pub fn ingest(path: &Path, format: DataFormat, options: IngestOptions) -> Result<FileSource> {
    let mut source = FileSource {
        path: path.to_path_buf(),
        format,
        options,
        n: 0,
        d: 0,
        state: None,
        cursor: 0,
    };
    if format == DataFormat::F64le {
        let d = options
            .dims
            .ok_or_else(|| Error::config("data.d", "binary ingestion needs the row width d"))?;
        if d == 0 {
            return Err(Error::config("data.d", "d must be at least 1"));
        }
        let bytes = std::fs::metadata(path)?.len();
        if bytes % (d as u64 * 8) != 0 {
            return Err(Error::Parse {
                row: 0,
                column: 0,
                message: format!(
                    "file size {bytes} is not a multiple of {} bytes per row",
                    d * 8
                ),
            });
        }
        source.d = d;
    }
    source.scan()?;
    Ok(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::source::load_measure;
    use std::io::Write;

    fn write_temp(content: &[u8], suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_two_by_two() {
        let f = write_temp(b"1.0,2.0\n3.0,4.0\n", ".csv");
        let mut src = ingest(f.path(), DataFormat::Csv, IngestOptions::default()).unwrap();
        assert_eq!(src.len(), 2);
        assert_eq!(src.dims(), 2);
        let m = load_measure(&mut src, 100).unwrap();
        assert_eq!(m.point(0), &[1.0, 2.0]);
        assert_eq!(m.point(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_parse_error_names_row_and_column() {
        let f = write_temp(b"1.0,2.0\nabc,4.0\n", ".csv");
        let err = ingest(f.path(), DataFormat::Csv, IngestOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, 1);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_header_skipped_and_rows_renumbered() {
        let f = write_temp(b"x,y\n1.0,2.0\nbad,0\n", ".csv");
        let options = IngestOptions {
            has_header: true,
            ..Default::default()
        };
        let err = ingest(f.path(), DataFormat::Csv, options).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3, "rows count file lines"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let f = write_temp(b"1.0,2.0\n3.0\n", ".csv");
        assert!(matches!(
            ingest(f.path(), DataFormat::Csv, IngestOptions::default()).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn jsonl_rows() {
        let f = write_temp(b"[1.5, 2.5]\n[3.5, 4.5]\n", ".jsonl");
        let mut src = ingest(f.path(), DataFormat::Jsonl, IngestOptions::default()).unwrap();
        let m = load_measure(&mut src, 10).unwrap();
        assert_eq!(m.point(1), &[3.5, 4.5]);
    }

    #[test]
    fn binary_round_trip() {
        let values = [0.25f64, -1.5];
        let mut bytes = Vec::new();
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let f = write_temp(&bytes, ".bin");
        let options = IngestOptions {
            dims: Some(2),
            ..Default::default()
        };
        let mut src = ingest(f.path(), DataFormat::F64le, options).unwrap();
        assert_eq!(src.len(), 1);
        let m = load_measure(&mut src, 10).unwrap();
        assert_eq!(m.point(0), &values);
    }

    #[test]
    fn binary_size_mismatch_rejected() {
        let f = write_temp(&[0u8; 20], ".bin");
        let options = IngestOptions {
            dims: Some(2),
            ..Default::default()
        };
        assert!(ingest(f.path(), DataFormat::F64le, options).is_err());
    }

    #[test]
    fn label_column_moves_to_last_coordinate() {
        let f = write_temp(b"1.0,9.0,2.0\n3.0,8.0,4.0\n", ".csv");
        let options = IngestOptions {
            label_column: Some(1),
            ..Default::default()
        };
        let mut src = ingest(f.path(), DataFormat::Csv, options).unwrap();
        let m = load_measure(&mut src, 10).unwrap();
        assert_eq!(m.point(0), &[1.0, 2.0, 9.0]);
        assert_eq!(m.point(1), &[3.0, 4.0, 8.0]);
    }

    #[test]
    fn two_ingests_stream_identically() {
        let f = write_temp(b"1.0\n2.0\n3.0\n4.0\n5.0\n", ".csv");
        let mut a = ingest(f.path(), DataFormat::Csv, IngestOptions::default()).unwrap();
        let mut b = ingest(f.path(), DataFormat::Csv, IngestOptions::default()).unwrap();
        let ma = load_measure(&mut a, 10).unwrap();
        let mb = load_measure(&mut b, 10).unwrap();
        assert_eq!(ma, mb);
        // And a second pass over the same source matches the first.
        let ma2 = load_measure(&mut a, 10).unwrap();
        assert_eq!(ma, ma2);
    }

    #[test]
    fn nan_in_binary_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        let f = write_temp(&bytes, ".bin");
        let options = IngestOptions {
            dims: Some(1),
            ..Default::default()
        };
        assert!(ingest(f.path(), DataFormat::F64le, options).is_err());
    }
}
