//! Streaming delivery of points to per-part sinks, with disk spill for
//! problems that must materialize their parts.
//!
//! Spill files are per-part temporary binary files: one row per delivered
//! point, a little-endian `u64` global index followed by the `d`
//! coordinates as little-endian `f64`. They are deleted on success and
//! retained (with their path reported) when a run fails.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::partition::ResolvedPartitioner;

use super::source::{ChunkSource, MemoryGauge};

/// Environment variable relocating spill files.
pub const SPILL_DIR_ENV: &str = "PARCON_TMPDIR";

/// Per-point routing plan for one repetition.
pub enum RoutePlan {
    /// Partition mode: each index belongs to exactly one part.
    Single(ResolvedPartitioner),
    /// Subsample mode: index -> (part, multiplicity) pairs.
    Multi(HashMap<usize, Vec<(usize, u32)>>),
}

impl RoutePlan {
    pub fn from_resolved(resolved: ResolvedPartitioner) -> Self {
        match &resolved {
            ResolvedPartitioner::Subsample { parts } => {
                let mut map: HashMap<usize, Vec<(usize, u32)>> = HashMap::new();
                for (l, part) in parts.iter().enumerate() {
                    for &idx in part {
                        let entry = map.entry(idx).or_default();
                        match entry.iter_mut().find(|(p, _)| *p == l) {
                            Some((_, count)) => *count += 1,
                            None => entry.push((l, 1)),
                        }
                    }
                }
                RoutePlan::Multi(map)
            }
            _ => RoutePlan::Single(resolved),
        }
    }
}

/// Streams the source once, delivering every point to the part(s) that
/// contain its index (with multiplicity in subsample mode).
pub fn route_stream(
    source: &mut dyn ChunkSource,
    chunk_points: usize,
    plan: &RoutePlan,
    gauge: &MemoryGauge,
    mut deliver: impl FnMut(usize, usize, &[f64]) -> Result<()>,
) -> Result<()> {
    source.reset()?;
    while let Some(chunk) = source.next_chunk(chunk_points)? {
        gauge.acquire(chunk.len());
        for i in 0..chunk.len() {
            let index = chunk.start + i;
            let point = chunk.point(i);
            match plan {
                RoutePlan::Single(resolved) => {
                    let part = resolved.part_of(index, point)?;
                    deliver(part, index, point)?;
                }
                RoutePlan::Multi(map) => {
                    if let Some(targets) = map.get(&index) {
                        for (part, mult) in targets {
                            for _ in 0..*mult {
                                deliver(*part, index, point)?;
                            }
                        }
                    }
                }
            }
        }
        gauge.release(chunk.len());
    }
    Ok(())
}

struct PartBuffer {
    indices: Vec<u64>,
    data: Vec<f64>,
    spill: Option<BufWriter<File>>,
    spilled_rows: usize,
    total_rows: usize,
}

impl PartBuffer {
    fn new() -> Self {
        Self {
            indices: Vec::new(),
            data: Vec::new(),
            spill: None,
            spilled_rows: 0,
            total_rows: 0,
        }
    }

    fn buffered_rows(&self) -> usize {
        self.indices.len()
    }
}

/// Per-part row store with a shared memory budget: rows accumulate in
/// memory and the largest buffer spills to disk when the budget is
/// exceeded.
pub struct PartStore {
    d: usize,
    parts: Vec<PartBuffer>,
    buffered: usize,
    budget_rows: usize,
    dir: Option<TempDir>,
    gauge: Arc<MemoryGauge>,
}

impl PartStore {
    pub fn new(l: usize, d: usize, budget_rows: usize, gauge: Arc<MemoryGauge>) -> Self {
        Self {
            d,
            parts: (0..l).map(|_| PartBuffer::new()).collect(),
            buffered: 0,
            budget_rows: budget_rows.max(1),
            dir: None,
            gauge,
        }
    }

    fn spill_root() -> PathBuf {
        std::env::var_os(SPILL_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(std::env::temp_dir)
    }

    fn ensure_dir(&mut self) -> Result<&TempDir> {
        if self.dir.is_none() {
            let dir = tempfile::Builder::new()
                .prefix("parcon-spill-")
                .tempdir_in(Self::spill_root())?;
            self.dir = Some(dir);
        }
        Ok(self.dir.as_ref().unwrap())
    }

    fn spill_path(dir: &TempDir, part: usize) -> PathBuf {
        dir.path().join(format!("part_{part}.bin"))
    }

    fn spill_largest(&mut self) -> Result<()> {
        let part = (0..self.parts.len())
            .max_by_key(|&l| self.parts[l].buffered_rows())
            .expect("store has at least one part");
        if self.parts[part].buffered_rows() == 0 {
            return Ok(());
        }
        let dir = self.ensure_dir()?;
        let path = Self::spill_path(dir, part);
        let buf = &mut self.parts[part];
        if buf.spill.is_none() {
            buf.spill = Some(BufWriter::new(File::create(path)?));
        }
        let writer = buf.spill.as_mut().unwrap();
        for (row, idx) in buf.indices.iter().enumerate() {
            writer.write_all(&idx.to_le_bytes())?;
            for v in &buf.data[row * self.d..(row + 1) * self.d] {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
        let rows = buf.buffered_rows();
        buf.spilled_rows += rows;
        buf.indices.clear();
        buf.data.clear();
        self.buffered -= rows;
        self.gauge.release(rows);
        Ok(())
    }

    pub fn push(&mut self, part: usize, index: usize, point: &[f64]) -> Result<()> {
        if self.buffered + 1 > self.budget_rows {
            self.spill_largest()?;
        }
        let buf = &mut self.parts[part];
        buf.indices.push(index as u64);
        buf.data.extend_from_slice(point);
        buf.total_rows += 1;
        self.buffered += 1;
        self.gauge.acquire(1);
        Ok(())
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn rows(&self, part: usize) -> usize {
        self.parts[part].total_rows
    }

    /// Reads a part back as `(global index, coordinates)` rows in delivery
    /// order (spilled rows first, then the in-memory tail — together that
    /// is exactly arrival order).
    pub fn read_part(&mut self, part: usize) -> Result<(Vec<u64>, Vec<f64>)> {
        let d = self.d;
        // Flush pending writes by dropping the writer before reading.
        if let Some(writer) = self.parts[part].spill.take() {
            writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        }
        let buf = &self.parts[part];
        let mut indices = Vec::with_capacity(buf.total_rows);
        let mut data = Vec::with_capacity(buf.total_rows * d);
        if buf.spilled_rows > 0 {
            let dir = self.dir.as_ref().expect("spilled part has a directory");
            let mut reader = BufReader::new(File::open(Self::spill_path(dir, part))?);
            let mut idx_bytes = [0u8; 8];
            let mut val_bytes = [0u8; 8];
            for _ in 0..buf.spilled_rows {
                reader.read_exact(&mut idx_bytes)?;
                indices.push(u64::from_le_bytes(idx_bytes));
                for _ in 0..d {
                    reader.read_exact(&mut val_bytes)?;
                    data.push(f64::from_le_bytes(val_bytes));
                }
            }
        }
        indices.extend_from_slice(&buf.indices);
        data.extend_from_slice(&buf.data);
        Ok((indices, data))
    }

    /// Materializes a part as a sub-measure whose parent map carries the
    /// global indices, consuming the part's in-memory buffer.
    pub fn materialize(&mut self, part: usize) -> Result<EmpiricalMeasure> {
        let (indices, data) = self.read_part(part)?;
        if indices.is_empty() {
            return Err(Error::EmptyPart { part });
        }
        let buf = &mut self.parts[part];
        let released = buf.buffered_rows();
        buf.indices = Vec::new();
        buf.data = Vec::new();
        self.buffered -= released;
        self.gauge.release(released);
        let parent: Vec<usize> = indices.iter().map(|i| *i as usize).collect();
        EmpiricalMeasure::with_parent(data, self.d, parent)
    }

    pub fn has_spilled(&self) -> bool {
        self.dir.is_some()
    }

    /// Persists the spill directory (normally deleted on drop) and returns
    /// its path, for post-mortem inspection after a failed run.
    pub fn keep_spill_dir(&mut self) -> Option<PathBuf> {
        self.dir.take().map(|d| d.keep())
    }
}
