//! Chunked, rewindable access to point data with a resident-point gauge.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// A batch of consecutive points with stable global indices.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub start: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Coordinates of the `i`-th point of this chunk (global index
    /// `start + i`).
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Provider of sequential fixed-size batches of points. Total count and
/// dimension are known at construction (one metadata scan, cached); two
/// passes over the same source yield identical `(index, point)` streams.
pub trait ChunkSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn dims(&self) -> usize;
    /// Rewinds to the first point.
    fn reset(&mut self) -> Result<()>;
    /// Next batch of at most `max_points` points, `None` at end of data.
    fn next_chunk(&mut self, max_points: usize) -> Result<Option<Chunk>>;
}

/// Counter of points currently resident in engine-owned buffers (chunks,
/// part buffers, materialized parts), with a running peak.
#[derive(Debug, Default)]
pub struct MemoryGauge {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemoryGauge {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn acquire(&self, points: usize) {
        let now = self.current.fetch_add(points, Ordering::SeqCst) + points;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn release(&self, points: usize) {
        self.current.fetch_sub(points, Ordering::SeqCst);
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// In-memory source over an existing measure.
#[derive(Debug, Clone)]
pub struct InMemorySource {
    measure: Arc<EmpiricalMeasure>,
    cursor: usize,
}

impl InMemorySource {
    pub fn new(measure: EmpiricalMeasure) -> Self {
        Self {
            measure: Arc::new(measure),
            cursor: 0,
        }
    }

    pub fn shared(measure: Arc<EmpiricalMeasure>) -> Self {
        Self { measure, cursor: 0 }
    }
}

impl ChunkSource for InMemorySource {
    fn len(&self) -> usize {
        self.measure.len()
    }

    fn dims(&self) -> usize {
        self.measure.dim()
    }

    fn reset(&mut self) -> Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn next_chunk(&mut self, max_points: usize) -> Result<Option<Chunk>> {
        if self.cursor >= self.measure.len() {
            return Ok(None);
        }
        let take = max_points.max(1).min(self.measure.len() - self.cursor);
        let d = self.measure.dim();
        let mut data = Vec::with_capacity(take * d);
        for i in self.cursor..self.cursor + take {
            data.extend_from_slice(self.measure.point(i));
        }
        let chunk = Chunk {
            start: self.cursor,
            d,
            data,
        };
        self.cursor += take;
        Ok(Some(chunk))
    }
}

/// Materializes the whole source; used by the validation oracles and the
/// desk-scale helpers. `max_points` guards against accidental huge loads.
pub fn load_measure(source: &mut dyn ChunkSource, max_points: usize) -> Result<EmpiricalMeasure> {
    let n = source.len();
    if n > max_points {
        return Err(Error::TooLargeForOracle { n, max: max_points });
    }
    let d = source.dims();
    source.reset()?;
    let mut data = Vec::with_capacity(n * d);
    while let Some(chunk) = source.next_chunk(65_536)? {
        data.extend_from_slice(&chunk.data);
    }
    EmpiricalMeasure::from_flat(data, d)
}
