//! Partition-repetition analytics engine.
//!
//! A dataset is treated as a finite empirical measure (mass `1/n` on each of
//! its `n` points). A sampled partitioning functional splits it into `L`
//! parts, a problem approach `rho` is applied to every part, and two-stage
//! combiners merge the per-part results within a repetition and then across
//! `K` independent repetitions. The [`engine`] runs this pipeline out of
//! core with bounded memory and deterministic output; the [`validation`]
//! module checks combined results against full-data oracles, estimates
//! viability of a partitioner/combiner pair by Monte Carlo, and traces
//! empirical convergence of the repetition average.

pub mod config;
pub mod engine;
pub mod error;
pub mod io;
pub mod measure;
pub mod numeric;
pub mod partition;
pub mod solutions;
pub mod validation;

pub use error::{Error, Result};
pub use measure::{DataPoint, EmpiricalMeasure, EvalVector, ResultValue};
pub use partition::{PartitionAssignment, PartitionScheme, PartitionerSpec};
pub use solutions::{ProblemSpec, SolutionSpec};
