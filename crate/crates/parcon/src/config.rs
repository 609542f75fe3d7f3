//! Run configuration and report files.
//!
//! A run config is a JSON document with `data`, `problem`, `partitioner`,
//! `K`, and optional `combine`, `engine`, and `output` blocks. Loading
//! re-validates every solution constraint and reports failures by key path
//! (for example `partitioner.L`). Reports are JSON files whose `config`
//! echo, re-fed as a config, reproduces the run; the checksum covers the
//! canonical form of the resolved config (engine tuning and output path
//! excluded, since they cannot change results).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{EngineParams, RunReport};
use crate::error::{Error, Result};
use crate::io::{DataFormat, FileSource, IngestOptions};
use crate::measure::ResultValue;
use crate::partition::{PartitionScheme, PartitionerSpec};
use crate::solutions::{OutlierParams, PValueAdjust, ProblemSpec, SolutionSpec};
use crate::validation::{ConvergenceTrace, SecondStageCombiner, ViabilityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: DataFormat,
    #[serde(default)]
    pub has_header: bool,
    /// Row width; required for `f64le`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Sort-key coordinate used when the partitioner block leaves it unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CombineConfig {
    /// p-value adjustment for the test combiner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjust: Option<PValueAdjust>,
    /// Outlier stability fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Outlier robust-score threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Second-stage combiner used by the convergence command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combiner: Option<SecondStageCombiner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub workers: usize,
    pub memory_budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    pub keep_per_part: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            memory_budget: 256 * 1024 * 1024,
            chunk_size: None,
            keep_per_part: false,
        }
    }
}

impl EngineConfig {
    pub fn to_params(&self) -> EngineParams {
        EngineParams {
            workers: self.workers.max(1),
            memory_budget: self.memory_budget,
            chunk_size: self.chunk_size,
            keep_per_part: self.keep_per_part,
        }
    }
}

/// A fully resolved run configuration; also the spec echo embedded in
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub problem: ProblemSpec,
    pub partitioner: PartitionerSpec,
    #[serde(rename = "K")]
    pub repetitions: usize,
    #[serde(default)]
    pub combine: CombineConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn missing_field(msg: &str) -> Option<&str> {
    msg.strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
}

fn parse_block<T: DeserializeOwned>(
    doc: &serde_json::Map<String, serde_json::Value>,
    block: &str,
) -> Result<T> {
    let value = doc
        .get(block)
        .ok_or_else(|| Error::config(block, "missing block"))?;
    serde_json::from_value(value.clone()).map_err(|e| {
        let msg = e.to_string();
        let key = match missing_field(&msg) {
            Some(field) => format!("{block}.{field}"),
            None => block.to_string(),
        };
        Error::config(key, msg)
    })
}

fn parse_optional_block<T: DeserializeOwned + Default>(
    doc: &serde_json::Map<String, serde_json::Value>,
    block: &str,
) -> Result<T> {
    match doc.get(block) {
        None => Ok(T::default()),
        Some(value) => serde_json::from_value(value.clone()).map_err(|e| {
            let msg = e.to_string();
            let key = match missing_field(&msg) {
                Some(field) => format!("{block}.{field}"),
                None => block.to_string(),
            };
            Error::config(key, msg)
        }),
    }
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let doc: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::config("<root>", e.to_string()))?;
        let doc = doc
            .as_object()
            .ok_or_else(|| Error::config("<root>", "config must be a JSON object"))?;

        let data: DataConfig = parse_block(doc, "data")?;
        let problem: ProblemSpec = parse_block(doc, "problem")?;
        let mut partitioner: PartitionerSpec = parse_block(doc, "partitioner")?;
        let repetitions: usize = match doc.get("K") {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| Error::config("K", e.to_string()))?
            }
            None => return Err(Error::config("K", "missing repetition count")),
        };
        let combine: CombineConfig = parse_optional_block(doc, "combine")?;
        let engine: EngineConfig = parse_optional_block(doc, "engine")?;
        let output: Option<PathBuf> = match doc.get("output") {
            None => None,
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::config("output", e.to_string()))?,
        };

        // The data block's key_dim feeds a range partitioner that left it
        // unset (the partitioner block wins when both are given).
        if let (Some(key_dim), PartitionScheme::RangeBounded { key_dim: k, .. }) =
            (data.key_dim, &mut partitioner.scheme)
        {
            if *k == 0 {
                *k = key_dim;
            }
        }

        let config = RunConfig {
            data,
            problem,
            partitioner,
            repetitions,
            combine,
            engine,
            output,
        };
        config.to_solution_spec()?.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_slice(&bytes)
    }

    /// The solution this config describes, with combine-block overrides
    /// applied to the problem parameters.
    pub fn to_solution_spec(&self) -> Result<SolutionSpec> {
        let mut problem = self.problem.clone();
        match &mut problem {
            ProblemSpec::Test(p) => {
                if let Some(adjust) = self.combine.adjust {
                    p.adjust = adjust;
                }
            }
            ProblemSpec::Outlier(p) => {
                if let Some(tau) = self.combine.tau {
                    p.tau = tau;
                }
                if let Some(c) = self.combine.c {
                    p.c = c;
                }
            }
            _ => {
                if self.combine.adjust.is_some() {
                    return Err(Error::config(
                        "combine.adjust",
                        "only meaningful for the test problem",
                    ));
                }
                if self.combine.tau.is_some() || self.combine.c.is_some() {
                    return Err(Error::config(
                        "combine.tau",
                        "only meaningful for the outlier problem",
                    ));
                }
            }
        }
        Ok(SolutionSpec {
            problem,
            partitioner: self.partitioner.clone(),
            repetitions: self.repetitions,
        })
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            has_header: self.data.has_header,
            dims: self.data.d,
            label_column: self.data.label_column,
        }
    }

    pub fn open_source(&self) -> Result<FileSource> {
        crate::io::ingest(&self.data.path, self.data.format, self.ingest_options())
    }

    /// Canonical form: engine tuning and output path stripped, since they
    /// cannot affect results.
    pub fn canonical(&self) -> RunConfig {
        let mut c = self.clone();
        c.engine = EngineConfig::default();
        c.output = None;
        c
    }

    /// Hex SHA-256 of the canonical serialized config.
    pub fn checksum(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Convenience for tests and defaults.
    pub fn outlier_params(&self) -> OutlierParams {
        match &self.problem {
            ProblemSpec::Outlier(p) => *p,
            _ => OutlierParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub artifact_version: String,
    pub config_checksum: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<ResultValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viability: Option<ViabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportFile {
    pub fn new(config: &RunConfig) -> Self {
        ReportFile {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_checksum: config.checksum(),
            config: Some(config.clone()),
            ..Default::default()
        }
    }

    /// Serialized form with volatile fields (timing, worker count, memory
    /// peaks, engine tuning, output path) normalized away; two runs of the
    /// same solution compare equal on these bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut r = self.clone();
        if let Some(config) = r.config.take() {
            r.config = Some(config.canonical());
        }
        if let Some(mut run) = r.run.take() {
            run.timing = Default::default();
            run.workers = 0;
            run.peak_resident_points = 0;
            r.run = Some(run);
        }
        serde_json::to_vec_pretty(&r).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::config("<report>", e.to_string()))
    }

    /// Recomputes the echoed config's checksum and compares.
    pub fn verify_checksum(&self) -> bool {
        match &self.config {
            Some(config) => config.checksum() == self.config_checksum,
            None => false,
        }
    }
}
