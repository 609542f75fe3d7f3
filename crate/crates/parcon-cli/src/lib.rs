//! Command-line front end: loads a run config, drives the engine or the
//! validation harness, writes a JSON report, and maps outcomes to exit
//! codes (0 success, 1 a not-viable verdict from `viability`, 2 any error).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use parcon::config::{ReportFile, RunConfig};
use parcon::engine::{self, load_measure};
use parcon::measure::ResultValue;
use parcon::validation::{self, SecondStageCombiner, Verdict, MAX_ORACLE_N};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_VIABLE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "parcon",
    about = "Partition-repetition analytics: run solutions out of core, check them against full-data oracles",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute the configured solution end to end.
    Run(CommonArgs),
    /// Apply the problem approach directly to the full data.
    Oracle(CommonArgs),
    /// Monte Carlo check of the viability condition; exits 1 when the
    /// verdict is NotViable. `K` is the number of draws.
    Viability(CommonArgs),
    /// Trace evaluation-space convergence over repetitions. `K` is the
    /// maximum repetition count.
    Converge(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override engine.workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override partitioner.base_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// Loads the config and applies flag overrides.
    pub fn resolve(&self) -> parcon::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(workers) = self.workers {
            config.engine.workers = workers;
        }
        if let Some(seed) = self.seed {
            config.partitioner.base_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output = Some(out.clone());
        }
        Ok(config)
    }

    pub fn report_path(&self, config: &RunConfig) -> PathBuf {
        config
            .output
            .clone()
            .unwrap_or_else(|| default_report_path(&self.config))
    }
}

/// `cfg.json` -> `cfg.report.json` next to the config.
pub fn default_report_path(config_path: &Path) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "parcon".to_string());
    config_path.with_file_name(format!("{stem}.report.json"))
}

pub fn cmd_run(config: &RunConfig) -> parcon::Result<ReportFile> {
    let spec = config.to_solution_spec()?;
    let mut source = config.open_source()?;
    let run = engine::run(&spec, &mut source, &config.engine.to_params())?;
    let mut report = ReportFile::new(config);
    report.run = Some(run);
    Ok(report)
}

pub fn cmd_oracle(config: &RunConfig) -> parcon::Result<ReportFile> {
    let spec = config.to_solution_spec()?;
    let mut source = config.open_source()?;
    let m = load_measure(&mut source, MAX_ORACLE_N)?;
    let result = validation::oracle(&spec.problem, &m)?;
    let mut report = ReportFile::new(config);
    report.oracle = Some(result);
    Ok(report)
}

pub fn cmd_viability(config: &RunConfig) -> parcon::Result<ReportFile> {
    let spec = config.to_solution_spec()?;
    let mut source = config.open_source()?;
    let m = load_measure(&mut source, MAX_ORACLE_N)?;
    let viability =
        validation::estimate_viability(&spec, &m, config.repetitions, spec.partitioner.base_seed)?;
    let mut report = ReportFile::new(config);
    report.viability = Some(viability);
    Ok(report)
}

pub fn cmd_converge(config: &RunConfig) -> parcon::Result<ReportFile> {
    let spec = config.to_solution_spec()?;
    let mut source = config.open_source()?;
    let m = load_measure(&mut source, MAX_ORACLE_N)?;
    let combiner = config
        .combine
        .combiner
        .unwrap_or(SecondStageCombiner::MeanOfEv);
    let convergence = validation::trace_convergence(
        &spec,
        &m,
        config.repetitions,
        combiner,
        spec.partitioner.base_seed,
    )?;
    let mut report = ReportFile::new(config);
    report.convergence = Some(convergence);
    Ok(report)
}

fn summarize_result(result: &ResultValue) -> String {
    match result {
        ResultValue::Mean(r) => format!("mean {:?} over {} points", r.mean, r.count),
        ResultValue::Sorted(r) => format!("sorted run of {} points", r.run.len()),
        ResultValue::Extremes(r) => {
            format!("min {:?}, max {:?}", r.min.coords(), r.max.coords())
        }
        ResultValue::Histogram(r) => {
            format!("{} bins holding {} points", r.counts.len(), r.total())
        }
        ResultValue::PValue(r) => format!("p-value {:.6}", r.p),
        ResultValue::Mle(r) => format!(
            "theta {:?}, log-likelihood {:.6}{}",
            r.theta,
            r.loglik,
            if r.converged { "" } else { " (not converged)" }
        ),
        ResultValue::Knn(r) => format!(
            "{} neighbors, indices {:?}",
            r.neighbors.len(),
            r.neighbors.iter().map(|nb| nb.index).collect::<Vec<_>>()
        ),
        ResultValue::Outlier(r) => format!(
            "{} outliers among {} points",
            r.outlier_idx.len(),
            r.outlier_idx.len() + r.data_idx.len()
        ),
    }
}

fn print_summary(report: &ReportFile) {
    if let Some(run) = &report.run {
        if let Some(final_result) = &run.final_result {
            println!("final: {}", summarize_result(final_result));
        }
        println!(
            "repetitions: {}, warnings: {}, wall: {} ms, peak resident: {} points",
            run.per_rep.len(),
            run.warnings.len(),
            run.timing.total_ms,
            run.peak_resident_points
        );
        for w in &run.warnings {
            println!("warning: {w}");
        }
    }
    if let Some(oracle) = &report.oracle {
        println!("oracle: {}", summarize_result(oracle));
    }
    if let Some(v) = &report.viability {
        println!(
            "viability of {}: {:?} over {} draws",
            v.problem, v.verdict, v.draws
        );
        for (j, (b, s)) in v.bias.iter().zip(&v.se).enumerate() {
            println!("  component {j}: bias {b:+.3e}, se {s:.3e}");
        }
    }
    if let Some(c) = &report.convergence {
        println!(
            "convergence under {:?}: ||Z_1 - mu|| = {:.6e}, ||Z_{} - mu|| = {:.6e}",
            c.combiner,
            c.distances.first().unwrap_or(&f64::NAN),
            c.distances.len(),
            c.distances.last().unwrap_or(&f64::NAN)
        );
    }
}

/// Runs one subcommand end to end; returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let (args, runner): (&CommonArgs, fn(&RunConfig) -> parcon::Result<ReportFile>) =
        match &cli.command {
            Command::Run(a) => (a, cmd_run),
            Command::Oracle(a) => (a, cmd_oracle),
            Command::Viability(a) => (a, cmd_viability),
            Command::Converge(a) => (a, cmd_converge),
        };

    let config = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let report_path = args.report_path(&config);

    match runner(&config) {
        Ok(report) => {
            if let Err(e) = report.write(&report_path) {
                eprintln!(
                    "error: cannot write report to {}: {e}",
                    report_path.display()
                );
                return EXIT_ERROR;
            }
            print_summary(&report);
            println!("report: {}", report_path.display());
            match report.viability.as_ref().map(|v| v.verdict) {
                Some(Verdict::NotViable) => EXIT_NOT_VIABLE,
                _ => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut report = ReportFile::new(&config);
            report.error = Some(e.to_string());
            if report.write(&report_path).is_ok() {
                eprintln!("error report: {}", report_path.display());
            }
            EXIT_ERROR
        }
    }
}
