//! Exit-code contract and report round-trips, exercised through both the
//! library entry points and the installed binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use parcon::config::{ReportFile, RunConfig};
use parcon_cli::{cmd_oracle, cmd_run, cmd_viability};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parcon"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn csv_data(dir: &Path, n: usize) -> PathBuf {
    let mut rows = String::new();
    for i in 0..n {
        rows.push_str(&format!("{}\n", (i * 37 % 101) as f64 / 7.0));
    }
    write_file(dir, "points.csv", &rows)
}

fn mean_config(dir: &Path, data: &Path, out_name: &str) -> PathBuf {
    let config = serde_json::json!({
        "data": {"path": data, "format": "csv"},
        "problem": {"id": "mean"},
        "partitioner": {"scheme": "random_balanced", "L": 4, "base_seed": 11},
        "K": 1,
        "output": dir.join(out_name)
    });
    write_file(
        dir,
        "run.json",
        &serde_json::to_string_pretty(&config).unwrap(),
    )
}

#[test]
fn run_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 200);
    let config = mean_config(dir.path(), &data, "out.json");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = ReportFile::read(&dir.path().join("out.json")).unwrap();
    assert!(report.run.is_some());
    assert!(report.verify_checksum());
    assert!(report.error.is_none());
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 10);
    let config = write_file(
        dir.path(),
        "bad.json",
        &serde_json::to_string(&serde_json::json!({
            "data": {"path": data, "format": "csv"},
            "problem": {"id": "mean"},
            "partitioner": {"scheme": "random_balanced", "base_seed": 1},
            "K": 1
        }))
        .unwrap(),
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("partitioner.L"), "stderr: {stderr}");
}

#[test]
fn missing_data_file_exits_2_with_error_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = mean_config(dir.path(), &dir.path().join("absent.csv"), "out.json");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let report = ReportFile::read(&dir.path().join("out.json")).unwrap();
    assert!(report.error.is_some());
    assert!(report.run.is_none());
}

#[test]
fn viable_solution_exits_0_not_viable_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // Integer-valued data in power-of-two parts: the mean pipeline is
    // exact, so the verdict is Viable.
    let mut rows = String::new();
    for i in 0..512 {
        rows.push_str(&format!("{}\n", (i * 997 % 4096) as f64));
    }
    let data = write_file(dir.path(), "ints.csv", &rows);
    let viable = write_file(
        dir.path(),
        "viable.json",
        &serde_json::to_string(&serde_json::json!({
            "data": {"path": data, "format": "csv"},
            "problem": {"id": "mean"},
            "partitioner": {"scheme": "random_balanced", "L": 32, "base_seed": 5},
            "K": 50,
            "output": dir.path().join("viable-report.json")
        }))
        .unwrap(),
    );
    let status = bin()
        .args(["viability", "--config"])
        .arg(&viable)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // Min-combined test p-values on null data are biased low: NotViable.
    let mut rows = String::new();
    for i in 0..600 {
        let centered = ((i * 797 % 1201) as f64 - 600.0) / 400.0;
        rows.push_str(&format!("{centered}\n"));
    }
    let null_data = write_file(dir.path(), "null.csv", &rows);
    let not_viable = write_file(
        dir.path(),
        "notviable.json",
        &serde_json::to_string(&serde_json::json!({
            "data": {"path": null_data, "format": "csv"},
            "problem": {"id": "test", "mu0": 0.0, "sigma": 1.0},
            "partitioner": {"scheme": "random_balanced", "L": 4, "base_seed": 5},
            "K": 120,
            "output": dir.path().join("nv-report.json")
        }))
        .unwrap(),
    );
    let status = bin()
        .args(["viability", "--config"])
        .arg(&not_viable)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let report = ReportFile::read(&dir.path().join("nv-report.json")).unwrap();
    assert_eq!(
        report.viability.unwrap().verdict,
        parcon::validation::Verdict::NotViable
    );
}

#[test]
fn flag_overrides_take_precedence_over_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 100);
    let config = mean_config(dir.path(), &data, "a.json");
    let out_b = dir.path().join("b.json");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--workers", "3", "--seed", "99", "--out"])
        .arg(&out_b)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = ReportFile::read(&out_b).unwrap();
    let echoed = report.config.unwrap();
    assert_eq!(echoed.engine.workers, 3);
    assert_eq!(echoed.partitioner.base_seed, 99);
    assert_eq!(report.run.unwrap().workers, 3);
}

#[test]
fn config_echo_reproduces_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 300);
    let config_path = mean_config(dir.path(), &data, "first.json");
    let config = RunConfig::load(&config_path).unwrap();
    let first = cmd_run(&config).unwrap();

    // Re-feed the spec echo as a fresh config file.
    let echo_path = write_file(
        dir.path(),
        "echo.json",
        &serde_json::to_string_pretty(first.config.as_ref().unwrap()).unwrap(),
    );
    let echoed = RunConfig::load(&echo_path).unwrap();
    let second = cmd_run(&echoed).unwrap();
    assert_eq!(first.canonical_bytes(), second.canonical_bytes());
    assert_eq!(first.config_checksum, second.config_checksum);
}

#[test]
fn oracle_and_run_agree_in_the_degenerate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 150);
    let config_json = serde_json::json!({
        "data": {"path": data, "format": "csv"},
        "problem": {"id": "extremes"},
        "partitioner": {"scheme": "random_balanced", "L": 1, "base_seed": 0},
        "K": 1
    });
    let config = RunConfig::from_slice(&serde_json::to_vec(&config_json).unwrap()).unwrap();
    let run = cmd_run(&config).unwrap();
    let oracle = cmd_oracle(&config).unwrap();
    assert_eq!(
        run.run.unwrap().final_result.unwrap(),
        oracle.oracle.unwrap()
    );
}

#[test]
fn every_fault_class_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 50);
    let bad_csv = write_file(dir.path(), "bad.csv", "1.0\nnot-a-number\n");
    let ragged = write_file(dir.path(), "ragged.csv", "1.0,2.0\n3.0\n");

    let faults: Vec<(&str, serde_json::Value)> = vec![
        (
            "unparseable json",
            serde_json::Value::String("{not json".into()),
        ),
        (
            "unknown problem id",
            serde_json::json!({
                "data": {"path": data, "format": "csv"},
                "problem": {"id": "clustering"},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "L greater than n",
            serde_json::json!({
                "data": {"path": data, "format": "csv"},
                "problem": {"id": "mean"},
                "partitioner": {"scheme": "random_balanced", "L": 500, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "sort without range bounds",
            serde_json::json!({
                "data": {"path": data, "format": "csv"},
                "problem": {"id": "sort"},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "csv parse failure",
            serde_json::json!({
                "data": {"path": bad_csv, "format": "csv"},
                "problem": {"id": "mean"},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "ragged rows",
            serde_json::json!({
                "data": {"path": ragged, "format": "csv"},
                "problem": {"id": "mean"},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "test on multi-column data",
            serde_json::json!({
                "data": {"path": ragged.parent().unwrap().join("wide.csv"), "format": "csv"},
                "problem": {"id": "test", "mu0": 0.0, "sigma": 1.0},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 1
            }),
        ),
        (
            "zero repetitions",
            serde_json::json!({
                "data": {"path": data, "format": "csv"},
                "problem": {"id": "mean"},
                "partitioner": {"scheme": "random_balanced", "L": 2, "base_seed": 0},
                "K": 0
            }),
        ),
    ];
    write_file(dir.path(), "wide.csv", "1.0,2.0\n3.0,4.0\n");

    for (label, doc) in faults {
        let body = match &doc {
            serde_json::Value::String(s) => s.clone(),
            other => serde_json::to_string(other).unwrap(),
        };
        let config = write_file(dir.path(), "fault.json", &body);
        let output = bin()
            .args(["run", "--config"])
            .arg(&config)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(2), "fault class: {label}");
        assert!(
            !output.stderr.is_empty(),
            "fault class {label} printed nothing"
        );
    }
}

#[test]
fn viability_draw_count_comes_from_k() {
    let dir = tempfile::tempdir().unwrap();
    let data = csv_data(dir.path(), 64);
    let config_json = serde_json::json!({
        "data": {"path": data, "format": "csv"},
        "problem": {"id": "mean"},
        "partitioner": {"scheme": "random_balanced", "L": 4, "base_seed": 2},
        "K": 37
    });
    let config = RunConfig::from_slice(&serde_json::to_vec(&config_json).unwrap()).unwrap();
    let report = cmd_viability(&config).unwrap();
    assert_eq!(report.viability.unwrap().draws, 37);
}
