//! Engine-level behavior: agreement with the in-memory reference route,
//! determinism under parallelism, memory accounting, and the streamed
//! full-data objective.

use parcon::engine::{
    full_pass_evaluate, load_measure, run, EngineParams, InMemorySource, MemoryGauge,
};
use parcon::measure::{DataPoint, EmpiricalMeasure, ResultValue};
use parcon::partition::{PartitionScheme, PartitionerSpec};
use parcon::solutions::{
    self, KnnParams, MleModel, MleParams, OutlierParams, PValueAdjust, ProblemSpec, SolutionSpec,
    TestParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measure_1d(values: &[f64]) -> EmpiricalMeasure {
    let pts: Vec<DataPoint> = values
        .iter()
        .map(|v| DataPoint::new(vec![*v]).unwrap())
        .collect();
    EmpiricalMeasure::from_points(&pts).unwrap()
}

fn seeded_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()
}

fn balanced(l: usize, seed: u64) -> PartitionerSpec {
    PartitionerSpec {
        scheme: PartitionScheme::RandomBalanced,
        part_count: l,
        base_seed: seed,
    }
}

fn every_problem(values: &[f64]) -> Vec<ProblemSpec> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    vec![
        ProblemSpec::Mean,
        ProblemSpec::Extremes,
        ProblemSpec::Histogram {
            edges: vec![lo, (lo + hi) / 2.0, hi],
        },
        ProblemSpec::Test(TestParams {
            mu0: 0.0,
            sigma: 3.0,
            adjust: PValueAdjust::None,
        }),
        ProblemSpec::Mle(MleParams {
            model: MleModel::GaussianMeanVar,
            init: None,
            max_iter: 50,
            tol: 1e-10,
        }),
        ProblemSpec::Knn(KnnParams {
            query: vec![0.25],
            k: 5,
        }),
        ProblemSpec::Outlier(OutlierParams::default()),
    ]
}

/// The out-of-core route must reproduce the in-memory reference repetition
/// for every problem, including under forced spilling.
#[test]
fn engine_matches_in_memory_reference_for_every_problem() {
    let values = seeded_values(400, 11);
    let m = measure_1d(&values);
    for problem in every_problem(&values) {
        let spec = SolutionSpec {
            problem,
            partitioner: balanced(4, 99),
            repetitions: 3,
        };
        let mut source = InMemorySource::new(m.clone());
        // A 24 KiB budget forces small chunks and spilled parts.
        let params = EngineParams {
            workers: 2,
            memory_budget: 24 * 1024,
            chunk_size: None,
            keep_per_part: false,
        };
        let report = run(&spec, &mut source, &params).unwrap();
        assert_eq!(report.per_rep.len(), 3);

        for rep in 0..3 {
            let (expected, _) = solutions::solve_repetition(&spec, &m, rep as u64).unwrap();
            assert_eq!(
                report.per_rep[rep],
                expected,
                "problem {} repetition {rep}",
                spec.problem.name()
            );
        }
        let expected_final = solutions::combine_second(&spec, &report.per_rep, m.len()).unwrap();
        assert_eq!(report.final_result, Some(expected_final));
    }
}

#[test]
fn engine_matches_reference_in_subsample_mode() {
    let values = seeded_values(300, 21);
    let m = measure_1d(&values);
    let spec = SolutionSpec {
        problem: ProblemSpec::Mean,
        partitioner: PartitionerSpec {
            scheme: PartitionScheme::Subsample { part_size: 50 },
            part_count: 6,
            base_seed: 500,
        },
        repetitions: 4,
    };
    let mut source = InMemorySource::new(m.clone());
    let report = run(&spec, &mut source, &EngineParams::default()).unwrap();
    for rep in 0..4 {
        let (expected, _) = solutions::solve_repetition(&spec, &m, rep as u64).unwrap();
        assert_eq!(report.per_rep[rep], expected);
    }
}

#[test]
fn degenerate_pipeline_equals_direct_rho() {
    let values = seeded_values(100, 31);
    let m = measure_1d(&values);
    for problem in every_problem(&values) {
        let spec = SolutionSpec {
            problem: problem.clone(),
            partitioner: balanced(1, 0),
            repetitions: 1,
        };
        let mut source = InMemorySource::new(m.clone());
        let report = run(&spec, &mut source, &EngineParams::default()).unwrap();
        let mut direct = solutions::apply_rho(&problem, &m).unwrap();
        // The engine's MLE result carries the full-data objective, which
        // for L=1 is the same sum the direct fit reports.
        if let (Some(ResultValue::Mle(got)), ResultValue::Mle(want)) =
            (&report.final_result, &mut direct)
        {
            assert_eq!(got.theta, want.theta);
            assert!((got.loglik - want.loglik).abs() < 1e-9);
            continue;
        }
        assert_eq!(
            report.final_result,
            Some(direct),
            "problem {}",
            problem.name()
        );
    }
}

#[test]
fn reports_are_bit_identical_across_worker_counts() {
    let values = seeded_values(2000, 41);
    let m = measure_1d(&values);
    let spec = SolutionSpec {
        problem: ProblemSpec::Test(TestParams {
            mu0: 0.1,
            sigma: 5.0,
            adjust: PValueAdjust::Bonferroni,
        }),
        partitioner: balanced(3, 7),
        repetitions: 5,
    };
    let reports: Vec<String> = [1usize, 2, 4, 8]
        .iter()
        .map(|&workers| {
            let mut source = InMemorySource::new(m.clone());
            let params = EngineParams {
                workers,
                memory_budget: 1 << 20,
                chunk_size: None,
                keep_per_part: true,
            };
            let mut report = run(&spec, &mut source, &params).unwrap();
            report.timing = Default::default();
            report.workers = 0;
            serde_json::to_string(&report).unwrap()
        })
        .collect();
    for r in &reports[1..] {
        assert_eq!(*r, reports[0]);
    }
}

#[test]
fn final_results_worker_invariant_for_every_problem() {
    let values = seeded_values(400, 43);
    let m = measure_1d(&values);
    for problem in every_problem(&values) {
        let spec = SolutionSpec {
            problem,
            partitioner: balanced(4, 13),
            repetitions: 2,
        };
        let finals: Vec<_> = [1usize, 2, 4, 8]
            .iter()
            .map(|&workers| {
                let mut source = InMemorySource::new(m.clone());
                let params = EngineParams {
                    workers,
                    memory_budget: 32 * 1024, // keep the spill path exercised
                    chunk_size: None,
                    keep_per_part: false,
                };
                run(&spec, &mut source, &params).unwrap().final_result
            })
            .collect();
        for f in &finals[1..] {
            assert_eq!(*f, finals[0], "problem {}", spec.problem.name());
        }
    }
}

#[test]
fn rerunning_echoed_spec_reproduces_report() {
    let values = seeded_values(500, 51);
    let m = measure_1d(&values);
    let spec = SolutionSpec {
        problem: ProblemSpec::Outlier(OutlierParams::default()),
        partitioner: balanced(4, 123),
        repetitions: 3,
    };
    let params = EngineParams::default();
    let mut s1 = InMemorySource::new(m.clone());
    let first = run(&spec, &mut s1, &params).unwrap();
    let mut s2 = InMemorySource::new(m);
    let second = run(&first.spec, &mut s2, &params).unwrap();
    assert_eq!(first.final_result, second.final_result);
    assert_eq!(first.per_rep, second.per_rep);
    assert_eq!(first.ev_trace, second.ev_trace);
    assert_eq!(first.warnings, second.warnings);
}

#[test]
fn memory_gauge_stays_under_budget() {
    // 200k 1-D points against a 256 KiB budget: the gauge must stay within
    // budget plus one chunk of slack.
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let m = EmpiricalMeasure::from_flat(data, 1).unwrap();
    let budget_bytes = 256 * 1024u64;
    let spec = SolutionSpec {
        problem: ProblemSpec::Mean,
        partitioner: balanced(8, 3),
        repetitions: 2,
    };
    let params = EngineParams {
        workers: 4,
        memory_budget: budget_bytes,
        chunk_size: None,
        keep_per_part: false,
    };
    let mut source = InMemorySource::new(m);
    let report = run(&spec, &mut source, &params).unwrap();
    let budget_points = budget_bytes as usize / 16;
    let chunk_points = budget_points / 5;
    assert!(
        report.peak_resident_points <= budget_points + chunk_points,
        "peak {} exceeds budget {} + chunk {}",
        report.peak_resident_points,
        budget_points,
        chunk_points
    );
    assert!(report.peak_resident_points > 0);
}

#[test]
fn sort_part_too_large_for_budget_suggests_raising_l() {
    let values = seeded_values(10_000, 71);
    let m = measure_1d(&values);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let spec = SolutionSpec {
        problem: ProblemSpec::Sort,
        partitioner: PartitionerSpec {
            scheme: PartitionScheme::RangeBounded {
                bounds: vec![lo, hi],
                key_dim: 0,
            },
            part_count: 1,
            base_seed: 0,
        },
        repetitions: 1,
    };
    let params = EngineParams {
        workers: 1,
        memory_budget: 8 * 1024, // 512 points; the single part holds 10k
        chunk_size: None,
        keep_per_part: false,
    };
    let mut source = InMemorySource::new(m);
    let err = run(&spec, &mut source, &params).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("insufficient memory"), "{msg}");
    assert!(msg.contains("raising L"), "{msg}");
}

#[test]
fn failed_run_retains_spill_files_for_debugging() {
    // A range partitioner with a part nobody falls into fails after
    // routing; the spilled part files must survive for inspection.
    let values = seeded_values(5000, 72);
    let m = measure_1d(&values);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let spec = SolutionSpec {
        problem: ProblemSpec::Knn(KnnParams {
            query: vec![0.0],
            k: 3,
        }),
        partitioner: PartitionerSpec {
            scheme: PartitionScheme::RangeBounded {
                bounds: vec![lo, hi, hi + 1.0, hi + 2.0],
                key_dim: 0,
            },
            part_count: 3,
            base_seed: 0,
        },
        repetitions: 1,
    };
    let params = EngineParams {
        workers: 1,
        memory_budget: 8 * 1024, // force spilling before the failure
        chunk_size: None,
        keep_per_part: false,
    };
    let mut source = InMemorySource::new(m);
    let err = run(&spec, &mut source, &params).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("spill files retained"), "{msg}");
    assert!(msg.contains("part 1") || msg.contains("empty"), "{msg}");
    let path = msg
        .split("retained for debugging at ")
        .nth(1)
        .and_then(|rest| rest.split(':').next())
        .expect("error names the spill path");
    let dir = std::path::Path::new(path.trim());
    assert!(dir.is_dir(), "spill dir {} missing", dir.display());
    assert!(std::fs::read_dir(dir).unwrap().next().is_some());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn full_pass_evaluate_known_values() {
    // Gaussian theta=(0,1) on a single point at 0: -0.5 ln(2 pi).
    let m = measure_1d(&[0.0]);
    let mut source = InMemorySource::new(m);
    let ll = full_pass_evaluate(MleModel::GaussianMeanVar, &[0.0, 1.0], &mut source, 100).unwrap();
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((ll - expected).abs() < 1e-15);
}

#[test]
fn full_pass_evaluate_additivity_and_oracle() {
    let values = seeded_values(1000, 81);
    let m = measure_1d(&values);
    let theta = [0.3, 4.0];
    let mut source = InMemorySource::new(m.clone());
    let single = full_pass_evaluate(MleModel::GaussianMeanVar, &theta, &mut source, 128).unwrap();

    // In-memory summation oracle.
    let oracle: f64 = values
        .iter()
        .map(|x| {
            -0.5 * ((2.0 * std::f64::consts::PI * theta[1]).ln()
                + (x - theta[0]) * (x - theta[0]) / theta[1])
        })
        .sum();
    assert!((single - oracle).abs() <= 1e-10 * oracle.abs());

    // Duplicated data doubles the objective exactly.
    let doubled: Vec<f64> = values.iter().chain(values.iter()).cloned().collect();
    let mut source2 = InMemorySource::new(measure_1d(&doubled));
    let twice = full_pass_evaluate(MleModel::GaussianMeanVar, &theta, &mut source2, 128).unwrap();
    assert!((twice - 2.0 * single).abs() <= 1e-9 * single.abs());
}

#[test]
fn load_measure_respects_oracle_cap() {
    let m = measure_1d(&seeded_values(100, 91));
    let mut source = InMemorySource::new(m.clone());
    assert_eq!(load_measure(&mut source, 100).unwrap(), m);
    assert!(load_measure(&mut source, 99).is_err());
}

#[test]
fn gauge_is_shared_safely() {
    let gauge = MemoryGauge::new();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let g = gauge.clone();
            std::thread::spawn(move || {
                for _ in 0..1000 {
                    g.acquire(3);
                    g.release(3);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(gauge.current(), 0);
    assert!(gauge.peak() <= 24);
}
