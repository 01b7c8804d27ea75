use fflab::io::{
    read_episode_trace, read_spline_dataset, read_summary_table, read_trace_summary, read_trajectory_log,
    write_comparison_file, write_episode_trace, write_spline_dataset, write_trace_summary, write_trajectory_log,
    IoError, TraceSummary, TrajectoryLog,
};
use fflab::metrics::{compare_to_baseline, Alternative, SampleSummary, SummaryRow, TestVariant};
use fflab::sim::{run_episode, EpisodeConfig, PegGeometry, PegTask, Scenario};
use fflab::spline::{BSplineTrajectory, SplineChunk, TrajectorySamples, CUBIC};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Any finite double, including subnormals and extreme exponents.
fn arb_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
    ]
}

fn arb_log() -> impl Strategy<Value = TrajectoryLog> {
    (1usize..4, 1usize..40).prop_flat_map(|(d, m)| {
        (
            proptest::collection::vec(1e-6f64..1.0, m),
            proptest::collection::vec(arb_value(), m * d),
            proptest::option::of("[a-z][a-z0-9 _-]{0,12}"),
            proptest::option::of(1.0f64..2000.0),
            -100.0f64..100.0,
        )
            .prop_map(move |(steps, values, source, rate, t0)| {
                let times: Vec<f64> = steps
                    .iter()
                    .scan(t0, |t, dt| {
                        *t += dt;
                        Some(*t)
                    })
                    .collect();
                let samples = TrajectorySamples::new(times, DMatrix::from_row_slice(m, d, &values)).unwrap();
                TrajectoryLog {
                    source: source.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()),
                    sample_rate_hz: rate,
                    samples,
                }
            })
    })
}

fn arb_chunks() -> impl Strategy<Value = Vec<SplineChunk>> {
    let chunk = (4usize..12, 1usize..4).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(arb_value(), n * d),
            proptest::collection::vec(0.0f64..1.0, n - CUBIC - 1),
            0.0f64..1.0,
        )
            .prop_map(move |(points, mut interior, residual)| {
                interior.sort_by(f64::total_cmp);
                let mut knots = vec![0.0; CUBIC + 1];
                knots.extend(interior.iter().map(|u| u * 0.999 + 1e-3));
                knots.extend([1.0; CUBIC + 1]);
                SplineChunk {
                    trajectory: BSplineTrajectory::new(CUBIC, knots, DMatrix::from_row_slice(n, d, &points)).unwrap(),
                    fit_residual_rms: residual,
                }
            })
    });
    proptest::collection::vec(chunk, 0..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_log_round_trip(log in arb_log()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_trajectory_log(&log, &path).unwrap();
        let back = read_trajectory_log(&path).unwrap();
        prop_assert_eq!(back, log);
    }

    #[test]
    fn spline_dataset_round_trip(chunks in arb_chunks()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.json");
        write_spline_dataset(&chunks, &path).unwrap();
        prop_assert_eq!(read_spline_dataset(&path).unwrap(), chunks);
    }

    #[test]
    fn trace_summary_round_trip(
        success_time in proptest::option::of(0.0f64..20.0),
        rms in 0.0f64..1.0,
        peak in 0.0f64..100.0,
    ) {
        let summary = TraceSummary { success: success_time.is_some(), success_time, rms_error: rms, peak_force: peak };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        write_trace_summary(&summary, &path).unwrap();
        prop_assert_eq!(read_trace_summary(&path).unwrap(), summary);
    }

    #[test]
    fn comparison_table_is_a_valid_summary_table(
        rows in proptest::collection::vec((0.1f64..20.0, 0.01f64..10.0, 2usize..200), 2..6),
    ) {
        let summary_rows: Vec<SummaryRow> = rows
            .iter()
            .enumerate()
            .map(|(i, &(m, v, n))| SummaryRow {
                group: "g".into(),
                method: if i == 0 { "baseline".into() } else { format!("m{i}") },
                summary: SampleSummary::new(m, v, n).unwrap(),
                alternative: Alternative::Less,
            })
            .collect();
        let table = compare_to_baseline(&summary_rows, "baseline", TestVariant::Pooled).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_comparison_file(&table, &path).unwrap();
        let back = read_summary_table(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (r, &(m, v, n)) in back.iter().zip(&rows) {
            prop_assert!((r.summary.mean() - m).abs() <= 5e-7);
            prop_assert!((r.summary.variance() - v).abs() <= 5e-7);
            prop_assert_eq!(r.summary.n(), n);
        }
    }
}

#[test]
fn episode_trace_round_trip() {
    let geometry = PegGeometry::default();
    let plan = PegTask::default().build(&geometry, 3).unwrap();
    let cfg = EpisodeConfig {
        duration_max: 1.0,
        ..Default::default()
    };
    let trace = run_episode(&plan, &cfg, &Scenario::PegInHole(geometry)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_episode_trace(&trace, &path).unwrap();
    let back = read_episode_trace(&path).unwrap();
    assert_eq!(back.times, trace.times);
    assert_eq!(back.x_d, trace.x_d);
    assert_eq!(back.x, trace.x);
    assert_eq!(back.f_ext, trace.f_ext);
    assert_eq!(back.plan_position, trace.plan_position);
    assert_eq!(back.len(), trace.len());
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    };
    let path = write("back.csv", "t,x0\n0,1\n0.2,1\n0.1,1\n");
    assert!(matches!(read_trajectory_log(&path), Err(IoError::NonMonotoneTime { .. })));
    let path = write("short.csv", "t,x0,x1\n0,1,2\n0.1,1\n");
    assert!(read_trajectory_log(&path).is_err());
    let path = write("version.json", r#"{"format":"fflab-spline-dataset","version":99,"chunks":[]}"#);
    assert!(matches!(read_spline_dataset(&path), Err(IoError::Version { .. })));
    let path = write("trace.csv", "t,x0,v0\n0,1,2\n");
    assert!(matches!(read_episode_trace(&path), Err(IoError::Header(_))));
    assert!(matches!(
        read_trajectory_log(&dir.path().join("missing.csv")),
        Err(IoError::Io { .. })
    ));
}
