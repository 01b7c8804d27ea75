use fflab::reference::{
    blend_chunks, fd_reference, lowpass_differentiate, spline_reference, zoh_reference, ActionChunk,
    ChunkSource, ReferenceMode, ReferenceSource, SplineSource,
};
use fflab::spline::{fit_least_squares, TrajectorySamples, CUBIC};
use fflab::Vector;
use nalgebra::dvector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chunk_1d(start: f64, dt: f64, targets: &[f64]) -> ActionChunk {
    ActionChunk::new(start, dt, targets.iter().map(|&x| dvector![x]).collect()).unwrap()
}

fn arb_chunk() -> impl Strategy<Value = ActionChunk> {
    (
        -5.0f64..5.0,
        0.005f64..0.5,
        proptest::collection::vec(-1.0f64..1.0, 2..24),
    )
        .prop_map(|(start, dt, targets)| chunk_1d(start, dt, &targets))
}

fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

proptest! {
    #[test]
    fn zoh_and_fd_agree_at_ticks(chunk in arb_chunk()) {
        for j in 0..chunk.len() {
            let t = chunk.start_time() + j as f64 * chunk.dt_action();
            let z = zoh_reference(&chunk, t).unwrap();
            let f = fd_reference(&chunk, t).unwrap();
            prop_assert_eq!(z.position.clone(), f.position);
            prop_assert_eq!(z.position, chunk.targets()[j].clone());
        }
    }

    #[test]
    fn fd_velocity_integrates_to_displacement(chunk in arb_chunk()) {
        // Piecewise-constant velocity: midpoint samples give the exact integral.
        let h = chunk.len();
        let dt = chunk.dt_action();
        let integral: f64 = (0..h - 1)
            .map(|j| fd_reference(&chunk, chunk.start_time() + (j as f64 + 0.5) * dt).unwrap().velocity[0] * dt)
            .sum();
        let displacement = chunk.targets()[h - 1][0] - chunk.targets()[0][0];
        prop_assert!((integral - displacement).abs() < 1e-12 * (1.0 + displacement.abs()) * h as f64);
    }

    #[test]
    fn terminal_hold(chunk in arb_chunk(), past in 0.0f64..10.0) {
        let t = chunk.end_time() + past;
        let last = chunk.targets()[chunk.len() - 1].clone();
        for sample in [zoh_reference(&chunk, t).unwrap(), fd_reference(&chunk, t).unwrap()] {
            prop_assert_eq!(sample.position, last.clone());
            prop_assert_eq!(sample.velocity[0], 0.0);
        }
    }

    #[test]
    fn blend_is_convex_and_hits_both_ends(a in -1.0f64..1.0, b in -1.0f64..1.0, overlap in 0.01f64..0.5) {
        let prev = ChunkSource { chunk: chunk_1d(0.0, 1.0, &[a]), mode: ReferenceMode::PositionOnly };
        let next = ChunkSource { chunk: chunk_1d(0.0, 1.0, &[b]), mode: ReferenceMode::PositionOnly };
        let switch = 0.3;
        prop_assert_eq!(blend_chunks(&prev, &next, switch, overlap, switch).unwrap().position[0], a);
        prop_assert_eq!(blend_chunks(&prev, &next, switch, overlap, switch + overlap).unwrap().position[0], b);
        let mut last = a;
        for k in 1..=100 {
            let x = blend_chunks(&prev, &next, switch, overlap, switch + overlap * k as f64 / 100.0).unwrap().position[0];
            prop_assert!(x >= a.min(b) - 1e-15 && x <= a.max(b) + 1e-15);
            prop_assert!((x - last) * (b - a) >= -1e-15, "not monotone");
            last = x;
        }
    }
}

#[test]
fn documented_examples() {
    let chunk = chunk_1d(0.0, 0.1, &[1.0, 2.0]);
    let s = zoh_reference(&chunk, 0.05).unwrap();
    assert_eq!((s.position[0], s.velocity[0]), (1.0, 0.0));

    let chunk = chunk_1d(0.0, 0.1, &[0.0, 1.0, 3.0]);
    let s = fd_reference(&chunk, 0.05).unwrap();
    assert!((s.position[0] - 0.5).abs() < 1e-12 && (s.velocity[0] - 10.0).abs() < 1e-12);
    let s = fd_reference(&chunk, 0.15).unwrap();
    assert!((s.position[0] - 2.0).abs() < 1e-12 && (s.velocity[0] - 20.0).abs() < 1e-12);

    let single = chunk_1d(0.0, 0.1, &[4.0]);
    for t in [0.0, 0.05, 1.0] {
        assert_eq!(fd_reference(&single, t).unwrap().velocity[0], 0.0);
    }
}

/// Velocity total variation on a 1 kHz grid for the three modes sampling the
/// same 10 Hz targets: a slow sine with millimetre jitter.
#[test]
fn velocity_total_variation_orders_modes() {
    let dt_a = 0.1;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<f64> = (0..31)
            .map(|j| 0.1 * (j as f64 * dt_a).sin() + rng.random_range(-2e-3..2e-3))
            .collect();
        let chunk = chunk_1d(0.0, dt_a, &targets);
        let times: Vec<f64> = (0..31).map(|j| j as f64 * dt_a).collect();
        let rows: Vec<Vector> = targets.iter().map(|&x| dvector![x]).collect();
        let traj = fit_least_squares(&TrajectorySamples::from_rows(times, &rows).unwrap(), 10, CUBIC)
            .unwrap()
            .trajectory;

        let dt = 1e-3;
        let grid: Vec<f64> = (0..3000).map(|k| k as f64 * dt).collect();
        let zoh_pos: Vec<f64> = grid.iter().map(|&t| zoh_reference(&chunk, t).unwrap().position[0]).collect();
        let zoh_vel: Vec<f64> = zoh_pos.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        let fd_vel: Vec<f64> = grid.iter().map(|&t| fd_reference(&chunk, t).unwrap().velocity[0]).collect();
        let sp_vel: Vec<f64> = grid.iter().map(|&t| spline_reference(&traj, t).velocity[0]).collect();

        let (tv_zoh, tv_fd, tv_sp) = (total_variation(&zoh_vel), total_variation(&fd_vel), total_variation(&sp_vel));
        assert!(tv_sp < tv_fd && tv_fd < tv_zoh, "seed {seed}: spline {tv_sp} fd {tv_fd} zoh {tv_zoh}");
    }
}

#[test]
fn spline_velocity_matches_position_difference() {
    let times: Vec<f64> = (0..40).map(|j| j as f64 * 0.05).collect();
    let rows: Vec<Vector> = times.iter().map(|&t| dvector![t.cos(), t * t]).collect();
    let traj = fit_least_squares(&TrajectorySamples::from_rows(times, &rows).unwrap(), 12, CUBIC)
        .unwrap()
        .trajectory;
    let h = 1e-5;
    for k in 1..40 {
        let t = k as f64 * 0.0487;
        let s = spline_reference(&traj, t);
        let fd = (spline_reference(&traj, t + h).position - spline_reference(&traj, t - h).position) / (2.0 * h);
        assert!((&fd - &s.velocity).amax() <= 1e-6 * s.velocity.amax().max(1.0));
    }
    let end = spline_reference(&traj, 5.0);
    assert_eq!(end.position, traj.eval(traj.domain().1, 0).unwrap());
    assert_eq!(end.velocity.amax(), 0.0);
}

#[test]
fn blended_splines_are_c1_inside_overlap() {
    let fit = |offset: f64| {
        let times: Vec<f64> = (0..30).map(|j| j as f64 * 0.05).collect();
        let rows: Vec<Vector> = times.iter().map(|&t| dvector![(t + offset).sin()]).collect();
        SplineSource::new(
            fit_least_squares(&TrajectorySamples::from_rows(times, &rows).unwrap(), 10, CUBIC)
                .unwrap()
                .trajectory,
        )
    };
    let (prev, next) = (fit(0.0), fit(0.3));
    let (switch, overlap) = (0.5, 0.2);
    let sample = |t: f64| blend_chunks(&prev, &next, switch, overlap, t).unwrap();
    let h = 1e-6;
    for k in 0..=20 {
        let t = switch + overlap * k as f64 / 20.0;
        let lo = sample(t - h);
        let hi = sample(t + h);
        assert!((&hi.position - &lo.position).amax() < 1e-4, "position jump at {t}");
        assert!((&hi.velocity - &lo.velocity).amax() < 1e-3, "velocity jump at {t}");
    }
    // Matches the sources outside the window.
    assert_eq!(sample(switch - 0.01), prev.sample(switch - 0.01).unwrap());
    assert_eq!(sample(switch + overlap + 0.01), next.sample(switch + overlap + 0.01).unwrap());
}

#[test]
fn lowpass_ramp_converges() {
    let v = 0.7;
    let times: Vec<f64> = (0..1000).map(|j| j as f64 * 0.01).collect();
    let rows: Vec<Vector> = times.iter().map(|&t| dvector![v * t]).collect();
    let out = lowpass_differentiate(&TrajectorySamples::from_rows(times, &rows).unwrap(), 2.0).unwrap();
    assert_eq!(out[0][0], 0.0);
    // tau = 1 / (4 pi) ~ 0.08 s; after 2 s the step response has settled.
    for y in &out[200..] {
        assert!((y[0] - v).abs() < 0.01 * v);
    }
}

#[test]
fn lowpass_reduces_noise_variance() {
    let (v, amp, dt) = (0.5, 1e-3, 0.01);
    let mut raw_all = Vec::new();
    let mut filtered_all = Vec::new();
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..60).map(|j| j as f64 * dt).collect();
        let rows: Vec<Vector> = times.iter().map(|&t| dvector![v * t + rng.random_range(-amp..amp)]).collect();
        let samples = TrajectorySamples::from_rows(times, &rows).unwrap();
        let filtered = lowpass_differentiate(&samples, 5.0).unwrap();
        let j = 59;
        raw_all.push((rows[j][0] - rows[j - 1][0]) / dt);
        filtered_all.push(filtered[j][0]);
    }
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    assert!(var(&filtered_all) < var(&raw_all), "{} vs {}", var(&filtered_all), var(&raw_all));
}

#[test]
fn lowpass_rejects_bad_cutoff() {
    let times: Vec<f64> = (0..10).map(|j| j as f64 * 0.01).collect();
    let rows: Vec<Vector> = times.iter().map(|&t| dvector![t]).collect();
    let samples = TrajectorySamples::from_rows(times, &rows).unwrap();
    assert!(lowpass_differentiate(&samples, 0.0).is_err());
    assert!(lowpass_differentiate(&samples, 60.0).is_err());
}

#[test]
fn query_before_chunk_is_an_error() {
    let chunk = chunk_1d(1.0, 0.1, &[0.0, 1.0]);
    assert!(zoh_reference(&chunk, 0.5).is_err());
    assert!(fd_reference(&chunk, 0.5).is_err());
}
