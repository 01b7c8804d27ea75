use fflab::metrics::{
    cumulative_success_from_times, ln_gamma, pooled_t_test, regularized_incomplete_beta, student_t_cdf,
    welch_t_test, Alternative, SampleSummary,
};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

fn arb_summary() -> impl Strategy<Value = SampleSummary> {
    (0.5f64..20.0, 0.01f64..10.0, 2usize..300).prop_map(|(m, v, n)| SampleSummary::new(m, v, n).unwrap())
}

/// Pooled t-statistic and p-value computed with statrs.
fn oracle_pooled(a: &SampleSummary, b: &SampleSummary, alternative: Alternative) -> (f64, f64) {
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let dof = na + nb - 2.0;
    let sp2 = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / dof;
    let t = (a.mean() - b.mean()) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
    let p = match alternative {
        Alternative::Less => dist.cdf(t),
        Alternative::Greater => dist.sf(t),
    };
    (t, p)
}

fn oracle_welch(a: &SampleSummary, b: &SampleSummary) -> (f64, f64) {
    let (qa, qb) = (a.variance() / a.n() as f64, b.variance() / b.n() as f64);
    let t = (a.mean() - b.mean()) / (qa + qb).sqrt();
    let dof = (qa + qb).powi(2) / (qa * qa / (a.n() as f64 - 1.0) + qb * qb / (b.n() as f64 - 1.0));
    (t, StudentsT::new(0.0, 1.0, dof).unwrap().cdf(t))
}

proptest! {
    #[test]
    fn pooled_matches_statrs(a in arb_summary(), b in arb_summary()) {
        for alternative in [Alternative::Less, Alternative::Greater] {
            let ours = pooled_t_test(&a, &b, alternative);
            let (t, p) = oracle_pooled(&a, &b, alternative);
            prop_assert!((ours.t_stat - t).abs() <= 1e-10 * t.abs().max(1.0));
            prop_assert!((ours.p_one_tailed - p).abs() <= 1e-9, "ours {} statrs {}", ours.p_one_tailed, p);
        }
    }

    #[test]
    fn welch_matches_statrs(a in arb_summary(), b in arb_summary()) {
        let ours = welch_t_test(&a, &b, Alternative::Less);
        let (t, p) = oracle_welch(&a, &b);
        prop_assert!((ours.t_stat - t).abs() <= 1e-10 * t.abs().max(1.0));
        prop_assert!((ours.p_one_tailed - p).abs() <= 1e-9);
    }

    #[test]
    fn pooled_is_antisymmetric(a in arb_summary(), b in arb_summary()) {
        for alternative in [Alternative::Less, Alternative::Greater] {
            let ab = pooled_t_test(&a, &b, alternative);
            let ba = pooled_t_test(&b, &a, alternative.mirrored());
            prop_assert!((ab.t_stat + ba.t_stat).abs() <= 1e-12 * ab.t_stat.abs().max(1.0));
            prop_assert!((ab.p_one_tailed - ba.p_one_tailed).abs() <= 1e-12);
            let flipped = pooled_t_test(&b, &a, alternative);
            prop_assert!((ab.p_one_tailed - (1.0 - flipped.p_one_tailed)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cdf_matches_statrs(t in -40.0f64..40.0, dof in 1.0f64..500.0) {
        let ours = student_t_cdf(t, dof);
        let reference = StudentsT::new(0.0, 1.0, dof).unwrap().cdf(t);
        prop_assert!((ours - reference).abs() <= 1e-10, "t={t} dof={dof}: {ours} vs {reference}");
        prop_assert!((ours + student_t_cdf(-t, dof) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn cdf_approaches_normal(t in -6.0f64..6.0, dof in 200.0f64..5000.0) {
        let normal = Normal::new(0.0, 1.0).unwrap().cdf(t);
        prop_assert!((student_t_cdf(t, dof) - normal).abs() < 2e-3);
    }

    #[test]
    fn incomplete_beta_matches_statrs(a in 0.1f64..200.0, b in 0.1f64..200.0, x in 0.0f64..=1.0) {
        let ours = regularized_incomplete_beta(a, b, x);
        let reference = statrs::function::beta::beta_reg(a, b, x);
        prop_assert!((ours - reference).abs() <= 1e-10, "a={a} b={b} x={x}: {ours} vs {reference}");
    }

    #[test]
    fn ln_gamma_matches_statrs(x in 0.01f64..500.0) {
        let ours = ln_gamma(x);
        let reference = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ours - reference).abs() <= 1e-10 * reference.abs().max(1.0));
    }

    #[test]
    fn curve_is_monotone_and_ends_at_success_rate(
        times in proptest::collection::vec(proptest::option::of(0.0f64..20.0), 1..80),
    ) {
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        let curve = cumulative_success_from_times(&times, &grid);
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        let rate = times.iter().flatten().count() as f64 / times.len() as f64;
        prop_assert!((curve.last().unwrap() - rate).abs() < 1e-15);
    }
}

#[test]
fn cdf_at_zero_is_exactly_half() {
    for dof in [1.0, 2.5, 30.0, 1e4] {
        assert_eq!(student_t_cdf(0.0, dof), 0.5);
    }
}

#[test]
fn published_rows_reproduce() {
    let base = SampleSummary::new(7.35, 1.99, 71).unwrap();
    let spline = SampleSummary::new(7.45, 4.75, 94).unwrap();
    let r = pooled_t_test(&spline, &base, Alternative::Less);
    assert!((r.t_stat - 0.32).abs() < 0.12);
    assert!((r.p_one_tailed - 0.626).abs() < 0.02);
    assert!(r.p_one_tailed > 0.05);

    let slow = SampleSummary::from_sd(9.31, 3.19, 84).unwrap();
    let fast = SampleSummary::from_sd(5.34, 1.41, 122).unwrap();
    let r = pooled_t_test(&fast, &slow, Alternative::Less);
    assert!((r.t_stat + 12.06).abs() < 0.12, "{}", r.t_stat);
    assert!(r.p_one_tailed < 1e-3);
}
