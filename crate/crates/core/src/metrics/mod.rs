//! Episode metrics and completion-time statistics.

mod stats;

pub use stats::{
    ln_gamma, pooled_t_test, regularized_incomplete_beta, student_t_cdf, welch_t_test,
    Alternative, SampleSummary, TestResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::EpisodeTrace;
use crate::Vector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no trace samples inside the requested window")]
    EmptyWindow,
    #[error("a summary needs at least 2 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("invalid summary: {0}")]
    InvalidSummary(String),
    #[error("no baseline row '{baseline}' in group '{group}'")]
    MissingBaseline { group: String, baseline: String },
}

/// Pooled (Student) or unequal-variance (Welch) test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVariant {
    #[default]
    Pooled,
    Welch,
}

impl TestVariant {
    pub fn run(self, a: &SampleSummary, b: &SampleSummary, alternative: Alternative) -> TestResult {
        match self {
            TestVariant::Pooled => pooled_t_test(a, b, alternative),
            TestVariant::Welch => welch_t_test(a, b, alternative),
        }
    }
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: String,
    pub method: String,
    pub summary: SampleSummary,
    pub alternative: Alternative,
}

/// A summary row with its test against the group's baseline (absent for the
/// baseline itself). Mean and variance are absent when there are too few
/// samples to define them.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub group: String,
    pub method: String,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub n: usize,
    pub test: Option<TestResult>,
}

impl ComparisonRow {
    pub const ALPHA: f64 = 0.05;

    pub fn significant(&self) -> bool {
        self.test.is_some_and(|r| r.p_one_tailed < Self::ALPHA)
    }
}

/// Tests every row against the row named `baseline` in the same group.
pub fn compare_to_baseline(
    rows: &[SummaryRow],
    baseline: &str,
    variant: TestVariant,
) -> Result<Vec<ComparisonRow>, MetricsError> {
    let is_base = |r: &SummaryRow| r.method.eq_ignore_ascii_case(baseline);
    let missing = |group: &str| MetricsError::MissingBaseline {
        group: group.to_string(),
        baseline: baseline.to_string(),
    };
    if rows.len() < 2 {
        return Err(missing(rows.first().map_or("", |r| r.group.as_str())));
    }
    rows.iter()
        .map(|row| {
            let base = rows
                .iter()
                .find(|r| r.group == row.group && is_base(r))
                .ok_or_else(|| missing(&row.group))?;
            let test = (!is_base(row)).then(|| variant.run(&row.summary, &base.summary, row.alternative));
            Ok(ComparisonRow {
                group: row.group.clone(),
                method: row.method.clone(),
                mean: Some(row.summary.mean()),
                variance: Some(row.summary.variance()),
                n: row.summary.n(),
                test,
            })
        })
        .collect()
}

fn rms_over(trace: &EpisodeTrace, window: Option<(f64, f64)>, err: impl Fn(usize) -> Vector) -> Result<f64, MetricsError> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &t) in trace.times.iter().enumerate() {
        if t >= lo && t <= hi {
            sum += err(i).norm_squared();
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    Ok((sum / count as f64).sqrt())
}

/// Root mean square of `‖x_d - x‖` over the samples with `t` in `window`
/// (inclusive), or over the whole trace.
pub fn rms_tracking_error(trace: &EpisodeTrace, window: Option<(f64, f64)>) -> Result<f64, MetricsError> {
    rms_over(trace, window, |i| &trace.x_d[i] - &trace.x[i])
}

/// Root mean square of the distance to the ground-truth plan.
pub fn rms_plan_error(trace: &EpisodeTrace, window: Option<(f64, f64)>) -> Result<f64, MetricsError> {
    rms_over(trace, window, |i| &trace.plan_position[i] - &trace.x[i])
}

/// Fraction of episodes whose success time is at or before each grid time.
/// An empty episode list yields zeros.
pub fn cumulative_success_curve(episodes: &[EpisodeTrace], grid: &[f64]) -> Vec<f64> {
    let times: Vec<Option<f64>> = episodes.iter().map(|e| e.success_time).collect();
    cumulative_success_from_times(&times, grid)
}

/// As [`cumulative_success_curve`], from success times directly.
pub fn cumulative_success_from_times(success_times: &[Option<f64>], grid: &[f64]) -> Vec<f64> {
    if success_times.is_empty() {
        return vec![0.0; grid.len()];
    }
    let mut done: Vec<f64> = success_times.iter().flatten().copied().collect();
    done.sort_by(f64::total_cmp);
    let total = success_times.len() as f64;
    grid.iter()
        .map(|&tau| done.partition_point(|&s| s <= tau) as f64 / total)
        .collect()
}
