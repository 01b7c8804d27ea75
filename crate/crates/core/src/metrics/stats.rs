//! Two-sample t-tests on summary statistics.

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Mean, unbiased variance and size of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    mean: f64,
    variance: f64,
    n: usize,
}

impl SampleSummary {
    pub fn new(mean: f64, variance: f64, n: usize) -> Result<Self, MetricsError> {
        if n < 2 {
            return Err(MetricsError::TooFewSamples { n });
        }
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(MetricsError::InvalidSummary(format!(
                "mean {mean} and variance {variance} must be finite, variance non-negative"
            )));
        }
        Ok(Self { mean, variance, n })
    }

    /// From a standard deviation instead of a variance.
    pub fn from_sd(mean: f64, sd: f64, n: usize) -> Result<Self, MetricsError> {
        if !(sd >= 0.0) {
            return Err(MetricsError::InvalidSummary(format!("negative standard deviation {sd}")));
        }
        Self::new(mean, sd * sd, n)
    }

    pub fn from_samples(values: &[f64]) -> Result<Self, MetricsError> {
        let n = values.len();
        if n < 2 {
            return Err(MetricsError::TooFewSamples { n });
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self::new(mean, variance, n)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Direction of the one-tailed alternative hypothesis on `mean_a - mean_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Less,
    Greater,
}

impl Alternative {
    pub fn mirrored(self) -> Self {
        match self {
            Alternative::Less => Alternative::Greater,
            Alternative::Greater => Alternative::Less,
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            other => Err(MetricsError::InvalidSummary(format!(
                "unknown alternative '{other}' (expected less or greater)"
            ))),
        }
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alternative::Less => "less",
            Alternative::Greater => "greater",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t_stat: f64,
    pub p_one_tailed: f64,
    pub dof: f64,
}

fn finish(diff: f64, se: f64, dof: f64, alternative: Alternative) -> TestResult {
    let t_stat = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let cdf = student_t_cdf(t_stat, dof);
    let p_one_tailed = match alternative {
        Alternative::Less => cdf,
        Alternative::Greater => 1.0 - cdf,
    };
    TestResult {
        t_stat,
        p_one_tailed: p_one_tailed.clamp(0.0, 1.0),
        dof,
    }
}

/// Student's two-sample test with pooled variance, `n_a + n_b - 2` degrees
/// of freedom.
pub fn pooled_t_test(a: &SampleSummary, b: &SampleSummary, alternative: Alternative) -> TestResult {
    let (na, nb) = (a.n as f64, b.n as f64);
    let dof = na + nb - 2.0;
    let pooled = ((na - 1.0) * a.variance + (nb - 1.0) * b.variance) / dof;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    finish(a.mean - b.mean, se, dof, alternative)
}

/// Welch's unequal-variance test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &SampleSummary, b: &SampleSummary, alternative: Alternative) -> TestResult {
    let (na, nb) = (a.n as f64, b.n as f64);
    let (qa, qb) = (a.variance / na, b.variance / nb);
    let se2 = qa + qb;
    let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
    let dof = if denom > 0.0 { se2 * se2 / denom } else { na + nb - 2.0 };
    finish(a.mean - b.mean, se2.sqrt(), dof, alternative)
}

/// CDF of Student's t distribution.
///
/// With `x = ν / (ν + t²)`, the tail mass beyond `|t|` is `½ I_x(ν/2, ½)`.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t.is_nan() || !(dof > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = dof / (dof + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x);
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, reflection below ½).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Continued fraction for `I_x(a, b)` by the modified Lentz method.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function `I_x(a, b)`.
///
/// The continued fraction converges quickly for `x < (a + 1) / (a + b + 2)`;
/// otherwise the symmetry `I_x(a, b) = 1 - I_{1-x}(b, a)` is used.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a.
        for x in [0.1, 0.5, 0.93] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(2.5, 1.0, x) - x.powf(2.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn cdf_symmetry() {
        assert_eq!(student_t_cdf(0.0, 7.0), 0.5);
        for t in [0.3, 1.7, 4.2] {
            assert!((student_t_cdf(t, 12.0) + student_t_cdf(-t, 12.0) - 1.0).abs() < 1e-10);
        }
        // One degree of freedom is the Cauchy distribution.
        let t: f64 = 1.3;
        let cauchy = 0.5 + t.atan() / std::f64::consts::PI;
        assert!((student_t_cdf(t, 1.0) - cauchy).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let a = SampleSummary::new(7.0, 2.0, 30).unwrap();
        let r = pooled_t_test(&a, &a, Alternative::Less);
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_one_tailed, 0.5);
        let zero = SampleSummary::new(1.0, 0.0, 5).unwrap();
        assert_eq!(pooled_t_test(&zero, &zero, Alternative::Greater).t_stat, 0.0);
    }

    #[test]
    fn finite_difference_row() {
        let fd = SampleSummary::new(6.05, 1.71, 70).unwrap();
        let base = SampleSummary::new(7.35, 1.99, 71).unwrap();
        let r = pooled_t_test(&fd, &base, Alternative::Less);
        assert!((r.t_stat + 5.70).abs() < 0.12, "{}", r.t_stat);
        assert_eq!(r.dof, 139.0);
        assert!(r.p_one_tailed < 1e-6);
    }

    #[test]
    fn welch_differs_on_unequal_variances() {
        let abl = SampleSummary::new(10.01, 6.10, 49).unwrap();
        let base = SampleSummary::new(7.35, 1.99, 71).unwrap();
        let pooled = pooled_t_test(&abl, &base, Alternative::Greater);
        let welch = welch_t_test(&abl, &base, Alternative::Greater);
        assert!((pooled.t_stat - 7.47).abs() < 0.12);
        assert!(welch.t_stat < pooled.t_stat - 0.3);
        assert!(welch.dof < 118.0);
    }

    #[test]
    fn summary_validation() {
        assert!(SampleSummary::new(1.0, 1.0, 1).is_err());
        assert!(SampleSummary::new(1.0, -1.0, 5).is_err());
        let s = SampleSummary::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean(), 2.5);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(SampleSummary::from_sd(1.0, 3.0, 4).unwrap().variance(), 9.0);
    }
}
