//! Summary statistics, Student-t intervals for a population mean, paired
//! differences and ratio diagnostics.

mod student_t;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{median, ResultSet};

pub use student_t::{inc_beta, ln_gamma, t_cdf, t_quantile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("geometric mean needs positive values")]
    NonPositive,
    #[error("probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("degrees of freedom must be positive and finite, got {0}")]
    InvalidDegreesOfFreedom(f64),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("an interval needs at least 2 observations, got {0}")]
    TooSmall(usize),
    #[error("result sets are not paired: {0}")]
    Pairing(String),
    #[error("zero baseline value at index {0}")]
    ZeroBaseline(u128),
}

/// A non-empty list of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self {
            values,
            label: None,
        })
    }

    pub fn labeled<S: Into<String>>(mut self, label: S) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Sample standard deviation (n − 1 denominator); 0 for one value.
    pub fn std_dev(&self) -> f64 {
        std_dev(&self.values)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
    /// `None` unless every value is positive.
    pub geometric_mean: Option<f64>,
}

pub fn summary(sample: &Sample) -> Summary {
    Summary {
        n: sample.len(),
        mean: sample.mean(),
        std_dev: sample.std_dev(),
        median: median(sample.values()),
        geometric_mean: geometric_mean(sample.values()).ok(),
    }
}

pub fn geometric_mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(StatsError::NonPositive);
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// A two-sided confidence interval for a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub center: f64,
    pub n: usize,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    /// The interval of the negated quantity.
    pub fn negated(&self) -> Interval {
        Interval {
            low: -self.high,
            high: -self.low,
            level: self.level,
            center: -self.center,
            n: self.n,
        }
    }
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidLevel(level))
    }
}

fn centered(center: f64, half: f64, level: f64, n: usize) -> Interval {
    Interval {
        low: center - half,
        high: center + half,
        level,
        center,
        n,
    }
}

/// `mean ± t_{(1+level)/2, n−1} · s / √n`.
pub fn confidence_interval(sample: &Sample, level: f64) -> Result<Interval, StatsError> {
    check_level(level)?;
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooSmall(n));
    }
    let center = sample.mean();
    let s = sample.std_dev();
    if s == 0.0 {
        return Ok(centered(center, 0.0, level, n));
    }
    let t = t_quantile(0.5 * (1.0 + level), (n - 1) as f64)?;
    Ok(centered(center, t * s / (n as f64).sqrt(), level, n))
}

/// Welch interval for `mean(a) − mean(b)` from two independent samples.
pub fn welch_interval(a: &Sample, b: &Sample, level: f64) -> Result<Interval, StatsError> {
    check_level(level)?;
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooSmall(s.len()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = variance(a.values()) / na;
    let vb = variance(b.values()) / nb;
    let center = a.mean() - b.mean();
    let n = a.len() + b.len();
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(centered(center, 0.0, level, n));
    }
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let t = t_quantile(0.5 * (1.0 + level), df)?;
    Ok(centered(center, t * se2.sqrt(), level, n))
}

/// Checks that both result sets cover the same keys and returns aggregate
/// pairs in key order.
pub fn paired_aggregates(a: &ResultSet, b: &ResultSet) -> Result<Vec<(u128, f64, f64)>, StatsError> {
    let ma = a
        .by_key()
        .ok_or_else(|| StatsError::Pairing(format!("duplicate keys in `{}`", a.object_id)))?;
    let mb = b
        .by_key()
        .ok_or_else(|| StatsError::Pairing(format!("duplicate keys in `{}`", b.object_id)))?;
    if ma.len() != mb.len() || ma.keys().ne(mb.keys()) {
        let only_a = ma.keys().filter(|k| !mb.contains_key(k)).count();
        let only_b = mb.keys().filter(|k| !ma.contains_key(k)).count();
        return Err(StatsError::Pairing(format!(
            "{only_a} configurations only in `{}`, {only_b} only in `{}`",
            a.object_id, b.object_id
        )));
    }
    Ok(ma
        .iter()
        .zip(mb.values())
        .map(|((key, x), y)| (key.0, x.aggregate, y.aggregate))
        .collect())
}

/// Per-configuration `aggregate(a) − aggregate(b)` in key order.
pub fn paired_differences(a: &ResultSet, b: &ResultSet) -> Result<Sample, StatsError> {
    let pairs = paired_aggregates(a, b)?;
    Sample::new(pairs.iter().map(|(_, x, y)| x - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDiagnostics {
    pub ratios: Sample,
    pub mean_ratio: f64,
    pub mean_reciprocal: f64,
    /// `mean(r) · mean(1/r)`; at least 1, equal to 1 only for constant ratios.
    pub asymmetry_product: f64,
}

/// Per-configuration ratios with `baseline` as the denominator.
pub fn ratio_diagnostics(
    a: &ResultSet,
    b: &ResultSet,
    baseline: Baseline,
) -> Result<RatioDiagnostics, StatsError> {
    let pairs = paired_aggregates(a, b)?;
    let mut ratios = Vec::with_capacity(pairs.len());
    for (index, x, y) in pairs {
        let (num, den) = match baseline {
            Baseline::A => (y, x),
            Baseline::B => (x, y),
        };
        if den == 0.0 {
            return Err(StatsError::ZeroBaseline(index));
        }
        if !(num > 0.0 && den > 0.0) {
            return Err(StatsError::NonPositive);
        }
        ratios.push(num / den);
    }
    ratio_summary(Sample::new(ratios)?)
}

/// Jensen diagnostics of an arbitrary positive ratio sample.
pub fn ratio_summary(ratios: Sample) -> Result<RatioDiagnostics, StatsError> {
    if ratios.values().iter().any(|&r| !(r > 0.0)) {
        return Err(StatsError::NonPositive);
    }
    let mean_ratio = ratios.mean();
    let mean_reciprocal = mean(&ratios.values().iter().map(|r| 1.0 / r).collect::<Vec<_>>());
    Ok(RatioDiagnostics {
        ratios,
        mean_ratio,
        mean_reciprocal,
        asymmetry_product: mean_ratio * mean_reciprocal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn summary_examples() {
        assert_abs_diff_eq!(geometric_mean(&[2.0, 8.0]).unwrap(), 4.0, epsilon = 1e-12);
        let c = summary(&sample(&[3.5, 3.5, 3.5]));
        assert_eq!(c.std_dev, 0.0);
        assert_eq!(c.mean, 3.5);
        assert_eq!(summary(&sample(&[1.0, 2.0, 3.0, 4.0])).median, 2.5);
        assert_eq!(geometric_mean(&[1.0, 0.0]), Err(StatsError::NonPositive));
        assert_eq!(summary(&sample(&[-1.0, 2.0])).geometric_mean, None);
        assert_eq!(Sample::new(vec![]), Err(StatsError::Empty));
        assert_eq!(Sample::new(vec![f64::NAN]), Err(StatsError::NonFinite));
    }

    #[test]
    fn t_quantile_reference_values() {
        assert_eq!(t_quantile(0.5, 4.0).unwrap(), 0.0);
        // Published table value.
        assert_abs_diff_eq!(t_quantile(0.975, 10.0).unwrap(), 2.228139, epsilon = 1e-6);
        assert_abs_diff_eq!(t_quantile(0.975, 1e6).unwrap(), 1.959964, epsilon = 1e-3);
    }

    #[test]
    fn interval_examples() {
        let c = confidence_interval(&sample(&[7.0; 5]), 0.95).unwrap();
        assert_eq!((c.low, c.high), (7.0, 7.0));
        // 3 ± 2.7764 · sqrt(2.5) / sqrt(5)
        let i = confidence_interval(&sample(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.95).unwrap();
        assert_abs_diff_eq!(i.low, 1.036757, epsilon = 1e-5);
        assert_abs_diff_eq!(i.high, 4.963243, epsilon = 1e-5);
        let wide = confidence_interval(&sample(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.99).unwrap();
        assert!(wide.low < i.low && wide.high > i.high);
        assert_eq!(
            confidence_interval(&sample(&[1.0]), 0.95),
            Err(StatsError::TooSmall(1))
        );
        assert!(confidence_interval(&sample(&[1.0, 2.0]), 1.0).is_err());
    }

    #[test]
    fn welch_matches_hand_computation() {
        let a = sample(&[1.0, 2.0, 3.0]);
        let b = sample(&[2.0, 4.0, 6.0, 8.0]);
        // va = 1/3, vb = 20/3 / 4 = 5/3; se2 = 2; df = 4 / (1/18 + 25/27)
        let df = 4.0 / ((1.0f64 / 3.0).powi(2) / 2.0 + (5.0f64 / 3.0).powi(2) / 3.0);
        let t = t_quantile(0.975, df).unwrap();
        let w = welch_interval(&a, &b, 0.95).unwrap();
        assert_abs_diff_eq!(w.center, -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.half_width(), t * 2f64.sqrt(), epsilon = 1e-12);
    }

    fn rs(id: &str, v: &[f64]) -> ResultSet {
        ResultSet::from_aggregates(id, v)
    }

    #[test]
    fn paired_difference_examples() {
        let a = rs("a", &[5.0, 7.0]);
        let b = rs("b", &[3.0, 4.0]);
        assert_eq!(paired_differences(&a, &b).unwrap().values(), &[2.0, 3.0]);
        assert_eq!(paired_differences(&a, &a).unwrap().values(), &[0.0, 0.0]);
        assert_eq!(paired_differences(&b, &a).unwrap().values(), &[-2.0, -3.0]);
        let short = rs("c", &[1.0]);
        assert!(matches!(
            paired_differences(&a, &short),
            Err(StatsError::Pairing(_))
        ));
    }

    #[test]
    fn ratio_examples() {
        let d = ratio_summary(sample(&[2.0, 0.5])).unwrap();
        assert_eq!(d.mean_ratio, 1.25);
        assert_eq!(d.mean_reciprocal, 1.25);
        assert_eq!(d.asymmetry_product, 1.5625);
        let eq = ratio_summary(sample(&[1.7, 1.7, 1.7])).unwrap();
        assert_abs_diff_eq!(eq.asymmetry_product, 1.0, epsilon = 1e-15);

        let a = rs("a", &[2.0, 4.0]);
        let b = rs("b", &[4.0, 2.0]);
        let by_a = ratio_diagnostics(&a, &b, Baseline::A).unwrap();
        assert_eq!(by_a.ratios.values(), &[2.0, 0.5]);
        let zero = rs("z", &[0.0, 1.0]);
        assert!(matches!(
            ratio_diagnostics(&zero, &b, Baseline::A),
            Err(StatsError::ZeroBaseline(0))
        ));
    }

    #[test]
    fn width_scales_with_root_n() {
        use crate::rng;
        let mut r = rng::plan_rng(99);
        let mut widths = Vec::new();
        for n in [30usize, 120, 480] {
            // Average over repetitions to tame the spread of s.
            let reps = 200;
            let mut total = 0.0;
            for _ in 0..reps {
                let v: Vec<f64> = (0..n).map(|_| rng::truncated_normal(&mut r, 10.0)).collect();
                let i = confidence_interval(&Sample::new(v).unwrap(), 0.95).unwrap();
                total += i.high - i.low;
            }
            widths.push(total / reps as f64);
        }
        for w in widths.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn gaussian_coverage_calibration() {
        use crate::rng;
        let mut r = rng::plan_rng(2024);
        let mu = 3.0;
        let trials = 10_000;
        let mut hits = 0;
        for _ in 0..trials {
            let v: Vec<f64> = (0..32)
                .map(|_| mu + 2.0 * rng::truncated_normal(&mut r, 40.0))
                .collect();
            if confidence_interval(&Sample::new(v).unwrap(), 0.99).unwrap().contains(mu) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((0.982..=0.996).contains(&rate), "coverage {rate}");
    }

    proptest! {
        #[test]
        fn interval_contains_mean(v in proptest::collection::vec(-1e3f64..1e3, 2..50), level in 0.5f64..0.999) {
            let i = confidence_interval(&Sample::new(v).unwrap(), level).unwrap();
            prop_assert!(i.low <= i.center && i.center <= i.high);
        }

        #[test]
        fn negation_mirrors_interval(v in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
            let s = Sample::new(v.clone()).unwrap();
            let n = Sample::new(v.iter().map(|x| -x).collect()).unwrap();
            let i = confidence_interval(&s, 0.95).unwrap();
            let j = confidence_interval(&n, 0.95).unwrap();
            prop_assert_eq!(j, i.negated());
        }

        #[test]
        fn jensen_bound(v in proptest::collection::vec(0.01f64..100.0, 1..40)) {
            let d = ratio_summary(Sample::new(v).unwrap()).unwrap();
            prop_assert!(d.asymmetry_product >= 1.0 - 1e-12);
        }

        #[test]
        fn quantile_monotone(p in 0.51f64..0.999, dp in 0.0001f64..0.01, df in 1u32..300) {
            let q1 = t_quantile(p, df as f64).unwrap();
            let q2 = t_quantile((p + dp).min(0.9999), df as f64).unwrap();
            prop_assert!(q2 > q1 || p + dp >= 0.9999);
        }
    }
}
