//! Paired comparison of two evaluated objects measured under the same EC
//! configurations.
//!
//! The minuend is always the first argument: differences are
//! `minuend − subtrahend` execution times, so a negative interval means the
//! minuend is faster.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{median, Policy, ResultSet};
use crate::space::{ConfigSpace, SpaceError};
use crate::stats::{
    self, confidence_interval, geometric_mean, paired_aggregates, Baseline, Interval,
    RatioDiagnostics, Sample, StatsError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("no group label for stratum `{0}`")]
    UnknownGroup(String),
    #[error("stratum `{stratum}` has {got} runs, expected 3")]
    ReplicateCount { stratum: String, got: usize },
    #[error("stratum `{0}` has a non-positive score")]
    NonPositiveScore(String),
    #[error("no workloads to combine")]
    Empty,
}

impl CompareError {
    /// Whether the error means the two result sets are not paired.
    pub fn is_pairing(&self) -> bool {
        matches!(self, CompareError::Stats(StatsError::Pairing(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    NoSignificantDifference,
    MinuendOutperforms,
    SubtrahendOutperforms,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::NoSignificantDifference => "NoSignificantDifference",
            VerdictKind::MinuendOutperforms => "MinuendOutperforms",
            VerdictKind::SubtrahendOutperforms => "SubtrahendOutperforms",
        }
    }

    /// The verdict after swapping minuend and subtrahend.
    pub fn swapped(self) -> Self {
        match self {
            VerdictKind::NoSignificantDifference => VerdictKind::NoSignificantDifference,
            VerdictKind::MinuendOutperforms => VerdictKind::SubtrahendOutperforms,
            VerdictKind::SubtrahendOutperforms => VerdictKind::MinuendOutperforms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub basis: Interval,
}

/// Classifies a difference interval against zero. An endpoint exactly at zero
/// counts as containing zero.
pub fn verdict_of(interval: &Interval) -> Verdict {
    let kind = if interval.high < 0.0 {
        VerdictKind::MinuendOutperforms
    } else if interval.low > 0.0 {
        VerdictKind::SubtrahendOutperforms
    } else {
        VerdictKind::NoSignificantDifference
    };
    Verdict {
        kind,
        basis: *interval,
    }
}

/// Maps EC indices to group labels through one factor of the space, with an
/// optional relabeling of its levels (e.g. workload → sub-suite).
#[derive(Debug, Clone)]
pub struct Grouping<'a> {
    space: &'a ConfigSpace,
    factor: String,
    factor_pos: usize,
    relabel: Option<BTreeMap<String, String>>,
}

impl<'a> Grouping<'a> {
    pub fn by_factor(space: &'a ConfigSpace, factor: &str) -> Result<Self, CompareError> {
        Ok(Self {
            space,
            factor: factor.to_string(),
            factor_pos: space.factor_position(factor)?,
            relabel: None,
        })
    }

    pub fn with_map(mut self, map: BTreeMap<String, String>) -> Self {
        self.relabel = Some(map);
        self
    }

    pub fn name(&self) -> &str {
        &self.factor
    }

    pub fn group_of(&self, ec_index: u128) -> Result<String, CompareError> {
        let levels = self.space.decode(ec_index)?;
        let label = &self.space.factors()[self.factor_pos].levels[levels[self.factor_pos]];
        match &self.relabel {
            None => Ok(label.clone()),
            Some(map) => map
                .get(label)
                .cloned()
                .ok_or_else(|| CompareError::UnknownGroup(label.clone())),
        }
    }
}

/// Interval and verdict for one group of paired differences. Groups with a
/// single configuration carry no interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: String,
    pub n: usize,
    pub mean_diff: f64,
    pub interval: Option<Interval>,
    pub verdict: Option<VerdictKind>,
}

impl GroupResult {
    fn from_values(group: String, values: Vec<f64>, level: f64) -> Result<Self, CompareError> {
        let sample = Sample::new(values)?;
        let interval = if sample.len() >= 2 {
            Some(confidence_interval(&sample, level)?)
        } else {
            None
        };
        Ok(Self {
            group,
            n: sample.len(),
            mean_diff: sample.mean(),
            verdict: interval.as_ref().map(|i| verdict_of(i).kind),
            interval,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFlags {
    /// Aggregation policy shared by every measurement, if uniform.
    pub aggregation: Option<Policy>,
    pub ci_family: String,
    pub difference_basis: String,
    pub grouping: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub minuend: String,
    pub subtrahend: String,
    pub minuend_plan: String,
    pub subtrahend_plan: String,
    pub level: f64,
    pub overall: GroupResult,
    pub groups: Vec<GroupResult>,
    pub flags: DecisionFlags,
}

impl ComparisonReport {
    pub fn overall_verdict(&self) -> Option<VerdictKind> {
        self.overall.verdict
    }
}

/// Label of the pooled row.
pub const OVERALL: &str = "all";

fn uniform_policy(a: &ResultSet, b: &ResultSet) -> Option<Policy> {
    let mut policies = a.measurements.iter().chain(&b.measurements).map(|m| m.policy);
    let first = policies.next()?;
    policies.all(|p| p == first).then_some(first)
}

/// Paired comparison `a − b` at confidence `level`, pooled and optionally
/// per group. Fails if the result sets do not cover identical configuration
/// keys.
pub fn compare_objects(
    a: &ResultSet,
    b: &ResultSet,
    level: f64,
    group_by: Option<&Grouping<'_>>,
) -> Result<ComparisonReport, CompareError> {
    let pairs = paired_aggregates(a, b)?;
    let diffs: Vec<(u128, f64)> = pairs.iter().map(|&(i, x, y)| (i, x - y)).collect();
    let all: Vec<f64> = diffs.iter().map(|(_, d)| *d).collect();
    let overall_sample = Sample::new(all.clone())?;
    let overall_interval = confidence_interval(&overall_sample, level)?;
    let overall = GroupResult {
        group: OVERALL.to_string(),
        n: overall_sample.len(),
        mean_diff: overall_sample.mean(),
        interval: Some(overall_interval),
        verdict: Some(verdict_of(&overall_interval).kind),
    };
    let mut groups = Vec::new();
    match group_by {
        Some(grouping) => {
            let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (index, d) in &diffs {
                buckets.entry(grouping.group_of(*index)?).or_default().push(*d);
            }
            for (group, values) in buckets {
                groups.push(GroupResult::from_values(group, values, level)?);
            }
        }
        None => groups.push(overall.clone()),
    }
    Ok(ComparisonReport {
        minuend: a.object_id.clone(),
        subtrahend: b.object_id.clone(),
        minuend_plan: a.plan_fingerprint.clone(),
        subtrahend_plan: b.plan_fingerprint.clone(),
        level,
        overall,
        groups,
        flags: DecisionFlags {
            aggregation: uniform_policy(a, b),
            ci_family: "student_t".to_string(),
            difference_basis: "minuend_minus_subtrahend".to_string(),
            grouping: group_by.map(|g| g.name().to_string()),
        },
    })
}

/// What a ratio interval says, read against 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioReading {
    /// Interval above 1: the numerator object is slower than the baseline.
    BaselineFaster,
    /// Interval below 1: the numerator object is faster than the baseline.
    BaselineSlower,
    Inconclusive,
}

fn ratio_reading(interval: &Interval) -> RatioReading {
    if interval.low > 1.0 {
        RatioReading::BaselineFaster
    } else if interval.high < 1.0 {
        RatioReading::BaselineSlower
    } else {
        RatioReading::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioView {
    pub baseline: String,
    pub diagnostics: RatioDiagnostics,
    pub interval: Interval,
    pub reading: RatioReading,
}

/// Difference intervals under both orderings next to ratio intervals under
/// both baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub a: String,
    pub b: String,
    pub level: f64,
    pub difference_a_minus_b: Interval,
    pub difference_b_minus_a: Interval,
    /// `(a − b)` and `(b − a)` intervals are exact mirrors.
    pub differences_mirror: bool,
    pub ratio_baseline_a: RatioView,
    pub ratio_baseline_b: RatioView,
    /// The two ratio intervals are reciprocal to 1e-9 relative.
    pub ratios_reciprocal: bool,
    /// Both ratio readings name the same faster object (or neither does).
    pub ratio_conclusions_agree: bool,
    /// Both ratio intervals exclude 1 and name opposite winners.
    pub ratio_sign_flip: bool,
}

fn ratio_view(
    a: &ResultSet,
    b: &ResultSet,
    baseline: Baseline,
    level: f64,
) -> Result<RatioView, CompareError> {
    let diagnostics = stats::ratio_diagnostics(a, b, baseline)?;
    let interval = confidence_interval(&diagnostics.ratios, level)?;
    Ok(RatioView {
        baseline: match baseline {
            Baseline::A => a.object_id.clone(),
            Baseline::B => b.object_id.clone(),
        },
        reading: ratio_reading(&interval),
        diagnostics,
        interval,
    })
}

fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

pub fn asymmetry_report(
    a: &ResultSet,
    b: &ResultSet,
    level: f64,
) -> Result<AsymmetryReport, CompareError> {
    let ab = confidence_interval(&stats::paired_differences(a, b)?, level)?;
    let ba = confidence_interval(&stats::paired_differences(b, a)?, level)?;
    let differences_mirror = close(ab.low, -ba.high, 1e-12) && close(ab.high, -ba.low, 1e-12);
    let ra = ratio_view(a, b, Baseline::A, level)?;
    let rb = ratio_view(a, b, Baseline::B, level)?;
    let ratios_reciprocal = close(ra.interval.low, 1.0 / rb.interval.high, 1e-9)
        && close(ra.interval.high, 1.0 / rb.interval.low, 1e-9);
    // Under baseline A the numerator is b; under baseline B it is a.
    // "A faster" reads as BaselineFaster for A and BaselineSlower for B.
    use RatioReading::*;
    let ratio_conclusions_agree = matches!(
        (ra.reading, rb.reading),
        (BaselineFaster, BaselineSlower) | (BaselineSlower, BaselineFaster) | (Inconclusive, Inconclusive)
    );
    let ratio_sign_flip = matches!(
        (ra.reading, rb.reading),
        (BaselineFaster, BaselineFaster) | (BaselineSlower, BaselineSlower)
    );
    Ok(AsymmetryReport {
        a: a.object_id.clone(),
        b: b.object_id.clone(),
        level,
        difference_a_minus_b: ab,
        difference_b_minus_a: ba,
        differences_mirror,
        ratio_baseline_a: ra,
        ratio_baseline_b: rb,
        ratios_reciprocal,
        ratio_conclusions_agree,
        ratio_sign_flip,
    })
}

/// Recommended-configuration composite: per-workload median of exactly three
/// runs, combined by geometric mean.
pub fn spec_composite<S: AsRef<str>>(per_workload: &[(S, Vec<f64>)]) -> Result<f64, CompareError> {
    if per_workload.is_empty() {
        return Err(CompareError::Empty);
    }
    let mut medians = Vec::with_capacity(per_workload.len());
    for (stratum, runs) in per_workload {
        let stratum = stratum.as_ref();
        if runs.len() != 3 {
            return Err(CompareError::ReplicateCount {
                stratum: stratum.to_string(),
                got: runs.len(),
            });
        }
        if runs.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(CompareError::NonPositiveScore(stratum.to_string()));
        }
        medians.push(median(runs));
    }
    Ok(geometric_mean(&medians)?)
}
