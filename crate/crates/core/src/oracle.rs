//! Ground truth over enumerable synthetic spaces and Monte Carlo coverage
//! experiments for the five methodologies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{self, DesignError, FactorSplit, SamplePlan, SplitFactor};
use crate::rng;
use crate::runner::synthetic::{BoundModel, ModelError, SyntheticModel};
use crate::runner::{Policy, ResultSet};
use crate::space::{ConfigSpace, SpaceError};
use crate::stats::{confidence_interval, welch_interval, Sample, StatsError};

/// Largest space [`population_mean`] enumerates.
pub const ENUMERATION_CAP: u128 = 10_000_000;

/// Iterations of the stratified design whose mean half-width is the default
/// single-point margin.
pub const DEFAULT_MARGIN_ITERATIONS: u32 = 32;

const NOISE_STREAM: u64 = 0x6e6f_6973_65;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("space has {cardinality} points, above the enumeration cap {cap}")]
    TooLarge { cardinality: u128, cap: u128 },
    #[error("model was bound to a different space")]
    SpaceMismatch,
    #[error("iterations must be positive")]
    ZeroIterations,
    #[error("margin must be finite and non-negative, got {0}")]
    BadMargin(f64),
    #[error("factor `{0}` is not in the space")]
    UnknownFactor(String),
    #[error("group `{group}` has only {levels} level(s) of `{target}`")]
    TooFewLevels {
        group: String,
        target: String,
        levels: usize,
    },
    #[error("result set has no measurements")]
    NoResults,
}

/// What the population mean is taken over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Single(String),
    Difference(String, String),
}

impl Target {
    fn objects(&self) -> Vec<String> {
        match self {
            Target::Single(a) => vec![a.clone()],
            Target::Difference(a, b) => vec![a.clone(), b.clone()],
        }
    }
}

/// Exact mean of the noiseless model value (or per-point difference) over
/// every point of the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTruth {
    pub mu: f64,
    pub points: u128,
    pub space_fingerprint: String,
    pub model_fingerprint: String,
    pub objects: Vec<String>,
}

pub fn population_mean(
    model: &SyntheticModel,
    space: &ConfigSpace,
    target: &Target,
) -> Result<PopulationTruth, OracleError> {
    population_mean_bound(&model.bind(space)?, space, target)
}

/// As [`population_mean`] for an already bound model. Sums in index order.
pub fn population_mean_bound(
    model: &BoundModel,
    space: &ConfigSpace,
    target: &Target,
) -> Result<PopulationTruth, OracleError> {
    if model.space_fingerprint() != space.fingerprint() {
        return Err(OracleError::SpaceMismatch);
    }
    let n = space.cardinality();
    if n > ENUMERATION_CAP {
        return Err(OracleError::TooLarge {
            cardinality: n,
            cap: ENUMERATION_CAP,
        });
    }
    let mut sum = 0.0;
    for index in 0..n {
        let levels = space.decode(index)?;
        sum += match target {
            Target::Single(a) => model.true_value_levels(a, &levels)?,
            Target::Difference(a, b) => {
                model.true_value_levels(a, &levels)? - model.true_value_levels(b, &levels)?
            }
        };
    }
    Ok(PopulationTruth {
        mu: sum / n as f64,
        points: n,
        space_fingerprint: space.fingerprint(),
        model_fingerprint: model.model_fingerprint().to_string(),
        objects: target.objects(),
    })
}

/// Low/high level labels of one 2^k factor. Omitted sets default to the
/// lower and upper half of the factor's levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<Vec<String>>,
}

fn default_reps() -> u32 {
    1
}

/// A methodology and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Methodology {
    Stratified {
        stratum_factor: String,
        iterations: u32,
        #[serde(default = "default_reps")]
        reps: u32,
    },
    Factorial2k {
        factors: Vec<SplitSpec>,
        #[serde(default)]
        defaults: BTreeMap<String, String>,
        #[serde(default = "default_reps")]
        reps: u32,
    },
    FullFactorial {
        #[serde(default = "default_reps")]
        reps: u32,
    },
    Rct {
        per_arm: u64,
        #[serde(default = "default_reps")]
        reps: u32,
    },
    SpecPoint {
        stratum_factor: String,
        /// Level label per factor of the recommended configuration.
        recommended: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        margin: Option<f64>,
    },
}

impl Methodology {
    pub fn id(&self) -> &'static str {
        match self {
            Methodology::Stratified { .. } => "stratified",
            Methodology::Factorial2k { .. } => "factorial2k",
            Methodology::FullFactorial { .. } => "full_factorial",
            Methodology::Rct { .. } => "rct",
            Methodology::SpecPoint { .. } => "spec_point",
        }
    }

    /// Parameters as a compact `key=value` list.
    pub fn params(&self) -> String {
        match self {
            Methodology::Stratified {
                stratum_factor,
                iterations,
                reps,
            } => format!("stratum={stratum_factor};iterations={iterations};reps={reps}"),
            Methodology::Factorial2k { factors, reps, .. } => {
                let names: Vec<&str> = factors.iter().map(|f| f.name.as_str()).collect();
                format!("k={};factors={};reps={reps}", factors.len(), names.join("+"))
            }
            Methodology::FullFactorial { reps } => format!("reps={reps}"),
            Methodology::Rct { per_arm, reps } => format!("per_arm={per_arm};reps={reps}"),
            Methodology::SpecPoint {
                recommended,
                margin,
                ..
            } => {
                let point: Vec<String> =
                    recommended.iter().map(|(f, l)| format!("{f}:{l}")).collect();
                match margin {
                    Some(m) => format!("point={};margin={m}", point.join("+")),
                    None => format!("point={};margin=default", point.join("+")),
                }
            }
        }
    }
}

pub fn resolve_split(space: &ConfigSpace, specs: &[SplitSpec]) -> Result<FactorSplit, OracleError> {
    let mut factors = Vec::with_capacity(specs.len());
    for spec in specs {
        let f = space
            .factor(&spec.name)
            .ok_or_else(|| OracleError::UnknownFactor(spec.name.clone()))?;
        let at = f.len() / 2;
        let indices = |labels: &Option<Vec<String>>, default: Vec<usize>| match labels {
            None => Ok(default),
            Some(labels) => labels
                .iter()
                .map(|l| {
                    f.level_index(l).ok_or_else(|| {
                        OracleError::Space(SpaceError::UnknownLevel {
                            factor: spec.name.clone(),
                            level: l.clone(),
                        })
                    })
                })
                .collect(),
        };
        factors.push(SplitFactor {
            name: spec.name.clone(),
            low: indices(&spec.low, (0..at).collect())?,
            high: indices(&spec.high, (at..f.len()).collect())?,
        });
    }
    Ok(FactorSplit::new(factors))
}

/// One methodology's row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub methodology: String,
    pub params: String,
    pub iterations: u32,
    pub hits: u32,
    pub coverage: f64,
    pub cost_per_object: usize,
    pub level: f64,
    pub mu: f64,
    /// Mean CI half-width over iterations; `None` for the single-point design.
    pub mean_half_width: Option<f64>,
    /// Hit margin of the single-point design.
    pub margin: Option<f64>,
}

/// Inputs shared by every methodology of one experiment.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub model: &'a BoundModel,
    pub space: &'a ConfigSpace,
    pub minuend: &'a str,
    pub subtrahend: &'a str,
    pub iterations: u32,
    pub level: f64,
    pub master_seed: u64,
}

/// Aggregates of `object` over `plan`, with the same replicate ordinals the
/// runner uses.
fn simulate(
    model: &BoundModel,
    space: &ConfigSpace,
    plan: &SamplePlan,
    object: &str,
    policy: Policy,
) -> Result<Vec<f64>, OracleError> {
    let reps = plan.reps as u64;
    let mut occurrences: BTreeMap<u128, u64> = BTreeMap::new();
    let mut replicates = Vec::with_capacity(plan.reps as usize);
    let mut out = Vec::with_capacity(plan.len());
    for entry in &plan.entries {
        let occ = occurrences.entry(entry.index).or_insert(0);
        let levels = space.decode(entry.index)?;
        replicates.clear();
        for rep in 0..reps {
            replicates.push(model.sample_levels(object, entry.index, &levels, *occ * reps + rep)?);
        }
        *occ += 1;
        out.push(policy.apply(&replicates));
    }
    Ok(out)
}

enum Outcome {
    Interval { hit: bool, half_width: f64 },
    Point { error: f64 },
}

fn single_iteration(
    exp: &Experiment<'_>,
    methodology: &Methodology,
    mu: f64,
    iteration: u32,
) -> Result<Outcome, OracleError> {
    let sub = rng::sub_seed(exp.master_seed, iteration as u64);
    let model = exp.model.reseeded(rng::combine(&[sub, NOISE_STREAM]));
    let space = exp.space;
    let paired = |plan: SamplePlan| -> Result<Outcome, OracleError> {
        let policy = plan.aggregation.unwrap_or_default();
        let a = simulate(&model, space, &plan, exp.minuend, policy)?;
        let b = simulate(&model, space, &plan, exp.subtrahend, policy)?;
        let diffs = Sample::new(a.iter().zip(&b).map(|(x, y)| x - y).collect())?;
        let ci = confidence_interval(&diffs, exp.level)?;
        Ok(Outcome::Interval {
            hit: ci.contains(mu),
            half_width: ci.half_width(),
        })
    };
    match methodology {
        Methodology::Stratified {
            stratum_factor,
            iterations,
            reps,
        } => paired(design::stratified_sample(
            space,
            stratum_factor,
            *iterations,
            *reps,
            sub,
        )?),
        Methodology::Factorial2k {
            factors,
            defaults,
            reps,
        } => paired(design::factorial_2k(
            space,
            &resolve_split(space, factors)?,
            defaults,
            *reps,
            sub,
        )?),
        Methodology::FullFactorial { reps } => paired(design::full_factorial(space, *reps)?),
        Methodology::Rct { per_arm, reps } => {
            let arms = design::rct_assign(space, *per_arm, *reps, sub)?;
            let control = simulate(&model, space, &arms.control, exp.minuend, Policy::Mean)?;
            let treatment =
                simulate(&model, space, &arms.treatment, exp.subtrahend, Policy::Mean)?;
            let ci = welch_interval(&Sample::new(control)?, &Sample::new(treatment)?, exp.level)?;
            Ok(Outcome::Interval {
                hit: ci.contains(mu),
                half_width: ci.half_width(),
            })
        }
        Methodology::SpecPoint {
            stratum_factor,
            recommended,
            ..
        } => {
            let ec = space
                .configuration_from_labels(recommended.iter().map(|(f, l)| (f.as_str(), l.as_str())))?;
            let plan = design::spec_point(space, &ec, stratum_factor)?;
            let policy = plan.aggregation.unwrap_or(Policy::Median);
            let a = simulate(&model, space, &plan, exp.minuend, policy)?;
            let b = simulate(&model, space, &plan, exp.subtrahend, policy)?;
            let estimate = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
            Ok(Outcome::Point {
                error: (estimate - mu).abs(),
            })
        }
    }
}

fn cost_per_object(space: &ConfigSpace, methodology: &Methodology) -> Result<usize, OracleError> {
    // Plan sizes do not depend on the seed.
    Ok(match methodology {
        Methodology::Stratified {
            stratum_factor,
            iterations,
            reps,
        } => design::stratified_sample(space, stratum_factor, *iterations, *reps, 0)?
            .cost_per_object(),
        Methodology::Factorial2k {
            factors,
            defaults,
            reps,
        } => design::factorial_2k(space, &resolve_split(space, factors)?, defaults, *reps, 0)?
            .cost_per_object(),
        Methodology::FullFactorial { .. } => {
            let n = space.cardinality();
            if n > design::DEFAULT_MATERIALIZE_CAP {
                return Err(DesignError::TooLarge {
                    cardinality: n,
                    cap: design::DEFAULT_MATERIALIZE_CAP,
                }
                .into());
            }
            n as usize
        }
        Methodology::Rct { per_arm, .. } => *per_arm as usize,
        Methodology::SpecPoint { .. } => 1,
    })
}

/// Runs `exp.iterations` independent iterations of `methodology` and counts
/// how often the ground truth is covered. Iterations run in parallel; the
/// result does not depend on scheduling.
pub fn coverage_experiment(
    exp: &Experiment<'_>,
    methodology: &Methodology,
) -> Result<CoverageResult, OracleError> {
    if exp.iterations == 0 {
        return Err(OracleError::ZeroIterations);
    }
    let truth = population_mean_bound(
        exp.model,
        exp.space,
        &Target::Difference(exp.minuend.to_string(), exp.subtrahend.to_string()),
    )?;
    coverage_with_truth(exp, methodology, truth.mu)
}

fn coverage_with_truth(
    exp: &Experiment<'_>,
    methodology: &Methodology,
    mu: f64,
) -> Result<CoverageResult, OracleError> {
    let cost = cost_per_object(exp.space, methodology)?;
    let outcomes = (0..exp.iterations)
        .into_par_iter()
        .map(|i| single_iteration(exp, methodology, mu, i))
        .collect::<Result<Vec<_>, _>>()?;
    let (hits, mean_half_width, margin) = match methodology {
        Methodology::SpecPoint {
            stratum_factor,
            margin,
            ..
        } => {
            let margin = match margin {
                Some(m) if m.is_finite() && *m >= 0.0 => *m,
                Some(m) => return Err(OracleError::BadMargin(*m)),
                None => default_margin(exp, stratum_factor, mu)?,
            };
            let hits = outcomes
                .iter()
                .filter(|o| matches!(o, Outcome::Point { error } if *error <= margin))
                .count();
            (hits, None, Some(margin))
        }
        _ => {
            let mut hits = 0;
            let mut width = 0.0;
            for o in &outcomes {
                if let Outcome::Interval { hit, half_width } = o {
                    hits += usize::from(*hit);
                    width += half_width;
                }
            }
            (hits, Some(width / outcomes.len() as f64), None)
        }
    };
    Ok(CoverageResult {
        methodology: methodology.id().to_string(),
        params: methodology.params(),
        iterations: exp.iterations,
        hits: hits as u32,
        coverage: hits as f64 / exp.iterations as f64,
        cost_per_object: cost,
        level: exp.level,
        mu,
        mean_half_width,
        margin,
    })
}

/// Mean half-width of the stratified design with
/// [`DEFAULT_MARGIN_ITERATIONS`] iterations over `stratum_factor`, under the
/// same experiment settings.
fn default_margin(exp: &Experiment<'_>, stratum_factor: &str, mu: f64) -> Result<f64, OracleError> {
    let stratified = Methodology::Stratified {
        stratum_factor: stratum_factor.to_string(),
        iterations: DEFAULT_MARGIN_ITERATIONS,
        reps: 1,
    };
    let r = coverage_with_truth(exp, &stratified, mu)?;
    Ok(r.mean_half_width.expect("stratified rows carry a half-width"))
}

/// One row per methodology, in the order given.
pub fn methodology_comparison(
    exp: &Experiment<'_>,
    methodologies: &[Methodology],
) -> Result<Vec<CoverageResult>, OracleError> {
    if exp.iterations == 0 {
        return Err(OracleError::ZeroIterations);
    }
    let mu = population_mean_bound(
        exp.model,
        exp.space,
        &Target::Difference(exp.minuend.to_string(), exp.subtrahend.to_string()),
    )?
    .mu;
    methodologies
        .iter()
        .map(|m| coverage_with_truth(exp, m, mu))
        .collect()
}

/// Best target level within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLevelRow {
    pub group: String,
    pub best_level: String,
    pub best_index: usize,
    pub mean_time: f64,
    /// Number of target levels observed in the group.
    pub candidates: usize,
}

/// For each level of `group_factor` present in `results`, the level of
/// `target_factor` with the lowest mean aggregate. Ties go to the lowest
/// level index. Rows follow the group factor's level order.
pub fn best_level_report(
    results: &ResultSet,
    space: &ConfigSpace,
    target_factor: &str,
    group_factor: &str,
) -> Result<Vec<BestLevelRow>, OracleError> {
    let target = space
        .factor_position(target_factor)
        .map_err(|_| OracleError::UnknownFactor(target_factor.to_string()))?;
    let group = space
        .factor_position(group_factor)
        .map_err(|_| OracleError::UnknownFactor(group_factor.to_string()))?;
    if results.is_empty() {
        return Err(OracleError::NoResults);
    }
    let mut cells: BTreeMap<usize, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for m in &results.measurements {
        let levels = space.decode(m.ec_index)?;
        let cell = cells
            .entry(levels[group])
            .or_default()
            .entry(levels[target])
            .or_insert((0.0, 0));
        cell.0 += m.aggregate;
        cell.1 += 1;
    }
    let factors = space.factors();
    let mut rows = Vec::with_capacity(cells.len());
    for (g, per_target) in cells {
        let group_label = factors[group].levels[g].clone();
        if per_target.len() < 2 {
            return Err(OracleError::TooFewLevels {
                group: group_label,
                target: target_factor.to_string(),
                levels: per_target.len(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (&t, &(sum, count)) in &per_target {
            let mean = sum / count as f64;
            if best.is_none_or(|(_, b)| mean < b) {
                best = Some((t, mean));
            }
        }
        let (t, mean_time) = best.expect("at least two candidates");
        rows.push(BestLevelRow {
            group: group_label,
            best_level: factors[target].levels[t].clone(),
            best_index: t,
            mean_time,
            candidates: per_target.len(),
        });
    }
    Ok(rows)
}
