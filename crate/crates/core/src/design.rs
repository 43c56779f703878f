//! Experiment plans for the five methodologies: iterative stratified
//! sampling, 2^k r factorial, general (full) factorial, randomized controlled
//! trial arms, and the single recommended configuration.
//!
//! Every generator is a deterministic function of the space, its parameters
//! and a 64-bit seed. Randomness comes from [`crate::rng`]; a single plan is
//! generated sequentially from one stream.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint;
use crate::rng::{self, PlanRng};
use crate::runner::Policy;
use crate::space::{ConfigSpace, Configuration, SpaceError};

/// Largest space `full_factorial` materializes unless told otherwise.
pub const DEFAULT_MATERIALIZE_CAP: u128 = 1_000_000;

/// Replicates per entry of a recommended-configuration plan.
pub const SPEC_POINT_REPS: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("unknown stratum factor `{0}`")]
    UnknownStratum(String),
    #[error("iterations must be positive")]
    ZeroIterations,
    #[error("reps must be positive")]
    ZeroReps,
    #[error("factor `{0}` has an empty low or high level set")]
    EmptySplit(String),
    #[error("factor `{0}` has overlapping low and high level sets")]
    OverlappingSplit(String),
    #[error("factor `{0}` is selected more than once")]
    DuplicateSelection(String),
    #[error("a 2^k design needs at least one selected factor")]
    NoFactorsSelected,
    #[error("{k} selected factors exceed the {available} factors of the space")]
    TooManyFactors { k: usize, available: usize },
    #[error("unselected factor `{0}` needs a default level")]
    MissingDefault(String),
    #[error("space of {cardinality} points exceeds the materialization cap {cap}")]
    TooLarge { cardinality: u128, cap: u128 },
    #[error("{per_arm} per arm needs {needed} distinct points but the space has {cardinality}")]
    ArmsTooLarge {
        per_arm: u64,
        needed: u128,
        cardinality: u128,
    },
    #[error("per-arm size must be positive")]
    ZeroArm,
    #[error("plan was built for space {expected} but the space is {actual}")]
    FingerprintMismatch { expected: String, actual: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Stratified,
    #[serde(rename = "factorial2k")]
    Factorial2k,
    FullFactorial,
    RctArm,
    SpecPoint,
}

impl DesignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::Stratified => "stratified",
            DesignKind::Factorial2k => "factorial2k",
            DesignKind::FullFactorial => "full_factorial",
            DesignKind::RctArm => "rct_arm",
            DesignKind::SpecPoint => "spec_point",
        }
    }

    fn has_strata(self) -> bool {
        matches!(self, DesignKind::Stratified | DesignKind::SpecPoint)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub index: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

/// An ordered list of configurations to measure, each `reps` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub design: DesignKind,
    pub seed: u64,
    pub reps: u32,
    pub space_fingerprint: String,
    /// Aggregation the design prescribes, if any (the recommended-point design
    /// takes the median of its three runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Policy>,
    pub entries: Vec<PlanEntry>,
}

impl SamplePlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint::of_json(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Checks the plan against a space: fingerprint, index range and the
    /// stratum-presence rule.
    pub fn validate(&self, space: &ConfigSpace) -> Result<(), DesignError> {
        let actual = space.fingerprint();
        if self.space_fingerprint != actual {
            return Err(DesignError::FingerprintMismatch {
                expected: self.space_fingerprint.clone(),
                actual,
            });
        }
        if self.reps == 0 {
            return Err(DesignError::ZeroReps);
        }
        for e in &self.entries {
            if e.index >= space.cardinality() {
                return Err(SpaceError::IndexOutOfRange {
                    index: e.index,
                    cardinality: space.cardinality(),
                }
                .into());
            }
        }
        Ok(())
    }

    /// Number of configurations each object is measured under.
    pub fn cost_per_object(&self) -> usize {
        self.entries.len()
    }

    fn new(design: DesignKind, space: &ConfigSpace, reps: u32, seed: u64) -> Self {
        Self {
            design,
            seed,
            reps,
            space_fingerprint: space.fingerprint(),
            aggregation: None,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, index: u128, stratum: Option<String>) {
        debug_assert_eq!(stratum.is_some(), self.design.has_strata());
        self.entries.push(PlanEntry { index, stratum });
    }
}

/// Low/high level sets of one selected factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFactor {
    pub name: String,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
}

/// The factors chosen for a 2^k design and their level partitions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactorSplit {
    pub factors: Vec<SplitFactor>,
}

impl FactorSplit {
    pub fn new(factors: Vec<SplitFactor>) -> Self {
        Self { factors }
    }

    /// Splits each named factor in half by level order: the first `m / 2`
    /// levels are low, the rest high.
    pub fn halves(space: &ConfigSpace, names: &[&str]) -> Result<Self, DesignError> {
        let mut factors = Vec::new();
        for name in names {
            let f = space
                .factor(name)
                .ok_or_else(|| SpaceError::UnknownFactor(name.to_string()))?;
            let at = f.len() / 2;
            factors.push(SplitFactor {
                name: name.to_string(),
                low: (0..at).collect(),
                high: (at..f.len()).collect(),
            });
        }
        Ok(Self { factors })
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    fn validate(&self, space: &ConfigSpace) -> Result<Vec<usize>, DesignError> {
        if self.factors.is_empty() {
            return Err(DesignError::NoFactorsSelected);
        }
        if self.factors.len() > space.factors().len() {
            return Err(DesignError::TooManyFactors {
                k: self.factors.len(),
                available: space.factors().len(),
            });
        }
        let mut positions = Vec::with_capacity(self.factors.len());
        for sf in &self.factors {
            let pos = space.factor_position(&sf.name)?;
            if positions.contains(&pos) {
                return Err(DesignError::DuplicateSelection(sf.name.clone()));
            }
            if sf.low.is_empty() || sf.high.is_empty() {
                return Err(DesignError::EmptySplit(sf.name.clone()));
            }
            let m = space.factors()[pos].len();
            for &l in sf.low.iter().chain(&sf.high) {
                if l >= m {
                    return Err(SpaceError::LevelOutOfRange {
                        factor: sf.name.clone(),
                        index: l,
                        levels: m,
                    }
                    .into());
                }
            }
            let low: HashSet<usize> = sf.low.iter().copied().collect();
            if sf.high.iter().any(|h| low.contains(h)) {
                return Err(DesignError::OverlappingSplit(sf.name.clone()));
            }
            positions.push(pos);
        }
        Ok(positions)
    }
}

/// Control and treatment arms of a randomized controlled trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctAssignment {
    pub control: SamplePlan,
    pub treatment: SamplePlan,
}

fn check_reps(reps: u32) -> Result<(), DesignError> {
    if reps == 0 {
        Err(DesignError::ZeroReps)
    } else {
        Ok(())
    }
}

/// Iterative stratified random sampling. Each iteration visits every level of
/// the stratum factor in declared order and, for each, draws every other
/// factor's level uniformly and independently. Duplicates across iterations
/// are kept.
pub fn stratified_sample(
    space: &ConfigSpace,
    stratum_factor: &str,
    iterations: u32,
    reps: u32,
    seed: u64,
) -> Result<SamplePlan, DesignError> {
    let stratum_pos = space
        .factor_position(stratum_factor)
        .map_err(|_| DesignError::UnknownStratum(stratum_factor.to_string()))?;
    if iterations == 0 {
        return Err(DesignError::ZeroIterations);
    }
    check_reps(reps)?;
    let factors = space.factors();
    let strata = &factors[stratum_pos].levels;
    let mut rng = rng::plan_rng(seed);
    let mut plan = SamplePlan::new(DesignKind::Stratified, space, reps, seed);
    plan.entries.reserve(iterations as usize * strata.len());
    let mut levels = vec![0usize; factors.len()];
    for _ in 0..iterations {
        for (s, label) in strata.iter().enumerate() {
            for (pos, factor) in factors.iter().enumerate() {
                levels[pos] = if pos == stratum_pos {
                    s
                } else {
                    rng::uniform_below(&mut rng, factor.len() as u64) as usize
                };
            }
            plan.push(space.encode(&levels)?, Some(label.clone()));
        }
    }
    Ok(plan)
}

/// 2^k r factorial design. For each selected factor one representative level
/// is drawn from its low set and one from its high set (in split order, low
/// first); every unselected factor is pinned to its default. Entries follow
/// binary order with the first selected factor as the most significant bit
/// (0 = low).
///
/// `defaults` maps unselected factor names to level labels; single-level
/// factors need no entry.
pub fn factorial_2k(
    space: &ConfigSpace,
    split: &FactorSplit,
    defaults: &BTreeMap<String, String>,
    reps: u32,
    seed: u64,
) -> Result<SamplePlan, DesignError> {
    check_reps(reps)?;
    let positions = split.validate(space)?;
    let base = default_levels(space, &positions, defaults)?;
    let mut rng = rng::plan_rng(seed);
    let reps_per_factor: Vec<[usize; 2]> = split
        .factors
        .iter()
        .map(|sf| {
            let low = sf.low[rng::uniform_below(&mut rng, sf.low.len() as u64) as usize];
            let high = sf.high[rng::uniform_below(&mut rng, sf.high.len() as u64) as usize];
            [low, high]
        })
        .collect();
    let k = positions.len();
    let mut plan = SamplePlan::new(DesignKind::Factorial2k, space, reps, seed);
    let mut levels = base;
    for mask in 0u64..(1u64 << k) {
        for (j, (&pos, pair)) in positions.iter().zip(&reps_per_factor).enumerate() {
            let bit = (mask >> (k - 1 - j)) & 1;
            levels[pos] = pair[bit as usize];
        }
        plan.push(space.encode(&levels)?, None);
    }
    Ok(plan)
}

fn default_levels(
    space: &ConfigSpace,
    selected: &[usize],
    defaults: &BTreeMap<String, String>,
) -> Result<Vec<usize>, DesignError> {
    for name in defaults.keys() {
        space.factor_position(name)?;
    }
    space
        .factors()
        .iter()
        .enumerate()
        .map(|(pos, f)| {
            if selected.contains(&pos) {
                return Ok(0);
            }
            match defaults.get(&f.name) {
                Some(label) => f.level_index(label).ok_or_else(|| {
                    DesignError::Space(SpaceError::UnknownLevel {
                        factor: f.name.clone(),
                        level: label.clone(),
                    })
                }),
                None if f.len() == 1 => Ok(0),
                None => Err(DesignError::MissingDefault(f.name.clone())),
            }
        })
        .collect()
}

/// General factorial design: every point of the space, in index order.
pub fn full_factorial(space: &ConfigSpace, reps: u32) -> Result<SamplePlan, DesignError> {
    full_factorial_capped(space, reps, DEFAULT_MATERIALIZE_CAP)
}

pub fn full_factorial_capped(
    space: &ConfigSpace,
    reps: u32,
    cap: u128,
) -> Result<SamplePlan, DesignError> {
    check_reps(reps)?;
    let cardinality = space.cardinality();
    if cardinality > cap {
        return Err(DesignError::TooLarge { cardinality, cap });
    }
    let mut plan = SamplePlan::new(DesignKind::FullFactorial, space, reps, 0);
    plan.entries = (0..cardinality)
        .map(|index| PlanEntry {
            index,
            stratum: None,
        })
        .collect();
    Ok(plan)
}

/// Draws `2 * per_arm` distinct points without replacement (Floyd's
/// algorithm), shuffles them, and splits them into equal arms.
pub fn rct_assign(
    space: &ConfigSpace,
    per_arm: u64,
    reps: u32,
    seed: u64,
) -> Result<RctAssignment, DesignError> {
    check_reps(reps)?;
    if per_arm == 0 {
        return Err(DesignError::ZeroArm);
    }
    let cardinality = space.cardinality();
    let needed = 2 * per_arm as u128;
    if needed > cardinality {
        return Err(DesignError::ArmsTooLarge {
            per_arm,
            needed,
            cardinality,
        });
    }
    let mut rng = rng::plan_rng(seed);
    let mut chosen = floyd_sample(&mut rng, cardinality, needed as usize);
    shuffle(&mut rng, &mut chosen);
    let mut control = SamplePlan::new(DesignKind::RctArm, space, reps, seed);
    let mut treatment = control.clone();
    let (c, t) = chosen.split_at(per_arm as usize);
    control.entries = c.iter().map(|&index| PlanEntry { index, stratum: None }).collect();
    treatment.entries = t.iter().map(|&index| PlanEntry { index, stratum: None }).collect();
    Ok(RctAssignment { control, treatment })
}

fn floyd_sample(rng: &mut PlanRng, n: u128, amount: usize) -> Vec<u128> {
    let mut seen = HashSet::with_capacity(amount);
    let mut out = Vec::with_capacity(amount);
    for j in (n - amount as u128)..n {
        let t = rng::uniform_below_u128(rng, j + 1);
        let pick = if seen.contains(&t) { j } else { t };
        seen.insert(pick);
        out.push(pick);
    }
    out
}

fn shuffle<T>(rng: &mut PlanRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng::uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// The single recommended configuration, three runs, median aggregation.
pub fn spec_point(
    space: &ConfigSpace,
    recommended: &Configuration,
    stratum_factor: &str,
) -> Result<SamplePlan, DesignError> {
    let index = space.index_of(recommended)?;
    let stratum_pos = space
        .factor_position(stratum_factor)
        .map_err(|_| DesignError::UnknownStratum(stratum_factor.to_string()))?;
    let levels = space.decode(index)?;
    let label = space.factors()[stratum_pos].levels[levels[stratum_pos]].clone();
    let mut plan = SamplePlan::new(DesignKind::SpecPoint, space, SPEC_POINT_REPS, 0);
    plan.aggregation = Some(Policy::Median);
    plan.push(index, Some(label));
    Ok(plan)
}
