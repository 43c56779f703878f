//! Evaluation-condition configuration spaces.
//!
//! A [`ConfigSpace`] is the cartesian product of named [`Factor`]s. Points are
//! addressed by a mixed-radix index: factors are taken in declared order and
//! the last factor varies fastest, so index `0` is every factor at level `0`
//! and `cardinality - 1` is every factor at its last level. Nothing is ever
//! materialized; [`ConfigSpace::config_at`] and [`ConfigSpace::index_of`]
//! decode and encode single points.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint;

/// Relative slack used when comparing cumulative weights against a coverage
/// target, so that restriction is stable under re-normalization rounding.
const COVERAGE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),
    #[error("factor `{0}` has no levels")]
    EmptyLevels(String),
    #[error("factor `{factor}` declares level `{level}` more than once")]
    DuplicateLevel { factor: String, level: String },
    #[error("factor `{factor}` has {levels} levels but {weights} weights")]
    WeightLength {
        factor: String,
        levels: usize,
        weights: usize,
    },
    #[error("factor `{0}` has invalid weights (negative, non-finite, or zero total)")]
    InvalidWeights(String),
    #[error("factor `{0}` has no weights")]
    MissingWeights(String),
    #[error("factor name must not be empty")]
    EmptyName,
    #[error("space cardinality exceeds 128 bits")]
    Overflow,
    #[error("index {index} out of range for space of cardinality {cardinality}")]
    IndexOutOfRange { index: u128, cardinality: u128 },
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("unknown level `{level}` for factor `{factor}`")]
    UnknownLevel { factor: String, level: String },
    #[error("level index {index} out of range for factor `{factor}` ({levels} levels)")]
    LevelOutOfRange {
        factor: String,
        index: usize,
        levels: usize,
    },
    #[error("configuration does not assign factors in space order")]
    FactorOrder,
    #[error("coverage must lie in (0, 1], got {0}")]
    InvalidCoverage(f64),
    #[error("object id must not be empty")]
    EmptyObjectId,
    #[error("invalid space definition: {0}")]
    Parse(String),
}

/// One indispensable component of the evaluation condition and its levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Weight mass of levels removed by a top-N restriction. Counted in the
    /// normalization total so that restricting twice is a no-op.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped_weight: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Factor {
    pub fn new<S: Into<String>>(name: S, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            levels,
            weights: None,
            dropped_weight: 0.0,
        }
    }

    /// Convenience constructor from anything displayable.
    pub fn from_labels<S, I, L>(name: S, labels: I) -> Self
    where
        S: Into<String>,
        I: IntoIterator<Item = L>,
        L: ToString,
    {
        Self::new(name, labels.into_iter().map(|l| l.to_string()).collect())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    fn validate(&self) -> Result<(), SpaceError> {
        if self.name.is_empty() {
            return Err(SpaceError::EmptyName);
        }
        if self.levels.is_empty() {
            return Err(SpaceError::EmptyLevels(self.name.clone()));
        }
        let mut seen = BTreeSet::new();
        for level in &self.levels {
            if !seen.insert(level.as_str()) {
                return Err(SpaceError::DuplicateLevel {
                    factor: self.name.clone(),
                    level: level.clone(),
                });
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.levels.len() {
                return Err(SpaceError::WeightLength {
                    factor: self.name.clone(),
                    levels: self.levels.len(),
                    weights: w.len(),
                });
            }
            let bad = w.iter().any(|x| !x.is_finite() || *x < 0.0)
                || !self.dropped_weight.is_finite()
                || self.dropped_weight < 0.0;
            let total: f64 = w.iter().sum::<f64>() + self.dropped_weight;
            if bad || total <= 0.0 {
                return Err(SpaceError::InvalidWeights(self.name.clone()));
            }
        }
        Ok(())
    }
}

/// The cartesian product of a list of factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSpace {
    factors: Vec<Factor>,
    #[serde(skip)]
    cardinality: u128,
}

/// One point of a [`ConfigSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub assignments: Vec<(String, usize)>,
    pub index: u128,
}

impl Configuration {
    pub fn level_of(&self, factor: &str) -> Option<usize> {
        self.assignments
            .iter()
            .find(|(name, _)| name == factor)
            .map(|(_, level)| *level)
    }

    /// Level indices in factor order.
    pub fn levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|(_, l)| *l)
    }
}

/// One configuration of the evaluated object (e.g. a CPU with turbo on).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub settings: Vec<(String, String)>,
}

impl ObjectConfig {
    pub fn new<S: Into<String>>(id: S) -> Result<Self, SpaceError> {
        let id = id.into();
        if id.is_empty() {
            return Err(SpaceError::EmptyObjectId);
        }
        Ok(Self {
            id,
            settings: Vec::new(),
        })
    }

    pub fn with_setting<K: Into<String>, V: Into<String>>(mut self, key: K, value: V) -> Self {
        self.settings.push((key.into(), value.into()));
        self
    }
}

/// A point of the minimal evaluation system: an object under one EC point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MesPoint {
    pub object: ObjectConfig,
    pub ec: Configuration,
}

/// Pairs an evaluated object with an EC configuration.
pub fn apply_to_object(object: &ObjectConfig, ec: &Configuration) -> MesPoint {
    MesPoint {
        object: object.clone(),
        ec: ec.clone(),
    }
}

/// Lazily enumerates `object × space` as MES points.
pub fn mes_points<'a>(
    object: &'a ObjectConfig,
    space: &'a ConfigSpace,
) -> impl Iterator<Item = MesPoint> + 'a {
    space.iter().map(move |ec| apply_to_object(object, &ec))
}

#[derive(Deserialize)]
struct SpaceFile {
    factors: Vec<FactorFile>,
}

#[derive(Deserialize)]
struct FactorFile {
    name: String,
    #[serde(default)]
    levels: Option<Vec<String>>,
    #[serde(default)]
    range: Option<LevelRange>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    dropped_weight: f64,
}

/// Shorthand for long numeric factors: `{"start":1,"end":100000,"step":1}`
/// expands to the decimal labels `start, start+step, ..., <= end`.
#[derive(Deserialize)]
struct LevelRange {
    start: i64,
    end: i64,
    #[serde(default = "one")]
    step: i64,
}

fn one() -> i64 {
    1
}

impl FactorFile {
    fn into_factor(self) -> Result<Factor, SpaceError> {
        let levels = match (self.levels, self.range) {
            (Some(levels), None) => levels,
            (None, Some(r)) => {
                if r.step <= 0 || r.end < r.start {
                    return Err(SpaceError::Parse(format!(
                        "factor `{}` has an invalid range",
                        self.name
                    )));
                }
                (r.start..=r.end)
                    .step_by(r.step as usize)
                    .map(|v| v.to_string())
                    .collect()
            }
            _ => {
                return Err(SpaceError::Parse(format!(
                    "factor `{}` needs exactly one of `levels` or `range`",
                    self.name
                )))
            }
        };
        Ok(Factor {
            name: self.name,
            levels,
            weights: self.weights,
            dropped_weight: self.dropped_weight,
        })
    }
}

impl ConfigSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self, SpaceError> {
        build_space(factors)
    }

    /// Parses the JSON space-definition document.
    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        let file: SpaceFile =
            serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        let factors = file
            .factors
            .into_iter()
            .map(FactorFile::into_factor)
            .collect::<Result<Vec<_>, _>>()?;
        build_space(factors)
    }

    /// Canonical JSON form (levels always expanded).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("space serializes")
    }

    /// Hex SHA-256 of the canonical definition.
    pub fn fingerprint(&self) -> String {
        fingerprint::of_json(self)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn factor_position(&self, name: &str) -> Result<usize, SpaceError> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| SpaceError::UnknownFactor(name.to_string()))
    }

    pub fn cardinality(&self) -> u128 {
        self.cardinality
    }

    pub fn radices(&self) -> Vec<usize> {
        self.factors.iter().map(Factor::len).collect()
    }

    /// Mixed-radix decode; the last factor varies fastest.
    pub fn config_at(&self, index: u128) -> Result<Configuration, SpaceError> {
        let levels = self.decode(index)?;
        Ok(Configuration {
            assignments: self
                .factors
                .iter()
                .zip(levels)
                .map(|(f, l)| (f.name.clone(), l))
                .collect(),
            index,
        })
    }

    /// Level indices only, without allocating factor names.
    pub fn decode(&self, index: u128) -> Result<Vec<usize>, SpaceError> {
        if index >= self.cardinality {
            return Err(SpaceError::IndexOutOfRange {
                index,
                cardinality: self.cardinality,
            });
        }
        let mut rest = index;
        let mut levels = vec![0usize; self.factors.len()];
        for (slot, factor) in levels.iter_mut().zip(&self.factors).rev() {
            let radix = factor.len() as u128;
            *slot = (rest % radix) as usize;
            rest /= radix;
        }
        Ok(levels)
    }

    /// Mixed-radix encode of level indices given in factor order.
    pub fn encode(&self, levels: &[usize]) -> Result<u128, SpaceError> {
        if levels.len() != self.factors.len() {
            return Err(SpaceError::FactorOrder);
        }
        let mut index: u128 = 0;
        for (factor, &level) in self.factors.iter().zip(levels) {
            if level >= factor.len() {
                return Err(SpaceError::LevelOutOfRange {
                    factor: factor.name.clone(),
                    index: level,
                    levels: factor.len(),
                });
            }
            // Cannot overflow: the result is < cardinality, which fits.
            index = index * factor.len() as u128 + level as u128;
        }
        Ok(index)
    }

    /// Inverse of [`config_at`](Self::config_at). The `index` field of the
    /// configuration is ignored; assignments are authoritative.
    pub fn index_of(&self, config: &Configuration) -> Result<u128, SpaceError> {
        for (name, _) in &config.assignments {
            if self.factor(name).is_none() {
                return Err(SpaceError::UnknownFactor(name.clone()));
            }
        }
        let names_match = config.assignments.len() == self.factors.len()
            && config
                .assignments
                .iter()
                .zip(&self.factors)
                .all(|((n, _), f)| *n == f.name);
        if !names_match {
            return Err(SpaceError::FactorOrder);
        }
        let levels: Vec<usize> = config.levels().collect();
        self.encode(&levels)
    }

    /// Builds a configuration from `(factor, level label)` pairs. Every factor
    /// of the space must be named exactly once, in any order.
    pub fn configuration_from_labels<'a, I>(&self, labels: I) -> Result<Configuration, SpaceError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut levels: Vec<Option<usize>> = vec![None; self.factors.len()];
        for (name, label) in labels {
            let pos = self.factor_position(name)?;
            let factor = &self.factors[pos];
            let level = factor
                .level_index(label)
                .ok_or_else(|| SpaceError::UnknownLevel {
                    factor: name.to_string(),
                    level: label.to_string(),
                })?;
            levels[pos] = Some(level);
        }
        let levels = levels
            .into_iter()
            .zip(&self.factors)
            .map(|(l, f)| l.ok_or_else(|| SpaceError::UnknownFactor(f.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let index = self.encode(&levels)?;
        self.config_at(index)
    }

    /// Level label of `factor` at the point `index`.
    pub fn label_at(&self, index: u128, factor: &str) -> Result<&str, SpaceError> {
        let pos = self.factor_position(factor)?;
        let levels = self.decode(index)?;
        Ok(&self.factors[pos].levels[levels[pos]])
    }

    /// Iterates every configuration in index order. Only sensible for small
    /// spaces; the iterator itself is lazy.
    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.cardinality).map(move |i| self.config_at(i).expect("index in range"))
    }

    /// Restricts every factor to its most frequent levels; see
    /// [`restrict_top_n`].
    pub fn restrict_top_n(&self, coverage: f64) -> Result<ConfigSpace, SpaceError> {
        restrict_top_n(self, coverage)
    }
}

impl<'de> Deserialize<'de> for ConfigSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = SpaceFile::deserialize(d)?;
        let factors = file
            .factors
            .into_iter()
            .map(FactorFile::into_factor)
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        build_space(factors).map_err(serde::de::Error::custom)
    }
}

/// Exact product of level counts.
pub fn cardinality_of(factors: &[Factor]) -> Result<u128, SpaceError> {
    factors.iter().try_fold(1u128, |acc, f| {
        acc.checked_mul(f.len() as u128).ok_or(SpaceError::Overflow)
    })
}

/// Validates factors and builds the space. An empty factor list is the
/// one-point space.
pub fn build_space(factors: Vec<Factor>) -> Result<ConfigSpace, SpaceError> {
    let mut names = BTreeSet::new();
    for f in &factors {
        f.validate()?;
        if !names.insert(f.name.as_str()) {
            return Err(SpaceError::DuplicateFactor(f.name.clone()));
        }
    }
    let cardinality = cardinality_of(&factors)?;
    Ok(ConfigSpace {
        factors,
        cardinality,
    })
}

/// Keeps, per factor, the smallest set of highest-weight levels whose share of
/// the factor's total weight reaches `coverage`. Ties in weight keep the
/// earlier-declared level first. Kept levels stay in declared order.
pub fn restrict_top_n(space: &ConfigSpace, coverage: f64) -> Result<ConfigSpace, SpaceError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(SpaceError::InvalidCoverage(coverage));
    }
    if let Some(f) = space.factors.iter().find(|f| f.weights.is_none()) {
        return Err(SpaceError::MissingWeights(f.name.clone()));
    }
    if coverage == 1.0 {
        return Ok(space.clone());
    }
    let mut factors = Vec::with_capacity(space.factors.len());
    for factor in &space.factors {
        let weights = factor
            .weights
            .as_ref()
            .ok_or_else(|| SpaceError::MissingWeights(factor.name.clone()))?;
        let total: f64 = weights.iter().sum::<f64>() + factor.dropped_weight;
        let mut order: Vec<usize> = (0..weights.len()).collect();
        // Stable sort: equal weights keep declared order.
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let target = coverage * total * (1.0 - COVERAGE_EPS);
        let mut cumulative = 0.0;
        let mut keep = order.len();
        for (i, &level) in order.iter().enumerate() {
            cumulative += weights[level];
            if cumulative >= target {
                keep = i + 1;
                break;
            }
        }
        let mut kept: Vec<usize> = order[..keep].to_vec();
        kept.sort_unstable();
        let kept_weight: f64 = kept.iter().map(|&l| weights[l]).sum();
        let dropped = if keep == order.len() {
            factor.dropped_weight
        } else {
            (total - kept_weight).max(0.0)
        };
        factors.push(Factor {
            name: factor.name.clone(),
            levels: kept.iter().map(|&l| factor.levels[l].clone()).collect(),
            weights: Some(kept.iter().map(|&l| weights[l]).collect()),
            dropped_weight: dropped,
        });
    }
    build_space(factors)
}
