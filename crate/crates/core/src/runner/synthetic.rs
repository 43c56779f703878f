//! Synthetic performance model: an additive table model with optional
//! pairwise interactions, per-object terms and seeded Gaussian noise.
//!
//! The predicted time of object `o` at point `ec` is
//!
//! ```text
//! base[stratum(ec)] + sum_f effect_f[level_f(ec)] + sum_{f,g} inter_fg[level_f, level_g]
//!   + offset_o + sum_f effect_o,f[level_f(ec)] + sum_{f,g} inter_o,fg[level_f, level_g]
//! ```
//!
//! and a replicate adds `sigma * z`, with `z` standard normal truncated at
//! ±6 and drawn from a stream keyed by `(noise seed, ec index, object id,
//! replicate ordinal)`. Durations are floored at [`MIN_DURATION`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint;
use crate::rng;
use crate::space::{ConfigSpace, Configuration, SpaceError};

/// Truncation point of the noise distribution, in standard deviations.
pub const NOISE_TRUNCATION: f64 = 6.0;

/// Floor applied to noisy durations so that every replicate is positive.
pub const MIN_DURATION: f64 = 1e-9;

/// Models with more points than this are checked for positivity on a sample.
const POSITIVITY_ENUMERATION_CAP: u128 = 1_000_000;
const POSITIVITY_SAMPLES: u32 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("model stratum factor `{0}` is not in the space")]
    UnknownStratum(String),
    #[error("factor `{factor}` level `{level}` is not covered by the model tables")]
    LevelNotCovered { factor: String, level: String },
    #[error("model references level `{level}` that factor `{factor}` does not have")]
    UnknownLevel { factor: String, level: String },
    #[error("interaction must name two distinct factors, got {0:?}")]
    BadInteraction(Vec<String>),
    #[error("object `{0}` is not in the model")]
    UnknownObject(String),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
    #[error("non-finite model value for factor `{0}`")]
    NonFinite(String),
    #[error("model predicts non-positive time {value} for object `{object}` at index {index}")]
    NonPositive {
        object: String,
        index: u128,
        value: f64,
    },
    #[error("invalid model file: {0}")]
    Parse(String),
}

type EffectTable = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub factors: [String; 2],
    /// `values[level of first][level of second]`; missing pairs are zero.
    pub values: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectTerms {
    #[serde(default)]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub effects: EffectTable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<Interaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    pub seed: u64,
}

/// The serialized model, keyed by factor names and level labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub stratum_factor: String,
    /// Base seconds per stratum level.
    pub base: BTreeMap<String, f64>,
    /// Additive seconds per level; a listed factor must cover every level.
    #[serde(default)]
    pub effects: EffectTable,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    /// Per-object terms keyed by object id.
    pub objects: BTreeMap<String, ObjectTerms>,
    #[serde(default)]
    pub noise: Noise,
}

impl SyntheticModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint::of_json(self)
    }

    /// Resolves names and labels against `space` and checks that every point
    /// has a positive predicted time for every object.
    pub fn bind(&self, space: &ConfigSpace) -> Result<BoundModel, ModelError> {
        BoundModel::new(self, space)
    }
}

#[derive(Debug, Clone)]
struct DenseEffect {
    pos: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SparseInteraction {
    first: usize,
    second: usize,
    values: HashMap<(usize, usize), f64>,
}

#[derive(Debug, Clone, Default)]
struct BoundTerms {
    offset: f64,
    effects: Vec<DenseEffect>,
    interactions: Vec<SparseInteraction>,
}

impl BoundTerms {
    fn eval(&self, levels: &[usize]) -> f64 {
        let mut t = self.offset;
        for e in &self.effects {
            t += e.values[levels[e.pos]];
        }
        for i in &self.interactions {
            if let Some(v) = i.values.get(&(levels[i.first], levels[i.second])) {
                t += v;
            }
        }
        t
    }
}

/// A model resolved against one space; cheap to evaluate.
#[derive(Debug, Clone)]
pub struct BoundModel {
    stratum_pos: usize,
    base: Vec<f64>,
    shared: BoundTerms,
    objects: BTreeMap<String, (u64, BoundTerms)>,
    sigma: f64,
    seed: u64,
    model_fingerprint: String,
    space_fingerprint: String,
}

fn bind_effects(space: &ConfigSpace, table: &EffectTable) -> Result<Vec<DenseEffect>, ModelError> {
    let mut out = Vec::new();
    for (name, per_level) in table {
        let pos = space.factor_position(name)?;
        let factor = &space.factors()[pos];
        for label in per_level.keys() {
            if factor.level_index(label).is_none() {
                return Err(ModelError::UnknownLevel {
                    factor: name.clone(),
                    level: label.clone(),
                });
            }
        }
        let values = factor
            .levels
            .iter()
            .map(|label| match per_level.get(label) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(_) => Err(ModelError::NonFinite(name.clone())),
                None => Err(ModelError::LevelNotCovered {
                    factor: name.clone(),
                    level: label.clone(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(DenseEffect { pos, values });
    }
    Ok(out)
}

fn bind_interactions(
    space: &ConfigSpace,
    list: &[Interaction],
) -> Result<Vec<SparseInteraction>, ModelError> {
    let mut out = Vec::new();
    for inter in list {
        let [a, b] = &inter.factors;
        if a == b {
            return Err(ModelError::BadInteraction(inter.factors.to_vec()));
        }
        let first = space.factor_position(a)?;
        let second = space.factor_position(b)?;
        let fa = &space.factors()[first];
        let fb = &space.factors()[second];
        let mut values = HashMap::new();
        for (la, row) in &inter.values {
            let ia = fa.level_index(la).ok_or_else(|| ModelError::UnknownLevel {
                factor: a.clone(),
                level: la.clone(),
            })?;
            for (lb, v) in row {
                let ib = fb.level_index(lb).ok_or_else(|| ModelError::UnknownLevel {
                    factor: b.clone(),
                    level: lb.clone(),
                })?;
                if !v.is_finite() {
                    return Err(ModelError::NonFinite(format!("{a}×{b}")));
                }
                values.insert((ia, ib), *v);
            }
        }
        out.push(SparseInteraction {
            first,
            second,
            values,
        });
    }
    Ok(out)
}

fn bind_terms(space: &ConfigSpace, terms: &ObjectTerms) -> Result<BoundTerms, ModelError> {
    if !terms.offset.is_finite() {
        return Err(ModelError::NonFinite("offset".into()));
    }
    Ok(BoundTerms {
        offset: terms.offset,
        effects: bind_effects(space, &terms.effects)?,
        interactions: bind_interactions(space, &terms.interactions)?,
    })
}

impl BoundModel {
    fn new(model: &SyntheticModel, space: &ConfigSpace) -> Result<Self, ModelError> {
        let stratum_pos = space
            .factor_position(&model.stratum_factor)
            .map_err(|_| ModelError::UnknownStratum(model.stratum_factor.clone()))?;
        let stratum = &space.factors()[stratum_pos];
        for label in model.base.keys() {
            if stratum.level_index(label).is_none() {
                return Err(ModelError::UnknownLevel {
                    factor: stratum.name.clone(),
                    level: label.clone(),
                });
            }
        }
        let base = stratum
            .levels
            .iter()
            .map(|label| {
                model
                    .base
                    .get(label)
                    .copied()
                    .ok_or_else(|| ModelError::LevelNotCovered {
                        factor: stratum.name.clone(),
                        level: label.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !(model.noise.sigma.is_finite() && model.noise.sigma >= 0.0) {
            return Err(ModelError::BadSigma(model.noise.sigma));
        }
        let shared = BoundTerms {
            offset: 0.0,
            effects: bind_effects(space, &model.effects)?,
            interactions: bind_interactions(space, &model.interactions)?,
        };
        let objects = model
            .objects
            .iter()
            .map(|(id, terms)| Ok((id.clone(), (rng::hash_str(id), bind_terms(space, terms)?))))
            .collect::<Result<BTreeMap<_, _>, ModelError>>()?;
        let bound = Self {
            stratum_pos,
            base,
            shared,
            objects,
            sigma: model.noise.sigma,
            seed: model.noise.seed,
            model_fingerprint: model.fingerprint(),
            space_fingerprint: space.fingerprint(),
        };
        bound.check_positive(space)?;
        Ok(bound)
    }

    fn check_positive(&self, space: &ConfigSpace) -> Result<(), ModelError> {
        let check = |index: u128| -> Result<(), ModelError> {
            let levels = space.decode(index)?;
            for id in self.objects.keys() {
                let value = self.true_value_levels(id, &levels)?;
                if !(value > 0.0) {
                    return Err(ModelError::NonPositive {
                        object: id.clone(),
                        index,
                        value,
                    });
                }
            }
            Ok(())
        };
        if space.cardinality() <= POSITIVITY_ENUMERATION_CAP {
            (0..space.cardinality()).try_for_each(check)
        } else {
            let mut r = rng::plan_rng(rng::combine(&[self.seed, 0x706f_7369]));
            (0..POSITIVITY_SAMPLES)
                .try_for_each(|_| check(rng::uniform_below_u128(&mut r, space.cardinality())))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn space_fingerprint(&self) -> &str {
        &self.space_fingerprint
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    /// Same model with a different noise seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Same model with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    /// Noiseless predicted time from level indices in factor order.
    pub fn true_value_levels(&self, object: &str, levels: &[usize]) -> Result<f64, ModelError> {
        let (_, terms) = self
            .objects
            .get(object)
            .ok_or_else(|| ModelError::UnknownObject(object.to_string()))?;
        Ok(self.base[levels[self.stratum_pos]] + self.shared.eval(levels) + terms.eval(levels))
    }

    pub fn true_value(&self, object: &str, ec: &Configuration) -> Result<f64, ModelError> {
        let levels: Vec<usize> = ec.levels().collect();
        if levels.len() <= self.stratum_pos {
            return Err(SpaceError::FactorOrder.into());
        }
        self.true_value_levels(object, &levels)
    }

    /// Standardized noise draw for one replicate.
    pub fn noise_z(&self, object: &str, ec_index: u128, ordinal: u64) -> Result<f64, ModelError> {
        let (hash, _) = self
            .objects
            .get(object)
            .ok_or_else(|| ModelError::UnknownObject(object.to_string()))?;
        Ok(noise_z(self.seed, ec_index, *hash, ordinal))
    }

    /// One replicate at level indices `levels` of point `ec_index`.
    pub fn sample_levels(
        &self,
        object: &str,
        ec_index: u128,
        levels: &[usize],
        ordinal: u64,
    ) -> Result<f64, ModelError> {
        let value = self.true_value_levels(object, levels)?;
        if self.sigma == 0.0 {
            return Ok(value);
        }
        let z = self.noise_z(object, ec_index, ordinal)?;
        Ok((value + self.sigma * z).max(MIN_DURATION))
    }
}

fn noise_z(seed: u64, ec_index: u128, object_hash: u64, ordinal: u64) -> f64 {
    let key = rng::combine(&[
        seed,
        ec_index as u64,
        (ec_index >> 64) as u64,
        object_hash,
        ordinal,
    ]);
    let mut r = rng::plan_rng(key);
    rng::truncated_normal(&mut r, NOISE_TRUNCATION)
}

/// Synthetic duration of replicate `replicate_ordinal` of `object` at `ec`.
pub fn synth_time(
    model: &BoundModel,
    object: &str,
    ec: &Configuration,
    replicate_ordinal: u64,
) -> Result<f64, ModelError> {
    let levels: Vec<usize> = ec.levels().collect();
    if levels.len() <= model.stratum_pos {
        return Err(SpaceError::FactorOrder.into());
    }
    model.sample_levels(object, ec.index, &levels, replicate_ordinal)
}
