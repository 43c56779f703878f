//! Plan execution: replicated measurement of one evaluated object under the
//! configurations of a plan.
//!
//! Measurements run strictly one after another. Command executors are timed
//! with a monotonic wall clock; synthetic executors advance a virtual clock by
//! the durations they produce, which keeps synthetic result files
//! reproducible byte for byte.

pub mod command;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignError, SamplePlan};
use crate::space::{ConfigSpace, Configuration, ObjectConfig, SpaceError};

pub use command::{CommandExecutor, CommandSpec};
pub use synthetic::{synth_time, BoundModel, ModelError, SyntheticModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("failed to launch command: {0}")]
    Launch(String),
    #[error("command exited with status {code:?}: {stderr}")]
    ExitStatus { code: Option<i32>, stderr: String },
    #[error("command timed out after {0} s")]
    Timeout(f64),
    #[error("measured non-positive duration {0}")]
    NonPositiveDuration(f64),
    #[error("bad command template: {0}")]
    Template(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("reps must be positive")]
    ZeroReps,
    #[error("entry {position} (index {ec_index}) failed: {cause}")]
    Entry {
        position: usize,
        ec_index: u128,
        cause: Box<RunError>,
    },
    #[error("result sink failed: {0}")]
    Sink(String),
}

/// How replicates are reduced to one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Mean,
    Median,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Mean => "mean",
            Policy::Median => "median",
        }
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Policy::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Policy::Median => median(values),
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Policy::Mean),
            "median" => Ok(Policy::Median),
            other => Err(format!("unknown aggregation policy `{other}`")),
        }
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Key of a measurement within a result set: EC index and the ordinal of
/// that index's occurrence in the plan.
pub type MeasurementKey = (u128, u32);

/// Replicated outcome of one plan entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub ec_index: u128,
    #[serde(default)]
    pub occurrence: u32,
    pub object_id: String,
    pub replicates: Vec<f64>,
    pub aggregate: f64,
    pub policy: Policy,
    /// Seconds since the start of the run.
    pub started_at: f64,
    pub ended_at: f64,
}

impl Measurement {
    pub fn key(&self) -> MeasurementKey {
        (self.ec_index, self.occurrence)
    }
}

/// A plan entry that could not be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedEntry {
    pub ec_index: u128,
    pub occurrence: u32,
    pub object_id: String,
    pub error: String,
    pub started_at: f64,
    pub ended_at: f64,
}

/// All measurements of one object for one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub object_id: String,
    pub plan_fingerprint: String,
    pub measurements: Vec<Measurement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailedEntry>,
}

impl ResultSet {
    pub fn new<S: Into<String>, P: Into<String>>(object_id: S, plan_fingerprint: P) -> Self {
        Self {
            object_id: object_id.into(),
            plan_fingerprint: plan_fingerprint.into(),
            measurements: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Measurements by key, in key order. `None` if a key repeats.
    pub fn by_key(&self) -> Option<BTreeMap<MeasurementKey, &Measurement>> {
        let mut map = BTreeMap::new();
        for m in &self.measurements {
            if map.insert(m.key(), m).is_some() {
                return None;
            }
        }
        Some(map)
    }

    pub fn keys(&self) -> BTreeSet<MeasurementKey> {
        self.measurements.iter().map(Measurement::key).collect()
    }

    /// Builds a result set directly from aggregates (one replicate each),
    /// keyed `(i, 0)` for the `i`-th value. Useful for demos and tests.
    pub fn from_aggregates<S: Into<String>>(object_id: S, values: &[f64]) -> Self {
        let object_id = object_id.into();
        let mut rs = ResultSet::new(object_id.clone(), "");
        let mut clock = 0.0;
        for (i, &v) in values.iter().enumerate() {
            rs.measurements.push(Measurement {
                ec_index: i as u128,
                occurrence: 0,
                object_id: object_id.clone(),
                replicates: vec![v],
                aggregate: v,
                policy: Policy::Mean,
                started_at: clock,
                ended_at: clock + v,
            });
            clock += v;
        }
        rs
    }
}

/// What executes a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExecutorSpec {
    Command(CommandSpec),
    Synthetic(SyntheticModel),
}

impl ExecutorSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn fingerprint(&self) -> String {
        crate::fingerprint::of_json(self)
    }

    pub fn resolve(&self, space: &ConfigSpace) -> Result<Executor, RunError> {
        Ok(match self {
            ExecutorSpec::Command(spec) => Executor::Command(CommandExecutor::new(spec, space)?),
            ExecutorSpec::Synthetic(model) => Executor::Synthetic(model.bind(space)?),
        })
    }
}

/// A resolved executor.
#[derive(Debug, Clone)]
pub enum Executor {
    Command(CommandExecutor),
    Synthetic(BoundModel),
}

enum Clock {
    Wall(Instant, f64),
    Virtual(f64),
}

impl Clock {
    fn for_executor(executor: &Executor, offset: f64) -> Self {
        match executor {
            Executor::Command(_) => Clock::Wall(Instant::now(), offset),
            Executor::Synthetic(_) => Clock::Virtual(offset),
        }
    }

    fn now(&self) -> f64 {
        match self {
            Clock::Wall(start, offset) => offset + start.elapsed().as_secs_f64(),
            Clock::Virtual(t) => *t,
        }
    }

    fn advance(&mut self, seconds: f64) {
        if let Clock::Virtual(t) = self {
            *t += seconds;
        }
    }
}

/// Options for [`execute_plan`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Aggregation policy; `None` uses the plan's prescribed policy, or mean.
    pub policy: Option<Policy>,
    /// Record failed entries and continue instead of aborting.
    pub skip_failures: bool,
    /// Clock reading at the first entry, e.g. the last end time of a resumed
    /// run.
    pub start_offset: f64,
}

/// One record handed to the incremental sink.
#[derive(Debug, Clone, PartialEq)]
pub enum RunRecord {
    Measured(Measurement),
    Failed(FailedEntry),
}

fn measure_with_clock(
    executor: &Executor,
    space: &ConfigSpace,
    object: &ObjectConfig,
    ec: &Configuration,
    reps: u32,
    policy: Policy,
    occurrence: u32,
    clock: &mut Clock,
) -> Result<Measurement, RunError> {
    if reps == 0 {
        return Err(RunError::ZeroReps);
    }
    let started_at = clock.now();
    let mut replicates = Vec::with_capacity(reps as usize);
    match executor {
        Executor::Command(ex) => {
            let command = ex.render(space, ec)?;
            for _ in 0..ex.warmup() {
                ex.run_once(&command)?;
            }
            for _ in 0..reps {
                replicates.push(ex.run_once(&command)?);
            }
        }
        Executor::Synthetic(model) => {
            for rep in 0..reps {
                let ordinal = occurrence as u64 * reps as u64 + rep as u64;
                let t = synth_time(model, &object.id, ec, ordinal)?;
                if !(t > 0.0) {
                    return Err(RunError::NonPositiveDuration(t));
                }
                clock.advance(t);
                replicates.push(t);
            }
        }
    }
    Ok(Measurement {
        ec_index: ec.index,
        occurrence,
        object_id: object.id.clone(),
        aggregate: policy.apply(&replicates),
        replicates,
        policy,
        started_at,
        ended_at: clock.now(),
    })
}

/// Measures `object` under `ec` `reps` times in sequence and aggregates.
pub fn measure(
    executor: &Executor,
    space: &ConfigSpace,
    object: &ObjectConfig,
    ec: &Configuration,
    reps: u32,
    policy: Policy,
) -> Result<Measurement, RunError> {
    let mut clock = Clock::for_executor(executor, 0.0);
    measure_with_clock(executor, space, object, ec, reps, policy, 0, &mut clock)
}

/// Executes every plan entry in order. Equivalent to
/// [`execute_plan_resumable`] with nothing done yet and a no-op sink.
pub fn execute_plan(
    executor: &Executor,
    object: &ObjectConfig,
    space: &ConfigSpace,
    plan: &SamplePlan,
    options: &RunOptions,
) -> Result<ResultSet, RunError> {
    execute_plan_resumable(
        executor,
        object,
        space,
        plan,
        options,
        &BTreeSet::new(),
        &mut |_| Ok(()),
    )
}

/// Executes the plan entries whose keys are not in `done`, handing each
/// record to `sink` as soon as it exists. Returns the newly produced records
/// as a result set. Under the abort policy the first failure is reported to
/// the sink and then returned as an error.
pub fn execute_plan_resumable(
    executor: &Executor,
    object: &ObjectConfig,
    space: &ConfigSpace,
    plan: &SamplePlan,
    options: &RunOptions,
    done: &BTreeSet<MeasurementKey>,
    sink: &mut dyn FnMut(&RunRecord) -> Result<(), RunError>,
) -> Result<ResultSet, RunError> {
    plan.validate(space)?;
    let policy = options.policy.or(plan.aggregation).unwrap_or_default();
    let mut result = ResultSet::new(object.id.clone(), plan.fingerprint());
    let mut clock = Clock::for_executor(executor, options.start_offset);
    let mut occurrences: BTreeMap<u128, u32> = BTreeMap::new();
    for (position, entry) in plan.entries.iter().enumerate() {
        let occ = occurrences.entry(entry.index).or_insert(0);
        let occurrence = *occ;
        *occ += 1;
        if done.contains(&(entry.index, occurrence)) {
            continue;
        }
        let ec = space.config_at(entry.index)?;
        let started_at = clock.now();
        match measure_with_clock(
            executor, space, object, &ec, plan.reps, policy, occurrence, &mut clock,
        ) {
            Ok(m) => {
                let record = RunRecord::Measured(m);
                sink(&record)?;
                if let RunRecord::Measured(m) = record {
                    result.measurements.push(m);
                }
            }
            Err(cause) => {
                let failed = FailedEntry {
                    ec_index: entry.index,
                    occurrence,
                    object_id: object.id.clone(),
                    error: cause.to_string(),
                    started_at,
                    ended_at: clock.now(),
                };
                sink(&RunRecord::Failed(failed.clone()))?;
                if !options.skip_failures {
                    return Err(RunError::Entry {
                        position,
                        ec_index: entry.index,
                        cause: Box::new(cause),
                    });
                }
                result.failures.push(failed);
            }
        }
    }
    Ok(result)
}
