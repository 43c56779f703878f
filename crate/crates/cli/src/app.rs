//! Argument parsing and subcommand implementations.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ecbench::compare::{self, CompareError, Grouping};
use ecbench::design::{self, SamplePlan};
use ecbench::oracle::{self, Experiment, Methodology, SplitSpec};
use ecbench::runner::{self, Executor, ExecutorSpec, Policy, ResultSet, RunOptions, RunRecord};
use ecbench::space::{ConfigSpace, ObjectConfig};
use serde::Serialize;
use thiserror::Error;

use crate::manifest::{host_descriptor, manifest_path, RunManifest, TOOL_VERSION};
use crate::persist::{self, PersistError, ResultWriter};
use crate::report::{self, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EXECUTION: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Execution(String),
    #[error("{0}")]
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Execution(_) => EXIT_EXECUTION,
            CliError::Integrity(_) => EXIT_INTEGRITY,
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Integrity(_) | PersistError::DuplicateKey(..) => {
                CliError::Integrity(e.to_string())
            }
            PersistError::Parse { .. } => CliError::Usage(e.to_string()),
            PersistError::Io { .. } => CliError::Execution(e.to_string()),
        }
    }
}

impl From<CompareError> for CliError {
    fn from(e: CompareError) -> Self {
        if e.is_pairing() {
            CliError::Integrity(e.to_string())
        } else {
            CliError::Execution(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

/// Evaluation-condition benchmarking: spaces, plans, runs, paired
/// comparisons and coverage simulation.
#[derive(Debug, Parser)]
#[command(name = "ecbench", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect a configuration space.
    #[command(subcommand)]
    Space(SpaceCommand),
    /// Generate a sample plan.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Measure one evaluated object over a plan.
    Run(RunArgs),
    /// Paired comparison of two result files.
    Compare(CompareArgs),
    /// Monte Carlo coverage of methodologies on a synthetic model.
    Simulate(SimulateArgs),
    /// Render or derive reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
pub enum SpaceCommand {
    /// Factors, cardinality and fingerprint.
    Info {
        #[arg(long)]
        space: PathBuf,
        /// Restrict every factor to its top levels covering this weight share.
        #[arg(long, value_name = "COVERAGE")]
        top_n: Option<f64>,
        /// Write the (restricted) space here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PlanCommon {
    #[arg(long)]
    pub space: PathBuf,
    /// Replicates per entry.
    #[arg(long, default_value_t = 1)]
    pub reps: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Iterative stratified random sampling.
    Stratified {
        #[command(flatten)]
        common: PlanCommon,
        /// Stratification factor.
        #[arg(long, default_value = "workload")]
        stratum: String,
        #[arg(long)]
        iterations: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2^k r factorial design.
    Factorial2k {
        #[command(flatten)]
        common: PlanCommon,
        /// `NAME` splits the levels in half; `NAME=LOW,../HIGH,..` lists them.
        #[arg(long = "factor", required = true)]
        factors: Vec<String>,
        /// `NAME=LABEL` for every unselected multi-level factor.
        #[arg(long = "default")]
        defaults: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every point of the space.
    Full {
        #[command(flatten)]
        common: PlanCommon,
        /// Refuse spaces larger than this.
        #[arg(long, default_value_t = design::DEFAULT_MATERIALIZE_CAP)]
        cap: u128,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized controlled trial arms.
    Rct {
        #[command(flatten)]
        common: PlanCommon,
        #[arg(long)]
        per_arm: u64,
        #[arg(long)]
        control_out: PathBuf,
        #[arg(long)]
        treatment_out: PathBuf,
    },
    /// The single recommended configuration, three runs, median.
    SpecPoint {
        #[arg(long)]
        space: PathBuf,
        /// `NAME=LABEL` for every factor.
        #[arg(long = "set", required = true)]
        settings: Vec<String>,
        #[arg(long, default_value = "workload")]
        stratum: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub executor: PathBuf,
    /// Evaluated object id.
    #[arg(long)]
    pub object: String,
    /// `KEY=VALUE` object settings recorded in the manifest.
    #[arg(long = "setting")]
    pub settings: Vec<String>,
    /// Results file (JSON Lines); the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregation of replicates; defaults to the plan's, else mean.
    #[arg(long, value_enum)]
    pub agg: Option<AggArg>,
    /// Record failed entries and continue.
    #[arg(long)]
    pub skip_failures: bool,
    /// Continue an interrupted run in `--out`.
    #[arg(long, conflicts_with = "overwrite")]
    pub resume: bool,
    /// Replace an existing results file.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AggArg {
    Mean,
    Median,
}

impl From<AggArg> for Policy {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => Policy::Mean,
            AggArg::Median => Policy::Median,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Minuend results.
    #[arg(long)]
    pub a: PathBuf,
    /// Subtrahend results.
    #[arg(long)]
    pub b: PathBuf,
    /// Confidence level, e.g. 0.95 or 0.99.
    #[arg(long)]
    pub level: f64,
    /// Factor whose levels define the groups.
    #[arg(long)]
    pub group_by: Option<String>,
    /// JSON object relabeling group-factor levels (e.g. workload → sub-suite).
    #[arg(long, requires = "group_by")]
    pub group_map: Option<PathBuf>,
    /// Report file; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Additional CSV rendering.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Synthetic model file.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON list of methodologies.
    #[arg(long)]
    pub methods: PathBuf,
    /// Object whose times are the minuend; defaults to the model's second
    /// object when it has exactly two.
    #[arg(long)]
    pub minuend: Option<String>,
    /// Defaults to the model's first object when it has exactly two.
    #[arg(long)]
    pub subtrahend: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u32,
    /// Confidence level, e.g. 0.95 or 0.99.
    #[arg(long)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Re-render a comparison document.
    Comparison {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a coverage document.
    Coverage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best level of one factor per level of another.
    BestLevel {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "threads")]
        target: String,
        #[arg(long, default_value = "dataset")]
        group_by: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Difference intervals under both orderings and ratio intervals under
    /// both baselines.
    Asymmetry {
        /// JSON `{"level", "a": {"id", "times"}, "b": {...}}`.
        #[arg(long, conflicts_with_all = ["a", "b"])]
        pairs: Option<PathBuf>,
        #[arg(long, requires = "b")]
        a: Option<PathBuf>,
        #[arg(long, requires = "a")]
        b: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median-of-three geometric-mean composite of a recommended-point run.
    Composite {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "workload")]
        stratum: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Space(SpaceCommand::Info { space, top_n, out }) => space_info(&space, top_n, out),
        Command::Plan(cmd) => plan(cmd),
        Command::Run(args) => run(args),
        Command::Compare(args) => compare_cmd(args),
        Command::Simulate(args) => simulate(args),
        Command::Report(cmd) => report_cmd(cmd),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::Execution(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_space(path: &Path) -> Result<ConfigSpace> {
    ConfigSpace::from_json(&read(path)?).map_err(usage(&path.display().to_string()))
}

fn load_plan(path: &Path, space: &ConfigSpace) -> Result<SamplePlan> {
    let plan =
        SamplePlan::from_json(&read(path)?).map_err(usage(&path.display().to_string()))?;
    plan.validate(space).map_err(|e| match e {
        design::DesignError::FingerprintMismatch { .. } => {
            CliError::Integrity(format!("{}: {e}", path.display()))
        }
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })?;
    Ok(plan)
}

fn load_results(path: &Path, space: &ConfigSpace) -> Result<(ResultSet, RunManifest)> {
    let (rs, manifest) = persist::load_results(path)?;
    if manifest.space_fingerprint != space.fingerprint() {
        return Err(CliError::Integrity(format!(
            "{} was measured on a different space",
            path.display()
        )));
    }
    Ok((rs, manifest))
}

fn key_value(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| CliError::Usage(format!("expected NAME=VALUE, got `{s}`")))
}

#[derive(Serialize)]
struct FactorInfo<'a> {
    name: &'a str,
    levels: usize,
    first: &'a str,
    last: &'a str,
}

#[derive(Serialize)]
struct SpaceInfo<'a> {
    cardinality: String,
    fingerprint: String,
    factors: Vec<FactorInfo<'a>>,
}

fn space_info(path: &Path, top_n: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let mut space = load_space(path)?;
    if let Some(c) = top_n {
        space = space.restrict_top_n(c).map_err(usage("top-n"))?;
    }
    let info = SpaceInfo {
        cardinality: space.cardinality().to_string(),
        fingerprint: space.fingerprint(),
        factors: space
            .factors()
            .iter()
            .map(|f| FactorInfo {
                name: &f.name,
                levels: f.len(),
                first: &f.levels[0],
                last: &f.levels[f.len() - 1],
            })
            .collect(),
    };
    print!("{}", report::to_json(&info));
    if let Some(out) = out {
        write_out(Some(&out), &(space.to_json() + "\n"))?;
    }
    Ok(())
}

fn write_plan(plan: &SamplePlan, out: &Path) -> Result<()> {
    write_out(Some(out), &(plan.to_json() + "\n"))?;
    eprintln!(
        "{} entries × {} reps -> {}",
        plan.len(),
        plan.reps,
        out.display()
    );
    Ok(())
}

fn parse_split(spec: &str) -> Result<SplitSpec> {
    let Some((name, sets)) = spec.split_once('=') else {
        return Ok(SplitSpec {
            name: spec.to_string(),
            low: None,
            high: None,
        });
    };
    let (low, high) = sets
        .split_once('/')
        .ok_or_else(|| CliError::Usage(format!("expected NAME=LOW,../HIGH,.., got `{spec}`")))?;
    let list = |s: &str| s.split(',').map(str::to_string).collect::<Vec<_>>();
    Ok(SplitSpec {
        name: name.to_string(),
        low: Some(list(low)),
        high: Some(list(high)),
    })
}

fn plan(cmd: PlanCommand) -> Result<()> {
    let design_err = |e: design::DesignError| CliError::Usage(e.to_string());
    match cmd {
        PlanCommand::Stratified {
            common,
            stratum,
            iterations,
            out,
        } => {
            let space = load_space(&common.space)?;
            let plan = design::stratified_sample(
                &space,
                &stratum,
                iterations,
                common.reps,
                common.seed,
            )
            .map_err(design_err)?;
            write_plan(&plan, &out)
        }
        PlanCommand::Factorial2k {
            common,
            factors,
            defaults,
            out,
        } => {
            let space = load_space(&common.space)?;
            let specs = factors
                .iter()
                .map(|f| parse_split(f))
                .collect::<Result<Vec<_>>>()?;
            let split = oracle::resolve_split(&space, &specs).map_err(usage("factor"))?;
            let defaults = defaults
                .iter()
                .map(|d| key_value(d))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let plan =
                design::factorial_2k(&space, &split, &defaults, common.reps, common.seed)
                    .map_err(design_err)?;
            write_plan(&plan, &out)
        }
        PlanCommand::Full { common, cap, out } => {
            let space = load_space(&common.space)?;
            let plan =
                design::full_factorial_capped(&space, common.reps, cap).map_err(design_err)?;
            write_plan(&plan, &out)
        }
        PlanCommand::Rct {
            common,
            per_arm,
            control_out,
            treatment_out,
        } => {
            let space = load_space(&common.space)?;
            let arms = design::rct_assign(&space, per_arm, common.reps, common.seed)
                .map_err(design_err)?;
            write_plan(&arms.control, &control_out)?;
            write_plan(&arms.treatment, &treatment_out)
        }
        PlanCommand::SpecPoint {
            space,
            settings,
            stratum,
            out,
        } => {
            let space = load_space(&space)?;
            let pairs = settings
                .iter()
                .map(|s| key_value(s))
                .collect::<Result<Vec<_>>>()?;
            let ec = space
                .configuration_from_labels(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .map_err(usage("set"))?;
            let plan = design::spec_point(&space, &ec, &stratum).map_err(design_err)?;
            write_plan(&plan, &out)
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run(args: RunArgs) -> Result<()> {
    let space = load_space(&args.space)?;
    let plan = load_plan(&args.plan, &space)?;
    let spec = ExecutorSpec::from_json(&read(&args.executor)?)
        .map_err(usage(&args.executor.display().to_string()))?;
    let executor = spec
        .resolve(&space)
        .map_err(usage(&args.executor.display().to_string()))?;
    let mut object = ObjectConfig::new(args.object.clone()).map_err(usage("object"))?;
    for s in &args.settings {
        let (k, v) = key_value(s)?;
        object = object.with_setting(k, v);
    }
    let policy = args
        .agg
        .map(Policy::from)
        .or(plan.aggregation)
        .unwrap_or_default();
    let wall = matches!(executor, Executor::Command(_));
    let noise_seed = match &executor {
        Executor::Synthetic(m) => Some(m.noise_seed()),
        Executor::Command(_) => None,
    };
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        object: object.clone(),
        space_fingerprint: space.fingerprint(),
        plan_fingerprint: plan.fingerprint(),
        executor_hash: spec.fingerprint(),
        plan_seed: plan.seed,
        noise_seed,
        reps: plan.reps,
        policy,
        host: host_descriptor(),
        started_unix: wall.then(unix_now),
        finished_unix: None,
        completed: false,
        records: 0,
        results_digest: None,
    };
    let exists = args.out.exists() || manifest_path(&args.out).exists();
    let (mut writer, done) = if args.resume && exists {
        ResultWriter::resume(&args.out, manifest)?
    } else {
        if exists && !args.overwrite && !args.resume {
            return Err(CliError::Usage(format!(
                "{} exists; pass --resume or --overwrite",
                args.out.display()
            )));
        }
        (
            ResultWriter::create(&args.out, manifest)?,
            ResultSet::new(object.id.clone(), plan.fingerprint()),
        )
    };
    let done_keys = persist::done_keys(&done);
    let start_offset = done
        .measurements
        .iter()
        .map(|m| m.ended_at)
        .chain(done.failures.iter().map(|f| f.ended_at))
        .fold(0.0, f64::max);
    let options = RunOptions {
        policy: Some(policy),
        skip_failures: args.skip_failures,
        start_offset,
    };
    let mut write_error: Option<PersistError> = None;
    let outcome = runner::execute_plan_resumable(
        &executor,
        &object,
        &space,
        &plan,
        &options,
        &done_keys,
        &mut |record| {
            // Under the abort policy a failed entry is left unrecorded so that
            // a resumed run retries it.
            if matches!(record, RunRecord::Failed(_)) && !args.skip_failures {
                return Ok(());
            }
            writer.append(record).map_err(|e| {
                let msg = e.to_string();
                write_error = Some(e);
                runner::RunError::Sink(msg)
            })
        },
    );
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let fresh = outcome.map_err(|e| CliError::Execution(e.to_string()))?;
    let sealed = writer.finish(wall.then(unix_now))?;
    eprintln!(
        "{} records ({} new, {} failed) -> {}",
        sealed.records,
        fresh.len() + fresh.failures.len(),
        done.failures.len() + fresh.failures.len(),
        args.out.display()
    );
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<()> {
    let space = load_space(&args.space)?;
    let (a, ma) = load_results(&args.a, &space)?;
    let (b, mb) = load_results(&args.b, &space)?;
    if ma.plan_fingerprint != mb.plan_fingerprint {
        return Err(CliError::Integrity(
            "the two result files were measured under different plans".into(),
        ));
    }
    let grouping = match &args.group_by {
        None => None,
        Some(factor) => {
            let g = Grouping::by_factor(&space, factor).map_err(usage("group-by"))?;
            Some(match &args.group_map {
                None => g,
                Some(path) => {
                    let map: BTreeMap<String, String> = serde_json::from_str(&read(path)?)
                        .map_err(usage(&path.display().to_string()))?;
                    g.with_map(map)
                }
            })
        }
    };
    let report = compare::compare_objects(&a, &b, args.level, grouping.as_ref())?;
    let doc = report::ComparisonDocument {
        tool_version: TOOL_VERSION.to_string(),
        space_fingerprint: ma.space_fingerprint.clone(),
        plan_fingerprint: ma.plan_fingerprint.clone(),
        minuend_results_digest: ma.results_digest.clone().unwrap_or_default(),
        subtrahend_results_digest: mb.results_digest.clone().unwrap_or_default(),
        report,
    };
    let render = |format: Format| match format {
        Format::Csv => report::comparison_csv(&doc.report),
        Format::Json => report::to_json(&doc),
    };
    match &args.out {
        Some(p) => write_out(Some(p), &render(Format::for_path(p)))?,
        None if args.csv.is_none() => write_out(None, &render(Format::Csv))?,
        None => {}
    }
    if let Some(p) = &args.csv {
        write_out(Some(p), &render(Format::Csv))?;
    }
    if let Some(v) = doc.report.overall_verdict() {
        eprintln!("overall: {}", v.as_str());
    }
    Ok(())
}

fn synthetic_model(path: &Path, space: &ConfigSpace) -> Result<runner::synthetic::BoundModel> {
    let spec = ExecutorSpec::from_json(&read(path)?)
        .map_err(usage(&path.display().to_string()))?;
    match spec
        .resolve(space)
        .map_err(usage(&path.display().to_string()))?
    {
        Executor::Synthetic(m) => Ok(m),
        Executor::Command(_) => Err(CliError::Usage(format!(
            "{} is not a synthetic model",
            path.display()
        ))),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let space = load_space(&args.space)?;
    let model = synthetic_model(&args.model, &space)?;
    let methods: Vec<Methodology> = serde_json::from_str(&read(&args.methods)?)
        .map_err(usage(&args.methods.display().to_string()))?;
    let objects: Vec<&str> = model.object_ids().collect();
    let pick = |given: &Option<String>, fallback: usize| -> Result<String> {
        match given {
            Some(id) => Ok(id.clone()),
            None if objects.len() == 2 => Ok(objects[fallback].to_string()),
            None => Err(CliError::Usage(
                "the model does not have exactly two objects; pass --minuend and --subtrahend"
                    .into(),
            )),
        }
    };
    let minuend = pick(&args.minuend, 1)?;
    let subtrahend = pick(&args.subtrahend, 0)?;
    let exp = Experiment {
        model: &model,
        space: &space,
        minuend: &minuend,
        subtrahend: &subtrahend,
        iterations: args.iterations,
        level: args.level,
        master_seed: args.seed,
    };
    let rows = oracle::methodology_comparison(&exp, &methods)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    let doc = report::CoverageDocument {
        tool_version: TOOL_VERSION.to_string(),
        space_fingerprint: space.fingerprint(),
        model_fingerprint: model.model_fingerprint().to_string(),
        minuend,
        subtrahend,
        iterations: args.iterations,
        level: args.level,
        master_seed: args.seed,
        rows,
    };
    let format = args.out.as_deref().map_or(Format::Csv, Format::for_path);
    let text = match format {
        Format::Csv => report::coverage_csv(&doc.rows),
        Format::Json => report::to_json(&doc),
    };
    write_out(args.out.as_deref(), &text)?;
    if let Some(r) = doc.rows.first() {
        eprintln!("population mean difference: {}", r.mu);
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct PairObject {
    id: String,
    times: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct PairsFile {
    #[serde(default)]
    level: Option<f64>,
    a: PairObject,
    b: PairObject,
}

#[derive(Serialize)]
struct CompositeDoc {
    tool_version: String,
    results_digest: String,
    object: String,
    composite: f64,
    per_stratum: BTreeMap<String, f64>,
}

fn report_cmd(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Comparison { input, format, out } => {
            let doc: report::ComparisonDocument = serde_json::from_str(&read(&input)?)
                .map_err(usage(&input.display().to_string()))?;
            let text = match format {
                Format::Csv => report::comparison_csv(&doc.report),
                Format::Json => report::to_json(&doc),
            };
            write_out(out.as_deref(), &text)
        }
        ReportCommand::Coverage { input, format, out } => {
            let doc: report::CoverageDocument = serde_json::from_str(&read(&input)?)
                .map_err(usage(&input.display().to_string()))?;
            let text = match format {
                Format::Csv => report::coverage_csv(&doc.rows),
                Format::Json => report::to_json(&doc),
            };
            write_out(out.as_deref(), &text)
        }
        ReportCommand::BestLevel {
            space,
            results,
            target,
            group_by,
            out,
        } => {
            let space = load_space(&space)?;
            let (rs, manifest) = load_results(&results, &space)?;
            let rows = oracle::best_level_report(&rs, &space, &target, &group_by)
                .map_err(|e| CliError::Execution(e.to_string()))?;
            let doc = report::BestLevelDocument {
                tool_version: TOOL_VERSION.to_string(),
                space_fingerprint: manifest.space_fingerprint,
                results_digest: manifest.results_digest.unwrap_or_default(),
                object: manifest.object.id,
                target_factor: target,
                group_factor: group_by,
                rows,
            };
            let text = match out.as_deref().map(Format::for_path) {
                Some(Format::Json) => report::to_json(&doc),
                _ => report::best_level_csv(&doc),
            };
            write_out(out.as_deref(), &text)
        }
        ReportCommand::Asymmetry {
            pairs,
            a,
            b,
            level,
            out,
        } => {
            let (ra, rb, file_level) = match (pairs, a, b) {
                (Some(path), _, _) => {
                    let p: PairsFile = serde_json::from_str(&read(&path)?)
                        .map_err(usage(&path.display().to_string()))?;
                    (
                        ResultSet::from_aggregates(p.a.id, &p.a.times),
                        ResultSet::from_aggregates(p.b.id, &p.b.times),
                        p.level,
                    )
                }
                (None, Some(a), Some(b)) => {
                    let (ra, ma) = persist::load_results(&a)?;
                    let (rb, mb) = persist::load_results(&b)?;
                    if ma.space_fingerprint != mb.space_fingerprint
                        || ma.plan_fingerprint != mb.plan_fingerprint
                    {
                        return Err(CliError::Integrity(
                            "the two result files come from different spaces or plans".into(),
                        ));
                    }
                    (ra, rb, None)
                }
                _ => {
                    return Err(CliError::Usage(
                        "pass --pairs or both --a and --b".into(),
                    ))
                }
            };
            let level = level.or(file_level).unwrap_or(0.95);
            let r = compare::asymmetry_report(&ra, &rb, level)?;
            let text = match out.as_deref().map(Format::for_path) {
                Some(Format::Csv) => report::asymmetry_csv(&r),
                _ => report::to_json(&report::AsymmetryDocument {
                    tool_version: TOOL_VERSION.to_string(),
                    report: r,
                }),
            };
            write_out(out.as_deref(), &text)
        }
        ReportCommand::Composite {
            space,
            results,
            stratum,
            out,
        } => {
            let space = load_space(&space)?;
            let (rs, manifest) = load_results(&results, &space)?;
            let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for m in &rs.measurements {
                let label = space
                    .label_at(m.ec_index, &stratum)
                    .map_err(usage("stratum"))?;
                per.entry(label.to_string())
                    .or_default()
                    .extend(&m.replicates);
            }
            let entries: Vec<(String, Vec<f64>)> = per.into_iter().collect();
            let composite = compare::spec_composite(&entries)
                .map_err(|e| CliError::Execution(e.to_string()))?;
            let doc = CompositeDoc {
                tool_version: TOOL_VERSION.to_string(),
                results_digest: manifest.results_digest.unwrap_or_default(),
                object: manifest.object.id,
                composite,
                per_stratum: entries
                    .iter()
                    .map(|(s, v)| (s.clone(), runner::median(v)))
                    .collect(),
            };
            write_out(out.as_deref(), &report::to_json(&doc))
        }
    }
}
