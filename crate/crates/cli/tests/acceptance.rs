//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ecbench::compare::{asymmetry_report, compare_objects, verdict_of, VerdictKind};
use ecbench::design::stratified_sample;
use ecbench::oracle::{
    coverage_experiment, methodology_comparison, population_mean_bound, Experiment, Methodology,
    Target,
};
use ecbench::rng::{plan_rng, uniform_below, uniform_below_u128, PlanRng};
use ecbench::runner::{BoundModel, Executor, ExecutorSpec, Policy, ResultSet};
use ecbench::space::{ConfigSpace, Factor, ObjectConfig};
use ecbench::stats::{ratio_diagnostics, t_quantile, Baseline, Interval};
use ecbench_cli::app::{main_with_args, EXIT_INTEGRITY, EXIT_OK};
use ecbench_cli::manifest::RunManifest;
use ecbench_cli::persist::{load_results, persist_results};
use serde_json::Value;
use tempfile::TempDir;

type Outcome = Result<String, String>;

/// Name, check and runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(name)
}

fn demo_text(name: &str) -> String {
    fs::read_to_string(demo(name)).unwrap()
}

fn load_space(name: &str) -> ConfigSpace {
    ConfigSpace::from_json(&demo_text(name)).unwrap()
}

fn load_model(name: &str, space: &ConfigSpace) -> BoundModel {
    match ExecutorSpec::from_json(&demo_text(name)).unwrap().resolve(space).unwrap() {
        Executor::Synthetic(m) => m,
        Executor::Command(_) => panic!("{name} is not synthetic"),
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(outcome: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    let timing = format!("{:.2} s", elapsed.as_secs_f64());
    match (outcome, budget) {
        (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; {timing} exceeds {} s", b.as_secs())),
        (Ok(d), _) => Ok(format!("{d}; {timing}")),
        (Err(d), _) => Err(format!("{d}; {timing}")),
    }
}

fn unit(rng: &mut PlanRng) -> f64 {
    uniform_below(rng, 1 << 53) as f64 / (1u64 << 53) as f64
}

fn rel_close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(1e-300)
}

// 1. Space arithmetic.
fn c1() -> Outcome {
    let demo_space = load_space("space_720.json");
    let spec_space = load_space("space_spec.json");
    let strata = spec_space.factor("workload").unwrap().len();
    let plan = stratified_sample(&spec_space, "workload", 32, 1, 1).map_err(|e| e.to_string())?;
    check(
        demo_space.cardinality() == 720 && strata == 43 && plan.len() == 1376,
        format!(
            "cardinality {}, {strata} strata x 32 iterations = {} entries (want 720, 1376)",
            demo_space.cardinality(),
            plan.len()
        ),
    )
}

// 2. Bijection between indices and configurations.
fn c2() -> Outcome {
    let mut shapes: Vec<Vec<usize>> = vec![vec![1, 10, 3, 24], vec![10, 10, 10, 10], vec![7], vec![1, 1, 1]];
    let mut rng = plan_rng(2);
    while shapes.len() < 40 {
        let k = 1 + uniform_below(&mut rng, 6) as usize;
        let shape: Vec<usize> = (0..k).map(|_| 1 + uniform_below(&mut rng, 12) as usize).collect();
        if shape.iter().product::<usize>() <= 10_000 {
            shapes.push(shape);
        }
    }
    let build = |shape: &[usize]| {
        ConfigSpace::new(
            shape
                .iter()
                .enumerate()
                .map(|(i, &m)| Factor::from_labels(format!("f{i}"), (0..m).map(|l| format!("l{l}"))))
                .collect(),
        )
        .unwrap()
    };
    let mut exhaustive = 0u64;
    for shape in &shapes {
        let space = build(shape);
        for i in 0..space.cardinality() {
            let ec = space.config_at(i).map_err(|e| e.to_string())?;
            if space.index_of(&ec).map_err(|e| e.to_string())? != i {
                return Err(format!("round trip failed at {i} on {shape:?}"));
            }
            exhaustive += 1;
        }
        if space.config_at(space.cardinality()).is_ok() {
            return Err(format!("index {} accepted on {shape:?}", space.cardinality()));
        }
    }
    let big = build(&[1000, 10, 100, 1000]);
    assert_eq!(big.cardinality(), 1_000_000_000);
    for _ in 0..100_000 {
        let i = uniform_below_u128(&mut rng, big.cardinality());
        let ec = big.config_at(i).map_err(|e| e.to_string())?;
        if big.index_of(&ec).map_err(|e| e.to_string())? != i {
            return Err(format!("round trip failed at {i} on the 1e9 space"));
        }
    }
    Ok(format!(
        "{} spaces exhaustively ({exhaustive} points), 100000 random indices of a 1e9 space",
        shapes.len()
    ))
}

fn stratified(iterations: u32) -> Methodology {
    Methodology::Stratified {
        stratum_factor: "workload".into(),
        iterations,
        reps: 1,
    }
}

// 3. Confidence interval calibration.
fn c3() -> Outcome {
    let space = load_space("space_720.json");
    let model = load_model("model_gaussian.json", &space);
    let mut lines = Vec::new();
    let mut ok = true;
    for (level, lo, hi) in [(0.99, 0.982, 0.996), (0.95, 0.938, 0.961)] {
        let exp = Experiment {
            model: &model,
            space: &space,
            minuend: "cpu_b",
            subtrahend: "cpu_a",
            iterations: 10_000,
            level,
            master_seed: 2024,
        };
        let r = coverage_experiment(&exp, &stratified(32)).map_err(|e| e.to_string())?;
        ok &= r.iterations == 10_000 && (lo..=hi).contains(&r.coverage);
        lines.push(format!("{level}: {:.4} in [{lo}, {hi}]", r.coverage));
    }
    check(ok, lines.join(", "))
}

// 4. Methodology comparison on the skewed model.
fn c4() -> Outcome {
    let space = load_space("space_720.json");
    let model = load_model("model_skewed.json", &space);
    let methods: Vec<Methodology> = serde_json::from_str(&demo_text("methods.json")).unwrap();
    let exp = Experiment {
        model: &model,
        space: &space,
        minuend: "cpu_b",
        subtrahend: "cpu_a",
        iterations: 10_000,
        level: 0.99,
        master_seed: 2024,
    };
    let rows = methodology_comparison(&exp, &methods).map_err(|e| e.to_string())?;
    let row = |id: &str| rows.iter().find(|r| r.methodology == id).unwrap();
    let (full, strat, fact, spec) = (
        row("full_factorial"),
        row("stratified"),
        row("factorial2k"),
        row("spec_point"),
    );
    let costs = [
        full.cost_per_object,
        strat.cost_per_object,
        fact.cost_per_object,
        spec.cost_per_object,
    ];
    let ok = full.coverage == 1.0
        && (strat.coverage - 0.99).abs() <= 0.02
        && strat.coverage - fact.coverage >= 0.20
        && spec.coverage < fact.coverage
        && costs == [720, 32, 8, 1];
    check(
        ok,
        format!(
            "full {:.4}, stratified {:.4}, 2^kr {:.4}, single point {:.4}; costs {costs:?}",
            full.coverage, strat.coverage, fact.coverage, spec.coverage
        ),
    )
}

fn random_pair(rng: &mut PlanRng) -> (ResultSet, ResultSet) {
    let n = 2 + uniform_below(rng, 60) as usize;
    let scale = 10f64.powf(4.0 * unit(rng) - 1.0);
    let a: Vec<f64> = (0..n).map(|_| scale * (0.05 + unit(rng))).collect();
    let shift = scale * (unit(rng) - 0.5);
    let b: Vec<f64> = a
        .iter()
        .map(|x| (x + shift + 0.3 * scale * (unit(rng) - 0.5)).max(1e-6))
        .collect();
    (ResultSet::from_aggregates("a", &a), ResultSet::from_aggregates("b", &b))
}

fn manifest_for(object: &str) -> RunManifest {
    RunManifest {
        tool_version: "acceptance".into(),
        object: ObjectConfig::new(object).unwrap(),
        space_fingerprint: "space".into(),
        plan_fingerprint: "plan".into(),
        executor_hash: "executor".into(),
        plan_seed: 0,
        noise_seed: None,
        reps: 1,
        policy: Policy::Mean,
        host: BTreeMap::new(),
        started_unix: None,
        finished_unix: None,
        completed: false,
        records: 0,
        results_digest: None,
    }
}

// 5. Difference symmetry on persisted result sets.
fn c5() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut rng = plan_rng(5);
    let level_choices = [0.9, 0.95, 0.99];
    let mut worst = 0.0f64;
    for k in 0..250 {
        let (a, b) = random_pair(&mut rng);
        let (pa, pb) = (dir.path().join(format!("a{k}.jsonl")), dir.path().join(format!("b{k}.jsonl")));
        persist_results(&a, &manifest_for("a"), &pa).map_err(|e| e.to_string())?;
        persist_results(&b, &manifest_for("b"), &pb).map_err(|e| e.to_string())?;
        let (a, _) = load_results(&pa).map_err(|e| e.to_string())?;
        let (b, _) = load_results(&pb).map_err(|e| e.to_string())?;
        let level = level_choices[k % 3];
        let ab = compare_objects(&a, &b, level, None).map_err(|e| e.to_string())?;
        let ba = compare_objects(&b, &a, level, None).map_err(|e| e.to_string())?;
        let (i, j) = (ab.overall.interval.unwrap(), ba.overall.interval.unwrap());
        for (x, y) in [(i.low, -j.high), (i.high, -j.low), (i.center, -j.center)] {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-300));
        }
        if !rel_close(i.low, -j.high, 1e-12) || !rel_close(i.high, -j.low, 1e-12) {
            return Err(format!("dataset {k}: {i:?} vs {j:?}"));
        }
        if ab.overall.verdict.unwrap() != ba.overall.verdict.unwrap().swapped() {
            return Err(format!("dataset {k}: verdicts not swapped"));
        }
    }
    Ok(format!("250 persisted datasets mirrored, worst relative error {worst:.1e}"))
}

// 6. Ratio asymmetry.
fn c6() -> Outcome {
    let mut rng = plan_rng(6);
    let mut min_product = f64::INFINITY;
    for k in 0..1000 {
        let (a, b) = random_pair(&mut rng);
        for baseline in [Baseline::A, Baseline::B] {
            let d = ratio_diagnostics(&a, &b, baseline).map_err(|e| e.to_string())?;
            let r = d.ratios.values();
            let n = r.len() as f64;
            let independent = r.iter().sum::<f64>() / n * (r.iter().map(|x| 1.0 / x).sum::<f64>() / n);
            if !rel_close(d.asymmetry_product, independent, 1e-12) {
                return Err(format!("dataset {k}: product {} vs {independent}", d.asymmetry_product));
            }
            let constant = r.iter().all(|&x| x == r[0]);
            if d.asymmetry_product < 1.0 || (!constant && d.asymmetry_product <= 1.0) {
                return Err(format!("dataset {k}: product {}", d.asymmetry_product));
            }
            min_product = min_product.min(d.asymmetry_product);
        }
    }
    // Constant ratios (powers of two keep the division exact).
    for c in [0.25, 0.5, 2.0, 8.0] {
        let (a, _) = random_pair(&mut rng);
        let scaled: Vec<f64> = a.measurements.iter().map(|m| c * m.aggregate).collect();
        let b = ResultSet::from_aggregates("b", &scaled);
        let d = ratio_diagnostics(&a, &b, Baseline::A).map_err(|e| e.to_string())?;
        if d.asymmetry_product != 1.0 {
            return Err(format!("constant ratio {c}: product {}", d.asymmetry_product));
        }
    }

    #[derive(serde::Deserialize)]
    struct Obj {
        id: String,
        times: Vec<f64>,
    }
    #[derive(serde::Deserialize)]
    struct Pairs {
        level: f64,
        a: Obj,
        b: Obj,
    }
    let p: Pairs = serde_json::from_str(&demo_text("asymmetry_pairs.json")).unwrap();
    let a = ResultSet::from_aggregates(p.a.id, &p.a.times);
    let b = ResultSet::from_aggregates(p.b.id, &p.b.times);
    let r = asymmetry_report(&a, &b, p.level).map_err(|e| e.to_string())?;
    let da = verdict_of(&r.difference_a_minus_b).kind;
    let db = verdict_of(&r.difference_b_minus_a).kind;
    let ok = r.ratio_sign_flip
        && r.differences_mirror
        && da == db.swapped()
        && r.ratio_baseline_a.interval.low > 1.0
        && r.ratio_baseline_b.interval.low > 1.0;
    check(
        ok,
        format!(
            "2000 products >= 1 (min {min_product:.6}); demo ratio CIs [{:.4}, {:.4}] and [{:.4}, {:.4}] both exclude 1 upward, differences agree ({})",
            r.ratio_baseline_a.interval.low,
            r.ratio_baseline_a.interval.high,
            r.ratio_baseline_b.interval.low,
            r.ratio_baseline_b.interval.high,
            da.as_str()
        ),
    )
}

// 7. Verdict rules.
fn c7() -> Outcome {
    let iv = |low: f64, high: f64| Interval {
        low,
        high,
        level: 0.99,
        center: 0.5 * (low + high),
        n: 32,
    };
    let cases = [
        (iv(-17.736, 65.512), VerdictKind::NoSignificantDifference),
        (iv(-7.782, 55.559), VerdictKind::NoSignificantDifference),
        (iv(-3.0, 0.0), VerdictKind::NoSignificantDifference),
        (iv(-40.2, -3.1), VerdictKind::MinuendOutperforms),
        (iv(2.5, 91.0), VerdictKind::SubtrahendOutperforms),
    ];
    for (i, want) in &cases {
        let got = verdict_of(i).kind;
        if got != *want {
            return Err(format!("({}, {}) -> {} (want {})", i.low, i.high, got.as_str(), want.as_str()));
        }
    }
    Ok("(-17.736, 65.512) -> NoSignificantDifference; negative and positive intervals classified".into())
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// With `x = sqrt(df) tan(theta)` the t density becomes proportional to
/// `cos(theta)^(df - 1)` on `[0, pi/2)`, so the CDF is a ratio of two smooth
/// integrals and needs no gamma function.
struct TOracle {
    nodes: Vec<(f64, f64)>,
}

impl TOracle {
    fn integral(&self, df: f64, upper: f64) -> f64 {
        let panels = 64;
        let h = upper / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &self.nodes {
                sum += w * (mid + 0.5 * h * x).cos().powf(df - 1.0);
            }
        }
        sum * 0.5 * h
    }

    fn quantile(&self, p: f64, df: f64) -> f64 {
        let total = self.integral(df, std::f64::consts::FRAC_PI_2);
        // Newton on theta: the CDF is concave there, so iterates rise to the root.
        let mut theta = 0.0f64;
        for _ in 0..200 {
            let g = 0.5 + 0.5 * self.integral(df, theta) / total - p;
            let slope = 0.5 * theta.cos().powf(df - 1.0) / total;
            let step = g / slope;
            theta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        df.sqrt() * theta.tan()
    }
}

// 8. Student-t quantiles.
fn c8() -> Outcome {
    let oracle = TOracle { nodes: gauss_legendre(20) };
    let mut worst = (0.0f64, 0.0, 0u32);
    for df in 1..=200u32 {
        for p in [0.9, 0.95, 0.975, 0.995] {
            let got = t_quantile(p, df as f64).map_err(|e| e.to_string())?;
            let want = oracle.quantile(p, df as f64);
            let err = (got - want).abs();
            if err > worst.0 {
                worst = (err, p, df);
            }
        }
    }
    check(
        worst.0 <= 1e-6,
        format!("800 quantiles, max abs error {:.2e} (p {}, df {})", worst.0, worst.1, worst.2),
    )
}

/// Model value at one configuration, read straight from the JSON documents.
fn brute_value(model: &Value, object: &str, labels: &BTreeMap<String, String>) -> f64 {
    let stratum = model["stratum_factor"].as_str().unwrap();
    let mut v = model["base"][labels[stratum].as_str()].as_f64().unwrap();
    let add_terms = |terms: &Value, v: &mut f64| {
        if let Some(effects) = terms.get("effects").and_then(Value::as_object) {
            for (factor, table) in effects {
                *v += table[labels[factor].as_str()].as_f64().unwrap();
            }
        }
        if let Some(list) = terms.get("interactions").and_then(Value::as_array) {
            for inter in list {
                let f = inter["factors"].as_array().unwrap();
                let (f1, f2) = (f[0].as_str().unwrap(), f[1].as_str().unwrap());
                if let Some(x) = inter["values"]
                    .get(labels[f1].as_str())
                    .and_then(|row| row.get(labels[f2].as_str()))
                {
                    *v += x.as_f64().unwrap();
                }
            }
        }
    };
    add_terms(model, &mut v);
    let obj = &model["objects"][object];
    v += obj.get("offset").and_then(Value::as_f64).unwrap_or(0.0);
    add_terms(obj, &mut v);
    v
}

fn brute_mean(space: &Value, model: &Value, target: &[&str]) -> f64 {
    let factors: Vec<(String, Vec<String>)> = space["factors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["name"].as_str().unwrap().to_string(),
                f["levels"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|l| l.as_str().unwrap().to_string())
                    .collect(),
            )
        })
        .collect();
    let mut labels = BTreeMap::new();
    let mut sum = 0.0;
    let mut count = 0u64;
    fn walk(
        depth: usize,
        factors: &[(String, Vec<String>)],
        labels: &mut BTreeMap<String, String>,
        visit: &mut dyn FnMut(&BTreeMap<String, String>),
    ) {
        if depth == factors.len() {
            visit(labels);
            return;
        }
        for level in &factors[depth].1 {
            labels.insert(factors[depth].0.clone(), level.clone());
            walk(depth + 1, factors, labels, visit);
        }
    }
    walk(0, &factors, &mut labels, &mut |l| {
        sum += match target {
            [a] => brute_value(model, a, l),
            [a, b] => brute_value(model, a, l) - brute_value(model, b, l),
            _ => unreachable!(),
        };
        count += 1;
    });
    sum / count as f64
}

// 9. Population mean against an independent enumerator.
fn c9() -> Outcome {
    let space_json: Value = serde_json::from_str(&demo_text("space_720.json")).unwrap();
    let space = load_space("space_720.json");
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    for name in ["model_skewed.json", "model_gaussian.json"] {
        let model_json: Value = serde_json::from_str(&demo_text(name)).unwrap();
        let model = load_model(name, &space);
        let ids: Vec<String> = model_json["objects"].as_object().unwrap().keys().cloned().collect();
        let mut targets: Vec<Vec<&str>> = ids.iter().map(|i| vec![i.as_str()]).collect();
        for x in &ids {
            for y in &ids {
                if x != y {
                    targets.push(vec![x.as_str(), y.as_str()]);
                }
            }
        }
        for t in &targets {
            let target = match t.as_slice() {
                [a] => Target::Single(a.to_string()),
                [a, b] => Target::Difference(a.to_string(), b.to_string()),
                _ => unreachable!(),
            };
            let got = population_mean_bound(&model, &space, &target).map_err(|e| e.to_string())?.mu;
            let want = brute_mean(&space_json, &model_json, t);
            let err = (got - want).abs() / want.abs().max(1e-300);
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("{name} {t:?}: {got} vs {want}"));
            }
            if t.len() == 2 && t[0] == "cpu_b" {
                details.push(format!("{name} cpu_b-cpu_a {got:.5}"));
            }
        }
    }
    Ok(format!("{}; worst relative error {worst:.1e}", details.join(", ")))
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["ecbench"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn chain(dir: &Path) -> Result<(), String> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let space = demo("space_720.json").to_str().unwrap().to_string();
    let model = demo("model_skewed.json").to_str().unwrap().to_string();
    let methods = demo("methods.json").to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["plan", "stratified", "--space", &space, "--stratum", "workload", "--iterations", "32", "--seed", "17", "--out", &p("plan.json")],
        vec!["run", "--space", &space, "--plan", &p("plan.json"), "--executor", &model, "--object", "cpu_a", "--out", &p("a.jsonl")],
        vec!["run", "--space", &space, "--plan", &p("plan.json"), "--executor", &model, "--object", "cpu_b", "--out", &p("b.jsonl")],
        vec!["compare", "--space", &space, "--a", &p("b.jsonl"), "--b", &p("a.jsonl"), "--level", "0.99", "--out", &p("cmp.json"), "--csv", &p("cmp.csv")],
        vec!["simulate", "--space", &space, "--model", &model, "--methods", &methods, "--iterations", "200", "--level", "0.99", "--seed", "5", "--out", &p("cov.csv")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        if cli(&args) != EXIT_OK {
            return Err(format!("`{}` failed", args.join(" ")));
        }
    }
    Ok(())
}

// 10. Reproducibility chain and tamper detection.
fn c10() -> Outcome {
    let (one, two) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    chain(one.path())?;
    chain(two.path())?;
    let files = [
        "plan.json",
        "a.jsonl",
        "a.jsonl.manifest.json",
        "b.jsonl",
        "b.jsonl.manifest.json",
        "cmp.json",
        "cmp.csv",
        "cov.csv",
    ];
    for f in files {
        if fs::read(one.path().join(f)).unwrap() != fs::read(two.path().join(f)).unwrap() {
            return Err(format!("{f} differs between runs"));
        }
    }

    let d = one.path();
    let space = demo("space_720.json");
    let compare = || {
        cli(&[
            "compare", "--space", space.to_str().unwrap(), "--a", d.join("b.jsonl").to_str().unwrap(),
            "--b", d.join("a.jsonl").to_str().unwrap(), "--level", "0.99", "--out", d.join("x.csv").to_str().unwrap(),
        ])
    };
    let mut rejected = Vec::new();
    let tamper = |file: &str, from: &str, to: &str| -> String {
        let path = d.join(file);
        let original = fs::read_to_string(&path).unwrap();
        assert!(original.contains(from), "{file} lacks {from}");
        fs::write(&path, original.replacen(from, to, 1)).unwrap();
        original
    };

    let a = fs::read_to_string(d.join("a.jsonl")).unwrap();
    let first: Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    let agg = format!("\"aggregate\":{}", first["aggregate"]);
    let original = tamper("a.jsonl", &agg, "\"aggregate\":1.0");
    rejected.push(("result value", compare()));
    fs::write(d.join("a.jsonl"), original).unwrap();

    let manifest = fs::read_to_string(d.join("a.jsonl.manifest.json")).unwrap();
    let m: Value = serde_json::from_str(&manifest).unwrap();
    let fp = m["plan_fingerprint"].as_str().unwrap().to_string();
    let original = tamper("a.jsonl.manifest.json", &fp, &"0".repeat(64));
    rejected.push(("manifest plan fingerprint", compare()));
    fs::write(d.join("a.jsonl.manifest.json"), original).unwrap();

    let sfp = m["space_fingerprint"].as_str().unwrap().to_string();
    tamper("plan.json", &sfp, &"f".repeat(64));
    let run = cli(&[
        "run", "--space", space.to_str().unwrap(), "--plan", d.join("plan.json").to_str().unwrap(),
        "--executor", demo("model_skewed.json").to_str().unwrap(), "--object", "cpu_a",
        "--out", d.join("c.jsonl").to_str().unwrap(),
    ]);
    rejected.push(("plan space fingerprint", run));

    let restored = compare();
    let ok = rejected.iter().all(|(_, code)| *code == EXIT_INTEGRITY) && restored == EXIT_OK;
    let codes: Vec<String> = rejected.iter().map(|(w, c)| format!("{w} -> exit {c}")).collect();
    check(
        ok,
        format!("{} files byte-identical across two runs; {}", files.len(), codes.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("space arithmetic", c1, Some(1)),
        ("index bijection", c2, Some(10)),
        ("CI calibration", c3, Some(120)),
        ("methodology comparison", c4, Some(300)),
        ("difference symmetry", c5, Some(10)),
        ("ratio asymmetry", c6, Some(10)),
        ("verdict rules", c7, None),
        ("t quantile accuracy", c8, Some(5)),
        ("population mean oracle", c9, None),
        ("reproducibility chain", c10, None),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let outcome = within_budget(outcome, start.elapsed(), budget.map(Duration::from_secs));
        match outcome {
            Ok(d) => println!("PASS  criterion {:>2}  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {:>2}  {name}: {d}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
