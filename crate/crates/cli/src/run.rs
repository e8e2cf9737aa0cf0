use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abstain_core::data::{
    manifest_csv, parity_label_map, parse_libsvm, serialize_libsvm, sign_label_map, split,
    NormalizeTransform, RawDataset, SplitSpec,
};
use abstain_core::histogram::{BandwidthLadder, HistogramEstimator};
use abstain_core::plugin::{abstention_slack, band_for, evaluate, PluginClassifier};
use abstain_core::problems::{expected_outcome, Problem, Smoothness};
use abstain_core::search::{evaluate_search, run_search, trace_csv, SearchConfig};
use abstain_core::surrogate::{
    median_sigma, train_constrained, ConstrainedConfig, FourierFeatures, SolverConfig,
};
use abstain_core::{LabeledSet, Metrics, Model, PointSet};
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use crate::config::{Algorithm, RunConfig};

/// Quadrature size for exact-risk queries against a known problem.
const RESOLUTION: usize = 2000;
/// Mixed into the run seed for draws that must not reuse training data.
const TEST_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
const FEATURE_SEED_MIX: u64 = 0x6a09_e667_f3bc_c909;

pub struct Options {
    pub out: PathBuf,
    pub seed_base: u64,
    pub quiet: bool,
}

impl Options {
    fn seeds(&self, config: &RunConfig) -> Vec<u64> {
        config.seeds.iter().map(|s| s.wrapping_add(self.seed_base)).collect()
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", line.as_ref());
        }
    }
}

enum Source {
    Problem(Problem),
    Dataset { raw: RawDataset, label_map: BTreeMap<String, i8> },
}

fn build_source(config: &RunConfig) -> Result<Source> {
    if let Some(name) = &config.problem {
        let problem = match name.as_str() {
            "linear1d" => Problem::linear1d(),
            "sine1d" => Problem::sine1d(
                config.problem_frequency.expect("validated"),
                config.problem_amplitude.expect("validated"),
            )?,
            "smooth-nd" => Problem::smooth_nd(
                config.problem_dimension.expect("validated"),
                config.problem_amplitude.expect("validated"),
            )?,
            "atoms" => {
                let path = config.atoms_csv.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read atoms table {}", path.display()))?;
                Problem::atoms_from_csv(&text)?
            }
            other => bail!("unknown problem {other:?}"),
        };
        return Ok(Source::Problem(problem));
    }
    let path = config.dataset.as_ref().expect("validated");
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read dataset {}", path.display()))?;
    let raw = parse_libsvm(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    let label_map = match config.label_map.as_str() {
        "parity" => parity_label_map(&raw.labels)?,
        _ => sign_label_map(),
    };
    Ok(Source::Dataset { raw, label_map })
}

fn smoothness(config: &RunConfig) -> Option<Smoothness> {
    match (config.smoothness_scale, config.smoothness_exponent) {
        (Some(scale), Some(exponent)) => Some(Smoothness { scale, exponent }),
        _ => None,
    }
}

/// Training, calibration, and test material for one seed, shared by
/// every algorithm so they compete on the same draw.
struct SeedData {
    train: LabeledSet,
    unlabeled: PointSet,
    test: LabeledSet,
    manifest: Option<String>,
}

fn seed_data(source: &Source, config: &RunConfig, seed: u64) -> Result<SeedData> {
    match source {
        Source::Problem(problem) => Ok(SeedData {
            train: problem.sample_labeled(config.train_size, seed)?,
            unlabeled: problem.sample_unlabeled(config.unlabeled_size, seed)?,
            test: problem.sample_labeled(config.test_size, seed.wrapping_add(TEST_SEED_MIX))?,
            manifest: None,
        }),
        Source::Dataset { raw, label_map } => {
            let parts = split(raw, &SplitSpec::new(seed, label_map.clone()))?;
            let transform = NormalizeTransform::fit(&parts.labeled.points)?;
            Ok(SeedData {
                train: LabeledSet::new(transform.apply(&parts.labeled.points)?, parts.labeled.labels)?,
                unlabeled: transform.apply(&parts.unlabeled)?,
                test: LabeledSet::new(transform.apply(&parts.test.points)?, parts.test.labels)?,
                manifest: Some(manifest_csv(&parts.manifest)),
            })
        }
    }
}

fn fit_plugin(
    train: &LabeledSet,
    unlabeled: &PointSet,
    delta: f64,
    config: &RunConfig,
) -> Result<PluginClassifier> {
    let ladder = BandwidthLadder::for_sample(train.len(), 1.0, train.points.dim())?;
    let est = HistogramEstimator::fit_scaled(train, ladder, config.lepski_scale)?;
    let band = band_for(&est, unlabeled, smoothness(config).as_ref())?;
    let slack = abstention_slack(unlabeled.len(), config.slack_scale);
    Ok(PluginClassifier::build(est, unlabeled, delta, slack, band)?)
}

fn feature_map(train: &LabeledSet, seed: u64, config: &RunConfig) -> Result<FourierFeatures> {
    let sigma = match config.feature_sigma {
        Some(s) => s,
        None => median_sigma(&train.points, seed)?,
    };
    Ok(FourierFeatures::new(
        train.points.dim(),
        config.feature_dim,
        sigma,
        seed.wrapping_add(FEATURE_SEED_MIX),
    )?)
}

fn solver(config: &RunConfig) -> SolverConfig {
    SolverConfig { iterations: config.solver_iterations, ..SolverConfig::default() }
}

struct Row {
    algorithm: &'static str,
    delta: f64,
    seed: u64,
    rejection: f64,
    accuracy: f64,
    risk: f64,
    excess: Option<f64>,
}

fn metric_row(
    algorithm: &'static str,
    delta: f64,
    seed: u64,
    metrics: Metrics,
    bayes: Option<f64>,
) -> Row {
    Row {
        algorithm,
        delta,
        seed,
        rejection: metrics.rejection_rate,
        accuracy: metrics.accuracy_on_accepted,
        risk: metrics.risk,
        excess: bayes.map(|b| metrics.risk - b),
    }
}

fn sweep_csv(rows: &[Row]) -> String {
    let mut out = String::from("algorithm,delta,seed,rejection_rate,accuracy_on_accepted,risk,excess_risk\n");
    for r in rows {
        let excess = r.excess.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.algorithm, r.delta, r.seed, r.rejection, r.accuracy, r.risk, excess
        ));
    }
    out
}

#[derive(Serialize)]
struct Failure {
    algorithm: &'static str,
    delta: f64,
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct Report<'c> {
    library_version: &'static str,
    command: &'static str,
    wall_time_secs: f64,
    seed_base: u64,
    config: &'c RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_fractions: Option<(f64, f64, f64)>,
    outputs: Vec<String>,
    failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
}

impl<'c> Report<'c> {
    fn new(command: &'static str, config: &'c RunConfig, opts: &Options) -> Self {
        Self {
            library_version: env!("CARGO_PKG_VERSION"),
            command,
            wall_time_secs: 0.0,
            seed_base: opts.seed_base,
            config,
            split_fractions: config.dataset.as_ref().map(|_| (0.6, 0.2, 0.2)),
            outputs: Vec::new(),
            failures: Vec::new(),
            slope: None,
        }
    }
}

fn write_output(out_dir: &Path, name: &str, content: &str, report: &mut Report) -> Result<PathBuf> {
    let path = out_dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    report.outputs.push(name.to_string());
    Ok(path)
}

fn finish_report(out_dir: &Path, mut report: Report, started: Instant) -> Result<()> {
    report.wall_time_secs = started.elapsed().as_secs_f64();
    report.outputs.push("report.json".into());
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out_dir.join("report.json"), text)
        .with_context(|| format!("cannot write {}", out_dir.join("report.json").display()))?;
    Ok(())
}

fn ensure_out_dir(opts: &Options) -> Result<PathBuf> {
    std::fs::create_dir_all(&opts.out)
        .with_context(|| format!("cannot create output directory {}", opts.out.display()))?;
    Ok(opts.out.clone())
}

pub fn cmd_sweep(config: &RunConfig, opts: &Options) -> Result<()> {
    let started = Instant::now();
    let out_dir = ensure_out_dir(opts)?;
    let mut report = Report::new("sweep", config, opts);
    let source = build_source(config)?;
    let mut bayes_cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut bayes_for = |delta: f64| -> Result<Option<f64>> {
        match &source {
            Source::Problem(problem) => {
                if let Some(&b) = bayes_cache.get(&delta.to_bits()) {
                    return Ok(Some(b));
                }
                let b = problem.bayes_risk(delta)?;
                bayes_cache.insert(delta.to_bits(), b);
                Ok(Some(b))
            }
            Source::Dataset { .. } => Ok(None),
        }
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    let mut manifests = Vec::new();
    for &seed in &opts.seeds(config) {
        let data = seed_data(&source, config, seed)
            .with_context(|| format!("cannot prepare data for seed {seed}"))?;
        if let Some(manifest) = &data.manifest {
            manifests.push((format!("split-seed{seed}.csv"), manifest.clone()));
        }
        for &delta in &config.deltas {
            let bayes = bayes_for(delta)?;
            for &algorithm in &config.algorithms {
                opts.say(format!("[sweep] {} delta {delta} seed {seed}", algorithm.name()));
                match run_one(algorithm, delta, seed, &source, &data, config, bayes) {
                    Ok((row, trace)) => {
                        rows.push(row);
                        if let Some(text) = trace {
                            traces.push((format!("search-trace-delta{delta}-seed{seed}.csv"), text));
                        }
                    }
                    Err(e) => failures.push(Failure {
                        algorithm: algorithm.name(),
                        delta,
                        seed,
                        error: format!("{e:#}"),
                    }),
                }
            }
        }
    }

    rows.sort_by(|a, b| {
        a.algorithm
            .cmp(b.algorithm)
            .then(a.delta.total_cmp(&b.delta))
            .then(a.seed.cmp(&b.seed))
    });
    write_output(&out_dir, "sweep.csv", &sweep_csv(&rows), &mut report)?;
    for (name, text) in &manifests {
        write_output(&out_dir, name, text, &mut report)?;
    }
    for (name, text) in &traces {
        write_output(&out_dir, name, text, &mut report)?;
    }
    if config.svg {
        let chart = crate::svg::accuracy_vs_rejection(&series_of(&rows));
        write_output(&out_dir, "accuracy-vs-rejection.svg", &chart, &mut report)?;
    }

    let failed = failures.len();
    let total = rows.len() + failed;
    if failed > 0 {
        eprintln!("failed runs:");
        for f in &failures {
            eprintln!("  {} delta {} seed {}: {}", f.algorithm, f.delta, f.seed, f.error);
        }
    }
    report.failures = failures;
    finish_report(&out_dir, report, started)?;
    if failed > 0 {
        bail!("{failed} of {total} runs failed");
    }
    opts.say(format!("[sweep] wrote {} rows to {}", rows.len(), out_dir.join("sweep.csv").display()));
    Ok(())
}

type RunOutput = (Row, Option<String>);

fn run_one(
    algorithm: Algorithm,
    delta: f64,
    seed: u64,
    source: &Source,
    data: &SeedData,
    config: &RunConfig,
    bayes: Option<f64>,
) -> Result<RunOutput> {
    match algorithm {
        Algorithm::BayesOracle => {
            let Source::Problem(problem) = source else {
                bail!("bayes-oracle needs a synthetic problem");
            };
            let rule = problem.bayes_rule(delta)?;
            let outcome = expected_outcome(problem, &rule, RESOLUTION)?;
            let declared = 1.0 - outcome.abstention;
            let accuracy = if declared > 0.0 { (declared - outcome.risk) / declared } else { 1.0 };
            let row = Row {
                algorithm: algorithm.name(),
                delta,
                seed,
                rejection: outcome.abstention,
                accuracy,
                risk: outcome.risk,
                excess: bayes.map(|b| outcome.risk - b),
            };
            Ok((row, None))
        }
        Algorithm::Plugin => {
            let plugin = fit_plugin(&data.train, &data.unlabeled, delta, config)?;
            let metrics = evaluate(&plugin, &data.test, seed)?;
            Ok((metric_row(algorithm.name(), delta, seed, metrics, bayes), None))
        }
        Algorithm::Search => {
            let features = feature_map(&data.train, seed, config)?;
            let search_config = SearchConfig { solver: solver(config), ..SearchConfig::default() };
            let result = run_search(&data.train, &data.unlabeled, &features, delta, &search_config)?;
            let metrics = evaluate_search(&result, &data.test)?;
            let trace = trace_csv(&result.trace);
            Ok((metric_row(algorithm.name(), delta, seed, metrics, bayes), Some(trace)))
        }
        Algorithm::Constrained => {
            let features = feature_map(&data.train, seed, config)?;
            let constrained_config = ConstrainedConfig {
                c_relax: config.c_relax,
                solver: solver(config),
                ..ConstrainedConfig::default()
            };
            let fit = train_constrained(&data.train, &data.unlabeled, features, delta, &constrained_config)?;
            let metrics = evaluate(&fit.model, &data.test, seed)?;
            Ok((metric_row(algorithm.name(), delta, seed, metrics, bayes), None))
        }
    }
}

fn series_of(rows: &[Row]) -> Vec<crate::svg::Series> {
    let mut by_algorithm: BTreeMap<&'static str, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for r in rows {
        let cell = by_algorithm
            .entry(r.algorithm)
            .or_default()
            .entry(r.delta.to_bits())
            .or_insert((0.0, 0.0, 0));
        cell.0 += r.rejection;
        cell.1 += r.accuracy;
        cell.2 += 1;
    }
    by_algorithm
        .into_iter()
        .map(|(name, deltas)| crate::svg::Series {
            name: name.to_string(),
            points: deltas
                .into_values()
                .map(|(rej, acc, k)| (rej / k as f64, acc / k as f64))
                .collect(),
        })
        .collect()
}

pub fn cmd_rates(config: &RunConfig, opts: &Options) -> Result<()> {
    let started = Instant::now();
    let source = build_source(config)?;
    let Source::Problem(problem) = source else {
        bail!("rates needs a synthetic problem with a known optimum, not a dataset");
    };
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        bail!("rates needs at least two distinct entries in sizes to fit a slope");
    }
    if config.deltas.len() != 1 {
        bail!("rates uses exactly one delta, got {}", config.deltas.len());
    }
    let delta = config.deltas[0];
    let bayes = problem.bayes_risk(delta)?;
    let seeds = opts.seeds(config);

    let out_dir = ensure_out_dir(opts)?;
    let mut report = Report::new("rates", config, opts);
    let mut medians = Vec::new();
    for &n in &sizes {
        let mut excesses = Vec::new();
        for &seed in &seeds {
            opts.say(format!("[rates] n {n} seed {seed}"));
            let train = problem.sample_labeled(n, seed)?;
            let unlabeled = problem.sample_unlabeled(n, seed)?;
            let plugin = fit_plugin(&train, &unlabeled, delta, config)
                .with_context(|| format!("plug-in fit failed at n {n} seed {seed}"))?;
            let outcome = expected_outcome(&problem, &plugin, RESOLUTION)?;
            excesses.push(outcome.risk - bayes);
        }
        excesses.sort_by(f64::total_cmp);
        let mid = excesses.len() / 2;
        let median = if excesses.len() % 2 == 1 {
            excesses[mid]
        } else {
            0.5 * (excesses[mid - 1] + excesses[mid])
        };
        medians.push(median);
    }

    let points: Vec<(f64, f64)> =
        sizes.iter().zip(&medians).map(|(n, m)| ((*n as f64).ln(), m.max(1e-12).ln())).collect();
    let k = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);

    let mut csv = String::from("n,median_excess_risk\n");
    for (n, m) in sizes.iter().zip(&medians) {
        csv.push_str(&format!("{n},{m}\n"));
    }
    write_output(&out_dir, "rates.csv", &csv, &mut report)?;
    report.slope = Some(slope);
    finish_report(&out_dir, report, started)?;
    println!("fitted log-log slope {slope}");
    Ok(())
}

pub fn cmd_eval(config: &RunConfig, opts: &Options) -> Result<()> {
    let started = Instant::now();
    let model_path =
        config.model.as_ref().ok_or_else(|| anyhow!("eval needs model = \"path\" in the config"))?;
    let model = Model::load(model_path)
        .with_context(|| format!("cannot load model {}", model_path.display()))?;
    let policy = model
        .as_policy()
        .ok_or_else(|| anyhow!("the model file holds a bare estimator with no decision rule"))?;
    let seed = opts.seeds(config)[0];
    let test = match build_source(config)? {
        Source::Problem(problem) => {
            problem.sample_labeled(config.test_size, seed.wrapping_add(TEST_SEED_MIX))?
        }
        Source::Dataset { raw, label_map } => {
            let labels = raw
                .labels
                .iter()
                .map(|l| {
                    label_map.get(l).copied().ok_or_else(|| {
                        anyhow!("label {l:?} is not covered by the {} label map", config.label_map)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            LabeledSet::new(raw.features, labels)?
        }
    };
    let metrics = evaluate(policy, &test, seed)?;

    #[derive(Serialize)]
    struct EvalOut {
        model: &'static str,
        risk: f64,
        rejection_rate: f64,
        accuracy_on_accepted: f64,
    }
    let eval_out = EvalOut {
        model: model.kind(),
        risk: metrics.risk,
        rejection_rate: metrics.rejection_rate,
        accuracy_on_accepted: metrics.accuracy_on_accepted,
    };
    println!("{}", serde_json::to_string_pretty(&eval_out).expect("metrics serialize"));

    let out_dir = ensure_out_dir(opts)?;
    let mut report = Report::new("eval", config, opts);
    let csv = format!(
        "model,risk,rejection_rate,accuracy_on_accepted\n{},{},{},{}\n",
        model.kind(),
        metrics.risk,
        metrics.rejection_rate,
        metrics.accuracy_on_accepted
    );
    write_output(&out_dir, "eval.csv", &csv, &mut report)?;
    finish_report(&out_dir, report, started)?;
    Ok(())
}

pub fn cmd_synth(config: &RunConfig, opts: &Options) -> Result<()> {
    let started = Instant::now();
    let Source::Problem(problem) = build_source(config)? else {
        bail!("synth needs a synthetic problem, not a dataset");
    };
    let seed = opts.seeds(config)[0];
    let sample = problem.sample_labeled(config.train_size, seed)?;
    let raw = RawDataset {
        features: sample.points,
        labels: sample.labels.iter().map(|&l| if l > 0 { "+1" } else { "-1" }.to_string()).collect(),
    };
    let out_dir = ensure_out_dir(opts)?;
    let mut report = Report::new("synth", config, opts);
    let path = write_output(&out_dir, "synth.libsvm", &serialize_libsvm(&raw), &mut report)?;
    finish_report(&out_dir, report, started)?;
    println!("{}", path.display());
    Ok(())
}

pub fn cmd_oracle(config: &RunConfig, _opts: &Options) -> Result<()> {
    let Source::Problem(problem) = build_source(config)? else {
        bail!("oracle needs a synthetic problem, not a dataset");
    };
    println!("delta,gamma,c0,bayes_risk");
    for &delta in &config.deltas {
        let rule = problem.bayes_rule(delta)?;
        let risk = problem.bayes_risk(delta)?;
        println!("{delta},{},{},{risk}", rule.gamma, rule.c0);
    }
    Ok(())
}
