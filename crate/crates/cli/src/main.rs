//! `a5tune`: sweep, train, sensitivity, optimize and report stages of the
//! A5 tuning pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use a5tune::config::ScenarioConfig;
use a5tune::optimizer::{self, GaConfig, Normalization, Objective, OptResult};
use a5tune::report::Heatmap;
use a5tune::sensitivity::{self, SobolConfig};
use a5tune::surrogate::{self, Kpi, ModelKind, ModelSpec, TrainedModel};
use a5tune::sweep::{self, AggregatedPoint, Dataset, SweepOptions};
use a5tune::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

pub const PARALLELISM_ENV: &str = "A5TUNE_PARALLELISM";

#[derive(Parser, Debug)]
#[command(name = "a5tune", version, about = "A5 inter-frequency handover parameter tuning")]
struct Cli {
    /// Scenario JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for the train/test split, stochastic models, Sobol sampling and the GA.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate every grid point for every seed and write the dataset.
    Sweep(SweepArgs),
    /// Fit all surrogate kinds for both KPIs and report test RMSE.
    Train(TrainArgs),
    /// Sobol indices of a surrogate pair.
    Sensitivity(SensitivityArgs),
    /// Maximise the weighted KPI objective.
    Optimize(OptimizeArgs),
    /// Heatmaps of a KPI or the objective over the threshold plane.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Worker threads (0 = all cores).
    #[arg(long, env = PARALLELISM_ENV, default_value_t = 0)]
    parallelism: usize,

    /// Keep rows of an interrupted run and only simulate the missing ones.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct DatasetArg {
    /// Dataset CSV (default: <out>/dataset.csv).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelsArg {
    /// Directory holding model JSON files (default: <out>/models).
    #[arg(long)]
    models: Option<PathBuf>,

    /// Model kind to use.
    #[arg(long, value_enum, default_value_t = KindArg::Gbt)]
    model: KindArg,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArg,

    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[command(flatten)]
    models: ModelsArg,

    #[arg(long, default_value_t = 4096)]
    n_base: usize,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    data: DatasetArg,

    #[command(flatten)]
    models: ModelsArg,

    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,

    /// Weight of the RSRP term.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    data: DatasetArg,

    #[command(flatten)]
    models: ModelsArg,

    #[arg(long, value_enum, default_value_t = QuantityArg::Hosr)]
    kpi: QuantityArg,

    /// A TTT value in ms, or "all".
    #[arg(long, default_value = "all")]
    ttt: String,

    /// Read values from the dataset or from the surrogates.
    #[arg(long, value_enum, default_value_t = SourceArg::Dataset)]
    source: SourceArg,

    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    Linear,
    Poly4,
    DecisionTree,
    RandomForest,
    Gbt,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => ModelKind::Linear,
            KindArg::Poly4 => ModelKind::Poly4,
            KindArg::DecisionTree => ModelKind::DecisionTree,
            KindArg::RandomForest => ModelKind::RandomForest,
            KindArg::Gbt => ModelKind::Gbt,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum MethodArg {
    Ga,
    Brute,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum QuantityArg {
    MeanRsrp,
    Hosr,
    Objective,
}

impl QuantityArg {
    fn name(self) -> &'static str {
        match self {
            QuantityArg::MeanRsrp => "mean_rsrp",
            QuantityArg::Hosr => "hosr",
            QuantityArg::Objective => "objective",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum SourceArg {
    Dataset,
    Model,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let scenario = load_scenario(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Sweep(a) => cmd_sweep(cli, scenario.as_ref(), a),
        Command::Train(a) => cmd_train(cli, scenario.as_ref(), a),
        Command::Sensitivity(a) => cmd_sensitivity(cli, scenario.as_ref(), a),
        Command::Optimize(a) => cmd_optimize(cli, scenario.as_ref(), a),
        Command::Report(a) => cmd_report(cli, scenario.as_ref(), a),
    }
}

fn load_scenario(path: Option<&Path>) -> Result<Option<ScenarioConfig>> {
    path.map(ScenarioConfig::load).transpose()
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} not found: {}", path.display())))
    }
}

fn guard(expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::FingerprintMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

fn dataset_path(cli: &Cli, a: &DatasetArg) -> PathBuf {
    a.dataset.clone().unwrap_or_else(|| cli.out.join("dataset.csv"))
}

fn models_dir(cli: &Cli, a: &ModelsArg) -> PathBuf {
    a.models.clone().unwrap_or_else(|| cli.out.join("models"))
}

/// Loads the dataset and checks it against the scenario when one was given.
fn load_dataset(path: &Path, scenario: Option<&ScenarioConfig>) -> Result<(Dataset, Vec<AggregatedPoint>)> {
    require(path, "dataset")?;
    let (ds, manifest) = Dataset::load(path)?;
    if let Some(s) = scenario {
        guard(&s.fingerprint(), &manifest.fingerprint)?;
    }
    let points = ds.aggregate();
    Ok((ds, points))
}

/// Loads the mean-RSRP and HOSR models of one kind and checks that they
/// come from the same scenario.
fn load_pair(dir: &Path, kind: ModelKind, scenario: Option<&ScenarioConfig>) -> Result<(TrainedModel, TrainedModel, Vec<PathBuf>)> {
    let mut paths = Vec::new();
    let mut load = |kpi: Kpi| -> Result<TrainedModel> {
        let path = dir.join(ModelSpec::new(kind, kpi).file_name());
        require(&path, "model")?;
        let m = TrainedModel::load(&path)?;
        if m.spec.kind != kind || m.spec.target != kpi {
            return Err(Error::Config(format!("{} does not hold a {kind} {kpi} model", path.display())));
        }
        paths.push(path);
        Ok(m)
    };
    let rsrp = load(Kpi::MeanRsrp)?;
    let hosr = load(Kpi::Hosr)?;
    guard(&rsrp.fingerprint, &hosr.fingerprint)?;
    if let Some(s) = scenario {
        guard(&s.fingerprint(), &rsrp.fingerprint)?;
    }
    Ok((rsrp, hosr, paths))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn cmd_sweep(cli: &Cli, scenario: Option<&ScenarioConfig>, a: &SweepArgs) -> Result<()> {
    let started = Instant::now();
    let scenario = scenario.cloned().unwrap_or_default();
    scenario.validate()?;
    let csv = cli.out.join("dataset.csv");
    let last = std::sync::atomic::AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        let pct = 100 * done / total.max(1);
        if pct >= last.load(std::sync::atomic::Ordering::Relaxed) + 10 || done == total {
            last.store(pct, std::sync::atomic::Ordering::Relaxed);
            eprintln!("sweep: {done}/{total} runs");
        }
    };
    let res = sweep::run_sweep(
        &scenario,
        &SweepOptions {
            parallelism: a.parallelism,
            output: Some(csv.clone()),
            resume: a.resume,
            progress: Some(&progress),
        },
    )?;
    println!(
        "sweep: {} rows ({} simulated) -> {}",
        res.dataset.rows.len(),
        res.executed,
        csv.display()
    );
    let mut m = RunManifest::new("sweep", cli.config.as_deref(), &res.dataset.fingerprint);
    m.outputs = vec![csv.clone(), sweep::manifest_path_for(&csv)];
    m.timing("sweep", started);
    m.write(&cli.out)
}

fn cmd_train(cli: &Cli, scenario: Option<&ScenarioConfig>, a: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let path = dataset_path(cli, &a.data);
    let (ds, points) = load_dataset(&path, scenario)?;
    let (train, test) = surrogate::split(&points, a.train_fraction, cli.seed)?;
    let dir = cli.out.join("models");
    std::fs::create_dir_all(&dir)?;
    let mut models = Vec::new();
    let mut outputs = Vec::new();
    for kind in ModelKind::ALL {
        for kpi in Kpi::ALL {
            let mut spec = ModelSpec::new(kind, kpi);
            spec.hyper.seed = cli.seed;
            let model = surrogate::fit_points(&spec, &train, &ds.fingerprint)?;
            let p = dir.join(spec.file_name());
            model.save(&p)?;
            outputs.push(p);
            models.push(model);
        }
    }
    let report = surrogate::evaluate(&models, &test, train.len(), cli.seed)?;
    let csv = cli.out.join("eval_report.csv");
    let txt = cli.out.join("eval_report.txt");
    write(&csv, &report.to_csv())?;
    write(&txt, &report.to_table())?;
    print!("{}", report.to_table());
    outputs.extend([csv, txt]);
    let mut m = RunManifest::new("train", cli.config.as_deref(), &ds.fingerprint);
    m.inputs = vec![path];
    m.outputs = outputs;
    m.timing("train", started);
    m.write(&cli.out)
}

fn cmd_sensitivity(cli: &Cli, scenario: Option<&ScenarioConfig>, a: &SensitivityArgs) -> Result<()> {
    let started = Instant::now();
    let (rsrp, hosr, inputs) = load_pair(&models_dir(cli, &a.models), a.models.model.into(), scenario)?;
    let cfg = SobolConfig::cop_box(a.n_base, cli.seed);
    let mut results = Vec::new();
    for model in [&rsrp, &hosr] {
        let ix = sensitivity::model_sensitivity(model, &cfg)?;
        if ix.zero_variance {
            eprintln!("sensitivity: {} surrogate is constant over the box", model.spec.target);
        }
        results.push((model.spec.target, ix));
    }
    let csv = cli.out.join("sobol.csv");
    let text = sensitivity::sobol_csv(&results);
    write(&csv, &text)?;
    print!("{text}");
    let mut m = RunManifest::new("sensitivity", cli.config.as_deref(), &rsrp.fingerprint);
    m.inputs = inputs;
    m.outputs = vec![csv];
    m.timing("sensitivity", started);
    m.write(&cli.out)
}

fn build_objective(
    cli: &Cli,
    scenario: Option<&ScenarioConfig>,
    data: &DatasetArg,
    models: &ModelsArg,
    alpha: f64,
) -> Result<(Objective, Vec<PathBuf>)> {
    let path = dataset_path(cli, data);
    let (ds, points) = load_dataset(&path, scenario)?;
    let (rsrp, hosr, mut inputs) = load_pair(&models_dir(cli, models), models.model.into(), scenario)?;
    guard(&ds.fingerprint, &rsrp.fingerprint)?;
    inputs.insert(0, path);
    let obj = Objective::new(alpha, rsrp, hosr, Normalization::from_points(&points)?)?.covering(&optimizer::standard_grid());
    Ok((obj, inputs))
}

fn cmd_optimize(cli: &Cli, scenario: Option<&ScenarioConfig>, a: &OptimizeArgs) -> Result<()> {
    let started = Instant::now();
    let (obj, inputs) = build_objective(cli, scenario, &a.data, &a.models, a.alpha)?;
    let mut results: Vec<OptResult> = Vec::new();
    let mut outputs = Vec::new();
    let mut m = RunManifest::new("optimize", cli.config.as_deref(), &obj.rsrp_model.fingerprint);
    if a.method != MethodArg::Ga {
        let t = Instant::now();
        results.push(optimizer::brute_force(&optimizer::standard_grid(), &obj)?);
        m.timing("brute", t);
    }
    if a.method != MethodArg::Brute {
        let t = Instant::now();
        results.push(optimizer::ga_optimize(&obj, &GaConfig { seed: cli.seed, ..Default::default() })?);
        m.timing("ga", t);
    }
    for r in &results {
        let p = cli.out.join(format!("opt_{}.json", r.method.as_str()));
        write(&p, &r.to_json()?)?;
        outputs.push(p);
        println!(
            "{:<5} {} objective {:.4} ({} evaluations)",
            r.method.as_str(),
            r.best,
            r.objective,
            r.evaluations
        );
    }
    let cmp = cli.out.join("comparison.csv");
    optimizer::append_comparison(&cmp, &results)?;
    outputs.push(cmp);
    m.inputs = inputs;
    m.outputs = outputs;
    m.timing("optimize", started);
    m.write(&cli.out)
}

fn cmd_report(cli: &Cli, scenario: Option<&ScenarioConfig>, a: &ReportArgs) -> Result<()> {
    let started = Instant::now();
    let ttts: Vec<u32> = if a.ttt == "all" {
        // Dataset maps cover the TTT values actually swept.
        match (a.source, a.kpi) {
            (SourceArg::Dataset, QuantityArg::MeanRsrp | QuantityArg::Hosr) => {
                let (_, points) = load_dataset(&dataset_path(cli, &a.data), scenario)?;
                let mut v: Vec<u32> = points.iter().map(|p| p.cop.ttt_ms).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            _ => a5tune::handover::TTT_VALUES_MS.to_vec(),
        }
    } else {
        vec![a.ttt
            .parse()
            .map_err(|_| Error::Config(format!("--ttt expects a value in ms or \"all\", got {:?}", a.ttt)))?]
    };
    let name = a.kpi.name();
    let axis: Vec<i32> = (a5tune::handover::THRESHOLD_MIN_DBM..=a5tune::handover::THRESHOLD_MAX_DBM).collect();
    let (maps, inputs, fingerprint): (Vec<Heatmap>, Vec<PathBuf>, String) = match (a.source, a.kpi) {
        (_, QuantityArg::Objective) => {
            let (obj, inputs) = build_objective(cli, scenario, &a.data, &a.models, a.alpha)?;
            let maps = ttts
                .iter()
                .map(|&t| Heatmap::from_fn(name, t, axis.clone(), axis.clone(), |c| optimizer::ObjectiveFn::score(&obj, c)))
                .collect();
            (maps, inputs, obj.rsrp_model.fingerprint.clone())
        }
        (SourceArg::Dataset, kpi) => {
            let path = dataset_path(cli, &a.data);
            let (ds, points) = load_dataset(&path, scenario)?;
            let value = move |p: &AggregatedPoint| if kpi == QuantityArg::Hosr { p.hosr_pct } else { p.mean_rsrp_dbm };
            let maps = ttts
                .iter()
                .map(|&t| Heatmap::from_points(name, t, &points, value))
                .collect::<Result<_>>()?;
            (maps, vec![path], ds.fingerprint)
        }
        (SourceArg::Model, kpi) => {
            let (rsrp, hosr, inputs) = load_pair(&models_dir(cli, &a.models), a.models.model.into(), scenario)?;
            let model = if kpi == QuantityArg::Hosr { &hosr } else { &rsrp };
            let maps = ttts
                .iter()
                .map(|&t| Heatmap::from_fn(name, t, axis.clone(), axis.clone(), |c| model.predict(c)))
                .collect();
            (maps, inputs, rsrp.fingerprint.clone())
        }
    };
    let dir = cli.out.join("report");
    let mut outputs = Vec::new();
    for h in &maps {
        let csv = dir.join(format!("{}.csv", h.file_stem()));
        let svg = dir.join(format!("{}.svg", h.file_stem()));
        write(&csv, &h.to_csv())?;
        write(&svg, &h.to_svg())?;
        outputs.extend([csv, svg]);
    }
    println!("report: {} heatmaps in {}", maps.len(), dir.display());
    let mut m = RunManifest::new("report", cli.config.as_deref(), &fingerprint);
    m.inputs = inputs;
    m.outputs = outputs;
    m.timing("report", started);
    m.write(&cli.out)
}
