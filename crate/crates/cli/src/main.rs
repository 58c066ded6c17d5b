//! `wreg` command-line tool.
//!
//! Errors are reported on stderr as one JSON object
//! `{"error": code, "message": text, "exit_code": n}` with exit code 2 for
//! input problems and 3 for numerical or degenerate-design failures.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wreg::io::{self, Dataset, InputFormat, Model, ModelFile, Provenance};
use wreg::sim::study::{convergence_config, median, sample_quantile, CONVERGENCE_NS};
use wreg::sim::{ape_study, awd_study, convergence_study, Case, CoefMode, SimConfig};
use wreg::{DistributionQ, ProbGrid, TruncationChoice};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "wreg", version, about = "Regression and forecasting for distribution-valued data")]
struct Cli {
    /// Worker threads for replicate studies.
    #[arg(long, global = true, env = "WREG_THREADS")]
    threads: Option<usize>,

    /// Probability grid size (at least 16).
    #[arg(long, global = true)]
    grid_m: Option<usize>,

    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a distribution-to-distribution regression.
    FitD2d(FitD2dArgs),
    /// Predict response distributions from a distribution-to-distribution model.
    Predict(PredictArgs),
    /// Fit a distribution-to-scalar regression.
    FitD2s(FitD2sArgs),
    /// Predict scalars from a distribution-to-scalar model.
    PredictD2s(PredictD2sArgs),
    /// Fit a first-order autoregression to a distribution time series.
    FitAr(FitArArgs),
    /// Forecast from an autoregressive model.
    Forecast(ForecastArgs),
    /// Run a replicate study on simulated data.
    Simulate(SimulateArgs),
    /// Estimation error against sample size on the power-law construction.
    Convergence(ConvergenceArgs),
    /// Pairwise Wasserstein distance matrix.
    Wdist(WdistArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Layout of distribution files: `long` (unit_id,value) or `wide` (quantile rows).
    #[arg(long, default_value = "long")]
    format: InputFormat,
}

#[derive(Debug, Args)]
struct FitD2dArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// `fve[:level]`, `cv[:folds|loo]` or `fixed:J[,K]`.
    #[arg(long)]
    trunc: Option<TruncationChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: PathBuf,
    /// Observed responses; when given, the mean distance to them is reported.
    #[arg(long)]
    y: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitD2sArgs {
    #[arg(long)]
    x: PathBuf,
    /// CSV of `unit_id,y`.
    #[arg(long)]
    y: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    trunc: Option<TruncationChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictD2sArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArArgs {
    /// Series file; units are time points, ordered numerically when every id is a number.
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Fraction of the series used for selecting the truncation.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    trunc: Option<TruncationChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    /// `last` for the final series element, or a file holding one distribution.
    #[arg(long, default_value = "last")]
    start: String,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    case: Option<Case>,
    #[arg(long)]
    n: Option<usize>,
    /// Measurements per distribution, or `inf` for exact quantiles.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n_new: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `fig1` or `powerlaw`.
    #[arg(long)]
    coef: Option<String>,
    /// Turn off the random response distortion.
    #[arg(long)]
    no_distortion: bool,
    #[arg(long)]
    trunc: Option<TruncationChoice>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation used on both sides.
    #[arg(long)]
    j: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WdistArgs {
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn classify(err: &anyhow::Error) -> (&'static str, i32) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<wreg::Error>() {
            return (e.code(), e.exit_code());
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", 2);
        }
    }
    ("invalid-input", 2)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let (code, exit_code) = classify(&err);
        let report = ErrorReport {
            error: code,
            message: format!("{err:#}"),
            exit_code,
        };
        eprintln!("{}", serde_json::to_string(&report).expect("serializable report"));
        std::process::exit(exit_code);
    }
}

/// Settings shared by all subcommands after merging the config file.
struct Ctx {
    grid_m: usize,
    file: FileConfig,
}

impl Ctx {
    fn grid(&self) -> anyhow::Result<Arc<ProbGrid>> {
        Ok(Arc::new(ProbGrid::midpoint(self.grid_m)?))
    }

    fn trunc(&self, flag: Option<TruncationChoice>, seed: Option<u64>, default: TruncationChoice) -> anyhow::Result<TruncationChoice> {
        let t = match (flag, &self.file.trunc) {
            (Some(t), _) => t,
            (None, Some(s)) => s.parse()?,
            (None, None) => default,
        };
        Ok(t.with_seed(self.seed(seed)))
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(0)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(wreg::Error::InvalidInput("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let grid_m = cli.grid_m.or(file.grid_m).unwrap_or(wreg::DEFAULT_GRID_SIZE);
    if grid_m < 16 {
        return Err(wreg::Error::InvalidInput(format!("grid size must be at least 16, got {grid_m}")).into());
    }
    let ctx = Ctx { grid_m, file };
    match cli.command {
        Command::FitD2d(a) => fit_d2d(&ctx, a),
        Command::Predict(a) => predict(a),
        Command::FitD2s(a) => fit_d2s(&ctx, a),
        Command::PredictD2s(a) => predict_d2s(a),
        Command::FitAr(a) => fit_ar(&ctx, a),
        Command::Forecast(a) => forecast(a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Convergence(a) => convergence(&ctx, a),
        Command::Wdist(a) => wdist(&ctx, a),
    }
}

fn read(path: &Path, format: InputFormat, grid: &Arc<ProbGrid>) -> anyhow::Result<Dataset> {
    io::ingest(path, format, grid).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Reorders `y` to follow the ids of `x`.
fn paired(x: &Dataset, y: Dataset) -> anyhow::Result<Vec<DistributionQ>> {
    let pairs: Vec<(String, DistributionQ)> = y.ids.into_iter().zip(y.dists).collect();
    Ok(io::align_by_id(&x.ids, &pairs)?)
}

fn mean_distance(a: &[DistributionQ], b: &[DistributionQ]) -> anyhow::Result<f64> {
    Ok(wreg::d2d::average_wasserstein(a, b)?)
}

#[derive(Serialize)]
struct FitSummary {
    kind: &'static str,
    n: usize,
    grid_m: usize,
    j: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    /// In-sample mean distance between fitted and observed responses.
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_wd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout_wd: Option<f64>,
    config_hash: String,
}

fn provenance<T: Serialize>(seed: u64, settings: &T) -> anyhow::Result<Provenance> {
    Ok(Provenance {
        seed,
        config_hash: io::config_hash(settings)?,
    })
}

fn fit_d2d(ctx: &Ctx, a: FitD2dArgs) -> anyhow::Result<()> {
    let grid = ctx.grid()?;
    let x = read(&a.x, a.input.format, &grid)?;
    let y = read(&a.y, a.input.format, &grid)?;
    let ys = paired(&x, y)?;
    let trunc = ctx.trunc(a.trunc, a.seed, TruncationChoice::default())?;
    let fit = wreg::fit_d2d(&x.dists, &ys, &trunc)?;
    let fitted: Vec<DistributionQ> = x
        .dists
        .iter()
        .map(|d| fit.predict(d).map(|p| p.dist))
        .collect::<wreg::Result<_>>()?;
    let prov = provenance(trunc.seed, &("fit-d2d", ctx.grid_m, trunc, &x.ids))?;
    let summary = FitSummary {
        kind: "d2d",
        n: x.len(),
        grid_m: ctx.grid_m,
        j: fit.j(),
        k: Some(fit.k()),
        empirical_wd: Some(mean_distance(&fitted, &ys)?),
        holdout_wd: None,
        config_hash: prov.config_hash.clone(),
    };
    ModelFile::new(Model::D2d(fit), prov).save(&a.out)?;
    print_json(&summary)
}

fn load(path: &Path) -> anyhow::Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn wrong_kind(expected: &str, got: &Model) -> anyhow::Error {
    wreg::Error::InvalidInput(format!("expected a {expected} model, found {}", got.kind())).into()
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let mf = load(&a.model)?;
    let Model::D2d(fit) = &mf.model else {
        return Err(wrong_kind("d2d", &mf.model));
    };
    let grid = Arc::clone(fit.predictor_mean().mean.grid());
    let x = read(&a.x, a.input.format, &grid)?;
    let mut dists = Vec::with_capacity(x.len());
    let mut etas = Vec::with_capacity(x.len());
    for d in &x.dists {
        let (p, eta) = wreg::predict_d2d(fit, d)?;
        dists.push(p);
        etas.push(eta);
    }
    io::emit_quantiles(&a.out, &x.ids, &dists, Some(&etas))?;
    let empirical_wd = match &a.y {
        Some(path) => Some(mean_distance(&dists, &paired(&x, read(path, a.input.format, &grid)?)?)?),
        None => None,
    };
    #[derive(Serialize)]
    struct Summary {
        predictions: usize,
        projected: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        empirical_wd: Option<f64>,
    }
    print_json(&Summary {
        predictions: dists.len(),
        projected: etas.iter().filter(|&&e| e < 1.0).count(),
        empirical_wd,
    })
}

fn fit_d2s(ctx: &Ctx, a: FitD2sArgs) -> anyhow::Result<()> {
    let grid = ctx.grid()?;
    let x = read(&a.x, a.input.format, &grid)?;
    let y = io::align_by_id(&x.ids, &io::read_scalars(&a.y).with_context(|| format!("reading {}", a.y.display()))?)?;
    let trunc = ctx.trunc(a.trunc, a.seed, TruncationChoice::cv(None))?;
    let fit = wreg::fit_d2s(&x.dists, &y, &trunc)?;
    let prov = provenance(trunc.seed, &("fit-d2s", ctx.grid_m, trunc, &x.ids))?;
    let summary = FitSummary {
        kind: "d2s",
        n: x.len(),
        grid_m: ctx.grid_m,
        j: fit.j(),
        k: None,
        empirical_wd: None,
        holdout_wd: None,
        config_hash: prov.config_hash.clone(),
    };
    ModelFile::new(Model::D2s(fit), prov).save(&a.out)?;
    print_json(&summary)
}

fn predict_d2s(a: PredictD2sArgs) -> anyhow::Result<()> {
    let mf = load(&a.model)?;
    let Model::D2s(fit) = &mf.model else {
        return Err(wrong_kind("d2s", &mf.model));
    };
    let grid = Arc::clone(fit.predictor_mean().mean.grid());
    let x = read(&a.x, a.input.format, &grid)?;
    #[derive(Serialize)]
    struct Row<'a> {
        unit_id: &'a str,
        prediction: f64,
    }
    let rows = x
        .ids
        .iter()
        .zip(&x.dists)
        .map(|(id, d)| Ok(Row { unit_id: id, prediction: fit.predict(d)? }))
        .collect::<wreg::Result<Vec<_>>>()?;
    io::write_records(create(&a.out)?, &rows)?;
    Ok(())
}

/// Sorts a series by numeric time labels when every label is numeric.
fn time_ordered(mut ds: Dataset) -> Dataset {
    let keys: Option<Vec<f64>> = ds.ids.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(keys) = keys {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        ds = Dataset {
            ids: idx.iter().map(|&i| ds.ids[i].clone()).collect(),
            dists: idx.iter().map(|&i| ds.dists[i].clone()).collect(),
        };
    }
    ds
}

fn fit_ar(ctx: &Ctx, a: FitArArgs) -> anyhow::Result<()> {
    let grid = ctx.grid()?;
    let series = time_ordered(read(&a.series, a.input.format, &grid)?);
    let split = a.split.or(ctx.file.split).unwrap_or(wreg::war::DEFAULT_SPLIT);
    let trunc = ctx.trunc(a.trunc, a.seed, TruncationChoice::cv(None))?;
    let fit = wreg::war::fit_ar_with_split(&series.dists, &trunc, split)?;
    let prov = provenance(trunc.seed, &("fit-ar", ctx.grid_m, trunc, split.to_bits(), &series.ids))?;
    let summary = FitSummary {
        kind: "ar",
        n: series.len(),
        grid_m: ctx.grid_m,
        j: fit.j(),
        k: None,
        empirical_wd: None,
        holdout_wd: fit.holdout_error(),
        config_hash: prov.config_hash.clone(),
    };
    ModelFile::new(Model::Ar(fit), prov).save(&a.out)?;
    print_json(&summary)
}

fn forecast(a: ForecastArgs) -> anyhow::Result<()> {
    let mf = load(&a.model)?;
    let Model::Ar(fit) = &mf.model else {
        return Err(wrong_kind("ar", &mf.model));
    };
    let start = if a.start == "last" {
        fit.last().clone()
    } else {
        let grid = Arc::clone(fit.mean().mean.grid());
        let ds = time_ordered(read(Path::new(&a.start), a.input.format, &grid)?);
        ds.dists.last().cloned().ok_or_else(|| anyhow!("start file holds no distribution"))?
    };
    let steps = wreg::forecast_rolling(fit, &start, a.horizon)?;
    let ids: Vec<String> = (1..=steps.len()).map(|h| h.to_string()).collect();
    let (dists, etas): (Vec<DistributionQ>, Vec<f64>) = steps.into_iter().unzip();
    io::emit_quantiles(&a.out, &ids, &dists, Some(&etas))?;
    Ok(())
}

fn parse_m(s: &str) -> anyhow::Result<Option<usize>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "exact" => Ok(None),
        v => Ok(Some(v.parse().map_err(|_| {
            wreg::Error::InvalidInput(format!("--m must be a count or 'inf', got '{s}'"))
        })?)),
    }
}

fn parse_coef(s: &str) -> anyhow::Result<CoefMode> {
    match s {
        "fig1" => Ok(CoefMode::Fig1),
        "powerlaw" => Ok(CoefMode::powerlaw_default()),
        _ => bail!(wreg::Error::InvalidInput(format!("unknown coefficient mode '{s}'"))),
    }
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    #[serde(flatten)]
    row: &'a T,
    grid_m: usize,
    config_hash: &'a str,
}

fn write_tagged<T: Serialize>(path: &Path, rows: &[T], grid_m: usize, hash: &str) -> anyhow::Result<()> {
    let tagged: Vec<Tagged<T>> = rows
        .iter()
        .map(|row| Tagged { row, grid_m, config_hash: hash })
        .collect();
    // csv cannot serialize flattened structs, so go through ordered JSON objects
    let mut wtr = csv::WriterBuilder::new().from_writer(create(path)?);
    let mut header_done = false;
    for t in &tagged {
        let v = serde_json::to_value(t)?;
        let obj = v.as_object().ok_or_else(|| anyhow!("row is not a record"))?;
        if !header_done {
            wtr.write_record(obj.keys())?;
            header_done = true;
        }
        wtr.write_record(obj.values().map(|x| match x {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }))?;
    }
    wtr.flush()?;
    Ok(())
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.simulation.clone().unwrap_or_default();
    if let Some(c) = a.case {
        let base = SimConfig::new(c);
        cfg.case = c;
        if ctx.file.trunc.is_none() && ctx.file.simulation.is_none() {
            cfg.trunc = base.trunc;
        }
    }
    cfg.grid_m = ctx.grid_m;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(m) = &a.m {
        cfg.m = parse_m(m)?;
    }
    if let Some(v) = a.n_new {
        cfg.n_new = v;
    }
    if let Some(v) = a.replicates {
        cfg.replicates = v;
    }
    cfg.seed = a.seed.or(ctx.file.seed).unwrap_or(cfg.seed);
    if let Some(c) = &a.coef {
        cfg.coef = parse_coef(c)?;
    }
    if a.no_distortion {
        cfg.distortion = false;
    }
    cfg.trunc = ctx.trunc(a.trunc, None, cfg.trunc)?.with_seed(cfg.trunc.seed);
    cfg.validate()?;
    let hash = io::config_hash(&cfg)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        case: Case,
        metric: &'a str,
        replicates: usize,
        grid_m: usize,
        config_hash: &'a str,
        q1: f64,
        median: f64,
        q3: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        eta_event_rate: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        feasibility_violations: Option<usize>,
    }
    let (metric, values, eta_rate, violations) = if cfg.case.is_scalar() {
        let recs = ape_study(&cfg)?;
        write_tagged(&a.out, &recs, cfg.grid_m, &hash)?;
        ("ape", recs.iter().map(|r| r.ape).collect::<Vec<_>>(), None, None)
    } else {
        let st = awd_study(&cfg)?;
        write_tagged(&a.out, &st.records, cfg.grid_m, &hash)?;
        ("awd", st.awds(), Some(st.eta_event_rate()), Some(st.audit.violations))
    };
    print_json(&Summary {
        case: cfg.case,
        metric,
        replicates: values.len(),
        grid_m: cfg.grid_m,
        config_hash: &hash,
        q1: sample_quantile(&values, 0.25),
        median: median(&values),
        q3: sample_quantile(&values, 0.75),
        eta_event_rate: eta_rate,
        feasibility_violations: violations,
    })
}

fn convergence(ctx: &Ctx, a: ConvergenceArgs) -> anyhow::Result<()> {
    let mut cfg = convergence_config(a.replicates, a.seed.or(ctx.file.seed).unwrap_or(0));
    cfg.grid_m = ctx.grid_m;
    if let Some(j) = a.j {
        cfg.trunc = TruncationChoice::fixed(j, j);
    }
    cfg.validate()?;
    let ns = a.ns.unwrap_or_else(|| CONVERGENCE_NS.to_vec());
    let hash = io::config_hash(&(&cfg, &ns))?;
    let st = convergence_study(&cfg, &ns)?;
    write_tagged(&a.out, &st.rows, cfg.grid_m, &hash)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        slope: f64,
        j: usize,
        grid_m: usize,
        config_hash: &'a str,
    }
    print_json(&Summary {
        slope: st.slope,
        j: st.j,
        grid_m: cfg.grid_m,
        config_hash: &hash,
    })
}

fn wdist(ctx: &Ctx, a: WdistArgs) -> anyhow::Result<()> {
    let grid = ctx.grid()?;
    let ds = read(&a.x, a.input.format, &grid)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["unit_id".to_string()];
    header.extend(ds.ids.iter().cloned());
    w.write_record(&header)?;
    for (id, a_) in ds.ids.iter().zip(&ds.dists) {
        let mut row = vec![id.clone()];
        for b in &ds.dists {
            row.push(wreg::wasserstein_distance(a_, b)?.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut inner = w.into_inner().map_err(|e| anyhow!("flushing output: {e}"))?;
    inner.flush()?;
    Ok(())
}
