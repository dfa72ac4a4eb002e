use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use enspost::artifact::{FitMetadata, ModelArtifact};
use enspost::boosting::{BoostConfig, StoppingRule};
use enspost::data::{filter_period, load_csv, save_csv, DateRange, FeatureSpec, ForecastDataset};
use enspost::evaluation::{evaluate, write_atomic, EvaluationOptions, Table};
use enspost::importance::{permutation_importance, PermutationPlan};
use enspost::models::{fit_model, FitSettings, ModelKind, NetworkSettings, Prediction};
use enspost::qrf::QrfConfig;
use enspost::synthetic::{generate_synthetic, SyntheticConfig};
use enspost::verification::{DEFAULT_DM_LAG, DEFAULT_PIT_BINS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] enspost::Error),
}

impl From<enspost::data::DataError> for CliError {
    fn from(e: enspost::data::DataError) -> Self {
        CliError::Core(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "enspost", version, about = "Post-process ensemble temperature forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic forecast archive as CSV.
    Generate(GenerateArgs),
    /// Fit one model and save it as an artifact.
    Train(TrainArgs),
    /// Write predictions of a saved model for a dataset.
    Predict(PredictArgs),
    /// Score saved models and the raw ensemble on a validation set.
    Evaluate(EvaluateArgs),
    /// Permutation feature importance of a saved model.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub stations: usize,
    #[arg(long, default_value_t = 730)]
    pub days: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "2015-01-01")]
    pub start_date: NaiveDate,
    #[arg(long, default_value_t = 1.0)]
    pub bias_amplitude: f64,
    #[arg(long, default_value_t = 1.5)]
    pub nonlinearity_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    pub station_bias_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub underdispersion: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 10)]
    pub members: usize,
    /// Print the resolved settings as JSON and exit.
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DataSelection {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// First verification date to use (inclusive).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last verification date to use (inclusive).
    #[arg(long)]
    pub to: Option<NaiveDate>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// emos-gl, emos-loc, emos-loc-bst, qrf, fcn, fcn-aux, fcn-emb, fcn-aux-emb, nn-aux, nn-aux-emb
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub data: DataSelection,
    #[arg(long)]
    pub out: PathBuf,
    /// Read only t2m_mean and t2m_std instead of the full predictor set.
    #[arg(long)]
    pub t2m_only: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub boost_max_iter: usize,
    #[arg(long, default_value_t = 0.05)]
    pub boost_step: f64,
    /// Run all boosting iterations instead of stopping on AIC.
    #[arg(long)]
    pub boost_no_aic: bool,
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    #[arg(long, default_value_t = 10)]
    pub min_leaf: usize,
    /// Features tried per split; defaults to half the predictors.
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 51)]
    pub quantiles: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub emb: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Print the resolved settings as JSON and exit.
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSelection,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Model artifacts to compare.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataSelection,
    /// CRPSS reference models (model names or raw-ensemble).
    #[arg(long = "reference", num_args = 1..)]
    pub references: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_DM_LAG)]
    pub dm_lag: usize,
    #[arg(long, default_value_t = DEFAULT_PIT_BINS)]
    pub pit_bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write permutation importance tables for every model.
    #[arg(long)]
    pub importance: bool,
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataSelection,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file prefix; writes <out>.csv and <out>.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub print_config: bool,
}

fn print_config<T: Serialize>(args: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(args).map_err(enspost::Error::from)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Importance(a) => importance(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        stations: a.stations,
        days: a.days,
        seed: a.seed,
        bias_amplitude: a.bias_amplitude,
        nonlinearity_amplitude: a.nonlinearity_amplitude,
        station_bias_scale: a.station_bias_scale,
        underdispersion_factor: a.underdispersion,
        noise_scale: a.noise_scale,
        members: a.members,
        start_date: a.start_date,
    };
    if a.print_config {
        return print_config(&cfg);
    }
    let ds = generate_synthetic(&cfg)?;
    save_csv(&ds, &a.out)?;
    println!(
        "wrote {} rows ({} stations x {} days, seed {}) to {}",
        ds.len(),
        cfg.stations,
        cfg.days,
        cfg.seed,
        a.out.display()
    );
    println!("{}", serde_json::to_string(&cfg).map_err(enspost::Error::from)?);
    Ok(())
}

fn load(sel: &DataSelection, spec: &FeatureSpec) -> Result<ForecastDataset> {
    if let (Some(from), Some(to)) = (sel.from, sel.to) {
        if from > to {
            return Err(CliError::Usage(format!("--from {from} is after --to {to}")));
        }
    }
    let outcome = load_csv(&sel.data, spec).inspect_err(|_| log::error!("cannot read {}", sel.data.display()))?;
    if outcome.dropped > 0 {
        log::warn!("{}: dropped {} rows with missing values", sel.data.display(), outcome.dropped);
    }
    let ds = outcome.dataset;
    if sel.from.is_none() && sel.to.is_none() {
        return Ok(ds);
    }
    let range = DateRange::new(sel.from.unwrap_or(NaiveDate::MIN), sel.to.unwrap_or(NaiveDate::MAX));
    let filtered = filter_period(&ds, range);
    if filtered.is_empty() {
        return Err(CliError::Core(enspost::data::DataError::EmptyDataset.into()));
    }
    Ok(filtered)
}

fn settings_from(a: &TrainArgs) -> FitSettings {
    FitSettings {
        seed: a.seed,
        boost: BoostConfig {
            max_iter: a.boost_max_iter,
            step: a.boost_step,
            stop: if a.boost_no_aic { StoppingRule::MaxIter } else { StoppingRule::Aic },
        },
        qrf: QrfConfig {
            n_trees: a.trees,
            min_leaf_size: a.min_leaf,
            mtry: a.mtry,
            seed: a.seed,
            ..QrfConfig::default()
        },
        quantile_count: a.quantiles,
        network: NetworkSettings {
            hidden_nodes: a.hidden,
            n_emb: a.emb,
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch,
            run_count: a.runs,
            early_stop_fraction: a.holdout,
            patience: a.patience,
        },
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let kind: ModelKind = a.model.parse()?;
    let settings = settings_from(&a);
    if a.print_config {
        #[derive(Serialize)]
        struct Resolved<'a> {
            model: &'a str,
            data: &'a DataSelection,
            settings: &'a FitSettings,
        }
        return print_config(&Resolved {
            model: kind.name(),
            data: &a.data,
            settings: &settings,
        });
    }
    let spec = if a.t2m_only { FeatureSpec::t2m_only() } else { FeatureSpec::full() };
    let ds = load(&a.data, &spec)?;
    let start = Instant::now();
    let model = fit_model(kind, &ds, &settings)?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!("fitted {kind} on {} samples in {seconds:.2} s", ds.len());
    let art = ModelArtifact::new(
        model,
        FitMetadata {
            training_range: ds.date_range(),
            training_samples: ds.len(),
            fit_seconds: seconds,
            settings,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    );
    art.save(&a.out)?;
    println!("saved {kind} ({} parameters) to {}", art.model.parameter_count(), a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    if a.print_config {
        return print_config(&a);
    }
    let art = ModelArtifact::load(&a.model)?;
    let ds = load(&a.data, &art.model.feature_spec)?;
    let preds = art.model.predict_dataset(&ds)?;
    let mut headers = vec!["station_id".to_string(), "valid_time".into(), "obs".into()];
    match preds.first() {
        Some(Prediction::Quantiles(q)) => headers.extend(q.levels().iter().map(|l| format!("q{l:.4}"))),
        _ => headers.extend(["mu".to_string(), "sigma".into()]),
    }
    let mut t = Table::new(headers);
    for (s, p) in ds.samples().iter().zip(&preds) {
        let mut row = vec![s.station_id.to_string(), s.valid_time.to_string(), s.observation.to_string()];
        match p {
            Prediction::Gaussian(f) => row.extend([f.mu().to_string(), f.sigma().to_string()]),
            Prediction::Quantiles(q) => row.extend(q.values().iter().map(|v| v.to_string())),
        }
        t.push(row);
    }
    write_atomic(&a.out, &t.to_csv())?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn load_artifacts(paths: &[PathBuf]) -> Result<Vec<ModelArtifact>> {
    let arts: Vec<ModelArtifact> = paths.iter().map(ModelArtifact::load).collect::<std::result::Result<_, _>>()?;
    if let Some(first) = arts.first() {
        if arts.iter().any(|a| a.model.feature_spec != first.model.feature_spec) {
            return Err(CliError::Core(enspost::Error::FeatureMismatch));
        }
    }
    Ok(arts)
}

fn write_tables(prefix: &Path, table_text: &str, table_csv: &str) -> Result<()> {
    let with_ext = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    write_atomic(&with_ext(".txt"), table_text)?;
    write_atomic(&with_ext(".csv"), table_csv)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    if a.print_config {
        return print_config(&a);
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let arts = load_artifacts(&a.models)?;
    let ds = load(&a.data, &arts[0].model.feature_spec)?;
    let mut forecasts = Vec::with_capacity(arts.len());
    for art in &arts {
        forecasts.push((art.family.clone(), art.model.predict_dataset(&ds)?));
    }
    let opts = EvaluationOptions {
        references: a.references.clone(),
        alpha: a.alpha,
        dm_lag: a.dm_lag,
        pit_bins: a.pit_bins,
        seed: a.seed,
    };
    let mut report = evaluate(&ds, &forecasts, &opts)?;
    report.runtimes = arts.iter().map(|x| (x.family.clone(), x.metadata.fit_seconds)).collect();
    let files = report.write_to_dir(&a.out_dir)?;
    print!("{}", report.crps_table().to_text());
    if a.importance {
        for art in &arts {
            let r = permutation_importance(&art.model, &ds, &PermutationPlan::new(ds.len(), a.seed))?;
            write_tables(&a.out_dir.join(format!("importance_{}", art.family)), &r.to_text(), &r.to_csv())?;
        }
    }
    log::info!("wrote {} report files to {}", files.len(), a.out_dir.display());
    Ok(())
}

fn importance(a: ImportanceArgs) -> Result<()> {
    if a.print_config {
        return print_config(&a);
    }
    let art = ModelArtifact::load(&a.model)?;
    let ds = load(&a.data, &art.model.feature_spec)?;
    let report = permutation_importance(&art.model, &ds, &PermutationPlan::new(ds.len(), a.seed))?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_tables(&a.out, &report.to_text(), &report.to_csv())?;
    print!("{}", report.to_text());
    Ok(())
}
