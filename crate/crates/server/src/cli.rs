//! `muqar` subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use muqar_core::eval::{topsis_rank, CriteriaMatrix, MetricReport, TopsisReport};
use muqar_core::experiment::{evaluate, mean_baseline_mae, prepare_dataset, ExampleShape};
use muqar_core::forecast::{train_model, ModelConfig, QarConfig, TrainConfig};
use muqar_core::synth::{generate_world, WorldSpec};
use muqar_core::taxonomy::Taxonomy;
use muqar_core::trend::{
    ingest_csv, ingest_jsonl, write_csv, write_jsonl, IngestOptions, IngestReport, TrendStore,
};

use crate::api::{router, AppState};
use crate::config::{
    parse_architecture, parse_qar_kind, pick, FileConfig, DEFAULT_LISTEN, DEFAULT_REGISTRY,
    DEFAULT_TAXONOMY, DEFAULT_TREND_STORE,
};
use crate::registry::Registry;

/// Published ablation results, ranked by `topsis-report` when no
/// matrix is given.
pub const PUBLISHED_ABLATION: &str = include_str!("../data/published_ablation.json");

#[derive(Debug, Parser)]
#[command(name = "muqar", version, about = "Garment popularity forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a record file and store it in the registry.
    Train(TrainArgs),
    /// Score a stored model on the test split of a record file.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic taxonomy, world spec and record file.
    GenerateSynthetic(SynthArgs),
    /// Rank alternatives of a criteria matrix with TOPSIS.
    TopsisReport(TopsisArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, env = "MUQAR_SEED")]
    pub seed: Option<u64>,
    /// TOML settings file.
    #[arg(long, env = "MUQAR_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, env = "MUQAR_TAXONOMY")]
    pub taxonomy: Option<PathBuf>,
    /// Record file (`.csv` or `.jsonl`).
    #[arg(long, env = "MUQAR_TREND_STORE")]
    pub records: Option<PathBuf>,
    #[arg(long, env = "MUQAR_REGISTRY_DIR")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Registry version name for the trained model.
    #[arg(long)]
    pub version: String,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub qar_kind: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub a_max: Option<usize>,
    /// Train per demographic stratum (records must carry strata).
    #[arg(long)]
    pub demographic: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "MUQAR_MODEL_VERSION")]
    pub version: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "MUQAR_LISTEN")]
    pub listen: Option<String>,
    /// Version to activate at startup.
    #[arg(long, env = "MUQAR_MODEL_VERSION")]
    pub model_version: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub garments: Option<usize>,
    #[arg(long)]
    pub weeks: Option<usize>,
    /// One record per demographic stratum.
    #[arg(long)]
    pub demographics: Option<bool>,
    /// `csv` or `jsonl`.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TopsisArgs {
    #[command(flatten)]
    pub common: Common,
    /// Criteria matrix JSON; defaults to the bundled ablation table.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Serve(a) => serve(a),
        Command::GenerateSynthetic(a) => generate(a),
        Command::TopsisReport(a) => topsis(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

struct Paths {
    taxonomy: PathBuf,
    records: PathBuf,
    registry: PathBuf,
}

fn paths(data: DataArgs, file: &FileConfig) -> Paths {
    Paths {
        taxonomy: pick(data.taxonomy, file.taxonomy.clone(), DEFAULT_TAXONOMY.into()),
        records: pick(data.records, file.trend_store.clone(), DEFAULT_TREND_STORE.into()),
        registry: pick(data.registry, file.registry_dir.clone(), DEFAULT_REGISTRY.into()),
    }
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading taxonomy {}", path.display()))?;
    Taxonomy::from_json(&text).with_context(|| format!("taxonomy {}", path.display()))
}

/// Ingest a `.csv` or `.jsonl` record file.
pub fn load_store(path: &Path, taxonomy: &Taxonomy) -> Result<(TrendStore, IngestReport)> {
    let f = File::open(path).with_context(|| format!("opening records {}", path.display()))?;
    let opts = IngestOptions::default();
    let res = if path.extension().is_some_and(|e| e == "jsonl") {
        ingest_jsonl(BufReader::new(f), taxonomy, &opts)
    } else {
        ingest_csv(f, taxonomy, &opts)
    };
    let (store, report) = res.with_context(|| format!("ingesting {}", path.display()))?;
    if !report.bad_rows.is_empty() {
        tracing::warn!(
            bad = report.bad_rows.len(),
            first = %report.bad_rows[0].reason,
            "skipped unparseable rows"
        );
    }
    Ok((store, report))
}

fn feature_dim(store: &TrendStore) -> usize {
    store
        .records()
        .iter()
        .find_map(|r| r.features.as_ref().map(Vec::len))
        .unwrap_or(0)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    version: String,
    path: PathBuf,
    epochs_run: usize,
    best_epoch: usize,
    best_val_mae: Option<f64>,
    examples: [usize; 3],
    test: Option<MetricReport>,
    mean_baseline_test_mae: Option<f64>,
}

fn train(a: TrainArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let t = &file.train;
    let seed = pick(a.common.seed, file.seed, 0);
    let p = paths(a.data, &file);
    let architecture = parse_architecture(&pick(a.architecture, t.architecture.clone(), "muqar".into()))?;
    let kind = parse_qar_kind(&pick(a.qar_kind, t.qar_kind.clone(), "lstm".into()))?;
    let tax = load_taxonomy(&p.taxonomy)?;
    let (store, ingest) = load_store(&p.records, &tax)?;

    let mut config = ModelConfig::new(
        architecture,
        feature_dim(&store),
        tax.num_categories(),
        tax.num_attributes(),
    );
    config.qar = QarConfig::new(kind);
    config.qar.n = pick(a.n, t.n, config.qar.n);
    config.qar.a_max = pick(a.a_max, t.a_max, config.qar.a_max);
    config.k = pick(a.k, t.k, config.k);
    config.demographic = pick(a.demographic, t.demographic, false);
    let schedule = TrainConfig {
        epochs: pick(a.epochs, t.epochs, TrainConfig::default().epochs),
        batch_size: pick(a.batch_size, t.batch_size, TrainConfig::default().batch_size),
        learning_rate: pick(a.learning_rate, t.learning_rate, TrainConfig::default().learning_rate),
        seed,
        patience: a.patience.or(t.patience).or(TrainConfig::default().patience),
        target_loss: None,
    };
    let shape = ExampleShape {
        n: config.qar.n,
        k: config.k,
        a_max: config.qar.a_max,
        feature_dim: config.feature_dim,
    };
    let data = prepare_dataset(&store, shape)?;
    tracing::info!(
        train = data.train.len(),
        validation = data.validation.len(),
        test = data.test.len(),
        "dataset ready"
    );
    let (mut model, report) = train_model(config, &tax, &data.train, &data.validation, &schedule)?;
    model.meta_mut().normalization = ingest.normalization;
    let path = Registry::new(&p.registry).save(&mut model, &a.version)?;
    let test = if data.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, &data.test, "test")?)
    };
    print_json(&TrainSummary {
        version: a.version,
        path,
        epochs_run: report.curve.len(),
        best_epoch: report.best_epoch,
        best_val_mae: report.best_val_mae(),
        examples: [data.train.len(), data.validation.len(), data.test.len()],
        test,
        mean_baseline_test_mae: mean_baseline_mae(&data.train, &data.test),
    })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let version = a
        .version
        .or(file.model_version.clone())
        .context("no model version given (--version or MUQAR_MODEL_VERSION)")?;
    let p = paths(a.data, &file);
    let tax = load_taxonomy(&p.taxonomy)?;
    let (store, _) = load_store(&p.records, &tax)?;
    let model = Registry::new(&p.registry)
        .load(&version, &tax.hash())?
        .with_context(|| format!("no model version '{version}' in {}", p.registry.display()))?;
    let cfg = model.config();
    let shape = ExampleShape {
        n: cfg.qar.n,
        k: cfg.k,
        a_max: cfg.qar.a_max,
        feature_dim: cfg.feature_dim,
    };
    let data = prepare_dataset(&store, shape)?;
    if data.test.is_empty() {
        bail!("the test split produced no examples");
    }
    print_json(&evaluate(&model, &data.test, "test")?)
}

fn serve(a: ServeArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let listen = pick(a.listen, file.listen.clone(), DEFAULT_LISTEN.into());
    let version = a.model_version.or(file.model_version.clone());
    let p = paths(a.data, &file);
    let tax = load_taxonomy(&p.taxonomy)?;
    let (store, _) = load_store(&p.records, &tax)?;
    let state = Arc::new(AppState::new(store, Registry::new(&p.registry))?);
    if let Some(v) = version {
        state
            .activate(&v)
            .map_err(|e| anyhow::anyhow!("activating '{v}': {}", e.body.message))?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn generate(a: SynthArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let s = &file.synthetic;
    let seed = pick(a.common.seed, file.seed, 0);
    let out = pick(a.out_dir, s.out_dir.clone(), PathBuf::from("."));
    let format = pick(a.format, s.format.clone(), "csv".into());
    if format != "csv" && format != "jsonl" {
        bail!("format must be csv or jsonl, got '{format}'");
    }
    let mut spec = WorldSpec::new(seed);
    spec.garments = pick(a.garments, s.garments, spec.garments);
    spec.weeks = pick(a.weeks, s.weeks, spec.weeks);
    spec.demographics = pick(a.demographics, s.demographics, spec.demographics);
    let world = generate_world(&spec)?;
    let (_, records) = world.sample_garments(spec.garments, seed);

    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("taxonomy.json"), world.taxonomy().to_json())?;
    std::fs::write(out.join("world.json"), serde_json::to_string_pretty(&spec)?)?;
    let records_path = out.join(format!("records.{format}"));
    let w = BufWriter::new(File::create(&records_path)?);
    if format == "csv" {
        write_csv(&records, world.taxonomy(), w)?;
    } else {
        write_jsonl(&records, world.taxonomy(), w)?;
    }
    print_json(&serde_json::json!({
        "taxonomy": out.join("taxonomy.json"),
        "world": out.join("world.json"),
        "records": records_path,
        "record_count": records.len(),
        "taxonomy_hash": world.taxonomy().hash(),
    }))
}

/// Rank the rows of a criteria matrix (JSON text).
pub fn topsis_from_json(text: &str) -> Result<TopsisReport> {
    let m: CriteriaMatrix = serde_json::from_str(text).context("criteria matrix")?;
    Ok(topsis_rank(&m)?)
}

fn topsis(a: TopsisArgs) -> Result<()> {
    let text = match &a.matrix {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => PUBLISHED_ABLATION.to_string(),
    };
    print_json(&topsis_from_json(&text)?)
}
