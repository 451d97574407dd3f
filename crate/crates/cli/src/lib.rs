//! `rarecast` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use rarecast::data::{load_dataset, split_dataset, split_indices, Dataset};
use rarecast::enrich::{enrich_dataset, enrichment_provider, EnrichmentCache};
use rarecast::evalkit::{
    default_grid, evaluate, run_ablation, sensitivity, sensitivity_stability, sweep_csv, sweep_threshold,
    AblationSuite, EvaluationReport,
};
use rarecast::pipeline::{fit_pipeline, tabulate_classes, MetaMode};
use rarecast::schema::FeatureSchema;
use rarecast::synth::{generate_with_schema, truth_path};
use rarecast::Pipeline;

pub use config::{RunConfig, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rarecast", version, about = "Rare-event founder success prediction: generate, enrich, train, evaluate")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for generation, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Feature schema JSON (defaults to the built-in 63-feature schema).
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-signal dataset CSV and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Fill LLM-derived features from profile text.
    Enrich(EnrichArgs),
    /// Fit the pipeline on the training split and save the artifact.
    Train(TrainArgs),
    /// Score the evaluation subsets: MAPE, precision multiple, class table.
    Evaluate(EvaluateArgs),
    /// Precision and recall across probability thresholds.
    Sweep(SweepArgs),
    /// Feature sensitivity shares, optionally with a stability analysis.
    Sensitivity(SensitivityArgs),
    /// Run an ablation suite.
    Ablate(AblateArgs),
    /// Predict funding and success for every record of a CSV.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth JSON path (default: next to the CSV).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub n_records: Option<usize>,
    #[arg(long)]
    pub positive_rate: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Write LLM-derived features as text for `enrich`.
    #[arg(long)]
    pub llm_as_text: bool,
}

#[derive(Debug, Args)]
pub struct EnrichArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// mock, none or external (endpoint and key from RARECAST_LLM_ENDPOINT / RARECAST_LLM_API_KEY).
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON-lines answer cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Embedding provider: mock, none or external.
    #[arg(long)]
    pub embedding_provider: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub gbt_trees: Option<usize>,
    #[arg(long)]
    pub rf_trees: Option<usize>,
    /// Replace the ridge meta-model by an average of base predictions.
    #[arg(long)]
    pub meta_bypass: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the aligned-text report here.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// `threshold,precision` CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated thresholds (default 0.50 to 0.95 by 0.05).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `feature,share` CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Training data for the stability analysis.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Outlier fractions for the stability analysis.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// llm_features, embeddings, model_components or feature_categories.
    #[arg(long)]
    pub suite: String,
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Usage>() || matches!(cause.downcast_ref::<rarecast::Error>(), Some(rarecast::Error::Param(_))) {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Messages go to stdout/stderr.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            require(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.schema.is_some() {
        config.schema = cli.schema.clone();
    }
    config.apply_seed();
    Ok(config)
}

fn apply_pipeline_flags(config: &mut RunConfig, flags: &PipelineFlags) {
    let p = &mut config.pipeline;
    if let Some(e) = &flags.embedding_provider {
        p.embedding_provider = e.clone();
    }
    if let Some(t) = flags.threshold {
        p.threshold = t;
    }
    if let Some(k) = flags.folds {
        p.oof_folds = k;
    }
    if let Some(n) = flags.gbt_trees {
        p.gbt.n_trees = n;
    }
    if let Some(n) = flags.rf_trees {
        p.rf.n_trees = n;
    }
    if flags.meta_bypass {
        p.meta_mode = MetaMode::Average;
    }
}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("file not found: {}", path.display());
    }
    Ok(())
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn schema_of(config: &RunConfig) -> anyhow::Result<FeatureSchema> {
    match &config.schema {
        Some(path) => {
            require(path)?;
            Ok(FeatureSchema::load(path).with_context(|| format!("loading schema {}", path.display()))?)
        }
        None => Ok(FeatureSchema::default()),
    }
}

fn load_data(path: &Path, config: &RunConfig) -> anyhow::Result<Dataset> {
    require(path)?;
    let schema = schema_of(config)?;
    load_dataset(path, &schema).with_context(|| format!("loading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Pipeline> {
    require(path)?;
    Pipeline::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Path of the run record written next to `primary`: `x.csv` → `x.run.json`.
pub fn run_record_path(primary: &Path) -> PathBuf {
    primary.with_extension("run.json")
}

fn record_run(command: &str, config: &RunConfig, inputs: &[&Path], outputs: &[&Path]) -> anyhow::Result<()> {
    let Some(primary) = outputs.first() else {
        return Ok(());
    };
    let record = RunRecord {
        command: command.to_string(),
        config: config.clone(),
        inputs: inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), file_digest(p)?)))
            .collect::<anyhow::Result<_>>()?,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write(&run_record_path(primary), &serde_json::to_string_pretty(&record)?)
}

fn output_path(config: &RunConfig, path: &Path) -> PathBuf {
    match &config.output_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = resolve(&cli)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    match &cli.command {
        Command::Generate(a) => {
            let g = &mut config.generator;
            if let Some(n) = a.n_records {
                g.n_records = n;
            }
            if let Some(r) = a.positive_rate {
                g.positive_rate = r;
            }
            if let Some(s) = a.noise_sigma {
                g.noise_sigma = s;
            }
            g.llm_as_text |= a.llm_as_text;
            let schema = Arc::new(schema_of(&config)?);
            config.generator.validate(&schema).map_err(|e| usage(e.to_string()))?;
            let out = output_path(&config, &a.out);
            let truth = a.truth.as_ref().map(|t| output_path(&config, t)).unwrap_or_else(|| truth_path(&out));
            let generated = generate_with_schema(&config.generator, schema)?;
            generated.dataset.save(&out).with_context(|| format!("cannot write {}", out.display()))?;
            generated.truth.save(&truth)?;
            log::info!(
                "generated {} records, positive rate {:.4}",
                generated.truth.n_records,
                generated.truth.realized_positive_rate
            );
            config.data = Some(out.clone());
            record_run("generate", &config, &[], &[&out, &truth])
        }
        Command::Enrich(a) => {
            if let Some(p) = &a.provider {
                config.enrichment_provider = p.clone();
            }
            let data = load_data(&a.data, &config)?;
            let provider = enrichment_provider(&config.enrichment_provider)?;
            let cache = a.cache.as_ref().map(|p| EnrichmentCache::open(p)).transpose()?;
            let (enriched, summary) = enrich_dataset(&data, provider.as_ref(), cache.as_ref())?;
            let out = output_path(&config, &a.out);
            enriched.save(&out).with_context(|| format!("cannot write {}", out.display()))?;
            for status in [
                rarecast::enrich::EnrichStatus::Ok,
                rarecast::enrich::EnrichStatus::Rejected,
                rarecast::enrich::EnrichStatus::ProviderError,
            ] {
                log::info!("{status:?}: {}", summary.total(status));
            }
            config.data = Some(a.data.clone());
            record_run("enrich", &config, &[&a.data], &[&out])
        }
        Command::Train(a) => {
            apply_pipeline_flags(&mut config, &a.pipeline);
            config.pipeline.validate().map_err(|e| usage(e.to_string()))?;
            let data = load_data(&a.data, &config)?;
            let (train, _) = split_dataset(&data, &config.split_for(data.len()))?;
            let model: Pipeline = fit_pipeline(&train, &config.pipeline)?;
            let out = output_path(&config, &a.model);
            model.save(&out).with_context(|| format!("cannot write {}", out.display()))?;
            config.data = Some(a.data.clone());
            record_run("train", &config, &[&a.data], &[&out])
        }
        Command::Evaluate(a) => {
            let model = load_model(&a.model)?;
            let data = load_data(&a.data, &config)?;
            let (train, evals) = split_dataset(&data, &config.split_for(data.len()))?;
            if train.fingerprint() != model.fingerprint.data_hash {
                log::warn!("model was not trained on this dataset's training split");
            }
            let mut report = EvaluationReport::new(evaluate(&model, &evals)?, model.hash());
            let mut classes = Vec::new();
            let mut success = Vec::new();
            for e in &evals {
                classes.extend(model.predict_dataset(e)?.iter().map(|p| p.funding_class));
                success.extend(e.success());
            }
            report.class_table = Some(tabulate_classes(&classes, &success));
            let out = output_path(&config, &a.report);
            report.save(&out)?;
            let text = report.to_text();
            print!("{text}");
            let mut outputs = vec![out.clone()];
            if let Some(t) = &a.text {
                let t = output_path(&config, t);
                write(&t, &text)?;
                outputs.push(t);
            }
            config.data = Some(a.data.clone());
            let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            record_run("evaluate", &config, &[&a.model, &a.data], &outputs)
        }
        Command::Sweep(a) => {
            let model = load_model(&a.model)?;
            let data = load_data(&a.data, &config)?;
            let split = split_indices(&data, &config.split_for(data.len()))?;
            let mut pooled: Vec<usize> = split.eval.concat();
            pooled.sort_unstable();
            let grid = a.grid.clone().unwrap_or_else(default_grid);
            let rows = sweep_threshold(&model, &data.subset(&pooled), &grid)?;
            let out = output_path(&config, &a.out);
            write(&out, &sweep_csv(&rows))?;
            let mut report = EvaluationReport::new(Vec::new(), model.hash());
            report.sweep = Some(rows);
            print!("{}", report.to_text());
            let mut outputs = vec![out];
            if let Some(r) = &a.report {
                let r = output_path(&config, r);
                report.save(&r)?;
                outputs.push(r);
            }
            config.data = Some(a.data.clone());
            let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            record_run("sweep", &config, &[&a.model, &a.data], &outputs)
        }
        Command::Sensitivity(a) => {
            let model = load_model(&a.model)?;
            let table = sensitivity(&model)?;
            let out = output_path(&config, &a.out);
            write(&out, &table.to_csv())?;
            let mut report = EvaluationReport::new(Vec::new(), model.hash());
            report.sensitivity = Some(table);
            print!("{}", report.to_text());
            let mut inputs: Vec<&Path> = vec![&a.model];
            let mut outputs = vec![out];
            if let Some(data_path) = &a.data {
                let data = load_data(data_path, &config)?;
                let (train, _) = split_dataset(&data, &config.split_for(data.len()))?;
                let fractions = a.fractions.clone().unwrap_or_else(|| vec![0.0, 0.05, 0.10]);
                let stability = sensitivity_stability(&model.config, &train, &fractions, a.repeats, config.split.seed)?;
                println!("stability mean tau {:.4}, top feature consistent: {}", stability.mean_tau, stability.top1_consistent);
                let path = run_record_path(&outputs[0]).with_extension("").with_extension("stability.json");
                write(&path, &serde_json::to_string_pretty(&stability)?)?;
                outputs.push(path);
                inputs.push(data_path);
            } else if a.fractions.is_some() {
                return Err(usage("--fractions needs --data"));
            }
            if let Some(r) = &a.report {
                let r = output_path(&config, r);
                report.save(&r)?;
                outputs.push(r);
            }
            let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            record_run("sensitivity", &config, &inputs, &outputs)
        }
        Command::Ablate(a) => {
            apply_pipeline_flags(&mut config, &a.pipeline);
            config.pipeline.validate().map_err(|e| usage(e.to_string()))?;
            let suite: AblationSuite = a.suite.parse().map_err(|e: rarecast::Error| usage(e.to_string()))?;
            let data = load_data(&a.data, &config)?;
            let result = run_ablation(suite, &data, &config.split_for(data.len()), &config.pipeline)?;
            let mut report = EvaluationReport::new(Vec::new(), hex::encode(Sha256::digest(serde_json::to_vec(&config.pipeline)?)));
            report.ablations.push(result);
            let out = output_path(&config, &a.report);
            report.save(&out)?;
            print!("{}", report.to_text());
            config.data = Some(a.data.clone());
            record_run("ablate", &config, &[&a.data], &[&out])
        }
        Command::Predict(a) => {
            let model = load_model(&a.model)?;
            let data = load_data(&a.data, &config)?;
            if data.schema().hash() != model.encoder.schema_hash {
                return Err(anyhow!(rarecast::Error::Fingerprint {
                    expected: model.encoder.schema_hash.clone(),
                    found: data.schema().hash(),
                }));
            }
            let out = output_path(&config, &a.out);
            let mut w = csv::Writer::from_path(&out).with_context(|| format!("cannot write {}", out.display()))?;
            w.write_record(["id", "predicted_funding_usd", "success_prob", "predicted_success", "funding_class", "error"])?;
            let mut failed = 0;
            for (r, p) in data.records().iter().zip(model.predict(data.records())?) {
                match p {
                    Ok(p) => w.write_record([
                        p.id,
                        p.predicted_funding_usd.to_string(),
                        p.success_prob.to_string(),
                        u8::from(p.predicted_success).to_string(),
                        p.funding_class.label().to_string(),
                        String::new(),
                    ])?,
                    Err(e) => {
                        failed += 1;
                        w.write_record([r.id.clone(), String::new(), String::new(), String::new(), String::new(), e.to_string()])?
                    }
                }
            }
            w.flush()?;
            if failed > 0 {
                log::warn!("{failed} records could not be scored");
            }
            config.data = Some(a.data.clone());
            record_run("predict", &config, &[&a.model, &a.data], &[&out])
        }
    }
}
