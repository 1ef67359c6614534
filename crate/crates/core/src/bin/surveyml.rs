//! Command-line front end: dataset generation, description, balancing,
//! oversampler comparison, Monte Carlo cross-validation, hidden-unit
//! tuning, importance ranking, and the full report bundle.
//!
//! Exit codes: 0 success, 2 validation failure, 3 runtime/model failure,
//! 4 IO failure. Errors print one JSON line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use surveyml::data::{describe, generate_synthetic, load_dataset, DataError, Dataset, SyntheticConfig};
use surveyml::forest::ForestConfig;
use surveyml::harness::{
    comparison_csv, comparison_markdown, compare_oversamplers, records_csv, run_crossval, summary_csv,
    summary_markdown, tune_csv, tune_hidden_units, tune_markdown, BalancePolicy, CvConfig, CvSummary,
    HarnessError, Model,
};
use surveyml::importance::{
    distribution_markdown, run_importance_study, table_csv, table_markdown, top_k, topk_markdown,
};
use surveyml::neuralnet::NetConfig;
use surveyml::resample::{balance_to_parity, ResampleMethod};
use surveyml::rng::derive_seed;

#[derive(Parser)]
#[command(name = "surveyml", about = "Imbalanced survey classification study pipeline", version)]
struct Cli {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// input data CSV
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// schema descriptor JSON
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo replications
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    /// balance policy: pre-split, within-train, or none
    #[arg(long, global = true)]
    balance: Option<String>,
    /// oversampling method: smote, rwo, or pdfos
    #[arg(long, global = true)]
    method: Option<String>,
    /// restrict models (repeatable): lr, rf, ann
    #[arg(long = "model", global = true)]
    models: Option<Vec<String>>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// write a synthetic survey dataset and matching schema
    Generate,
    /// print marginal summaries of a dataset
    Describe,
    /// oversample the minority class to parity and write the result
    Balance,
    /// single-fit logistic comparison of oversampling methods
    CompareOversamplers,
    /// Monte Carlo cross-validation of the requested models
    Crossval,
    /// hidden-unit sweep for the neural model
    TuneAnn,
    /// Monte Carlo importance ranking across models
    Importance,
    /// all report tables in one seeded run
    FullStudy,
}

/// Everything the study needs, in one checked-in artifact. Flags override
/// file values; the resolved config is hashed into report headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: u64,
    reps: usize,
    train_fraction: f64,
    balance: String,
    method: String,
    smote_neighbors: usize,
    models: Vec<String>,
    ntree: usize,
    mtry: usize,
    min_node_size: usize,
    hidden_units: usize,
    net_max_iter: usize,
    weight_decay: f64,
    init_range: f64,
    tune_k_min: usize,
    tune_k_max: usize,
    tune_reps: usize,
    top_k: usize,
    n: usize,
    p: usize,
    minority_fraction: f64,
    signal_strength: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = SyntheticConfig::benchmark(0);
        RunConfig {
            seed: 0,
            reps: 100,
            train_fraction: 0.75,
            balance: "pre-split".into(),
            method: "pdfos".into(),
            smote_neighbors: 5,
            models: vec!["lr".into(), "rf".into(), "ann".into()],
            ntree: 1000,
            mtry: 5,
            min_node_size: 10,
            hidden_units: 10,
            net_max_iter: 100,
            weight_decay: 0.0,
            init_range: 0.5,
            tune_k_min: 1,
            tune_k_max: 15,
            tune_reps: 50,
            top_k: 10,
            n: bench.n,
            p: bench.p,
            minority_fraction: bench.target_minority_fraction,
            signal_strength: bench.signal_strength,
        }
    }
}

#[derive(Debug)]
struct AppError {
    code: u8,
    message: String,
}

impl AppError {
    fn validation(message: impl Into<String>) -> Self {
        AppError { code: 2, message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        AppError { code: 3, message: message.into() }
    }
    fn io(message: impl Into<String>) -> Self {
        AppError { code: 4, message: message.into() }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) | DataError::Csv(_) => AppError::io(e.to_string()),
            DataError::CalibrationFailure(_) => AppError::runtime(e.to_string()),
            _ => AppError::validation(e.to_string()),
        }
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_) | HarnessError::TooSmall(_) => AppError::validation(e.to_string()),
            _ => AppError::runtime(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, AppError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::io(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::validation(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.reps = reps;
    }
    if let Some(tf) = cli.train_fraction {
        cfg.train_fraction = tf;
    }
    if let Some(balance) = &cli.balance {
        cfg.balance = balance.clone();
    }
    if let Some(method) = &cli.method {
        cfg.method = method.clone();
    }
    if let Some(models) = &cli.models {
        cfg.models = models.clone();
    }
    Ok(cfg)
}

fn parse_method(cfg: &RunConfig) -> Result<ResampleMethod, AppError> {
    match cfg.method.as_str() {
        "smote" => Ok(ResampleMethod::Smote { k: cfg.smote_neighbors }),
        "rwo" => Ok(ResampleMethod::Rwo),
        "pdfos" => Ok(ResampleMethod::pdfos_default()),
        other => Err(AppError::validation(format!("unknown method {other:?}; expected smote, rwo, or pdfos"))),
    }
}

fn parse_balance(cfg: &RunConfig) -> Result<BalancePolicy, AppError> {
    let method = parse_method(cfg)?;
    match cfg.balance.replace('_', "-").as_str() {
        "none" => Ok(BalancePolicy::None),
        "pre-split" => Ok(BalancePolicy::PreSplit(method)),
        "within-train" => Ok(BalancePolicy::WithinTrain(method)),
        other => Err(AppError::validation(format!(
            "unknown balance policy {other:?}; expected pre-split, within-train, or none"
        ))),
    }
}

fn parse_models(cfg: &RunConfig) -> Result<Vec<Model>, AppError> {
    cfg.models
        .iter()
        .map(|m| match m.as_str() {
            "lr" => Ok(Model::Lr),
            "rf" => Ok(Model::Rf),
            "ann" => Ok(Model::Ann),
            other => Err(AppError::validation(format!("unknown model {other:?}; expected lr, rf, or ann"))),
        })
        .collect()
}

fn cv_config(cfg: &RunConfig) -> Result<CvConfig, AppError> {
    Ok(CvConfig {
        replications: cfg.reps,
        train_fraction: cfg.train_fraction,
        balance: parse_balance(cfg)?,
        models: parse_models(cfg)?,
        forest: ForestConfig { ntree: cfg.ntree, mtry: cfg.mtry, min_node_size: cfg.min_node_size, seed: 0 },
        net: NetConfig {
            hidden_units: cfg.hidden_units,
            max_iter: cfg.net_max_iter,
            init_range: cfg.init_range,
            weight_decay: cfg.weight_decay,
            seed: 0,
        },
        seed: cfg.seed,
    })
}

fn synthetic_config(cfg: &RunConfig) -> SyntheticConfig {
    let mut sc = SyntheticConfig::benchmark(cfg.seed);
    sc.n = cfg.n;
    sc.p = cfg.p;
    sc.target_minority_fraction = cfg.minority_fraction;
    sc.signal_strength = cfg.signal_strength;
    sc.signal_features.retain(|&j| j < cfg.p);
    sc
}

/// Stable hash of the resolved config, embedded in every report header so
/// a report can be traced back to the exact settings that produced it.
fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    format!("{:016x}", derive_seed(0, &json, 0))
}

fn header(cfg: &RunConfig, markdown: bool) -> String {
    let line = format!("config {} seed {}", config_hash(cfg), cfg.seed);
    if markdown {
        format!("<!-- {line} -->\n")
    } else {
        format!("# {line}\n")
    }
}

/// Tracks written files so a failing stage can remove its partial output.
struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, AppError> {
        fs::create_dir_all(dir)
            .map_err(|e| AppError::io(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, AppError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| AppError::io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn remove_partials(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn require_dataset(cli: &Cli) -> Result<Dataset, AppError> {
    let data = cli.data.as_ref().ok_or_else(|| AppError::validation("--data is required"))?;
    let schema = cli.schema.as_ref().ok_or_else(|| AppError::validation("--schema is required"))?;
    Ok(load_dataset(data, schema)?)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_generate(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let sc = synthetic_config(cfg);
    sc.validate()?;
    let ds = generate_synthetic(&sc)?;
    let mut out = OutDir::create(&out_dir(cli))?;
    let data_path = out.dir.join("data.csv");
    let schema_path = out.dir.join("schema.json");
    ds.write_csv(&data_path)?;
    ds.schema().save(&schema_path)?;
    let (zeros, ones) = ds.class_counts();
    println!("wrote {} and {}", data_path.display(), schema_path.display());
    println!("rows {} predictors {} class counts 0: {zeros}, 1: {ones}", ds.n(), ds.p());
    out.written.clear();
    Ok(())
}

fn cmd_describe(cli: &Cli) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let report = describe(&ds);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    Ok(())
}

fn cmd_balance(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let method = parse_method(cfg)?;
    let balanced =
        balance_to_parity(&ds, method, cfg.seed).map_err(|e| AppError::runtime(e.to_string()))?;
    let mut out = OutDir::create(&out_dir(cli))?;
    let path = out.dir.join("balanced.csv");
    balanced.dataset.write_csv(&path)?;
    let (zeros, ones) = balanced.dataset.class_counts();
    println!(
        "wrote {} ({} rows, {} synthetic, class counts 0: {zeros}, 1: {ones})",
        path.display(),
        balanced.dataset.n(),
        balanced.synthetic_count()
    );
    out.written.clear();
    Ok(())
}

const ALL_METHODS: [&str; 3] = ["smote", "rwo", "pdfos"];

fn all_methods(cfg: &RunConfig) -> Vec<ResampleMethod> {
    ALL_METHODS
        .iter()
        .map(|m| {
            let one = RunConfig { method: (*m).to_string(), ..cfg.clone() };
            parse_method(&one).expect("fixed method names")
        })
        .collect()
}

fn cmd_compare(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let table = compare_oversamplers(&ds, &all_methods(cfg), cfg.seed);
    let mut out = OutDir::create(&out_dir(cli))?;
    out.write("oversampler_comparison.csv", &format!("{}{}", header(cfg, false), comparison_csv(&table)))?;
    let md = format!("{}{}", header(cfg, true), comparison_markdown(&table));
    out.write("oversampler_comparison.md", &md)?;
    print!("{md}");
    Ok(())
}

fn crossval_reports(out: &mut OutDir, prefix: &str, cfg: &RunConfig, summary: &CvSummary) -> Result<(), AppError> {
    out.write(&format!("{prefix}_records.csv"), &format!("{}{}", header(cfg, false), records_csv(summary)))?;
    out.write(&format!("{prefix}_summary.csv"), &format!("{}{}", header(cfg, false), summary_csv(summary)))?;
    out.write(&format!("{prefix}_summary.md"), &format!("{}{}", header(cfg, true), summary_markdown(summary)))?;
    Ok(())
}

fn cmd_crossval(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let cv = cv_config(cfg)?;
    let summary = run_crossval(&ds, &cv)?;
    let mut out = OutDir::create(&out_dir(cli))?;
    crossval_reports(&mut out, "crossval", cfg, &summary)?;
    print!("{}", summary_markdown(&summary));
    Ok(())
}

fn cmd_tune_ann(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    if cfg.tune_k_min == 0 || cfg.tune_k_min > cfg.tune_k_max {
        return Err(AppError::validation(format!(
            "tune range {}..{} is empty or starts at zero",
            cfg.tune_k_min, cfg.tune_k_max
        )));
    }
    let cv = cv_config(cfg)?;
    let ks: Vec<usize> = (cfg.tune_k_min..=cfg.tune_k_max).collect();
    let sweep = tune_hidden_units(&ds, &ks, cfg.tune_reps, &cv)?;
    let mut out = OutDir::create(&out_dir(cli))?;
    out.write("hidden_unit_sweep.csv", &format!("{}{}", header(cfg, false), tune_csv(&sweep)))?;
    let md = format!("{}{}", header(cfg, true), tune_markdown(&sweep));
    out.write("hidden_unit_sweep.md", &md)?;
    print!("{md}");
    Ok(())
}

fn cmd_importance(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let cv = cv_config(cfg)?;
    let table = run_importance_study(&ds, &cv)?;
    let report = top_k(&table, cfg.top_k.min(table.p())).map_err(|e| AppError::runtime(e.to_string()))?;
    let mut out = OutDir::create(&out_dir(cli))?;
    out.write("importance_ranks.csv", &format!("{}{}", header(cfg, false), table_csv(&table)))?;
    out.write("importance_ranks.md", &format!("{}{}", header(cfg, true), table_markdown(&table)))?;
    let md = format!("{}{}", header(cfg, true), topk_markdown(&report));
    out.write("top_predictors.md", &md)?;
    print!("{md}");
    Ok(())
}

/// The full report bundle: oversampler comparison, cross-validation on
/// original and balanced data, reliability ratios, importance table,
/// top-k consensus, and the rank-distribution summary. Any stage failure
/// removes everything written so far.
fn cmd_full_study(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let ds = require_dataset(cli)?;
    let mut out = OutDir::create(&out_dir(cli))?;
    match full_study_stages(&ds, cfg, &mut out) {
        Ok(()) => Ok(()),
        Err(mut e) => {
            out.remove_partials();
            e.message = format!("full-study: {}", e.message);
            Err(e)
        }
    }
}

fn full_study_stages(ds: &Dataset, cfg: &RunConfig, out: &mut OutDir) -> Result<(), AppError> {
    // stage 1: single-fit oversampler comparison
    let table = compare_oversamplers(ds, &all_methods(cfg), cfg.seed);
    out.write("oversampler_comparison.csv", &format!("{}{}", header(cfg, false), comparison_csv(&table)))?;
    out.write("oversampler_comparison.md", &format!("{}{}", header(cfg, true), comparison_markdown(&table)))?;

    // stage 2: cross-validation on the original imbalanced table
    let original_cv = CvConfig { balance: BalancePolicy::None, ..cv_config(cfg)? };
    let original = run_crossval(ds, &original_cv).map_err(|e| AppError::runtime(format!("original CV: {e}")))?;
    crossval_reports(out, "crossval_original", cfg, &original)?;

    // stage 3: cross-validation under the configured balance policy
    let balanced_cv = cv_config(cfg)?;
    let balanced = run_crossval(ds, &balanced_cv).map_err(|e| AppError::runtime(format!("balanced CV: {e}")))?;
    crossval_reports(out, "crossval_balanced", cfg, &balanced)?;

    // stage 4: reliability ratios from the balanced run
    let mut reliability = format!("{}| Model | Metric | Train | Test | Ratio |\n|---|---|---|---|---|\n", header(cfg, true));
    for m in &balanced.models {
        for (name, s) in &m.metrics {
            let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
            reliability.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                m.model.tag().to_uppercase(),
                name,
                fmt(s.train_mean),
                fmt(s.test_mean),
                fmt(s.ratio)
            ));
        }
    }
    out.write("reliability.md", &reliability)?;

    // stage 5: importance ranking and top-k consensus
    let table = run_importance_study(ds, &balanced_cv).map_err(|e| AppError::runtime(format!("importance: {e}")))?;
    let report = top_k(&table, cfg.top_k.min(table.p())).map_err(|e| AppError::runtime(e.to_string()))?;
    out.write("importance_ranks.csv", &format!("{}{}", header(cfg, false), table_csv(&table)))?;
    out.write("importance_ranks.md", &format!("{}{}", header(cfg, true), table_markdown(&table)))?;
    out.write("top_predictors.md", &format!("{}{}", header(cfg, true), topk_markdown(&report)))?;

    // stage 6: rank-distribution summary
    out.write("rank_distribution.md", &format!("{}{}", header(cfg, true), distribution_markdown(&table, 5)))?;

    println!("wrote report bundle to {}", out.dir.display());
    Ok(())
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Generate => cmd_generate(&cli, &cfg),
        Cmd::Describe => cmd_describe(&cli),
        Cmd::Balance => cmd_balance(&cli, &cfg),
        Cmd::CompareOversamplers => cmd_compare(&cli, &cfg),
        Cmd::Crossval => cmd_crossval(&cli, &cfg),
        Cmd::TuneAnn => cmd_tune_ann(&cli, &cfg),
        Cmd::Importance => cmd_importance(&cli, &cfg),
        Cmd::FullStudy => cmd_full_study(&cli, &cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.message, "code": e.code }));
            ExitCode::from(e.code)
        }
    }
}
