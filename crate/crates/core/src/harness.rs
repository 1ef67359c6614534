//! Monte Carlo cross-validation driver: repeated 75-25 splits, per-model
//! fit and evaluation, compensated aggregation into train/test means and
//! reliability ratios, oversampler comparison, and the hidden-unit sweep.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::forest::{fit_forest, predict_forest, predict_oob, ForestConfig};
use crate::logistic::{forward_select_aic, predict_proba};
use crate::metrics::{confusion, gof, GofReport, MetricsError, METRIC_NAMES};
use crate::neuralnet::{fit_net, predict_net, NetConfig};
use crate::resample::{balance_to_parity, ResampleError, ResampleMethod};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 4 rows to split, got {0}")]
    TooSmall(usize),
    #[error("invalid cross-validation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Model {
    Lr,
    Rf,
    Ann,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Lr, Model::Rf, Model::Ann];

    pub fn tag(&self) -> &'static str {
        match self {
            Model::Lr => "lr",
            Model::Rf => "rf",
            Model::Ann => "ann",
        }
    }
}

/// When and where parity balancing happens relative to the split.
/// `PreSplit` balances the full table first, so synthetic rows can land in
/// test sets; `WithinTrain` balances only the training side.
#[derive(Debug, Clone, PartialEq)]
pub enum BalancePolicy {
    None,
    PreSplit(ResampleMethod),
    WithinTrain(ResampleMethod),
}

impl BalancePolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            BalancePolicy::None => "none",
            BalancePolicy::PreSplit(_) => "pre_split",
            BalancePolicy::WithinTrain(_) => "within_train",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub replications: usize,
    pub train_fraction: f64,
    pub balance: BalancePolicy,
    pub models: Vec<Model>,
    pub forest: ForestConfig,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            replications: 100,
            train_fraction: 0.75,
            balance: BalancePolicy::PreSplit(ResampleMethod::pdfos_default()),
            models: Model::ALL.to_vec(),
            forest: ForestConfig::default(),
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.models.is_empty() {
            return Err(HarnessError::InvalidConfig("no models requested".into()));
        }
        Ok(())
    }
}

/// Uniform partition without replacement; |train| = floor(fraction * n),
/// clamped so both sides are nonempty. Deterministic per seed.
pub fn mc_split(n: usize, train_fraction: f64, rep_seed: u64) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    if n < 4 {
        return Err(HarnessError::TooSmall(n));
    }
    let n_train = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(rep_seed);
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng);
    let test = indices.split_off(n_train);
    Ok((indices, test))
}

/// One replication's train/test material after the balance policy.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_synthetic: Vec<bool>,
    pub test_synthetic: Vec<bool>,
}

pub fn prepare_split(ds: &Dataset, cfg: &CvConfig, rep: usize) -> Result<SplitData, HarnessError> {
    let split_seed = derive_seed(cfg.seed, "cv/split", rep as u64);
    let balance_seed = derive_seed(cfg.seed, "cv/balance", rep as u64);
    match &cfg.balance {
        BalancePolicy::None => {
            let (tr, te) = mc_split(ds.n(), cfg.train_fraction, split_seed)?;
            Ok(SplitData {
                train_synthetic: vec![false; tr.len()],
                test_synthetic: vec![false; te.len()],
                train: ds.subset(&tr, format!("{}/train", ds.name())),
                test: ds.subset(&te, format!("{}/test", ds.name())),
            })
        }
        BalancePolicy::PreSplit(method) => {
            let balanced = balance_to_parity(ds, method.clone(), balance_seed)?;
            let (tr, te) = mc_split(balanced.dataset.n(), cfg.train_fraction, split_seed)?;
            Ok(SplitData {
                train_synthetic: tr.iter().map(|&i| balanced.synthetic_mask[i]).collect(),
                test_synthetic: te.iter().map(|&i| balanced.synthetic_mask[i]).collect(),
                train: balanced.dataset.subset(&tr, format!("{}/train", ds.name())),
                test: balanced.dataset.subset(&te, format!("{}/test", ds.name())),
            })
        }
        BalancePolicy::WithinTrain(method) => {
            let (tr, te) = mc_split(ds.n(), cfg.train_fraction, split_seed)?;
            let train_orig = ds.subset(&tr, format!("{}/train", ds.name()));
            let balanced = balance_to_parity(&train_orig, method.clone(), balance_seed)?;
            Ok(SplitData {
                train_synthetic: balanced.synthetic_mask.clone(),
                test_synthetic: vec![false; te.len()],
                train: balanced.dataset,
                test: ds.subset(&te, format!("{}/test", ds.name())),
            })
        }
    }
}

/// One model's result for one replication; a failed fit becomes an error
/// row rather than aborting the sweep.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub rep: usize,
    pub model: Model,
    pub train: Option<GofReport>,
    pub test: Option<GofReport>,
    pub error: Option<String>,
}

fn eval_split(y: &[u8], probs: &[f64], threshold: f64) -> Result<GofReport, MetricsError> {
    let classes: Vec<u8> = probs.iter().map(|&pr| u8::from(pr >= threshold)).collect();
    let cm = confusion(y, &classes)?;
    gof(&cm, Some((y, probs)))
}

fn fit_eval(model: Model, split: &SplitData, cfg: &CvConfig, rep: usize) -> Result<(GofReport, GofReport), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let (train_probs, test_probs) = match model {
        Model::Lr => {
            let fit = forward_select_aic(split.train.rows(), split.train.labels()).map_err(|e| err(&e))?;
            if fit.separation {
                return Err("complete separation in logistic fit".into());
            }
            if !fit.converged {
                return Err("logistic fit did not converge".into());
            }
            (
                predict_proba(&fit, split.train.rows()).map_err(|e| err(&e))?,
                predict_proba(&fit, split.test.rows()).map_err(|e| err(&e))?,
            )
        }
        Model::Rf => {
            let fcfg = ForestConfig { seed: derive_seed(cfg.seed, "cv/rf", rep as u64), ..cfg.forest.clone() };
            let fit = fit_forest(&split.train, &fcfg).map_err(|e| err(&e))?;
            // Training-side classes come from out-of-bag votes (each row
            // judged only by trees that never saw it), while the AUC score
            // uses the full ensemble's vote fractions. Mirrors the R
            // randomForest convention of predict() vs type="prob".
            let (_, oob_classes) = predict_oob(&fit, split.train.rows(), 0.5).map_err(|e| err(&e))?;
            let (inbag_probs, _) = predict_forest(&fit, split.train.rows(), 0.5).map_err(|e| err(&e))?;
            let y_train = split.train.labels();
            let cm = confusion(y_train, &oob_classes).map_err(|e| err(&e))?;
            let train = gof(&cm, Some((y_train, &inbag_probs))).map_err(|e| err(&e))?;
            let (test_probs, _) = predict_forest(&fit, split.test.rows(), 0.5).map_err(|e| err(&e))?;
            let test = eval_split(split.test.labels(), &test_probs, 0.5).map_err(|e| err(&e))?;
            return Ok((train, test));
        }
        Model::Ann => {
            let ncfg = NetConfig { seed: derive_seed(cfg.seed, "cv/ann", rep as u64), ..cfg.net.clone() };
            let fit = fit_net(split.train.rows(), split.train.labels(), &ncfg).map_err(|e| err(&e))?;
            (
                predict_net(&fit, split.train.rows(), 0.5).map_err(|e| err(&e))?.0,
                predict_net(&fit, split.test.rows(), 0.5).map_err(|e| err(&e))?.0,
            )
        }
    };
    let train = eval_split(split.train.labels(), &train_probs, 0.5).map_err(|e| err(&e))?;
    let test = eval_split(split.test.labels(), &test_probs, 0.5).map_err(|e| err(&e))?;
    Ok((train, test))
}

/// All requested models share the replication's split.
pub fn run_replication(ds: &Dataset, cfg: &CvConfig, rep: usize) -> Result<Vec<RepOutcome>, HarnessError> {
    let split = match prepare_split(ds, cfg, rep) {
        Ok(s) => s,
        Err(HarnessError::TooSmall(n)) => return Err(HarnessError::TooSmall(n)),
        Err(e) => {
            // balancing failed; every model gets an error row
            let msg = e.to_string();
            return Ok(cfg
                .models
                .iter()
                .map(|&model| RepOutcome { rep, model, train: None, test: None, error: Some(msg.clone()) })
                .collect());
        }
    };
    Ok(cfg
        .models
        .iter()
        .map(|&model| match fit_eval(model, &split, cfg, rep) {
            Ok((train, test)) => RepOutcome { rep, model, train: Some(train), test: Some(test), error: None },
            Err(msg) => RepOutcome { rep, model, train: None, test: None, error: Some(msg) },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub train_mean: Option<f64>,
    pub test_mean: Option<f64>,
    /// train_mean / test_mean, present only when test_mean > 0
    pub ratio: Option<f64>,
    /// successful replications whose metric was undefined on that side
    pub train_skipped: usize,
    pub test_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct ModelSummary {
    pub model: Model,
    pub failures: usize,
    /// keyed in [`METRIC_NAMES`] order
    pub metrics: Vec<(&'static str, MetricSummary)>,
}

#[derive(Debug, Clone)]
pub struct CvSummary {
    pub replications: usize,
    pub records: Vec<RepOutcome>,
    pub models: Vec<ModelSummary>,
}

impl CvSummary {
    pub fn metric(&self, model: Model, name: &str) -> Option<&MetricSummary> {
        self.models
            .iter()
            .find(|m| m.model == model)
            .and_then(|m| m.metrics.iter().find(|(k, _)| *k == name))
            .map(|(_, s)| s)
    }
}

/// Kahan-compensated mean; `None` when no values are defined.
fn kahan_mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut count = 0usize;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Aggregation keys on (model, metric) only, so record order is irrelevant
/// up to summation rounding, which the compensation keeps below 1e-12.
pub fn aggregate(records: &[RepOutcome], models: &[Model]) -> Vec<ModelSummary> {
    models
        .iter()
        .map(|&model| {
            let mine: Vec<&RepOutcome> = records.iter().filter(|r| r.model == model).collect();
            let failures = mine.iter().filter(|r| r.error.is_some()).count();
            let metrics = METRIC_NAMES
                .iter()
                .map(|&name| {
                    let side = |pick: fn(&RepOutcome) -> Option<GofReport>| {
                        let defined: Vec<f64> =
                            mine.iter().filter_map(|r| pick(r)).filter_map(|g| g.get(name)).collect();
                        let skipped = mine.iter().filter(|r| r.error.is_none()).count() - defined.len();
                        (kahan_mean(defined), skipped)
                    };
                    let (train_mean, train_skipped) = side(|r| r.train);
                    let (test_mean, test_skipped) = side(|r| r.test);
                    let ratio = match (train_mean, test_mean) {
                        (Some(tr), Some(te)) if te > 0.0 => Some(tr / te),
                        _ => None,
                    };
                    (name, MetricSummary { train_mean, test_mean, ratio, train_skipped, test_skipped })
                })
                .collect();
            ModelSummary { model, failures, metrics }
        })
        .collect()
}

/// Replications run concurrently but collect by index, so the summary is
/// bit-identical to a serial pass.
pub fn run_crossval(ds: &Dataset, cfg: &CvConfig) -> Result<CvSummary, HarnessError> {
    cfg.validate()?;
    let per_rep: Vec<Vec<RepOutcome>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(ds, cfg, rep))
        .collect::<Result<_, _>>()?;
    let records: Vec<RepOutcome> = per_rep.into_iter().flatten().collect();
    let models = aggregate(&records, &cfg.models);
    Ok(CvSummary { replications: cfg.replications, records, models })
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub condition: String,
    pub report: Result<GofReport, String>,
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// best balancing method by F1, AUC breaking ties; None when no
    /// method row succeeded
    pub best: Option<String>,
}

fn single_fit_report(ds: &Dataset) -> Result<GofReport, String> {
    let fit = forward_select_aic(ds.rows(), ds.labels()).map_err(|e| e.to_string())?;
    let probs = predict_proba(&fit, ds.rows()).map_err(|e| e.to_string())?;
    eval_split(ds.labels(), &probs, 0.5).map_err(|e| e.to_string())
}

/// Single full-data logistic fit per condition: the original table plus
/// one parity-balanced table per method.
pub fn compare_oversamplers(ds: &Dataset, methods: &[ResampleMethod], seed: u64) -> ComparisonTable {
    let mut rows = vec![ComparisonRow { condition: "original".into(), report: single_fit_report(ds) }];
    for (i, method) in methods.iter().enumerate() {
        let condition = method.tag().to_string();
        let report = balance_to_parity(ds, method.clone(), derive_seed(seed, "compare", i as u64))
            .map_err(|e| e.to_string())
            .and_then(|b| single_fit_report(&b.dataset));
        rows.push(ComparisonRow { condition, report });
    }
    let best = rows
        .iter()
        .skip(1)
        .filter_map(|r| r.report.as_ref().ok().map(|g| (r, g)))
        .max_by(|(_, a), (_, b)| {
            let key = |g: &GofReport| (g.f1.unwrap_or(f64::NEG_INFINITY), g.auc.unwrap_or(f64::NEG_INFINITY));
            key(a).partial_cmp(&key(b)).unwrap()
        })
        .map(|(r, _)| r.condition.clone());
    ComparisonTable { rows, best }
}

#[derive(Debug, Clone)]
pub struct KSummary {
    pub k: usize,
    pub train_oa: Vec<f64>,
    pub test_oa: Vec<f64>,
    pub median_train: f64,
    pub median_test: f64,
    /// fraction of replicates reaching at least 90% training accuracy
    pub high_train_fraction: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Hidden-unit sweep; each replication's split is shared across all k so
/// per-k distributions are paired.
pub fn tune_hidden_units(
    ds: &Dataset,
    k_range: &[usize],
    reps: usize,
    cfg: &CvConfig,
) -> Result<Vec<KSummary>, HarnessError> {
    if k_range.is_empty() {
        return Err(HarnessError::InvalidConfig("empty hidden-unit range".into()));
    }
    let per_rep: Vec<Vec<Option<(f64, f64)>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let split = prepare_split(ds, cfg, rep)?;
            let pairs = k_range
                .iter()
                .map(|&k| {
                    let ncfg = NetConfig {
                        hidden_units: k,
                        seed: derive_seed(cfg.seed, "tune/net", (k * 1_000_000 + rep) as u64),
                        ..cfg.net.clone()
                    };
                    let oa_pair = fit_net(split.train.rows(), split.train.labels(), &ncfg).ok().and_then(|fit| {
                        let train = predict_net(&fit, split.train.rows(), 0.5).ok()?.0;
                        let test = predict_net(&fit, split.test.rows(), 0.5).ok()?.0;
                        let tr = eval_split(split.train.labels(), &train, 0.5).ok()?.oa?;
                        let te = eval_split(split.test.labels(), &test, 0.5).ok()?.oa?;
                        Some((tr, te))
                    });
                    oa_pair
                })
                .collect();
            Ok::<_, HarnessError>(pairs)
        })
        .collect::<Result<_, _>>()?;

    Ok(k_range
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let pairs: Vec<(f64, f64)> = per_rep.iter().filter_map(|r| r[ki]).collect();
            let train_oa: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let test_oa: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let high = train_oa.iter().filter(|&&v| v >= 0.9).count();
            KSummary {
                k,
                median_train: median(&train_oa),
                median_test: median(&test_oa),
                high_train_fraction: if pairs.is_empty() { 0.0 } else { high as f64 / pairs.len() as f64 },
                train_oa,
                test_oa,
            }
        })
        .collect())
}

/// Smallest k whose replicates hit 90% training accuracy at least half
/// the time.
pub fn select_hidden_units(sweep: &[KSummary]) -> Option<usize> {
    sweep.iter().find(|s| s.high_train_fraction >= 0.5).map(|s| s.k)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// One row per replication, model, split side, and metric.
pub fn records_csv(summary: &CvSummary) -> String {
    let mut out = String::from("rep,model,split,metric,value,error\n");
    for r in &summary.records {
        if let Some(err) = &r.error {
            out.push_str(&format!("{},{},,,,{}\n", r.rep, r.model.tag(), err.replace(',', ";")));
            continue;
        }
        for (side, report) in [("train", &r.train), ("test", &r.test)] {
            if let Some(g) = report {
                for name in METRIC_NAMES {
                    out.push_str(&format!(
                        "{},{},{},{},{},\n",
                        r.rep,
                        r.model.tag(),
                        side,
                        name,
                        fmt_opt(g.get(name))
                    ));
                }
            }
        }
    }
    out
}

pub fn summary_csv(summary: &CvSummary) -> String {
    let mut out = String::from("model,metric,train_mean,test_mean,ratio,train_skipped,test_skipped,failures\n");
    for m in &summary.models {
        for (name, s) in &m.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                m.model.tag(),
                name,
                fmt_opt(s.train_mean),
                fmt_opt(s.test_mean),
                fmt_opt(s.ratio),
                s.train_skipped,
                s.test_skipped,
                m.failures
            ));
        }
    }
    out
}

pub fn summary_markdown(summary: &CvSummary) -> String {
    let mut out = String::new();
    for m in &summary.models {
        out.push_str(&format!(
            "## {} ({} replications, {} failed)\n\n",
            m.model.tag().to_uppercase(),
            summary.replications,
            m.failures
        ));
        out.push_str("| Metric | Train | Test | Ratio |\n|---|---|---|---|\n");
        for (name, s) in &m.metrics {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                name,
                fmt_opt(s.train_mean),
                fmt_opt(s.test_mean),
                fmt_opt(s.ratio)
            ));
        }
        out.push('\n');
    }
    out
}

pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut out = String::from("condition,oa,sensitivity,precision,specificity,f1,auc,error\n");
    for row in &table.rows {
        match &row.report {
            Ok(g) => out.push_str(&format!(
                "{},{},{},{},{},{},{},\n",
                row.condition,
                fmt_opt(g.oa),
                fmt_opt(g.sensitivity),
                fmt_opt(g.precision),
                fmt_opt(g.specificity),
                fmt_opt(g.f1),
                fmt_opt(g.auc)
            )),
            Err(e) => out.push_str(&format!("{},,,,,,,{}\n", row.condition, e.replace(',', ";"))),
        }
    }
    out
}

pub fn comparison_markdown(table: &ComparisonTable) -> String {
    let mut out = String::from("| Condition | OA | Sensitivity | Precision | Specificity | F1 | AUC |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for row in &table.rows {
        let marker = if table.best.as_deref() == Some(row.condition.as_str()) { " (best)" } else { "" };
        match &row.report {
            Ok(g) => out.push_str(&format!(
                "| {}{} | {} | {} | {} | {} | {} | {} |\n",
                row.condition,
                marker,
                fmt_opt(g.oa),
                fmt_opt(g.sensitivity),
                fmt_opt(g.precision),
                fmt_opt(g.specificity),
                fmt_opt(g.f1),
                fmt_opt(g.auc)
            )),
            Err(e) => out.push_str(&format!("| {} | error: {} ||||||\n", row.condition, e)),
        }
    }
    out
}

pub fn tune_csv(sweep: &[KSummary]) -> String {
    let mut out = String::from("k,rep,train_oa,test_oa\n");
    for s in sweep {
        for (rep, (tr, te)) in s.train_oa.iter().zip(&s.test_oa).enumerate() {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", s.k, rep, tr, te));
        }
    }
    out
}

pub fn tune_markdown(sweep: &[KSummary]) -> String {
    let mut out = String::from("| k | Median Train OA | Median Test OA | P(train OA >= 0.9) |\n|---|---|---|---|\n");
    for s in sweep {
        out.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.2} |\n",
            s.k, s.median_train, s.median_test, s.high_train_fraction
        ));
    }
    if let Some(k) = select_hidden_units(sweep) {
        out.push_str(&format!("\nSelected hidden units: {k}\n"));
    }
    out
}
