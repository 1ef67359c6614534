//! Variable-importance aggregation: per-replication ranks for each model,
//! averaging over Monte Carlo replications, significance counting for the
//! logistic model, top-k consensus, construct coverage, and a uniformity
//! diagnostic on the averaged ranks.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Construct, Dataset};
use crate::forest::{fit_forest, ForestConfig};
use crate::harness::{prepare_split, CvConfig, HarnessError, Model};
use crate::logistic::{forward_select_aic, wald_rank, LogisticFit};
use crate::neuralnet::{fit_net, garson_importance, NetConfig};
use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImportanceError {
    #[error("rank vector length {got} does not match {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("k = {k} exceeds predictor count {p}")]
    KTooLarge { k: usize, p: usize },
    #[error("schema carries no construct tags")]
    MissingConstructTags,
    #[error("no rank vectors to average")]
    Empty,
}

/// Dense mid-rank ranking: the best score gets rank 1, tied scores share
/// the average of the positions they occupy, and the rank sum is always
/// p(p+1)/2.
pub fn scores_to_ranks(scores: &[f64], higher_is_better: bool) -> Vec<f64> {
    let p = scores.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        let cmp = scores[a].partial_cmp(&scores[b]).unwrap();
        if higher_is_better { cmp.reverse() } else { cmp }
    });
    let mut ranks = vec![0.0; p];
    let mut i = 0;
    while i < p {
        let mut j = i;
        while j + 1 < p && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1 share the mid-rank
        let mid = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Elementwise mean of per-replication rank vectors; preserves the mean
/// rank (p+1)/2 exactly in exact arithmetic.
pub fn average_ranks(rank_vectors: &[Vec<f64>]) -> Result<Vec<f64>, ImportanceError> {
    let first = rank_vectors.first().ok_or(ImportanceError::Empty)?;
    let p = first.len();
    let mut sums = vec![0.0; p];
    let mut comps = vec![0.0; p];
    for v in rank_vectors {
        if v.len() != p {
            return Err(ImportanceError::LengthMismatch { expected: p, got: v.len() });
        }
        for (j, &r) in v.iter().enumerate() {
            let y = r - comps[j];
            let t = sums[j] + y;
            comps[j] = (t - sums[j]) - y;
            sums[j] = t;
        }
    }
    let m = rank_vectors.len() as f64;
    Ok(sums.into_iter().map(|s| s / m).collect())
}

/// Per predictor, the number of fits whose selected set contains it.
pub fn count_lr_significance(fits: &[LogisticFit], p: usize) -> Vec<usize> {
    let mut counts = vec![0usize; p];
    for fit in fits {
        for &j in &fit.selected {
            if j < p {
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Table-8-shaped aggregate: significance counts and per-model average
/// ranks over the replications that produced a successful fit.
#[derive(Debug, Clone)]
pub struct ImportanceTable {
    pub names: Vec<String>,
    pub constructs: Vec<Construct>,
    pub replications: usize,
    pub lr_significance: Vec<usize>,
    pub lr_rank: Vec<f64>,
    pub rf_rank: Vec<f64>,
    pub ann_rank: Vec<f64>,
    /// successful replications per model, in [`Model::ALL`] order
    pub successes: [usize; 3],
}

impl ImportanceTable {
    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn rank_vector(&self, model: Model) -> &[f64] {
        match model {
            Model::Lr => &self.lr_rank,
            Model::Rf => &self.rf_rank,
            Model::Ann => &self.ann_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopEntry {
    pub name: String,
    pub construct: Construct,
    pub avg_rank: f64,
}

#[derive(Debug, Clone)]
pub struct TopKReport {
    pub k: usize,
    /// per model in [`Model::ALL`] order
    pub lists: Vec<(Model, Vec<TopEntry>)>,
    /// predictors present in every model's list, in name order
    pub intersection: Vec<String>,
}

/// Smallest-average-rank predictors per model; ties broken by name order.
pub fn top_k(table: &ImportanceTable, k: usize) -> Result<TopKReport, ImportanceError> {
    let p = table.p();
    if k > p {
        return Err(ImportanceError::KTooLarge { k, p });
    }
    let lists: Vec<(Model, Vec<TopEntry>)> = Model::ALL
        .iter()
        .map(|&model| {
            let ranks = table.rank_vector(model);
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| {
                ranks[a].partial_cmp(&ranks[b]).unwrap().then(table.names[a].cmp(&table.names[b]))
            });
            let entries = order
                .into_iter()
                .take(k)
                .map(|j| TopEntry {
                    name: table.names[j].clone(),
                    construct: table.constructs[j],
                    avg_rank: ranks[j],
                })
                .collect();
            (model, entries)
        })
        .collect();
    let mut intersection: Vec<String> = lists[0]
        .1
        .iter()
        .filter(|e| lists[1..].iter().all(|(_, l)| l.iter().any(|o| o.name == e.name)))
        .map(|e| e.name.clone())
        .collect();
    intersection.sort();
    Ok(TopKReport { k, lists, intersection })
}

/// Construct tags appearing in each model's top-k list, with a flag for
/// full H1..H5 coverage.
pub fn construct_coverage(report: &TopKReport) -> Vec<(Model, BTreeSet<Construct>, bool)> {
    let hypotheses =
        [Construct::H1, Construct::H2, Construct::H3, Construct::H4, Construct::H5];
    report
        .lists
        .iter()
        .map(|(model, entries)| {
            let covered: BTreeSet<Construct> = entries.iter().map(|e| e.construct).collect();
            let full = hypotheses.iter().all(|h| covered.contains(h));
            (*model, covered, full)
        })
        .collect()
}

/// Histogram of average ranks over [1, p] plus their variance. Identical
/// rankings every replication give the discrete-uniform maximum
/// (p^2 - 1)/12; total disagreement collapses everything to (p+1)/2 and
/// zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDistribution {
    pub bins: Vec<usize>,
    pub bin_edges: Vec<f64>,
    pub variance: f64,
}

pub fn rank_distribution(avg_ranks: &[f64], bins: usize) -> RankDistribution {
    let p = avg_ranks.len();
    let bins = bins.max(1);
    let lo = 1.0;
    let hi = p as f64;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &r in avg_ranks {
        let idx = if width > 0.0 { (((r - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1;
    }
    let mean = avg_ranks.iter().sum::<f64>() / p as f64;
    let variance = avg_ranks.iter().map(|&r| (r - mean).powi(2)).sum::<f64>() / p as f64;
    RankDistribution {
        bins: counts,
        bin_edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        variance,
    }
}

/// Monte Carlo importance study: reuses the harness splits, scores each
/// model per replication (LR: |z| of selected terms, RF: Gini decrease,
/// ANN: Garson shares), and averages the ranks. Failed fits drop out of
/// that model's average only.
pub fn run_importance_study(ds: &Dataset, cfg: &CvConfig) -> Result<ImportanceTable, HarnessError> {
    cfg.validate()?;
    let p = ds.p();
    struct RepRanks {
        lr: Option<(Vec<f64>, LogisticFit)>,
        rf: Option<Vec<f64>>,
        ann: Option<Vec<f64>>,
    }
    let per_rep: Vec<RepRanks> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let split = match prepare_split(ds, cfg, rep) {
                Ok(s) => s,
                Err(_) => return Ok(RepRanks { lr: None, rf: None, ann: None }),
            };
            let lr = forward_select_aic(split.train.rows(), split.train.labels())
                .ok()
                .filter(|fit| fit.converged && !fit.separation)
                .map(|fit| (wald_rank(&fit, p), fit));
            let rf = {
                let fcfg = ForestConfig { seed: derive_seed(cfg.seed, "cv/rf", rep as u64), ..cfg.forest.clone() };
                fit_forest(&split.train, &fcfg).ok().map(|fit| scores_to_ranks(&fit.importance, true))
            };
            let ann = {
                let ncfg = NetConfig { seed: derive_seed(cfg.seed, "cv/ann", rep as u64), ..cfg.net.clone() };
                fit_net(split.train.rows(), split.train.labels(), &ncfg)
                    .ok()
                    .and_then(|fit| garson_importance(&fit).ok())
                    .map(|shares| scores_to_ranks(&shares, true))
            };
            Ok::<_, HarnessError>(RepRanks { lr, rf, ann })
        })
        .collect::<Result<_, _>>()?;

    let lr_vectors: Vec<Vec<f64>> = per_rep.iter().filter_map(|r| r.lr.as_ref().map(|(v, _)| v.clone())).collect();
    let lr_fits: Vec<LogisticFit> = per_rep.iter().filter_map(|r| r.lr.as_ref().map(|(_, f)| f.clone())).collect();
    let rf_vectors: Vec<Vec<f64>> = per_rep.iter().filter_map(|r| r.rf.clone()).collect();
    let ann_vectors: Vec<Vec<f64>> = per_rep.iter().filter_map(|r| r.ann.clone()).collect();

    let center = vec![(p as f64 + 1.0) / 2.0; p];
    let avg = |vectors: &[Vec<f64>]| {
        if vectors.is_empty() { center.clone() } else { average_ranks(vectors).expect("uniform lengths") }
    };

    Ok(ImportanceTable {
        names: ds.feature_names(),
        constructs: ds.specs().iter().map(|s| s.construct).collect(),
        replications: cfg.replications,
        lr_significance: count_lr_significance(&lr_fits, p),
        lr_rank: avg(&lr_vectors),
        rf_rank: avg(&rf_vectors),
        ann_rank: avg(&ann_vectors),
        successes: [lr_vectors.len(), rf_vectors.len(), ann_vectors.len()],
    })
}

pub fn table_csv(table: &ImportanceTable) -> String {
    let mut out = String::from("variable,construct,lr_significance,lr_rank,rf_rank,ann_rank\n");
    for j in 0..table.p() {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4}\n",
            table.names[j],
            table.constructs[j],
            table.lr_significance[j],
            table.lr_rank[j],
            table.rf_rank[j],
            table.ann_rank[j]
        ));
    }
    out
}

pub fn table_markdown(table: &ImportanceTable) -> String {
    let mut out = String::from(
        "Scoring rules: LR = |z| of AIC-selected terms (unselected share the mid-rank), RF = Gini decrease, ANN = Garson shares.\n\n",
    );
    out.push_str("| Variable | Construct | LR significant (of ");
    out.push_str(&format!("{}) | LR rank | RF rank | ANN rank |\n", table.replications));
    out.push_str("|---|---|---|---|---|---|\n");
    for j in 0..table.p() {
        out.push_str(&format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} |\n",
            table.names[j],
            table.constructs[j],
            table.lr_significance[j],
            table.lr_rank[j],
            table.rf_rank[j],
            table.ann_rank[j]
        ));
    }
    out
}

pub fn topk_markdown(report: &TopKReport) -> String {
    let mut out = format!("## Top {} predictors per model\n\n", report.k);
    for (model, entries) in &report.lists {
        out.push_str(&format!("### {}\n\n", model.tag().to_uppercase()));
        for (i, e) in entries.iter().enumerate() {
            out.push_str(&format!("{}. {} ({}) avg rank {:.2}\n", i + 1, e.name, e.construct, e.avg_rank));
        }
        out.push('\n');
    }
    out.push_str("### Common to all models\n\n");
    if report.intersection.is_empty() {
        out.push_str("(none)\n");
    } else {
        for name in &report.intersection {
            out.push_str(&format!("- {name}\n"));
        }
    }
    out
}

pub fn distribution_markdown(table: &ImportanceTable, bins: usize) -> String {
    let mut out = String::from("| Model | Rank variance | Histogram |\n|---|---|---|\n");
    for model in Model::ALL {
        let dist = rank_distribution(table.rank_vector(model), bins);
        let hist: Vec<String> = dist.bins.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "| {} | {:.4} | {} |\n",
            model.tag().to_uppercase(),
            dist.variance,
            hist.join(" ")
        ));
    }
    out
}
