//! Seeded synthetic-survey generator.
//!
//! Produces datasets with the same coded-answer shape as a survey table:
//! mixed binary/ordinal/count/continuous columns, construct tags, and a
//! controllable minority fraction driven by a logistic signal planted on a
//! chosen feature subset. Everything is a pure function of the config.

use rand::Rng;
use rand_distr::{Poisson, StandardNormal};

use super::{Construct, DataError, Dataset, FeatureKind, FeatureSpec, Pooling};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub p: usize,
    pub target_minority_fraction: f64,
    /// 0-based feature indices carrying the planted signal
    pub signal_features: Vec<usize>,
    pub signal_strength: f64,
    pub seed: u64,
}

/// Signal strength of the canonical benchmark, tuned so that single-fit LR
/// test accuracy on parity-balanced data lands in the 0.70-0.80 band.
pub const BENCHMARK_SIGNAL_STRENGTH: f64 = 1.0;

/// Benchmark signal columns: one continuous feature in each of three
/// distinct constructs (H1, H5, H3 under the default spec layout).
pub const BENCHMARK_SIGNAL_FEATURES: [usize; 3] = [2, 6, 14];

impl SyntheticConfig {
    /// The canonical benchmark: 318 rows, 26 predictors, 91-positive target
    /// fraction, three planted signal features in distinct constructs.
    pub fn benchmark(seed: u64) -> Self {
        SyntheticConfig {
            n: 318,
            p: 26,
            target_minority_fraction: 91.0 / 318.0,
            signal_features: BENCHMARK_SIGNAL_FEATURES.to_vec(),
            signal_strength: BENCHMARK_SIGNAL_STRENGTH,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 || self.p == 0 {
            return Err(DataError::InvalidConfig("n and p must be positive".into()));
        }
        if !(self.target_minority_fraction > 0.0 && self.target_minority_fraction < 0.5) {
            return Err(DataError::InvalidConfig(format!(
                "target_minority_fraction must lie in (0, 0.5), got {}",
                self.target_minority_fraction
            )));
        }
        if self.signal_features.iter().any(|&j| j >= self.p) {
            return Err(DataError::InvalidConfig("signal feature index out of range".into()));
        }
        if self.signal_strength < 0.0 {
            return Err(DataError::InvalidConfig("signal_strength must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Default spec layout: two control columns (binary gender, ordinal age
/// group), then kinds cycling continuous/ordinal/binary/count and
/// constructs cycling H1..H5.
pub fn default_specs(p: usize) -> Vec<FeatureSpec> {
    (0..p)
        .map(|j| match j {
            0 => FeatureSpec {
                name: "gender".into(),
                kind: FeatureKind::Binary,
                levels: Some(vec![0.0, 1.0]),
                pooling: Pooling::None,
                construct: Construct::Control,
            },
            1 => FeatureSpec {
                name: "age_group".into(),
                kind: FeatureKind::Ordinal,
                levels: Some(vec![1.0, 2.0, 3.0, 4.0]),
                pooling: Pooling::None,
                construct: Construct::Control,
            },
            _ => {
                let construct = match (j - 2) % 5 {
                    0 => Construct::H1,
                    1 => Construct::H2,
                    2 => Construct::H3,
                    3 => Construct::H4,
                    _ => Construct::H5,
                };
                let (kind, levels) = match (j - 2) % 4 {
                    0 => (FeatureKind::Continuous, None),
                    1 => (FeatureKind::Ordinal, Some(vec![1.0, 2.0, 3.0, 4.0, 5.0])),
                    2 => (FeatureKind::Binary, Some(vec![0.0, 1.0])),
                    _ => (FeatureKind::Count, None),
                };
                FeatureSpec { name: format!("q{:02}", j + 1), kind, levels, pooling: Pooling::None, construct }
            }
        })
        .collect()
}

const COUNT_RATE: f64 = 3.0;

/// Closed-form mean and sd of a column's sampling distribution, used to
/// standardize signal features identically in the pilot and the final draw.
fn moments(spec: &FeatureSpec) -> (f64, f64) {
    match spec.kind {
        FeatureKind::Binary => (0.5, 0.5),
        FeatureKind::Ordinal => {
            let levels = spec.levels.as_ref().expect("ordinal levels");
            let m = levels.iter().sum::<f64>() / levels.len() as f64;
            let v = levels.iter().map(|&l| (l - m) * (l - m)).sum::<f64>() / levels.len() as f64;
            (m, v.sqrt())
        }
        FeatureKind::Count => (COUNT_RATE, COUNT_RATE.sqrt()),
        FeatureKind::Continuous => (0.0, 1.0),
    }
}

fn draw_value<R: Rng>(spec: &FeatureSpec, rng: &mut R) -> f64 {
    match spec.kind {
        FeatureKind::Binary => f64::from(rng.gen_bool(0.5)),
        FeatureKind::Ordinal => {
            let levels = spec.levels.as_ref().expect("ordinal levels");
            levels[rng.gen_range(0..levels.len())]
        }
        FeatureKind::Count => rng.sample(Poisson::new(COUNT_RATE).expect("valid rate")),
        FeatureKind::Continuous => rng.sample(StandardNormal),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const PILOT_DRAWS: usize = 200_000;
const MAX_BISECTION_STEPS: usize = 200;
const CALIBRATION_TOL: f64 = 0.005;

/// Bisection for the intercept: E[sigmoid(alpha + eta)] over the pilot etas
/// must match the target fraction.
fn calibrate_intercept(etas: &[f64], target: f64) -> Result<f64, DataError> {
    let expected = |alpha: f64| etas.iter().map(|&e| sigmoid(alpha + e)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    let mut best = (0.0, f64::INFINITY);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let f = expected(mid);
        let gap = (f - target).abs();
        if gap < best.1 {
            best = (mid, gap);
        }
        if gap < 5e-5 {
            return Ok(mid);
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1 <= CALIBRATION_TOL {
        Ok(best.0)
    } else {
        Err(DataError::CalibrationFailure(MAX_BISECTION_STEPS))
    }
}

/// Generates a synthetic survey dataset; deterministic given the config.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let specs = default_specs(cfg.p);
    let signal_moments: Vec<(usize, f64, f64)> = cfg
        .signal_features
        .iter()
        .map(|&j| {
            let (m, s) = moments(&specs[j]);
            (j, m, s)
        })
        .collect();

    let eta_of = |row: &[f64]| -> f64 {
        cfg.signal_strength
            * signal_moments.iter().map(|&(j, m, s)| (row[j] - m) / s).sum::<f64>()
    };

    // Pilot sample of the linear predictor, drawn from the same per-kind
    // distributions, fixes the intercept before the real rows are labeled.
    let mut pilot_rng = substream(cfg.seed, "synthetic/pilot", 0);
    let mut etas = Vec::with_capacity(PILOT_DRAWS);
    for _ in 0..PILOT_DRAWS {
        let eta = cfg.signal_strength
            * signal_moments
                .iter()
                .map(|&(j, m, s)| (draw_value(&specs[j], &mut pilot_rng) - m) / s)
                .sum::<f64>();
        etas.push(eta);
    }
    let alpha = calibrate_intercept(&etas, cfg.target_minority_fraction)?;

    let mut feature_rng = substream(cfg.seed, "synthetic/features", 0);
    let mut label_rng = substream(cfg.seed, "synthetic/labels", 0);
    let mut features = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let row: Vec<f64> = specs.iter().map(|s| draw_value(s, &mut feature_rng)).collect();
        let prob = sigmoid(alpha + eta_of(&row));
        labels.push(u8::from(label_rng.gen_bool(prob)));
        features.push(row);
    }
    Dataset::new(format!("synthetic-{}", cfg.seed), "label", features, labels, specs)
}

/// The benchmark dataset used across tests and reports. The label draw is
/// Bernoulli, so the positive count varies by a few units per seed; the
/// benchmark pins it to exactly 91 of 318 by retrying derived seeds, which
/// keeps parity balancing at 227 + 227 = 454 rows for every seed.
pub fn canonical_benchmark(seed: u64) -> Dataset {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    // the retry loop makes generation expensive; cache per seed
    static CACHE: OnceLock<Mutex<HashMap<u64, Dataset>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(ds) = cache.lock().unwrap().get(&seed) {
        return ds.clone();
    }
    let ds = canonical_benchmark_uncached(seed);
    cache.lock().unwrap().insert(seed, ds.clone());
    ds
}

fn canonical_benchmark_uncached(seed: u64) -> Dataset {
    let target = (SyntheticConfig::benchmark(0).target_minority_fraction * 318.0).round() as usize;
    for attempt in 0..10_000 {
        let cfg = SyntheticConfig::benchmark(crate::rng::derive_seed(seed, "benchmark", attempt));
        let ds = generate_synthetic(&cfg).expect("benchmark config is valid");
        if ds.class_counts().1 == target {
            return ds;
        }
    }
    unreachable!("no attempt out of 10000 hit the target positive count")
}
