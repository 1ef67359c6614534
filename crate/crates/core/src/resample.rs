//! Minority-class oversampling: SMOTE, RWO, PDFOS, and the parity driver.
//!
//! All three generators are pure functions of (dataset, parameters, seed)
//! and return synthetic feature rows only; `balance_to_parity` appends them
//! after the originals with the minority label.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("minority class too small: have {have}, need > {need}")]
    TooFewMinority { have: usize, need: usize },
    #[error("minority covariance is singular (Cholesky failed)")]
    SingularCovariance,
    #[error("dataset has a single class")]
    SingleClass,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ResampleMethod {
    Smote { k: usize },
    Rwo,
    Pdfos { bandwidth: Bandwidth },
}

impl ResampleMethod {
    pub fn smote_default() -> Self {
        ResampleMethod::Smote { k: 5 }
    }

    pub fn pdfos_default() -> Self {
        ResampleMethod::Pdfos { bandwidth: Bandwidth::Silverman }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ResampleMethod::Smote { .. } => "smote",
            ResampleMethod::Rwo => "rwo",
            ResampleMethod::Pdfos { .. } => "pdfos",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ResampleOptions {
    /// Retry a failed Cholesky once with a small trace-scaled ridge.
    pub ridge: bool,
    /// Standardize features before SMOTE neighbor distances.
    pub standardize_distance: bool,
    /// Snap synthetic values of binary/ordinal features to the nearest level.
    pub snap_to_levels: bool,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        ResampleOptions { ridge: true, standardize_distance: false, snap_to_levels: false }
    }
}

/// Balanced table: originals unchanged and first, synthetic rows flagged.
#[derive(Debug, Clone)]
pub struct BalancedDataset {
    pub dataset: Dataset,
    pub synthetic_mask: Vec<bool>,
    pub method: ResampleMethod,
    pub seed: u64,
}

impl BalancedDataset {
    pub fn synthetic_count(&self) -> usize {
        self.synthetic_mask.iter().filter(|&&m| m).count()
    }
}

fn minority_rows(ds: &Dataset) -> (u8, Vec<&[f64]>) {
    let label = ds.minority_label();
    let rows = ds
        .rows()
        .iter()
        .zip(ds.labels())
        .filter(|(_, &y)| y == label)
        .map(|(r, _)| r.as_slice())
        .collect();
    (label, rows)
}

fn sq_dist(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scale)
        .map(|((&x, &y), &s)| {
            let d = (x - y) / s;
            d * d
        })
        .sum()
}

/// SMOTE: convex combinations of a minority point and one of its k nearest
/// minority neighbors, Euclidean distance, neighbor ties broken by lower
/// row index.
pub fn smote(
    ds: &Dataset,
    n_new: usize,
    k: usize,
    seed: u64,
    opts: &ResampleOptions,
) -> Result<Vec<Vec<f64>>, ResampleError> {
    assert!(k > 0, "k must be positive");
    let (_, minority) = minority_rows(ds);
    let m = minority.len();
    if m <= k {
        return Err(ResampleError::TooFewMinority { have: m, need: k });
    }
    if n_new == 0 {
        return Ok(Vec::new());
    }
    let p = ds.p();
    let scale: Vec<f64> = if opts.standardize_distance {
        (0..p)
            .map(|j| {
                let mean = minority.iter().map(|r| r[j]).sum::<f64>() / m as f64;
                let var = minority.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0).max(1.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; p]
    };

    // k nearest minority neighbors per minority point, self excluded
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                sq_dist(minority[i], minority[a], &scale)
                    .partial_cmp(&sq_dist(minority[i], minority[b], &scale))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        })
        .collect();

    let mut rng = substream(seed, "smote", 0);
    let mut out = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let i = rng.gen_range(0..m);
        let nn = neighbors[i][rng.gen_range(0..k)];
        let u: f64 = rng.gen();
        let row: Vec<f64> = minority[i]
            .iter()
            .zip(minority[nn])
            .map(|(&a, &b)| a + u * (b - a))
            .collect();
        out.push(maybe_snap(row, ds, opts));
    }
    Ok(out)
}

/// RWO: each synthetic row is a minority row perturbed by per-feature
/// Gaussian steps scaled by sd / sqrt(m).
pub fn rwo(ds: &Dataset, n_new: usize, seed: u64, opts: &ResampleOptions) -> Result<Vec<Vec<f64>>, ResampleError> {
    let (_, minority) = minority_rows(ds);
    let m = minority.len();
    if m < 2 {
        return Err(ResampleError::TooFewMinority { have: m, need: 1 });
    }
    if n_new == 0 {
        return Ok(Vec::new());
    }
    let p = ds.p();
    let step: Vec<f64> = (0..p)
        .map(|j| {
            let mean = minority.iter().map(|r| r[j]).sum::<f64>() / m as f64;
            let var = minority.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            var.sqrt() / (m as f64).sqrt()
        })
        .collect();

    let mut rng = substream(seed, "rwo", 0);
    let mut out = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let i = rng.gen_range(0..m);
        let row: Vec<f64> = minority[i]
            .iter()
            .zip(&step)
            .map(|(&x, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                x - z * s
            })
            .collect();
        out.push(maybe_snap(row, ds, opts));
    }
    Ok(out)
}

/// Multivariate Silverman rule-of-thumb bandwidth.
pub fn silverman_bandwidth(m: usize, p: usize) -> f64 {
    (4.0 / ((p as f64 + 2.0) * m as f64)).powf(1.0 / (p as f64 + 4.0))
}

/// PDFOS: Gaussian kernel density sampling around minority rows with the
/// full minority covariance, scaled by the bandwidth.
pub fn pdfos(
    ds: &Dataset,
    n_new: usize,
    bandwidth: Bandwidth,
    seed: u64,
    opts: &ResampleOptions,
) -> Result<Vec<Vec<f64>>, ResampleError> {
    let (_, minority) = minority_rows(ds);
    let m = minority.len();
    let p = ds.p();
    if m <= p {
        return Err(ResampleError::TooFewMinority { have: m, need: p });
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(m, p),
        Bandwidth::Fixed(h) => {
            assert!(h > 0.0, "fixed bandwidth must be positive");
            h
        }
    };

    let means: Vec<f64> = (0..p).map(|j| minority.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let mut cov = DMatrix::zeros(p, p);
    for row in &minority {
        for a in 0..p {
            for b in a..p {
                let v = (row[a] - means[a]) * (row[b] - means[b]);
                cov[(a, b)] += v;
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            cov[(a, b)] /= (m - 1) as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }

    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None if opts.ridge => {
            let ridge = 1e-8 * cov.trace() / p as f64;
            let ridged: DMatrix<f64> = cov + DMatrix::<f64>::identity(p, p) * ridge;
            ridged.cholesky().ok_or(ResampleError::SingularCovariance)?
        }
        None => return Err(ResampleError::SingularCovariance),
    };
    let l = chol.l();

    let mut rng = substream(seed, "pdfos", 0);
    let mut out = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let i = rng.gen_range(0..m);
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut row = minority[i].to_vec();
        for a in 0..p {
            let mut step = 0.0;
            for b in 0..=a {
                step += l[(a, b)] * z[b];
            }
            row[a] += h * step;
        }
        out.push(maybe_snap(row, ds, opts));
    }
    Ok(out)
}

fn maybe_snap(mut row: Vec<f64>, ds: &Dataset, opts: &ResampleOptions) -> Vec<f64> {
    if opts.snap_to_levels {
        for (v, spec) in row.iter_mut().zip(ds.specs()) {
            if let Some(levels) = &spec.levels {
                *v = levels
                    .iter()
                    .copied()
                    .min_by(|a, b| (*a - *v).abs().partial_cmp(&(*b - *v).abs()).unwrap())
                    .unwrap();
            }
        }
    }
    row
}

/// Appends exactly (majority - minority) synthetic minority rows so the
/// class counts come out equal. An already-balanced input is returned
/// unchanged with an all-false mask.
pub fn balance_to_parity(ds: &Dataset, method: ResampleMethod, seed: u64) -> Result<BalancedDataset, ResampleError> {
    balance_to_parity_with(ds, method, seed, &ResampleOptions::default())
}

pub fn balance_to_parity_with(
    ds: &Dataset,
    method: ResampleMethod,
    seed: u64,
    opts: &ResampleOptions,
) -> Result<BalancedDataset, ResampleError> {
    let (zeros, ones) = ds.class_counts();
    if zeros == 0 || ones == 0 {
        return Err(ResampleError::SingleClass);
    }
    let minority_label = ds.minority_label();
    let deficit = zeros.abs_diff(ones);
    if deficit == 0 {
        return Ok(BalancedDataset {
            dataset: ds.clone(),
            synthetic_mask: vec![false; ds.n()],
            method,
            seed,
        });
    }
    let rows = match method {
        ResampleMethod::Smote { k } => smote(ds, deficit, k, seed, opts)?,
        ResampleMethod::Rwo => rwo(ds, deficit, seed, opts)?,
        ResampleMethod::Pdfos { bandwidth } => pdfos(ds, deficit, bandwidth, seed, opts)?,
    };
    let name = format!("{}-balanced-{}", ds.name(), method.tag());
    let dataset = ds.with_appended_rows(rows, minority_label, name);
    let mut synthetic_mask = vec![false; ds.n()];
    synthetic_mask.extend(std::iter::repeat(true).take(deficit));
    Ok(BalancedDataset { dataset, synthetic_mask, method, seed })
}
