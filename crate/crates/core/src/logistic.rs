//! Logistic regression: IRLS fitting, AIC-based forward selection,
//! probability prediction, and Wald-|z| importance ranking.
//!
//! The fitter is plain Newton/IRLS with step-halving, so the log-likelihood
//! is nondecreasing over accepted iterations. Quasi-separation is reported
//! through the `separation` flag instead of aborting, because oversampled
//! survey data can separate in small splits.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogisticError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("design rows ({rows}) must exceed parameters ({params})")]
    TooFewRows { rows: usize, params: usize },
    #[error("design column {0} missing from prediction input")]
    ColumnMismatch(usize),
    #[error("normal equations are singular")]
    SingularDesign,
}

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Linear predictors beyond this magnitude are treated as numerically
/// saturated; their presence at the optimum marks quasi-separation.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    /// Predictor column indices in entry order.
    pub selected: Vec<usize>,
    pub intercept: f64,
    /// Coefficients aligned to `selected`.
    pub coefficients: Vec<f64>,
    /// Wald standard errors aligned to `selected`.
    pub standard_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub converged: bool,
    pub separation: bool,
    pub iterations: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log(1 + e^x) without overflow
fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_likelihood(eta: &DVector<f64>, y: &[u8]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| f64::from(yi) * e - log1pexp(e))
        .sum()
}

/// Builds an n x (1 + |columns|) design with a leading intercept column.
fn design(rows: &[Vec<f64>], columns: &[usize]) -> DMatrix<f64> {
    let n = rows.len();
    let mut x = DMatrix::zeros(n, 1 + columns.len());
    for (i, row) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (c, &j) in columns.iter().enumerate() {
            x[(i, c + 1)] = row[j];
        }
    }
    x
}

/// Fits on the given columns of `rows` (all columns when `columns` is
/// `0..q`). Newton/IRLS with step-halving; converged when the max relative
/// coefficient change drops below `tol`.
pub fn fit_irls_on(
    rows: &[Vec<f64>],
    y: &[u8],
    columns: &[usize],
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit, LogisticError> {
    let n = rows.len();
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(LogisticError::DegenerateLabels);
    }
    let q = columns.len();
    if n <= q + 1 {
        return Err(LogisticError::TooFewRows { rows: n, params: q + 1 });
    }
    let x = design(rows, columns);
    let mut beta = DVector::zeros(q + 1);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(&eta, y);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        let mu: DVector<f64> = eta.map(sigmoid);
        let w: DVector<f64> = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let resid = DVector::from_iterator(n, y.iter().zip(mu.iter()).map(|(&yi, &m)| f64::from(yi) - m));
        let grad = x.transpose() * resid;
        let mut xtwx = DMatrix::<f64>::zeros(q + 1, q + 1);
        for i in 0..n {
            let wi = w[i];
            for a in 0..=q {
                let xa = x[(i, a)] * wi;
                for b in a..=q {
                    xtwx[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..=q {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = xtwx.clone().cholesky().ok_or(LogisticError::SingularDesign)?;
        let mut delta = chol.solve(&grad);

        // step-halving keeps the log-likelihood nondecreasing
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + &delta;
            let cand_eta = &x * &candidate;
            let cand_ll = log_likelihood(&cand_eta, y);
            if cand_ll >= ll {
                let max_rel = beta
                    .iter()
                    .zip(delta.iter())
                    .map(|(&b, &d)| d.abs() / b.abs().max(1.0))
                    .fold(0.0, f64::max);
                beta = candidate;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                if max_rel < tol {
                    converged = true;
                }
                break;
            }
            delta *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted && iter > 1;
            break;
        }
    }

    let separation = eta.iter().any(|&e| e.abs() > SEPARATION_ETA);
    if separation {
        converged = false;
    }

    // Wald SEs from the inverse Fisher information at the optimum
    let mu: DVector<f64> = eta.map(sigmoid);
    let w: DVector<f64> = mu.map(|m| (m * (1.0 - m)).max(1e-12));
    let mut xtwx = DMatrix::<f64>::zeros(q + 1, q + 1);
    for i in 0..n {
        let wi = w[i];
        for a in 0..=q {
            let xa = x[(i, a)] * wi;
            for b in a..=q {
                xtwx[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..=q {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    let standard_errors: Vec<f64> = match xtwx.try_inverse() {
        Some(inv) => (1..=q).map(|a| inv[(a, a)].max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; q],
    };

    let aic = 2.0 * (1 + q) as f64 - 2.0 * ll;
    Ok(LogisticFit {
        selected: columns.to_vec(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        standard_errors,
        log_likelihood: ll,
        aic,
        converged,
        separation,
        iterations,
    })
}

/// Fits all columns of the design matrix.
pub fn fit_irls(rows: &[Vec<f64>], y: &[u8], max_iter: usize, tol: f64) -> Result<LogisticFit, LogisticError> {
    let q = rows.first().map_or(0, Vec::len);
    let columns: Vec<usize> = (0..q).collect();
    fit_irls_on(rows, y, &columns, max_iter, tol)
}

/// AIC tie tolerance at a forward step; ties go to the lower column index.
const AIC_TIE_TOL: f64 = 1e-9;

/// Greedy forward selection: start from the intercept-only model, add the
/// candidate with the lowest AIC, stop when no addition strictly lowers it.
pub fn forward_select_aic(rows: &[Vec<f64>], y: &[u8]) -> Result<LogisticFit, LogisticError> {
    let p = rows.first().map_or(0, Vec::len);
    let mut current = fit_irls_on(rows, y, &[], DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let mut remaining: Vec<usize> = (0..p).collect();

    loop {
        let mut best: Option<(usize, LogisticFit)> = None;
        for &j in &remaining {
            let mut columns = current.selected.clone();
            columns.push(j);
            let Ok(fit) = fit_irls_on(rows, y, &columns, DEFAULT_MAX_ITER, DEFAULT_TOL) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((bj, bf)) => fit.aic < bf.aic - AIC_TIE_TOL || (fit.aic < bf.aic + AIC_TIE_TOL && j < *bj),
            };
            if better {
                best = Some((j, fit));
            }
        }
        match best {
            Some((j, fit)) if fit.aic < current.aic - AIC_TIE_TOL => {
                remaining.retain(|&r| r != j);
                current = fit;
            }
            _ => break,
        }
    }
    Ok(current)
}

/// Inverse-logit of the linear predictor over the fit's selected columns.
pub fn predict_proba(fit: &LogisticFit, rows: &[Vec<f64>]) -> Result<Vec<f64>, LogisticError> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some(&j) = fit.selected.iter().find(|&&j| j >= width) {
        return Err(LogisticError::ColumnMismatch(j));
    }
    Ok(rows
        .iter()
        .map(|row| {
            let eta = fit.intercept
                + fit
                    .selected
                    .iter()
                    .zip(&fit.coefficients)
                    .map(|(&j, &b)| row[j] * b)
                    .sum::<f64>();
            sigmoid(eta)
        })
        .collect())
}

/// Importance ranks from a forward-selection fit: selected predictors get
/// ranks 1..s by descending |z|, unselected predictors share the mid-rank
/// (s + p + 1) / 2. The rank vector sums to p(p+1)/2.
pub fn wald_rank(fit: &LogisticFit, p_total: usize) -> Vec<f64> {
    let s = fit.selected.len();
    let mid = (s + p_total + 1) as f64 / 2.0;
    let mut ranks = vec![mid; p_total];
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| {
        let za = (fit.coefficients[a] / fit.standard_errors[a]).abs();
        let zb = (fit.coefficients[b] / fit.standard_errors[b]).abs();
        zb.partial_cmp(&za).unwrap().then(a.cmp(&b))
    });
    for (rank, &pos) in order.iter().enumerate() {
        ranks[fit.selected[pos]] = (rank + 1) as f64;
    }
    ranks
}
