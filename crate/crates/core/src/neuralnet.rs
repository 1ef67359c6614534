//! Single-hidden-layer feed-forward classifier: sigmoid activations,
//! cross-entropy loss, monotone quasi-Newton training with backtracking
//! line search, and Garson connection-weight importance.
//!
//! Inputs are standardized internally at fit time; the parameters are
//! stored on the fit and applied again at prediction time.

use rand::Rng;
use thiserror::Error;

use crate::rng::substream;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("loss became non-finite at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("prediction rows have {got} columns, net expects {expected}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("all connection weights are zero; importance shares undefined")]
    AllZeroWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden_units: usize,
    pub max_iter: usize,
    pub init_range: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden_units: 10, max_iter: 100, init_range: 0.5, weight_decay: 0.0, seed: 0 }
    }
}

/// Parameter layout: input->hidden weights (p+1 rows including bias, k
/// columns), then hidden->output weights (k entries plus bias).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub inputs: usize,
    pub hidden: usize,
}

impl NetShape {
    pub fn n_params(&self) -> usize {
        (self.inputs + 1) * self.hidden + self.hidden + 1
    }

    /// index of W1[input j or bias at j = inputs][hidden h]
    pub fn w1(&self, j: usize, h: usize) -> usize {
        j * self.hidden + h
    }

    /// index of W2[hidden h or bias at h = hidden]
    pub fn w2(&self, h: usize) -> usize {
        (self.inputs + 1) * self.hidden + h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetFit {
    pub shape: NetShape,
    pub params: Vec<f64>,
    /// standardization applied to inputs at fit time
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub config: NetConfig,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Output pre-activation for one (already standardized) row.
fn forward_pre(shape: &NetShape, params: &[f64], row: &[f64], hidden_out: &mut [f64]) -> f64 {
    let k = shape.hidden;
    for h in 0..k {
        let mut a = params[shape.w1(shape.inputs, h)];
        for (j, &x) in row.iter().enumerate() {
            a += params[shape.w1(j, h)] * x;
        }
        hidden_out[h] = sigmoid(a);
    }
    let mut u = params[shape.w2(k)];
    for h in 0..k {
        u += params[shape.w2(h)] * hidden_out[h];
    }
    u
}

/// Mean cross-entropy over the batch plus the quadratic weight penalty.
pub fn net_loss(shape: &NetShape, params: &[f64], rows: &[Vec<f64>], y: &[u8], weight_decay: f64) -> f64 {
    let mut hidden = vec![0.0; shape.hidden];
    let ce: f64 = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let u = forward_pre(shape, params, row, &mut hidden);
            log1pexp(u) - f64::from(yi) * u
        })
        .sum::<f64>()
        / rows.len() as f64;
    let penalty: f64 = params.iter().map(|&w| w * w).sum();
    ce + weight_decay * penalty
}

/// Exact analytic gradient of [`net_loss`] by backpropagation.
pub fn net_gradient(shape: &NetShape, params: &[f64], rows: &[Vec<f64>], y: &[u8], weight_decay: f64) -> Vec<f64> {
    let k = shape.hidden;
    let p = shape.inputs;
    let mut grad = vec![0.0; shape.n_params()];
    let mut hidden = vec![0.0; k];
    let inv_n = 1.0 / rows.len() as f64;
    for (row, &yi) in rows.iter().zip(y) {
        let u = forward_pre(shape, params, row, &mut hidden);
        let delta_out = (sigmoid(u) - f64::from(yi)) * inv_n;
        grad[shape.w2(k)] += delta_out;
        for h in 0..k {
            grad[shape.w2(h)] += delta_out * hidden[h];
            let delta_h = delta_out * params[shape.w2(h)] * hidden[h] * (1.0 - hidden[h]);
            grad[shape.w1(p, h)] += delta_h;
            for (j, &x) in row.iter().enumerate() {
                grad[shape.w1(j, h)] += delta_h * x;
            }
        }
    }
    for (g, &w) in grad.iter_mut().zip(params) {
        *g += 2.0 * weight_decay * w;
    }
    grad
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const LBFGS_MEMORY: usize = 10;
const GRAD_TOL: f64 = 1e-10;

/// Limited-memory quasi-Newton minimization with an Armijo backtracking
/// line search; the loss is nonincreasing across accepted iterations.
fn minimize<F, G>(
    loss: F,
    gradient: G,
    mut params: Vec<f64>,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize, bool), NetError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut f = loss(&params);
    if !f.is_finite() {
        return Err(NetError::NonFiniteLoss(0));
    }
    let mut g = gradient(&params);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, rho)
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=max_iter {
        iterations = iter;
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < GRAD_TOL {
            converged = true;
            break;
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|&v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let alpha = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(yv) {
                *di -= alpha * yi;
            }
            alphas.push(alpha);
        }
        if let Some((s, yv, _)) = history.last() {
            let gamma = dot(s, yv) / dot(yv, yv);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        }
        for ((s, yv, rho), alpha) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(yv, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alpha - beta) * si;
            }
        }

        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // fall back to steepest descent if curvature info is unusable
            d = g.iter().map(|&v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = params.iter().zip(&d).map(|(&p, &di)| p + step * di).collect();
            let cf = loss(&candidate);
            if !cf.is_finite() {
                step *= 0.5;
                continue;
            }
            if cf <= f + 1e-4 * step * slope {
                let cg = gradient(&candidate);
                let s: Vec<f64> = candidate.iter().zip(&params).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = cg.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &yv);
                if sy > 1e-12 {
                    if history.len() == LBFGS_MEMORY {
                        history.remove(0);
                    }
                    let rho = 1.0 / sy;
                    history.push((s, yv, rho));
                }
                params = candidate;
                f = cf;
                g = cg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Ok((params, f, iterations, converged))
}

/// Fits the network on raw rows; standardization happens inside and its
/// parameters travel with the fit. Deterministic given the config.
pub fn fit_net(rows: &[Vec<f64>], y: &[u8], cfg: &NetConfig) -> Result<NetFit, NetError> {
    let n = rows.len();
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(NetError::DegenerateLabels);
    }
    let p = rows.first().map_or(0, Vec::len);
    let shape = NetShape { inputs: p, hidden: cfg.hidden_units.max(1) };

    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let sds: Vec<f64> = (0..p)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let std_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(means.iter().zip(&sds)).map(|(&v, (&m, &s))| (v - m) / s).collect())
        .collect();

    let mut rng = substream(cfg.seed, "net/init", 0);
    let init: Vec<f64> =
        (0..shape.n_params()).map(|_| rng.gen_range(-cfg.init_range..cfg.init_range)).collect();

    let decay = cfg.weight_decay;
    let (params, final_loss, iterations, converged) = minimize(
        |theta| net_loss(&shape, theta, &std_rows, y, decay),
        |theta| net_gradient(&shape, theta, &std_rows, y, decay),
        init,
        cfg.max_iter,
    )?;

    Ok(NetFit { shape, params, means, sds, final_loss, iterations, converged, config: cfg.clone() })
}

/// Forward pass with the stored standardization.
pub fn predict_net(fit: &NetFit, rows: &[Vec<f64>], threshold: f64) -> Result<(Vec<f64>, Vec<u8>), NetError> {
    let width = rows.first().map_or(fit.shape.inputs, Vec::len);
    if width != fit.shape.inputs {
        return Err(NetError::ColumnMismatch { expected: fit.shape.inputs, got: width });
    }
    let mut hidden = vec![0.0; fit.shape.hidden];
    let probs: Vec<f64> = rows
        .iter()
        .map(|row| {
            let std_row: Vec<f64> = row
                .iter()
                .zip(fit.means.iter().zip(&fit.sds))
                .map(|(&v, (&m, &s))| (v - m) / s)
                .collect();
            sigmoid(forward_pre(&fit.shape, &fit.params, &std_row, &mut hidden))
        })
        .collect();
    let classes = probs.iter().map(|&pr| u8::from(pr >= threshold)).collect();
    Ok((probs, classes))
}

/// Garson's algorithm: per-input importance shares from products of
/// absolute connection weights, biases excluded, normalized to sum to 1.
pub fn garson_importance(fit: &NetFit) -> Result<Vec<f64>, NetError> {
    let p = fit.shape.inputs;
    let k = fit.shape.hidden;
    let mut scores = vec![0.0; p];
    for h in 0..k {
        let out_w = fit.params[fit.shape.w2(h)].abs();
        let denom: f64 = (0..p).map(|j| fit.params[fit.shape.w1(j, h)].abs() * out_w).sum();
        if denom == 0.0 {
            continue;
        }
        for (j, score) in scores.iter_mut().enumerate() {
            *score += fit.params[fit.shape.w1(j, h)].abs() * out_w / denom;
        }
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return Err(NetError::AllZeroWeights);
    }
    for s in &mut scores {
        *s /= total;
    }
    Ok(scores)
}
