//! L2-regularized, squared-hinge linear SVM trained by dual coordinate
//! descent.
//!
//! For binary labels `y_i ∈ {-1, +1}` the solver minimizes the dual
//! `½‖w(α)‖² + Σ α_i²/(4C) − Σ α_i` over `α ≥ 0`, with
//! `w(α) = Σ α_i y_i x_i`. Each coordinate step is an exact projected
//! Newton step, so the dual objective never increases. A constant bias
//! feature is appended to every example and regularized with the weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sparse vector as `(feature index, value)` pairs in increasing index order.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinearError {
    #[error("training set is empty")]
    Empty,
    #[error("{examples} examples but {labels} labels")]
    LengthMismatch { examples: usize, labels: usize },
    #[error("label {0} is not -1 or +1")]
    InvalidLabel(f64),
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: u32, dim: usize },
    #[error("non-finite feature value in example {0}")]
    NonFinite(usize),
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Misclassification cost.
    pub c: f64,
    /// Stopping tolerance on the projected-gradient spread.
    pub eps: f64,
    pub max_epochs: usize,
    /// Value of the constant bias feature; zero disables the bias.
    pub bias: f64,
    /// Seed of the per-epoch coordinate permutation.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 0.1,
            eps: 1e-3,
            max_epochs: 1000,
            bias: 1.0,
            seed: 0x5eed,
        }
    }
}

/// A trained binary classifier: `score(x) = w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryModel {
    pub fn score(&self, x: &[(u32, f64)]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective after each epoch.
    pub dual_objective: Vec<f64>,
}

fn dot(w: &[f64], x: &[(u32, f64)]) -> f64 {
    x.iter().map(|&(i, v)| w[i as usize] * v).sum()
}

/// Primal objective `½‖w‖² + ½b² + C Σ max(0, 1 − y·score)²` (bias term
/// included only when the bias feature is enabled).
pub fn primal_objective(model: &BinaryModel, xs: &[SparseVec], ys: &[f64], cfg: &SolverConfig) -> f64 {
    let mut obj: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * 0.5;
    if cfg.bias != 0.0 {
        let bw = model.bias / cfg.bias;
        obj += 0.5 * bw * bw;
    }
    for (x, &y) in xs.iter().zip(ys) {
        let m = (1.0 - y * model.score(x)).max(0.0);
        obj += cfg.c * m * m;
    }
    obj
}

fn validate(xs: &[SparseVec], ys: &[f64], dim: usize, cfg: &SolverConfig) -> Result<(), LinearError> {
    if xs.is_empty() {
        return Err(LinearError::Empty);
    }
    if xs.len() != ys.len() {
        return Err(LinearError::LengthMismatch {
            examples: xs.len(),
            labels: ys.len(),
        });
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(LinearError::InvalidParameter("C must be positive"));
    }
    if !(cfg.eps > 0.0) {
        return Err(LinearError::InvalidParameter("eps must be positive"));
    }
    if !cfg.bias.is_finite() {
        return Err(LinearError::InvalidParameter("bias must be finite"));
    }
    if let Some(&y) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(LinearError::InvalidLabel(y));
    }
    for (n, x) in xs.iter().enumerate() {
        for &(i, v) in x {
            if i as usize >= dim {
                return Err(LinearError::IndexOutOfRange { index: i, dim });
            }
            if !v.is_finite() {
                return Err(LinearError::NonFinite(n));
            }
        }
    }
    Ok(())
}

/// Trains a binary model on examples of dimension `dim`.
pub fn train_binary(
    xs: &[SparseVec],
    ys: &[f64],
    dim: usize,
    cfg: &SolverConfig,
) -> Result<(BinaryModel, TrainReport), LinearError> {
    validate(xs, ys, dim, cfg)?;
    let n = xs.len();
    let diag = 1.0 / (2.0 * cfg.c);
    let bias2 = cfg.bias * cfg.bias;
    let qd: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().map(|&(_, v)| v * v).sum::<f64>() + bias2 + diag)
        .collect();

    let mut w = vec![0.0; dim];
    let mut wb = 0.0;
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport {
        epochs: 0,
        converged: false,
        dual_objective: Vec::new(),
    };

    while report.epochs < cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let g = y * (dot(&w, x) + wb * cfg.bias) - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(0.0);
                let d = (alpha[i] - old) * y;
                for &(j, v) in x {
                    w[j as usize] += d * v;
                }
                wb += d * cfg.bias;
            }
        }
        report.epochs += 1;
        let obj = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + wb * wb)
            + 0.5 * diag * alpha.iter().map(|a| a * a).sum::<f64>()
            - alpha.iter().sum::<f64>();
        report.dual_objective.push(obj);
        if pg_max - pg_min <= cfg.eps {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        tracing::warn!(epochs = report.epochs, "linear solver hit the epoch limit");
    }
    Ok((
        BinaryModel {
            weights: w,
            bias: wb * cfg.bias,
        },
        report,
    ))
}
