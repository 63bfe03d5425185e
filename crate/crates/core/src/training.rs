//! Iterative training toward internal consistency.
//!
//! The objective is the reconstruction-ICA form
//! `Σ_v ‖W'Wv − v‖² + λ‖Wv‖₁` where `W'` is either `Wᵀ` (transpose mode), a
//! separately learned matrix (non-transpose mode), or the concatenated pair
//! `W'|U'` acting on `W|U` (residue mode). Optimisation is plain gradient
//! descent with step halving; the L1 term uses the subgradient `sign(Wv)`
//! with `sign(0) = 0`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::consistency::{self, sorted_eigen, ConsistencyError, Matrix, Vector};
use crate::util;

/// Objective value above which training is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Maximum number of step halvings tried per epoch.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("objective diverged at epoch {epoch} (value {value:e})")]
    Diverged { epoch: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial weights are rank deficient")]
    RankDeficient,
    #[error("malformed data set: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TrainingError>;

impl From<ConsistencyError> for TrainingError {
    fn from(e: ConsistencyError) -> Self {
        match e {
            ConsistencyError::DimensionMismatch { expected, found } => {
                TrainingError::DimensionMismatch { expected, found }
            }
            ConsistencyError::RankDeficient { .. } => TrainingError::RankDeficient,
            other => TrainingError::Parse(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// `W' = Wᵀ`
    Transpose,
    /// `W'` learned alongside `W`.
    NonTranspose,
    /// `W|U` and `W'|U'` learned together.
    WithResidue,
}

impl std::str::FromStr for TrainMode {
    type Err = TrainingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transpose" => Ok(Self::Transpose),
            "non_transpose" | "non-transpose" => Ok(Self::NonTranspose),
            "with_residue" | "with-residue" => Ok(Self::WithResidue),
            other => Err(TrainingError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Rows of `U` in residue mode; defaults to `dim − hidden` (at least 1).
    pub residue_dim: Option<usize>,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        Self { lambda: 0.0, learning_rate: 1.0, epochs: 1000, seed: 0, mode, residue_dim: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(TrainingError::InvalidConfig("lambda must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(TrainingError::InvalidConfig("learning rate must lie in (0, 1]".into()));
        }
        if self.epochs == 0 {
            return Err(TrainingError::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Visible states used for training, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    samples: Vec<Vector>,
    dim: usize,
}

impl DataSet {
    pub fn new(samples: Vec<Vector>) -> Result<Self> {
        let dim = samples.first().map(|s| s.len()).unwrap_or(0);
        for s in &samples {
            if s.len() != dim {
                return Err(TrainingError::DimensionMismatch { expected: dim, found: s.len() });
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(TrainingError::Parse("non-finite sample".into()));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Uncentered second moment `Σ v vᵀ`.
    pub fn second_moment(&self) -> Matrix {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for v in &self.samples {
            m.ger(1.0, v, v, 1.0);
        }
        m
    }

    /// "count dim" header followed by one sample per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| TrainingError::Parse("empty data file".into()))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| TrainingError::Parse(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [count, dim] = counts[..] else {
            return Err(TrainingError::Parse(format!("header needs \"count dim\", got {header:?}")));
        };
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines.next().ok_or_else(|| TrainingError::Parse(format!("missing sample {i}")))?;
            let row = consistency::parse_reals(line).map_err(|e| TrainingError::Parse(e.to_string()))?;
            if row.len() != dim {
                return Err(TrainingError::Parse(format!("sample {i} has {} entries, expected {dim}", row.len())));
            }
            samples.push(Vector::from_vec(row));
        }
        let mut data = Self::new(samples)?;
        data.dim = dim;
        Ok(data)
    }

    pub fn format(&self) -> String {
        let mut out = format!("{} {}\n", self.samples.len(), self.dim);
        for s in &self.samples {
            let row: Vec<String> = s.iter().map(|x| format!("{:.16e}", x)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainingError::Io(e.to_string()))?;
        Self::parse(&text)
    }
}

fn check_cols(w: &Matrix, data: &DataSet) -> Result<()> {
    if w.ncols() != data.dim() {
        return Err(TrainingError::DimensionMismatch { expected: w.ncols(), found: data.dim() });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Σ_v ‖WᵀWv − v‖² + λ‖Wv‖₁`
pub fn rica_objective(w: &Matrix, data: &DataSet, lambda: f64) -> Result<f64> {
    check_cols(w, data)?;
    let params = Params { w: w.clone(), w_gen: None, u: None, u_gen: None };
    let (recon, sparse) = params.terms(data, lambda);
    Ok(recon + sparse)
}

/// Analytic (sub)gradient of [`rica_objective`] with respect to `W`.
pub fn rica_gradient(w: &Matrix, data: &DataSet, lambda: f64) -> Result<Matrix> {
    check_cols(w, data)?;
    let params = Params { w: w.clone(), w_gen: None, u: None, u_gen: None };
    Ok(params.gradient(data, lambda).w)
}

/// `‖(WᵀW − I) E Λ^{1/2}‖²_F` with `E Λ Eᵀ = Σ v vᵀ`.
pub fn orthonormality_cost(w: &Matrix, data: &DataSet) -> Result<f64> {
    check_cols(w, data)?;
    let d = data.dim();
    let (values, vectors) = sorted_eigen(&data.second_moment());
    let mut scaled = vectors;
    for (i, value) in values.iter().enumerate() {
        let s = value.max(0.0).sqrt();
        scaled.column_mut(i).scale_mut(s);
    }
    let gap = w.transpose() * w - Matrix::identity(d, d);
    Ok((gap * scaled).norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
struct Params {
    w: Matrix,
    w_gen: Option<Matrix>,
    u: Option<Matrix>,
    u_gen: Option<Matrix>,
}

impl Params {
    /// Applies the generative side to `(Wv, Uv)`.
    fn reconstruct(&self, v: &Vector) -> (Vector, Vector, Option<Vector>) {
        let h = &self.w * v;
        let mut out = match &self.w_gen {
            Some(g) => g * &h,
            None => self.w.transpose() * &h,
        };
        let r = self.u.as_ref().map(|u| u * v);
        if let (Some(r), Some(ug)) = (&r, &self.u_gen) {
            out += ug * r;
        }
        (h, out, r)
    }

    fn terms(&self, data: &DataSet, lambda: f64) -> (f64, f64) {
        let mut recon = 0.0;
        let mut sparse = 0.0;
        for v in data.samples() {
            let (h, out, _) = self.reconstruct(v);
            recon += (out - v).norm_squared();
            sparse += h.iter().map(|x| x.abs()).sum::<f64>();
        }
        (recon, lambda * sparse)
    }

    fn gradient(&self, data: &DataSet, lambda: f64) -> Params {
        let mut gw = Matrix::zeros(self.w.nrows(), self.w.ncols());
        let mut gwg = self.w_gen.as_ref().map(|m| Matrix::zeros(m.nrows(), m.ncols()));
        let mut gu = self.u.as_ref().map(|m| Matrix::zeros(m.nrows(), m.ncols()));
        let mut gug = self.u_gen.as_ref().map(|m| Matrix::zeros(m.nrows(), m.ncols()));
        for v in data.samples() {
            let (h, out, r) = self.reconstruct(v);
            let res = out - v;
            match &self.w_gen {
                None => {
                    // d/dW ‖WᵀWv − v‖² = 2 (h resᵀ + W res vᵀ)
                    gw.ger(2.0, &h, &res, 1.0);
                    let w_res = &self.w * &res;
                    gw.ger(2.0, &w_res, v, 1.0);
                }
                Some(g) => {
                    if let Some(gwg) = gwg.as_mut() {
                        gwg.ger(2.0, &res, &h, 1.0);
                    }
                    let back = g.transpose() * &res;
                    gw.ger(2.0, &back, v, 1.0);
                }
            }
            if let (Some(r), Some(ug)) = (&r, &self.u_gen) {
                if let Some(gug) = gug.as_mut() {
                    gug.ger(2.0, &res, r, 1.0);
                }
                if let Some(gu) = gu.as_mut() {
                    let back = ug.transpose() * &res;
                    gu.ger(2.0, &back, v, 1.0);
                }
            }
            if lambda != 0.0 {
                let s = h.map(sign);
                gw.ger(lambda, &s, v, 1.0);
            }
        }
        Params { w: gw, w_gen: gwg, u: gu, u_gen: gug }
    }

    fn step(&self, grad: &Params, size: f64) -> Params {
        fn sub(a: &Option<Matrix>, b: &Option<Matrix>, size: f64) -> Option<Matrix> {
            match (a, b) {
                (Some(a), Some(b)) => Some(a - b * size),
                _ => None,
            }
        }
        Params {
            w: &self.w - &grad.w * size,
            w_gen: sub(&self.w_gen, &grad.w_gen, size),
            u: sub(&self.u, &grad.u, size),
            u_gen: sub(&self.u_gen, &grad.u_gen, size),
        }
    }

    fn grad_norm(&self) -> f64 {
        let mut total = self.w.norm_squared();
        for m in [&self.w_gen, &self.u, &self.u_gen].into_iter().flatten() {
            total += m.norm_squared();
        }
        total.sqrt()
    }
}

/// Entries i.i.d. uniform in `[−0.5, 0.5] / √d`.
pub fn init_weights<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let scale = 1.0 / (cols.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-0.5..=0.5) * scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub reconstruction: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedWeights {
    pub forward: Matrix,
    /// Present unless training in transpose mode.
    pub generative: Option<Matrix>,
    pub residue_forward: Option<Matrix>,
    pub residue_generative: Option<Matrix>,
    pub history: Vec<EpochRecord>,
    pub final_objective: f64,
    pub final_reconstruction: f64,
}

impl TrainedWeights {
    /// The generative matrix actually in use (`Wᵀ` in transpose mode).
    pub fn effective_generative(&self) -> Matrix {
        self.generative.clone().unwrap_or_else(|| self.forward.transpose())
    }

    /// Per-epoch CSV: `epoch,objective,reconstruction_term,sparsity_term`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,objective,reconstruction_term,sparsity_term\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                util::fmt_real(r.objective),
                util::fmt_real(r.reconstruction),
                util::fmt_real(r.sparsity)
            );
        }
        out
    }

    /// `(W'W + U'U) v` for a single visible state.
    pub fn reconstruct(&self, v: &Vector) -> Vector {
        let mut out = self.effective_generative() * (&self.forward * v);
        if let (Some(u), Some(ug)) = (&self.residue_forward, &self.residue_generative) {
            out += ug * (u * v);
        }
        out
    }
}

/// Gradient descent with step halving; each epoch starts from twice the last
/// accepted step (capped by the configured learning rate).
pub fn train(config: &TrainConfig, data: &DataSet, w_init: &Matrix) -> Result<TrainedWeights> {
    config.validate()?;
    check_cols(w_init, data)?;
    if w_init.nrows() >= w_init.ncols() && consistency::left_inverse(w_init).is_err() {
        return Err(TrainingError::RankDeficient);
    }
    let d = data.dim();
    let hidden = w_init.nrows();
    let mut rng = util::seeded(config.seed);
    let mut params = match config.mode {
        TrainMode::Transpose => Params { w: w_init.clone(), w_gen: None, u: None, u_gen: None },
        TrainMode::NonTranspose => Params {
            w: w_init.clone(),
            w_gen: Some(init_weights(d, hidden, &mut rng)),
            u: None,
            u_gen: None,
        },
        TrainMode::WithResidue => {
            let k = config.residue_dim.unwrap_or_else(|| d.saturating_sub(hidden).max(1));
            Params {
                w: w_init.clone(),
                w_gen: Some(init_weights(d, hidden, &mut rng)),
                u: Some(init_weights(k, d, &mut rng)),
                u_gen: Some(init_weights(d, k, &mut rng)),
            }
        }
    };

    let (mut recon, mut sparse) = params.terms(data, config.lambda);
    let mut history = Vec::new();
    let mut step = config.learning_rate;
    for epoch in 1..=config.epochs {
        let current = recon + sparse;
        let grad = params.gradient(data, config.lambda);
        if grad.grad_norm() == 0.0 {
            history.push(EpochRecord { epoch, objective: current, reconstruction: recon, sparsity: sparse });
            break;
        }
        let mut size = (2.0 * step).min(config.learning_rate);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = params.step(&grad, size);
            let (r, s) = candidate.terms(data, config.lambda);
            if r + s <= current {
                accepted = Some((candidate, r, s));
                break;
            }
            size *= 0.5;
        }
        let Some((candidate, r, s)) = accepted else {
            history.push(EpochRecord { epoch, objective: current, reconstruction: recon, sparsity: sparse });
            break;
        };
        let value = r + s;
        if !value.is_finite() || value > DIVERGENCE_LIMIT {
            return Err(TrainingError::Diverged { epoch, value });
        }
        params = candidate;
        recon = r;
        sparse = s;
        step = size;
        history.push(EpochRecord { epoch, objective: value, reconstruction: r, sparsity: s });
    }
    if !(recon + sparse).is_finite() || recon + sparse > DIVERGENCE_LIMIT {
        return Err(TrainingError::Diverged { epoch: 0, value: recon + sparse });
    }

    Ok(TrainedWeights {
        forward: params.w,
        generative: params.w_gen,
        residue_forward: params.u,
        residue_generative: params.u_gen,
        history,
        final_objective: recon + sparse,
        final_reconstruction: recon,
    })
}
