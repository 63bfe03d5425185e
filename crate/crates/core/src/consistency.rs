//! Dense linear layers satisfying internal consistency.
//!
//! A layer maps a visible state `v` to a hidden state `h = W v` and back
//! with a generative matrix `W'`. The layer preserves the variance of its
//! visible states when `W' W = I`, which makes every generative pass land on
//! an equilibrium after a single step. Layers built through
//! [`LinearLayer::from_forward`] use the minimum-norm left inverse and carry a
//! certification flag recording whether the identity holds numerically.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::util;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance on `‖W'W − I‖_F` for a layer to be certified.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Relative singular value below which a matrix counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Eigenvalue clamp used by positive semidefinite checks.
pub const EIGEN_TOL: f64 = 1e-10;
/// Largest singular value ratio accepted at certification.
pub const MAX_CONDITION: f64 = 1e10;
/// Largest product of layer condition numbers a [`LayerStack`] accepts.
pub const MAX_STACK_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsistencyError {
    #[error("matrix is rank deficient (smallest singular value {smallest:e}, largest {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("I - W^T W is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotDecomposable { eigenvalue: f64 },
    #[error("hidden dimension {hidden} is smaller than visible dimension {visible}")]
    TooNarrow { visible: usize, hidden: usize },
    #[error("stack condition {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("malformed matrix text: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ConsistencyError>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(ConsistencyError::DimensionMismatch { expected, found })
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ConsistencyError::NonFinite)
    }
}

/// Frobenius distance between `m` and the identity of the same (square) shape.
pub fn identity_error(m: &Matrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    (m - Matrix::identity(n, n)).norm()
}

/// Singular value ratio `σ_max / σ_min` (infinite for rank-deficient input).
pub fn condition_number(w: &Matrix) -> f64 {
    let sv = w.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn spectral_norm(w: &Matrix) -> f64 {
    if w.is_empty() {
        0.0
    } else {
        w.singular_values().max()
    }
}

/// Minimum-norm left inverse `(WᵀW)⁻¹Wᵀ`, evaluated through the SVD.
pub fn left_inverse(w: &Matrix) -> Result<Matrix> {
    check_finite(w)?;
    if w.ncols() == 0 {
        return Ok(Matrix::zeros(0, w.nrows()));
    }
    if w.nrows() < w.ncols() {
        let sv = w.singular_values();
        return Err(ConsistencyError::RankDeficient { smallest: 0.0, largest: sv.max() });
    }
    let svd = w.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if !(smallest > RANK_TOL * largest) {
        return Err(ConsistencyError::RankDeficient { smallest, largest });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    // W = U Σ Vᵀ  =>  W⁺ = V Σ⁻¹ Uᵀ
    let mut sigma_inv_ut = u.transpose();
    for (i, s) in svd.singular_values.iter().enumerate() {
        sigma_inv_ut.row_mut(i).scale_mut(1.0 / s);
    }
    Ok(v_t.transpose() * sigma_inv_ut)
}

/// Common contract for layers that can sit in a [`LayerStack`].
pub trait ConsistentLayer: Send + Sync {
    fn visible_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn forward(&self, v: &Vector) -> Result<Vector>;
    fn generative(&self, h: &Vector) -> Result<Vector>;
    /// Bound on how much the generative pass amplifies relative error in `h`.
    fn condition_number(&self) -> f64;
}

/// A dense linear layer: `h = W v`, `v = W' h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    forward: Matrix,
    generative: Matrix,
    certified: bool,
    condition: f64,
}

impl LinearLayer {
    /// Pairs a forward and a generative matrix. The certification flag is set
    /// only when `‖W'W − I‖_F ≤ 1e−8` and the forward matrix is well conditioned.
    pub fn new(forward: Matrix, generative: Matrix) -> Result<Self> {
        check_finite(&forward)?;
        check_finite(&generative)?;
        if forward.nrows() < forward.ncols() {
            return Err(ConsistencyError::TooNarrow {
                visible: forward.ncols(),
                hidden: forward.nrows(),
            });
        }
        check_len(forward.nrows(), generative.ncols())?;
        check_len(forward.ncols(), generative.nrows())?;
        let certified = identity_error(&(&generative * &forward)) <= CONSISTENCY_TOL
            && condition_number(&forward) <= MAX_CONDITION;
        let condition = spectral_norm(&forward) * spectral_norm(&generative);
        Ok(Self { forward, generative, certified, condition })
    }

    /// Builds the layer from its forward matrix using [`left_inverse`].
    pub fn from_forward(forward: Matrix) -> Result<Self> {
        let generative = left_inverse(&forward)?;
        Self::new(forward, generative)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim, dim), Matrix::identity(dim, dim)).expect("identity layer")
    }

    /// Draws Gaussian forward weights until the resulting layer certifies.
    pub fn random<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if hidden < visible {
            return Err(ConsistencyError::TooNarrow { visible, hidden });
        }
        loop {
            let w = Matrix::from_fn(hidden, visible, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Ok(layer) = Self::from_forward(w) {
                if layer.certified {
                    return Ok(layer);
                }
            }
        }
    }

    pub fn forward_matrix(&self) -> &Matrix {
        &self.forward
    }

    pub fn generative_matrix(&self) -> &Matrix {
        &self.generative
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// `‖W'W − I‖_F`
    pub fn consistency_error(&self) -> f64 {
        identity_error(&(&self.generative * &self.forward))
    }
}

impl ConsistentLayer for LinearLayer {
    fn visible_dim(&self) -> usize {
        self.forward.ncols()
    }

    fn hidden_dim(&self) -> usize {
        self.forward.nrows()
    }

    fn forward(&self, v: &Vector) -> Result<Vector> {
        check_len(self.visible_dim(), v.len())?;
        Ok(&self.forward * v)
    }

    fn generative(&self, h: &Vector) -> Result<Vector> {
        check_len(self.hidden_dim(), h.len())?;
        Ok(&self.generative * h)
    }
    /// `‖W‖₂‖W'‖₂`, which is the ordinary condition number when `W'` is the pseudoinverse.
    fn condition_number(&self) -> f64 {
        self.condition
    }
}

/// Returns `W v`.
pub fn layer_forward(layer: &LinearLayer, v: &Vector) -> Result<Vector> {
    layer.forward(v)
}

/// Returns `W' h`.
pub fn layer_generative(layer: &LinearLayer, h: &Vector) -> Result<Vector> {
    layer.generative(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    /// Largest `‖gen(fwd(v)) − v‖∞` over the sampled unit vectors.
    pub max_error: f64,
    /// `‖W'W − I‖_F`
    pub identity_error: f64,
    pub pass: bool,
}

/// Samples random unit vectors and measures how well the layer reconstructs them.
pub fn check_variance_preservation(layer: &LinearLayer, samples: usize, seed: u64) -> VarianceReport {
    let mut rng = util::seeded(seed);
    let dim = layer.visible_dim();
    let mut max_error: f64 = 0.0;
    for _ in 0..samples {
        let v = random_unit(dim, &mut rng);
        let back = &layer.generative * (&layer.forward * &v);
        max_error = max_error.max((back - &v).amax());
    }
    let identity_error = layer.consistency_error();
    VarianceReport {
        max_error,
        identity_error,
        pass: max_error <= CONSISTENCY_TOL && identity_error <= CONSISTENCY_TOL,
    }
}

pub(crate) fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    if dim == 0 {
        return Vector::zeros(0);
    }
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Residue weights completing a forward matrix to a variance-preserving pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueExtraction {
    /// `U = Λ^{1/2} Eᵀ`, one row per retained eigenpair.
    pub residue_forward: Matrix,
    /// `U' = Uᵀ`
    pub residue_generative: Matrix,
    /// Every eigenvalue of `I − WᵀW`, descending, negatives within tolerance clamped to 0.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: Matrix,
}

/// Flips the sign of each column so that its first nonzero entry is positive.
fn canonical_signs(e: &mut Matrix) {
    for mut col in e.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue with canonical signs.
pub(crate) fn sorted_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonical_signs(&mut vectors);
    (values, vectors)
}

/// Extracts `U` with `WᵀW + UᵀU = I` from the eigendecomposition of `I − WᵀW`.
pub fn extract_residue(w: &Matrix) -> Result<ResidueExtraction> {
    check_finite(w)?;
    let d = w.ncols();
    let gap = Matrix::identity(d, d) - w.transpose() * w;
    let (mut values, vectors) = sorted_eigen(&gap);
    if let Some(&lowest) = values.last() {
        if lowest < -EIGEN_TOL {
            return Err(ConsistencyError::NotDecomposable { eigenvalue: lowest });
        }
    }
    for value in values.iter_mut() {
        if *value < 0.0 {
            *value = 0.0;
        }
    }
    let kept: Vec<usize> = (0..d).filter(|&i| values[i] > EIGEN_TOL).collect();
    let mut u = Matrix::zeros(kept.len(), d);
    for (row, &i) in kept.iter().enumerate() {
        let scaled = vectors.column(i).transpose() * values[i].sqrt();
        u.set_row(row, &scaled);
    }
    Ok(ResidueExtraction {
        residue_generative: u.transpose(),
        residue_forward: u,
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// `W'h + U'r`
pub fn residue_reconstruct(
    w_gen: &Matrix,
    u_gen: &Matrix,
    h: &Vector,
    r: &Vector,
) -> Result<Vector> {
    check_len(w_gen.ncols(), h.len())?;
    check_len(u_gen.ncols(), r.len())?;
    check_len(w_gen.nrows(), u_gen.nrows())?;
    Ok(w_gen * h + u_gen * r)
}

/// An ordered stack of layers; forward runs bottom-up, generative top-down.
#[derive(Default)]
pub struct LayerStack {
    layers: Vec<Box<dyn ConsistentLayer>>,
}

impl LayerStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a layer on top, checking it fits the current top dimension.
    pub fn push<L: ConsistentLayer + 'static>(&mut self, layer: L) -> Result<()> {
        self.push_boxed(Box::new(layer))
    }

    /// Rejects a layer that would push [`LayerStack::condition_number`] past
    /// [`MAX_STACK_CONDITION`]; rounding in the forward pass gets amplified by
    /// up to that product on the way back down.
    pub fn push_boxed(&mut self, layer: Box<dyn ConsistentLayer>) -> Result<()> {
        if let Some(top) = self.layers.last() {
            check_len(top.hidden_dim(), layer.visible_dim())?;
        }
        let condition = self.condition_number() * layer.condition_number();
        if !(condition <= MAX_STACK_CONDITION) {
            return Err(ConsistencyError::IllConditioned { condition, limit: MAX_STACK_CONDITION });
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn with<L: ConsistentLayer + 'static>(mut self, layer: L) -> Result<Self> {
        self.push(layer)?;
        Ok(self)
    }

    /// Product of the layer condition numbers (1 for an empty stack).
    pub fn condition_number(&self) -> f64 {
        self.layers.iter().map(|l| l.condition_number()).product()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn visible_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.visible_dim())
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.hidden_dim())
    }

    pub fn forward(&self, v: &Vector) -> Result<Vector> {
        self.layers.iter().try_fold(v.clone(), |x, layer| layer.forward(&x))
    }

    pub fn generative(&self, h: &Vector) -> Result<Vector> {
        self.layers.iter().rev().try_fold(h.clone(), |x, layer| layer.generative(&x))
    }
}

pub fn stack_forward(stack: &LayerStack, v: &Vector) -> Result<Vector> {
    stack.forward(v)
}

pub fn stack_generative(stack: &LayerStack, h: &Vector) -> Result<Vector> {
    stack.generative(h)
}

/// Renders a matrix as "rows cols" followed by one space-separated row per line.
pub fn format_matrix(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{:.16e}", x)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Parses the text produced by [`format_matrix`] from a line iterator,
/// consuming exactly the header and `rows` lines.
pub(crate) fn parse_matrix_lines<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<Matrix> {
    let header = lines
        .next()
        .ok_or_else(|| ConsistencyError::Parse("missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| ConsistencyError::Parse(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(ConsistencyError::Parse(format!("header needs two counts, got {header:?}")));
    };
    let mut entries = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| ConsistencyError::Parse(format!("missing row {r}")))?;
        let row: Vec<f64> = if cols == 0 {
            Vec::new()
        } else {
            parse_reals(line)?
        };
        if row.len() != cols {
            return Err(ConsistencyError::Parse(format!(
                "row {r} has {} entries, expected {cols}",
                row.len()
            )));
        }
        entries.extend(row);
    }
    let m = Matrix::from_row_slice(rows, cols, &entries);
    check_finite(&m)?;
    Ok(m)
}

pub(crate) fn parse_reals(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ConsistencyError::Parse(format!("bad real {t:?}"))))
        .collect()
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    parse_matrix_lines(&mut lines)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, format_matrix(m)).map_err(|e| ConsistencyError::Io(e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| ConsistencyError::Io(e.to_string()))?;
    parse_matrix(&text)
}
