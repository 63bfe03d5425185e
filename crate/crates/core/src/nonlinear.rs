//! Non-linear layers that keep internal consistency.
//!
//! Three constructions are provided: mirror rectified pairs `ρ(Wv), ρ(−Wv)`,
//! basis sets `S_i` that split `Wv` into gated channels summing back to `Wv`,
//! and circular convolutions whose inverse kernel is built in the frequency
//! domain.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::consistency::{self, check_len, ConsistencyError, ConsistentLayer, LinearLayer, Vector};

/// Smallest spectral magnitude accepted for an invertible kernel.
pub const SPECTRAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearError {
    #[error(transparent)]
    Layer(#[from] ConsistencyError),
    #[error("kernel spectrum vanishes at frequency {frequency} (|F| = {magnitude:e})")]
    NonInvertibleKernel { frequency: usize, magnitude: f64 },
    #[error("kernel length {kernel} exceeds signal length {signal}")]
    KernelTooLong { kernel: usize, signal: usize },
    #[error("basis set does not partition the real line: {0}")]
    NotAPartition(String),
    #[error("expected {expected} channels, found {found}")]
    ChannelCount { expected: usize, found: usize },
    #[error("malformed kernel file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, NonlinearError>;

/// Rectifier used by the mirror pair; zero for every non-positive input.
pub fn rectify(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// A linear layer whose hidden state is the mirror pair `(ρ(Wv), ρ(−Wv))`.
#[derive(Debug, Clone)]
pub struct MirrorRectLayer {
    base: LinearLayer,
}

impl MirrorRectLayer {
    pub fn new(base: LinearLayer) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &LinearLayer {
        &self.base
    }
}

pub fn mirror_forward(layer: &MirrorRectLayer, v: &Vector) -> Result<(Vector, Vector)> {
    let wv = layer.base.forward(v)?;
    Ok((wv.map(rectify), wv.map(|x| rectify(-x))))
}

pub fn mirror_generative(layer: &MirrorRectLayer, h_pos: &Vector, h_neg: &Vector) -> Result<Vector> {
    check_len(layer.base.hidden_dim(), h_pos.len())?;
    check_len(layer.base.hidden_dim(), h_neg.len())?;
    Ok(layer.base.generative(&(h_pos - h_neg))?)
}

impl ConsistentLayer for MirrorRectLayer {
    fn visible_dim(&self) -> usize {
        self.base.visible_dim()
    }

    /// Positive channel followed by the negative channel.
    fn hidden_dim(&self) -> usize {
        2 * self.base.hidden_dim()
    }

    fn forward(&self, v: &Vector) -> consistency::Result<Vector> {
        let wv = self.base.forward(v)?;
        let n = wv.len();
        Ok(Vector::from_fn(2 * n, |i, _| if i < n { rectify(wv[i]) } else { rectify(-wv[i - n]) }))
    }

    fn generative(&self, h: &Vector) -> consistency::Result<Vector> {
        check_len(self.hidden_dim(), h.len())?;
        let n = self.base.hidden_dim();
        let diff = Vector::from_fn(n, |i, _| h[i] - h[i + n]);
        self.base.generative(&diff)
    }

    fn condition_number(&self) -> f64 {
        self.base.condition_number()
    }
}

/// One half-open gating band `[lower, upper)`; an infinite upper bound is inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    fn contains(&self, x: f64) -> bool {
        x >= self.lower && (x < self.upper || (self.upper == f64::INFINITY && x == f64::INFINITY))
    }
}

/// A list of elementwise selectors `S_i` that partition the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    bands: Vec<Band>,
}

impl BasisSet {
    /// Accepts bands in any order as long as, once sorted, they tile `[−∞, ∞]`.
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(NonlinearError::NotAPartition("no selectors".into()));
        }
        let mut sorted = bands.clone();
        sorted.sort_by(|a, b| a.lower.total_cmp(&b.lower));
        if sorted[0].lower != f64::NEG_INFINITY {
            return Err(NonlinearError::NotAPartition("lowest band must start at -inf".into()));
        }
        if sorted.last().map(|b| b.upper) != Some(f64::INFINITY) {
            return Err(NonlinearError::NotAPartition("highest band must end at +inf".into()));
        }
        for pair in sorted.windows(2) {
            if pair[0].upper != pair[1].lower {
                return Err(NonlinearError::NotAPartition(format!(
                    "gap or overlap between {} and {}",
                    pair[0].upper, pair[1].lower
                )));
            }
        }
        if sorted.iter().any(|b| !(b.lower < b.upper)) {
            return Err(NonlinearError::NotAPartition("empty band".into()));
        }
        Ok(Self { bands })
    }

    /// Bands split at the given ascending thresholds, lowest band first.
    pub fn from_thresholds(thresholds: &[f64]) -> Result<Self> {
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend_from_slice(thresholds);
        edges.push(f64::INFINITY);
        Self::new(edges.windows(2).map(|w| Band { lower: w[0], upper: w[1] }).collect())
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// `S_i(x)` resolved for a single entry.
    pub fn select(&self, i: usize, x: f64) -> f64 {
        if self.bands[i].contains(x) {
            1.0
        } else {
            0.0
        }
    }

    /// Channel index whose selector is active at `x`.
    pub fn channel_of(&self, x: f64) -> Option<usize> {
        self.bands.iter().position(|b| b.contains(x))
    }

    /// Splits a pre-activation vector into gated channels `S_i(x) ⊙ x`.
    pub fn split(&self, x: &Vector) -> Vec<Vector> {
        (0..self.bands.len())
            .map(|i| Vector::from_fn(x.len(), |j, _| if self.bands[i].contains(x[j]) { x[j] } else { 0.0 }))
            .collect()
    }
}

/// `S₀ = σ` (active for x ≥ 0) and `S₁ = 1 − σ`.
pub fn step_basis_pair() -> BasisSet {
    BasisSet::new(vec![
        Band { lower: 0.0, upper: f64::INFINITY },
        Band { lower: f64::NEG_INFINITY, upper: 0.0 },
    ])
    .expect("step pair partitions the line")
}

fn sum_channels(dim: usize, channels: &[Vector]) -> consistency::Result<Vector> {
    let mut total = Vector::zeros(dim);
    for h in channels {
        check_len(dim, h.len())?;
        total += h;
    }
    Ok(total)
}

pub fn basis_set_forward(layer: &LinearLayer, set: &BasisSet, v: &Vector) -> Result<Vec<Vector>> {
    let wv = layer.forward(v)?;
    Ok(set.split(&wv))
}

pub fn basis_set_generative(layer: &LinearLayer, channels: &[Vector]) -> Result<Vector> {
    let total = sum_channels(layer.hidden_dim(), channels)?;
    Ok(layer.generative(&total)?)
}

/// A linear layer followed by a basis-set split, usable inside a stack.
/// The hidden state is the concatenation of the channels.
#[derive(Debug, Clone)]
pub struct BasisSetLayer {
    pub base: LinearLayer,
    pub set: BasisSet,
}

impl ConsistentLayer for BasisSetLayer {
    fn visible_dim(&self) -> usize {
        self.base.visible_dim()
    }

    fn hidden_dim(&self) -> usize {
        self.set.len() * self.base.hidden_dim()
    }

    fn forward(&self, v: &Vector) -> consistency::Result<Vector> {
        let channels = self.set.split(&self.base.forward(v)?);
        let n = self.base.hidden_dim();
        Ok(Vector::from_fn(self.hidden_dim(), |i, _| channels[i / n][i % n]))
    }

    fn generative(&self, h: &Vector) -> consistency::Result<Vector> {
        check_len(self.hidden_dim(), h.len())?;
        let n = self.base.hidden_dim();
        let total = Vector::from_fn(n, |i, _| (0..self.set.len()).map(|c| h[c * n + i]).sum());
        self.base.generative(&total)
    }

    fn condition_number(&self) -> f64 {
        self.base.condition_number()
    }
}

/// Circular convolution of two equal-length signals, computed directly.
pub fn circular_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    assert_eq!(n, b.len());
    (0..n)
        .map(|k| (0..n).map(|j| a[j] * b[(k + n - j) % n]).sum())
        .collect()
}

/// An invertible circular convolution `h = W ∗ v` with `v = W' ∗ h`.
#[derive(Clone)]
pub struct ConvLayer {
    kernel: Vec<f64>,
    inverse_kernel: Vec<f64>,
    signal_length: usize,
    forward_fft: Arc<dyn Fft<f64>>,
    inverse_fft: Arc<dyn Fft<f64>>,
    kernel_spectrum: Vec<Complex64>,
    inverse_spectrum: Vec<Complex64>,
}

impl std::fmt::Debug for ConvLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvLayer")
            .field("kernel", &self.kernel)
            .field("inverse_kernel", &self.inverse_kernel)
            .field("signal_length", &self.signal_length)
            .finish()
    }
}

impl ConvLayer {
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// The inverse kernel spans the whole signal length.
    pub fn inverse_kernel(&self) -> &[f64] {
        &self.inverse_kernel
    }

    pub fn signal_length(&self) -> usize {
        self.signal_length
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.forward_fft.process(&mut buf);
        buf
    }

    fn apply(&self, spectrum: &[Complex64], x: &[f64]) -> Vec<f64> {
        let mut buf = self.spectrum(x);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        self.inverse_fft.process(&mut buf);
        let scale = 1.0 / self.signal_length as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// `W ∗ v`
    pub fn convolve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.signal_length, v.len()).map_err(NonlinearError::from)?;
        Ok(self.apply(&self.kernel_spectrum, v))
    }

    /// `W' ∗ h`
    pub fn deconvolve(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len(self.signal_length, h.len()).map_err(NonlinearError::from)?;
        Ok(self.apply(&self.inverse_spectrum, h))
    }
}

/// Builds the inverse kernel from the reciprocal of the zero-padded kernel spectrum.
pub fn conv_make(kernel: &[f64], signal_length: usize) -> Result<ConvLayer> {
    if kernel.len() > signal_length || kernel.is_empty() {
        return Err(NonlinearError::KernelTooLong { kernel: kernel.len(), signal: signal_length });
    }
    if kernel.iter().any(|x| !x.is_finite()) {
        return Err(ConsistencyError::NonFinite.into());
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward_fft = planner.plan_fft_forward(signal_length);
    let inverse_fft = planner.plan_fft_inverse(signal_length);

    let mut kernel_spectrum: Vec<Complex64> = (0..signal_length)
        .map(|i| Complex64::new(kernel.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    forward_fft.process(&mut kernel_spectrum);
    if let Some((frequency, c)) = kernel_spectrum
        .iter()
        .enumerate()
        .find(|(_, c)| !(c.norm() > SPECTRAL_TOL))
    {
        return Err(NonlinearError::NonInvertibleKernel { frequency, magnitude: c.norm() });
    }
    let inverse_spectrum: Vec<Complex64> = kernel_spectrum.iter().map(|c| c.inv()).collect();
    let mut buf = inverse_spectrum.clone();
    inverse_fft.process(&mut buf);
    let scale = 1.0 / signal_length as f64;
    let inverse_kernel = buf.iter().map(|c| c.re * scale).collect();

    Ok(ConvLayer {
        kernel: kernel.to_vec(),
        inverse_kernel,
        signal_length,
        forward_fft,
        inverse_fft,
        kernel_spectrum,
        inverse_spectrum,
    })
}

/// Gated channels `h_i = S_i(W∗v) ⊙ (W∗v)`, computed in the signal domain.
pub fn conv_basis_forward(layer: &ConvLayer, set: &BasisSet, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let wv = Vector::from_vec(layer.convolve(v)?);
    Ok(set.split(&wv).into_iter().map(|c| c.as_slice().to_vec()).collect())
}

/// `W' ∗ Σ_i h_i`
pub fn conv_basis_generative(layer: &ConvLayer, channels: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = layer.signal_length;
    let mut total = vec![0.0; n];
    for h in channels {
        check_len(n, h.len()).map_err(NonlinearError::from)?;
        for (t, x) in total.iter_mut().zip(h) {
            *t += x;
        }
    }
    layer.deconvolve(&total)
}

impl ConsistentLayer for ConvLayer {
    fn visible_dim(&self) -> usize {
        self.signal_length
    }

    fn hidden_dim(&self) -> usize {
        self.signal_length
    }

    fn forward(&self, v: &Vector) -> consistency::Result<Vector> {
        check_len(self.signal_length, v.len())?;
        Ok(Vector::from_vec(self.apply(&self.kernel_spectrum, v.as_slice())))
    }

    fn generative(&self, h: &Vector) -> consistency::Result<Vector> {
        check_len(self.signal_length, h.len())?;
        Ok(Vector::from_vec(self.apply(&self.inverse_spectrum, h.as_slice())))
    }

    /// Largest over smallest kernel spectrum magnitude.
    fn condition_number(&self) -> f64 {
        let (lo, hi) = self
            .kernel_spectrum
            .iter()
            .map(|c| c.norm())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
        hi / lo
    }
}

/// Parses a kernel file: one line of space-separated reals.
pub fn parse_kernel(text: &str) -> Result<Vec<f64>> {
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| NonlinearError::Parse("empty kernel file".into()))?;
    consistency::parse_reals(line).map_err(|e| NonlinearError::Parse(e.to_string()))
}

pub fn format_kernel(kernel: &[f64]) -> String {
    let parts: Vec<String> = kernel.iter().map(|x| format!("{:.16e}", x)).collect();
    format!("{}\n", parts.join(" "))
}

pub fn read_kernel(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| NonlinearError::Parse(e.to_string()))?;
    parse_kernel(&text)
}
