//! Missing-variance fillers: an exact most-recent-hash and a binary RBM.

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::consistency::{self, Matrix, Vector};
use crate::util;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("rbm has no hidden units")]
    NotTrainable,
    #[error("training produced non-finite parameters at epoch {0}")]
    Diverged(usize),
    #[error("data must be binary (0 or 1)")]
    NonBinary,
    #[error("malformed rbm text: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MemoryError>;

/// Associative store returning the latest value written for a key.
#[derive(Debug, Clone, PartialEq)]
pub struct MostRecentHash<K: Eq + Hash, V> {
    entries: HashMap<K, (V, u64)>,
    clock: u64,
}

impl<K: Eq + Hash, V> Default for MostRecentHash<K, V> {
    fn default() -> Self {
        Self { entries: HashMap::new(), clock: 0 }
    }
}

impl<K: Eq + Hash, V> MostRecentHash<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, key: K, value: V) {
        self.clock += 1;
        self.entries.insert(key, (value, self.clock));
    }

    pub fn read(&self, key: &K) -> Option<&V> {
        self.entries.get(key).map(|(v, _)| v)
    }

    /// Clock value at which `key` was last written.
    pub fn write_time(&self, key: &K) -> Option<u64> {
        self.entries.get(key).map(|(_, t)| *t)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &V)> {
        self.entries.iter().map(|(k, (v, _))| (k, v))
    }
}

pub fn mrh_write<K: Eq + Hash, V>(store: &mut MostRecentHash<K, V>, key: K, value: V) {
    store.write(key, value);
}

pub fn mrh_read<'a, K: Eq + Hash, V>(store: &'a MostRecentHash<K, V>, key: &K) -> Option<&'a V> {
    store.read(key)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RbmConfig {
    fn default() -> Self {
        Self { hidden_units: 16, learning_rate: 0.1, epochs: 1000, seed: 0 }
    }
}

/// Binary RBM whose visible layer is the concatenation `h | r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    /// visible × hidden
    pub weights: Matrix,
    pub visible_bias: Vector,
    pub hidden_bias: Vector,
    pub h_dim: usize,
    pub r_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmTraining {
    pub rbm: Rbm,
    /// Mean per-bit reconstruction error after each epoch.
    pub reconstruction_errors: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_bits<R: Rng + ?Sized>(p: &Vector, rng: &mut R) -> Vector {
    p.map(|q| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
}

impl Rbm {
    /// Zero weights and biases.
    pub fn zeroed(h_dim: usize, r_dim: usize, hidden_units: usize) -> Self {
        let visible = h_dim + r_dim;
        Self {
            weights: Matrix::zeros(visible, hidden_units),
            visible_bias: Vector::zeros(visible),
            hidden_bias: Vector::zeros(hidden_units),
            h_dim,
            r_dim,
        }
    }

    pub fn visible_dim(&self) -> usize {
        self.h_dim + self.r_dim
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.ncols()
    }

    pub fn hidden_probs(&self, v: &Vector) -> Vector {
        (self.weights.tr_mul(v) + &self.hidden_bias).map(sigmoid)
    }

    pub fn visible_probs(&self, hidden: &Vector) -> Vector {
        (&self.weights * hidden + &self.visible_bias).map(sigmoid)
    }

    /// Mean-field reconstruction `σ(W σ(Wᵀv + c) + b)`.
    pub fn reconstruct(&self, v: &Vector) -> Vector {
        self.visible_probs(&self.hidden_probs(v))
    }

    /// Mean absolute difference between `v` and its mean-field reconstruction.
    pub fn reconstruction_error(&self, data: &[Vector]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data.iter().map(|v| (self.reconstruct(v) - v).abs().sum()).sum();
        total / (data.len() * self.visible_dim()) as f64
    }

    /// Fraction of bits equal after thresholding the reconstruction at 0.5.
    pub fn bits_correct(&self, v: &Vector) -> f64 {
        let rec = self.reconstruct(v);
        let hits = rec.iter().zip(v.iter()).filter(|(p, x)| (**p >= 0.5) == (**x >= 0.5)).count();
        hits as f64 / v.len().max(1) as f64
    }

    pub fn format(&self) -> String {
        let mut out = consistency::format_matrix(&self.weights);
        let line = |v: &Vector| v.iter().map(|x| format!("{:.16e}", x)).collect::<Vec<_>>().join(" ");
        out.push_str(&line(&self.visible_bias));
        out.push('\n');
        out.push_str(&line(&self.hidden_bias));
        out.push('\n');
        out.push_str(&format!("{} {}\n", self.h_dim, self.r_dim));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let weights =
            consistency::parse_matrix_lines(&mut lines).map_err(|e| MemoryError::Parse(e.to_string()))?;
        let mut next = |what: &str| lines.next().ok_or_else(|| MemoryError::Parse(format!("missing {what}")));
        let vb = consistency::parse_reals(next("visible bias")?).map_err(|e| MemoryError::Parse(e.to_string()))?;
        let hb = consistency::parse_reals(next("hidden bias")?).map_err(|e| MemoryError::Parse(e.to_string()))?;
        let dims: Vec<usize> = next("dimensions")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| MemoryError::Parse(format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        let [h_dim, r_dim] = dims[..] else {
            return Err(MemoryError::Parse("dimension line needs \"h_dim r_dim\"".into()));
        };
        if vb.len() != weights.nrows() || hb.len() != weights.ncols() || h_dim + r_dim != weights.nrows() {
            return Err(MemoryError::Parse("bias or dimension sizes disagree with weights".into()));
        }
        Ok(Self {
            weights,
            visible_bias: Vector::from_vec(vb),
            hidden_bias: Vector::from_vec(hb),
            h_dim,
            r_dim,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.format()).map_err(|e| MemoryError::Io(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MemoryError::Io(e.to_string()))?;
        Self::parse(&text)
    }
}

/// Full-batch CD-1. Statistics use hidden probabilities; the negative phase
/// reconstructs visible probabilities from a hidden sample.
pub fn rbm_train_cd(data: &[Vector], h_dim: usize, config: &RbmConfig) -> Result<RbmTraining> {
    if config.hidden_units == 0 {
        return Err(MemoryError::NotTrainable);
    }
    let visible = data.first().map(|v| v.len()).unwrap_or(h_dim);
    if h_dim > visible {
        return Err(MemoryError::DimensionMismatch { expected: visible, found: h_dim });
    }
    for v in data {
        if v.len() != visible {
            return Err(MemoryError::DimensionMismatch { expected: visible, found: v.len() });
        }
        if v.iter().any(|x| *x != 0.0 && *x != 1.0) {
            return Err(MemoryError::NonBinary);
        }
    }
    let mut rng = util::seeded(config.seed);
    let mut rbm = Rbm::zeroed(h_dim, visible - h_dim, config.hidden_units);
    rbm.weights = Matrix::from_fn(visible, config.hidden_units, |_, _| rng.random_range(-0.01..0.01));
    let mut errors = Vec::with_capacity(config.epochs);
    if data.is_empty() {
        return Ok(RbmTraining { rbm, reconstruction_errors: errors });
    }
    let scale = config.learning_rate / data.len() as f64;
    for epoch in 1..=config.epochs {
        let mut dw = Matrix::zeros(visible, config.hidden_units);
        let mut dvb = Vector::zeros(visible);
        let mut dhb = Vector::zeros(config.hidden_units);
        for v0 in data {
            let ph0 = rbm.hidden_probs(v0);
            let h0 = sample_bits(&ph0, &mut rng);
            let v1 = rbm.visible_probs(&h0);
            let ph1 = rbm.hidden_probs(&v1);
            dw.ger(1.0, v0, &ph0, 1.0);
            dw.ger(-1.0, &v1, &ph1, 1.0);
            dvb += v0 - &v1;
            dhb += &ph0 - &ph1;
        }
        rbm.weights += dw * scale;
        rbm.visible_bias += dvb * scale;
        rbm.hidden_bias += dhb * scale;
        let finite = rbm.weights.iter().chain(rbm.visible_bias.iter()).chain(rbm.hidden_bias.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(MemoryError::Diverged(epoch));
        }
        errors.push(rbm.reconstruction_error(data));
    }
    Ok(RbmTraining { rbm, reconstruction_errors: errors })
}

/// Block Gibbs sampling with the `h` part clamped; returns the final `r` sample.
pub fn rbm_fill_residue(rbm: &Rbm, h_clamped: &Vector, gibbs_steps: usize, seed: u64) -> Result<Vector> {
    if h_clamped.len() != rbm.h_dim {
        return Err(MemoryError::DimensionMismatch { expected: rbm.h_dim, found: h_clamped.len() });
    }
    let mut rng = util::seeded(seed);
    let mut v = Vector::zeros(rbm.visible_dim());
    v.rows_mut(0, rbm.h_dim).copy_from(h_clamped);
    for i in rbm.h_dim..rbm.visible_dim() {
        v[i] = if rng.random::<bool>() { 1.0 } else { 0.0 };
    }
    for _ in 0..gibbs_steps {
        let hidden = sample_bits(&rbm.hidden_probs(&v), &mut rng);
        let pv = rbm.visible_probs(&hidden);
        for i in rbm.h_dim..rbm.visible_dim() {
            v[i] = if rng.random::<f64>() < pv[i] { 1.0 } else { 0.0 };
        }
    }
    Ok(v.rows(rbm.h_dim, rbm.r_dim).into_owned())
}

/// All `2^bits` patterns `h` paired with `relation(h)`, each repeated `copies` times.
pub fn relation_dataset(bits: usize, copies: usize, relation: impl Fn(&Vector) -> Vector) -> Vec<Vector> {
    let mut out = Vec::with_capacity((1 << bits) * copies);
    for pattern in 0..(1usize << bits) {
        let h = Vector::from_fn(bits, |i, _| ((pattern >> i) & 1) as f64);
        let r = relation(&h);
        let v = Vector::from_iterator(bits + r.len(), h.iter().chain(r.iter()).copied());
        for _ in 0..copies {
            out.push(v.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latest_write_wins() {
        let mut store = MostRecentHash::new();
        mrh_write(&mut store, "k", 1);
        mrh_write(&mut store, "k", 2);
        assert_eq!(mrh_read(&store, &"k"), Some(&2));
        assert_eq!(mrh_read(&store, &"other"), None);
        assert_eq!(store.clock(), 2);
        assert_eq!(store.write_time(&"k"), Some(2));
    }

    #[test]
    fn log_replay_on_interleaved_writes() {
        let mut rng = util::seeded(0);
        let mut store = MostRecentHash::new();
        let mut log = Vec::new();
        for i in 0..100u32 {
            let key = rng.random_range(0..10u32);
            store.write(key, i);
            log.push((key, i));
        }
        for key in 0..10 {
            let replay = log.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v);
            assert_eq!(store.read(&key), replay);
        }
    }

    #[test]
    fn rejects_zero_hidden_units() {
        let data = relation_dataset(2, 1, |h| h.clone());
        let config = RbmConfig { hidden_units: 0, ..RbmConfig::default() };
        assert_eq!(rbm_train_cd(&data, 2, &config), Err(MemoryError::NotTrainable));
    }

    #[test]
    fn rejects_non_binary() {
        let data = vec![Vector::from_row_slice(&[0.5, 1.0])];
        assert_eq!(rbm_train_cd(&data, 1, &RbmConfig::default()), Err(MemoryError::NonBinary));
    }

    #[test]
    fn learns_single_pattern() {
        let pattern = Vector::from_row_slice(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let data = vec![pattern.clone(); 10];
        let config = RbmConfig { hidden_units: 4, epochs: 200, ..RbmConfig::default() };
        let trained = rbm_train_cd(&data, 4, &config).unwrap();
        assert!(trained.rbm.bits_correct(&pattern) >= 0.99);
        let errs = &trained.reconstruction_errors;
        assert!(errs.last().unwrap() < errs.first().unwrap());
    }

    #[test]
    fn learns_two_orthogonal_patterns() {
        let a = Vector::from_row_slice(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let b = Vector::from_row_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let data: Vec<Vector> = (0..10).flat_map(|_| [a.clone(), b.clone()]).collect();
        let config = RbmConfig { hidden_units: 4, epochs: 500, ..RbmConfig::default() };
        let trained = rbm_train_cd(&data, 4, &config).unwrap();
        assert!(trained.rbm.bits_correct(&a) >= 0.95);
        assert!(trained.rbm.bits_correct(&b) >= 0.95);
    }

    #[test]
    fn zero_weights_fill_uniformly() {
        let rbm = Rbm::zeroed(2, 4, 3);
        let h = Vector::from_row_slice(&[1.0, 0.0]);
        let mut ones = 0.0;
        let trials = 1000;
        for t in 0..trials {
            ones += rbm_fill_residue(&rbm, &h, 5, t).unwrap().sum();
        }
        let mean = ones / (trials as f64 * 4.0);
        assert!((mean - 0.5).abs() <= 0.05, "{mean}");
    }

    fn fill_agreement(relation: fn(&Vector) -> Vector) -> usize {
        let data = relation_dataset(4, 4, relation);
        let config = RbmConfig { hidden_units: 16, learning_rate: 0.3, epochs: 3000, seed: 0 };
        let trained = rbm_train_cd(&data, 4, &config).unwrap();
        let errs = &trained.reconstruction_errors;
        assert!(errs.last().unwrap() < errs.first().unwrap());
        let mut rng = util::seeded(0);
        (0..200u64)
            .filter(|&trial| {
                let h = Vector::from_fn(4, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
                let r = rbm_fill_residue(&trained.rbm, &h, 50, trial).unwrap();
                r == relation(&h)
            })
            .count()
    }

    #[test]
    fn fills_copy_and_negation() {
        assert!(fill_agreement(|h| h.clone()) >= 180);
        assert!(fill_agreement(|h| h.map(|x| 1.0 - x)) >= 180);
    }

    #[test]
    fn fill_checks_dimensions() {
        let rbm = Rbm::zeroed(2, 2, 2);
        assert!(rbm_fill_residue(&rbm, &Vector::zeros(3), 1, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let data = relation_dataset(2, 2, |h| h.clone());
        let trained = rbm_train_cd(&data, 2, &RbmConfig { epochs: 5, hidden_units: 3, ..RbmConfig::default() }).unwrap();
        let text = trained.rbm.format();
        assert_eq!(Rbm::parse(&text).unwrap(), trained.rbm);
        assert!(Rbm::parse("1 1\n0\n").is_err());
    }
}

