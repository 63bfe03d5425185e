use std::collections::BTreeSet;

use super::symbol::{Symbol, VisibleState};
use super::{Result, RuntimeError};
use crate::consistency::Vector;

/// One-hot encoding with a separate alphabet per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codec {
    alphabets: Vec<Vec<Symbol>>,
}

impl Codec {
    pub fn new(alphabets: Vec<Vec<Symbol>>) -> Self {
        Self { alphabets }
    }

    /// Per-slot alphabets gathered (sorted) from the given states.
    pub fn from_states<'a, I: IntoIterator<Item = &'a VisibleState>>(states: I) -> Self {
        let mut sets: Vec<BTreeSet<Symbol>> = Vec::new();
        for state in states {
            if sets.len() < state.arity() {
                sets.resize_with(state.arity(), BTreeSet::new);
            }
            for (set, s) in sets.iter_mut().zip(&state.slots) {
                set.insert(s.clone());
            }
        }
        Self { alphabets: sets.into_iter().map(|s| s.into_iter().collect()).collect() }
    }

    pub fn arity(&self) -> usize {
        self.alphabets.len()
    }

    pub fn width(&self) -> usize {
        self.alphabets.iter().map(Vec::len).sum()
    }

    pub fn alphabet(&self, slot: usize) -> &[Symbol] {
        &self.alphabets[slot]
    }
}

/// Concatenated one-hot blocks, one per slot. The external part is not encoded.
pub fn vector_encode(state: &VisibleState, codec: &Codec) -> Result<Vector> {
    if state.arity() != codec.arity() {
        return Err(RuntimeError::ArityMismatch { expected: codec.arity(), found: state.arity() });
    }
    let mut v = Vector::zeros(codec.width());
    let mut base = 0;
    for (alphabet, s) in codec.alphabets.iter().zip(&state.slots) {
        let i = alphabet.iter().position(|a| a == s).ok_or_else(|| RuntimeError::UnknownSymbol(s.clone()))?;
        v[base + i] = 1.0;
        base += alphabet.len();
    }
    Ok(v)
}

/// Nearest symbol per slot (largest entry of each block; first on ties).
pub fn vector_decode(v: &Vector, codec: &Codec) -> Result<VisibleState> {
    if v.len() != codec.width() {
        return Err(RuntimeError::WidthMismatch { expected: codec.width(), found: v.len() });
    }
    let mut slots = Vec::with_capacity(codec.arity());
    let mut base = 0;
    for alphabet in &codec.alphabets {
        let block = v.rows(base, alphabet.len());
        let best = block
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &x)| match acc {
                Some((_, y)) if y >= x => acc,
                _ => Some((i, x)),
            })
            .ok_or_else(|| RuntimeError::InvalidProgram("empty slot alphabet".into()))?;
        slots.push(alphabet[best.0].clone());
        base += alphabet.len();
    }
    Ok(VisibleState::new(slots))
}
