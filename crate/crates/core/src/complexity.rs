//! Search-cost analysis for the pivot/search simulation.
//!
//! A head walk is a sequence of `N` unit moves starting at cell 0. `P_n`
//! collects the walks whose final cell was last visited at step `n`; `P_∞`
//! those whose final cell is new. Reading the final cell costs `N − n`
//! search steps when the cell was visited at step `n`, and `N` (plain) or
//! `0` (bounded) when it was never visited.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::util;

/// Largest walk length accepted by [`p_counts_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexityError {
    #[error("walk length {0} too large for enumeration (limit {BRUTEFORCE_LIMIT})")]
    TooLarge(usize),
    #[error("walk length must be at least 2, got {0}")]
    TooShort(usize),
    #[error("at least 100 trials required, got {0}")]
    TooFewTrials(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, ComplexityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Bounded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Formula,
    Enumeration,
    MonteCarlo { trials: usize, seed: u64, mean: f64, ci95: f64 },
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::Formula => "formula",
            Source::Enumeration => "enumeration",
            Source::MonteCarlo { .. } => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub n: usize,
    /// `|P_0| … |P_{N−2}|`
    pub p_counts: Vec<BigUint>,
    pub p_infinity: BigUint,
    pub source: Source,
}

impl ComplexityReport {
    /// `P_∞ + Σ |P_n| == 2^N`
    pub fn partition_holds(&self) -> bool {
        let total: BigUint = self.p_counts.iter().sum::<BigUint>() + &self.p_infinity;
        total == BigUint::one() << self.n
    }

    /// Plain-variant expectation `(Σ (N−n)|P_n| + N·P_∞) / 2^N`.
    pub fn expected_search_steps(&self) -> BigRational {
        let n = BigUint::from(self.n);
        let mut total = &n * &self.p_infinity;
        for (i, count) in self.p_counts.iter().enumerate() {
            total += BigUint::from(self.n - i) * count;
        }
        BigRational::new(total.into(), (BigUint::one() << self.n).into())
    }

    /// Bounded-variant expectation: fresh cells cost nothing.
    pub fn expected_bounded_steps(&self) -> BigRational {
        let mut total = BigUint::zero();
        for (i, count) in self.p_counts.iter().enumerate() {
            total += BigUint::from(self.n - i) * count;
        }
        BigRational::new(total.into(), (BigUint::one() << self.n).into())
    }
}

/// `binom(2m, m) / (m + 1)`
pub fn catalan_even(m: usize) -> BigUint {
    let mut binom = BigUint::one();
    for i in 0..m {
        binom = binom * BigUint::from(2 * m - i) / BigUint::from(i + 1);
    }
    binom / BigUint::from(m + 1)
}

/// Catalan count for a gap of `k` steps; zero for odd `k`.
fn catalan_gap(k: usize) -> BigUint {
    if k.is_odd() {
        BigUint::zero()
    } else {
        catalan_even(k / 2)
    }
}

pub fn p_counts_formula(n: usize) -> Result<ComplexityReport> {
    if n < 2 {
        return Err(ComplexityError::TooShort(n));
    }
    let p_counts: Vec<BigUint> =
        (0..=n - 2).map(|i| BigUint::from(2u32) * catalan_gap(n - i - 2) * (BigUint::one() << i)).collect();
    let total: BigUint = p_counts.iter().sum();
    let p_infinity = (BigUint::one() << n) - total;
    Ok(ComplexityReport { n, p_counts, p_infinity, source: Source::Formula })
}

/// Step index at which `walk`'s final cell was last visited, if ever.
fn last_visit(positions: &[i64]) -> Option<usize> {
    let (last, earlier) = positions.split_last()?;
    earlier.iter().rposition(|p| p == last)
}

pub fn p_counts_bruteforce(n: usize) -> Result<ComplexityReport> {
    if n < 2 {
        return Err(ComplexityError::TooShort(n));
    }
    if n > BRUTEFORCE_LIMIT {
        return Err(ComplexityError::TooLarge(n));
    }
    let mut counts = vec![0u64; n - 1];
    let mut never = 0u64;
    let mut positions = vec![0i64; n + 1];
    for mask in 0u64..(1u64 << n) {
        for step in 0..n {
            let delta = if (mask >> step) & 1 == 1 { 1 } else { -1 };
            positions[step + 1] = positions[step] + delta;
        }
        match last_visit(&positions) {
            Some(i) => counts[i] += 1,
            None => never += 1,
        }
    }
    Ok(ComplexityReport {
        n,
        p_counts: counts.into_iter().map(BigUint::from).collect(),
        p_infinity: BigUint::from(never),
        source: Source::Enumeration,
    })
}

pub fn expected_search_steps(n: usize) -> Result<BigRational> {
    Ok(p_counts_formula(n)?.expected_search_steps())
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Search cost of reading the final cell of a walk.
pub fn walk_cost(positions: &[i64], variant: Variant) -> usize {
    let n = positions.len().saturating_sub(1);
    match (last_visit(positions), variant) {
        (Some(i), _) => n - i,
        (None, Variant::Plain) => n,
        (None, Variant::Bounded) => 0,
    }
}

/// Uniform ±1 walk of `n` moves from cell 0.
pub fn random_walk<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(0i64);
    let mut bits = 0u64;
    for step in 0..n {
        if step % 64 == 0 {
            bits = rng.random();
        }
        let delta = if (bits >> (step % 64)) & 1 == 1 { 1 } else { -1 };
        positions.push(positions[step] + delta);
    }
    positions
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub ci95: f64,
}

/// Sample mean and normal-approximation 95% half-width of the final-step
/// search cost over `trials` random walks.
pub fn montecarlo_search_cost(n: usize, trials: usize, seed: u64, variant: Variant) -> Result<MonteCarloEstimate> {
    if trials < 100 {
        return Err(ComplexityError::TooFewTrials(trials));
    }
    let costs: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = util::seeded(util::derive_seed(seed, t));
            walk_cost(&random_walk(n, &mut rng), variant) as f64
        })
        .collect();
    Ok(summarize(&costs))
}

fn summarize(samples: &[f64]) -> MonteCarloEstimate {
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    MonteCarloEstimate { mean, ci95: 1.96 * (var / count).sqrt() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficient: f64,
    pub r_squared: f64,
    pub points: Vec<(usize, f64)>,
}

impl FitResult {
    pub fn fitted(&self, n: usize) -> f64 {
        self.coefficient * (n as f64).sqrt()
    }

    /// `N,mean,fitted`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,mean,fitted\n");
        for &(n, mean) in &self.points {
            let _ = writeln!(out, "{},{},{}", n, util::fmt_real(mean), util::fmt_real(self.fitted(n)));
        }
        out
    }
}

/// Least squares of `mean ≈ c√N`.
pub fn sqrt_fit(points: &[(usize, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(ComplexityError::DegenerateFit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(_, m)| !m.is_finite()) {
        return Err(ComplexityError::DegenerateFit("non-finite mean".into()));
    }
    let sxx: f64 = points.iter().map(|&(n, _)| n as f64).sum();
    if sxx == 0.0 {
        return Err(ComplexityError::DegenerateFit("all N are zero".into()));
    }
    let sxy: f64 = points.iter().map(|&(n, m)| (n as f64).sqrt() * m).sum();
    let c = sxy / sxx;
    let avg = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|&(n, m)| (m - c * (n as f64).sqrt()).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|&(_, m)| (m - avg).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(FitResult { coefficient: c, r_squared, points: points.to_vec() })
}

/// `N,source,expected_or_mean,ci95,p_infinity`
pub fn report_csv(reports: &[ComplexityReport]) -> String {
    let mut out = String::from("N,source,expected_or_mean,ci95,p_infinity\n");
    for r in reports {
        let (value, ci, p_inf) = match &r.source {
            Source::MonteCarlo { mean, ci95, .. } => (*mean, *ci95, String::new()),
            _ => (rational_to_f64(&r.expected_search_steps()), 0.0, r.p_infinity.to_string()),
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.n, r.source.name(), util::fmt_real(value), util::fmt_real(ci), p_inf);
    }
    out
}

/// Wraps a Monte Carlo estimate as a report row.
pub fn montecarlo_report(n: usize, trials: usize, seed: u64, estimate: MonteCarloEstimate) -> ComplexityReport {
    ComplexityReport {
        n,
        p_counts: Vec::new(),
        p_infinity: BigUint::zero(),
        source: Source::MonteCarlo { trials, seed, mean: estimate.mean, ci95: estimate.ci95 },
    }
}
