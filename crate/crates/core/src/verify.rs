//! Invariant suites run by `thoughtseq verify`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::consistency::{
    check_variance_preservation, extract_residue, identity_error, left_inverse, random_unit, ConsistencyError,
    ConsistentLayer, LayerStack, LinearLayer, Matrix, Vector, CONSISTENCY_TOL,
};
use crate::memory::{rbm_fill_residue, rbm_train_cd, relation_dataset, MostRecentHash, RbmConfig};
use crate::nonlinear::{conv_make, step_basis_pair, BasisSet, BasisSetLayer, MirrorRectLayer};
use crate::runtime::{vector_decode, vector_encode, Codec};
use crate::tm::{
    counters_from_moves, first_divergence, last_visits, machines, simulate, walk_machine, Algo, Move, TmSpec,
};
use crate::training::{
    init_weights, orthonormality_cost, rica_gradient, rica_objective, train, DataSet, TrainConfig, TrainMode,
};
use crate::util::{derive_seed, seeded, Rng as Chacha};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Core,
    Nonlinear,
    Training,
    Memory,
    Runtime,
    All,
}

impl Suite {
    const NAMES: [(&'static str, Suite); 6] = [
        ("core", Suite::Core),
        ("nonlinear", Suite::Nonlinear),
        ("training", Suite::Training),
        ("memory", Suite::Memory),
        ("runtime", Suite::Runtime),
        ("all", Suite::All),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, s)| *s == self).map(|(n, _)| *n).expect("every suite is named")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownSuite(pub String);

impl fmt::Display for UnknownSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown suite {:?} (expected core, nonlinear, training, memory, runtime or all)", self.0)
    }
}

impl std::error::Error for UnknownSuite {}

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, UnknownSuite> {
        Self::NAMES.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| UnknownSuite(s.to_string()))
    }
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

type Check = fn(u64) -> (bool, String);

fn checks(suite: Suite) -> Vec<(&'static str, &'static str, Check)> {
    let core: Vec<(&str, Check)> = vec![
        ("variance_preservation", core_variance),
        ("left_inverse", core_left_inverse),
        ("equilibrium", core_equilibrium),
        ("residue_identity", core_residue),
        ("stacking", core_stacking),
    ];
    let nonlinear: Vec<(&str, Check)> = vec![
        ("mirror_round_trip", nonlinear_mirror),
        ("basis_set_partition", nonlinear_partition),
        ("conv_round_trip", nonlinear_conv),
        ("mixed_stack", nonlinear_mixed_stack),
    ];
    let training: Vec<(&str, Check)> = vec![
        ("orthonormality_identity", training_identity),
        ("gradient_finite_difference", training_gradient),
        ("full_rank_convergence", training_convergence),
    ];
    let memory: Vec<(&str, Check)> = vec![("most_recent_hash_replay", memory_replay), ("rbm_fill_copy", memory_rbm)];
    let runtime: Vec<(&str, Check)> = vec![
        ("tm_oracle", runtime_oracle),
        ("fixed_strides", runtime_strides),
        ("counter_soundness", runtime_counters),
        ("prefix_stability", runtime_prefix),
        ("vector_round_trip", runtime_vectors),
    ];
    let tag = |name: &'static str, list: Vec<(&'static str, Check)>| {
        list.into_iter().map(move |(n, c)| (name, n, c)).collect::<Vec<_>>()
    };
    match suite {
        Suite::Core => tag("core", core),
        Suite::Nonlinear => tag("nonlinear", nonlinear),
        Suite::Training => tag("training", training),
        Suite::Memory => tag("memory", memory),
        Suite::Runtime => tag("runtime", runtime),
        Suite::All => [
            tag("core", core),
            tag("nonlinear", nonlinear),
            tag("training", training),
            tag("memory", memory),
            tag("runtime", runtime),
        ]
        .concat(),
    }
}

/// Names of the checks in `suite`, as `suite/name`.
pub fn check_names(suite: Suite) -> Vec<String> {
    checks(suite).into_iter().map(|(s, n, _)| format!("{s}/{n}")).collect()
}

/// Runs every check of `suite`; each check draws from its own seed stream.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    checks(suite)
        .into_iter()
        .enumerate()
        .map(|(i, (suite, name, check))| {
            let (pass, detail) = check(derive_seed(seed, i as u64));
            CheckResult { suite, name, pass, detail }
        })
        .collect()
}

fn gaussian(dim: usize, rng: &mut Chacha) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_layer(rng: &mut Chacha) -> LinearLayer {
    let visible = rng.random_range(1..=8);
    let hidden = rng.random_range(visible..=visible + 4);
    LinearLayer::random(visible, hidden, rng).expect("gaussian matrices are full rank")
}

fn within(worst: f64, tol: f64) -> (bool, String) {
    (worst <= tol, format!("worst {worst:.3e} (tolerance {tol:.0e})"))
}

fn core_variance(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let layer = random_layer(&mut rng);
        let report = check_variance_preservation(&layer, 10, derive_seed(seed, i));
        worst = worst.max(report.max_error).max(report.identity_error);
    }
    within(worst, CONSISTENCY_TOL)
}

fn core_left_inverse(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let cols = rng.random_range(1..=8);
        let rows = rng.random_range(cols..=cols + 4);
        let w = Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        match left_inverse(&w) {
            Ok(p) => worst = worst.max(identity_error(&(p * &w))),
            Err(e) => return (false, e.to_string()),
        }
    }
    within(worst, CONSISTENCY_TOL)
}

fn core_equilibrium(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let layer = random_layer(&mut rng);
        for _ in 0..10 {
            let h = gaussian(layer.hidden_dim(), &mut rng);
            let v = layer.generative(&h).expect("dims match");
            let h1 = layer.forward(&v).expect("dims match");
            let v1 = layer.generative(&h1).expect("dims match");
            let h2 = layer.forward(&v1).expect("dims match");
            worst = worst.max((&v1 - &v).amax()).max((&h2 - &h1).amax());
        }
    }
    within(worst, CONSISTENCY_TOL)
}

fn core_residue(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let cols = rng.random_range(1..=8);
        let rows = rng.random_range(1..=cols);
        let w = Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = w.clone().svd(false, false).singular_values.max();
        let w = w / (norm * rng.random_range(1.0..2.0));
        match extract_residue(&w) {
            Ok(r) => {
                let sum = w.transpose() * &w + r.residue_generative * r.residue_forward;
                worst = worst.max(identity_error(&sum));
            }
            Err(e) => return (false, e.to_string()),
        }
    }
    within(worst, CONSISTENCY_TOL)
}

fn core_stacking(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let depth = rng.random_range(1..=5);
        let mut stack = LayerStack::new();
        let mut dim = rng.random_range(1..=6);
        let visible = dim;
        for _ in 0..depth {
            let hidden = rng.random_range(dim..=dim + 2);
            stack.push(LinearLayer::random(dim, hidden, &mut rng).expect("full rank")).expect("dims chain");
            dim = hidden;
        }
        let v = random_unit(visible, &mut rng);
        let back = stack.generative(&stack.forward(&v).expect("dims")).expect("dims");
        worst = worst.max((back - v).amax());
    }
    within(worst, 1e-7)
}

fn nonlinear_mirror(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let layer = MirrorRectLayer::new(random_layer(&mut rng));
        let v = gaussian(layer.visible_dim(), &mut rng);
        let back = layer.generative(&layer.forward(&v).expect("dims")).expect("dims");
        worst = worst.max((back - v).amax());
    }
    within(worst, 1e-9)
}

fn nonlinear_partition(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut violations = 0;
    for _ in 0..200 {
        let mut cuts: Vec<f64> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(-2.0..2.0)).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let set = BasisSet::from_thresholds(&cuts).expect("sorted distinct thresholds");
        for _ in 0..20 {
            let x = gaussian(4, &mut rng) * 2.0;
            let selectors: f64 = (0..set.len()).map(|i| set.select(i, x[0])).sum();
            let channels = set.split(&x);
            let total = channels.iter().fold(Vector::zeros(4), |acc, c| acc + c);
            let exclusive = (0..4).all(|j| channels.iter().filter(|c| c[j] != 0.0).count() <= 1);
            if selectors != 1.0 || total != x || !exclusive {
                violations += 1;
            }
        }
    }
    (violations == 0, format!("{violations} gating violations"))
}

fn nonlinear_conv(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=64);
        let taps = rng.random_range(1..=n.min(5));
        // A dominant first tap keeps the spectrum away from zero.
        let mut kernel: Vec<f64> = (0..taps).map(|_| rng.random_range(-0.2..0.2)).collect();
        kernel[0] = 1.0;
        let layer = match conv_make(&kernel, n) {
            Ok(l) => l,
            Err(e) => return (false, e.to_string()),
        };
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let back = layer.deconvolve(&layer.convolve(&v).expect("len")).expect("len");
        worst = worst.max(back.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    within(worst, 1e-8)
}

/// `None` when the stack rejects the compounded conditioning of the draw.
fn random_mixed_stack(rng: &mut Chacha) -> Option<(LayerStack, usize)> {
    let mut stack = LayerStack::new();
    let visible = rng.random_range(1..=4);
    let mut dim = visible;
    for _ in 0..rng.random_range(1..=5) {
        let hidden = rng.random_range(dim..=dim + 1);
        let base = LinearLayer::random(dim, hidden, rng).expect("full rank");
        let pushed = match rng.random_range(0..3) {
            0 => stack.push(base),
            1 => stack.push(MirrorRectLayer::new(base)),
            _ => stack.push(BasisSetLayer { base, set: step_basis_pair() }),
        };
        match pushed {
            Err(ConsistencyError::IllConditioned { .. }) => return None,
            other => other.expect("dims chain"),
        }
        dim = stack.hidden_dim().expect("non-empty");
    }
    Some((stack, visible))
}

fn nonlinear_mixed_stack(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (stack, visible) = std::iter::repeat_with(|| random_mixed_stack(&mut rng)).flatten().next().expect("endless");
        let v = gaussian(visible, &mut rng);
        let back = stack.generative(&stack.forward(&v).expect("dims")).expect("dims");
        worst = worst.max((back - v).amax());
    }
    within(worst, 1e-7)
}

fn gaussian_data(count: usize, dim: usize, rng: &mut Chacha) -> DataSet {
    DataSet::new((0..count).map(|_| gaussian(dim, rng)).collect()).expect("non-empty, equal dims")
}

fn training_identity(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=5);
        let rows = rng.random_range(1..=dim + 1);
        let data = gaussian_data(rng.random_range(dim..=30), dim, &mut rng);
        let w = Matrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let direct = rica_objective(&w, &data, 0.0).expect("dims");
        let cost = orthonormality_cost(&w, &data).expect("dims");
        worst = worst.max((cost - direct).abs() / direct.max(f64::MIN_POSITIVE));
    }
    within(worst, 1e-6)
}

fn training_gradient(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 20 {
        let dim = rng.random_range(1..=4);
        let rows = rng.random_range(1..=dim + 1);
        let data = gaussian_data(8, dim, &mut rng);
        let w = Matrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        if data.samples().iter().any(|s| (&w * s).iter().any(|x| x.abs() < 1e-3)) {
            continue;
        }
        tested += 1;
        let g = rica_gradient(&w, &data, 0.1).expect("dims");
        let step = 1e-6;
        let fd = Matrix::from_fn(rows, dim, |i, j| {
            let mut plus = w.clone();
            plus[(i, j)] += step;
            let mut minus = w.clone();
            minus[(i, j)] -= step;
            (rica_objective(&plus, &data, 0.1).expect("dims") - rica_objective(&minus, &data, 0.1).expect("dims"))
                / (2.0 * step)
        });
        worst = worst.max((&g - &fd).norm() / fd.norm().max(1e-12));
    }
    within(worst, 1e-5)
}

fn training_convergence(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let data = gaussian_data(200, 3, &mut rng);
    let w0 = init_weights(3, 3, &mut rng);
    let config = TrainConfig { epochs: 3000, seed, ..TrainConfig::new(TrainMode::Transpose) };
    match train(&config, &data, &w0) {
        Ok(t) => within(t.final_reconstruction, 1e-4),
        Err(e) => (false, e.to_string()),
    }
}

fn memory_replay(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut store = MostRecentHash::new();
    let mut log: Vec<(u8, u32)> = Vec::new();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let key = rng.random_range(0..16u8);
        if rng.random::<bool>() {
            let value = rng.random::<u32>();
            store.write(key, value);
            log.push((key, value));
        } else {
            let replay = log.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v);
            if store.read(&key) != replay {
                mismatches += 1;
            }
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches over 1000 operations"))
}

fn memory_rbm(seed: u64) -> (bool, String) {
    let data = relation_dataset(3, 4, |h| h.clone());
    let config = RbmConfig { hidden_units: 12, learning_rate: 0.3, epochs: 2000, seed };
    let trained = match rbm_train_cd(&data, 3, &config) {
        Ok(t) => t,
        Err(e) => return (false, e.to_string()),
    };
    let mut rng = seeded(seed);
    let trials = 100;
    let agree = (0..trials)
        .filter(|&t| {
            let h = Vector::from_fn(3, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
            rbm_fill_residue(&trained.rbm, &h, 50, derive_seed(seed, t)).map(|r| r == h).unwrap_or(false)
        })
        .count();
    (agree * 10 >= trials as usize * 9, format!("{agree}/{trials} fills agree (need 90%)"))
}

fn oracle_machines() -> Vec<(&'static str, TmSpec)> {
    vec![
        ("binary_increment", machines::binary_increment()),
        ("busy_beaver_2", machines::busy_beaver_2()),
        ("oscillator", machines::oscillator()),
        ("binary_counter", machines::binary_counter()),
    ]
}

fn runtime_oracle(_seed: u64) -> (bool, String) {
    for algo in Algo::ALL {
        for (name, spec) in oracle_machines() {
            let sim = match simulate(&spec, &[], 100, algo) {
                Ok(s) => s,
                Err(e) => return (false, format!("{name}/{}: {e}", algo.name())),
            };
            if let Some(k) = first_divergence(&spec, &[], &sim.configs) {
                return (false, format!("{name}/{} diverges at TM step {k}", algo.name()));
            }
        }
    }
    (true, "4 machines x 4 layouts, 100 TM steps each".into())
}

fn runtime_strides(_seed: u64) -> (bool, String) {
    let spec = machines::binary_counter();
    for (algo, stride) in [(Algo::Constant, 3), (Algo::Memory, 2)] {
        match simulate(&spec, &[], 200, algo) {
            Ok(sim) if sim.model_step_counts.iter().all(|&n| n == stride) => {}
            Ok(_) => return (false, format!("{} is not {stride} model steps per TM step", algo.name())),
            Err(e) => return (false, e.to_string()),
        }
    }
    (true, "constant 3, memory 2 model steps per TM step".into())
}

fn random_moves(len: usize, rng: &mut Chacha) -> Vec<Move> {
    (0..len).map(|_| if rng.random::<bool>() { Move::R } else { Move::L }).collect()
}

fn runtime_counters(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let mut violations = 0;
    for _ in 0..200 {
        let moves = random_moves(64, &mut rng);
        let heads: Vec<i64> = std::iter::once(0)
            .chain(moves.iter().scan(0, |h, m| {
                *h += m.delta();
                Some(*h)
            }))
            .collect();
        let oracle = last_visits(&heads);
        for (n, (c, o)) in counters_from_moves(&moves).iter().zip(&oracle).enumerate() {
            let n = n as i64;
            if [n + c.l, n + c.c, n + c.r] != [o[0] as i64, o[1] as i64, o[2] as i64] {
                violations += 1;
            }
        }
    }
    (violations == 0, format!("{violations} violations over 200 walks of 64 steps"))
}

fn runtime_prefix(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    let spec = walk_machine(&random_moves(40, &mut rng));
    for algo in Algo::ALL {
        let (short, long) = match (simulate(&spec, &[], 15, algo), simulate(&spec, &[], 40, algo)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
        };
        if !short.execution.sequence.is_prefix_of(&long.execution.sequence) {
            return (false, format!("{} trace is not prefix stable", algo.name()));
        }
    }
    (true, "shorter runs are prefixes of longer runs".into())
}

fn runtime_vectors(seed: u64) -> (bool, String) {
    let mut rng = seeded(seed);
    for algo in Algo::ALL {
        let sim = match simulate(&machines::busy_beaver_2(), &[], 50, algo) {
            Ok(s) => s,
            Err(e) => return (false, e.to_string()),
        };
        let states = sim.execution.sequence.states();
        let codec = Codec::from_states(states);
        let width = codec.width();
        let stack = LayerStack::new()
            .with(LinearLayer::random(width, width + 2, &mut rng).expect("full rank"))
            .and_then(|s| s.with(LinearLayer::random(width + 2, width + 3, &mut rng).expect("full rank")))
            .expect("dims chain");
        for (i, state) in states.iter().enumerate() {
            let round = vector_encode(state, &codec)
                .ok()
                .and_then(|v| stack.forward(&v).ok())
                .and_then(|h| stack.generative(&h).ok())
                .and_then(|v| vector_decode(&v, &codec).ok());
            if round.as_ref() != Some(state) {
                return (false, format!("{} row {i} did not survive the round trip", algo.name()));
            }
        }
    }
    (true, "every row of 4 traces decodes back exactly".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for (name, suite) in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap(), suite);
            assert_eq!(suite.name(), name);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn all_lists_every_check() {
        let all = check_names(Suite::All);
        let parts: usize = [Suite::Core, Suite::Nonlinear, Suite::Training, Suite::Memory, Suite::Runtime]
            .into_iter()
            .map(|s| check_names(s).len())
            .sum();
        assert_eq!(all.len(), parts);
        assert!(all.contains(&"runtime/counter_soundness".to_string()));
    }

    #[test]
    fn every_suite_passes() {
        for r in run_suite(Suite::All, 0) {
            assert!(r.pass, "{r}");
        }
    }

    #[test]
    fn result_line_format() {
        let r = CheckResult { suite: "core", name: "x", pass: false, detail: "d".into() };
        assert_eq!(r.to_string(), "FAIL core/x: d");
    }
}
