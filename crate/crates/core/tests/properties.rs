use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use thoughtseq::complexity::{
    expected_search_steps, montecarlo_search_cost, p_counts_bruteforce, p_counts_formula, rational_to_f64, walk_cost,
    Variant,
};
use thoughtseq::consistency::{
    extract_residue, left_inverse, ConsistencyError, ConsistentLayer, LayerStack, LinearLayer, Matrix, Vector,
    MAX_STACK_CONDITION,
};
use thoughtseq::memory::MostRecentHash;
use thoughtseq::nonlinear::{conv_make, rectify, step_basis_pair, BasisSet, BasisSetLayer, MirrorRectLayer};
use thoughtseq::runtime::activate_focuses;
use thoughtseq::tm::{machines, search_costs, simulate, walk_machine, Algo, Move};
use thoughtseq::training::{orthonormality_cost, rica_objective, DataSet};
use thoughtseq::{seeded_rng, SeededRng};

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian(dim: usize, rng: &mut SeededRng) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn moves(bits: &[bool]) -> Vec<Move> {
    bits.iter().map(|&r| if r { Move::R } else { Move::L }).collect()
}

/// Mirror and basis-set layers double the width; every width stays within 16.
fn mixed_stack(visible: usize, kinds: &[u8], rng: &mut SeededRng) -> Option<LayerStack> {
    let mut stack = LayerStack::new();
    let mut dim = visible;
    for &kind in kinds {
        let kind = if 2 * dim <= 16 { kind } else { 0 };
        let widest = if kind == 0 { 16 } else { 8 };
        let base = LinearLayer::random(dim, rng.random_range(dim..=widest), rng).unwrap();
        let pushed = match kind {
            0 => stack.push(base),
            1 => stack.push(MirrorRectLayer::new(base)),
            _ => stack.push(BasisSetLayer { base, set: step_basis_pair() }),
        };
        match pushed {
            Err(ConsistencyError::IllConditioned { .. }) => return None,
            other => other.unwrap(),
        }
        dim = stack.hidden_dim().unwrap();
    }
    Some(stack)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn left_inverse_of_tall_matrices(cols in 1usize..=12, extra in 0usize..=6, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let w = gaussian_matrix(cols + extra, cols, &mut rng);
        let p = left_inverse(&w).unwrap();
        prop_assert!((p * &w - Matrix::identity(cols, cols)).norm() <= 1e-8);
    }

    #[test]
    fn certified_layers_reach_equilibrium(visible in 1usize..=8, extra in 0usize..=8, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let layer = LinearLayer::random(visible, visible + extra, &mut rng).unwrap();
        prop_assert!(layer.consistency_error() <= 1e-8);
        let h = gaussian(visible + extra, &mut rng);
        let v1 = layer.generative(&h).unwrap();
        let v2 = layer.generative(&layer.forward(&v1).unwrap()).unwrap();
        prop_assert!((v2 - v1).amax() <= 1e-8);
    }

    #[test]
    fn residue_completes_contractions(cols in 1usize..=10, rows in 1usize..=10, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let w = gaussian_matrix(rows.min(cols), cols, &mut rng);
        let sigma = w.clone().svd(false, false).singular_values.max();
        let w = w / sigma;
        let r = extract_residue(&w).unwrap();
        let total = w.transpose() * &w + &r.residue_generative * &r.residue_forward;
        prop_assert!((total - Matrix::identity(cols, cols)).norm() <= 1e-8);
    }

    #[test]
    fn deep_stacks_round_trip(visible in 1usize..=16, depth in 1usize..=5, kinds in prop::collection::vec(0u8..3, 5), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        // redraw whole stacks whose compounded conditioning the stack rejects
        let stack = std::iter::repeat_with(|| mixed_stack(visible, &kinds[..depth], &mut rng)).flatten().next().unwrap();
        prop_assert!(stack.condition_number() <= MAX_STACK_CONDITION);
        for _ in 0..100 {
            let v = gaussian(visible, &mut rng);
            let back = stack.generative(&stack.forward(&v).unwrap()).unwrap();
            let err = (back - &v).amax();
            prop_assert!(err <= 1e-7, "round trip error {err:e}");
        }
    }

    #[test]
    fn mirror_identity_is_exact(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(rectify(x) - rectify(-x), x);
    }

    #[test]
    fn selectors_partition_unity(cuts in prop::collection::btree_set(-1000i32..1000, 0..6), x in any::<f64>().prop_filter("not nan", |x| !x.is_nan())) {
        let cuts: Vec<f64> = cuts.into_iter().map(|c| c as f64 / 10.0).collect();
        let set = BasisSet::from_thresholds(&cuts).unwrap();
        for probe in [x, 0.0, f64::INFINITY, f64::NEG_INFINITY] {
            let total: f64 = (0..set.len()).map(|i| set.select(i, probe)).sum();
            prop_assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn convolution_round_trips(len_index in 0usize..4, taps in prop::collection::vec(-0.2f64..0.2, 0..4), seed in any::<u64>()) {
        let n = [4usize, 8, 16, 64][len_index];
        let mut kernel = vec![1.0];
        kernel.extend(taps);
        let layer = conv_make(&kernel, n).unwrap();
        let mut rng = seeded_rng(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let back = layer.deconvolve(&layer.convolve(&v).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn orthonormality_cost_identity(dim in 1usize..=6, rows in 1usize..=8, count in 1usize..=30, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let data = DataSet::new((0..count).map(|_| gaussian(dim, &mut rng)).collect()).unwrap();
        let w = gaussian_matrix(rows, dim, &mut rng);
        let direct = rica_objective(&w, &data, 0.0).unwrap();
        let cost = orthonormality_cost(&w, &data).unwrap();
        prop_assert!((cost - direct).abs() <= 1e-6 * direct.max(1e-300));
    }

    #[test]
    fn most_recent_hash_replays_its_log(ops in prop::collection::vec((any::<bool>(), 0u8..12, any::<u32>()), 1000..1200)) {
        let mut store = MostRecentHash::new();
        let mut log = Vec::new();
        for (write, key, value) in ops {
            if write {
                store.write(key, value);
                log.push((key, value));
            } else {
                let expected = log.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v);
                prop_assert_eq!(store.read(&key), expected);
            }
        }
    }

    #[test]
    fn bruteforce_counts_match_formula(n in 2usize..=16) {
        let formula = p_counts_formula(n).unwrap();
        let counted = p_counts_bruteforce(n).unwrap();
        prop_assert_eq!(&formula.p_counts, &counted.p_counts);
        prop_assert_eq!(&formula.p_infinity, &counted.p_infinity);
        prop_assert!(formula.partition_holds());
    }

    #[test]
    fn bounded_search_cost_matches_the_walk_model(bits in prop::collection::vec(any::<bool>(), 1..60)) {
        let moves = moves(&bits);
        let sim = simulate(&walk_machine(&moves), &[], moves.len(), Algo::SearchBounded).unwrap();
        let heads: Vec<i64> = sim.configs.iter().map(|c| c.head).collect();
        for (n, cost) in search_costs(&sim).into_iter().enumerate() {
            prop_assert_eq!(cost, walk_cost(&heads[..=n], Variant::Bounded), "TM step {}", n);
        }
    }

    #[test]
    fn compiled_policies_are_window_local(bits in prop::collection::vec(any::<bool>(), 1..30), algo_index in 0usize..4) {
        let algo = Algo::ALL[algo_index];
        let sim = simulate(&walk_machine(&moves(&bits)), &[], bits.len(), algo).unwrap();
        let policy = sim.program.model.policy();
        let full = sim.execution.sequence.clone();
        let states = full.states();
        for len in 1..states.len() {
            let prefix = thoughtseq::runtime::ThoughtSequence::new(states[..len].to_vec());
            let activation = activate_focuses(policy, &prefix);
            let local = activate_focuses(policy, &prefix.truncated(policy.tau));
            if let Ok(a) = activation {
                prop_assert_eq!(Ok(a), local);
            }
        }
    }
}

#[test]
fn plain_montecarlo_tracks_the_exact_expectation() {
    let mut misses = Vec::new();
    for n in 2..=12 {
        let exact = rational_to_f64(&expected_search_steps(n).unwrap());
        let estimate = montecarlo_search_cost(n, 4000, 21, Variant::Plain).unwrap();
        if (estimate.mean - exact).abs() > estimate.ci95 {
            misses.push(n);
        }
    }
    assert!(misses.len() <= 1, "outside the 95% interval at N = {misses:?}");
}

#[test]
fn oscillator_trace_is_deterministic() {
    for algo in Algo::ALL {
        let a = simulate(&machines::oscillator(), &[], 100, algo).unwrap();
        let b = simulate(&machines::oscillator(), &[], 100, algo).unwrap();
        assert_eq!(a.execution, b.execution);
    }
}
