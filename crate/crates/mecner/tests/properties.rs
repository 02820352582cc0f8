//! Property tests over the core invariants.

use std::collections::HashSet;

use proptest::prelude::*;

use mecner::embeddings::{align_words, segment_max_match};
use mecner::nd::{Graph, Mode};
use mecner::tagger::LatticeScores;

fn finite_vec(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, n)
}

proptest! {
    #[test]
    fn conv_same_padding_preserves_length(
        l in 1usize..12,
        k in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)],
        d_in in 1usize..4,
        d_out in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x_vals: Vec<f64> = (0..l * d_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k_vals: Vec<f64> = (0..k * d_in * d_out).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = g.constant(&[l, d_in], x_vals);
        let kn = g.constant(&[k, d_in, d_out], k_vals);
        let b = g.zeros(&[d_out]);
        let y = g.conv1d_same(x, kn, b);
        prop_assert_eq!(g.shape(y), &[l, d_out]);
    }

    #[test]
    fn log_sum_exp_is_bounded_by_max_and_max_plus_ln_n(values in finite_vec(1, -50.0, 50.0).prop_union(finite_vec(7, -50.0, 50.0))) {
        let mut g = Graph::new();
        let n = values.len();
        let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x = g.constant(&[n], values);
        let lse = g.log_sum_exp(x);
        let v = g.scalar(lse);
        prop_assert!(v >= m - 1e-12);
        prop_assert!(v <= m + (n as f64).ln() + 1e-12);
    }

    #[test]
    fn dropout_eval_mode_is_bit_exact_identity(values in finite_vec(9, -10.0, 10.0), keep in 0.05f64..1.0) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let x = g.constant(&[9], values.clone());
        let y = g.dropout(x, keep, Mode::Eval, &mut rng);
        prop_assert_eq!(y, x);
        for (a, b) in g.value(y).iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn segment_then_align_always_round_trips(
        text in "[ab肥c女d]{1,14}",
        lexicon_words in proptest::collection::hash_set("[ab肥c女d]{2,4}", 0..6),
    ) {
        let chars: Vec<char> = text.chars().collect();
        let lexicon: HashSet<String> = lexicon_words.into_iter().collect();
        let words = segment_max_match(&chars, &lexicon, 4);
        let joined: String = words.concat();
        prop_assert_eq!(&joined, &text);
        let spans = align_words(&chars, &words).expect("round trip must align");
        // Piecewise constant, one maximal run per word.
        let mut runs = 1;
        for w in spans.windows(2) {
            prop_assert!(w[1] == w[0] || w[1] == w[0] + 1);
            if w[1] != w[0] {
                runs += 1;
            }
        }
        prop_assert_eq!(runs, words.len());
    }

    #[test]
    fn nll_is_invariant_under_per_position_emission_shifts(
        l in 1usize..5,
        t in 2usize..4,
        seed in any::<u64>(),
        shift in -5.0f64..5.0,
        pos_frac in 0.0f64..1.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let emissions: Vec<f64> = (0..l * t).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let transitions: Vec<f64> = (0..(t + 2) * (t + 2)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tags: Vec<usize> = (0..l).map(|_| rng.gen_range(0..t)).collect();
        let pos = ((pos_frac * l as f64) as usize).min(l - 1);

        let nll = |em: &[f64]| {
            let lat = LatticeScores::new(em, &transitions, l, t);
            lat.log_partition() - lat.path_score(&tags)
        };
        let base = nll(&emissions);
        prop_assert!(base >= -1e-9);
        let mut shifted = emissions.clone();
        for j in 0..t {
            shifted[pos * t + j] += shift;
        }
        prop_assert!((nll(&shifted) - base).abs() < 1e-10);
    }

    #[test]
    fn log_partition_dominates_random_path_scores(
        l in 1usize..6,
        t in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let emissions: Vec<f64> = (0..l * t).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let transitions: Vec<f64> = (0..(t + 2) * (t + 2)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lat = LatticeScores::new(&emissions, &transitions, l, t);
        let log_z = lat.log_partition();
        for _ in 0..10 {
            let tags: Vec<usize> = (0..l).map(|_| rng.gen_range(0..t)).collect();
            prop_assert!(log_z >= lat.path_score(&tags) - 1e-12);
        }
        let decoded = lat.viterbi(None);
        prop_assert!(log_z >= lat.path_score(&decoded) - 1e-12);
    }
}
