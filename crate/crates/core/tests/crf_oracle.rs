mod common;

use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;
use semtag::{CrfParams, EmissionMatrix};

#[test]
fn score_path_matches_enumeration_term() {
    let mut rng = rng(7);
    let crf = random_crf(3, 1.0, &mut rng);
    let e = random_emissions(4, 3, 2.0, &mut rng);
    let paths = all_paths(4, 3);
    assert_eq!(paths.len(), 81);
    for p in &paths {
        let expect = hand_score(crf.transitions(), e.scores(), p);
        assert!((crf.score_path(&e, p).unwrap() - expect).abs() < 1e-12);
    }
}

#[test]
fn log_partition_matches_27_paths() {
    let mut rng = rng(11);
    let crf = random_crf(3, 1.0, &mut rng);
    let e = random_emissions(3, 3, 2.0, &mut rng);
    let brute = enumerate(crf.transitions(), e.scores());
    assert_eq!(brute.paths.len(), 27);
    assert!((crf.log_partition(&e).unwrap() - brute.log_z).abs() <= 1e-8);
}

#[test]
fn nll_matches_enumeration() {
    let mut rng = rng(13);
    let crf = random_crf(3, 1.0, &mut rng);
    let e = random_emissions(3, 3, 2.0, &mut rng);
    let gold = [2, 0, 1];
    let brute = enumerate(crf.transitions(), e.scores());
    let expect = brute.log_z - hand_score(crf.transitions(), e.scores(), &gold);
    assert!((crf.nll_loss(&e, &gold).unwrap() - expect).abs() <= 1e-8);
}

#[test]
fn marginals_match_enumeration() {
    let mut rng = rng(17);
    let crf = random_crf(3, 1.0, &mut rng);
    let e = random_emissions(3, 3, 2.0, &mut rng);
    let brute = enumerate(crf.transitions(), e.scores());
    let m = crf.marginals(&e).unwrap();
    for (a, b) in m.unary.iter().zip(brute.unary(3, 3).iter()) {
        assert!((a - b).abs() <= 1e-10);
    }
    for (a, b) in m.pairwise.iter().zip(brute.pairwise(3, 3).iter()) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn viterbi_matches_81_paths() {
    let mut rng = rng(19);
    for _ in 0..20 {
        let crf = random_crf(3, 1.0, &mut rng);
        let e = random_emissions(4, 3, 2.0, &mut rng);
        let (path, score) = crf.viterbi_decode(&e).unwrap();
        let (best, best_score) = enumerate(crf.transitions(), e.scores()).argmax();
        assert_eq!(path, best);
        assert!((score - best_score).abs() < 1e-10);
    }
}

#[test]
fn viterbi_tie_break_matches_enumeration() {
    let mut rng = rng(23);
    let mut tied = 0;
    for _ in 0..300 {
        let len = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let (crf, e) = integer_instance(len, k, &mut rng);
        let brute = enumerate(crf.transitions(), e.scores());
        let (best, best_score) = brute.argmax();
        tied += usize::from(brute.scores.iter().filter(|&&s| s == best_score).count() > 1);
        let (path, score) = crf.viterbi_decode(&e).unwrap();
        assert_eq!(path, best);
        assert_eq!(score, best_score);
    }
    assert!(tied > 50, "instances should exercise ties, got {tied}");
}

#[test]
fn gradient_matches_finite_differences_on_100_instances() {
    let mut rng = rng(29);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let len = rng.random_range(1..=6);
        let crf = random_crf(k, 1.0, &mut rng);
        let e = random_emissions(len, k, 2.0, &mut rng);
        let gold = random_path(len, k, &mut rng);
        let grads = crf.nll_grad(&e, &gold).unwrap();

        let n_trans = (k + 2) * (k + 2);
        let mut x: Vec<f64> = crf.transitions().iter().copied().collect();
        x.extend(e.scores().iter().copied());
        let numeric = central_diff(&mut x, 1e-6, |x| {
            let a = Array2::from_shape_vec((k + 2, k + 2), x[..n_trans].to_vec()).unwrap();
            let f = Array2::from_shape_vec((len, k), x[n_trans..].to_vec()).unwrap();
            CrfParams::from_transitions(k, a).unwrap().nll_loss(&EmissionMatrix::new(f).unwrap(), &gold).unwrap()
        });
        let mut analytic: Vec<f64> = grads.d_transitions.iter().copied().collect();
        analytic.extend(grads.d_emissions.iter().copied());
        let err = rel_err(&analytic, &numeric);
        worst = worst.max(err);
        assert!(err <= 1e-5, "relative error {err} (K={k}, T={len})");
    }
    eprintln!("worst CRF gradient relative error: {worst:.2e}");
}

#[test]
fn two_tag_two_step_example() {
    let crf = CrfParams::new(2).unwrap();
    let e = EmissionMatrix::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
    assert_eq!(crf.score_path(&e, &[0, 1]).unwrap(), 5.0);
}

fn instance() -> impl Strategy<Value = (CrfParams, EmissionMatrix, Vec<usize>)> {
    (1usize..=4, 1usize..=6)
        .prop_flat_map(|(k, len)| {
            (
                proptest::collection::vec(-3.0f64..3.0, (k + 2) * (k + 2)),
                proptest::collection::vec(-3.0f64..3.0, len * k),
                proptest::collection::vec(0..k, len),
                Just((k, len)),
            )
        })
        .prop_map(|(a, f, gold, (k, len))| {
            (
                CrfParams::from_transitions(k, Array2::from_shape_vec((k + 2, k + 2), a).unwrap()).unwrap(),
                EmissionMatrix::new(Array2::from_shape_vec((len, k), f).unwrap()).unwrap(),
                gold,
            )
        })
}

proptest! {
    #[test]
    fn partition_equals_brute_force((crf, e, _) in instance()) {
        let brute = enumerate(crf.transitions(), e.scores());
        prop_assert!((crf.log_partition(&e).unwrap() - brute.log_z).abs() <= 1e-8);
        let total: f64 = brute.scores.iter().map(|s| (s - brute.log_z).exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn viterbi_equals_brute_force((crf, e, _) in instance()) {
        let (path, score) = crf.viterbi_decode(&e).unwrap();
        let (best, best_score) = enumerate(crf.transitions(), e.scores()).argmax();
        prop_assert_eq!(&path, &best);
        prop_assert!((score - best_score).abs() <= 1e-10);
        prop_assert!((crf.score_path(&e, &path).unwrap() - score).abs() <= 1e-10);
    }

    #[test]
    fn path_scores_bounded_by_partition((crf, e, gold) in instance()) {
        let log_z = crf.log_partition(&e).unwrap();
        let s = crf.score_path(&e, &gold).unwrap();
        if crf.num_tags() == 1 {
            prop_assert!((log_z - s).abs() <= 1e-10);
        } else {
            prop_assert!(s < log_z);
        }
        let p = (s - log_z).exp();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
        prop_assert!(crf.nll_loss(&e, &gold).unwrap() >= 0.0);
    }

    #[test]
    fn marginals_are_consistent((crf, e, _) in instance()) {
        let m = crf.marginals(&e).unwrap();
        let (len, k) = m.unary.dim();
        for t in 0..len {
            prop_assert!((m.unary.row(t).sum() - 1.0).abs() <= 1e-10);
        }
        for t in 0..len.saturating_sub(1) {
            for i in 0..k {
                let out: f64 = (0..k).map(|j| m.pairwise[[t, i, j]]).sum();
                let inn: f64 = (0..k).map(|j| m.pairwise[[t, j, i]]).sum();
                prop_assert!((out - m.unary[[t, i]]).abs() <= 1e-10);
                prop_assert!((inn - m.unary[[t + 1, i]]).abs() <= 1e-10);
            }
        }
        let brute = enumerate(crf.transitions(), e.scores());
        for (a, b) in m.unary.iter().zip(brute.unary(len, k).iter()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn viterbi_ignores_per_position_shifts((crf, e, _) in instance(), shift in -5.0f64..5.0, pos in 0usize..6) {
        let mut shifted = e.scores().clone();
        let t = pos % shifted.nrows();
        shifted.row_mut(t).mapv_inplace(|v| v + shift);
        let shifted = EmissionMatrix::new(shifted).unwrap();
        prop_assert_eq!(crf.viterbi_decode(&e).unwrap().0, crf.viterbi_decode(&shifted).unwrap().0);
    }
}
