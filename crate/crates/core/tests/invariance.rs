use consensus_core::baselines::majority_vote;
use consensus_core::distances::{BinaryDistance, SoftDistance};
use consensus_core::fixtures::{random_stacks, RandomStackSpec};
use consensus_core::macchiato::{hard_consensus, soft_consensus, MacchiatoConfig};
use consensus_core::oracle::frechet_hamming;
use consensus_core::staple::{
    e_step_posterior, ml_staple, mml_staple, posterior_logit, sigmoid, PriorSpec,
    RaterPerformance, StapleOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reversed(k: usize) -> Vec<usize> {
    (0..k).rev().collect()
}

#[test]
fn macchiato_ignores_rater_order() {
    let mut hard_diff = 0;
    let mut soft_diff = 0;
    let stacks = random_stacks(19, 300, &RandomStackSpec::default());
    for s in &stacks {
        let p = s.permuted(&reversed(s.raters())).unwrap();
        for kind in [BinaryDistance::Jaccard, BinaryDistance::Dice] {
            let a = hard_consensus(s, kind, &MacchiatoConfig::default()).unwrap();
            let b = hard_consensus(&p, kind, &MacchiatoConfig::default()).unwrap();
            if a.mask != b.mask {
                hard_diff += 1;
            }
        }
        for kind in [SoftDistance::Tanimoto, SoftDistance::Psd2] {
            let a = soft_consensus(s, kind, &MacchiatoConfig::default()).unwrap();
            let b = soft_consensus(&p, kind, &MacchiatoConfig::default()).unwrap();
            // Equal up to the scalar minimizer tolerance on flat objectives.
            let close = a.mask.values().iter().zip(b.mask.values()).all(|(x, y)| (x - y).abs() < 1e-4);
            if !close || (a.lmsd - b.lmsd).abs() > 1e-9 {
                soft_diff += 1;
            }
        }
    }
    assert_eq!((hard_diff, soft_diff), (0, 0));
}

#[test]
fn staple_permutes_performance_with_raters() {
    for s in random_stacks(23, 100, &RandomStackSpec::default()) {
        let order = reversed(s.raters());
        let p = s.permuted(&order).unwrap();
        let a = ml_staple(&s, &StapleOptions::default()).unwrap();
        let b = ml_staple(&p, &StapleOptions::default()).unwrap();
        assert_eq!(a.consensus, b.consensus);
        let m = mml_staple(&s, &PriorSpec::Uninformative, &StapleOptions::default()).unwrap();
        let n = mml_staple(&p, &PriorSpec::Uninformative, &StapleOptions::default()).unwrap();
        for (i, &k) in order.iter().enumerate() {
            assert!((m.performance.sensitivity[k] - n.performance.sensitivity[i]).abs() < 1e-9);
            assert!((m.performance.specificity[k] - n.performance.specificity[i]).abs() < 1e-9);
        }
        assert!(m.consensus.values().iter().zip(n.consensus.values()).all(|(x, y)| (x - y).abs() < 1e-9));
    }
}

#[test]
fn logit_matches_posterior_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let k = rng.gen_range(1..6);
        let p: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.99)).collect();
        let q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.99)).collect();
        let perf = RaterPerformance::new(p, q).unwrap();
        let pattern: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
        let w = rng.gen_range(0.01..0.99);
        let u = e_step_posterior(&pattern, &perf, w);
        assert!((sigmoid(posterior_logit(&pattern, &perf, w)) - u).abs() < 1e-12);
    }
}

#[test]
fn more_votes_never_flip_a_decision_to_background() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let k = rng.gen_range(1..6);
        let p: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..0.99)).collect();
        let q: Vec<f64> = p.iter().map(|&pk| rng.gen_range((1.0 - pk + 0.001)..0.999)).collect();
        let perf = RaterPerformance::new(p, q).unwrap();
        let mut pattern = vec![false; k];
        let mut last = posterior_logit(&pattern, &perf, 0.5) >= 0.0;
        for i in 0..k {
            pattern[i] = true;
            let now = posterior_logit(&pattern, &perf, 0.5) >= 0.0;
            assert!(!last || now);
            last = now;
        }
    }
}

#[test]
fn hamming_mean_is_majority_vote_for_any_rater_count() {
    let spec = RandomStackSpec {
        max_raters: 6,
        ..RandomStackSpec::default()
    };
    for s in random_stacks(31, 300, &spec) {
        assert_eq!(frechet_hamming(&s), majority_vote(&s));
    }
}
