use consensus_core::baselines::mask_average;
use consensus_core::distances::{lmsd_hard, lmsd_soft, BinaryDistance, SoftDistance};
use consensus_core::fixtures::{random_stack, random_stacks, RandomStackSpec};
use consensus_core::grid::Padding;
use consensus_core::macchiato::{
    hard_consensus, soft_consensus, Heuristic, MacchiatoConfig,
};
use consensus_core::morphology::{connected_components, Decomposition};
use consensus_core::oracle::{exhaustive_hard, OracleBudget};
use consensus_core::{BinaryMask, Grid, Neighborhood, RaterStack};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const HARD: [BinaryDistance; 2] = [BinaryDistance::Jaccard, BinaryDistance::Dice];
const SOFT: [SoftDistance; 4] = [
    SoftDistance::Tanimoto,
    SoftDistance::Soergel,
    SoftDistance::Psd1,
    SoftDistance::Psd2,
];

fn stack_from_seed(seed: u64) -> RaterStack {
    random_stack(&mut ChaCha8Rng::seed_from_u64(seed), &RandomStackSpec::default())
}

/// Minimum LMSD over every subset of the support, by direct evaluation.
fn brute_force_minimum(stack: &RaterStack, kind: BinaryDistance) -> f64 {
    let labels = connected_components(stack);
    let support = stack.support().to_vec();
    let mut best = f64::INFINITY;
    for bits in 0u32..1 << support.len() {
        let chosen: Vec<usize> = support
            .iter()
            .enumerate()
            .filter(|(i, _)| bits >> i & 1 == 1)
            .map(|(_, &v)| v)
            .collect();
        let m = BinaryMask::from_indices(stack.grid().clone(), &chosen).unwrap();
        best = best.min(lmsd_hard(stack, &m, kind, &labels).unwrap());
    }
    best
}

#[test]
fn exhaustive_oracle_agrees_with_direct_enumeration() {
    let spec = RandomStackSpec {
        max_support: 10,
        ..RandomStackSpec::default()
    };
    for stack in random_stacks(41, 60, &spec) {
        let labels = connected_components(&stack);
        for kind in HARD {
            let (mask, value) = exhaustive_hard(&stack, kind, &OracleBudget::default()).unwrap();
            assert!((value - brute_force_minimum(&stack, kind)).abs() < 1e-12);
            assert!((lmsd_hard(&stack, &mask, kind, &labels).unwrap() - value).abs() < 1e-12);
        }
    }
}

#[test]
fn subcrown_split_beats_every_subcrown_union() {
    // Rater 2's extra voxels form one subcrown; the optimum keeps only half of it.
    let g = Grid::new(vec![3], Neighborhood::N2).unwrap();
    let s = RaterStack::new(vec![
        BinaryMask::from_indices(g.clone(), &[1]).unwrap(),
        BinaryMask::from_indices(g, &[0, 1, 2]).unwrap(),
    ])
    .unwrap();
    let (oracle, best) = exhaustive_hard(&s, BinaryDistance::Dice, &OracleBudget::default()).unwrap();
    let greedy = hard_consensus(&s, BinaryDistance::Dice, &MacchiatoConfig::default()).unwrap();
    assert_eq!(oracle.count(), 2);
    assert!(greedy.lmsd > best);
}

#[test]
fn majority_of_raters_absent_empties_the_component() {
    let spec = RandomStackSpec {
        max_raters: 5,
        ..RandomStackSpec::default()
    };
    for stack in random_stacks(7, 300, &spec) {
        let k = stack.raters();
        let dec = Decomposition::new(&stack);
        for kind in HARD {
            let r = hard_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            for (part, report) in dec.partitions.iter().zip(&r.components) {
                if 2 * report.segmenting_raters < k {
                    assert!(part.entries.iter().flat_map(|e| &e.voxels).all(|&v| !r.mask.get(v)));
                }
            }
        }
    }
}

#[test]
fn low_vote_component_can_survive() {
    // No voxel reaches K/2 votes, yet two of three raters touch the component.
    let g = Grid::new(vec![4], Neighborhood::N2).unwrap();
    let s = RaterStack::new(vec![
        BinaryMask::from_indices(g.clone(), &[1]).unwrap(),
        BinaryMask::from_indices(g.clone(), &[2]).unwrap(),
        BinaryMask::zeros(g),
    ])
    .unwrap();
    assert!(s.votes().iter().all(|&v| 2 * v < 3));
    let r = hard_consensus(&s, BinaryDistance::Jaccard, &MacchiatoConfig::default()).unwrap();
    assert_eq!(r.mask.indices(), vec![1, 2]);
}

#[test]
fn soft_output_equals_average_where_nothing_moved() {
    for stack in random_stacks(3, 100, &RandomStackSpec::default()) {
        let avg = mask_average(&stack);
        let labels = connected_components(&stack);
        for kind in SOFT {
            let r = soft_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            for (id, c) in labels.ids().zip(&r.components) {
                if c.accepted_moves == 0 {
                    assert!(labels.members(id).iter().all(|&v| r.mask.get(v) == avg.get(v)));
                }
            }
            for v in 0..stack.grid().len() {
                if stack.votes()[v] == 0 {
                    assert_eq!(r.mask.get(v), 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn greedy_never_beats_the_oracle(seed in any::<u64>()) {
        let stack = stack_from_seed(seed);
        for kind in HARD {
            for h in [Heuristic::Subcrown, Heuristic::Crown, Heuristic::Voxel] {
                let r = hard_consensus(&stack, kind, &MacchiatoConfig::with_heuristic(h)).unwrap();
                let (_, best) = exhaustive_hard(&stack, kind, &OracleBudget::default()).unwrap();
                prop_assert!(best <= r.lmsd);
            }
        }
    }

    #[test]
    fn hard_output_is_a_subset_of_the_union_and_beats_the_starts(seed in any::<u64>()) {
        let stack = stack_from_seed(seed);
        let labels = connected_components(&stack);
        let union = stack.union();
        for kind in HARD {
            let r = hard_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            prop_assert!(r.mask.indices().iter().all(|&v| union.get(v)));
            let empty = lmsd_hard(&stack, &BinaryMask::zeros(stack.grid().clone()), kind, &labels).unwrap();
            let full = lmsd_hard(&stack, &union, kind, &labels).unwrap();
            prop_assert!(r.lmsd <= empty + 1e-12 && r.lmsd <= full + 1e-12);
            prop_assert!((lmsd_hard(&stack, &r.mask, kind, &labels).unwrap() - r.lmsd).abs() < 1e-9);
            for c in &r.components {
                prop_assert!(c.lmsd <= c.initial_lmsd + 1e-12);
            }
        }
    }

    #[test]
    fn soft_descends_from_the_average(seed in any::<u64>()) {
        let stack = stack_from_seed(seed);
        let labels = connected_components(&stack);
        for kind in SOFT {
            let r = soft_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            let start = lmsd_soft(&stack, &mask_average(&stack), kind, &labels).unwrap();
            prop_assert!(r.lmsd <= start + 1e-12);
            prop_assert!((lmsd_soft(&stack, &r.mask, kind, &labels).unwrap() - r.lmsd).abs() < 1e-9);
            for c in &r.components {
                prop_assert!(c.history.windows(2).all(|w| w[1] < w[0]));
                if let Some(&first) = c.history.first() {
                    prop_assert!(first < c.initial_lmsd);
                }
            }
        }
    }

    #[test]
    fn padding_does_not_change_the_result(seed in any::<u64>(), margin in 0usize..6) {
        let stack = stack_from_seed(seed);
        let ndim = stack.grid().ndim();
        let padded = stack.padded(&Padding::uniform(ndim, margin)).unwrap();
        let offset = vec![margin; ndim];
        let dims = stack.grid().dims().to_vec();
        for kind in HARD {
            let a = hard_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            let b = hard_consensus(&padded, kind, &MacchiatoConfig::default()).unwrap();
            let crop = b.mask.cropped(&offset, &dims).unwrap();
            prop_assert_eq!(crop.values(), a.mask.values());
            prop_assert_eq!(b.mask.count(), a.mask.count());
            prop_assert_eq!(a.lmsd.to_bits(), b.lmsd.to_bits());
        }
        for kind in SOFT {
            let a = soft_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            let b = soft_consensus(&padded, kind, &MacchiatoConfig::default()).unwrap();
            let crop = b.mask.cropped(&offset, &dims).unwrap();
            prop_assert!(crop.values().iter().zip(a.mask.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(b.mask.volume().to_bits(), a.mask.volume().to_bits());
        }
    }

    #[test]
    fn repeated_runs_are_identical(seed in any::<u64>()) {
        let stack = stack_from_seed(seed);
        for kind in SOFT {
            let a = soft_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            let b = soft_consensus(&stack, kind, &MacchiatoConfig::default()).unwrap();
            prop_assert!(a.mask.values().iter().zip(b.mask.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
