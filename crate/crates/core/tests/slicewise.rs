use consensus_core::distances::{BinaryDistance, SoftDistance};
use consensus_core::fixtures::{random_stacks, RandomStackSpec};
use consensus_core::macchiato::{hard_consensus, soft_consensus, MacchiatoConfig};
use consensus_core::{BinaryMask, Grid, Neighborhood, RaterStack};

fn slice(stack: &RaterStack, z: usize) -> RaterStack {
    let d = stack.grid().dims();
    let (h, w) = (d[1], d[2]);
    let g = Grid::new(vec![h, w], Neighborhood::N8).unwrap();
    let masks = stack
        .masks()
        .iter()
        .map(|m| BinaryMask::new(g.clone(), m.values()[z * h * w..(z + 1) * h * w].to_vec()).unwrap())
        .collect();
    RaterStack::new(masks).unwrap()
}

#[test]
fn slicewise_equals_independent_slices() {
    let spec = RandomStackSpec {
        max_dims: vec![4, 5, 5],
        max_support: 30,
        ..RandomStackSpec::default()
    };
    let mut checked = 0;
    for s in random_stacks(77, 150, &spec) {
        if s.grid().ndim() != 3 {
            continue;
        }
        let s = s.with_neighborhood(Neighborhood::Slicewise).unwrap();
        let plane = s.grid().dims()[1] * s.grid().dims()[2];
        for kind in [BinaryDistance::Jaccard, BinaryDistance::Dice] {
            let whole = hard_consensus(&s, kind, &MacchiatoConfig::default()).unwrap();
            for z in 0..s.grid().dims()[0] {
                let part = hard_consensus(&slice(&s, z), kind, &MacchiatoConfig::default()).unwrap();
                assert_eq!(&whole.mask.values()[z * plane..(z + 1) * plane], part.mask.values());
            }
        }
        let whole = soft_consensus(&s, SoftDistance::Tanimoto, &MacchiatoConfig::default()).unwrap();
        for z in 0..s.grid().dims()[0] {
            let part = soft_consensus(&slice(&s, z), SoftDistance::Tanimoto, &MacchiatoConfig::default()).unwrap();
            let a = &whole.mask.values()[z * plane..(z + 1) * plane];
            assert!(a.iter().zip(part.mask.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        checked += 1;
    }
    assert!(checked > 20);
}
