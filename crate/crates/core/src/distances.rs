//! Set distances between binary masks, their soft surrogates, and the local
//! mean squared distance (LMSD) criterion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RaterStack, SoftMask};
use crate::morphology::ComponentLabels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryDistance {
    /// Size of the symmetric difference (the squared Hamming distance).
    Hamming,
    Jaccard,
    Dice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftDistance {
    Tanimoto,
    Soergel,
    Psd1,
    Psd2,
    L2,
}

impl SoftDistance {
    /// Binary distance this surrogate agrees with on {0,1} inputs.
    pub fn binary_counterpart(self) -> BinaryDistance {
        match self {
            SoftDistance::Tanimoto | SoftDistance::Soergel => BinaryDistance::Jaccard,
            SoftDistance::Psd1 | SoftDistance::Psd2 => BinaryDistance::Dice,
            SoftDistance::L2 => BinaryDistance::Hamming,
        }
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Binary distance from set sizes `|A|`, `|B|` and `|A ∩ B|`.
///
/// Two empty sets are at distance 0; a non-empty set is at distance 1 from the
/// empty set for Jaccard and Dice.
pub fn binary_distance_from_counts(kind: BinaryDistance, a: f64, b: f64, inter: f64) -> f64 {
    match kind {
        BinaryDistance::Hamming => a + b - 2.0 * inter,
        BinaryDistance::Jaccard => ratio_or_zero(a + b - 2.0 * inter, a + b - inter),
        BinaryDistance::Dice => {
            if a + b == 0.0 {
                0.0
            } else {
                1.0 - 2.0 * inter / (a + b)
            }
        }
    }
}

/// Squared distance as it enters the Fréchet variance. For Hamming this is
/// the symmetric-difference count itself.
pub fn squared_binary_distance(kind: BinaryDistance, a: f64, b: f64, inter: f64) -> f64 {
    let d = binary_distance_from_counts(kind, a, b, inter);
    match kind {
        BinaryDistance::Hamming => d,
        _ => d * d,
    }
}

/// Distance between two indicator vectors of equal length.
pub fn binary_distance(kind: BinaryDistance, a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "indicator vectors differ in length");
    let (mut na, mut nb, mut ni) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        ni += (x && y) as usize;
    }
    binary_distance_from_counts(kind, na as f64, nb as f64, ni as f64)
}

/// Soft surrogate distance between two vectors with values in [0, 1].
pub fn soft_distance(kind: SoftDistance, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "vectors differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("value {v} outside [0, 1]")));
    }
    let pairs = x.iter().zip(y);
    Ok(match kind {
        SoftDistance::Tanimoto => {
            let (mut diff2, mut dot) = (0.0, 0.0);
            for (a, b) in pairs {
                diff2 += (a - b) * (a - b);
                dot += a * b;
            }
            ratio_or_zero(diff2, diff2 + dot)
        }
        SoftDistance::Soergel => {
            let (mut num, mut den) = (0.0, 0.0);
            for (&a, &b) in pairs {
                num += a.max(b) - a.min(b);
                den += a.max(b);
            }
            ratio_or_zero(num, den)
        }
        SoftDistance::Psd1 | SoftDistance::Psd2 => {
            let (mut dot, mut norm) = (0.0, 0.0);
            for (&a, &b) in pairs {
                dot += a * b;
                norm += if kind == SoftDistance::Psd1 { a + b } else { a * a + b * b };
            }
            if norm == 0.0 {
                0.0
            } else {
                1.0 - 2.0 * dot / norm
            }
        }
        SoftDistance::L2 => pairs.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
    })
}

/// Sufficient statistics of a soft candidate `x` against one binary mask `s`
/// over a region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoftStats {
    /// Σ x
    pub sum: f64,
    /// Σ x²
    pub sum_sq: f64,
    /// Σ x over voxels where s = 1
    pub inside: f64,
    /// |s|
    pub mask_size: f64,
}

/// Surrogate distance between a soft candidate and a binary mask from their
/// sufficient statistics. Agrees with [`soft_distance`] on the same inputs.
pub fn soft_distance_from_stats(kind: SoftDistance, st: &SoftStats) -> f64 {
    let SoftStats {
        sum,
        sum_sq,
        inside,
        mask_size,
    } = *st;
    match kind {
        SoftDistance::Tanimoto => {
            let diff2 = (sum_sq - 2.0 * inside + mask_size).max(0.0);
            ratio_or_zero(diff2, diff2 + inside)
        }
        SoftDistance::Soergel => {
            let outside = (sum - inside).max(0.0);
            ratio_or_zero((mask_size - inside).max(0.0) + outside, mask_size + outside)
        }
        SoftDistance::Psd1 => {
            let den = sum + mask_size;
            if den == 0.0 {
                0.0
            } else {
                1.0 - 2.0 * inside / den
            }
        }
        SoftDistance::Psd2 => {
            let den = sum_sq + mask_size;
            if den == 0.0 {
                0.0
            } else {
                1.0 - 2.0 * inside / den
            }
        }
        SoftDistance::L2 => (sum_sq - 2.0 * inside + mask_size).max(0.0).sqrt(),
    }
}

pub fn squared_soft_distance(kind: SoftDistance, st: &SoftStats) -> f64 {
    let d = soft_distance_from_stats(kind, st);
    d * d
}

fn check_support_hard(stack: &RaterStack, candidate: &BinaryMask) -> Result<()> {
    stack.grid().ensure_same(candidate.grid())?;
    let votes = stack.votes();
    match candidate.indices().into_iter().find(|&i| votes[i] == 0) {
        Some(voxel) => Err(Error::Support { voxel }),
        None => Ok(()),
    }
}

/// LMSD of a hard candidate: over components of the union, the mean over
/// raters of the squared distance between restrictions.
pub fn lmsd_hard(
    stack: &RaterStack,
    candidate: &BinaryMask,
    kind: BinaryDistance,
    labels: &ComponentLabels,
) -> Result<f64> {
    check_support_hard(stack, candidate)?;
    let k = stack.raters() as f64;
    let mut total = 0.0;
    for id in labels.ids() {
        let comp = labels.members(id);
        let m = comp.iter().filter(|&&v| candidate.get(v)).count() as f64;
        let mut acc = 0.0;
        for mask in stack.masks() {
            let (mut b, mut inter) = (0.0, 0.0);
            for &v in comp {
                if mask.get(v) {
                    b += 1.0;
                    if candidate.get(v) {
                        inter += 1.0;
                    }
                }
            }
            acc += squared_binary_distance(kind, m, b, inter);
        }
        total += acc / k;
    }
    Ok(total)
}

/// LMSD of a soft candidate under a surrogate distance. The candidate must be
/// zero outside the rater union.
pub fn lmsd_soft(
    stack: &RaterStack,
    candidate: &SoftMask,
    kind: SoftDistance,
    labels: &ComponentLabels,
) -> Result<f64> {
    stack.grid().ensure_same(candidate.grid())?;
    let votes = stack.votes();
    if let Some(voxel) = (0..votes.len()).find(|&i| votes[i] == 0 && candidate.get(i) != 0.0) {
        return Err(Error::Support { voxel });
    }
    let k = stack.raters() as f64;
    let mut total = 0.0;
    for id in labels.ids() {
        let comp = labels.members(id);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &v in comp {
            let x = candidate.get(v);
            sum += x;
            sum_sq += x * x;
        }
        let mut acc = 0.0;
        for mask in stack.masks() {
            let (mut inside, mut mask_size) = (0.0, 0.0);
            for &v in comp {
                if mask.get(v) {
                    inside += candidate.get(v);
                    mask_size += 1.0;
                }
            }
            acc += squared_soft_distance(
                kind,
                &SoftStats {
                    sum,
                    sum_sq,
                    inside,
                    mask_size,
                },
            );
        }
        total += acc / k;
    }
    Ok(total)
}

/// Hard confusion counts of a prediction against a reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Soft counts of a binary rater mask against a probabilistic consensus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SoftConfusion {
    /// Σ_{S=1} u
    pub stp: f64,
    /// Σ_{S=1} (1 − u)
    pub sfp: f64,
    /// Σ_{S=0} u
    pub sfn: f64,
    /// Σ_{S=0} (1 − u)
    pub stn: f64,
}

/// Counts of `pred` (a rater mask) against `truth` (a consensus).
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    pred.grid().ensure_same(truth.grid())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn soft_confusion(consensus: &SoftMask, rater: &BinaryMask) -> Result<SoftConfusion> {
    consensus.grid().ensure_same(rater.grid())?;
    let mut c = SoftConfusion::default();
    for (&u, &s) in consensus.values().iter().zip(rater.values()) {
        if s {
            c.stp += u;
            c.sfp += 1.0 - u;
        } else {
            c.sfn += u;
            c.stn += 1.0 - u;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Neighborhood};
    use crate::morphology::connected_components;
    use approx::assert_abs_diff_eq;

    fn ind(n: usize, idx: &[usize]) -> Vec<bool> {
        let mut v = vec![false; n];
        for &i in idx {
            v[i] = true;
        }
        v
    }

    fn f1() -> RaterStack {
        let g = Grid::new(vec![8], Neighborhood::N2).unwrap();
        RaterStack::new(vec![
            BinaryMask::from_indices(g.clone(), &[2, 3, 4]).unwrap(),
            BinaryMask::from_indices(g, &[3, 4, 5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn binary_examples() {
        let a = ind(8, &[2, 3, 4]);
        let b = ind(8, &[3, 4, 5]);
        assert_eq!(binary_distance(BinaryDistance::Jaccard, &a, &b), 0.5);
        assert_abs_diff_eq!(binary_distance(BinaryDistance::Dice, &a, &b), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(binary_distance(BinaryDistance::Hamming, &a, &b), 2.0);
        assert_eq!(binary_distance(BinaryDistance::Jaccard, &a, &a), 0.0);
        let empty = vec![false; 8];
        assert_eq!(binary_distance(BinaryDistance::Jaccard, &a, &empty), 1.0);
        assert_eq!(binary_distance(BinaryDistance::Dice, &a, &empty), 1.0);
        assert_eq!(binary_distance(BinaryDistance::Jaccard, &empty, &empty), 0.0);
        assert_eq!(binary_distance(BinaryDistance::Dice, &empty, &empty), 0.0);
    }

    #[test]
    fn surrogate_examples() {
        let x = [1.0, 0.0];
        let y = [1.0, 1.0];
        assert_eq!(soft_distance(SoftDistance::Tanimoto, &x, &y).unwrap(), 0.5);
        assert_eq!(soft_distance(SoftDistance::Soergel, &x, &y).unwrap(), 0.5);
        assert_abs_diff_eq!(soft_distance(SoftDistance::Psd1, &x, &y).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(soft_distance(SoftDistance::Psd2, &x, &y).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(soft_distance(SoftDistance::L2, &x, &y).unwrap(), 1.0);
        assert_eq!(soft_distance(SoftDistance::Tanimoto, &[0.0], &[0.0]).unwrap(), 0.0);
        assert!(matches!(
            soft_distance(SoftDistance::Tanimoto, &[1.2], &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stats_route_matches_direct_route() {
        let x = [0.3, 0.9, 0.0, 0.5, 1.0];
        let s = [true, false, true, true, false];
        let y: Vec<f64> = s.iter().map(|&b| b as u8 as f64).collect();
        let st = SoftStats {
            sum: x.iter().sum(),
            sum_sq: x.iter().map(|v| v * v).sum(),
            inside: x.iter().zip(&s).filter(|(_, &b)| b).map(|(v, _)| v).sum(),
            mask_size: 3.0,
        };
        for kind in [
            SoftDistance::Tanimoto,
            SoftDistance::Soergel,
            SoftDistance::Psd1,
            SoftDistance::Psd2,
            SoftDistance::L2,
        ] {
            let direct = soft_distance(kind, &x, &y).unwrap();
            assert_abs_diff_eq!(soft_distance_from_stats(kind, &st), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn lmsd_examples() {
        let s = f1();
        let labels = connected_components(&s);
        let g = s.grid().clone();
        let union = BinaryMask::from_indices(g.clone(), &[2, 3, 4, 5]).unwrap();
        assert_abs_diff_eq!(
            lmsd_hard(&s, &union, BinaryDistance::Jaccard, &labels).unwrap(),
            0.0625,
            epsilon = 1e-15
        );
        let empty = BinaryMask::zeros(g.clone());
        assert_eq!(lmsd_hard(&s, &empty, BinaryDistance::Jaccard, &labels).unwrap(), 1.0);
        let a = s.mask(0).clone();
        assert_abs_diff_eq!(
            lmsd_hard(&s, &a, BinaryDistance::Dice, &labels).unwrap(),
            0.5 / 9.0,
            epsilon = 1e-15
        );
        let outside = BinaryMask::from_indices(g, &[0, 3]).unwrap();
        assert_eq!(
            lmsd_hard(&s, &outside, BinaryDistance::Jaccard, &labels),
            Err(Error::Support { voxel: 0 })
        );
    }

    #[test]
    fn soft_lmsd_reduces_to_hard_on_binary_candidates() {
        let s = f1();
        let labels = connected_components(&s);
        let union = s.union();
        let hard = lmsd_hard(&s, &union, BinaryDistance::Jaccard, &labels).unwrap();
        let soft = lmsd_soft(&s, &union.to_soft(), SoftDistance::Tanimoto, &labels).unwrap();
        assert_abs_diff_eq!(hard, soft, epsilon = 1e-15);
    }

    #[test]
    fn confusion_examples() {
        let g = Grid::new(vec![8], Neighborhood::N2).unwrap();
        let a = BinaryMask::from_indices(g.clone(), &[2, 3, 4]).unwrap();
        let t = BinaryMask::from_indices(g.clone(), &[3, 4, 5]).unwrap();
        assert_eq!(
            confusion(&a, &t).unwrap(),
            ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 4 }
        );
        let c = confusion(&a, &a).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));

        let g2 = Grid::new(vec![2], Neighborhood::N2).unwrap();
        let u = SoftMask::new(g2.clone(), vec![1.0, 0.5]).unwrap();
        let r = BinaryMask::from_indices(g2, &[0]).unwrap();
        let sc = soft_confusion(&u, &r).unwrap();
        assert_eq!((sc.stp, sc.stn, sc.sfp, sc.sfn), (1.0, 0.5, 0.0, 0.5));
    }
}
