//! Majority voting and mask averaging.

use crate::grid::{BinaryMask, RaterStack, SoftMask};

/// Voxels segmented by strictly more than half of the raters. Ties (even K,
/// S⁺ = K/2) go to background.
pub fn majority_vote(stack: &RaterStack) -> BinaryMask {
    let k = stack.raters() as u32;
    let values = stack.votes().iter().map(|&v| 2 * v > k).collect();
    BinaryMask::new(stack.grid().clone(), values).expect("vote count matches grid")
}

/// Fraction of raters segmenting each voxel.
pub fn mask_average(stack: &RaterStack) -> SoftMask {
    let k = stack.raters() as f64;
    let values = stack.votes().iter().map(|&v| v as f64 / k).collect();
    SoftMask::new(stack.grid().clone(), values).expect("averages lie in [0, 1]")
}
