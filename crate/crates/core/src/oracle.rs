//! Brute-force references for desk-scale validation.

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::mask_average;
use crate::distances::{
    squared_binary_distance, squared_soft_distance, BinaryDistance, SoftDistance, SoftStats,
};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RaterStack, SoftMask};
use crate::morphology::{connected_components, ComponentLabels};

/// Values closer than this count as ties in the exhaustive search.
const TIE_TOL: f64 = 1e-12;
/// Bits enumerated sequentially inside one parallel chunk.
const CHUNK_BITS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleBudget {
    /// Largest component enumerated exhaustively.
    pub max_support: usize,
    /// Objective evaluations allowed for one dense soft search.
    pub max_grid_points: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_support: 20,
            max_grid_points: 1 << 20,
        }
    }
}

impl OracleBudget {
    /// Whether every component of `stack` fits the exhaustive search.
    pub fn admits(&self, labels: &ComponentLabels) -> bool {
        labels.ids().all(|id| labels.members(id).len() <= self.max_support)
    }
}

/// Per-voxel rater bits and per-rater sizes of one component.
struct Local {
    raters: usize,
    voxels: Vec<usize>,
    groups: Vec<u64>,
    rater_sizes: Vec<f64>,
}

impl Local {
    fn new(stack: &RaterStack, voxels: &[usize]) -> Self {
        let mut voxels = voxels.to_vec();
        voxels.sort_unstable();
        let groups: Vec<u64> = voxels.iter().map(|&v| stack.pattern(v)).collect();
        let raters = stack.raters();
        let rater_sizes = (0..raters)
            .map(|k| groups.iter().filter(|&&g| g >> k & 1 == 1).count() as f64)
            .collect();
        Self {
            raters,
            voxels,
            groups,
            rater_sizes,
        }
    }

    fn hard_objective(&self, kind: BinaryDistance, size: f64, inter: &[f64]) -> f64 {
        let total: f64 = (0..self.raters)
            .map(|k| squared_binary_distance(kind, size, self.rater_sizes[k], inter[k]))
            .sum();
        total / self.raters as f64
    }

    fn soft_objective(&self, kind: SoftDistance, sum: f64, sum_sq: f64, inside: &[f64]) -> f64 {
        let total: f64 = (0..self.raters)
            .map(|k| {
                squared_soft_distance(
                    kind,
                    &SoftStats {
                        sum,
                        sum_sq,
                        inside: inside[k],
                        mask_size: self.rater_sizes[k],
                    },
                )
            })
            .sum();
        total / self.raters as f64
    }
}

/// Whether the sorted index list of `a` precedes that of `b`.
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    if diff == 0 {
        return false;
    }
    let t = diff.trailing_zeros();
    let above = |x: u64| t < 63 && x >> (t + 1) != 0;
    if a >> t & 1 == 1 {
        // a continues with t; b either ends (b is a prefix) or continues higher.
        above(b)
    } else {
        !above(a)
    }
}

fn better(candidate: (f64, u64), best: (f64, u64)) -> bool {
    if candidate.0 < best.0 - TIE_TOL {
        true
    } else if (candidate.0 - best.0).abs() <= TIE_TOL {
        lex_less(candidate.1, best.1)
    } else {
        false
    }
}

fn exhaustive_component(local: &Local, kind: BinaryDistance) -> (f64, u64) {
    let m = local.voxels.len();
    let low = m.min(CHUNK_BITS);
    let high = m - low;
    (0..1u64 << high)
        .into_par_iter()
        .map(|top| {
            let mut subset = top << low;
            let mut size = 0.0;
            let mut inter = vec![0.0; local.raters];
            for i in low..m {
                if subset >> i & 1 == 1 {
                    size += 1.0;
                    for (k, v) in inter.iter_mut().enumerate() {
                        if local.groups[i] >> k & 1 == 1 {
                            *v += 1.0;
                        }
                    }
                }
            }
            let mut best = (local.hard_objective(kind, size, &inter), subset);
            for step in 1..1u64 << low {
                let i = step.trailing_zeros() as usize;
                subset ^= 1 << i;
                let delta = if subset >> i & 1 == 1 { 1.0 } else { -1.0 };
                size += delta;
                for (k, v) in inter.iter_mut().enumerate() {
                    if local.groups[i] >> k & 1 == 1 {
                        *v += delta;
                    }
                }
                let cand = (local.hard_objective(kind, size, &inter), subset);
                if better(cand, best) {
                    best = cand;
                }
            }
            best
        })
        .reduce_with(|a, b| if better(b, a) { b } else { a })
        .expect("at least one subset")
}

/// Exact per-component LMSD minimizer over all subsets of each component.
/// Ties go to the lexicographically smallest sorted voxel list.
pub fn exhaustive_hard(
    stack: &RaterStack,
    kind: BinaryDistance,
    budget: &OracleBudget,
) -> Result<(BinaryMask, f64)> {
    let labels = connected_components(stack);
    let max_support = budget.max_support.min(63);
    for id in labels.ids() {
        let m = labels.members(id).len();
        if m > max_support {
            return Err(Error::BudgetExceeded {
                what: "exhaustive support",
                required: m as u128,
                allowed: max_support as u128,
            });
        }
    }
    let mut values = vec![false; stack.grid().len()];
    let mut total = 0.0;
    for id in labels.ids() {
        let local = Local::new(stack, labels.members(id));
        let (lmsd, subset) = exhaustive_component(&local, kind);
        total += lmsd;
        for (i, &v) in local.voxels.iter().enumerate() {
            values[v] = subset >> i & 1 == 1;
        }
    }
    Ok((BinaryMask::new(stack.grid().clone(), values)?, total))
}

/// Per-voxel minimizer of Σ_k (S_n^k − M_n)²; ties go to background.
pub fn frechet_hamming(stack: &RaterStack) -> BinaryMask {
    let k = stack.raters() as u32;
    let values = stack
        .votes()
        .iter()
        .map(|&v| {
            let cost_fg = k - v;
            let cost_bg = v;
            cost_fg < cost_bg
        })
        .collect();
    BinaryMask::new(stack.grid().clone(), values).expect("vote count matches grid")
}

/// Reference soft consensus: cyclic per-voxel coordinate descent from the
/// mask average, each coordinate searched over a uniform grid of step
/// `resolution`, until a sweep improves LMSD by less than 1e-10. A strong
/// reference, not a certified optimum.
pub fn dense_soft(
    stack: &RaterStack,
    kind: SoftDistance,
    resolution: f64,
    budget: &OracleBudget,
) -> Result<(SoftMask, f64)> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Config(format!("resolution {resolution} must lie in (0, 1]")));
    }
    let steps = (1.0 / resolution).round() as u64;
    let labels = connected_components(stack);
    let init = mask_average(stack);
    let mut values = init.values().to_vec();
    let mut total = 0.0;
    let mut evaluations: u64 = 0;
    for id in labels.ids() {
        let local = Local::new(stack, labels.members(id));
        let m = local.voxels.len() as u64;
        if m * (steps + 1) > budget.max_grid_points {
            return Err(Error::BudgetExceeded {
                what: "dense soft sweep",
                required: (m * (steps + 1)) as u128,
                allowed: budget.max_grid_points as u128,
            });
        }
        let mut x: Vec<f64> = local.voxels.iter().map(|&v| init.get(v)).collect();
        let mut sum: f64 = x.iter().sum();
        let mut sum_sq: f64 = x.iter().map(|v| v * v).sum();
        let mut inside: Vec<f64> = (0..local.raters)
            .map(|k| {
                x.iter()
                    .zip(&local.groups)
                    .filter(|(_, &g)| g >> k & 1 == 1)
                    .map(|(v, _)| v)
                    .sum()
            })
            .collect();
        let mut current = local.soft_objective(kind, sum, sum_sq, &inside);
        loop {
            let start = current;
            for i in 0..x.len() {
                let old = x[i];
                let g = local.groups[i];
                let mut best = (current, old);
                for s in 0..=steps {
                    let y = (s as f64 / steps as f64).min(1.0);
                    let shifted: Vec<f64> = inside
                        .iter()
                        .enumerate()
                        .map(|(k, &v)| if g >> k & 1 == 1 { v + y - old } else { v })
                        .collect();
                    let f = local.soft_objective(
                        kind,
                        sum + y - old,
                        sum_sq + y * y - old * old,
                        &shifted,
                    );
                    if f < best.0 {
                        best = (f, y);
                    }
                }
                evaluations += steps + 1;
                if evaluations > budget.max_grid_points {
                    return Err(Error::BudgetExceeded {
                        what: "dense soft evaluations",
                        required: evaluations as u128,
                        allowed: budget.max_grid_points as u128,
                    });
                }
                let y = best.1;
                if y != old {
                    sum += y - old;
                    sum_sq += y * y - old * old;
                    for (k, v) in inside.iter_mut().enumerate() {
                        if g >> k & 1 == 1 {
                            *v += y - old;
                        }
                    }
                    x[i] = y;
                    current = local.soft_objective(kind, sum, sum_sq, &inside);
                }
            }
            if start - current < 1e-10 {
                break;
            }
        }
        total += current;
        for (i, &v) in local.voxels.iter().enumerate() {
            values[v] = x[i];
        }
    }
    Ok((SoftMask::new(stack.grid().clone(), values)?, total))
}
