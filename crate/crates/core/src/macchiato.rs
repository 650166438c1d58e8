//! Fréchet-mean consensus by greedy block moves over the subcrown
//! decomposition of each connected component.
//!
//! Every component is optimized on its own. The unit of a move is a block:
//! a subcrown (default), a whole crown, or a single voxel. Blocks are built
//! from atoms that always share one value (membership for hard consensus, a
//! probability for soft consensus), so a move only needs per-rater sufficient
//! statistics and costs O(K) per atom.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::mask_average;
use crate::distances::{
    squared_binary_distance, squared_soft_distance, BinaryDistance, SoftDistance, SoftStats,
};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RaterStack, SoftMask};
use crate::morphology::{Decomposition, Subcrown, SubcrownPartition};
use crate::optimize::minimize_unit_interval;

/// Minimum decrease for a move to count as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    #[default]
    Subcrown,
    Crown,
    Voxel,
}

impl std::str::FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "subcrown" => Ok(Heuristic::Subcrown),
            "crown" => Ok(Heuristic::Crown),
            "voxel" => Ok(Heuristic::Voxel),
            other => Err(Error::Config(format!("unknown heuristic '{other}'"))),
        }
    }
}

impl Heuristic {
    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Subcrown => "subcrown",
            Heuristic::Crown => "crown",
            Heuristic::Voxel => "voxel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacchiatoConfig {
    pub heuristic: Heuristic,
    /// Argument tolerance of the per-block scalar minimization.
    pub scalar_tol: f64,
    pub max_sweeps: usize,
}

impl Default for MacchiatoConfig {
    fn default() -> Self {
        Self {
            heuristic: Heuristic::Subcrown,
            scalar_tol: 1e-6,
            max_sweeps: 100,
        }
    }
}

impl MacchiatoConfig {
    pub fn with_heuristic(heuristic: Heuristic) -> Self {
        Self {
            heuristic,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Atom {
    td: u32,
    group: u64,
    voxels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Block {
    td: u32,
    atoms: Vec<usize>,
}

/// One component's optimization blocks and per-rater restriction sizes.
#[derive(Debug, Clone)]
pub struct ComponentProblem {
    component: u32,
    raters: usize,
    rater_sizes: Vec<f64>,
    atoms: Vec<Atom>,
    /// Sorted by ascending distance, then canonical order within a distance.
    blocks: Vec<Block>,
}

impl ComponentProblem {
    pub fn new(stack: &RaterStack, partition: &SubcrownPartition, heuristic: Heuristic) -> Self {
        let raters = stack.raters();
        let mut rater_sizes = vec![0.0; raters];
        for e in &partition.entries {
            for (k, size) in rater_sizes.iter_mut().enumerate() {
                if e.group >> k & 1 == 1 {
                    *size += e.voxels.len() as f64;
                }
            }
        }
        // Within one distance, visit subcrowns by their first voxel in scan
        // order; unlike group bits this does not depend on rater labels.
        let mut entries: Vec<&Subcrown> = partition.entries.iter().collect();
        entries.sort_by_key(|e| (e.td, e.voxels.iter().min().copied()));
        let (atoms, blocks) = match heuristic {
            Heuristic::Subcrown => {
                let atoms: Vec<Atom> = entries
                    .iter()
                    .map(|e| Atom {
                        td: e.td,
                        group: e.group,
                        voxels: e.voxels.clone(),
                    })
                    .collect();
                let blocks = atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Block {
                        td: a.td,
                        atoms: vec![i],
                    })
                    .collect();
                (atoms, blocks)
            }
            Heuristic::Crown => {
                let atoms: Vec<Atom> = entries
                    .iter()
                    .map(|e| Atom {
                        td: e.td,
                        group: e.group,
                        voxels: e.voxels.clone(),
                    })
                    .collect();
                let mut blocks: Vec<Block> = Vec::new();
                for (i, a) in atoms.iter().enumerate() {
                    match blocks.last_mut() {
                        Some(b) if b.td == a.td => b.atoms.push(i),
                        _ => blocks.push(Block {
                            td: a.td,
                            atoms: vec![i],
                        }),
                    }
                }
                (atoms, blocks)
            }
            Heuristic::Voxel => {
                let mut atoms: Vec<Atom> = entries
                    .iter()
                    .flat_map(|e| {
                        e.voxels.iter().map(move |&v| Atom {
                            td: e.td,
                            group: e.group,
                            voxels: vec![v],
                        })
                    })
                    .collect();
                atoms.sort_by_key(|a| (a.td, a.voxels[0]));
                let blocks = atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Block {
                        td: a.td,
                        atoms: vec![i],
                    })
                    .collect();
                (atoms, blocks)
            }
        };
        Self {
            component: partition.component,
            raters,
            rater_sizes,
            atoms,
            blocks,
        }
    }

    pub fn component(&self) -> u32 {
        self.component
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn voxel_count(&self) -> usize {
        self.atoms.iter().map(|a| a.voxels.len()).sum()
    }

    /// Voxels of block `b`, in atom order.
    pub fn block_voxels(&self, b: usize) -> Vec<usize> {
        self.blocks[b]
            .atoms
            .iter()
            .flat_map(|&a| self.atoms[a].voxels.iter().copied())
            .collect()
    }

    /// Number of raters with at least one voxel in the component.
    pub fn segmenting_raters(&self) -> usize {
        self.rater_sizes.iter().filter(|&&s| s > 0.0).count()
    }

    fn in_group(&self, atom: usize, rater: usize) -> bool {
        self.atoms[atom].group >> rater & 1 == 1
    }

    fn min_td(&self) -> u32 {
        self.atoms.iter().map(|a| a.td).min().unwrap_or(0)
    }

    /// Block indices grouped by distance: descending when `descending`.
    fn sweep_order(&self, descending: bool) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.blocks.len()).collect();
        if descending {
            // Stable: canonical order is kept within one distance.
            order.sort_by(|&a, &b| self.blocks[b].td.cmp(&self.blocks[a].td));
        }
        order
    }
}

// ---------------------------------------------------------------------------
// Hard consensus
// ---------------------------------------------------------------------------

/// Membership of every atom plus cached statistics and LMSD.
#[derive(Debug, Clone)]
pub struct HardState<'p> {
    problem: &'p ComponentProblem,
    kind: BinaryDistance,
    inside: Vec<bool>,
    size: f64,
    inter: Vec<f64>,
    lmsd: f64,
}

impl<'p> HardState<'p> {
    fn new(problem: &'p ComponentProblem, kind: BinaryDistance, inside: Vec<bool>) -> Self {
        let mut size = 0.0;
        let mut inter = vec![0.0; problem.raters];
        for (a, atom) in problem.atoms.iter().enumerate() {
            if inside[a] {
                let s = atom.voxels.len() as f64;
                size += s;
                for (k, v) in inter.iter_mut().enumerate() {
                    if problem.in_group(a, k) {
                        *v += s;
                    }
                }
            }
        }
        let mut state = Self {
            problem,
            kind,
            inside,
            size,
            inter,
            lmsd: 0.0,
        };
        state.lmsd = state.objective(state.size, &state.inter);
        state
    }

    fn objective(&self, size: f64, inter: &[f64]) -> f64 {
        let p = self.problem;
        let total: f64 = (0..p.raters)
            .map(|k| squared_binary_distance(self.kind, size, p.rater_sizes[k], inter[k]))
            .sum();
        total / p.raters as f64
    }

    pub fn lmsd(&self) -> f64 {
        self.lmsd
    }

    fn moved(&self, block: usize, include: bool) -> (f64, Vec<f64>) {
        let p = self.problem;
        let mut size = self.size;
        let mut inter = self.inter.clone();
        for &a in &p.blocks[block].atoms {
            if self.inside[a] == include {
                continue;
            }
            let s = p.atoms[a].voxels.len() as f64;
            let s = if include { s } else { -s };
            size += s;
            for (k, v) in inter.iter_mut().enumerate() {
                if p.in_group(a, k) {
                    *v += s;
                }
            }
        }
        (size, inter)
    }

    /// LMSD if every atom of `block` were set to `include`.
    pub fn evaluate(&self, block: usize, include: bool) -> f64 {
        let (size, inter) = self.moved(block, include);
        self.objective(size, &inter)
    }

    fn apply(&mut self, block: usize, include: bool) {
        let (size, inter) = self.moved(block, include);
        for &a in &self.problem.blocks[block].atoms {
            self.inside[a] = include;
        }
        self.size = size;
        self.lmsd = self.objective(size, &inter);
        self.inter = inter;
    }

    fn any_with(&self, block: usize, include: bool) -> bool {
        self.problem.blocks[block]
            .atoms
            .iter()
            .any(|&a| self.inside[a] == include)
    }

    fn voxels(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .problem
            .atoms
            .iter()
            .zip(&self.inside)
            .filter(|(_, &i)| i)
            .flat_map(|(a, _)| a.voxels.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Which of the three candidates won on a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HardChoice {
    Shrinking,
    Growing,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub component: u32,
    pub voxels: usize,
    pub blocks: usize,
    pub segmenting_raters: usize,
    pub lmsd: f64,
    pub initial_lmsd: f64,
    pub accepted_moves: usize,
    pub sweeps: usize,
    /// Hard only.
    pub choice: Option<HardChoice>,
    /// LMSD after each accepted move (hard: shrinking then growing pass).
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardConsensus {
    pub mask: BinaryMask,
    pub lmsd: f64,
    pub components: Vec<ComponentReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftConsensus {
    pub mask: SoftMask,
    pub lmsd: f64,
    pub components: Vec<ComponentReport>,
}

struct PassOutcome<'p> {
    state: HardState<'p>,
    moves: usize,
    sweeps: usize,
    history: Vec<f64>,
}

fn greedy_pass<'p>(
    mut state: HardState<'p>,
    shrinking: bool,
    max_sweeps: usize,
) -> PassOutcome<'p> {
    let order = state.problem.sweep_order(shrinking);
    let target = !shrinking;
    let mut moves = 0;
    let mut sweeps = 0;
    let mut history = Vec::new();
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for &b in &order {
            if !state.any_with(b, !target) {
                continue;
            }
            let candidate = state.evaluate(b, target);
            if candidate < state.lmsd - IMPROVEMENT_TOL {
                state.apply(b, target);
                history.push(state.lmsd);
                moves += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    PassOutcome {
        state,
        moves,
        sweeps,
        history,
    }
}

/// Hard consensus of one component: best of the shrinking pass (from the
/// union), the growing pass (from the minimum-distance crown) and the empty
/// set. Ties prefer shrinking, then growing.
pub fn hard_component(
    problem: &ComponentProblem,
    kind: BinaryDistance,
    cfg: &MacchiatoConfig,
) -> (Vec<usize>, ComponentReport) {
    let n_atoms = problem.atoms.len();
    let union = HardState::new(problem, kind, vec![true; n_atoms]);
    let initial_lmsd = union.lmsd;
    let min_td = problem.min_td();
    let seed = problem.atoms.iter().map(|a| a.td == min_td).collect();
    let grow_start = HardState::new(problem, kind, seed);
    let empty = HardState::new(problem, kind, vec![false; n_atoms]);

    let shrink = greedy_pass(union, true, cfg.max_sweeps);
    let grow = greedy_pass(grow_start, false, cfg.max_sweeps);

    let mut choice = HardChoice::Shrinking;
    let mut best = shrink.state.lmsd;
    if grow.state.lmsd < best - IMPROVEMENT_TOL {
        choice = HardChoice::Growing;
        best = grow.state.lmsd;
    }
    if empty.lmsd < best - IMPROVEMENT_TOL {
        choice = HardChoice::Empty;
        best = empty.lmsd;
    }
    let voxels = match choice {
        HardChoice::Shrinking => shrink.state.voxels(),
        HardChoice::Growing => grow.state.voxels(),
        HardChoice::Empty => Vec::new(),
    };
    let mut history = shrink.history;
    history.extend(grow.history);
    let report = ComponentReport {
        component: problem.component,
        voxels: problem.voxel_count(),
        blocks: problem.block_count(),
        segmenting_raters: problem.segmenting_raters(),
        lmsd: best,
        initial_lmsd,
        accepted_moves: shrink.moves + grow.moves,
        sweeps: shrink.sweeps + grow.sweeps,
        choice: Some(choice),
        history,
    };
    (voxels, report)
}

/// Hard consensus for Jaccard or Dice.
pub fn hard_consensus(
    stack: &RaterStack,
    kind: BinaryDistance,
    cfg: &MacchiatoConfig,
) -> Result<HardConsensus> {
    hard_consensus_with(stack, &Decomposition::new(stack), kind, cfg)
}

pub fn hard_consensus_with(
    stack: &RaterStack,
    decomposition: &Decomposition,
    kind: BinaryDistance,
    cfg: &MacchiatoConfig,
) -> Result<HardConsensus> {
    if kind == BinaryDistance::Hamming {
        return Err(Error::Config(
            "hard consensus needs the Jaccard or Dice distance".into(),
        ));
    }
    let results: Vec<(Vec<usize>, ComponentReport)> = decomposition
        .partitions
        .par_iter()
        .map(|part| hard_component(&ComponentProblem::new(stack, part, cfg.heuristic), kind, cfg))
        .collect();
    let mut values = vec![false; stack.grid().len()];
    let mut components = Vec::with_capacity(results.len());
    let mut lmsd = 0.0;
    for (voxels, report) in results {
        for v in voxels {
            values[v] = true;
        }
        lmsd += report.lmsd;
        components.push(report);
    }
    Ok(HardConsensus {
        mask: BinaryMask::new(stack.grid().clone(), values)?,
        lmsd,
        components,
    })
}

// ---------------------------------------------------------------------------
// Soft consensus
// ---------------------------------------------------------------------------

/// Value of every atom plus cached sufficient statistics and LMSD.
#[derive(Debug, Clone)]
pub struct SoftState<'p> {
    problem: &'p ComponentProblem,
    kind: SoftDistance,
    values: Vec<f64>,
    sum: f64,
    sum_sq: f64,
    inside: Vec<f64>,
    lmsd: f64,
}

impl<'p> SoftState<'p> {
    /// State with atom values read from `init` (first voxel of each atom).
    pub fn new(problem: &'p ComponentProblem, kind: SoftDistance, init: &SoftMask) -> Self {
        let values = problem
            .atoms
            .iter()
            .map(|a| init.get(a.voxels[0]))
            .collect();
        Self::from_values(problem, kind, values)
    }

    fn from_values(problem: &'p ComponentProblem, kind: SoftDistance, values: Vec<f64>) -> Self {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut inside = vec![0.0; problem.raters];
        for (a, atom) in problem.atoms.iter().enumerate() {
            let s = atom.voxels.len() as f64;
            let x = values[a];
            sum += s * x;
            sum_sq += s * x * x;
            for (k, v) in inside.iter_mut().enumerate() {
                if problem.in_group(a, k) {
                    *v += s * x;
                }
            }
        }
        let mut state = Self {
            problem,
            kind,
            values,
            sum,
            sum_sq,
            inside,
            lmsd: 0.0,
        };
        state.lmsd = state.objective(sum, sum_sq, &state.inside);
        state
    }

    fn objective(&self, sum: f64, sum_sq: f64, inside: &[f64]) -> f64 {
        let p = self.problem;
        let total: f64 = (0..p.raters)
            .map(|k| {
                squared_soft_distance(
                    self.kind,
                    &SoftStats {
                        sum,
                        sum_sq,
                        inside: inside[k],
                        mask_size: p.rater_sizes[k],
                    },
                )
            })
            .sum();
        total / p.raters as f64
    }

    pub fn lmsd(&self) -> f64 {
        self.lmsd
    }

    fn moved(&self, block: usize, x: f64) -> (f64, f64, Vec<f64>) {
        let p = self.problem;
        let mut sum = self.sum;
        let mut sum_sq = self.sum_sq;
        let mut inside = self.inside.clone();
        for &a in &p.blocks[block].atoms {
            let s = p.atoms[a].voxels.len() as f64;
            let old = self.values[a];
            sum += s * (x - old);
            sum_sq += s * (x * x - old * old);
            for (k, v) in inside.iter_mut().enumerate() {
                if p.in_group(a, k) {
                    *v += s * (x - old);
                }
            }
        }
        (sum, sum_sq, inside)
    }

    /// LMSD with every atom of `block` set to `x`.
    pub fn evaluate(&self, block: usize, x: f64) -> f64 {
        let (sum, sum_sq, inside) = self.moved(block, x);
        self.objective(sum, sum_sq, &inside)
    }

    pub fn set_block(&mut self, block: usize, x: f64) {
        let (sum, sum_sq, inside) = self.moved(block, x);
        for &a in &self.problem.blocks[block].atoms {
            self.values[a] = x;
        }
        self.sum = sum;
        self.sum_sq = sum_sq;
        self.lmsd = self.objective(sum, sum_sq, &inside);
        self.inside = inside;
    }

    /// Value currently held by the first atom of `block`.
    pub fn block_value(&self, block: usize) -> f64 {
        self.values[self.problem.blocks[block].atoms[0]]
    }

    /// Best shared value of `block` over [0, 1] with everything else fixed,
    /// and the LMSD it achieves. Endpoints are always evaluated.
    pub fn minimize_block(&self, block: usize, tol: f64) -> (f64, f64) {
        minimize_unit_interval(|x| self.evaluate(block, x), tol)
    }

    fn write_into(&self, out: &mut [f64]) {
        for (atom, &x) in self.problem.atoms.iter().zip(&self.values) {
            for &v in &atom.voxels {
                out[v] = x;
            }
        }
    }
}

/// Soft consensus of one component: coordinate descent over blocks in
/// ascending distance order, starting from the mask average.
pub fn soft_component<'p>(
    problem: &'p ComponentProblem,
    kind: SoftDistance,
    init: &SoftMask,
    cfg: &MacchiatoConfig,
) -> (SoftState<'p>, ComponentReport) {
    let mut state = SoftState::new(problem, kind, init);
    let initial_lmsd = state.lmsd;
    let mut history = Vec::new();
    let mut sweeps = 0;
    let mut moves = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let start = state.lmsd;
        for b in 0..problem.blocks.len() {
            let (x, value) = state.minimize_block(b, cfg.scalar_tol);
            if value < state.lmsd - IMPROVEMENT_TOL {
                state.set_block(b, x);
                history.push(state.lmsd);
                moves += 1;
            }
        }
        if start - state.lmsd < IMPROVEMENT_TOL {
            break;
        }
    }
    let report = ComponentReport {
        component: problem.component,
        voxels: problem.voxel_count(),
        blocks: problem.block_count(),
        segmenting_raters: problem.segmenting_raters(),
        lmsd: state.lmsd,
        initial_lmsd,
        accepted_moves: moves,
        sweeps,
        choice: None,
        history,
    };
    (state, report)
}

/// Soft consensus for a Jaccard or Dice surrogate.
pub fn soft_consensus(
    stack: &RaterStack,
    kind: SoftDistance,
    cfg: &MacchiatoConfig,
) -> Result<SoftConsensus> {
    soft_consensus_with(stack, &Decomposition::new(stack), kind, cfg)
}

pub fn soft_consensus_with(
    stack: &RaterStack,
    decomposition: &Decomposition,
    kind: SoftDistance,
    cfg: &MacchiatoConfig,
) -> Result<SoftConsensus> {
    if kind == SoftDistance::L2 {
        return Err(Error::Config(
            "soft consensus needs a Jaccard or Dice surrogate".into(),
        ));
    }
    let init = mask_average(stack);
    let mut values = vec![0.0; stack.grid().len()];
    let results: Vec<(Vec<(usize, f64)>, ComponentReport)> = decomposition
        .partitions
        .par_iter()
        .map(|part| {
            let problem = ComponentProblem::new(stack, part, cfg.heuristic);
            let (state, report) = soft_component(&problem, kind, &init, cfg);
            let mut local = vec![0.0; stack.grid().len()];
            state.write_into(&mut local);
            let pairs = part
                .entries
                .iter()
                .flat_map(|e| e.voxels.iter().map(|&v| (v, local[v])))
                .collect();
            (pairs, report)
        })
        .collect();
    let mut components = Vec::with_capacity(results.len());
    let mut lmsd = 0.0;
    for (pairs, report) in results {
        for (v, x) in pairs {
            values[v] = x;
        }
        lmsd += report.lmsd;
        components.push(report);
    }
    Ok(SoftConsensus {
        mask: SoftMask::new(stack.grid().clone(), values)?,
        lmsd,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{lmsd_hard, lmsd_soft};
    use crate::grid::{Grid, Neighborhood};
    use crate::morphology::connected_components;
    use approx::assert_abs_diff_eq;

    fn line(n: usize) -> Grid {
        Grid::new(vec![n], Neighborhood::N2).unwrap()
    }

    fn f1() -> RaterStack {
        RaterStack::new(vec![
            BinaryMask::from_indices(line(8), &[2, 3, 4]).unwrap(),
            BinaryMask::from_indices(line(8), &[3, 4, 5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn f1_jaccard_keeps_union() {
        let r = hard_consensus(&f1(), BinaryDistance::Jaccard, &MacchiatoConfig::default()).unwrap();
        assert_eq!(r.mask.indices(), vec![2, 3, 4, 5]);
        assert_abs_diff_eq!(r.lmsd, 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn f1_dice_keeps_union() {
        let r = hard_consensus(&f1(), BinaryDistance::Dice, &MacchiatoConfig::default()).unwrap();
        assert_eq!(r.mask.indices(), vec![2, 3, 4, 5]);
        assert_abs_diff_eq!(r.lmsd, 1.0 / 49.0, epsilon = 1e-15);
    }

    #[test]
    fn minority_component_is_dropped() {
        let g = line(12);
        let s = RaterStack::new(vec![
            BinaryMask::from_indices(g.clone(), &[1, 2, 3, 9]).unwrap(),
            BinaryMask::from_indices(g.clone(), &[1, 2, 3]).unwrap(),
            BinaryMask::from_indices(g.clone(), &[2, 3]).unwrap(),
            BinaryMask::from_indices(g, &[1, 2]).unwrap(),
        ])
        .unwrap();
        let r = hard_consensus(&s, BinaryDistance::Jaccard, &MacchiatoConfig::default()).unwrap();
        assert!(!r.mask.get(9));
        assert_abs_diff_eq!(r.components[1].lmsd, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn hamming_is_rejected() {
        assert!(hard_consensus(&f1(), BinaryDistance::Hamming, &MacchiatoConfig::default()).is_err());
        assert!(soft_consensus(&f1(), SoftDistance::L2, &MacchiatoConfig::default()).is_err());
    }

    #[test]
    fn cached_lmsd_matches_recomputation() {
        let g = Grid::new(vec![5, 5], Neighborhood::N8).unwrap();
        let s = RaterStack::new(vec![
            BinaryMask::from_indices(g.clone(), &[6, 7, 8, 11, 12, 13]).unwrap(),
            BinaryMask::from_indices(g.clone(), &[7, 12, 13, 17, 18]).unwrap(),
            BinaryMask::from_indices(g, &[0, 6, 7, 12]).unwrap(),
        ])
        .unwrap();
        let labels = connected_components(&s);
        for kind in [BinaryDistance::Jaccard, BinaryDistance::Dice] {
            for h in [Heuristic::Subcrown, Heuristic::Crown, Heuristic::Voxel] {
                let r = hard_consensus(&s, kind, &MacchiatoConfig::with_heuristic(h)).unwrap();
                let direct = lmsd_hard(&s, &r.mask, kind, &labels).unwrap();
                assert_abs_diff_eq!(r.lmsd, direct, epsilon = 1e-9);
                for c in &r.components {
                    assert!(c.lmsd <= c.initial_lmsd + 1e-12);
                }
            }
        }
        for kind in [SoftDistance::Tanimoto, SoftDistance::Soergel, SoftDistance::Psd1, SoftDistance::Psd2] {
            let r = soft_consensus(&s, kind, &MacchiatoConfig::default()).unwrap();
            let direct = lmsd_soft(&s, &r.mask, kind, &labels).unwrap();
            assert_abs_diff_eq!(r.lmsd, direct, epsilon = 1e-9);
            for c in &r.components {
                for w in c.history.windows(2) {
                    assert!(w[1] < w[0]);
                }
            }
        }
    }

    #[test]
    fn identical_raters_soft_is_the_mask() {
        let g = Grid::new(vec![4, 4], Neighborhood::N8).unwrap();
        let m = BinaryMask::from_indices(g, &[5, 6, 9, 10]).unwrap();
        let s = RaterStack::new(vec![m.clone(), m.clone(), m.clone()]).unwrap();
        for kind in [SoftDistance::Tanimoto, SoftDistance::Soergel, SoftDistance::Psd1, SoftDistance::Psd2] {
            let r = soft_consensus(&s, kind, &MacchiatoConfig::default()).unwrap();
            assert_eq!(r.mask, m.to_soft());
            assert_eq!(r.lmsd, 0.0);
        }
    }

    #[test]
    fn single_voxel_single_rater() {
        let g = line(3);
        let s = RaterStack::new(vec![BinaryMask::from_indices(g, &[1]).unwrap()]).unwrap();
        let dec = Decomposition::new(&s);
        let p = ComponentProblem::new(&s, &dec.partitions[0], Heuristic::Subcrown);
        let state = SoftState::new(&p, SoftDistance::Tanimoto, &mask_average(&s));
        let (x, v) = state.minimize_block(0, 1e-6);
        assert_eq!((x, v), (1.0, 0.0));
    }

    #[test]
    fn empty_union_gives_zero_masks() {
        let g = line(5);
        let s = RaterStack::new(vec![BinaryMask::zeros(g.clone()), BinaryMask::zeros(g)]).unwrap();
        let h = hard_consensus(&s, BinaryDistance::Jaccard, &MacchiatoConfig::default()).unwrap();
        assert!(h.mask.is_empty());
        let soft = soft_consensus(&s, SoftDistance::Tanimoto, &MacchiatoConfig::default()).unwrap();
        assert_eq!(soft.mask.volume(), 0.0);
    }
}
