//! Connected components of the rater union, morphological distance maps, and
//! the crown / subcrown decomposition.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, NeighborTable, RaterStack};

/// Marker for voxels without a distance.
pub const UNSET: u32 = u32::MAX;

/// Component label per voxel; 0 is outside the rater union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    grid: Grid,
    labels: Vec<u32>,
    members: Vec<Vec<usize>>,
}

impl ComponentLabels {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Voxels of component `id` (1-based), in scan order.
    pub fn members(&self, id: u32) -> &[usize] {
        &self.members[id as usize - 1]
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        1..=self.members.len() as u32
    }
}

/// Labels the connected components of the union of all rater masks.
///
/// Labels are assigned in scan order of each component's first voxel.
pub fn connected_components(stack: &RaterStack) -> ComponentLabels {
    label_components(&stack.union())
}

/// Labels the connected components of a mask's foreground.
pub fn label_components(mask: &BinaryMask) -> ComponentLabels {
    let grid = mask.grid().clone();
    let table = grid.neighbor_table();
    let mut labels = vec![0u32; grid.len()];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::with_capacity(26);
    for seed in mask.indices() {
        if labels[seed] != 0 {
            continue;
        }
        let id = members.len() as u32 + 1;
        let mut comp = vec![seed];
        labels[seed] = id;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            table.fill(v, &mut nbrs);
            for &n in &nbrs {
                if mask.get(n) && labels[n] == 0 {
                    labels[n] = id;
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        members.push(comp);
    }
    ComponentLabels {
        grid,
        labels,
        members,
    }
}

/// Integer step-count distances, [`UNSET`] outside the reporting domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    grid: Grid,
    values: Vec<u32>,
}

impl DistanceField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, index: usize) -> Option<u32> {
        let v = self.values[index];
        (v != UNSET).then_some(v)
    }
}

/// Multi-source breadth-first search with a reusable buffer.
struct Bfs {
    dist: Vec<u32>,
    touched: Vec<usize>,
    queue: VecDeque<usize>,
    nbrs: Vec<usize>,
    table: NeighborTable,
}

impl Bfs {
    fn new(grid: &Grid) -> Self {
        Self {
            dist: vec![UNSET; grid.len()],
            touched: Vec::new(),
            queue: VecDeque::new(),
            nbrs: Vec::with_capacity(26),
            table: grid.neighbor_table(),
        }
    }

    /// Runs from `sources` until every voxel flagged by `is_target` has been
    /// reached (`targets` of them) or the grid is exhausted, then calls
    /// `report(voxel, distance)` for each target found.
    fn run(
        &mut self,
        sources: &[usize],
        targets: &[usize],
        mut report: impl FnMut(usize, u32),
    ) {
        for &v in &self.touched {
            self.dist[v] = UNSET;
        }
        self.touched.clear();
        self.queue.clear();
        for &s in sources {
            if self.dist[s] == UNSET {
                self.dist[s] = 0;
                self.touched.push(s);
                self.queue.push_back(s);
            }
        }
        let mut pending: Vec<usize> = targets
            .iter()
            .copied()
            .filter(|&t| self.dist[t] == UNSET)
            .collect();
        pending.sort_unstable();
        let mut remaining = pending.len();
        while remaining > 0 {
            let Some(v) = self.queue.pop_front() else { break };
            let d = self.dist[v] + 1;
            self.table.fill(v, &mut self.nbrs);
            for &n in &self.nbrs {
                if self.dist[n] == UNSET {
                    self.dist[n] = d;
                    self.touched.push(n);
                    self.queue.push_back(n);
                    if pending.binary_search(&n).is_ok() {
                        remaining -= 1;
                    }
                }
            }
        }
        for &t in targets {
            if self.dist[t] != UNSET {
                report(t, self.dist[t]);
            }
        }
    }
}

/// Step-count distance from the foreground of `mask`, reported on `domain`.
///
/// Paths may cross any voxel of the grid; every step under the grid's
/// connectivity costs 1, so N8/N26 give chessboard and N4/N6 city-block
/// distances.
pub fn distance_map(mask: &BinaryMask, domain: &[usize]) -> Result<DistanceField> {
    let sources = mask.indices();
    if sources.is_empty() {
        return Err(Error::EmptySourceMask);
    }
    let grid = mask.grid().clone();
    let mut values = vec![UNSET; grid.len()];
    Bfs::new(&grid).run(&sources, domain, |v, d| values[v] = d);
    Ok(DistanceField { grid, values })
}

/// Sum over raters of the per-rater distance maps, computed per component.
///
/// Within each component, the sources of rater k are its voxels inside the
/// component; raters with no voxel there are left out of that component's sum.
pub fn global_distance_map(stack: &RaterStack, labels: &ComponentLabels) -> DistanceField {
    let grid = stack.grid().clone();
    let mut values = vec![UNSET; grid.len()];
    let mut bfs = Bfs::new(&grid);
    for id in labels.ids() {
        let comp = labels.members(id);
        for &v in comp {
            values[v] = 0;
        }
        for mask in stack.masks() {
            let sources: Vec<usize> = comp.iter().copied().filter(|&v| mask.get(v)).collect();
            if sources.is_empty() {
                continue;
            }
            bfs.run(&sources, comp, |v, d| values[v] += d);
        }
    }
    DistanceField { grid, values }
}

/// Voxels of one component sharing a global distance and a rater group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subcrown {
    /// Global morphological distance.
    pub td: u32,
    /// Bit k set iff rater k segments every voxel of the block.
    pub group: u64,
    /// Voxel indices in scan order.
    pub voxels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcrownPartition {
    pub component: u32,
    /// Sorted by ascending `td`, then ascending `group`.
    pub entries: Vec<Subcrown>,
}

impl SubcrownPartition {
    /// Distinct distances in ascending order.
    pub fn distances(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.entries.iter().map(|e| e.td).collect();
        out.dedup();
        out
    }

    /// Crowns: voxels grouped by distance only, ascending.
    pub fn crowns(&self) -> Vec<(u32, Vec<usize>)> {
        let mut out: Vec<(u32, Vec<usize>)> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some((td, voxels)) if *td == e.td => voxels.extend_from_slice(&e.voxels),
                _ => out.push((e.td, e.voxels.clone())),
            }
        }
        for (_, v) in &mut out {
            v.sort_unstable();
        }
        out
    }

    pub fn voxel_count(&self) -> usize {
        self.entries.iter().map(|e| e.voxels.len()).sum()
    }
}

pub fn subcrown_partition(
    stack: &RaterStack,
    distances: &DistanceField,
    labels: &ComponentLabels,
    component: u32,
) -> SubcrownPartition {
    let mut blocks: BTreeMap<(u32, u64), Vec<usize>> = BTreeMap::new();
    for &v in labels.members(component) {
        let td = distances.values[v];
        debug_assert_ne!(td, UNSET, "voxel {v} has no global distance");
        blocks.entry((td, stack.pattern(v))).or_default().push(v);
    }
    SubcrownPartition {
        component,
        entries: blocks
            .into_iter()
            .map(|((td, group), voxels)| Subcrown { td, group, voxels })
            .collect(),
    }
}

/// Labels, global distances and subcrowns of every component of a stack.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub labels: ComponentLabels,
    pub distances: DistanceField,
    pub partitions: Vec<SubcrownPartition>,
}

impl Decomposition {
    pub fn new(stack: &RaterStack) -> Self {
        let labels = connected_components(stack);
        let distances = global_distance_map(stack, &labels);
        let partitions = labels
            .ids()
            .map(|id| subcrown_partition(stack, &distances, &labels, id))
            .collect();
        Self {
            labels,
            distances,
            partitions,
        }
    }
}
