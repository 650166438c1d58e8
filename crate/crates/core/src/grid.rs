//! Voxel grids, binary and soft masks, and rater stacks.
//!
//! Values are stored row-major: the last axis varies fastest. Internally every
//! grid is viewed as a 3D box `[slices, rows, cols]` with leading unit axes, so
//! 1D and 2D grids share the neighbor code with 3D ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of raters; rater groups are encoded as bits of a `u64`.
pub const MAX_RATERS: usize = 64;

/// Connectivity used for connected components and distance maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// 1D: left and right neighbors.
    N2,
    /// 2D edge connectivity.
    N4,
    /// 2D edge and corner connectivity.
    N8,
    /// 3D face connectivity.
    N6,
    /// 3D face, edge and corner connectivity.
    N26,
    /// 2.5D: N8 inside each slice of axis 0, no edges between slices.
    Slicewise,
}

impl Neighborhood {
    pub fn ndim(self) -> usize {
        match self {
            Neighborhood::N2 => 1,
            Neighborhood::N4 | Neighborhood::N8 => 2,
            Neighborhood::N6 | Neighborhood::N26 | Neighborhood::Slicewise => 3,
        }
    }

    /// Default neighborhood for a dimensionality: full connectivity.
    pub fn full(ndim: usize) -> Option<Self> {
        match ndim {
            1 => Some(Neighborhood::N2),
            2 => Some(Neighborhood::N8),
            3 => Some(Neighborhood::N26),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Neighborhood::N2 => "n2",
            Neighborhood::N4 => "n4",
            Neighborhood::N8 => "n8",
            Neighborhood::N6 => "n6",
            Neighborhood::N26 => "n26",
            Neighborhood::Slicewise => "slicewise",
        }
    }

    // (d_slice, d_row, d_col) offsets in the padded 3D view.
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dz == 0 && dy == 0 && dx == 0 {
                        continue;
                    }
                    let l1 = dz.abs() + dy.abs() + dx.abs();
                    let keep = match self {
                        Neighborhood::N2 => dz == 0 && dy == 0,
                        Neighborhood::N4 => dz == 0 && l1 == 1,
                        Neighborhood::N8 | Neighborhood::Slicewise => dz == 0,
                        Neighborhood::N6 => l1 == 1,
                        Neighborhood::N26 => true,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

impl std::str::FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n2" => Ok(Neighborhood::N2),
            "n4" => Ok(Neighborhood::N4),
            "n8" => Ok(Neighborhood::N8),
            "n6" => Ok(Neighborhood::N6),
            "n26" => Ok(Neighborhood::N26),
            "slicewise" | "slicewise_2d" | "2.5d" => Ok(Neighborhood::Slicewise),
            other => Err(Error::InvalidGrid(format!("unknown neighborhood '{other}'"))),
        }
    }
}

/// Voxel-grid geometry shared by every mask of a stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    neighborhood: Neighborhood,
}

impl Grid {
    pub fn new(dims: Vec<usize>, neighborhood: Neighborhood) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "expected 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero extent in {dims:?}")));
        }
        if neighborhood.ndim() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "neighborhood {} needs {} axes, grid has {}",
                neighborhood.name(),
                neighborhood.ndim(),
                dims.len()
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::Overflow)?;
        Ok(Self { dims, neighborhood })
    }

    /// Grid with the full connectivity for its dimensionality.
    pub fn with_full_connectivity(dims: Vec<usize>) -> Result<Self> {
        let nb = Neighborhood::full(dims.len())
            .ok_or_else(|| Error::InvalidGrid(format!("expected 1 to 3 axes, got {}", dims.len())))?;
        Self::new(dims, nb)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    pub fn with_neighborhood(&self, neighborhood: Neighborhood) -> Result<Self> {
        Self::new(self.dims.clone(), neighborhood)
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn shape3(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        let off = 3 - self.dims.len();
        s[off..].copy_from_slice(&self.dims);
        s
    }

    /// Coordinates of a linear index, one entry per axis.
    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        let mut out = vec![0; self.dims.len()];
        for (axis, &d) in self.dims.iter().enumerate().rev() {
            out[axis] = rem % d;
            rem /= d;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| acc * d + c)
    }

    pub(crate) fn neighbor_table(&self) -> NeighborTable {
        NeighborTable {
            shape: self.shape3(),
            offsets: self.neighborhood.offsets(),
        }
    }

    /// Neighbors of `index` under the grid's connectivity, in offset order.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.neighbor_table().fill(index, &mut out);
        out
    }

    /// Grid enlarged by `padding`; connectivity is unchanged.
    pub fn padded(&self, padding: &Padding) -> Result<Self> {
        padding.check(self)?;
        let dims = self
            .dims
            .iter()
            .enumerate()
            .map(|(a, &d)| {
                d.checked_add(padding.before[a])
                    .and_then(|x| x.checked_add(padding.after[a]))
                    .ok_or(Error::Overflow)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, self.neighborhood)
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::GridMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(())
    }
}

pub(crate) struct NeighborTable {
    shape: [usize; 3],
    offsets: Vec<[isize; 3]>,
}

impl NeighborTable {
    pub(crate) fn fill(&self, index: usize, out: &mut Vec<usize>) {
        out.clear();
        let [s0, s1, s2] = self.shape;
        let z = (index / (s1 * s2)) as isize;
        let y = ((index / s2) % s1) as isize;
        let x = (index % s2) as isize;
        for &[dz, dy, dx] in &self.offsets {
            let (nz, ny, nx) = (z + dz, y + dy, x + dx);
            if nz < 0 || ny < 0 || nx < 0 {
                continue;
            }
            let (nz, ny, nx) = (nz as usize, ny as usize, nx as usize);
            if nz >= s0 || ny >= s1 || nx >= s2 {
                continue;
            }
            out.push((nz * s1 + ny) * s2 + nx);
        }
    }
}

/// Per-axis zero padding added before and after the existing extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Padding {
    pub before: Vec<usize>,
    pub after: Vec<usize>,
}

impl Padding {
    /// `margin` voxels on both sides of every axis.
    pub fn uniform(ndim: usize, margin: usize) -> Self {
        Self {
            before: vec![margin; ndim],
            after: vec![margin; ndim],
        }
    }

    /// `amount` voxels appended after the end of one axis.
    pub fn after_axis(ndim: usize, axis: usize, amount: usize) -> Self {
        let mut after = vec![0; ndim];
        after[axis] = amount;
        Self {
            before: vec![0; ndim],
            after,
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.before.len() != grid.ndim() || self.after.len() != grid.ndim() {
            return Err(Error::InvalidGrid(format!(
                "padding has {}/{} axes, grid has {}",
                self.before.len(),
                self.after.len(),
                grid.ndim()
            )));
        }
        Ok(())
    }

    fn remap(&self, src: &Grid, dst: &Grid, index: usize) -> usize {
        let mut c = src.coords(index);
        for (a, v) in c.iter_mut().enumerate() {
            *v += self.before[a];
        }
        dst.index(&c)
    }
}

/// Per-voxel {0,1} mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    grid: Grid,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, values: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidMask(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![false; n],
        }
    }

    pub fn from_indices(grid: Grid, indices: &[usize]) -> Result<Self> {
        let mut values = vec![false; grid.len()];
        for &i in indices {
            *values.get_mut(i).ok_or_else(|| {
                Error::InvalidMask(format!("index {i} outside grid of {} voxels", grid.len()))
            })? = true;
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, index: usize) -> bool {
        self.values[index]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    /// Foreground voxel indices in scan order.
    pub fn indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Same mask on a grid with another connectivity.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        self.grid.ensure_same(&grid)?;
        Ok(Self {
            grid,
            values: self.values.clone(),
        })
    }

    pub fn padded(&self, padding: &Padding) -> Result<Self> {
        let grid = self.grid.padded(padding)?;
        let mut values = vec![false; grid.len()];
        for i in self.indices() {
            values[padding.remap(&self.grid, &grid, i)] = true;
        }
        Ok(Self { grid, values })
    }

    /// Sub-box starting at `offset` with extents `dims`.
    pub fn cropped(&self, offset: &[usize], dims: &[usize]) -> Result<Self> {
        let grid = crop_grid(&self.grid, offset, dims)?;
        let values = crop_values(&self.grid, &grid, offset, &self.values);
        Ok(Self { grid, values })
    }
}

/// Per-voxel probability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    grid: Grid,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidMask(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidMask(format!(
                "value {v} at voxel {i} is outside [0, 1]"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Sum of probabilities.
    pub fn volume(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Hard mask of voxels strictly above `level`.
    pub fn threshold(&self, level: f64) -> BinaryMask {
        BinaryMask {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v > level).collect(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn padded(&self, padding: &Padding) -> Result<Self> {
        let grid = self.grid.padded(padding)?;
        let mut values = vec![0.0; grid.len()];
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                values[padding.remap(&self.grid, &grid, i)] = v;
            }
        }
        Ok(Self { grid, values })
    }

    pub fn cropped(&self, offset: &[usize], dims: &[usize]) -> Result<Self> {
        let grid = crop_grid(&self.grid, offset, dims)?;
        let values = crop_values(&self.grid, &grid, offset, &self.values);
        Ok(Self { grid, values })
    }
}

fn crop_grid(grid: &Grid, offset: &[usize], dims: &[usize]) -> Result<Grid> {
    if offset.len() != grid.ndim() || dims.len() != grid.ndim() {
        return Err(Error::InvalidGrid("crop box dimensionality mismatch".into()));
    }
    for a in 0..grid.ndim() {
        let end = offset[a].checked_add(dims[a]).ok_or(Error::Overflow)?;
        if end > grid.dims()[a] {
            return Err(Error::InvalidGrid(format!(
                "crop box exceeds axis {a}: {end} > {}",
                grid.dims()[a]
            )));
        }
    }
    Grid::new(dims.to_vec(), grid.neighborhood())
}

fn crop_values<T: Copy>(src: &Grid, dst: &Grid, offset: &[usize], values: &[T]) -> Vec<T> {
    (0..dst.len())
        .map(|i| {
            let mut c = dst.coords(i);
            for (a, v) in c.iter_mut().enumerate() {
                *v += offset[a];
            }
            values[src.index(&c)]
        })
        .collect()
}

/// Ordered set of K rater masks on a shared grid, with per-voxel vote counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RaterStack {
    grid: Grid,
    masks: Vec<BinaryMask>,
    votes: Vec<u32>,
    support: Vec<usize>,
}

impl RaterStack {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        let first = masks.first().ok_or(Error::EmptyStack)?;
        if masks.len() > MAX_RATERS {
            return Err(Error::TooManyRaters {
                max: MAX_RATERS,
                got: masks.len(),
            });
        }
        let grid = first.grid().clone();
        for m in &masks[1..] {
            grid.ensure_same(m.grid())?;
        }
        // All masks adopt the connectivity of the first one.
        let masks = masks
            .into_iter()
            .map(|m| {
                if m.grid() == &grid {
                    m
                } else {
                    BinaryMask {
                        grid: grid.clone(),
                        values: m.values,
                    }
                }
            })
            .collect::<Vec<_>>();
        let mut votes = vec![0u32; grid.len()];
        for m in &masks {
            for (v, &b) in votes.iter_mut().zip(m.values()) {
                *v += b as u32;
            }
        }
        let support = votes
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v > 0).then_some(i))
            .collect();
        Ok(Self {
            grid,
            masks,
            votes,
            support,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn mask(&self, rater: usize) -> &BinaryMask {
        &self.masks[rater]
    }

    /// Number of raters K.
    pub fn raters(&self) -> usize {
        self.masks.len()
    }

    /// S_n^+: number of raters segmenting each voxel.
    pub fn votes(&self) -> &[u32] {
        &self.votes
    }

    /// Voxels segmented by at least one rater, in scan order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn union(&self) -> BinaryMask {
        BinaryMask {
            grid: self.grid.clone(),
            values: self.votes.iter().map(|&v| v > 0).collect(),
        }
    }

    /// Rater group of a voxel: bit k set iff rater k segments it.
    pub fn pattern(&self, index: usize) -> u64 {
        self.masks
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, m)| acc | ((m.values[index] as u64) << k))
    }

    /// Same stack on a grid with another connectivity.
    pub fn with_neighborhood(&self, neighborhood: Neighborhood) -> Result<Self> {
        let grid = self.grid.with_neighborhood(neighborhood)?;
        let masks = self
            .masks
            .iter()
            .map(|m| m.with_grid(grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(masks)
    }

    pub fn padded(&self, padding: &Padding) -> Result<Self> {
        let masks = self
            .masks
            .iter()
            .map(|m| m.padded(padding))
            .collect::<Result<Vec<_>>>()?;
        Self::new(masks)
    }

    pub fn cropped(&self, offset: &[usize], dims: &[usize]) -> Result<Self> {
        let masks = self
            .masks
            .iter()
            .map(|m| m.cropped(offset, dims))
            .collect::<Result<Vec<_>>>()?;
        Self::new(masks)
    }

    /// Permuted copy: rater `i` of the result is rater `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(order.iter().map(|&k| self.masks[k].clone()).collect())
    }
}
