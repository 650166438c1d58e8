//! Deterministic synthetic rater stacks.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, Neighborhood, RaterStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    F1,
    Rings,
    Blobs,
    EmptyRater,
    TwoComponents,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::F1,
        Preset::Rings,
        Preset::Blobs,
        Preset::EmptyRater,
        Preset::TwoComponents,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::F1 => "f1",
            Preset::Rings => "rings",
            Preset::Blobs => "blobs",
            Preset::EmptyRater => "empty-rater",
            Preset::TwoComponents => "two-components",
        }
    }

    pub fn build(self, seed: u64) -> RaterStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Preset::F1 => f1(),
            Preset::Rings => rings(&mut rng),
            Preset::Blobs => blobs(&mut rng),
            Preset::EmptyRater => empty_rater(&mut rng),
            Preset::TwoComponents => two_components(&mut rng),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

/// Two raters on an 8-voxel line: {2,3,4} and {3,4,5}.
pub fn f1() -> RaterStack {
    let grid = Grid::new(vec![8], Neighborhood::N2).expect("valid grid");
    RaterStack::new(vec![
        BinaryMask::from_indices(grid.clone(), &[2, 3, 4]).expect("in range"),
        BinaryMask::from_indices(grid, &[3, 4, 5]).expect("in range"),
    ])
    .expect("two raters")
}

fn disc(grid: &Grid, center: (f64, f64), radius: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let c = grid.coords(i);
            let dy = c[0] as f64 - center.0;
            let dx = c[1] as f64 - center.1;
            dy * dy + dx * dx <= radius * radius
        })
        .collect()
}

fn annulus(grid: &Grid, center: (f64, f64), inner: f64, outer: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let c = grid.coords(i);
            let dy = c[0] as f64 - center.0;
            let dx = c[1] as f64 - center.1;
            let r2 = dy * dy + dx * dx;
            r2 >= inner * inner && r2 <= outer * outer
        })
        .collect()
}

fn jitter<R: Rng>(rng: &mut R, amount: f64) -> f64 {
    rng.gen_range(-amount..=amount)
}

fn masks(grid: &Grid, sets: Vec<Vec<usize>>) -> RaterStack {
    RaterStack::new(
        sets.into_iter()
            .map(|s| BinaryMask::from_indices(grid.clone(), &s).expect("in range"))
            .collect(),
    )
    .expect("consistent raters")
}

/// Three raters drawing jittered annuli around a shared center.
fn rings<R: Rng>(rng: &mut R) -> RaterStack {
    let grid = Grid::new(vec![16, 16], Neighborhood::N8).expect("valid grid");
    let sets = (0..3)
        .map(|_| {
            let center = (7.5 + jitter(rng, 0.7), 7.5 + jitter(rng, 0.7));
            let inner = 2.5 + jitter(rng, 0.6);
            annulus(&grid, center, inner, inner + 2.0 + jitter(rng, 0.6))
        })
        .collect();
    masks(&grid, sets)
}

/// Four raters on two shared blobs plus a blob drawn by one rater only.
fn blobs<R: Rng>(rng: &mut R) -> RaterStack {
    let grid = Grid::new(vec![16, 16], Neighborhood::N8).expect("valid grid");
    let lone = rng.gen_range(0..4);
    let sets = (0..4)
        .map(|k| {
            let mut s = disc(&grid, (4.0 + jitter(rng, 0.8), 4.0 + jitter(rng, 0.8)), 1.6 + jitter(rng, 0.6));
            s.extend(disc(&grid, (10.0 + jitter(rng, 0.8), 5.0 + jitter(rng, 0.8)), 2.0 + jitter(rng, 0.6)));
            if k == lone {
                s.extend(disc(&grid, (11.0, 12.0), 1.5));
            }
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    masks(&grid, sets)
}

/// Seven raters, the last of which draws nothing.
fn empty_rater<R: Rng>(rng: &mut R) -> RaterStack {
    let grid = Grid::new(vec![16, 16], Neighborhood::N8).expect("valid grid");
    let mut sets: Vec<Vec<usize>> = (0..6)
        .map(|_| disc(&grid, (7.5 + jitter(rng, 1.0), 7.5 + jitter(rng, 1.0)), 2.5 + jitter(rng, 1.0)))
        .collect();
    sets.push(Vec::new());
    masks(&grid, sets)
}

/// Three raters, two separated structures: one consensual, one disputed.
fn two_components<R: Rng>(rng: &mut R) -> RaterStack {
    let grid = Grid::new(vec![12, 20], Neighborhood::N8).expect("valid grid");
    let disputed = rng.gen_range(0..3);
    let sets = (0..3)
        .map(|k| {
            let mut s = disc(&grid, (5.5 + jitter(rng, 0.5), 4.5 + jitter(rng, 0.5)), 2.2 + jitter(rng, 0.4));
            if k != disputed {
                s.extend(disc(&grid, (5.5 + jitter(rng, 1.2), 14.5 + jitter(rng, 1.2)), 1.5 + jitter(rng, 0.8)));
            }
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    masks(&grid, sets)
}

/// Shape of randomly generated small stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomStackSpec {
    /// Largest extent per axis; the number of entries fixes the dimension.
    pub max_dims: Vec<usize>,
    pub min_raters: usize,
    pub max_raters: usize,
    /// Upper bound on the support size |E_S|.
    pub max_support: usize,
    /// Largest number of voxels one rater blob grows to.
    pub max_blob: usize,
    /// Restrict to odd rater counts.
    pub odd_raters: bool,
}

impl Default for RandomStackSpec {
    fn default() -> Self {
        Self {
            max_dims: vec![5, 5, 3],
            min_raters: 2,
            max_raters: 4,
            max_support: 16,
            max_blob: 7,
            odd_raters: false,
        }
    }
}

/// A random stack of overlapping blobs grown from seeds near a common
/// center, with full connectivity. Retries until the support fits.
pub fn random_stack<R: Rng>(rng: &mut R, spec: &RandomStackSpec) -> RaterStack {
    loop {
        let dims: Vec<usize> = spec.max_dims.iter().map(|&m| rng.gen_range(1..=m.max(1))).collect();
        let grid = Grid::with_full_connectivity(dims).expect("valid grid");
        let mut k = rng.gen_range(spec.min_raters..=spec.max_raters);
        if spec.odd_raters && k % 2 == 0 {
            k = if k + 1 <= spec.max_raters { k + 1 } else { k - 1 };
        }
        let anchor = rng.gen_range(0..grid.len());
        let sets: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                if rng.gen_bool(0.08) {
                    return Vec::new();
                }
                let start = if rng.gen_bool(0.75) {
                    let mut v = anchor;
                    for _ in 0..rng.gen_range(0..=2) {
                        v = *grid.neighbors(v).choose(rng).unwrap_or(&v);
                    }
                    v
                } else {
                    rng.gen_range(0..grid.len())
                };
                let target = rng.gen_range(1..=spec.max_blob);
                let mut blob = vec![start];
                for _ in 0..4 * target {
                    if blob.len() >= target {
                        break;
                    }
                    let from = *blob.choose(rng).expect("non-empty");
                    if let Some(&n) = grid.neighbors(from).choose(rng) {
                        if !blob.contains(&n) {
                            blob.push(n);
                        }
                    }
                }
                blob
            })
            .collect();
        let stack = masks(&grid, sets);
        if stack.support().len() <= spec.max_support {
            return stack;
        }
    }
}

/// Seeded sequence of random stacks.
pub fn random_stacks(seed: u64, count: usize, spec: &RandomStackSpec) -> Vec<RaterStack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_stack(&mut rng, spec)).collect()
}

/// Named stacks used for trend comparisons: every preset under a few
/// seeds plus random 2D stacks with real disagreement.
pub fn fixture_suite(seed: u64) -> Vec<(String, RaterStack)> {
    let mut out = Vec::new();
    for preset in Preset::ALL {
        let seeds = if preset == Preset::F1 { 1 } else { 4 };
        for s in 0..seeds {
            out.push((format!("{preset}-{s}"), preset.build(seed.wrapping_add(s))));
        }
    }
    let spec = RandomStackSpec {
        max_dims: vec![6, 6],
        min_raters: 3,
        max_raters: 5,
        max_support: 20,
        max_blob: 10,
        odd_raters: false,
    };
    for (i, s) in random_stacks(seed ^ 0x5eed, 20, &spec).into_iter().enumerate() {
        out.push((format!("random-{i}"), s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_deterministic() {
        for p in Preset::ALL {
            assert_eq!(p.build(7), p.build(7));
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!(Preset::F1.build(1), f1());
    }

    #[test]
    fn empty_rater_preset_has_an_empty_map() {
        let s = Preset::EmptyRater.build(3);
        assert_eq!(s.raters(), 7);
        assert!(s.mask(6).is_empty());
    }

    #[test]
    fn random_stacks_respect_the_spec() {
        let spec = RandomStackSpec::default();
        for s in random_stacks(11, 200, &spec) {
            assert!(s.support().len() <= 16);
            assert!((2..=4).contains(&s.raters()));
            assert!(s.grid().dims().iter().zip([5, 5, 3]).all(|(&d, m)| d <= m));
        }
        let odd = RandomStackSpec {
            odd_raters: true,
            max_raters: 5,
            ..spec
        };
        assert!(random_stacks(3, 100, &odd).iter().all(|s| s.raters() % 2 == 1));
    }
}
