//! Background-size sweeps, large-background limits of the STAPLE posterior
//! and heuristic benchmarks.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::distances::{BinaryDistance, SoftDistance};
use crate::error::{Error, Result};
use crate::fusion::{fuse, Consensus, MethodSpec};
use crate::grid::{Padding, RaterStack};
use crate::macchiato::{hard_consensus_with, soft_consensus_with, Heuristic, MacchiatoConfig};
use crate::metrics::shannon_entropy;
use crate::morphology::Decomposition;
use crate::oracle::{dense_soft, exhaustive_hard, OracleBudget};
use crate::staple::{
    limit_logit, mml_staple, pattern_bits, posterior_logit, specificity_for_size, LimitClass,
    PatternHistogram, PriorSpec, RaterPerformance, StapleOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub margin: usize,
    pub voxels: usize,
    /// Hard voxel count, or count of values > 0.5.
    pub size: usize,
    /// Σ u over the whole padded grid (equals `size` for hard output).
    pub soft_volume: f64,
    pub entropy: f64,
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
}

/// Padding used by the sweep: `margin` on both sides of every axis, or only
/// after the last slice of `axis`.
pub fn sweep_padding(ndim: usize, margin: usize, axis: Option<usize>) -> Padding {
    match axis {
        Some(a) => Padding::after_axis(ndim, a, margin),
        None => Padding::uniform(ndim, margin),
    }
}

/// Re-runs `spec` on the stack padded with each margin.
pub fn background_sweep(
    stack: &RaterStack,
    spec: &MethodSpec,
    margins: &[usize],
    axis: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if margins.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("margins must be ascending".into()));
    }
    if let Some(a) = axis {
        if a >= stack.grid().ndim() {
            return Err(Error::Config(format!("axis {a} out of range")));
        }
    }
    margins
        .iter()
        .map(|&margin| {
            let padded = stack.padded(&sweep_padding(stack.grid().ndim(), margin, axis))?;
            let r = fuse(&padded, spec)?;
            let soft = r.consensus.to_soft();
            Ok(SweepRow {
                margin,
                voxels: padded.grid().len(),
                size: r.consensus.binarized().count(),
                soft_volume: soft.volume(),
                entropy: shannon_entropy(&soft),
                mean_sensitivity: r.performance.as_ref().map(RaterPerformance::mean_sensitivity),
                mean_specificity: r.performance.as_ref().map(RaterPerformance::mean_specificity),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub pattern: Vec<bool>,
    pub votes: usize,
    /// Exponent of the leading ln N term.
    pub exponent: i64,
    pub class: LimitClass,
    pub limit: f64,
    /// Posterior logit with the converged sensitivities and the
    /// specificities implied by the background size `n`.
    pub logit: f64,
    /// Direction of the logit between N = n / 100 and N = n.
    pub empirical: LimitClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitAnalysis {
    pub a: f64,
    pub alpha: u32,
    pub n: f64,
    pub sensitivity: Vec<f64>,
    /// Soft false-positive counts per rater.
    pub false_positives: Vec<f64>,
    /// Consensus object size Σ u.
    pub object: f64,
    pub rows: Vec<LimitRow>,
}

/// Slope of the logit per unit ln N, classified with a half-unit margin.
fn slope_class(slope: f64) -> LimitClass {
    if slope > 0.5 {
        LimitClass::ToOne
    } else if slope < -0.5 {
        LimitClass::ToZero
    } else {
        LimitClass::Finite
    }
}

/// Posterior logit of `pattern` once the image holds `n` voxels, with the
/// sensitivities and false-positive counts held fixed.
pub fn padded_logit(
    pattern: &[bool],
    a: f64,
    alpha: u32,
    sensitivity: &[f64],
    fp: &[f64],
    object: f64,
    n: f64,
) -> Result<f64> {
    let w = a / n.powi(alpha as i32);
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Domain(format!("prior w = {w} is outside (0, 1)")));
    }
    let q = fp.iter().map(|&f| specificity_for_size(f, object, n)).collect();
    let perf = RaterPerformance::new(sensitivity.to_vec(), q)?;
    Ok(posterior_logit(pattern, &perf, w))
}

/// Converges MML STAPLE on the stack with w = A / N^α, then compares the
/// large-background limit of every present vote pattern with the posterior
/// logit obtained by growing the background to `n` voxels.
pub fn limit_analysis(
    stack: &RaterStack,
    a: f64,
    alpha: u32,
    opts: &StapleOptions,
    n: f64,
) -> Result<LimitAnalysis> {
    let r = mml_staple(stack, &PriorSpec::Power { a, alpha }, opts)?;
    let sensitivity = r.performance.sensitivity.clone();
    let false_positives: Vec<f64> = r.soft_counts.iter().map(|c| c.sfp).collect();
    let object = r.consensus.volume();
    let objects = vec![object; stack.raters()];
    let hist = PatternHistogram::from_stack(stack);
    let rows = hist
        .entries()
        .iter()
        .map(|&(pat, _)| {
            let pattern = pattern_bits(pat, stack.raters());
            let lim = limit_logit(&pattern, alpha, a, &sensitivity, &false_positives, &objects, n)?;
            let logit = padded_logit(&pattern, a, alpha, &sensitivity, &false_positives, object, n)?;
            let before =
                padded_logit(&pattern, a, alpha, &sensitivity, &false_positives, object, n / 100.0)?;
            Ok(LimitRow {
                votes: pattern.iter().filter(|&&s| s).count(),
                pattern,
                exponent: lim.exponent,
                class: lim.class,
                limit: lim.value,
                logit,
                empirical: slope_class((logit - before) / 100f64.ln()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LimitAnalysis {
        a,
        alpha,
        n,
        sensitivity,
        false_positives,
        object,
        rows,
    })
}

/// A MACCHIatO distance, hard or soft.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum ConsensusDistance {
    Binary(BinaryDistance),
    Soft(SoftDistance),
}

impl ConsensusDistance {
    pub fn name(self) -> &'static str {
        match self {
            ConsensusDistance::Binary(BinaryDistance::Jaccard) => "jaccard",
            ConsensusDistance::Binary(BinaryDistance::Dice) => "dice",
            ConsensusDistance::Binary(BinaryDistance::Hamming) => "hamming",
            ConsensusDistance::Soft(SoftDistance::Tanimoto) => "tanimoto",
            ConsensusDistance::Soft(SoftDistance::Soergel) => "soergel",
            ConsensusDistance::Soft(SoftDistance::Psd1) => "psd1",
            ConsensusDistance::Soft(SoftDistance::Psd2) => "psd2",
            ConsensusDistance::Soft(SoftDistance::L2) => "l2",
        }
    }
}

impl fmt::Display for ConsensusDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConsensusDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "jaccard" => ConsensusDistance::Binary(BinaryDistance::Jaccard),
            "dice" => ConsensusDistance::Binary(BinaryDistance::Dice),
            "tanimoto" => ConsensusDistance::Soft(SoftDistance::Tanimoto),
            "soergel" => ConsensusDistance::Soft(SoftDistance::Soergel),
            "psd1" => ConsensusDistance::Soft(SoftDistance::Psd1),
            "psd2" => ConsensusDistance::Soft(SoftDistance::Psd2),
            other => return Err(Error::Config(format!("unknown consensus distance '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub support: usize,
    /// One entry per benchmarked heuristic.
    pub lmsd: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Exhaustive optimum (hard) or dense reference (soft) when within budget.
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub distance: ConsensusDistance,
    pub heuristics: Vec<Heuristic>,
    pub rows: Vec<BenchRow>,
    pub mean_lmsd: Vec<f64>,
    pub total_seconds: Vec<f64>,
    /// Mean oracle value and the heuristics' means over the same rows.
    pub oracle_rows: usize,
    pub oracle_mean: Option<f64>,
    pub mean_lmsd_on_oracle_rows: Vec<f64>,
}

pub fn bench_heuristics(
    stacks: &[(String, RaterStack)],
    distance: ConsensusDistance,
    heuristics: &[Heuristic],
    budget: &OracleBudget,
) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(stacks.len());
    for (name, stack) in stacks {
        let dec = Decomposition::new(stack);
        let mut lmsd = Vec::with_capacity(heuristics.len());
        let mut seconds = Vec::with_capacity(heuristics.len());
        for &h in heuristics {
            let cfg = MacchiatoConfig::with_heuristic(h);
            let start = Instant::now();
            let value = match distance {
                ConsensusDistance::Binary(kind) => hard_consensus_with(stack, &dec, kind, &cfg)?.lmsd,
                ConsensusDistance::Soft(kind) => soft_consensus_with(stack, &dec, kind, &cfg)?.lmsd,
            };
            seconds.push(start.elapsed().as_secs_f64());
            lmsd.push(value);
        }
        let oracle = match distance {
            ConsensusDistance::Binary(kind) => match exhaustive_hard(stack, kind, budget) {
                Ok((_, v)) => Some(v),
                Err(Error::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            },
            ConsensusDistance::Soft(kind) => match dense_soft(stack, kind, 1e-3, budget) {
                Ok((_, v)) => Some(v),
                Err(Error::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            },
        };
        rows.push(BenchRow {
            name: name.clone(),
            support: stack.support().len(),
            lmsd,
            seconds,
            oracle,
        });
    }
    let mean_of = |rows: &[&BenchRow], i: usize| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.lmsd[i]).sum::<f64>() / rows.len() as f64
        }
    };
    let all: Vec<&BenchRow> = rows.iter().collect();
    let with_oracle: Vec<&BenchRow> = rows.iter().filter(|r| r.oracle.is_some()).collect();
    let mean_lmsd = (0..heuristics.len()).map(|i| mean_of(&all, i)).collect();
    let mean_lmsd_on_oracle_rows = (0..heuristics.len()).map(|i| mean_of(&with_oracle, i)).collect();
    let total_seconds = (0..heuristics.len())
        .map(|i| rows.iter().map(|r| r.seconds[i]).sum())
        .collect();
    let oracle_mean = (!with_oracle.is_empty()).then(|| {
        with_oracle.iter().filter_map(|r| r.oracle).sum::<f64>() / with_oracle.len() as f64
    });
    Ok(BenchReport {
        distance,
        heuristics: heuristics.to_vec(),
        oracle_rows: with_oracle.len(),
        rows,
        mean_lmsd,
        total_seconds,
        oracle_mean,
        mean_lmsd_on_oracle_rows,
    })
}

/// Whether two consensus outputs agree bit for bit.
pub fn bit_identical(a: &Consensus, b: &Consensus) -> bool {
    match (a, b) {
        (Consensus::Hard(x), Consensus::Hard(y)) => x.values() == y.values(),
        (Consensus::Soft(x), Consensus::Soft(y)) => x
            .values()
            .iter()
            .zip(y.values())
            .all(|(p, q)| p.to_bits() == q.to_bits())
            && x.values().len() == y.values().len(),
        _ => false,
    }
}
