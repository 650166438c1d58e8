//! Precision/recall/F1 at voxel, lesion and detection level, entropy and
//! size comparisons.
//!
//! Zero-denominator conventions: precision is 1 when nothing is predicted,
//! recall is 1 when nothing is expected, F1 is 0 when both are 0.

use serde::Serialize;

use crate::distances::confusion;
use crate::error::Result;
use crate::fusion::Consensus;
use crate::grid::{BinaryMask, RaterStack, SoftMask};
use crate::morphology::{label_components, ComponentLabels};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrfTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfTriple {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    /// Component-wise mean; `None` for an empty list.
    pub fn mean<'a, I: IntoIterator<Item = &'a PrfTriple>>(items: I) -> Option<Self> {
        let mut n = 0usize;
        let mut acc = (0.0, 0.0, 0.0);
        for t in items {
            n += 1;
            acc.0 += t.precision;
            acc.1 += t.recall;
            acc.2 += t.f1;
        }
        (n > 0).then(|| Self {
            precision: acc.0 / n as f64,
            recall: acc.1 / n as f64,
            f1: acc.2 / n as f64,
        })
    }
}

/// Scores of `pred` against the reference `gt`.
pub fn voxel_prf(gt: &BinaryMask, pred: &BinaryMask) -> Result<PrfTriple> {
    let c = confusion(pred, gt)?;
    Ok(PrfTriple::from_counts(c.tp, c.fp, c.fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionScore {
    pub lesion: u32,
    pub rater: usize,
    pub prf: PrfTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionReport {
    pub scores: Vec<LesionScore>,
    /// Mean over all (lesion, rater) pairs.
    pub mean: Option<PrfTriple>,
}

/// Every rater scored against the consensus inside each lesion, a lesion
/// being a connected component of the rater union.
pub fn lesionwise_prf(
    consensus: &BinaryMask,
    stack: &RaterStack,
    labels: &ComponentLabels,
) -> Result<LesionReport> {
    stack.grid().ensure_same(consensus.grid())?;
    let mut scores = Vec::new();
    for id in labels.ids() {
        for (k, mask) in stack.masks().iter().enumerate() {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for &v in labels.members(id) {
                match (mask.get(v), consensus.get(v)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            scores.push(LesionScore {
                lesion: id,
                rater: k,
                prf: PrfTriple::from_counts(tp, fp, fn_),
            });
        }
    }
    let mean = PrfTriple::mean(scores.iter().map(|s| &s.prf));
    Ok(LesionReport { scores, mean })
}

/// Component detection: a consensus component is detected when the rater
/// mask touches it; rater components disjoint from the consensus are false
/// positives.
pub fn detection_prf(consensus: &BinaryMask, rater: &BinaryMask) -> Result<PrfTriple> {
    consensus.grid().ensure_same(rater.grid())?;
    let truth = label_components(consensus);
    let found = label_components(rater);
    let tp = truth
        .ids()
        .filter(|&id| truth.members(id).iter().any(|&v| rater.get(v)))
        .count() as u64;
    let fn_ = truth.count() as u64 - tp;
    let fp = found
        .ids()
        .filter(|&id| !found.members(id).iter().any(|&v| consensus.get(v)))
        .count() as u64;
    Ok(PrfTriple::from_counts(tp, fp, fn_))
}

/// Binary entropy summed over voxels, natural log, 0 ln 0 = 0.
pub fn shannon_entropy(u: &SoftMask) -> f64 {
    u.values()
        .iter()
        .map(|&p| {
            let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
            h(p) + h(1.0 - p)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeRow {
    pub method: String,
    /// Voxel count (hard) or Σ u (soft).
    pub size: f64,
    /// Relative change against the reference size in percent; `None` when
    /// the reference is empty.
    pub percent_vs_reference: Option<f64>,
    /// Voxels with value > 0.5.
    pub thresholded: usize,
}

pub fn size_report(results: &[(String, &Consensus)], reference: &Consensus) -> Vec<SizeRow> {
    let reference_size = reference.size();
    results
        .iter()
        .map(|(name, c)| {
            let size = c.size();
            SizeRow {
                method: name.clone(),
                size,
                percent_vs_reference: (reference_size > 0.0)
                    .then(|| 100.0 * (size - reference_size) / reference_size),
                thresholded: c.binarized().count(),
            }
        })
        .collect()
}
