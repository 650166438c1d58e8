//! STAPLE: per-rater sensitivity/specificity estimation with a hard
//! maximum-likelihood consensus or a soft EM posterior, plus the asymptotic
//! tools used to study the effect of background size.
//!
//! Every voxel with the same rater-vote pattern receives the same update, so
//! both variants run on a histogram of patterns. Padding the image with
//! background only increases the count of the all-zero pattern.

use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RaterStack, SoftMask};

/// Probabilities are kept in [PROB_EPS, 1 − PROB_EPS].
pub const PROB_EPS: f64 = 1e-8;
pub const DEFAULT_INIT: f64 = 0.99;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-7;

fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn logit(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-rater sensitivity p_k and specificity q_k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterPerformance {
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
}

impl RaterPerformance {
    /// Clamps both vectors into [PROB_EPS, 1 − PROB_EPS].
    pub fn new(sensitivity: Vec<f64>, specificity: Vec<f64>) -> Result<Self> {
        if sensitivity.len() != specificity.len() || sensitivity.is_empty() {
            return Err(Error::Domain(format!(
                "sensitivity/specificity lengths {} and {}",
                sensitivity.len(),
                specificity.len()
            )));
        }
        if let Some(v) = sensitivity
            .iter()
            .chain(&specificity)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self {
            sensitivity: sensitivity.into_iter().map(clamp_prob).collect(),
            specificity: specificity.into_iter().map(clamp_prob).collect(),
        })
    }

    pub fn uniform(raters: usize, value: f64) -> Self {
        Self {
            sensitivity: vec![clamp_prob(value); raters],
            specificity: vec![clamp_prob(value); raters],
        }
    }

    pub fn raters(&self) -> usize {
        self.sensitivity.len()
    }

    pub fn mean_sensitivity(&self) -> f64 {
        self.sensitivity.iter().sum::<f64>() / self.raters() as f64
    }

    pub fn mean_specificity(&self) -> f64 {
        self.specificity.iter().sum::<f64>() / self.raters() as f64
    }

    fn max_delta(&self, other: &Self) -> f64 {
        self.sensitivity
            .iter()
            .zip(&other.sensitivity)
            .chain(self.specificity.iter().zip(&other.specificity))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-rater vote added to the posterior logit.
    fn vote(&self, rater: usize, segmented: bool) -> f64 {
        let (p, q) = (self.sensitivity[rater], self.specificity[rater]);
        if segmented {
            p.ln() - (1.0 - q).ln()
        } else {
            (1.0 - p).ln() - q.ln()
        }
    }
}

/// Consensus prior w, spatially uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PriorSpec {
    /// w = 0.5
    Uninformative,
    /// w = Σ_{n,k} S_n^k / (N K)
    AverageOccurrence,
    /// w = A / N^α
    Power { a: f64, alpha: u32 },
}

impl PriorSpec {
    pub fn resolve(&self, stack: &RaterStack) -> Result<f64> {
        let n = stack.grid().len() as f64;
        let w = match *self {
            PriorSpec::Uninformative => 0.5,
            PriorSpec::AverageOccurrence => {
                let total: f64 = stack.votes().iter().map(|&v| v as f64).sum();
                total / (n * stack.raters() as f64)
            }
            PriorSpec::Power { a, alpha } => {
                if a <= 0.0 {
                    return Err(Error::Domain(format!("prior constant A = {a} must be positive")));
                }
                a / n.powi(alpha as i32)
            }
        };
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Domain(format!("resolved prior w = {w} is outside (0, 1)")));
        }
        Ok(w)
    }
}

/// Parameterization of rater performance during ML STAPLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceModel {
    /// Independent p_k and q_k per rater.
    #[default]
    Free,
    /// p_k = q_k = γ for every rater (one accuracy shared by all raters).
    SharedAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StapleOptions {
    pub init: Option<RaterPerformance>,
    pub max_iter: usize,
    pub tol: f64,
    pub model: PerformanceModel,
}

impl Default for StapleOptions {
    fn default() -> Self {
        Self {
            init: None,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            model: PerformanceModel::Free,
        }
    }
}

impl StapleOptions {
    fn initial(&self, raters: usize) -> Result<RaterPerformance> {
        match &self.init {
            Some(p) if p.raters() != raters => Err(Error::Domain(format!(
                "initial performance has {} raters, stack has {raters}",
                p.raters()
            ))),
            Some(p) => RaterPerformance::new(p.sensitivity.clone(), p.specificity.clone()),
            None => Ok(RaterPerformance::uniform(raters, DEFAULT_INIT)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmTrace {
    pub iterations: usize,
    /// Max absolute parameter change per iteration.
    pub deltas: Vec<f64>,
    /// Log-likelihood (ML) or log marginal likelihood (MML) per iteration,
    /// evaluated at the parameters entering that iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// A count denominator was zero at least once; parameters were kept.
    pub degenerate: bool,
}

/// Voxel counts per rater-vote pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternHistogram {
    raters: usize,
    entries: Vec<(u64, u64)>,
}

impl PatternHistogram {
    pub fn from_stack(stack: &RaterStack) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let n = stack.grid().len() as u64;
        for &v in stack.support() {
            *counts.entry(stack.pattern(v)).or_default() += 1;
        }
        let bg = n - stack.support().len() as u64;
        if bg > 0 {
            counts.insert(0, bg);
        }
        Self {
            raters: stack.raters(),
            entries: counts.into_iter().collect(),
        }
    }

    /// (pattern, count) pairs sorted by pattern.
    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    pub fn voxels(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Same histogram with `extra` more all-background voxels.
    pub fn with_extra_background(&self, extra: u64) -> Self {
        let mut entries = self.entries.clone();
        match entries.first_mut() {
            Some((0, c)) => *c += extra,
            _ => entries.insert(0, (0, extra)),
        }
        Self {
            raters: self.raters,
            entries,
        }
    }
}

fn bit(pattern: u64, rater: usize) -> bool {
    pattern >> rater & 1 == 1
}

pub fn pattern_bits(pattern: u64, raters: usize) -> Vec<bool> {
    (0..raters).map(|k| bit(pattern, k)).collect()
}

/// logit(u) = logit(w) + Σ_{S=1} ln(p_k/(1−q_k)) + Σ_{S=0} ln((1−p_k)/q_k).
pub fn posterior_logit(pattern: &[bool], perf: &RaterPerformance, w: f64) -> f64 {
    assert_eq!(pattern.len(), perf.raters(), "pattern length differs from rater count");
    pattern
        .iter()
        .enumerate()
        .fold(logit(w), |acc, (k, &s)| acc + perf.vote(k, s))
}

/// Log of the two unnormalized posterior terms: ln(w s⁺), ln((1−w) s⁻).
fn log_joint(pattern: &[bool], perf: &RaterPerformance, w: f64) -> (f64, f64) {
    let mut fg = w.ln();
    let mut bg = (1.0 - w).ln();
    for (k, &s) in pattern.iter().enumerate() {
        let (p, q) = (perf.sensitivity[k], perf.specificity[k]);
        if s {
            fg += p.ln();
            bg += (1.0 - q).ln();
        } else {
            fg += (1.0 - p).ln();
            bg += q.ln();
        }
    }
    (fg, bg)
}

/// E-step posterior from Bayes' rule:
/// u = w s⁺ / (w s⁺ + (1−w) s⁻).
pub fn e_step_posterior(pattern: &[bool], perf: &RaterPerformance, w: f64) -> f64 {
    let (fg, bg) = log_joint(pattern, perf, w);
    (fg - log_add_exp(fg, bg)).exp()
}

/// Raw (unclamped) M-step: p_k = Σ_{S=1} u / Σ u, q_k = Σ_{S=0} (1−u) / Σ (1−u).
/// Returns `None` for a rater whose denominator is zero.
pub fn m_step(
    consensus: &SoftMask,
    stack: &RaterStack,
) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    stack.grid().ensure_same(consensus.grid())?;
    let total: f64 = consensus.volume();
    let total_bg: f64 = consensus.values().iter().map(|u| 1.0 - u).sum();
    let mut p = Vec::with_capacity(stack.raters());
    let mut q = Vec::with_capacity(stack.raters());
    for mask in stack.masks() {
        let c = crate::distances::soft_confusion(consensus, mask)?;
        p.push((total > 0.0).then(|| c.stp / total));
        q.push((total_bg > 0.0).then(|| c.stn / total_bg));
    }
    Ok((p, q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlStapleResult {
    pub consensus: BinaryMask,
    pub performance: RaterPerformance,
    pub trace: EmTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmlStapleResult {
    pub consensus: SoftMask,
    pub performance: RaterPerformance,
    pub prior: f64,
    pub trace: EmTrace,
    /// Soft counts of every rater against the final posterior.
    pub soft_counts: Vec<crate::distances::SoftConfusion>,
}

/// Hard decision per pattern: foreground iff s⁺ ≥ s⁻.
fn hard_decisions(hist: &PatternHistogram, perf: &RaterPerformance) -> Vec<bool> {
    hist.entries
        .iter()
        .map(|&(pat, _)| posterior_logit(&pattern_bits(pat, hist.raters), perf, 0.5) >= 0.0)
        .collect()
}

fn hard_log_likelihood(hist: &PatternHistogram, decisions: &[bool], perf: &RaterPerformance) -> f64 {
    let mut ll = 0.0;
    for (&(pat, count), &t) in hist.entries.iter().zip(decisions) {
        let bits = pattern_bits(pat, hist.raters);
        let (fg, bg) = log_joint(&bits, perf, 0.5);
        // Drop the constant prior term: ln(0.5) is shared.
        ll += count as f64 * if t { fg } else { bg } - count as f64 * 0.5f64.ln();
    }
    ll
}

/// ML STAPLE on a pattern histogram.
pub fn ml_staple_histogram(
    hist: &PatternHistogram,
    opts: &StapleOptions,
) -> Result<(Vec<bool>, RaterPerformance, EmTrace)> {
    let k = hist.raters;
    let mut perf = opts.initial(k)?;
    let mut trace = EmTrace::default();
    let mut decisions = hard_decisions(hist, &perf);
    for _ in 0..opts.max_iter {
        trace.iterations += 1;
        trace
            .log_likelihood
            .push(hard_log_likelihood(hist, &decisions, &perf));
        let next = ml_update(hist, &decisions, &perf, opts.model, &mut trace);
        trace.deltas.push(perf.max_delta(&next));
        perf = next;
        let next_decisions = hard_decisions(hist, &perf);
        if next_decisions == decisions {
            trace.converged = true;
            break;
        }
        decisions = next_decisions;
    }
    Ok((decisions, perf, trace))
}

fn ml_update(
    hist: &PatternHistogram,
    decisions: &[bool],
    prev: &RaterPerformance,
    model: PerformanceModel,
    trace: &mut EmTrace,
) -> RaterPerformance {
    let k = hist.raters;
    let (mut tp, mut fp, mut fn_, mut tn) = (vec![0u64; k], vec![0u64; k], vec![0u64; k], vec![0u64; k]);
    for (&(pat, count), &t) in hist.entries.iter().zip(decisions) {
        for r in 0..k {
            match (bit(pat, r), t) {
                (true, true) => tp[r] += count,
                (true, false) => fp[r] += count,
                (false, true) => fn_[r] += count,
                (false, false) => tn[r] += count,
            }
        }
    }
    match model {
        PerformanceModel::SharedAccuracy => {
            let agree: u64 = (0..k).map(|r| tp[r] + tn[r]).sum();
            let gamma = clamp_prob(agree as f64 / (hist.voxels() * k as u64) as f64);
            RaterPerformance::uniform(k, gamma)
        }
        PerformanceModel::Free => {
            let mut next = prev.clone();
            for r in 0..k {
                if tp[r] + fn_[r] == 0 || tn[r] + fp[r] == 0 {
                    warn!("ML STAPLE: degenerate counts for rater {r}; keeping previous value");
                    trace.degenerate = true;
                }
                if tp[r] + fn_[r] > 0 {
                    next.sensitivity[r] = clamp_prob(tp[r] as f64 / (tp[r] + fn_[r]) as f64);
                }
                if tn[r] + fp[r] > 0 {
                    next.specificity[r] = clamp_prob(tn[r] as f64 / (tn[r] + fp[r]) as f64);
                }
            }
            next
        }
    }
}

/// Hard maximum-likelihood STAPLE.
///
/// The first consensus is computed from the initial parameters (p = q = 0.99
/// by default, which reproduces majority voting with ties sent to the
/// foreground), then sensitivities/specificities and the consensus are updated
/// alternately until the consensus stops changing.
pub fn ml_staple(stack: &RaterStack, opts: &StapleOptions) -> Result<MlStapleResult> {
    let hist = PatternHistogram::from_stack(stack);
    let (decisions, performance, trace) = ml_staple_histogram(&hist, opts)?;
    let fg: Vec<u64> = hist
        .entries
        .iter()
        .zip(&decisions)
        .filter_map(|(&(pat, _), &t)| t.then_some(pat))
        .collect();
    let values = (0..stack.grid().len())
        .map(|n| {
            let pat = stack.pattern(n);
            fg.binary_search(&pat).is_ok()
        })
        .collect();
    Ok(MlStapleResult {
        consensus: BinaryMask::new(stack.grid().clone(), values)?,
        performance,
        trace,
    })
}

/// Output of MML STAPLE on a histogram: posterior per histogram entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPosterior {
    pub posterior: Vec<f64>,
    pub performance: RaterPerformance,
    pub trace: EmTrace,
}

pub fn mml_staple_histogram(
    hist: &PatternHistogram,
    w: f64,
    opts: &StapleOptions,
) -> Result<HistogramPosterior> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Domain(format!("prior w = {w} is outside (0, 1)")));
    }
    let k = hist.raters;
    let bits: Vec<Vec<bool>> = hist
        .entries
        .iter()
        .map(|&(pat, _)| pattern_bits(pat, k))
        .collect();
    let mut perf = opts.initial(k)?;
    let mut trace = EmTrace::default();
    for _ in 0..opts.max_iter {
        trace.iterations += 1;
        let mut ll = 0.0;
        let mut u = Vec::with_capacity(bits.len());
        for (b, &(_, count)) in bits.iter().zip(&hist.entries) {
            let (fg, bg) = log_joint(b, &perf, w);
            let z = log_add_exp(fg, bg);
            ll += count as f64 * z;
            u.push((fg - z).exp());
        }
        trace.log_likelihood.push(ll);
        let next = mml_update(hist, &bits, &u, &perf, &mut trace);
        let delta = perf.max_delta(&next);
        trace.deltas.push(delta);
        perf = next;
        if delta < opts.tol {
            trace.converged = true;
            break;
        }
    }
    let posterior = bits.iter().map(|b| e_step_posterior(b, &perf, w)).collect();
    Ok(HistogramPosterior {
        posterior,
        performance: perf,
        trace,
    })
}

fn mml_update(
    hist: &PatternHistogram,
    bits: &[Vec<bool>],
    u: &[f64],
    prev: &RaterPerformance,
    trace: &mut EmTrace,
) -> RaterPerformance {
    let k = hist.raters;
    let mut total = 0.0;
    let mut total_bg = 0.0;
    let mut stp = vec![0.0; k];
    let mut stn = vec![0.0; k];
    for ((b, &(_, count)), &un) in bits.iter().zip(&hist.entries).zip(u) {
        let c = count as f64;
        total += c * un;
        total_bg += c * (1.0 - un);
        for r in 0..k {
            if b[r] {
                stp[r] += c * un;
            } else {
                stn[r] += c * (1.0 - un);
            }
        }
    }
    let mut next = prev.clone();
    if total > 0.0 {
        for r in 0..k {
            next.sensitivity[r] = clamp_prob(stp[r] / total);
        }
    } else {
        warn!("MML STAPLE: posterior mass is zero; keeping sensitivities");
        trace.degenerate = true;
    }
    if total_bg > 0.0 {
        for r in 0..k {
            next.specificity[r] = clamp_prob(stn[r] / total_bg);
        }
    } else {
        warn!("MML STAPLE: background posterior mass is zero; keeping specificities");
        trace.degenerate = true;
    }
    next
}

/// Soft maximum-marginal-likelihood STAPLE (EM).
pub fn mml_staple(
    stack: &RaterStack,
    prior: &PriorSpec,
    opts: &StapleOptions,
) -> Result<MmlStapleResult> {
    let w = prior.resolve(stack)?;
    let hist = PatternHistogram::from_stack(stack);
    let HistogramPosterior {
        posterior,
        performance,
        trace,
    } = mml_staple_histogram(&hist, w, opts)?;
    let values = (0..stack.grid().len())
        .map(|n| {
            let pat = stack.pattern(n);
            let i = hist
                .entries
                .binary_search_by_key(&pat, |e| e.0)
                .expect("every voxel pattern is in the histogram");
            posterior[i]
        })
        .collect();
    let consensus = SoftMask::new(stack.grid().clone(), values)?;
    let soft_counts = stack
        .masks()
        .iter()
        .map(|m| crate::distances::soft_confusion(&consensus, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(MmlStapleResult {
        consensus,
        performance,
        prior: w,
        trace,
        soft_counts,
    })
}

/// Specificity implied by a fixed number of false positives `fp` once the
/// image holds `n` voxels of which `object` are consensus foreground:
/// q = 1 − FP / (N − B).
pub fn specificity_for_size(fp: f64, object: f64, n: f64) -> f64 {
    1.0 - fp / (n - object)
}

/// Direction of the posterior as the background grows without bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitClass {
    /// Leading term (Σ_k S_n^k − α) ln N is positive: u → 1.
    ToOne,
    /// Leading term vanishes: u tends to a value in (0, 1).
    Finite,
    /// Leading term is negative: u → 0.
    ToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLogit {
    pub value: f64,
    /// Σ_k S_n^k − α.
    pub exponent: i64,
    pub class: LimitClass,
}

/// Large-background value of the posterior logit under the prior w = A/N^α:
///
/// Σ_{S=1} ln(N − B_k) − ln(N^α − A) + ln A + Σ_{S=1} ln(p_k / FP_k)
/// + Σ_{S=0} ln(1 − p_k)
///
/// `fp` and `object` are per-rater false-positive counts and object sizes
/// B_k. A rater voting 1 with FP_k = 0 sends the value to +∞.
pub fn limit_logit(
    pattern: &[bool],
    alpha: u32,
    a: f64,
    sensitivity: &[f64],
    fp: &[f64],
    object: &[f64],
    n: f64,
) -> Result<LimitLogit> {
    let k = pattern.len();
    if sensitivity.len() != k || fp.len() != k || object.len() != k {
        return Err(Error::Domain("per-rater vectors differ in length".into()));
    }
    if a <= 0.0 {
        return Err(Error::Domain(format!("prior constant A = {a} must be positive")));
    }
    let n_alpha = n.powi(alpha as i32);
    if n_alpha <= a {
        return Err(Error::Domain(format!("N^alpha = {n_alpha} must exceed A = {a}")));
    }
    let votes = pattern.iter().filter(|&&s| s).count() as i64;
    let exponent = votes - alpha as i64;
    let class = match exponent.signum() {
        1 => LimitClass::ToOne,
        0 => LimitClass::Finite,
        _ => LimitClass::ToZero,
    };
    let mut value = -(n_alpha - a).ln() + a.ln();
    for (r, &s) in pattern.iter().enumerate() {
        let p = clamp_prob(sensitivity[r]);
        if s {
            if n <= object[r] {
                return Err(Error::Domain(format!(
                    "N = {n} must exceed object size {} of rater {r}",
                    object[r]
                )));
            }
            if fp[r] <= 0.0 {
                value = f64::INFINITY;
                continue;
            }
            value += (n - object[r]).ln() + (p / fp[r]).ln();
        } else {
            value += (1.0 - p).ln();
        }
    }
    Ok(LimitLogit {
        value,
        exponent,
        class,
    })
}
