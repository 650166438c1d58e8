//! One entry point over every fusion method.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::baselines::{majority_vote, mask_average};
use crate::distances::{BinaryDistance, SoftDistance};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, RaterStack, SoftMask};
use crate::macchiato::{
    hard_consensus, soft_consensus, ComponentReport, MacchiatoConfig,
};
use crate::staple::{ml_staple, mml_staple, EmTrace, PriorSpec, RaterPerformance, StapleOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "mv")]
    MajorityVote,
    #[serde(rename = "ma")]
    MaskAverage,
    #[serde(rename = "ml-staple")]
    MlStaple,
    #[serde(rename = "mml-staple")]
    MmlStaple,
    #[serde(rename = "macchiato-j")]
    MacchiatoJ,
    #[serde(rename = "macchiato-d")]
    MacchiatoD,
    #[serde(rename = "macchiato-tj")]
    MacchiatoTJ,
    #[serde(rename = "macchiato-sj")]
    MacchiatoSJ,
    #[serde(rename = "macchiato-1sd")]
    Macchiato1SD,
    #[serde(rename = "macchiato-2sd")]
    Macchiato2SD,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::MajorityVote,
        Method::MaskAverage,
        Method::MlStaple,
        Method::MmlStaple,
        Method::MacchiatoJ,
        Method::MacchiatoD,
        Method::MacchiatoTJ,
        Method::MacchiatoSJ,
        Method::Macchiato1SD,
        Method::Macchiato2SD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MajorityVote => "mv",
            Method::MaskAverage => "ma",
            Method::MlStaple => "ml-staple",
            Method::MmlStaple => "mml-staple",
            Method::MacchiatoJ => "macchiato-j",
            Method::MacchiatoD => "macchiato-d",
            Method::MacchiatoTJ => "macchiato-tj",
            Method::MacchiatoSJ => "macchiato-sj",
            Method::Macchiato1SD => "macchiato-1sd",
            Method::Macchiato2SD => "macchiato-2sd",
        }
    }

    pub fn is_macchiato(self) -> bool {
        self.binary_distance().is_some() || self.soft_distance().is_some()
    }

    /// Whether the method produces a binary mask.
    pub fn is_hard(self) -> bool {
        matches!(
            self,
            Method::MajorityVote | Method::MlStaple | Method::MacchiatoJ | Method::MacchiatoD
        )
    }

    pub fn binary_distance(self) -> Option<BinaryDistance> {
        match self {
            Method::MacchiatoJ => Some(BinaryDistance::Jaccard),
            Method::MacchiatoD => Some(BinaryDistance::Dice),
            _ => None,
        }
    }

    pub fn soft_distance(self) -> Option<SoftDistance> {
        match self {
            Method::MacchiatoTJ => Some(SoftDistance::Tanimoto),
            Method::MacchiatoSJ => Some(SoftDistance::Soergel),
            Method::Macchiato1SD => Some(SoftDistance::Psd1),
            Method::Macchiato2SD => Some(SoftDistance::Psd2),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Method plus the options of the family it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub macchiato: MacchiatoConfig,
    pub prior: PriorSpec,
    pub staple: StapleOptions,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            macchiato: MacchiatoConfig::default(),
            prior: PriorSpec::Uninformative,
            staple: StapleOptions::default(),
        }
    }
}

impl From<Method> for MethodSpec {
    fn from(method: Method) -> Self {
        Self::new(method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consensus {
    Hard(BinaryMask),
    Soft(SoftMask),
}

impl Consensus {
    pub fn grid(&self) -> &Grid {
        match self {
            Consensus::Hard(m) => m.grid(),
            Consensus::Soft(m) => m.grid(),
        }
    }

    /// Voxel count for hard masks, Σ u for soft masks.
    pub fn size(&self) -> f64 {
        match self {
            Consensus::Hard(m) => m.count() as f64,
            Consensus::Soft(m) => m.volume(),
        }
    }

    /// Hard mask, or the soft mask thresholded strictly above 0.5.
    pub fn binarized(&self) -> BinaryMask {
        match self {
            Consensus::Hard(m) => m.clone(),
            Consensus::Soft(m) => m.threshold(0.5),
        }
    }

    pub fn to_soft(&self) -> SoftMask {
        match self {
            Consensus::Hard(m) => m.to_soft(),
            Consensus::Soft(m) => m.clone(),
        }
    }

    pub fn as_hard(&self) -> Option<&BinaryMask> {
        match self {
            Consensus::Hard(m) => Some(m),
            Consensus::Soft(_) => None,
        }
    }

    pub fn as_soft(&self) -> Option<&SoftMask> {
        match self {
            Consensus::Hard(_) => None,
            Consensus::Soft(m) => Some(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub method: Method,
    pub consensus: Consensus,
    /// Achieved LMSD (MACCHIatO methods).
    pub lmsd: Option<f64>,
    /// Rater sensitivities and specificities (STAPLE methods).
    pub performance: Option<RaterPerformance>,
    /// Resolved prior w (MML STAPLE).
    pub prior: Option<f64>,
    pub trace: Option<EmTrace>,
    pub components: Vec<ComponentReport>,
}

impl FusionResult {
    fn plain(method: Method, consensus: Consensus) -> Self {
        Self {
            method,
            consensus,
            lmsd: None,
            performance: None,
            prior: None,
            trace: None,
            components: Vec::new(),
        }
    }
}

pub fn fuse(stack: &RaterStack, spec: &MethodSpec) -> Result<FusionResult> {
    let method = spec.method;
    match method {
        Method::MajorityVote => Ok(FusionResult::plain(
            method,
            Consensus::Hard(majority_vote(stack)),
        )),
        Method::MaskAverage => Ok(FusionResult::plain(
            method,
            Consensus::Soft(mask_average(stack)),
        )),
        Method::MlStaple => {
            let r = ml_staple(stack, &spec.staple)?;
            Ok(FusionResult {
                performance: Some(r.performance),
                trace: Some(r.trace),
                ..FusionResult::plain(method, Consensus::Hard(r.consensus))
            })
        }
        Method::MmlStaple => {
            let r = mml_staple(stack, &spec.prior, &spec.staple)?;
            Ok(FusionResult {
                performance: Some(r.performance),
                prior: Some(r.prior),
                trace: Some(r.trace),
                ..FusionResult::plain(method, Consensus::Soft(r.consensus))
            })
        }
        _ => {
            if let Some(kind) = method.binary_distance() {
                let r = hard_consensus(stack, kind, &spec.macchiato)?;
                Ok(FusionResult {
                    lmsd: Some(r.lmsd),
                    components: r.components,
                    ..FusionResult::plain(method, Consensus::Hard(r.mask))
                })
            } else {
                let kind = method.soft_distance().expect("remaining methods are soft");
                let r = soft_consensus(stack, kind, &spec.macchiato)?;
                Ok(FusionResult {
                    lmsd: Some(r.lmsd),
                    components: r.components,
                    ..FusionResult::plain(method, Consensus::Soft(r.mask))
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Neighborhood;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.is_hard(), matches!(m.name(), "mv" | "ml-staple" | "macchiato-j" | "macchiato-d"));
        }
        assert!("staple".parse::<Method>().is_err());
    }

    #[test]
    fn f1_through_every_method() {
        let g = Grid::new(vec![8], Neighborhood::N2).unwrap();
        let s = RaterStack::new(vec![
            BinaryMask::from_indices(g.clone(), &[2, 3, 4]).unwrap(),
            BinaryMask::from_indices(g, &[3, 4, 5]).unwrap(),
        ])
        .unwrap();
        for m in Method::ALL {
            let r = fuse(&s, &m.into()).unwrap();
            assert_eq!(r.consensus.as_hard().is_some(), m.is_hard());
            assert_eq!(r.lmsd.is_some(), m.is_macchiato());
        }
        let ma = fuse(&s, &Method::MaskAverage.into()).unwrap();
        assert_eq!(ma.consensus.size(), 3.0);
    }
}
