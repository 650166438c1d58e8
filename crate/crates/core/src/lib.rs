//! Consensus segmentation fusion: voting baselines, STAPLE variants and
//! Fréchet-mean consensus under Jaccard and Dice style distances.

pub mod baselines;
pub mod distances;
pub mod error;
pub mod fixtures;
pub mod fusion;
pub mod grid;
pub mod macchiato;
pub mod metrics;
pub mod morphology;
pub mod optimize;
pub mod oracle;
pub mod staple;
pub mod study;

pub use error::{Error, Result};
pub use fusion::{fuse, Consensus, FusionResult, Method, MethodSpec};
pub use grid::{BinaryMask, Grid, Neighborhood, RaterStack, SoftMask};
