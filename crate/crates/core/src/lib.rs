#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Trans-Gaussian Kriging with objective-Bayesian treatment of the
//! correlation lengths, pseudo-likelihoods of the transformation parameter
//! and probability-of-detection curves.

pub mod config;
pub mod design;
pub mod error;
pub mod io;
pub mod kernel;
pub mod likelihood;
pub(crate) mod linalg;
pub mod model;
pub mod pipeline;
pub mod pod;
pub mod posterior;
pub mod predict;
pub mod sampling;
mod special;
pub mod transform;

#[cfg(test)]
mod testutil;

pub use config::{AlphaGrid, RunConfig, SyntheticTruth};
pub use design::{DesignSet, ProjectionPair, TrendBasis};
pub use error::{Error, Result};
pub use kernel::CorrelationLengths;
pub use likelihood::{AlphaProfile, GaussianHyper, ProfileConfig};
pub use model::KrigingModel;
pub use pod::{Marginal, NuisanceDistribution, PodConfig, PodCurve, SafetyModel};
pub use posterior::{FisherForm, MapConfig, McmcConfig, Prior, ThetaDraws, WalkScale};
pub use predict::{MixturePredictor, PredictiveMixture, StudentTPredictive};
pub use transform::{Family, TransformFamily};
