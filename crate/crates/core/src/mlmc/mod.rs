//! Nested and unbiased multilevel estimators of the EIG gradient.

pub mod correction;
pub mod gradient;
pub mod inner;
pub mod weights;

pub use correction::{
    correction_from_batch, correction_parts, eig_correction_from_batch, Construction,
    CorrectionSample, OuterDraw, Sampler,
};
pub use gradient::{
    estimate_gradient, gradient_sample, GradientConfig, GradientEstimate, GradientEstimator,
    GradientSample,
};
pub use inner::{antithetic_identity_residual, inner_ratio, InnerBatch, InnerRatio};
pub use weights::{LevelWeights, LEVEL_CAP};
