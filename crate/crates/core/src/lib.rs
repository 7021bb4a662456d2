//! Estimation, inference and Monte Carlo evaluation for stepped-wedge cluster
//! randomized trials whose treatment effect varies with exposure time.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! front end and the parallel simulation runner live in the `swedge` crate.
//!
//! Module map:
//! - [`design`]: sequence/period geometry and exposure-time algebra.
//! - [`datagen`]: effect curves and synthetic trial data.
//! - [`weights`]: closed-form immediate-treatment estimator, its weight
//!   function, and a GLS-based numerical oracle for other correlation structures.
//! - [`spline`]: natural cubic spline basis through the origin.
//! - [`models`]: REML/ML linear mixed model fitting (IT, ETI, RETI, NCS, random
//!   treatment effects) and the likelihood ratio test.
//! - [`estimands`]: TATE / PTE / LTE contrasts, variances and Wald inference.
//! - [`mec`]: monotone effect curve model fitted by adaptive Metropolis-within-Gibbs.
//! - [`sim`]: simulation scenarios, per-replicate evaluation and metrics.
#![no_std]

extern crate alloc;

pub mod datagen;
pub mod design;
pub mod dist;
pub mod error;
pub mod estimands;
mod linalg;
mod optim;
pub mod mec;
pub mod models;
pub mod sim;
pub mod spline;
pub mod weights;

pub use datagen::{CurveKind, EffectCurve, GenParams, Observation, TrialDataset};
pub use design::StudyDesign;
pub use error::{Error, Result};
pub use estimands::{EstimandEstimate, EstimandKind, RiemannMethod};
pub use models::{FittedModel, ModelKind, ModelSpec, VarianceComponents};
