//! Gaussian-process latent force models in state-space form.
//!
//! A physical linear plant driven by an unknown force is augmented with a
//! state-space realization of the force's Gaussian-process prior. The joint
//! model supports Kalman filtering and RTS smoothing ([`infer`]), LQ control
//! that feeds back the learned force ([`control`]), and rank/eigenvalue
//! certification of observability and controllability ([`systheory`]).

pub mod control;
pub mod error;
pub mod experiments;
pub mod gpss;
pub mod infer;
pub mod model;
pub mod numlin;
pub mod systheory;

pub use error::{LfmError, Result};
pub use gpss::{kernel_value, realize, CovarianceKind, CovarianceSpec, LtiGpRealization};
pub use model::{augment, build_heat_fourier, build_spring, AugmentedLfm, HeatConfig, LtiPhysicalSystem, Rect};
pub use numlin::{DenseMatrix, SymmetricPsdMatrix};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
