//! Rotation synchronization on the quotient manifold `O(d)^n / O(d)`.
//!
//! Layers, bottom up: [`manifold`] (rotation blocks and stacks), [`quotient`]
//! (gradient, Hessian and class distances of `tr(G^T C G)`), [`problem`]
//! (synthetic instances), [`estimators`] (spectral initialization, Riemannian
//! gradient ascent, generalized power method) and [`diagnostics`] (numerical
//! certificates of the recovery and convergence guarantees).

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod problem;
pub mod quotient;
pub mod rng;

pub use error::{Result, SyncError};
pub use estimators::{Estimate, InitKind, SolveOptions, SolveStatus, SolveTrace, StepsizePolicy};
pub use linalg::Mat;
pub use manifold::{Group, RotationStack, SkewBlock, SkewStack};
pub use problem::{Guarantee, NoiseLevel, Observation, RegionSpec};
pub use quotient::Alignment;
