//! Data-driven state-feedback design and fragility analysis for discrete-time
//! LTI systems `x(t+1) = A x(t) + B u(t) + w(t)` with energy-bounded noise.
//!
//! Given recorded input/state data, the library decides whether the data are
//! informative for quadratic stabilization, designs stabilizing gains together
//! with quadratic certificates, parameterizes the whole certified gain set,
//! and computes fragility radii: how large an additive gain perturbation
//! `K + Delta` the closed loop is guaranteed to survive, either for a known
//! model or for *every* system consistent with the data.
//!
//! The heavy lifting is LMI feasibility and small SDPs, solved through the
//! [`sdp`] bridge (Clarabel backend) with a-posteriori eigenvalue checks on
//! every returned certificate. Brute-force sampling oracles provide
//! independent verification of each reported radius.

pub mod data;
pub mod error;
pub mod fragility;
pub mod linalg;
pub mod par;
pub mod sdp;
pub mod stabilization;

pub use data::{
    DataMatrices, InformativityMatrix, NoiseModel, SigmaParam, SystemModel, TrajectoryData,
};
pub use error::Error;
pub use fragility::{FragilityClass, FragilityReport, MuEstimate, ReportKind, VerifyOutcome};
pub use stabilization::{CertSource, CertificateMatrices, GainCertificate};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
