//! Time-varying Laplace mechanisms for differential privacy of the initial
//! state (or a constant parameter) of a discrete-time system, with the
//! contraction certificates that justify them and exact privacy audits.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod audit;
pub mod casestudies;
pub mod contraction;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mechanism;

pub use audit::{privacy_loss, worst_pair_search, BoxSet, Interval, PrivacyAuditReport};
pub use contraction::{
    verify_oib_grid, ContractionCertificate, GridVerificationReport, MetricCandidate,
};
pub use dynamics::{simulate, SystemModel, Trajectory};
pub use error::{Error, Result};
pub use geometry::{distance, path_length, Chart, ManifoldPoint, MetricField, PathCurve};
pub use mechanism::{EpsilonSchedule, LaplaceSampler, NoiseSchedule, ParameterBounds};
