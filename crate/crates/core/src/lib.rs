//! Engine for fitting Bayesian occupancy models to large presence/absence
//! datasets of the kind produced by biological recording schemes.
//!
//! The model separates a latent occupancy process over (site, year) sampling
//! units from an imperfect detection process over individual visits. Both are
//! logistic regressions, sampled exactly by Pólya-Gamma data augmentation;
//! temporal and spatial autocorrelation enter through squared-exponential
//! Gaussian-process random effects, with the spatial process approximated on a
//! uniform grid (subset-of-data) so that cost stays linear in the number of
//! sites.
//!
//! Module map:
//! - [`pg`]: exact Pólya-Gamma sampling.
//! - [`kernel`]: GP covariance construction, the subset-of-data grid, and the
//!   random-walk prior comparison utility.
//! - [`data`]: visit-record ingestion, sampling-unit derivation, and design
//!   matrix construction (relative list length, Julian-date powers).
//! - [`sampler`]: the blocked Gibbs sampler.
//! - [`posterior`]: occupancy indices, detection trends, goodness-of-fit
//!   statistics, summaries, and output files.
//! - [`simulate`]: synthetic-data generation and recovery scoring.

pub mod data;
pub mod error;
pub mod kernel;
pub(crate) mod parallel;
pub mod pg;
pub mod posterior;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
