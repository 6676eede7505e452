//! Identification of jump and piecewise linear models by spectral clustering
//! on the signal subspace of the stacked observations, followed by per-cluster
//! total least squares.
//!
//! The pipeline is
//!
//! 1. stack inputs and outputs into `Z = [X; Y]` ([`model::stack`]),
//! 2. take the rank-`K·N_d` right signal subspace `V` ([`subspace`]),
//! 3. cluster the graph with weights `|V Vᵀ|` through its normalized
//!    Laplacian ([`clustering`]),
//! 4. fit each cluster ([`estimation`]).
//!
//! [`identifiability`] checks whether a noiseless input design is recovered
//! exactly, [`crb`] computes the clairvoyant Cramér-Rao bound and [`bench`]
//! runs Monte Carlo SNR sweeps.

pub mod bench;
pub mod clustering;
pub mod crb;
pub mod error;
pub mod estimation;
pub mod identifiability;
pub mod linalg;
pub mod model;
pub mod subspace;

pub use error::{Error, Result};
