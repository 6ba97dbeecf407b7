//! Numerical certificates for convergence to equilibrium of degenerate
//! Ornstein-Uhlenbeck diffusions and of overdamped chains of interacting
//! particles.
//!
//! The crate is organised by subsystem:
//!
//! - [`spectra`]: spectral abscissa, critical Jordan index and the Kalman
//!   hypoellipticity certificate of a drift matrix, plus the closed-form
//!   decay envelopes built from them.
//! - [`gaussian`]: exact Gaussian computations (matrix exponential, Lyapunov
//!   equation, Mehler propagation, Wasserstein-2, relative entropy and the
//!   L² operator norm of `P_t - μ`).
//! - [`hypoco`]: distorted-norm (hypocoercive) certificates and rate formulas.
//! - [`graphs`]: discrete Laplacians, spectral gaps, Dirichlet eigenvalues and
//!   Cheeger constants of interaction graphs.
//! - [`chains`]: Euler-Maruyama ensembles and synchronous couplings for the
//!   overdamped particle chain, and its exact OU reduction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod graphs;
pub mod hypoco;
pub mod linalg;
pub mod spectra;

pub use error::{Error, Result};
pub use gaussian::{DecayCurve, GaussianState};
pub use graphs::InteractionGraph;
pub use spectra::{DriftSpec, SpectralCertificate};

pub use nalgebra::DMatrix;
