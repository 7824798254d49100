//! Finite-key secure-key capacity of dispersive-optics, time-energy
//! entangled, high-dimensional QKD against collective attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`] builds the two-mode covariance matrix of the biphoton
//!   state, with eavesdropper noise, and computes its symplectic spectrum.
//! * [`info`] evaluates Gaussian entropies, the worst-case Holevo
//!   information, the timing Shannon information and the asymptotic rate.
//! * [`finite_key`] applies sifting bookkeeping, the confidence bound on the
//!   correlation time and the finite-size rate corrections.
//! * [`channel`] maps fiber and detector parameters to coincidence statistics.
//! * [`optimizer`] maximises the finite-key rate over the basis probability
//!   and the security-budget split, and drives the figure sweeps.
//! * [`mc`] is a seedable Monte Carlo oracle for the statistical bounds.
//! * [`config`] and [`csv`] hold the run configuration and output formats.

pub mod channel;
pub mod config;
pub mod csv;
pub mod error;
pub mod finite_key;
pub mod gaussian;
pub mod info;
pub mod mc;
pub mod optimizer;
pub mod special;

pub use error::{Error, Result};
