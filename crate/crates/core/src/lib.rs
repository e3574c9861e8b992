//! Rate-distortion diagnostics for latent variable models.
//!
//! A latent variable model p(x) = ∫ p(z) ℓ(x|z) dz pairs a prior p(z) with a
//! likelihood function ℓ(x|z). Given a fixed likelihood evaluated on a finite
//! candidate support (a matrix of log ℓ(x_i|z_j) values), this crate
//!
//! - optimizes the prior by Blahut-Arimoto iteration ([`ba`]),
//! - brackets the achievable negative log likelihood between the trivial
//!   upper bound and the sharp information-theoretic lower bound ([`model`]),
//! - certifies optimality through the c(z) statistic and its KKT condition,
//! - connects the prior problem to the rate-distortion Lagrangian over test
//!   channels and checks that both minimizations coincide ([`rd`]),
//! - computes glossy statistics and importance-sampled evidence for
//!   continuous latent spaces, validated against a closed-form
//!   linear-Gaussian oracle ([`continuous`]),
//! - generates template-plus-Bernoulli-noise datasets and drives the
//!   bound-convergence experiment at desk scale ([`synth`]).
//!
//! All probability computations are carried in log-domain (nats) end to end;
//! linear-domain values appear only at I/O boundaries.

pub mod ba;
pub mod continuous;
pub mod error;
pub mod model;
pub mod numerics;
pub mod rd;
pub mod synth;

pub use error::{Error, Result};
