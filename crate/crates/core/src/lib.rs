//! Truthful linear-regression mechanisms for privacy-sensitive data holders.
//!
//! Two mechanisms are provided:
//!
//! * a non-private peer-prediction mechanism that releases the least-squares
//!   estimate and pays each player with a Brier-type scoring rule against the
//!   leave-one-out estimate ([`mechanism::run_algorithm_1`]);
//! * a jointly differentially private mechanism that perturbs ridge estimates
//!   with high-dimensional Laplace noise and pays each player against the
//!   noisy estimate of the *other* half of a random partition
//!   ([`mechanism::run_algorithm_2`]).
//!
//! Around them sit the pieces needed to audit their guarantees empirically:
//! synthetic world samplers, closed-form ridge diagnostics, sensitivity and
//! density-ratio audits, posterior-mean oracles, threshold strategies, the
//! analytic bound formulas, and the asymptotic parameter schedule.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. All randomness is passed in explicitly.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is the NaN-rejecting form of every parameter check here.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod agents;
pub mod data_gen;
pub mod error;
pub mod linalg;
pub mod mechanism;
pub mod payments;
pub mod privacy;
pub mod random;
pub mod regression;
pub mod schedule;
pub mod stats;

pub use error::{Error, Result};
