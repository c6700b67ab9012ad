//! Revenue-maximizing auctions for simultaneous wireless information and
//! power transfer (SWIPT).
//!
//! A multi-antenna access point sells SINR-guaranteed data links to
//! information receivers (IRs) and delivered RF power to energy receivers
//! (ERs). This crate provides every numerical piece of that pipeline:
//!
//! * [`model`]: channels, demands, bids, beamformers and the closed-form
//!   SINR / harvested-power / welfare metrics.
//! * [`sdp`]: a dense primal-dual interior-point solver for small Hermitian
//!   semidefinite programs with infeasibility certificates.
//! * [`powermin`]: minimum transmit power for a user subset via semidefinite
//!   relaxation, uplink-downlink duality or closed forms.
//! * [`mechanism`]: virtual valuations, VCG-style payments on virtual bids and
//!   the Myerson optimal mechanism.
//! * [`search`]: exhaustive, branch-and-bound and goodness-heuristic
//!   allocation engines over a downward-closed feasibility oracle.
//! * [`surrogate`]: an MLP that predicts allocations directly, with its
//!   preprocessing, trainer and metrics.
//! * [`dataset`]: scenario sampling and offline labeling.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled; the only thing `std` adds is wall-clock timing in search stats.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

use alloc::string::String;

pub mod dataset;
pub mod linalg;
pub mod math;
pub mod mechanism;
pub mod model;
pub mod powermin;
pub mod sdp;
pub mod search;
pub mod surrogate;

pub use num_complex::Complex64;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }

    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Self::DimensionMismatch {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
