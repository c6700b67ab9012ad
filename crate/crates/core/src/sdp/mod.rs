//! Small dense semidefinite programming.
//!
//! Problems are stated over Hermitian blocks ([`SdpProblem`]), embedded into
//! real symmetric form ([`realify`]) and solved by a homogeneous self-dual
//! interior-point method ([`solve_real`]).

mod problem;
mod rank1;
mod solver;

use alloc::vec::Vec;

pub use problem::{
    realify, Constraint, HermitianMatrix, RealConstraint, RealSdp, RealTerm, SdpProblem, Sense,
    Term,
};
pub use rank1::extract_rank1;
pub use solver::{solve_real, RealSolution, SdpStatus, SolverOptions};

use crate::{Error, Result};

/// Solution of a Hermitian [`SdpProblem`].
#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<HermitianMatrix>,
    pub y: Vec<f64>,
    /// Dual slack blocks `C - sum y_t A_t`.
    pub z: Vec<HermitianMatrix>,
    pub objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Solves a Hermitian SDP. Non-optimal outcomes are reported through
/// [`SdpSolution::status`]; only malformed input is an error.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    if !(1e-10..=1e-4).contains(&opts.tol) {
        return Err(Error::invalid("tolerance must lie in [1e-10, 1e-4]"));
    }
    let real = realify(problem)?;
    let sol = solve_real(&real, opts);
    let x = sol.x.iter().map(HermitianMatrix::from_embedding).collect();
    // the embedded dual slack is half the embedding of the complex one
    let z = sol
        .z
        .iter()
        .map(|zb| {
            let mut e = zb.clone();
            e.scale(2.0);
            HermitianMatrix::from_embedding(&e)
        })
        .collect();
    Ok(SdpSolution {
        status: sol.status,
        x,
        y: sol.y,
        z,
        objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        gap: sol.gap,
        iterations: sol.iterations,
    })
}
