//! Exact laws of exchangeable random partitions derived from exchangeable
//! coalescents with freezing.
//!
//! A coalescent with freeze is a continuous-time Markov chain on partially
//! frozen partitions: active blocks merge in (possibly simultaneous) multiple
//! collisions driven by a finite measure Xi on the infinite simplex, and each
//! active block independently freezes at rate `rho`. Once every block is
//! frozen the process is absorbed; the absorbed state, restricted to
//! `{1, ..., n}`, is an exchangeable random partition. This crate computes
//! that partition's law exactly, in rational arithmetic:
//!
//! * [`combinatorics`] — integer/set/partially-frozen partitions, collision
//!   types `(b; k_1..k_r; s)`, the collision count `d(b; k; s)`, and the
//!   assignment sets used by the recursion on partition probabilities;
//! * [`measures`] — finitely supported Xi measures (Kingman atom, simplex
//!   atoms, Beta-distributed single-collision part), exact collision rates,
//!   total rates, the jump-chain probability rows `q(b: ...)`, the rate
//!   consistency check, the backward recursion reconstructing all rows from
//!   row `n`, and rate recovery from rows up to a global factor;
//! * [`eppf`] — the exchangeable partition probability function (EPPF) of the
//!   absorbed partition via the recursion of Möhle type, the addition rule
//!   check, the Ewens special case, and the inversion mapping an EPPF back to
//!   the rows `q(n: ...)`;
//! * [`chains`] — the embedded discrete coalescent (freeze-merge chain), the
//!   continuous-time sampler, a ball-in-box sequential-addition chain whose
//!   stationary law is the absorbed partition law, exact absorption and
//!   stationary distributions for small `n`, Monte Carlo batch samplers
//!   (data-parallel when the `parallel` feature is on), and chi-square
//!   comparisons between empirical and exact laws.
//!
//! All probabilities and rates are [`Rat`] (arbitrary-precision rationals),
//! so every structural identity (row normalization, rate consistency, the
//! addition rule, round trips) holds exactly, not just within floating-point
//! tolerance. Floating point appears only where randomness does: holding
//! times, samplers, and test statistics.

#![forbid(unsafe_code)]
#![warn(missing_docs)]

use thiserror::Error;

pub mod chains;
pub mod combinatorics;
pub mod eppf;
pub mod measures;
pub mod rational;

pub use rational::Rat;

/// Errors reported by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A partition, composition, or collision type failed validation.
    #[error("invalid partition data: {0}")]
    InvalidPartition(String),
    /// A Xi model failed validation (weights, simplex constraints, masses).
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A q row or q array failed validation or is mutually inconsistent.
    #[error("invalid transition data: {0}")]
    InvalidQ(String),
    /// A table of partition probabilities is not a valid EPPF.
    #[error("invalid eppf: {0}")]
    InvalidEppf(String),
    /// The total transition rate at `b` active blocks vanishes, so the jump
    /// chain row is undefined.
    #[error("total rate at {b} active blocks is zero; q row undefined")]
    ZeroTotalRate {
        /// Number of active blocks.
        b: usize,
    },
    /// `q(2:1) = 0`: freezing never happens, the absorbed partition law is
    /// degenerate and the map from rates to partition laws is not invertible.
    #[error("q(2:1) = 0 with n >= 2: no freezing occurs and the final partition law is degenerate")]
    NoFreezing,
    /// An enumeration was requested beyond its configured cap.
    #[error("size {n} exceeds enumeration cap {cap}")]
    CapExceeded {
        /// Requested size.
        n: usize,
        /// Configured cap.
        cap: usize,
    },
    /// The freeze rate is zero, so the continuous-time chain never absorbs.
    #[error("freeze rate is zero: the coalescent never absorbs")]
    ZeroFreezeRate,
    /// A chain exceeded its step budget (diagnostic for degenerate rows).
    #[error("step budget {budget} exceeded without absorption")]
    StepBudget {
        /// The exhausted budget.
        budget: usize,
    },
    /// The stationary distribution of a transition matrix is not unique.
    #[error("stationary distribution not unique: kernel dimension {kernel_dim}")]
    NonUniqueStationary {
        /// Dimension of the fixed-vector space found.
        kernel_dim: usize,
    },
    /// An empirical table was built from no samples.
    #[error("empty sample")]
    EmptySample,
    /// A string could not be parsed as an exact rational.
    #[error("parse error: {0}")]
    Parse(String),
    /// The global thread pool could not be configured.
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Convenience result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Size caps for the exact enumeration-based operations.
///
/// These guard the combinatorial explosions (Bell numbers, full transition
/// matrices, absorption solves); callers may raise them deliberately.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Largest `n` for which set partitions of `{1..n}` are enumerated.
    pub bell_enumeration: usize,
    /// Largest `n` for which the exact ball-chain transition matrix is built.
    pub sa_matrix: usize,
    /// Largest `n` for which the exact freeze-merge absorption law is solved.
    pub fm_oracle: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            bell_enumeration: 10,
            sa_matrix: 6,
            fm_oracle: 4,
        }
    }
}

/// Configure the global thread pool used by the parallel samplers.
///
/// With the `parallel` feature disabled this is a no-op. It may be called at
/// most once, before any parallel work.
#[cfg(feature = "parallel")]
pub fn configure_thread_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::ThreadPool(e.to_string()))
}

/// Configure the global thread pool used by the parallel samplers.
///
/// With the `parallel` feature disabled this is a no-op. It may be called at
/// most once, before any parallel work.
#[cfg(not(feature = "parallel"))]
pub fn configure_thread_pool(_threads: usize) -> Result<()> {
    Ok(())
}
