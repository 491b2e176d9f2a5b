//! Design and evaluation of prefix-free source codes for timely status updates.
//!
//! A transmitter observes a stream of symbols drawn i.i.d. from a finite
//! alphabet and forwards each freshly observed symbol over a one-bit-per-slot
//! channel, skipping symbols that arrive while the channel is busy. The
//! receiver's *age* at time `t` is the time elapsed since the generation of
//! the newest symbol it has fully decoded. Codeword lengths control both the
//! long-run average age of this update scheme and the average sojourn time
//! when the same codewords serve as M/G/1 service times.
//!
//! The crate provides:
//!
//! - [`pmf`]: validated probability mass functions, generators (Zipf,
//!   uniform), entropy/KL divergence, and equal-probability partitions.
//! - [`codec`]: length assignments, Kraft accounting, Shannon lengths,
//!   rounding, and canonical prefix-code construction.
//! - [`age`]: closed-form evaluators for average age (deterministic,
//!   randomized, erasure channel) and average M/G/1 delay, plus analytic
//!   bounds.
//! - [`varform`]: the variational representation of p-norms and the
//!   tilted-weight objectives whose maximizers yield optimal codes.
//! - [`solver`]: maxmin solvers producing the tilted distribution `P*` and
//!   optimal real-valued lengths for both the age and the delay cost, with an
//!   independent direct-minimization oracle and saddle-point diagnostics.
//! - [`sim`]: discrete-event simulators (update channel and M/G/1 queue)
//!   with reproducible per-role RNG streams and renewal-statistic checks.
//!
//! # Example
//!
//! ```
//! use agecodec::pmf::Pmf;
//! use agecodec::solver::{solve_age, SolverOptions};
//!
//! let p = Pmf::zipf(1.0, 8).unwrap();
//! let result = solve_age(&p, &SolverOptions::default()).unwrap();
//! assert!(result.converged);
//! // The optimized code never does worse than the Shannon code for P.
//! let shannon = agecodec::codec::shannon_lengths(&p, false);
//! let shannon_age = agecodec::age::average_age(&p, &shannon).unwrap();
//! assert!(result.average_age() <= shannon_age + 1e-9);
//! ```

pub mod age;
pub mod codec;
pub mod pmf;
pub mod sim;
pub mod solver;
pub mod varform;

pub use age::{AgeError, AgeReport, RandomizedScheme};
pub use codec::{canonical_code, shannon_lengths, CodeBook, CodecError, LengthAssignment};
pub use pmf::{Partition, Pmf, PmfError};
pub use sim::{simulate_mg1, simulate_update, SimConfig, SimError, SimReport};
pub use solver::{
    direct_oracle, saddle_check, solve_age, solve_delay, z_bound, OptResult, SolverError,
    SolverOptions,
};
pub use varform::{age_objective, delay_objective, pnorm_variational_value, q_star, GWeights, Mode};
