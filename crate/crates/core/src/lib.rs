//! Tie times of random m-team competitions.
//!
//! Every round one of `m` teams, chosen uniformly at random, wins a point. The
//! crate works with the vector of adjacent score gaps and the first time `T`
//! at which one of them vanishes. It provides:
//!
//! * [`process`]: gap dynamics, tie detection, and reproducible trajectory sampling,
//! * [`montecarlo`]: estimators for `E[T]`, pair stopping times, tails, and
//!   related diagnostics with median-of-means confidence intervals,
//! * [`exact`]: lattice solvers for expected hitting times and truncated second moments,
//! * [`martingale`]: exact-rational verification of drift identities and
//!   supermartingale inequalities over finite state grids,
//! * [`series`]: truncated multivariate power series and the substitution
//!   operators used to search for perfect time martingale generators,
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod martingale;
pub mod montecarlo;
pub mod process;
pub mod rational;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
pub use process::{GapState, StepDelta, StoppingSample};
