//! Finite-setting tests of Leggett's non-local variable model.
//!
//! * [`sphere`]: Poincaré-sphere geometry and measurement schedules.
//! * [`quantum`]: two-qubit predictions and state models.
//! * [`leggett`]: the NLV pair law, its constraints and the explicit model.
//! * [`inequality`]: `u_N`, `E_j^N`, `L_N` and the NLV bound.
//! * [`simulate`]: Monte Carlo of the coincidence-counting experiment.
//! * [`cli`]: the `leggett` command-line front end.

pub mod checks;
pub mod cli;
pub mod error;
pub mod inequality;
pub mod leggett;
pub mod quantum;
pub mod simulate;
pub mod sphere;

pub use error::{Error, Result};
pub use inequality::{l_n, nlv_bound, u_coefficient, Averaging, InequalityReport};
pub use quantum::{CorrelationSource, CorrelationTensor, Outcome, TwoQubitState};
pub use sphere::{PlaneFrame, UnitVector};
