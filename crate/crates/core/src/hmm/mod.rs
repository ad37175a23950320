//! Two-state hidden Markov model: parameters, scaled forward-backward,
//! Baum-Welch, Viterbi, and exhaustive-enumeration references.

mod baum_welch;
mod brute;
mod forward_backward;
mod params;
mod viterbi;

use thiserror::Error;

use crate::emissions::EmissionError;
use crate::ingest::State;

pub use baum_welch::{
    baum_welch, default_init, estimate_supervised, fit_default, FitReport, DEFAULT_MAX_ITER, DEFAULT_TOL, MIN_FIT_LEN,
};
pub use brute::{brute_force_likelihood, brute_force_posteriors, brute_force_viterbi, MAX_ENUMERATION_LEN};
pub use forward_backward::{forward_log_likelihood, pairwise_posteriors, posterior_marginals, Posteriors};
pub use params::HmmParams;
pub use viterbi::{path_log_prob, viterbi, viterbi_with_score};

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Emission(#[from] EmissionError),
    #[error("series of {len} epochs is too short to fit (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("{state:?} emission update failed at iteration {iteration}: {source}")]
    EmissionFit {
        iteration: usize,
        state: State,
        #[source]
        source: EmissionError,
    },
    #[error("enumeration refused for {len} epochs (limit {max})")]
    TooLongForEnumeration { len: usize, max: usize },
    #[error("fit did not separate a low-activity sleep state from wake")]
    Unidentifiable,
    #[error("parameter file line {line}: {msg}")]
    ParamFile { line: usize, msg: String },
    #[error("{0}")]
    Io(String),
}
