//! Exhaustive enumeration over all `2^T` state paths. Used as an independent
//! reference for the forward recursion, posteriors and Viterbi.

use super::viterbi::path_log_prob;
use super::{HmmError, HmmParams};
use crate::ingest::{LogSeries, State, StateSequence};
use crate::scalar::Scalar;

/// Longest sequence the enumerators accept.
pub const MAX_ENUMERATION_LEN: usize = 16;

fn guard<F: Scalar>(obs: &LogSeries<F>) -> Result<(), HmmError> {
    if obs.len() > MAX_ENUMERATION_LEN {
        return Err(HmmError::TooLongForEnumeration { len: obs.len(), max: MAX_ENUMERATION_LEN });
    }
    Ok(())
}

/// Path encoded as a bitmask: bit `t` set means wake at epoch `t`.
fn decode(mask: u32, n: usize) -> Vec<State> {
    (0..n).map(|t| if mask >> t & 1 == 1 { State::Wake } else { State::Sleep }).collect()
}

fn all_scores<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Vec<F> {
    let n = obs.len();
    (0..1u32 << n).map(|m| path_log_prob(obs.values(), params, &decode(m, n))).collect()
}

fn log_sum<F: Scalar>(scores: &[F]) -> F {
    let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    max + scores.iter().fold(F::zero(), |acc, &s| acc + (s - max).exp()).ln()
}

/// `ln Σ_paths P(path, O)`.
pub fn brute_force_likelihood<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Result<F, HmmError> {
    guard(obs)?;
    Ok(log_sum(&all_scores(obs, params)))
}

/// Argmax path. Among equal scores the path whose last differing epoch is
/// sleep wins, which is what sleep-first backtracking produces; with the
/// bitmask encoding that is simply the smaller mask.
pub fn brute_force_viterbi<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Result<StateSequence, HmmError> {
    guard(obs)?;
    let scores = all_scores(obs, params);
    let mut best = 0usize;
    for (m, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = m;
        }
    }
    Ok(StateSequence::new(decode(best as u32, obs.len()), obs.epoch_seconds()).expect("valid"))
}

/// Posterior marginals by enumeration.
pub fn brute_force_posteriors<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Result<Vec<[F; 2]>, HmmError> {
    guard(obs)?;
    let n = obs.len();
    let scores = all_scores(obs, params);
    let total = log_sum(&scores);
    let mut post = vec![[F::zero(); 2]; n];
    for (m, &s) in scores.iter().enumerate() {
        let p = (s - total).exp();
        for (t, g) in post.iter_mut().enumerate() {
            g[m >> t & 1] += p;
        }
    }
    Ok(post)
}
