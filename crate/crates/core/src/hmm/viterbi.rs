use super::HmmParams;
use crate::ingest::{LogSeries, State, StateSequence};
use crate::scalar::Scalar;

/// Most probable state path, in log space. Every tie (including the final
/// state) resolves to sleep.
pub fn viterbi<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> StateSequence {
    let (path, _) = viterbi_with_score(obs, params);
    StateSequence::new(path, obs.epoch_seconds()).expect("non-empty path with validated epoch length")
}

/// Viterbi path together with its joint log-probability `ln P(path, O)`.
pub fn viterbi_with_score<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> (Vec<State>, F) {
    let values = obs.values();
    let n = values.len();
    let la = params.ln_a();
    let lpi = params.ln_pi();
    let mut back: Vec<[u8; 2]> = Vec::with_capacity(n);

    let lb = params.ln_emissions(values[0]);
    let mut delta = [lpi[0] + lb[0], lpi[1] + lb[1]];
    back.push([0, 0]);
    for &o in &values[1..] {
        let lb = params.ln_emissions(o);
        let mut next = [F::zero(); 2];
        let mut bp = [0u8; 2];
        for j in 0..2 {
            let from_sleep = delta[0] + la[0][j];
            let from_wake = delta[1] + la[1][j];
            let (best, arg) = if from_sleep >= from_wake || from_wake.is_nan() { (from_sleep, 0) } else { (from_wake, 1) };
            next[j] = best + lb[j];
            bp[j] = arg;
        }
        delta = next;
        back.push(bp);
    }

    let mut state = if delta[0] >= delta[1] || delta[1].is_nan() { 0 } else { 1 };
    let score = delta[state];
    let mut path = vec![State::Sleep; n];
    for t in (0..n).rev() {
        path[t] = State::from_index(state);
        state = back[t][state] as usize;
    }
    (path, score)
}

/// Joint log-probability of a given path, accumulated in the same order as
/// the Viterbi recursion so equal paths give bit-identical scores.
pub fn path_log_prob<F: Scalar>(obs: &[F], params: &HmmParams<F>, path: &[State]) -> F {
    assert_eq!(obs.len(), path.len(), "path length must match observations");
    let la = params.ln_a();
    let lpi = params.ln_pi();
    let mut s = lpi[path[0].index()] + params.ln_emission(path[0], obs[0]);
    for t in 1..obs.len() {
        s = s + la[path[t - 1].index()][path[t].index()] + params.ln_emission(path[t], obs[t]);
    }
    s
}
