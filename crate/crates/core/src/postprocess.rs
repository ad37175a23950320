//! Removal of short same-state runs from a decoded sequence.

use crate::ingest::{State, StateSequence};

/// Default minimum duration of a surviving run, in minutes.
pub const DEFAULT_MIN_MINUTES: f64 = 15.0;

/// A maximal block of consecutive equal states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunLength {
    pub state: State,
    pub start: usize,
    pub len: usize,
}

/// Splits a state slice into maximal runs.
pub fn runs(states: &[State]) -> Vec<RunLength> {
    let mut out: Vec<RunLength> = Vec::new();
    for (i, &s) in states.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.state == s => r.len += 1,
            _ => out.push(RunLength { state: s, start: i, len: 1 }),
        }
    }
    out
}

/// Absorbs runs shorter than `min_minutes` into their neighbours.
///
/// Repeatedly picks the shortest run below the threshold (earliest on ties)
/// and relabels it: an interior run takes the state of its longer neighbour
/// (the preceding one on ties), a boundary run takes its only neighbour's
/// state. Adjacent equal runs are merged after each step. Stops when every
/// run lasts at least `min_minutes` or a single run remains. A non-positive
/// `min_minutes` returns the input unchanged.
pub fn smooth(states: &StateSequence, min_minutes: f64) -> StateSequence {
    let min_seconds = min_minutes * 60.0;
    let epoch = states.epoch_seconds() as f64;
    let short = |r: &RunLength| (r.len as f64) * epoch < min_seconds;
    let mut rs = runs(states.states());

    while rs.len() > 1 {
        let Some(k) = rs
            .iter()
            .enumerate()
            .filter(|(_, r)| short(r))
            .min_by_key(|(i, r)| (r.len, *i))
            .map(|(i, _)| i)
        else {
            break;
        };
        let target = match (k.checked_sub(1).map(|i| rs[i]), rs.get(k + 1).copied()) {
            (Some(prev), Some(next)) => {
                if next.len > prev.len {
                    next.state
                } else {
                    prev.state
                }
            }
            (Some(prev), None) => prev.state,
            (None, Some(next)) => next.state,
            (None, None) => unreachable!("more than one run"),
        };
        rs[k].state = target;
        // merge equal neighbours
        let mut merged: Vec<RunLength> = Vec::with_capacity(rs.len());
        for r in rs {
            match merged.last_mut() {
                Some(m) if m.state == r.state => m.len += r.len,
                _ => merged.push(r),
            }
        }
        rs = merged;
    }

    let mut out = Vec::with_capacity(states.len());
    for r in &rs {
        out.extend(std::iter::repeat_n(r.state, r.len));
    }
    StateSequence::new(out, states.epoch_seconds()).expect("same length and epoch as the input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use State::{Sleep as S, Wake as W};

    fn seq(parts: &[(State, usize)]) -> StateSequence {
        let v = parts.iter().flat_map(|&(s, n)| std::iter::repeat_n(s, n)).collect();
        StateSequence::new(v, 30).unwrap()
    }

    #[test]
    fn interior_short_wake_is_absorbed() {
        let out = smooth(&seq(&[(S, 40), (W, 10), (S, 40)]), 15.0);
        assert_eq!(out, seq(&[(S, 90)]));
    }

    #[test]
    fn long_runs_are_untouched() {
        let input = seq(&[(S, 30), (W, 31), (S, 45), (W, 30)]);
        assert_eq!(smooth(&input, 15.0), input);
    }

    #[test]
    fn boundary_run_takes_its_neighbour() {
        assert_eq!(smooth(&seq(&[(W, 5), (S, 100)]), 15.0), seq(&[(S, 105)]));
    }

    #[test]
    fn shortest_first_and_tie_rules() {
        // the 2-epoch sleep run goes first; its neighbours tie at 10 so it
        // takes the preceding state, leaving W×22 then S×40
        let input = seq(&[(W, 10), (S, 2), (W, 10), (S, 40)]);
        assert_eq!(smooth(&input, 5.5), seq(&[(W, 22), (S, 40)]));
    }

    #[test]
    fn zero_minutes_disables() {
        let input = seq(&[(W, 1), (S, 1), (W, 1)]);
        assert_eq!(smooth(&input, 0.0), input);
    }

    #[test]
    fn single_run_is_returned_unchanged() {
        let input = seq(&[(W, 3)]);
        assert_eq!(smooth(&input, 15.0), input);
    }

    #[test]
    fn runs_partition() {
        let r = runs(&[S, S, W, S]);
        assert_eq!(
            r,
            vec![
                RunLength { state: S, start: 0, len: 2 },
                RunLength { state: W, start: 2, len: 1 },
                RunLength { state: S, start: 3, len: 1 }
            ]
        );
    }
}
