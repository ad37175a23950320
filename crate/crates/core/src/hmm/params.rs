use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HmmError;
use crate::emissions::{SleepEmission, WakeEmission};
use crate::ingest::State;
use crate::scalar::{ln_prob, Scalar};

/// Full parameter set of the two-state model. State 0 is sleep, state 1 wake.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HmmParams<F> {
    a: [[F; 2]; 2],
    sleep: SleepEmission<F>,
    wake: WakeEmission<F>,
    pi: [F; 2],
}

/// Tolerance on "sums to one": 1e-12, or a few ulps for narrower types.
pub(crate) fn simplex_tol<F: Scalar>() -> F {
    F::lit(1e-12).max(F::epsilon() * F::lit(16.0))
}

fn check_simplex<F: Scalar>(row: &[F; 2], what: &str) -> Result<(), HmmError> {
    if row.iter().any(|p| !(*p >= F::zero() && *p <= F::one())) {
        return Err(HmmError::InvalidParams(format!("{what} has an entry outside [0, 1]")));
    }
    if (row[0] + row[1] - F::one()).abs() > simplex_tol() {
        return Err(HmmError::InvalidParams(format!("{what} does not sum to 1")));
    }
    Ok(())
}

impl<F: Scalar> HmmParams<F> {
    pub fn new(a: [[F; 2]; 2], sleep: SleepEmission<F>, wake: WakeEmission<F>, pi: [F; 2]) -> Result<Self, HmmError> {
        check_simplex(&a[0], "transition row for sleep")?;
        check_simplex(&a[1], "transition row for wake")?;
        check_simplex(&pi, "initial distribution")?;
        Ok(HmmParams { a, sleep, wake, pi })
    }

    /// Mean parameters across subjects reported for the reference cohort:
    /// alpha 0.731, mu1 2.486, sigma1 1.248, mu2 4.803, sigma2 0.866, staying
    /// probabilities 0.960 (sleep) and 0.945 (wake), uniform start.
    pub fn cohort_means() -> Self {
        let f = F::lit;
        HmmParams {
            a: [[f(0.960), f(0.040)], [f(0.055), f(0.945)]],
            sleep: SleepEmission::new(f(0.731), f(2.486), f(1.248)).expect("valid"),
            wake: WakeEmission::new(f(4.803), f(0.866)).expect("valid"),
            pi: [f(0.5), f(0.5)],
        }
    }

    pub fn a(&self) -> [[F; 2]; 2] {
        self.a
    }

    pub fn sleep(&self) -> &SleepEmission<F> {
        &self.sleep
    }

    pub fn wake(&self) -> &WakeEmission<F> {
        &self.wake
    }

    pub fn pi(&self) -> [F; 2] {
        self.pi
    }

    #[inline]
    pub fn ln_emission(&self, state: State, obs: F) -> F {
        match state {
            State::Sleep => self.sleep.ln_density(obs),
            State::Wake => self.wake.ln_density(obs),
        }
    }

    #[inline]
    pub(crate) fn ln_emissions(&self, obs: F) -> [F; 2] {
        [self.sleep.ln_density(obs), self.wake.ln_density(obs)]
    }

    pub(crate) fn ln_a(&self) -> [[F; 2]; 2] {
        [[ln_prob(self.a[0][0]), ln_prob(self.a[0][1])], [ln_prob(self.a[1][0]), ln_prob(self.a[1][1])]]
    }

    pub(crate) fn ln_pi(&self) -> [F; 2] {
        [ln_prob(self.pi[0]), ln_prob(self.pi[1])]
    }

    /// Stationary distribution of the chain; uniform when it is not unique.
    pub fn stationary(&self) -> [F; 2] {
        let leave_sleep = self.a[0][1];
        let leave_wake = self.a[1][0];
        let total = leave_sleep + leave_wake;
        if total <= F::zero() {
            return [F::lit(0.5), F::lit(0.5)];
        }
        [leave_wake / total, leave_sleep / total]
    }

    /// Exchanges the roles of the two states. The emission families differ,
    /// so each state's location and scale move to the other family while the
    /// zero weight stays with sleep.
    pub fn swapped(&self) -> Result<Self, HmmError> {
        let sleep = SleepEmission::new(self.sleep.alpha(), self.wake.mu2(), self.wake.sigma2())?;
        let wake = WakeEmission::new(self.sleep.mu1(), self.sleep.sigma1())?;
        Ok(HmmParams {
            a: [[self.a[1][1], self.a[1][0]], [self.a[0][1], self.a[0][0]]],
            sleep,
            wake,
            pi: [self.pi[1], self.pi[0]],
        })
    }

    /// Converts to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Result<HmmParams<G>, HmmError> {
        let c = |x: F| G::lit(x.as_f64());
        let sleep = SleepEmission::new(c(self.sleep.alpha()), c(self.sleep.mu1()), c(self.sleep.sigma1()))?;
        let wake = WakeEmission::new(c(self.wake.mu2()), c(self.wake.sigma2()))?;
        // re-derive complements so rows stay on the simplex after rounding
        let a = [[c(self.a[0][0]), G::one() - c(self.a[0][0])], [G::one() - c(self.a[1][1]), c(self.a[1][1])]];
        let pi = [c(self.pi[0]), G::one() - c(self.pi[0])];
        HmmParams::new(a, sleep, wake, pi)
    }

    /// `key=value` lines with 17 significant digits.
    pub fn to_param_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={:.16e}", v);
        }
        s
    }

    fn entries(&self) -> [(&'static str, f64); 11] {
        [
            ("a11", self.a[0][0].as_f64()),
            ("a12", self.a[0][1].as_f64()),
            ("a21", self.a[1][0].as_f64()),
            ("a22", self.a[1][1].as_f64()),
            ("pi_sleep", self.pi[0].as_f64()),
            ("pi_wake", self.pi[1].as_f64()),
            ("alpha", self.sleep.alpha().as_f64()),
            ("mu1", self.sleep.mu1().as_f64()),
            ("sigma1", self.sleep.sigma1().as_f64()),
            ("mu2", self.wake.mu2().as_f64()),
            ("sigma2", self.wake.sigma2().as_f64()),
        ]
    }

    pub fn from_param_text(text: &str) -> Result<Self, HmmError> {
        const KEYS: [&str; 11] =
            ["a11", "a12", "a21", "a22", "pi_sleep", "pi_wake", "alpha", "mu1", "sigma1", "mu2", "sigma2"];
        let mut vals: [Option<F>; 11] = [None; 11];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| HmmError::ParamFile { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
            let slot = KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| bad(format!("unknown key {:?}", k.trim())))?;
            if vals[slot].is_some() {
                return Err(bad(format!("duplicate key {}", KEYS[slot])));
            }
            let x: f64 = v.trim().parse().map_err(|_| bad(format!("bad number {:?}", v.trim())))?;
            vals[slot] = Some(F::lit(x));
        }
        let mut get = [F::zero(); 11];
        for (i, v) in vals.iter().enumerate() {
            get[i] = v.ok_or_else(|| HmmError::ParamFile { line: 0, msg: format!("missing key {}", KEYS[i]) })?;
        }
        HmmParams::new(
            [[get[0], get[1]], [get[2], get[3]]],
            SleepEmission::new(get[6], get[7], get[8])?,
            WakeEmission::new(get[9], get[10])?,
            [get[4], get[5]],
        )
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), HmmError> {
        let path = path.as_ref();
        fs::write(path, self.to_param_text()).map_err(|e| HmmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, HmmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HmmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_param_text(&text)
    }
}
