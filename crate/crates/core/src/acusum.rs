//! Eight-branch adaptive CUSUM bank with Bayesian shift estimation.
//!
//! Each branch targets one sign pattern of shifts in the three exponential
//! rates `(k1, k2, k3)` governing the labeled stream. The unknown rate for
//! the current label is estimated from observations since the branch's last
//! reset, through a conjugate Gamma prior clamped away from 1, and plugged
//! into the CUSUM recursion
//! `C_t = max(0, C_{t-1} + log(k) + (1 - k) Z_t)`.
//!
//! The estimate for the current step never includes the current observation:
//! counters absorb `Z_t` only after the statistic has been updated.

use serde::{Deserialize, Serialize};

use crate::transform::LabeledZ;
use crate::{Error, Result};

/// Shift direction for one of the three rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Detect an increase in `k` (transformed mean decreases).
    Up,
    /// Detect a decrease in `k` (transformed mean increases).
    Down,
}

/// One of the eight `(d1, d2, d3)` direction patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectionCombo {
    pub d1: Direction,
    pub d2: Direction,
    pub d3: Direction,
}

pub const COMBO_COUNT: usize = 8;

impl DirectionCombo {
    /// Canonical index: `(+,+,+) = 0` through `(-,-,-) = 7`, with `d1` the
    /// most significant bit and `Down = 1`.
    pub fn index(&self) -> usize {
        let bit = |d: Direction| usize::from(d == Direction::Down);
        bit(self.d1) * 4 + bit(self.d2) * 2 + bit(self.d3)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < COMBO_COUNT);
        let dir = |b: usize| if b == 0 { Direction::Up } else { Direction::Down };
        DirectionCombo {
            d1: dir((i >> 2) & 1),
            d2: dir((i >> 1) & 1),
            d3: dir(i & 1),
        }
    }

    /// All eight combos in canonical order.
    pub fn all() -> impl Iterator<Item = DirectionCombo> {
        (0..COMBO_COUNT).map(DirectionCombo::from_index)
    }

    /// Direction assigned to the given label (1, 2, or 3).
    pub fn direction_for(&self, label: u8) -> Direction {
        match label {
            1 => self.d1,
            2 => self.d2,
            3 => self.d3,
            _ => unreachable!("label is always 1..=3"),
        }
    }
}

impl std::fmt::Display for DirectionCombo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = |d: Direction| if d == Direction::Up { '+' } else { '-' };
        write!(f, "({},{},{})", c(self.d1), c(self.d2), c(self.d3))
    }
}

/// Gamma prior parameters and clamp bounds for the rate estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha_plus: f64,
    pub beta_plus: f64,
    pub alpha_minus: f64,
    pub beta_minus: f64,
    /// Lower clamp for increase-directed estimates (`> 1`).
    pub rho_plus: f64,
    /// Upper clamp for decrease-directed estimates (`< 1`).
    pub rho_minus: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            alpha_plus: 22.05,
            beta_plus: 21.0,
            alpha_minus: 9.5,
            beta_minus: 10.0,
            rho_plus: 1.05,
            rho_minus: 0.95,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_minus < 1.0 && 1.0 < self.rho_plus) {
            return Err(Error::InvalidParam(format!(
                "need rho_minus < 1 < rho_plus, got ({}, {})",
                self.rho_minus, self.rho_plus
            )));
        }
        for (a, b, rho, name) in [
            (self.alpha_plus, self.beta_plus, self.rho_plus, "plus"),
            (self.alpha_minus, self.beta_minus, self.rho_minus, "minus"),
        ] {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidParam(format!("{name} prior must be positive")));
            }
            if (a / b - rho).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "{name} prior mean {} does not equal rho {}",
                    a / b,
                    rho
                )));
            }
        }
        Ok(())
    }
}

/// Which counters reset when a branch statistic hits zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetScope {
    /// All three counters reset: the estimation window is empty right after
    /// a reset.
    #[default]
    All,
    /// Only the counter whose label matches the triggering observation
    /// resets (the literal displayed recursion).
    MatchingLabel,
}

/// Per-branch state: statistic plus per-label counts and sums.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcusumState {
    pub c: f64,
    pub n: [u64; 3],
    pub s: [f64; 3],
}

/// Clamped Bayesian estimate of the rate for `label`, from state that does
/// not yet include the current observation.
pub fn khat(state: &AcusumState, label: u8, dir: Direction, priors: &PriorConfig) -> f64 {
    let j = (label - 1) as usize;
    match dir {
        Direction::Up => {
            let raw = (priors.alpha_plus + state.n[j] as f64) / (priors.beta_plus + state.s[j]);
            raw.max(priors.rho_plus)
        }
        Direction::Down => {
            let raw = (priors.alpha_minus + state.n[j] as f64) / (priors.beta_minus + state.s[j]);
            raw.min(priors.rho_minus)
        }
    }
}

/// One CUSUM step for a single branch.
pub fn update(
    state: &mut AcusumState,
    combo: DirectionCombo,
    z: &LabeledZ,
    priors: &PriorConfig,
    reset_scope: ResetScope,
) {
    let k = khat(state, z.label, combo.direction_for(z.label), priors);
    let c_next = (state.c + k.ln() + (1.0 - k) * z.z).max(0.0);
    state.c = c_next;
    let j = (z.label - 1) as usize;
    match reset_scope {
        ResetScope::All => {
            if c_next == 0.0 {
                state.n = [0; 3];
                state.s = [0.0; 3];
            } else {
                state.n[j] += 1;
                state.s[j] += z.z;
            }
        }
        ResetScope::MatchingLabel => {
            if c_next == 0.0 {
                state.n[j] = 0;
                state.s[j] = 0.0;
            } else {
                state.n[j] += 1;
                state.s[j] += z.z;
            }
        }
    }
}

/// All eight branch states, evolved in lockstep over one `Z` stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BankState {
    pub states: [AcusumState; COMBO_COUNT],
}

impl BankState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Apply one observation to every branch, in canonical combo order.
    pub fn update(&mut self, z: &LabeledZ, priors: &PriorConfig, reset_scope: ResetScope) {
        for (i, state) in self.states.iter_mut().enumerate() {
            update(state, DirectionCombo::from_index(i), z, priors, reset_scope);
        }
    }

    pub fn statistics(&self) -> [f64; COMBO_COUNT] {
        let mut out = [0.0; COMBO_COUNT];
        for (o, s) in out.iter_mut().zip(self.states.iter()) {
            *o = s.c;
        }
        out
    }
}
