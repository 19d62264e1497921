//! Shewhart-style comparator on the transformed stream.
//!
//! A stateless chart on the Exp(1) scale: signal when a single observation
//! falls outside equal-tail limits with total per-observation false-alarm
//! probability `a`. This is a documented stand-in for the referenced
//! real-time Shewhart chart, calibrated to the same in-control target as the
//! adaptive chart.

use serde::{Deserialize, Serialize};

use crate::transform::LabeledZ;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShewhartLimits {
    pub h_lower: f64,
    pub h_upper: f64,
    /// Per-observation false-alarm probability under Exp(1).
    pub alpha: f64,
}

impl ShewhartLimits {
    /// Equal-tail limits: `F(h_lower) = 1 - F(h_upper) = a/2` under Exp(1).
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha must be in (0, 1), got {alpha}"
            )));
        }
        let half = alpha / 2.0;
        Ok(ShewhartLimits {
            h_lower: -(-half).ln_1p(), // -log(1 - a/2)
            h_upper: -half.ln(),
            alpha,
        })
    }

    /// Signal iff the observation is outside the limits.
    pub fn step(&self, z: &LabeledZ) -> bool {
        z.z < self.h_lower || z.z > self.h_upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::ArrivalRank;

    fn zobs(z: f64) -> LabeledZ {
        LabeledZ {
            z,
            label: 1,
            vector_index: 1,
            rank: ArrivalRank::First,
            clamped: false,
        }
    }

    #[test]
    fn limits_are_exp1_quantiles() {
        let lim = ShewhartLimits::from_alpha(0.01).unwrap();
        assert!((lim.h_lower - 0.005012541823544286).abs() < 1e-12);
        assert!((lim.h_upper - 5.298317366548036).abs() < 1e-12);
        // tails are equal
        let f_lo = -(-lim.h_lower).exp_m1();
        let sf_hi = (-lim.h_upper).exp();
        assert!((f_lo - sf_hi).abs() < 1e-15);
        assert!((f_lo + sf_hi - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_rules() {
        let lim = ShewhartLimits::from_alpha(0.01).unwrap();
        assert!(lim.step(&zobs(0.0))); // below the lower limit
        assert!(!lim.step(&zobs(1.0)));
        assert!(lim.step(&zobs(6.0)));
    }

    #[test]
    fn invalid_alpha_rejected() {
        assert!(ShewhartLimits::from_alpha(0.0).is_err());
        assert!(ShewhartLimits::from_alpha(1.0).is_err());
    }
}
