//! Decorrelating transform of the asynchronous bivariate event stream.
//!
//! Each arriving order statistic is pushed through its in-control conditional
//! CDF and then through `-log(1-u)`, producing a stream `Z_t` that is i.i.d.
//! Exp(1) while the process is in control. Every observation carries a label
//! `L_t` in `{1,2,3}`: 1 for a first arrival, 2 for a second arrival with
//! `V = 0`, 3 for a second arrival with `V = 1`. A tied vector emits exactly
//! one label-1 observation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::distributions::FamilyParams;
use crate::{Error, Result};

pub use crate::distributions::VIndicator;

/// Clamp bound on `u`: caps `z` at `-ln(1e-15)` (about 34.5) instead of
/// emitting an infinity when the CDF saturates in floating point.
pub const U_CLAMP_EPS: f64 = 1e-15;

/// Which of the two order statistics an event is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalRank {
    First,
    Second,
    /// Both components arrived as a single tied value.
    Tied,
}

/// One asynchronous arrival in the raw event stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Vector index `i` (1-based).
    pub i: u64,
    pub rank: ArrivalRank,
    /// Raw event time.
    pub x: f64,
    /// Required on `rank = first`; implied for `tied` (2) and `second`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<u8>,
}

/// A transformed observation `Z_t` with its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledZ {
    pub z: f64,
    /// `L_t` in `{1, 2, 3}`.
    pub label: u8,
    /// Originating vector index `i`.
    pub vector_index: u64,
    pub rank: ArrivalRank,
    /// The CDF saturated and `z` was capped.
    pub clamped: bool,
}

fn z_from_log_sf(log_sf: f64) -> (f64, bool) {
    // z = -log(1 - u) = -log_sf; clamp where u would round to 1
    let cap = -U_CLAMP_EPS.ln();
    let z = -log_sf;
    if z > cap {
        (cap, true)
    } else {
        (z.max(0.0), false)
    }
}

/// Classify a complete vector by arrival order.
pub fn classify(x1: f64, x2: f64) -> VIndicator {
    if x1 == x2 {
        VIndicator::Tie
    } else if x1 < x2 {
        VIndicator::X1First
    } else {
        VIndicator::X2First
    }
}

/// Transform a first arrival (label 1). Tied vectors also go through here.
pub fn transform_first(
    ic: &FamilyParams,
    x_first: f64,
    _v: VIndicator,
    vector_index: u64,
    rank: ArrivalRank,
) -> Result<LabeledZ> {
    let (z, clamped) = z_from_log_sf(ic.ic_log_sf_first(x_first)?);
    Ok(LabeledZ { z, label: 1, vector_index, rank, clamped })
}

/// Transform a second arrival (label 2 when `V = 0`, label 3 when `V = 1`).
pub fn transform_second(
    ic: &FamilyParams,
    x_first: f64,
    x_second: f64,
    v: VIndicator,
    vector_index: u64,
) -> Result<LabeledZ> {
    let (z, clamped) = z_from_log_sf(ic.ic_log_sf_second(x_second, x_first, v)?);
    let label = match v {
        VIndicator::X1First => 2,
        VIndicator::X2First => 3,
        VIndicator::Tie => unreachable!("rejected by ic_log_sf_second"),
    };
    Ok(LabeledZ {
        z,
        label,
        vector_index,
        rank: ArrivalRank::Second,
        clamped,
    })
}

/// A vector whose first arrival has been seen but not its second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingVector {
    pub vector_index: u64,
    pub first_value: f64,
    pub v: VIndicator,
}

/// Streaming transformer: feeds raw events in, emits labeled observations.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    pending: HashMap<u64, PendingVector>,
    /// Observations emitted so far (the `t` index of the last emission).
    pub emitted: u64,
    /// Count of clamp-flagged observations, for diagnostics.
    pub clamped: u64,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process one event; returns the emitted observation, if any error-free.
    pub fn step(&mut self, ic: &FamilyParams, ev: &EventRecord) -> Result<LabeledZ> {
        let out = match ev.rank {
            ArrivalRank::First => {
                let v = VIndicator::from_u8(ev.v.ok_or_else(|| {
                    Error::Protocol(format!("event i={} rank=first is missing v", ev.i))
                })?)?;
                if v == VIndicator::Tie {
                    return Err(Error::Protocol(format!(
                        "event i={} has rank=first with v=2; tied vectors must use rank=tied",
                        ev.i
                    )));
                }
                if self.pending.contains_key(&ev.i) {
                    return Err(Error::Protocol(format!(
                        "duplicate first arrival for vector {}",
                        ev.i
                    )));
                }
                let z = transform_first(ic, ev.x, v, ev.i, ArrivalRank::First)?;
                self.pending.insert(
                    ev.i,
                    PendingVector { vector_index: ev.i, first_value: ev.x, v },
                );
                z
            }
            ArrivalRank::Second => {
                let pending = self.pending.remove(&ev.i).ok_or_else(|| {
                    Error::Protocol(format!(
                        "second arrival for vector {} without a pending first",
                        ev.i
                    ))
                })?;
                if ev.x < pending.first_value {
                    self.pending.insert(ev.i, pending);
                    return Err(Error::Protocol(format!(
                        "vector {}: second arrival {} precedes first arrival {}",
                        ev.i, ev.x, pending.first_value
                    )));
                }
                transform_second(ic, pending.first_value, ev.x, pending.v, ev.i)?
            }
            ArrivalRank::Tied => {
                if self.pending.contains_key(&ev.i) {
                    return Err(Error::Protocol(format!(
                        "tied arrival for vector {} after a first arrival",
                        ev.i
                    )));
                }
                transform_first(ic, ev.x, VIndicator::Tie, ev.i, ArrivalRank::Tied)?
            }
        };
        self.emitted += 1;
        if out.clamped {
            self.clamped += 1;
        }
        Ok(out)
    }

    /// Expand a complete vector into its event sequence and transform it.
    /// Emits one observation for a tie, two otherwise.
    pub fn push_vector(
        &mut self,
        ic: &FamilyParams,
        x1: f64,
        x2: f64,
        vector_index: u64,
    ) -> Result<Vec<LabeledZ>> {
        let v = classify(x1, x2);
        if v == VIndicator::Tie {
            let ev = EventRecord { i: vector_index, rank: ArrivalRank::Tied, x: x1, v: None };
            return Ok(vec![self.step(ic, &ev)?]);
        }
        let (first, second) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
        let e1 = EventRecord {
            i: vector_index,
            rank: ArrivalRank::First,
            x: first,
            v: Some(v.as_u8()),
        };
        let e2 = EventRecord { i: vector_index, rank: ArrivalRank::Second, x: second, v: None };
        Ok(vec![self.step(ic, &e1)?, self.step(ic, &e2)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{MobeParams, MobwParams};

    fn mobe(l1: f64, l2: f64, l3: f64) -> FamilyParams {
        FamilyParams::Mobe(MobeParams::new(l1, l2, l3).unwrap())
    }

    #[test]
    fn classify_cases() {
        assert_eq!(classify(3.0, 2.0), VIndicator::X2First);
        assert_eq!(classify(2.0, 3.0), VIndicator::X1First);
        assert_eq!(classify(2.0, 2.0), VIndicator::Tie);
    }

    #[test]
    fn first_transform_mobe_fast_path() {
        let ic = mobe(0.2, 0.2, 0.0);
        let z = transform_first(&ic, 0.0, VIndicator::X1First, 1, ArrivalRank::First).unwrap();
        assert_eq!(z.z, 0.0);
        assert_eq!(z.label, 1);
        let z = transform_first(&ic, 5.0, VIndicator::X1First, 1, ArrivalRank::First).unwrap();
        assert!((z.z - 2.0).abs() < 1e-14); // z = Lambda * x
    }

    #[test]
    fn first_transform_mobw_closed_form() {
        let ic = FamilyParams::Mobw(MobwParams::new(0.0435, 0.0105, 5.78e-8, 1.1677).unwrap());
        let x = 7.3;
        let z = transform_first(&ic, x, VIndicator::X1First, 1, ArrivalRank::First).unwrap();
        let lambda = 0.0435 + 0.0105 + 5.78e-8;
        assert!((z.z - lambda * x.powf(1.1677)).abs() / z.z < 1e-12);
    }

    #[test]
    fn second_transform_mobe_both_branches() {
        let ic = mobe(0.2, 0.2, 0.0);
        let z = transform_second(&ic, 1.0, 6.0, VIndicator::X1First, 1).unwrap();
        assert!((z.z - 1.0).abs() < 1e-14); // (lambda2+lambda3)*(y-x) = 0.2*5
        assert_eq!(z.label, 2);

        let ic = mobe(0.3, 0.2, 0.0);
        let z = transform_second(&ic, 1.0, 2.0, VIndicator::X2First, 1).unwrap();
        assert!((z.z - 0.3).abs() < 1e-14); // (lambda1+lambda3)*1
        assert_eq!(z.label, 3);

        let z = transform_second(&ic, 1.0, 1.0, VIndicator::X1First, 1).unwrap();
        assert_eq!(z.z, 0.0);
    }

    #[test]
    fn generic_composition_matches_log_sf_path() {
        // -log(1 - F(x)) computed through the CDF agrees with the direct
        // log-survival route away from saturation
        let ic = mobe(0.2, 0.3, 0.1);
        for x in [0.1, 1.0, 5.0, 20.0] {
            let u = ic.ic_cdf_first(x, VIndicator::X1First).unwrap();
            let via_cdf = -(1.0 - u).ln();
            let direct =
                transform_first(&ic, x, VIndicator::X1First, 1, ArrivalRank::First).unwrap();
            assert!((via_cdf - direct.z).abs() <= 1e-12 * direct.z.max(1.0));
        }
    }

    #[test]
    fn clamp_caps_z() {
        let ic = mobe(0.2, 0.2, 0.0);
        // Lambda * x = 400 >> cap
        let z = transform_first(&ic, 1000.0, VIndicator::X1First, 1, ArrivalRank::First).unwrap();
        assert!(z.clamped);
        assert!((z.z - (-(1e-15f64).ln())).abs() < 1e-12);
        assert!(z.z.is_finite());
    }

    #[test]
    fn stream_protocol() {
        let ic = mobe(0.2, 0.2, 0.0);
        let mut st = StreamState::new();

        // (x1, x2) = (3, 2) arrives as 2 (V=1) then 3
        let out = st
            .step(&ic, &EventRecord { i: 1, rank: ArrivalRank::First, x: 2.0, v: Some(1) })
            .unwrap();
        assert_eq!(out.label, 1);
        let out = st
            .step(&ic, &EventRecord { i: 1, rank: ArrivalRank::Second, x: 3.0, v: None })
            .unwrap();
        assert_eq!(out.label, 3);

        // tied vector emits exactly one label-1 observation
        let outs = st.push_vector(&ic, 4.0, 4.0, 2).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].label, 1);
        assert_eq!(outs[0].rank, ArrivalRank::Tied);

        // out-of-order second arrival
        let err = st.step(&ic, &EventRecord { i: 9, rank: ArrivalRank::Second, x: 1.0, v: None });
        assert!(matches!(err, Err(Error::Protocol(_))));

        // second value below stored first
        st.step(&ic, &EventRecord { i: 3, rank: ArrivalRank::First, x: 5.0, v: Some(0) })
            .unwrap();
        let err = st.step(&ic, &EventRecord { i: 3, rank: ArrivalRank::Second, x: 4.0, v: None });
        assert!(matches!(err, Err(Error::Protocol(_))));

        // missing v on a first arrival
        let err = st.step(&ic, &EventRecord { i: 4, rank: ArrivalRank::First, x: 1.0, v: None });
        assert!(matches!(err, Err(Error::Protocol(_))));
    }
}
