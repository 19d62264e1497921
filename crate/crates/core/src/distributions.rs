//! Bivariate time-between-events families: MOBE, MOBW, and Gumbel.
//!
//! For each family this module provides an exact sampler, the in-control
//! conditional CDFs of the order statistics `(X_(1), X_(2))`, and the
//! closed-form out-of-control laws of the transformed variables `U_(1)`,
//! `U_(2)` (all of the form `1 - (1-u)^k`; only the exponent `k` is
//! returned).
//!
//! The samplers are not trusted blindly: the Marshall-Olkin shock
//! construction, the Weibull power transform, and the positive-stable
//! frailty construction are each validated against the stated survival
//! functions by KS tests in the integration suite.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::{Error, Result};

/// Routes `delta >= 1 - DELTA_INDEP_EPS` to the independent Gumbel shortcut;
/// the stable sampler degenerates numerically as `delta -> 1`.
const DELTA_INDEP_EPS: f64 = 1e-9;

/// Which component of a bivariate vector arrives first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VIndicator {
    /// `x1 < x2`: the first component is observed first (`V = 0`).
    X1First,
    /// `x1 > x2`: the second component is observed first (`V = 1`).
    X2First,
    /// `x1 == x2` exactly (`V = 2`).
    Tie,
}

impl VIndicator {
    pub fn as_u8(self) -> u8 {
        match self {
            VIndicator::X1First => 0,
            VIndicator::X2First => 1,
            VIndicator::Tie => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(VIndicator::X1First),
            1 => Ok(VIndicator::X2First),
            2 => Ok(VIndicator::Tie),
            _ => Err(Error::Domain(format!("v must be 0, 1, or 2, got {v}"))),
        }
    }
}

/// One bivariate arrival pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateSample {
    pub x1: f64,
    pub x2: f64,
    /// `x1 == x2` bit-exactly (shared-shock tie).
    pub tied: bool,
}

impl BivariateSample {
    fn new(x1: f64, x2: f64) -> Self {
        BivariateSample { x1, x2, tied: x1 == x2 }
    }

    pub fn v(&self) -> VIndicator {
        if self.tied {
            VIndicator::Tie
        } else if self.x1 < self.x2 {
            VIndicator::X1First
        } else {
            VIndicator::X2First
        }
    }

    /// `(first, second)` order statistics.
    pub fn ordered(&self) -> (f64, f64) {
        if self.x1 <= self.x2 {
            (self.x1, self.x2)
        } else {
            (self.x2, self.x1)
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

/// Marshall-Olkin bivariate exponential rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMobe")]
pub struct MobeParams {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

#[derive(Deserialize)]
struct RawMobe {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

impl TryFrom<RawMobe> for MobeParams {
    type Error = Error;
    fn try_from(r: RawMobe) -> Result<Self> {
        MobeParams::new(r.lambda1, r.lambda2, r.lambda3)
    }
}

impl MobeParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda1.is_finite()) || !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "lambda1 and lambda2 must be positive, got ({lambda1}, {lambda2})"
            )));
        }
        if !(lambda3 >= 0.0 && lambda3.is_finite()) {
            return Err(Error::InvalidParam(format!("lambda3 must be >= 0, got {lambda3}")));
        }
        Ok(MobeParams { lambda1, lambda2, lambda3 })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }

    /// `lambda1 + lambda2 + lambda3`.
    pub fn total(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.lambda3
    }
}

/// Marshall-Olkin bivariate Weibull: MOBE rates plus a common shape `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMobw")]
pub struct MobwParams {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    eta: f64,
}

#[derive(Deserialize)]
struct RawMobw {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    eta: f64,
}

impl TryFrom<RawMobw> for MobwParams {
    type Error = Error;
    fn try_from(r: RawMobw) -> Result<Self> {
        MobwParams::new(r.lambda1, r.lambda2, r.lambda3, r.eta)
    }
}

impl MobwParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, eta: f64) -> Result<Self> {
        let rates = MobeParams::new(lambda1, lambda2, lambda3)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParam(format!("eta must be > 0, got {eta}")));
        }
        Ok(MobwParams {
            lambda1: rates.lambda1,
            lambda2: rates.lambda2,
            lambda3: rates.lambda3,
            eta,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn total(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.lambda3
    }

    fn rates(&self) -> MobeParams {
        MobeParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
        }
    }
}

/// Gumbel bivariate distribution with exponential marginals.
///
/// Survival `exp(-C(x1,x2)^delta)` with
/// `C(x1,x2) = (x1/theta1)^(1/delta) + (x2/theta2)^(1/delta)`;
/// `delta = 1` gives independent components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGumbel")]
pub struct GumbelParams {
    theta1: f64,
    theta2: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawGumbel {
    theta1: f64,
    theta2: f64,
    delta: f64,
}

impl TryFrom<RawGumbel> for GumbelParams {
    type Error = Error;
    fn try_from(r: RawGumbel) -> Result<Self> {
        GumbelParams::new(r.theta1, r.theta2, r.delta)
    }
}

impl GumbelParams {
    pub fn new(theta1: f64, theta2: f64, delta: f64) -> Result<Self> {
        if !(theta1 > 0.0 && theta1.is_finite()) || !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "theta1 and theta2 must be positive, got ({theta1}, {theta2})"
            )));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParam(format!("delta must be in (0, 1], got {delta}")));
        }
        Ok(GumbelParams { theta1, theta2, delta })
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }
    pub fn theta2(&self) -> f64 {
        self.theta2
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `C(x1, x2) = (x1/theta1)^(1/delta) + (x2/theta2)^(1/delta)`.
    pub fn c_fn(&self, x1: f64, x2: f64) -> f64 {
        (x1 / self.theta1).powf(1.0 / self.delta) + (x2 / self.theta2).powf(1.0 / self.delta)
    }

    fn is_independent(&self) -> bool {
        self.delta >= 1.0 - DELTA_INDEP_EPS
    }
}

/// Tagged parameter set for one of the three supported families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum FamilyParams {
    Mobe(MobeParams),
    Mobw(MobwParams),
    Gumbel(GumbelParams),
}

impl FamilyParams {
    pub fn family_name(&self) -> &'static str {
        match self {
            FamilyParams::Mobe(_) => "mobe",
            FamilyParams::Mobw(_) => "mobw",
            FamilyParams::Gumbel(_) => "gumbel",
        }
    }

    /// Marginal means `(E[X1], E[X2])`.
    pub fn marginal_means(&self) -> (f64, f64) {
        match self {
            FamilyParams::Mobe(p) => (
                1.0 / (p.lambda1 + p.lambda3),
                1.0 / (p.lambda2 + p.lambda3),
            ),
            FamilyParams::Mobw(p) => {
                let g = gamma(1.0 + 1.0 / p.eta);
                (
                    g * (p.lambda1 + p.lambda3).powf(-1.0 / p.eta),
                    g * (p.lambda2 + p.lambda3).powf(-1.0 / p.eta),
                )
            }
            FamilyParams::Gumbel(p) => (p.theta1, p.theta2),
        }
    }

    /// Probability that both components are hit by the same shared shock.
    pub fn tie_probability(&self) -> f64 {
        match self {
            FamilyParams::Mobe(p) => p.lambda3 / p.total(),
            FamilyParams::Mobw(p) => p.lambda3 / p.total(),
            FamilyParams::Gumbel(_) => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

fn sample_exp(rate: f64, rng: &mut impl Rng) -> f64 {
    // rate = 0 means the shock never fires
    if rate == 0.0 {
        f64::INFINITY
    } else {
        Exp::new(rate).expect("rate validated").sample(rng)
    }
}

pub fn sample_mobe(p: &MobeParams, rng: &mut impl Rng) -> BivariateSample {
    let e1 = sample_exp(p.lambda1, rng);
    let e2 = sample_exp(p.lambda2, rng);
    let e3 = sample_exp(p.lambda3, rng);
    if e3 < e1 && e3 < e2 {
        // shared shock first: both coordinates take the identical value
        BivariateSample { x1: e3, x2: e3, tied: true }
    } else {
        BivariateSample::new(e1.min(e3), e2.min(e3))
    }
}

pub fn sample_mobw(p: &MobwParams, rng: &mut impl Rng) -> BivariateSample {
    let base = sample_mobe(&p.rates(), rng);
    let inv_eta = 1.0 / p.eta;
    // the power transform is applied to identical inputs for ties, so
    // bit-equality is preserved
    BivariateSample {
        x1: base.x1.powf(inv_eta),
        x2: base.x2.powf(inv_eta),
        tied: base.tied,
    }
}

/// Positive stable variate with Laplace transform `exp(-s^delta)`,
/// `0 < delta < 1` (Kanter / Chambers-Mallows-Stuck form).
fn sample_positive_stable(delta: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let e: f64 = Exp1.sample(rng);
    let pu = PI * u;
    let a = (delta * pu).sin().powf(delta / (1.0 - delta)) * ((1.0 - delta) * pu).sin()
        / pu.sin().powf(1.0 / (1.0 - delta));
    (a / e).powf((1.0 - delta) / delta)
}

pub fn sample_gumbel(p: &GumbelParams, rng: &mut impl Rng) -> BivariateSample {
    if p.is_independent() {
        let e1: f64 = Exp1.sample(rng);
        let e2: f64 = Exp1.sample(rng);
        return BivariateSample::new(p.theta1 * e1, p.theta2 * e2);
    }
    // stable frailty: conditional on W, components are independent
    // exponentials; marginalizing W yields the Gumbel survival function
    let w = sample_positive_stable(p.delta, rng);
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    BivariateSample::new(
        p.theta1 * (e1 / w).powf(p.delta),
        p.theta2 * (e2 / w).powf(p.delta),
    )
}

impl FamilyParams {
    pub fn sample(&self, rng: &mut impl Rng) -> BivariateSample {
        match self {
            FamilyParams::Mobe(p) => sample_mobe(p, rng),
            FamilyParams::Mobw(p) => sample_mobw(p, rng),
            FamilyParams::Gumbel(p) => sample_gumbel(p, rng),
        }
    }
}

// ---------------------------------------------------------------------------
// In-control conditional CDFs
// ---------------------------------------------------------------------------

impl FamilyParams {
    /// Log survival of the first order statistic given `V = v`; the value is
    /// the same for all `v`.
    pub fn ic_log_sf_first(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x must be >= 0, got {x}")));
        }
        Ok(match self {
            FamilyParams::Mobe(p) => -p.total() * x,
            FamilyParams::Mobw(p) => -p.total() * x.powf(p.eta),
            FamilyParams::Gumbel(p) => -p.c_fn(1.0, 1.0).powf(p.delta) * x,
        })
    }

    /// Conditional CDF of `X_(1)` given `V = v`.
    pub fn ic_cdf_first(&self, x: f64, _v: VIndicator) -> Result<f64> {
        Ok(-self.ic_log_sf_first(x)?.exp_m1())
    }

    /// Log survival of the second order statistic at `y`, given the first
    /// arrival `x` and `V = v` (`v` must not be a tie).
    pub fn ic_log_sf_second(&self, y: f64, x: f64, v: VIndicator) -> Result<f64> {
        if v == VIndicator::Tie {
            return Err(Error::Domain(
                "tied vectors have no second observation".to_string(),
            ));
        }
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x must be >= 0, got {x}")));
        }
        if !(y >= x) {
            return Err(Error::Domain(format!("need y >= x, got y = {y}, x = {x}")));
        }
        Ok(match self {
            FamilyParams::Mobe(p) => {
                let rate = match v {
                    VIndicator::X1First => p.lambda2 + p.lambda3,
                    _ => p.lambda1 + p.lambda3,
                };
                rate * (x - y)
            }
            FamilyParams::Mobw(p) => {
                let rate = match v {
                    VIndicator::X1First => p.lambda2 + p.lambda3,
                    _ => p.lambda1 + p.lambda3,
                };
                rate * (x.powf(p.eta) - y.powf(p.eta))
            }
            FamilyParams::Gumbel(p) => {
                // survival = exp(-C^delta + C(1,1)^delta x) * (C / C(x,x))^(delta-1)
                // with C evaluated at (x,y) for V=0 and (y,x) for V=1
                let c = match v {
                    VIndicator::X1First => p.c_fn(x, y),
                    _ => p.c_fn(y, x),
                };
                let cxx = p.c_fn(x, x);
                let c11 = p.c_fn(1.0, 1.0);
                let log_ratio = if c > 0.0 && cxx > 0.0 {
                    (p.delta - 1.0) * (c.ln() - cxx.ln())
                } else {
                    0.0
                };
                // rounding can leave a tiny positive residue at y = x
                (-c.powf(p.delta) + c11.powf(p.delta) * x + log_ratio).min(0.0)
            }
        })
    }

    /// Conditional CDF of `X_(2)` given `X_(1) = x` and `V = v`.
    pub fn ic_cdf_second(&self, y: f64, x: f64, v: VIndicator) -> Result<f64> {
        Ok(-self.ic_log_sf_second(y, x, v)?.exp_m1())
    }
}

// ---------------------------------------------------------------------------
// Out-of-control laws of the transformed variables
// ---------------------------------------------------------------------------

/// Exponent `k1` of the OC law `F(u) = 1 - (1-u)^k1` of `U_(1)` when the
/// in-control transform built from `ic` is applied to draws from `oc`.
pub fn oc_law_u1(ic: &FamilyParams, oc: &FamilyParams) -> Result<f64> {
    match (ic, oc) {
        (FamilyParams::Mobe(a), FamilyParams::Mobe(b)) => Ok(b.total() / a.total()),
        (FamilyParams::Mobw(a), FamilyParams::Mobw(b)) => {
            if a.eta != b.eta {
                return Err(Error::InvalidParam(format!(
                    "shape must not change: ic eta = {}, oc eta = {}",
                    a.eta, b.eta
                )));
            }
            Ok(b.total() / a.total())
        }
        (FamilyParams::Gumbel(a), FamilyParams::Gumbel(b)) => {
            let c11 = a.c_fn(1.0, 1.0).powf(a.delta);
            let d11 = b.c_fn(1.0, 1.0).powf(b.delta);
            Ok(d11 / c11)
        }
        _ => Err(Error::InvalidParam(format!(
            "family mismatch: ic is {}, oc is {}",
            ic.family_name(),
            oc.family_name()
        ))),
    }
}

/// Exponent of the OC law of `U_(2)` given `V = v` (`k2` for `v = 0`, `k3`
/// for `v = 1`). Closed form exists for MOBE, MOBW, and the independent
/// Gumbel case only.
pub fn oc_law_u2(ic: &FamilyParams, oc: &FamilyParams, v: VIndicator) -> Result<f64> {
    if v == VIndicator::Tie {
        return Err(Error::Domain(
            "tied vectors have no second observation".to_string(),
        ));
    }
    match (ic, oc) {
        (FamilyParams::Mobe(a), FamilyParams::Mobe(b)) => Ok(match v {
            VIndicator::X1First => (b.lambda2 + b.lambda3) / (a.lambda2 + a.lambda3),
            _ => (b.lambda1 + b.lambda3) / (a.lambda1 + a.lambda3),
        }),
        (FamilyParams::Mobw(a), FamilyParams::Mobw(b)) => {
            if a.eta != b.eta {
                return Err(Error::InvalidParam(format!(
                    "shape must not change: ic eta = {}, oc eta = {}",
                    a.eta, b.eta
                )));
            }
            Ok(match v {
                VIndicator::X1First => (b.lambda2 + b.lambda3) / (a.lambda2 + a.lambda3),
                _ => (b.lambda1 + b.lambda3) / (a.lambda1 + a.lambda3),
            })
        }
        (FamilyParams::Gumbel(a), FamilyParams::Gumbel(b)) => {
            if a.delta != 1.0 || b.delta != 1.0 {
                return Err(Error::Unsupported(
                    "OC law of U_(2) has no closed form for dependent Gumbel".to_string(),
                ));
            }
            Ok(match v {
                VIndicator::X1First => a.theta2 / b.theta2,
                _ => a.theta1 / b.theta1,
            })
        }
        _ => Err(Error::InvalidParam(format!(
            "family mismatch: ic is {}, oc is {}",
            ic.family_name(),
            oc.family_name()
        ))),
    }
}
