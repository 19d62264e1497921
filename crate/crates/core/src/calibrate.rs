//! Monte Carlo run-length estimation and control-limit calibration.
//!
//! Replications are independent: each derives its own RNG stream from the
//! master seed and its index, initializes the chart in steady state from the
//! artifact's snapshot pool, generates out-of-control vectors, and records
//! the elapsed clock time and observation count at the first signal.
//!
//! The clock is vector-serial: vector `i` occupies a window of length
//! `X_{i,(2)}`; a signal on the first arrival lands `X_{i,(1)}` into the
//! window, a signal on the second (or a tied) arrival closes it.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::acusum::{BankState, PriorConfig, ResetScope};
use crate::aggregate::{CalibrationArtifact, CalibrationTarget};
use crate::baseline::ShewhartLimits;
use crate::distributions::{
    FamilyParams, GumbelParams, MobeParams, MobwParams, VIndicator,
};
use crate::rng::derive_rng;
use crate::transform::{transform_first, transform_second, ArrivalRank, LabeledZ};
use crate::{Error, Result};

/// Replication cap on observations; hitting it censors the replication.
pub const DEFAULT_OBS_CAP: u64 = 10_000_000;

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

/// A chart consuming the transformed stream one observation at a time.
pub trait Chart {
    /// Process one observation; `true` raises the alarm.
    fn step(&mut self, z: &LabeledZ) -> bool;
}

/// The adaptive CUSUM chart: bank of eight branches aggregated through the
/// artifact's stationary tables.
pub struct AcusumChart<'a> {
    artifact: &'a CalibrationArtifact,
    h: f64,
    bank: BankState,
    priors: PriorConfig,
    reset_scope: ResetScope,
}

impl<'a> AcusumChart<'a> {
    /// Start from an explicit bank state (steady-state snapshot or all-zero).
    pub fn new(artifact: &'a CalibrationArtifact, h: f64, bank: BankState) -> Self {
        AcusumChart {
            artifact,
            h,
            bank,
            priors: artifact.meta.priors,
            reset_scope: artifact.meta.reset_scope,
        }
    }

    /// Start from a uniformly drawn snapshot-pool entry.
    pub fn from_pool(artifact: &'a CalibrationArtifact, h: f64, rng: &mut impl Rng) -> Self {
        let bank = artifact.pool.draw(rng);
        Self::new(artifact, h, bank)
    }

    pub fn bank(&self) -> &BankState {
        &self.bank
    }

    pub fn q(&self) -> f64 {
        self.artifact.q_statistic(&self.bank)
    }
}

impl Chart for AcusumChart<'_> {
    fn step(&mut self, z: &LabeledZ) -> bool {
        self.bank.update(z, &self.priors, self.reset_scope);
        self.artifact.q_statistic(&self.bank) > self.h
    }
}

impl Chart for ShewhartLimits {
    fn step(&mut self, z: &LabeledZ) -> bool {
        ShewhartLimits::step(self, z)
    }
}

/// Which chart a simulation or monitoring run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartChoice {
    Acusum,
    Shewhart,
}

// ---------------------------------------------------------------------------
// Single replication
// ---------------------------------------------------------------------------

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    /// Elapsed clock time at the signal (or at the cap).
    pub time: f64,
    /// Observations consumed at the signal (or the cap).
    pub obs: u64,
    pub censored: bool,
}

/// Generate vectors from `oc`, transform them under `ic`, and run `chart`
/// until it signals or `cap_obs` observations have been consumed.
pub fn run_once<C: Chart>(
    ic: &FamilyParams,
    oc: &FamilyParams,
    chart: &mut C,
    rng: &mut impl Rng,
    cap_obs: u64,
) -> Result<RunOutcome> {
    let mut completed_time = 0.0;
    let mut obs: u64 = 0;
    let mut vector_index: u64 = 0;
    loop {
        vector_index += 1;
        let sample = oc.sample(rng);
        let v = sample.v();
        let (first, second) = sample.ordered();

        let rank = if v == VIndicator::Tie { ArrivalRank::Tied } else { ArrivalRank::First };
        let z1 = transform_first(ic, first, v, vector_index, rank)?;
        obs += 1;
        if chart.step(&z1) {
            // a tied observation closes the whole window
            let landed = if v == VIndicator::Tie { second } else { first };
            return Ok(RunOutcome { time: completed_time + landed, obs, censored: false });
        }
        if obs >= cap_obs {
            return Ok(RunOutcome {
                time: completed_time + if v == VIndicator::Tie { second } else { first },
                obs,
                censored: true,
            });
        }

        if v != VIndicator::Tie {
            let z2 = transform_second(ic, first, second, v, vector_index)?;
            obs += 1;
            if chart.step(&z2) {
                return Ok(RunOutcome { time: completed_time + second, obs, censored: false });
            }
            if obs >= cap_obs {
                return Ok(RunOutcome { time: completed_time + second, obs, censored: true });
            }
        }
        completed_time += second;
    }
}

// ---------------------------------------------------------------------------
// Replication ensembles
// ---------------------------------------------------------------------------

/// Mean/SE summary over independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthResult {
    pub ats_mean: f64,
    pub ats_se: f64,
    pub anos_mean: f64,
    pub anos_se: f64,
    pub replications: u64,
    pub censored: u64,
    /// Set when more than 1% of replications were censored.
    pub warning: Option<String>,
}

impl RunLengthResult {
    fn from_outcomes(outcomes: &[RunOutcome]) -> Self {
        let r = outcomes.len() as f64;
        let mean = |f: &dyn Fn(&RunOutcome) -> f64| outcomes.iter().map(|o| f(o)).sum::<f64>() / r;
        let ats_mean = mean(&|o| o.time);
        let anos_mean = mean(&|o| o.obs as f64);
        let var = |f: &dyn Fn(&RunOutcome) -> f64, m: f64| {
            outcomes.iter().map(|o| (f(o) - m).powi(2)).sum::<f64>() / (r - 1.0).max(1.0)
        };
        let censored = outcomes.iter().filter(|o| o.censored).count() as u64;
        let warning = if censored as f64 > 0.01 * r {
            Some(format!(
                "{censored} of {} replications hit the observation cap; means are biased low",
                outcomes.len()
            ))
        } else {
            None
        };
        RunLengthResult {
            ats_mean,
            ats_se: (var(&|o| o.time, ats_mean) / r).sqrt(),
            anos_mean,
            anos_se: (var(&|o| o.obs as f64, anos_mean) / r).sqrt(),
            replications: outcomes.len() as u64,
            censored,
            warning,
        }
    }

    pub fn metric(&self, target: CalibrationTarget) -> f64 {
        match target {
            CalibrationTarget::Ats(_) => self.ats_mean,
            CalibrationTarget::Anos(_) => self.anos_mean,
        }
    }

    pub fn metric_se(&self, target: CalibrationTarget) -> f64 {
        match target {
            CalibrationTarget::Ats(_) => self.ats_se,
            CalibrationTarget::Anos(_) => self.anos_se,
        }
    }
}

/// Run `r` independent replications of an arbitrary chart. The chart factory
/// receives the replication's own RNG (for steady-state initialization).
/// Results are reduced in replication order, so they are independent of the
/// parallelism degree.
pub fn estimate_with<C, F>(
    ic: &FamilyParams,
    oc: &FamilyParams,
    r: u64,
    cap_obs: u64,
    master_seed: u64,
    jobs: Option<usize>,
    make_chart: F,
) -> Result<RunLengthResult>
where
    C: Chart,
    F: Fn(&mut ChaCha12Rng) -> C + Sync,
{
    if r < 1 {
        return Err(Error::InvalidParam("need at least one replication".to_string()));
    }
    let run = |rep: u64| -> Result<RunOutcome> {
        let mut rng = derive_rng(master_seed, rep);
        let mut chart = make_chart(&mut rng);
        run_once(ic, oc, &mut chart, &mut rng, cap_obs)
    };
    let outcomes: Vec<RunOutcome> = match jobs {
        Some(1) => (0..r).map(run).collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Calibration(e.to_string()))?
            .install(|| (0..r).into_par_iter().map(run).collect::<Result<_>>())?,
        None => (0..r).into_par_iter().map(run).collect::<Result<_>>()?,
    };
    Ok(RunLengthResult::from_outcomes(&outcomes))
}

/// Run-length estimate for one of the two built-in charts, started in steady
/// state from the artifact pool (the Shewhart baseline is stateless).
pub fn estimate_run_length(
    artifact: &CalibrationArtifact,
    oc: &FamilyParams,
    chart: ChartChoice,
    r: u64,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<RunLengthResult> {
    let ic = &artifact.meta.ic;
    match chart {
        ChartChoice::Acusum => {
            let h = artifact.h.ok_or_else(|| {
                Error::Calibration("artifact has no calibrated threshold h".to_string())
            })?;
            estimate_with(ic, oc, r, DEFAULT_OBS_CAP, master_seed, jobs, |rng| {
                AcusumChart::from_pool(artifact, h, rng)
            })
        }
        ChartChoice::Shewhart => {
            let alpha = artifact.shewhart_alpha.ok_or_else(|| {
                Error::Calibration("artifact has no calibrated Shewhart alpha".to_string())
            })?;
            let limits = ShewhartLimits::from_alpha(alpha)?;
            estimate_with(ic, oc, r, DEFAULT_OBS_CAP, master_seed, jobs, |_| limits)
        }
    }
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

/// Knobs for the bisection search.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub tol_rel: f64,
    pub r_coarse: u64,
    pub r_fine: u64,
    pub max_iter: u32,
    pub jobs: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tol_rel: 0.02,
            r_coarse: 2_000,
            r_fine: 10_000,
            max_iter: 40,
            jobs: None,
        }
    }
}

/// Empirical per-observation clock scale of the in-control stream, used to
/// translate a time target into an observation budget for capping.
fn mean_obs_time(ic: &FamilyParams, seed: u64) -> (f64, f64) {
    let mut rng = derive_rng(seed, u64::MAX);
    let n = 2_000;
    let mut total_time = 0.0;
    let mut total_obs = 0u64;
    for _ in 0..n {
        let s = ic.sample(&mut rng);
        let (_, second) = s.ordered();
        total_time += second;
        total_obs += if s.tied { 1 } else { 2 };
    }
    (total_time / total_obs as f64, total_obs as f64 / n as f64)
}

/// Generic monotone bisection on a noisy Monte Carlo metric. `eval` must be
/// (stochastically) nondecreasing in its argument.
fn bisect_threshold<E>(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    cfg: &SearchConfig,
    mut eval: E,
) -> Result<f64>
where
    E: FnMut(f64, u64, u32) -> Result<(f64, f64, f64)>, // (metric, se, censored_frac)
{
    // the search must start below the target at the lower end
    let (m_lo, _, _) = eval(lo, cfg.r_coarse, 0)?;
    if m_lo >= target {
        return Err(Error::Calibration(format!(
            "target {target} is not bracketed: metric at the lower end is already {m_lo:.3}"
        )));
    }
    let mut best: Option<(f64, f64, f64)> = None; // (x, metric, se)
    for iter in 1..=cfg.max_iter {
        let mid = 0.5 * (lo + hi);
        let fine = iter > 6;
        let r = if fine { cfg.r_fine } else { cfg.r_coarse };
        let (m, se, cens) = eval(mid, r, iter)?;
        if cens > 0.5 {
            // effectively unreachable at this threshold
            hi = mid;
            continue;
        }
        if fine {
            let err = (m - target).abs() / target;
            if best.map_or(true, |(_, bm, _)| (bm - target).abs() > (m - target).abs()) {
                best = Some((mid, m, se));
            }
            if err <= cfg.tol_rel {
                return Ok(mid);
            }
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / hi.abs().max(1.0) < 1e-12 {
            break;
        }
    }
    match best {
        Some((x, m, se)) if (m - target).abs() <= (cfg.tol_rel * target).max(3.0 * se) => Ok(x),
        Some((_, m, se)) => Err(Error::Calibration(format!(
            "bisection did not resolve target {target} (closest {m:.3}, se {se:.3}); increase replications"
        ))),
        None => Err(Error::Calibration(format!(
            "target {target} is not reachable within the search interval"
        ))),
    }
}

/// Calibrate the adaptive-chart threshold `h` so the in-control metric hits
/// the target. Returns `h`.
pub fn find_h(
    artifact: &CalibrationArtifact,
    target: CalibrationTarget,
    cfg: &SearchConfig,
    master_seed: u64,
) -> Result<f64> {
    let ic = &artifact.meta.ic;
    let (time_per_obs, _) = mean_obs_time(ic, master_seed);
    let target_obs = match target {
        CalibrationTarget::Ats(t) => t / time_per_obs,
        CalibrationTarget::Anos(t) => t,
    };
    let target_value = match target {
        CalibrationTarget::Ats(t) | CalibrationTarget::Anos(t) => t,
    };
    if !(target_value > 0.0) {
        return Err(Error::Calibration("target must be positive".to_string()));
    }
    let cap = ((50.0 * target_obs) as u64).clamp(10_000, DEFAULT_OBS_CAP);
    bisect_threshold(0.0, artifact.q_ceiling(), target_value, cfg, |h, r, iter| {
        let res = estimate_with(ic, ic, r, cap, master_seed ^ (iter as u64) << 32, cfg.jobs, |rng| {
            AcusumChart::from_pool(artifact, h, rng)
        })?;
        Ok((
            res.metric(target),
            res.metric_se(target),
            res.censored as f64 / res.replications as f64,
        ))
    })
}

/// Calibrate the Shewhart baseline's per-observation false-alarm probability
/// to the same kind of in-control target. Returns `alpha`.
pub fn find_shewhart_alpha(
    artifact: &CalibrationArtifact,
    target: CalibrationTarget,
    cfg: &SearchConfig,
    master_seed: u64,
) -> Result<f64> {
    let ic = &artifact.meta.ic;
    let (time_per_obs, _) = mean_obs_time(ic, master_seed);
    let target_obs = match target {
        CalibrationTarget::Ats(t) => t / time_per_obs,
        CalibrationTarget::Anos(t) => t,
    };
    let target_value = match target {
        CalibrationTarget::Ats(t) | CalibrationTarget::Anos(t) => t,
    };
    let cap = ((50.0 * target_obs) as u64).clamp(10_000, DEFAULT_OBS_CAP);
    // bisect on x = -log(alpha): run length grows with x
    let x = bisect_threshold(
        std::f64::consts::LN_2,
        (target_obs.max(4.0) * 1e4).ln(),
        target_value,
        cfg,
        |x, r, iter| {
            let limits = ShewhartLimits::from_alpha((-x).exp())?;
            let res = estimate_with(
                ic,
                ic,
                r,
                cap,
                master_seed ^ (iter as u64) << 32,
                cfg.jobs,
                |_| limits,
            )?;
            Ok((
                res.metric(target),
                res.metric_se(target),
                res.censored as f64 / res.replications as f64,
            ))
        },
    )?;
    Ok((-x).exp())
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// The three supported family kinds (parameters to be derived from means).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Mobe,
    Mobw,
    Gumbel,
}

/// Documented substitutes for scenario parameters that the source tables do
/// not pin down: shared-shock share for dependent Marshall-Olkin cases, the
/// Weibull shape, and the dependent Gumbel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConventions {
    pub dependence: f64,
    pub eta: f64,
    pub gumbel_delta: f64,
}

impl Default for ScenarioConventions {
    fn default() -> Self {
        ScenarioConventions { dependence: 0.5, eta: 1.5, gumbel_delta: 0.5 }
    }
}

/// Derive family parameters from target marginal means.
///
/// Independent cases are fully determined. Dependent Marshall-Olkin cases
/// split the total rates so the smaller total contributes the fraction
/// `dependence` as the shared shock; the dependent Gumbel case uses the
/// configured `gumbel_delta`.
pub fn scenario_params(
    kind: FamilyKind,
    means: (f64, f64),
    dependent: bool,
    conv: &ScenarioConventions,
) -> Result<FamilyParams> {
    let (m1, m2) = means;
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::InvalidParam(format!("means must be positive, got {means:?}")));
    }
    let marshall_olkin = |r1: f64, r2: f64| -> Result<(f64, f64, f64)> {
        if dependent {
            let l3 = conv.dependence * r1.min(r2);
            let l1 = r1 - l3;
            let l2 = r2 - l3;
            if l1 <= 0.0 || l2 <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "infeasible rates for means {means:?} at dependence {}",
                    conv.dependence
                )));
            }
            Ok((l1, l2, l3))
        } else {
            Ok((r1, r2, 0.0))
        }
    };
    let params = match kind {
        FamilyKind::Mobe => {
            let (l1, l2, l3) = marshall_olkin(1.0 / m1, 1.0 / m2)?;
            FamilyParams::Mobe(MobeParams::new(l1, l2, l3)?)
        }
        FamilyKind::Mobw => {
            let g = gamma(1.0 + 1.0 / conv.eta);
            let (l1, l2, l3) = marshall_olkin((g / m1).powf(conv.eta), (g / m2).powf(conv.eta))?;
            FamilyParams::Mobw(MobwParams::new(l1, l2, l3, conv.eta)?)
        }
        FamilyKind::Gumbel => {
            let delta = if dependent { conv.gumbel_delta } else { 1.0 };
            FamilyParams::Gumbel(GumbelParams::new(m1, m2, delta)?)
        }
    };
    // the derivation must reproduce the declared means
    let (got1, got2) = params.marginal_means();
    if (got1 - m1).abs() > 1e-9 * m1 || (got2 - m2).abs() > 1e-9 * m2 {
        return Err(Error::InvalidParam(format!(
            "derived parameters imply means ({got1}, {got2}), expected {means:?}"
        )));
    }
    Ok(params)
}

/// One table row: an in-control regime and a shifted regime of the same
/// family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u8,
    pub ic: FamilyParams,
    pub oc: FamilyParams,
    pub ic_means: (f64, f64),
    pub oc_means: (f64, f64),
}

impl Scenario {
    pub fn from_means(
        kind: FamilyKind,
        id: u8,
        ic_means: (f64, f64),
        oc_means: (f64, f64),
        dependent: bool,
        conv: &ScenarioConventions,
    ) -> Result<Self> {
        Ok(Scenario {
            id,
            ic: scenario_params(kind, ic_means, dependent, conv)?,
            oc: scenario_params(kind, oc_means, dependent, conv)?,
            ic_means,
            oc_means,
        })
    }

    pub fn is_ic_row(&self) -> bool {
        self.ic == self.oc
    }
}
