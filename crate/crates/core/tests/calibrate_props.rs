//! Calibration harness invariants: monotone run lengths in the threshold,
//! the geometric law of the memoryless baseline, and the dominance of a
//! shift-aware (oracle) CUSUM over the adaptive chart on a matched shift.

mod common;

use std::sync::OnceLock;

use bitbe_core::acusum::{PriorConfig, ResetScope};
use bitbe_core::aggregate::{build_stationary, BuildConfig, CalibrationArtifact, CalibrationTarget};
use bitbe_core::baseline::ShewhartLimits;
use bitbe_core::calibrate::{
    estimate_with, find_h, scenario_params, AcusumChart, Chart, FamilyKind,
    ScenarioConventions, SearchConfig,
};
use bitbe_core::distributions::{oc_law_u1, oc_law_u2, FamilyParams, VIndicator};
use bitbe_core::transform::LabeledZ;

fn ic() -> FamilyParams {
    scenario_params(FamilyKind::Mobe, (5.0, 5.0), false, &ScenarioConventions::default()).unwrap()
}

fn artifact() -> &'static CalibrationArtifact {
    static CELL: OnceLock<CalibrationArtifact> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = BuildConfig {
            burn_in: 30_000,
            table_size: 200_000,
            pool_size: 1_000,
            spacing: 50,
            priors: PriorConfig::default(),
            reset_scope: ResetScope::All,
        };
        build_stationary(&ic(), &cfg, 4242).unwrap()
    })
}

#[test]
fn run_length_is_monotone_in_h() {
    let art = artifact();
    let ic = ic();
    let mut prev = (0.0, 0.0);
    for h in [0.5, 1.0, 2.0, 3.5, 5.0] {
        let res = estimate_with(&ic, &ic, 300, 1_000_000, 515, None, |rng| {
            AcusumChart::from_pool(art, h, rng)
        })
        .unwrap();
        // identical per-replication streams make the comparison pathwise
        assert!(
            res.ats_mean >= prev.0 && res.anos_mean >= prev.1,
            "run length decreased between thresholds: {prev:?} -> ({}, {})",
            res.ats_mean,
            res.anos_mean
        );
        prev = (res.ats_mean, res.anos_mean);
    }
    assert!(prev.1 > 10.0, "largest threshold should give long runs");
}

#[test]
fn shewhart_in_control_run_length_is_geometric() {
    let ic = ic();
    let alpha = 0.01;
    let limits = ShewhartLimits::from_alpha(alpha).unwrap();
    let res = estimate_with(&ic, &ic, 4_000, 1_000_000, 616, None, |_| limits).unwrap();
    let expected = 1.0 / alpha;
    assert!(
        (res.anos_mean - expected).abs() <= 3.0 * res.anos_se,
        "ANOS {:.2} (se {:.2}) vs geometric mean {expected}",
        res.anos_mean,
        res.anos_se
    );
}

/// Non-adaptive CUSUM with the true post-change exponents, used purely as a
/// test oracle: knowing the shift can only help.
#[derive(Clone, Copy)]
struct OracleCusum {
    c: f64,
    h: f64,
    k: [f64; 3],
}

impl Chart for OracleCusum {
    fn step(&mut self, z: &LabeledZ) -> bool {
        let k = self.k[(z.label - 1) as usize];
        self.c = (self.c + k.ln() + (1.0 - k) * z.z).max(0.0);
        self.c > self.h
    }
}

#[test]
fn oracle_cusum_dominates_the_adaptive_chart() {
    let art = artifact();
    let ic = ic();
    let oc = scenario_params(
        FamilyKind::Mobe,
        (2.5, 2.5),
        false,
        &ScenarioConventions::default(),
    )
    .unwrap();
    let k = [
        oc_law_u1(&ic, &oc).unwrap(),
        oc_law_u2(&ic, &oc, VIndicator::X1First).unwrap(),
        oc_law_u2(&ic, &oc, VIndicator::X2First).unwrap(),
    ];

    let cfg = SearchConfig { tol_rel: 0.025, r_coarse: 1_000, r_fine: 4_000, ..Default::default() };
    let target = CalibrationTarget::Ats(200.0);

    let h_adaptive = find_h(art, target, &cfg, 2_024).unwrap();

    // calibrate the oracle to the same in-control time target by bisection
    let mut lo = 0.0f64;
    let mut hi = 30.0f64;
    let mut h_oracle = 0.0;
    for iter in 0..30 {
        let mid = 0.5 * (lo + hi);
        let r = if iter > 5 { 4_000 } else { 1_000 };
        let res = estimate_with(&ic, &ic, r, 200_000, 3_000 + iter, None, |_| OracleCusum {
            c: 0.0,
            h: mid,
            k,
        })
        .unwrap();
        h_oracle = mid;
        if (res.ats_mean - 200.0).abs() / 200.0 <= 0.025 && iter > 5 {
            break;
        }
        if res.ats_mean < 200.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let r = 4_000;
    let adaptive = estimate_with(&ic, &oc, r, 1_000_000, 11, None, |rng| {
        AcusumChart::from_pool(art, h_adaptive, rng)
    })
    .unwrap();
    let oracle = estimate_with(&ic, &oc, r, 1_000_000, 12, None, |_| OracleCusum {
        c: 0.0,
        h: h_oracle,
        k,
    })
    .unwrap();

    let se = (adaptive.ats_se.powi(2) + oracle.ats_se.powi(2)).sqrt();
    assert!(
        oracle.ats_mean <= adaptive.ats_mean + 3.0 * se,
        "oracle ATS {:.2} should not exceed adaptive ATS {:.2} (se {:.2})",
        oracle.ats_mean,
        adaptive.ats_mean,
        se
    );
}
