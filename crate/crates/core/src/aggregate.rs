//! Stationary IC distribution tables and aggregation into `Q_t`.
//!
//! Each of the eight branch statistics has its own in-control distribution,
//! so the branches cannot be compared directly. We approximate each branch's
//! stationary conditional-on-nonzero distribution with an empirical table
//! built from one long in-control run, map the live statistic through the
//! table (probability integral transform), re-express it on the Exp(1) scale
//! as `q = -log(1 - p)`, and chart the maximum over branches.
//!
//! The same run supplies a pool of full bank snapshots used to start
//! monitored streams in steady state.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acusum::{BankState, PriorConfig, ResetScope, COMBO_COUNT};
use crate::distributions::FamilyParams;
use crate::transform::{transform_first, transform_second, ArrivalRank, VIndicator};
use crate::{Error, Result};

/// Sorted sample of nonzero stationary statistic values for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("statistic values are finite"));
        EmpiricalCdf { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Plotting-position probability `rank/(m+1)`, linearly interpolated
    /// between order statistics; always in `[1/(m+1), m/(m+1)]`.
    pub fn pit(&self, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!(
                "pit is defined for positive statistics only, got {c}"
            )));
        }
        let m = self.values.len();
        if m == 0 {
            return Err(Error::Domain("empty table".to_string()));
        }
        let denom = (m + 1) as f64;
        if c < self.values[0] {
            return Ok(1.0 / denom);
        }
        if c >= self.values[m - 1] {
            return Ok(m as f64 / denom);
        }
        // i = number of values <= c, in 1..m
        let i = self.values.partition_point(|&x| x <= c);
        let lo = self.values[i - 1];
        let hi = self.values[i];
        let frac = if hi > lo { (c - lo) / (hi - lo) } else { 0.0 };
        Ok((i as f64 + frac) / denom)
    }

    /// Upper bound on any `q` value this table can produce.
    pub fn q_ceiling(&self) -> f64 {
        ((self.values.len() + 1) as f64).ln()
    }
}

/// Stationary bank snapshots for steady-state initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPool {
    pub snapshots: Vec<BankState>,
    /// Steps between consecutive snapshots.
    pub spacing: u64,
}

impl SnapshotPool {
    pub fn draw(&self, rng: &mut impl Rng) -> BankState {
        self.snapshots[rng.random_range(0..self.snapshots.len())]
    }
}

/// Calibration target the threshold was tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", content = "value", rename_all = "lowercase")]
pub enum CalibrationTarget {
    /// In-control average time to signal.
    Ats(f64),
    /// In-control average number of observations to signal.
    Anos(f64),
}

/// Build metadata recorded alongside the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub ic: FamilyParams,
    pub priors: PriorConfig,
    pub reset_scope: ResetScope,
    pub seed: u64,
    pub burn_in: u64,
    /// Recorded nonzero values per branch table.
    pub table_size: usize,
    /// Snapshots in the pool.
    pub pool_size: usize,
    /// Steps between snapshots.
    pub spacing: u64,
}

/// Everything a monitoring or simulation run needs: tables, snapshot pool,
/// and (once calibrated) thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationArtifact {
    pub meta: ArtifactMeta,
    /// Adaptive-chart threshold on the `Q` scale.
    pub h: Option<f64>,
    /// Per-observation false-alarm probability of the Shewhart baseline.
    pub shewhart_alpha: Option<f64>,
    pub target: Option<CalibrationTarget>,
    pub pool: SnapshotPool,
    pub tables: [EmpiricalCdf; COMBO_COUNT],
}

/// Defaults for calibration-grade artifact builds.
pub struct BuildConfig {
    pub burn_in: u64,
    pub table_size: usize,
    pub pool_size: usize,
    pub spacing: u64,
    pub priors: PriorConfig,
    pub reset_scope: ResetScope,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            burn_in: 100_000,
            table_size: 1_000_000,
            pool_size: 5_000,
            spacing: 100,
            priors: PriorConfig::default(),
            reset_scope: ResetScope::default(),
        }
    }
}

/// Run one long in-control stream through the bank, recording stationary
/// nonzero statistic values per branch and periodic full-state snapshots.
pub fn build_stationary(
    ic: &FamilyParams,
    cfg: &BuildConfig,
    seed: u64,
) -> Result<CalibrationArtifact> {
    cfg.priors.validate()?;
    if cfg.table_size == 0 || cfg.pool_size == 0 || cfg.spacing == 0 {
        return Err(Error::InvalidParam(
            "table_size, pool_size, and spacing must be positive".to_string(),
        ));
    }
    let mut rng = crate::rng::derive_rng(seed, 0);
    let mut bank = BankState::new();
    let mut tables: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.table_size); COMBO_COUNT];
    let mut snapshots = Vec::with_capacity(cfg.pool_size);

    let mut t: u64 = 0;
    let mut vector_index: u64 = 0;
    loop {
        vector_index += 1;
        let sample = ic.sample(&mut rng);
        let v = sample.v();
        let (first, second) = sample.ordered();
        let mut obs = Vec::with_capacity(2);
        obs.push(transform_first(
            ic,
            first,
            v,
            vector_index,
            if v == VIndicator::Tie { ArrivalRank::Tied } else { ArrivalRank::First },
        )?);
        if v != VIndicator::Tie {
            obs.push(transform_second(ic, first, second, v, vector_index)?);
        }
        for z in &obs {
            t += 1;
            bank.update(z, &cfg.priors, cfg.reset_scope);
            if t <= cfg.burn_in {
                continue;
            }
            for (table, state) in tables.iter_mut().zip(bank.states.iter()) {
                if state.c > 0.0 && table.len() < cfg.table_size {
                    table.push(state.c);
                }
            }
            if snapshots.len() < cfg.pool_size && (t - cfg.burn_in) % cfg.spacing == 0 {
                snapshots.push(bank);
            }
        }
        let tables_full = tables.iter().all(|tb| tb.len() >= cfg.table_size);
        if tables_full && snapshots.len() >= cfg.pool_size {
            break;
        }
    }

    let tables: Vec<EmpiricalCdf> = tables.into_iter().map(EmpiricalCdf::from_unsorted).collect();
    let tables: [EmpiricalCdf; COMBO_COUNT] =
        tables.try_into().expect("exactly eight tables");
    Ok(CalibrationArtifact {
        meta: ArtifactMeta {
            ic: *ic,
            priors: cfg.priors,
            reset_scope: cfg.reset_scope,
            seed,
            burn_in: cfg.burn_in,
            table_size: cfg.table_size,
            pool_size: cfg.pool_size,
            spacing: cfg.spacing,
        },
        h: None,
        shewhart_alpha: None,
        target: None,
        pool: SnapshotPool { snapshots, spacing: cfg.spacing },
        tables,
    })
}

impl CalibrationArtifact {
    /// Per-branch `q` values: 0 where the statistic is 0, else
    /// `-log(1 - pit(c))`.
    pub fn q_breakdown(&self, bank: &BankState) -> [f64; COMBO_COUNT] {
        let mut out = [0.0; COMBO_COUNT];
        for ((q, state), table) in out.iter_mut().zip(bank.states.iter()).zip(self.tables.iter()) {
            if state.c > 0.0 {
                let p = table.pit(state.c).expect("c > 0");
                // rounding in 1 - m/(m+1) can push -log(1-p) a hair past the
                // nominal ceiling log(m+1); pin it to the boundary rule
                *q = (-(1.0 - p).ln()).min(table.q_ceiling());
            }
        }
        out
    }

    /// The charting statistic: maximum `q` over the eight branches.
    pub fn q_statistic(&self, bank: &BankState) -> f64 {
        self.q_breakdown(bank)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Upper bound on `Q` from the plotting-position rule.
    pub fn q_ceiling(&self) -> f64 {
        self.tables
            .iter()
            .map(|t| t.q_ceiling())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Artifact file format
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"BTBEART1";

#[derive(Serialize, Deserialize)]
struct ArtifactHeader {
    meta: ArtifactMeta,
    h: Option<f64>,
    shewhart_alpha: Option<f64>,
    target: Option<CalibrationTarget>,
    pool: SnapshotPool,
}

impl CalibrationArtifact {
    /// Write the artifact: magic, JSON header, then the eight sorted tables
    /// as length-prefixed little-endian f64 arrays.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ArtifactHeader {
            meta: self.meta.clone(),
            h: self.h,
            shewhart_alpha: self.shewhart_alpha,
            target: self.target,
            pool: self.pool.clone(),
        };
        let header_bytes =
            serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for table in &self.tables {
            w.write_all(&(table.values.len() as u64).to_le_bytes())?;
            for v in &table.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.save(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a calibration artifact file".to_string()));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let header_len = u64::from_le_bytes(len8) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: ArtifactHeader =
            serde_json::from_slice(&header_bytes).map_err(|e| Error::Format(e.to_string()))?;
        let mut tables = Vec::with_capacity(COMBO_COUNT);
        for _ in 0..COMBO_COUNT {
            r.read_exact(&mut len8)?;
            let n = u64::from_le_bytes(len8) as usize;
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tables.push(EmpiricalCdf { values });
        }
        Ok(CalibrationArtifact {
            meta: header.meta,
            h: header.h,
            shewhart_alpha: header.shewhart_alpha,
            target: header.target,
            pool: header.pool,
            tables: tables.try_into().expect("exactly eight tables"),
        })
    }

    pub fn load_from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}
