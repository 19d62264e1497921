//! `bitbe`: build calibration artifacts, tune control limits, reproduce the
//! simulation tables, transform raw event streams, and monitor live data.
//!
//! Exit codes: 0 = clean (no alarm), 2 = alarm raised, 1 = any error.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use bitbe_core::acusum::{BankState, PriorConfig, ResetScope};
use bitbe_core::aggregate::{
    build_stationary, BuildConfig, CalibrationArtifact, CalibrationTarget,
};
use bitbe_core::baseline::ShewhartLimits;
use bitbe_core::calibrate::{
    estimate_run_length, find_h, find_shewhart_alpha, scenario_params, ChartChoice, FamilyKind,
    ScenarioConventions, SearchConfig,
};
use bitbe_core::distributions::{FamilyParams, VIndicator};
use bitbe_core::rng::derive_rng;
use bitbe_core::transform::{ArrivalRank, EventRecord, StreamState};

#[derive(Parser)]
#[command(name = "bitbe", version, about = "Bivariate time-between-events monitoring")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the stationary tables and snapshot pool for an in-control model
    Build(BuildArgs),
    /// Calibrate control limits against an in-control target
    Calibrate(CalibrateArgs),
    /// Estimate run lengths for a shifted regime by Monte Carlo
    Simulate(SimulateArgs),
    /// Estimate a whole table of shifted regimes for both charts
    Table(TableArgs),
    /// Batch-transform raw events into the labeled observation stream
    Transform(TransformArgs),
    /// Monitor an event stream and report alarms
    Monitor(MonitorArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ChartArg {
    Acusum,
    Shewhart,
}

impl From<ChartArg> for ChartChoice {
    fn from(c: ChartArg) -> ChartChoice {
        match c {
            ChartArg::Acusum => ChartChoice::Acusum,
            ChartArg::Shewhart => ChartChoice::Shewhart,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ResetScopeArg {
    All,
    MatchingLabel,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Ndjson,
    Csv,
}

/// Resolve the master seed: an explicit flag wins, otherwise draw one from
/// OS entropy and record it on stderr so the run stays reproducible.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::rng().random();
            eprintln!("seed: {s} (from OS entropy; pass --seed {s} to reproduce)");
            s
        }
    }
}

fn read_params(path: &Path) -> Result<FamilyParams> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading parameter file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing parameter file {}", path.display()))
}

fn load_artifact(path: &Path) -> Result<CalibrationArtifact> {
    CalibrationArtifact::load_from_path(path)
        .with_context(|| format!("loading artifact {}", path.display()))
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BuildArgs {
    /// In-control family parameters (JSON: {"family": ..., "params": ...})
    #[arg(long)]
    params: PathBuf,
    /// Output artifact path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    burn_in: u64,
    /// Recorded nonzero statistic values per branch table
    #[arg(long, default_value_t = 1_000_000)]
    table_size: usize,
    /// Stationary snapshots kept for steady-state initialization
    #[arg(long, default_value_t = 5_000)]
    pool_size: usize,
    /// Observations between snapshots
    #[arg(long, default_value_t = 100)]
    spacing: u64,
    #[arg(long, value_enum, default_value_t = ResetScopeArg::All)]
    reset_scope: ResetScopeArg,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_build(args: BuildArgs) -> Result<ExitCode> {
    let ic = read_params(&args.params)?;
    let seed = resolve_seed(args.seed);
    let cfg = BuildConfig {
        burn_in: args.burn_in,
        table_size: args.table_size,
        pool_size: args.pool_size,
        spacing: args.spacing,
        priors: PriorConfig::default(),
        reset_scope: match args.reset_scope {
            ResetScopeArg::All => ResetScope::All,
            ResetScopeArg::MatchingLabel => ResetScope::MatchingLabel,
        },
    };
    let artifact = build_stationary(&ic, &cfg, seed)?;
    artifact.save_to_path(&args.out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&artifact.meta).expect("metadata serializes")
    );
    eprintln!("artifact written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// In-control average time to signal target
    #[arg(long, conflicts_with = "target_anos")]
    target_ats: Option<f64>,
    /// In-control average observation count target (ARL on observations)
    #[arg(long)]
    target_anos: Option<f64>,
    /// Chart to calibrate; both when omitted
    #[arg(long, value_enum)]
    chart: Option<ChartArg>,
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    #[arg(long, default_value_t = 2_000)]
    r_coarse: u64,
    #[arg(long, default_value_t = 10_000)]
    r_fine: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    let mut artifact = load_artifact(&args.artifact)?;
    let target = match (args.target_ats, args.target_anos) {
        (Some(t), None) => CalibrationTarget::Ats(t),
        (None, Some(t)) => CalibrationTarget::Anos(t),
        _ => bail!("provide exactly one of --target-ats and --target-anos"),
    };
    let seed = resolve_seed(args.seed);
    let cfg = SearchConfig {
        tol_rel: args.tol,
        r_coarse: args.r_coarse,
        r_fine: args.r_fine,
        max_iter: 40,
        jobs: args.jobs,
    };
    let both = args.chart.is_none();
    if both || matches!(args.chart, Some(ChartArg::Acusum)) {
        let h = find_h(&artifact, target, &cfg, seed)?;
        artifact.h = Some(h);
        println!("h: {h}");
    }
    if both || matches!(args.chart, Some(ChartArg::Shewhart)) {
        let alpha = find_shewhart_alpha(&artifact, target, &cfg, seed ^ 0x5e)?;
        artifact.shewhart_alpha = Some(alpha);
        println!("shewhart_alpha: {alpha}");
    }
    artifact.target = Some(target);
    artifact.save_to_path(&args.artifact)?;
    eprintln!("artifact updated: {}", args.artifact.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Shifted-regime parameters; the in-control model when omitted
    #[arg(long)]
    oc: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ChartArg::Acusum)]
    chart: ChartArg,
    #[arg(short, long, default_value_t = 2_000)]
    replications: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the generated event stream of replication 0 as NDJSON
    /// (requires --replications 1)
    #[arg(long)]
    emit_events: Option<PathBuf>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let artifact = load_artifact(&args.artifact)?;
    let oc = match &args.oc {
        Some(p) => read_params(p)?,
        None => artifact.meta.ic,
    };
    if args.replications == 0 {
        bail!("--replications must be at least 1");
    }
    let seed = resolve_seed(args.seed);
    if let Some(path) = &args.emit_events {
        if args.replications != 1 {
            bail!("--emit-events requires --replications 1");
        }
        emit_replication_events(&artifact, &oc, seed, path)?;
    }
    let res = estimate_run_length(
        &artifact,
        &oc,
        args.chart.into(),
        args.replications,
        seed,
        args.jobs,
    )?;
    println!("{}", serde_json::to_string_pretty(&res).expect("result serializes"));
    Ok(ExitCode::SUCCESS)
}

/// Regenerate the vector stream replication 0 would see and write it as an
/// event file. The draw order must match the estimation harness exactly: one
/// snapshot draw first, then the vector stream.
fn emit_replication_events(
    artifact: &CalibrationArtifact,
    oc: &FamilyParams,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut rng = derive_rng(seed, 0);
    // the estimation harness consumes a snapshot draw before sampling
    let _ = artifact.pool.draw(&mut rng);
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    // a generous horizon; monitoring stops at the alarm anyway
    for i in 1..=50_000u64 {
        let s = oc.sample(&mut rng);
        let v = s.v();
        let (first, second) = s.ordered();
        if v == VIndicator::Tie {
            let ev = EventRecord { i, rank: ArrivalRank::Tied, x: first, v: None };
            serde_json::to_writer(&mut w, &ev)?;
            w.write_all(b"\n")?;
        } else {
            let ev = EventRecord { i, rank: ArrivalRank::First, x: first, v: Some(v.as_u8()) };
            serde_json::to_writer(&mut w, &ev)?;
            w.write_all(b"\n")?;
            let ev = EventRecord { i, rank: ArrivalRank::Second, x: second, v: None };
            serde_json::to_writer(&mut w, &ev)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// table
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct ScenarioFile {
    family: FamilyKind,
    #[serde(default)]
    dependent: bool,
    scenario: u8,
    ic_means: (f64, f64),
    /// Shifted mean pairs; the in-control row is always included first
    rows: Vec<(f64, f64)>,
    #[serde(default)]
    conventions: Option<ScenarioConventions>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Scenario description (JSON)
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(short, long, default_value_t = 2_000)]
    replications: u64,
    /// Also write the table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_table(args: TableArgs) -> Result<ExitCode> {
    if args.replications == 0 {
        bail!("--replications must be at least 1");
    }
    let artifact = load_artifact(&args.artifact)?;
    let text = std::fs::read_to_string(&args.scenarios)
        .with_context(|| format!("reading scenario file {}", args.scenarios.display()))?;
    let sf: ScenarioFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario file {}", args.scenarios.display()))?;
    let conv = sf.conventions.unwrap_or_default();
    let ic = scenario_params(sf.family, sf.ic_means, sf.dependent, &conv)?;
    if ic != artifact.meta.ic {
        bail!(
            "scenario in-control model {:?} does not match the artifact's {:?}",
            ic,
            artifact.meta.ic
        );
    }
    if artifact.h.is_none() || artifact.shewhart_alpha.is_none() {
        bail!("artifact is not calibrated for both charts; run `bitbe calibrate` first");
    }
    let seed = resolve_seed(args.seed);

    let mut rows = Vec::new();
    let mut all_means = vec![sf.ic_means];
    all_means.extend(sf.rows.iter().cloned());
    for (idx, means) in all_means.iter().enumerate() {
        let oc = scenario_params(sf.family, *means, sf.dependent, &conv)?;
        for chart in [ChartChoice::Acusum, ChartChoice::Shewhart] {
            let res = estimate_run_length(
                &artifact,
                &oc,
                chart,
                args.replications,
                seed.wrapping_add(1_000 * idx as u64),
                args.jobs,
            )?;
            if let Some(w) = &res.warning {
                eprintln!("warning ({chart:?} at {means:?}): {w}");
            }
            rows.push((sf.scenario, *means, chart, res));
        }
    }

    // aligned text table on stdout
    println!(
        "{:<9} {:<14} {:<9} {:>10} {:>8} {:>10} {:>8}",
        "scenario", "means", "chart", "ats", "se", "anos", "se"
    );
    for (sc, means, chart, res) in &rows {
        println!(
            "{:<9} {:<14} {:<9} {:>10.2} {:>8.2} {:>10.2} {:>8.2}",
            sc,
            format!("({}, {})", means.0, means.1),
            match chart {
                ChartChoice::Acusum => "acusum",
                ChartChoice::Shewhart => "shewhart",
            },
            res.ats_mean,
            res.ats_se,
            res.anos_mean,
            res.anos_se
        );
    }

    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["scenario", "mean1", "mean2", "chart", "ats", "ats_se", "anos", "anos_se"])?;
        for (sc, means, chart, res) in &rows {
            w.write_record([
                sc.to_string(),
                means.0.to_string(),
                means.1.to_string(),
                match chart {
                    ChartChoice::Acusum => "acusum".to_string(),
                    ChartChoice::Shewhart => "shewhart".to_string(),
                },
                res.ats_mean.to_string(),
                res.ats_se.to_string(),
                res.anos_mean.to_string(),
                res.anos_se.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// event input (transform / monitor)
// ---------------------------------------------------------------------------

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        None => Box::new(BufReader::new(io::stdin())),
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
    })
}

/// Read events in either format, invoking `sink` per event. CSV rows hold a
/// complete vector (columns x1,x2) and are split into arrival-ordered events.
fn for_each_event(
    input: Box<dyn BufRead>,
    format: InputFormat,
    mut sink: impl FnMut(EventRecord) -> Result<bool>,
) -> Result<()> {
    match format {
        InputFormat::Ndjson => {
            for (lineno, line) in input.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev: EventRecord = serde_json::from_str(&line)
                    .with_context(|| format!("line {}: bad event record", lineno + 1))?;
                if !sink(ev)? {
                    return Ok(());
                }
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
            let headers = rdr.headers()?.clone();
            let x1_idx = headers.iter().position(|h| h.trim() == "x1");
            let x2_idx = headers.iter().position(|h| h.trim() == "x2");
            let (x1_idx, x2_idx) = match (x1_idx, x2_idx) {
                (Some(a), Some(b)) => (a, b),
                _ => bail!("CSV input needs x1 and x2 columns"),
            };
            for (rowno, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let parse = |idx: usize| -> Result<f64> {
                    rec.get(idx)
                        .with_context(|| format!("row {}: missing column", rowno + 1))?
                        .trim()
                        .parse::<f64>()
                        .with_context(|| format!("row {}: bad number", rowno + 1))
                };
                let (x1, x2) = (parse(x1_idx)?, parse(x2_idx)?);
                let i = rowno as u64 + 1;
                if x1 == x2 {
                    if !sink(EventRecord { i, rank: ArrivalRank::Tied, x: x1, v: None })? {
                        return Ok(());
                    }
                    continue;
                }
                let (first, second, v) =
                    if x1 < x2 { (x1, x2, 0u8) } else { (x2, x1, 1u8) };
                if !sink(EventRecord { i, rank: ArrivalRank::First, x: first, v: Some(v) })? {
                    return Ok(());
                }
                if !sink(EventRecord { i, rank: ArrivalRank::Second, x: second, v: None })? {
                    return Ok(());
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TransformArgs {
    /// In-control family parameters (JSON)
    #[arg(long)]
    params: PathBuf,
    /// Event input; standard input when omitted
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Ndjson)]
    format: InputFormat,
    /// Output; standard output when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_transform(args: TransformArgs) -> Result<ExitCode> {
    let ic = read_params(&args.params)?;
    let input = open_input(args.input.as_deref())?;
    let mut out = open_output(args.output.as_deref())?;
    let mut state = StreamState::new();
    let mut t = 0u64;
    for_each_event(input, args.format, |ev| {
        let z = state.step(&ic, &ev)?;
        t += 1;
        writeln!(out, "{{\"t\":{},\"z\":{},\"label\":{}}}", t, z.z, z.label)?;
        Ok(true)
    })?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Optional in-control parameters to cross-check against the artifact
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ChartArg::Acusum)]
    chart: ChartArg,
    /// Override the calibrated threshold
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Ndjson)]
    format: InputFormat,
    /// Stop at the first alarm instead of monitoring through it
    #[arg(long)]
    stop_on_alarm: bool,
    /// Start from an all-zero bank instead of a stationary snapshot
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(serde::Serialize)]
struct AlarmReport {
    t: u64,
    i: u64,
    elapsed_time: f64,
    #[serde(rename = "Q")]
    q: f64,
    h: f64,
    q_breakdown: Vec<f64>,
    triggering_combo: String,
}

fn cmd_monitor(args: MonitorArgs) -> Result<ExitCode> {
    let artifact = load_artifact(&args.artifact)?;
    if let Some(p) = &args.params {
        let ic = read_params(p)?;
        if ic != artifact.meta.ic {
            bail!(
                "--params model {:?} does not match the artifact's in-control model {:?}",
                ic,
                artifact.meta.ic
            );
        }
    }
    let ic = artifact.meta.ic;

    enum ChartState {
        Acusum { bank: BankState, h: f64 },
        Shewhart(ShewhartLimits),
    }
    let mut chart = match args.chart {
        ChartArg::Acusum => {
            let h = match args.h.or(artifact.h) {
                Some(h) if h > 0.0 => h,
                Some(_) => bail!("threshold must be positive"),
                None => bail!("artifact has no calibrated h; pass --h or run `bitbe calibrate`"),
            };
            let bank = if args.cold_start {
                BankState::new()
            } else {
                let seed = resolve_seed(args.seed);
                let mut rng = derive_rng(seed, 0);
                artifact.pool.draw(&mut rng)
            };
            ChartState::Acusum { bank, h }
        }
        ChartArg::Shewhart => {
            let alpha = artifact
                .shewhart_alpha
                .ok_or_else(|| anyhow::anyhow!("artifact has no calibrated Shewhart alpha"))?;
            ChartState::Shewhart(ShewhartLimits::from_alpha(alpha)?)
        }
    };

    let input = open_input(args.input.as_deref())?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut state = StreamState::new();
    let mut t = 0u64;
    let mut completed_time = 0.0f64;
    let mut alarmed = false;

    for_each_event(input, args.format, |ev| {
        let z = state.step(&ic, &ev)?;
        t += 1;
        let (signal, q_now, breakdown, h_now) = match &mut chart {
            ChartState::Acusum { bank, h } => {
                bank.update(&z, &artifact.meta.priors, artifact.meta.reset_scope);
                let breakdown = artifact.q_breakdown(bank);
                let q = breakdown.iter().cloned().fold(0.0f64, f64::max);
                (q > *h, q, Some(breakdown), *h)
            }
            ChartState::Shewhart(limits) => {
                (limits.step(&z), z.z, None, limits.h_upper)
            }
        };
        writeln!(
            out,
            "{{\"t\":{},\"i\":{},\"z\":{},\"label\":{},\"Q\":{}}}",
            t, z.vector_index, z.z, z.label, q_now
        )?;
        if signal {
            alarmed = true;
            let elapsed = completed_time + ev.x;
            let (q_breakdown, combo) = match &breakdown {
                Some(b) => {
                    let (best, _) = b
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .expect("eight branches");
                    (
                        b.to_vec(),
                        bitbe_core::acusum::DirectionCombo::from_index(best).to_string(),
                    )
                }
                None => (vec![], "n/a".to_string()),
            };
            let report = AlarmReport {
                t,
                i: ev.i,
                elapsed_time: elapsed,
                q: q_now,
                h: h_now,
                q_breakdown,
                triggering_combo: combo,
            };
            writeln!(out, "{}", serde_json::to_string(&report)?)?;
            if args.stop_on_alarm {
                return Ok(false);
            }
        }
        if ev.rank != ArrivalRank::First {
            completed_time += ev.x;
        }
        Ok(true)
    })?;
    out.flush()?;
    Ok(if alarmed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Table(a) => cmd_table(a),
        Cmd::Transform(a) => cmd_transform(a),
        Cmd::Monitor(a) => cmd_monitor(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
