//! Monte-Carlo drivers. Every trial is a pure function of its seed, so trials
//! run in index order and any subset can be reproduced in isolation.

use std::time::Instant;

use relay_ofdma::channel::{stream, uniform, uniform_in, DRIVER_STREAM};
use relay_ofdma::{
    build_gain_table, evaluate_wsr, oracle_solve, solve, Allocation, Error, ExitMode, GainTable, Protocol, SolveReport,
    SystemConfig,
};
use serde::Serialize;

use crate::config::{ExperimentKind, ExperimentSpec, ProtocolName};
use crate::error::{HarnessError, Result};
use crate::properties::{self, PropertyCheck};

pub const WEIGHT_RANGE: [f64; 2] = [0.8, 1.2];

/// Scenario parameters drawn for one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialDraw {
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub users: usize,
    pub d_km: f64,
    pub snr_db: f64,
    pub weights: Vec<f64>,
}

impl TrialDraw {
    pub fn config(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig {
            k: self.k,
            users: self.users,
            d_km: self.d_km,
            ptot_over_sigma2_db: self.snr_db,
            weights: self.weights.clone(),
            seed: self.seed,
            taps: base.taps.min(self.k),
            ..base.clone()
        }
    }
}

/// One solve of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub protocol: ProtocolName,
    pub d_km: f64,
    pub k: usize,
    pub ptot_db: f64,
    pub wsr: f64,
    pub delta: f64,
    pub n_sp_over_k: f64,
    pub iterations: usize,
    pub exact: bool,
    pub wall_time_ms: f64,
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed.wrapping_add(trial as u64)
}

fn pick<T: Copy>(rng: &mut rand_chacha::ChaCha8Rng, items: &[T]) -> T {
    let i = (uniform(rng) * items.len() as f64) as usize;
    items[i.min(items.len() - 1)]
}

/// Draws the per-trial parameters from the driver stream of the trial seed.
/// The order of draws is part of the reproducibility contract:
/// `gap-pdf` draws d, K, SNR, then weights; `validate` draws K, U, d, SNR,
/// then weights; the other experiments draw only the weights.
pub fn draw_trial(spec: &ExperimentSpec, trial: usize) -> TrialDraw {
    let seed = trial_seed(spec.base.seed, trial);
    let mut rng = stream(seed, DRIVER_STREAM);
    let mut draw = TrialDraw {
        trial,
        seed,
        k: spec.base.k,
        users: spec.base.users,
        d_km: spec.base.d_km,
        snr_db: spec.snr_db,
        weights: Vec::new(),
    };
    match spec.kind {
        ExperimentKind::GapPdf => {
            draw.d_km = uniform_in(&mut rng, spec.d_range[0], spec.d_range[1]);
            draw.k = pick(&mut rng, &spec.k_values);
            draw.snr_db = uniform_in(&mut rng, spec.snr_db_range[0], spec.snr_db_range[1]);
        }
        ExperimentKind::Validate => {
            let ks: Vec<usize> = (1..=spec.base.k).collect();
            let us: Vec<usize> = (1..=spec.base.users).collect();
            draw.k = pick(&mut rng, &ks);
            draw.users = pick(&mut rng, &us);
            draw.d_km = uniform_in(&mut rng, spec.d_range[0], spec.d_range[1]);
            draw.snr_db = uniform_in(&mut rng, spec.snr_db_range[0], spec.snr_db_range[1]);
        }
        ExperimentKind::SingleSolve | ExperimentKind::SweepDistance => {}
    }
    draw.weights = match &spec.fixed_weights {
        Some(w) => w.clone(),
        None => (0..draw.users)
            .map(|_| uniform_in(&mut rng, WEIGHT_RANGE[0], WEIGHT_RANGE[1]))
            .collect(),
    };
    draw
}

/// Channel realization and linear budget of a trial.
pub struct Instance {
    pub config: SystemConfig,
    pub gains: GainTable,
    pub p_tot: f64,
}

impl Instance {
    pub fn generate(spec: &ExperimentSpec, draw: &TrialDraw) -> Result<Self> {
        let config = draw.config(&spec.base);
        let (_, gains) = build_gain_table(&config)?;
        let p_tot = config.p_tot();
        Ok(Self { config, gains, p_tot })
    }

    pub fn solve(&self, spec: &ExperimentSpec, protocol: Protocol) -> Result<(Allocation, SolveReport, f64)> {
        let start = Instant::now();
        let (alloc, report) = solve(&self.gains, &self.config.weights, self.p_tot, protocol, &spec.solver)?;
        Ok((alloc, report, start.elapsed().as_secs_f64() * 1e3))
    }
}

fn record(draw: &TrialDraw, name: ProtocolName, report: &SolveReport, wall_time_ms: f64) -> TrialRecord {
    TrialRecord {
        trial: draw.trial,
        seed: draw.seed,
        protocol: name,
        d_km: draw.d_km,
        k: draw.k,
        ptot_db: draw.snr_db,
        wsr: report.wsr,
        delta: report.delta,
        n_sp_over_k: report.n_sp as f64 / draw.k as f64,
        iterations: report.iterations,
        exact: report.mode == ExitMode::ExactStationary,
        wall_time_ms,
    }
}

/// Solves every protocol of the spec on one trial.
pub fn run_trial(spec: &ExperimentSpec, draw: &TrialDraw) -> Result<Vec<TrialRecord>> {
    let instance = Instance::generate(spec, draw)?;
    spec.protocols
        .iter()
        .map(|&name| {
            let (_, report, ms) = instance.solve(spec, name.to_protocol(spec.bp2_same_user))?;
            Ok(record(draw, name, &report, ms))
        })
        .collect()
}

/// Single instance: the allocation and report for each requested protocol.
pub fn run_single(spec: &ExperimentSpec) -> Result<Vec<(Allocation, SolveReport)>> {
    let draw = draw_trial(spec, 0);
    let instance = Instance::generate(spec, &draw)?;
    spec.protocols()
        .into_iter()
        .map(|p| instance.solve(spec, p).map(|(a, r, _)| (a, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub protocol: ProtocolName,
    pub lo_db: f64,
    pub hi_db: f64,
    pub count: u64,
    /// `count / (exits * width)`, an estimate of the density of `10 log10(delta)`.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    pub protocol: ProtocolName,
    pub solves: u64,
    pub approx_exits: u64,
    pub exact_exits: u64,
    /// Approximate exits with a certificate of exactly zero (no histogram bin).
    pub zero_delta_exits: u64,
    pub max_delta: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapPdfResult {
    pub records: Vec<TrialRecord>,
    pub histogram: Vec<HistogramBin>,
    pub summary: Vec<GapSummary>,
}

pub const HISTOGRAM_BIN_DB: f64 = 1.0;

/// Randomized realizations for the duality-gap distribution.
pub fn run_gap_pdf(spec: &ExperimentSpec) -> Result<GapPdfResult> {
    let mut records = Vec::with_capacity(spec.trials * spec.protocols.len());
    for trial in 0..spec.trials {
        records.extend(run_trial(spec, &draw_trial(spec, trial))?);
    }
    let (histogram, summary) = gap_histogram(&spec.protocols, &records);
    Ok(GapPdfResult {
        records,
        histogram,
        summary,
    })
}

/// Histogram of `10 log10(delta)` over approximate-branch exits, with 1 dB bins
/// on integer edges covering the observed range.
pub fn gap_histogram(protocols: &[ProtocolName], records: &[TrialRecord]) -> (Vec<HistogramBin>, Vec<GapSummary>) {
    let mut bins = Vec::new();
    let mut summary = Vec::new();
    for &protocol in protocols {
        let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.protocol == protocol).collect();
        let approx: Vec<&TrialRecord> = mine.iter().copied().filter(|r| !r.exact).collect();
        let db: Vec<f64> = approx
            .iter()
            .filter(|r| r.delta > 0.0)
            .map(|r| 10.0 * r.delta.log10())
            .collect();
        summary.push(GapSummary {
            protocol,
            solves: mine.len() as u64,
            approx_exits: approx.len() as u64,
            exact_exits: (mine.len() - approx.len()) as u64,
            zero_delta_exits: (approx.len() - db.len()) as u64,
            max_delta: approx.iter().map(|r| r.delta).fold(0.0, f64::max),
            max_iterations: mine.iter().map(|r| r.iterations).max().unwrap_or(0),
        });
        if db.is_empty() {
            continue;
        }
        let index = |x: f64| (x / HISTOGRAM_BIN_DB).floor() as i64;
        let lo = db.iter().copied().map(index).min().unwrap_or(0);
        let hi = db.iter().copied().map(index).max().unwrap_or(0);
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for &x in &db {
            counts[(index(x) - lo) as usize] += 1;
        }
        let norm = approx.len() as f64 * HISTOGRAM_BIN_DB;
        for (i, count) in counts.into_iter().enumerate() {
            let lo_db = (lo + i as i64) as f64 * HISTOGRAM_BIN_DB;
            bins.push(HistogramBin {
                protocol,
                lo_db,
                hi_db: lo_db + HISTOGRAM_BIN_DB,
                count,
                density: count as f64 / norm,
            });
        }
    }
    (bins, summary)
}

/// Averages for one `(d, protocol)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d_km: f64,
    pub protocol: ProtocolName,
    pub k: usize,
    pub ptot_db: f64,
    pub trials: usize,
    pub mean_wsr: f64,
    pub mean_n_sp_over_k: f64,
    pub mean_delta: f64,
    pub max_delta: f64,
    pub max_iterations: usize,
    pub exact_exits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Per-trial records, ordered by d, then trial, then protocol.
    pub raw: Vec<TrialRecord>,
}

/// Sweeps the relay distance. Trial `i` uses the same seed at every distance,
/// so user positions, fading and weights are shared across the sweep.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    let mut raw = Vec::with_capacity(spec.d_values.len() * spec.trials * spec.protocols.len());
    for &d in &spec.d_values {
        for trial in 0..spec.trials {
            let mut draw = draw_trial(spec, trial);
            draw.d_km = d;
            raw.extend(run_trial(spec, &draw)?);
        }
    }
    let rows = aggregate_sweep(spec, &raw);
    Ok(SweepResult { rows, raw })
}

/// Recomputes the sweep table from per-trial records.
pub fn aggregate_sweep(spec: &ExperimentSpec, raw: &[TrialRecord]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &d in &spec.d_values {
        for &protocol in &spec.protocols {
            let cell: Vec<&TrialRecord> = raw.iter().filter(|r| r.d_km == d && r.protocol == protocol).collect();
            let n = cell.len();
            let mean = |f: fn(&TrialRecord) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            rows.push(SweepRow {
                d_km: d,
                protocol,
                k: spec.base.k,
                ptot_db: spec.snr_db,
                trials: n,
                mean_wsr: mean(|r| r.wsr),
                mean_n_sp_over_k: mean(|r| r.n_sp_over_k),
                mean_delta: mean(|r| r.delta),
                max_delta: cell.iter().map(|r| r.delta).fold(0.0, f64::max),
                max_iterations: cell.iter().map(|r| r.iterations).max().unwrap_or(0),
                exact_exits: cell.iter().filter(|r| r.exact).count(),
            });
        }
    }
    rows
}

/// Solver-versus-oracle outcome on one instance and protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub trial: usize,
    pub seed: u64,
    pub protocol: ProtocolName,
    pub k: usize,
    pub users: usize,
    pub d_km: f64,
    pub snr_db: f64,
    pub solver_wsr: f64,
    pub oracle_wsr: f64,
    pub delta: f64,
    /// `(oracle - solver) / oracle`, 0 when the oracle value is 0.
    pub rel_discrepancy: f64,
    /// Allowed shortfall `max(delta * oracle, 1e-6)`.
    pub tolerance: f64,
    pub configurations: u64,
    /// Constraint named by the feasibility audit, if it failed.
    pub audit_failure: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub instances: usize,
    pub max_rel_discrepancy: f64,
    pub failed_comparisons: usize,
    pub properties: Vec<PropertyCheck>,
    pub comparisons: Vec<Comparison>,
}

pub const ORACLE_ABS_TOL: f64 = 1e-6;

/// Raises every power so the total sits 1% above the budget. Used to check
/// that the audit catches a corrupted allocation.
pub fn inject_power_fault(alloc: &mut Allocation, p_tot: f64) {
    let used = alloc.total_power();
    let scale = if used > 0.0 { 1.01 * p_tot / used } else { 1.0 };
    for p in &mut alloc.pairs {
        p.p_s1 *= scale;
        p.p_s2 *= scale;
        p.p_r *= scale;
    }
    for d in alloc.directs_1.iter_mut().chain(alloc.directs_2.iter_mut()) {
        d.power *= scale;
    }
    if used == 0.0 {
        if let Some(d) = alloc.directs_1.first_mut() {
            d.power = 1.01 * p_tot;
        } else if let Some(p) = alloc.pairs.first_mut() {
            p.p_s1 = 1.01 * p_tot;
        }
    }
}

pub fn compare_with_oracle(
    spec: &ExperimentSpec,
    draw: &TrialDraw,
    instance: &Instance,
    name: ProtocolName,
) -> Result<Comparison> {
    let protocol = name.to_protocol(spec.bp2_same_user);
    let (mut alloc, report, _) = instance.solve(spec, protocol)?;
    if spec.inject_fault {
        inject_power_fault(&mut alloc, instance.p_tot);
    }
    let weights = &instance.config.weights;
    let audit = evaluate_wsr(&alloc, &instance.gains, weights, instance.p_tot, protocol);
    let (audited_wsr, audit_failure) = match audit {
        Ok(w) => (w, None),
        Err(Error::Infeasible(v)) => (f64::NAN, Some(v.to_string())),
        Err(e) => return Err(e.into()),
    };
    let oracle = oracle_solve(&instance.gains, weights, instance.p_tot, protocol)?;
    let tolerance = (report.delta * oracle.wsr).max(ORACLE_ABS_TOL);
    let solver_wsr = report.wsr;
    let rel_discrepancy = if oracle.wsr > 0.0 {
        (oracle.wsr - solver_wsr) / oracle.wsr
    } else {
        0.0
    };
    let consistent = audit_failure.is_none() && (audited_wsr - solver_wsr).abs() <= 1e-9 * solver_wsr.max(1.0);
    let within = solver_wsr >= oracle.wsr - tolerance && solver_wsr <= oracle.wsr + ORACLE_ABS_TOL;
    Ok(Comparison {
        trial: draw.trial,
        seed: draw.seed,
        protocol: name,
        k: draw.k,
        users: draw.users,
        d_km: draw.d_km,
        snr_db: draw.snr_db,
        solver_wsr,
        oracle_wsr: oracle.wsr,
        delta: report.delta,
        rel_discrepancy,
        tolerance,
        configurations: oracle.enumerated,
        audit_failure,
        pass: consistent && within,
    })
}

/// Case counts of the property suites run by `validate`.
pub const VALIDATE_DOMINANCE_CASES: u64 = 100_000;
pub const VALIDATE_SPLIT_CASES: u64 = 200;
pub const VALIDATE_SPLIT_GRID: usize = 200;
pub const VALIDATE_MU_POINTS: usize = 20;

/// Solver against the oracle on every trial, plus the property suites.
pub fn run_validate(spec: &ExperimentSpec) -> Result<ValidationReport> {
    if spec.kind != ExperimentKind::Validate {
        return Err(HarnessError::Config("run_validate needs a validate spec".into()));
    }
    let mut comparisons = Vec::with_capacity(spec.trials * spec.protocols.len());
    let mut monotone_cases = 0u64;
    let mut monotone_failures = 0u64;
    let mut monotone_first = None;
    for trial in 0..spec.trials {
        let draw = draw_trial(spec, trial);
        let instance = Instance::generate(spec, &draw)?;
        for &name in &spec.protocols {
            comparisons.push(compare_with_oracle(spec, &draw, &instance, name)?);
            let mus = properties::mu_grid(draw.k, &draw.weights, instance.p_tot, VALIDATE_MU_POINTS);
            let protocol = name.to_protocol(spec.bp2_same_user);
            monotone_cases += 1;
            if let Some(msg) =
                properties::subgradient_monotone(&instance.gains, &draw.weights, instance.p_tot, protocol, &mus)?
            {
                monotone_failures += 1;
                monotone_first.get_or_insert(format!("trial {trial}: {msg}"));
            }
        }
    }
    let seed = spec.base.seed;
    let properties = vec![
        PropertyCheck {
            name: "subgradient-monotone".into(),
            cases: monotone_cases,
            failures: monotone_failures,
            pass: monotone_failures == 0,
            detail: monotone_first.unwrap_or_else(|| format!("{VALIDATE_MU_POINTS} multipliers per case")),
        },
        properties::gain_dominance(VALIDATE_DOMINANCE_CASES, seed),
        properties::split_optimality(VALIDATE_SPLIT_CASES, &[0.1, 1.0, 10.0], VALIDATE_SPLIT_GRID, seed),
    ];
    let failed_comparisons = comparisons.iter().filter(|c| !c.pass).count();
    let max_rel_discrepancy = comparisons.iter().map(|c| c.rel_discrepancy).fold(0.0, f64::max);
    Ok(ValidationReport {
        pass: failed_comparisons == 0 && properties.iter().all(|p| p.pass),
        instances: spec.trials,
        max_rel_discrepancy,
        failed_comparisons,
        properties,
        comparisons,
    })
}
