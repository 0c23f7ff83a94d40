use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relay_ofdma_harness::experiment::{self, GapSummary};
use relay_ofdma_harness::output::{self, sibling, write_file};
use relay_ofdma_harness::{ExperimentKind, ExperimentSpec, FileConfig, HarnessError, Overrides, ProtocolName, Result};
use serde::Serialize;

/// Weighted-sum-rate allocation for relay-aided OFDMA: single solves,
/// Monte-Carlo experiments and validation against an exhaustive oracle.
#[derive(Debug, Parser)]
#[command(name = "relay-ofdma", version)]
struct Cli {
    /// TOML file with `[system]` and `[experiment]` tables; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one channel realization and print the reports as JSON.
    Solve(Flags),
    /// Duality-gap distribution over randomized realizations.
    GapPdf(Flags),
    /// Average WSR and pairing ratio versus relay distance.
    Sweep(Flags),
    /// Compare the solver with the exhaustive oracle and run property suites.
    Validate(Flags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// Protocol(s) to run; repeatable or comma-separated.
    #[arg(long = "protocol", value_enum, value_delimiter = ',')]
    protocols: Vec<ProtocolName>,
    /// Subcarriers; a list sets the gap-pdf draw set.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    users: Option<usize>,
    /// Source-relay distance in km; a list sets the sweep points.
    #[arg(long = "d-km", value_delimiter = ',', allow_negative_numbers = true)]
    d_km: Vec<f64>,
    /// Total power over noise power, in dB.
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Range of d drawn by gap-pdf and validate, as `lo,hi`.
    #[arg(long = "d-range", value_name = "LO,HI", value_parser = parse_range)]
    d_range: Option<[f64; 2]>,
    /// Range of the SNR in dB drawn by gap-pdf and validate, as `lo,hi`.
    #[arg(long = "snr-db-range", value_name = "LO,HI", value_parser = parse_range, allow_hyphen_values = true)]
    snr_db_range: Option<[f64; 2]>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Bisection stops once the multiplier bracket is this narrow.
    #[arg(long)]
    eps: Option<f64>,
    /// Spend leftover power by water-filling at the final assignment.
    #[arg(long)]
    refill: bool,
    /// Whether an unpaired BP-2 couple must serve one user in both slots.
    #[arg(long = "bp2-same-user", value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    bp2_same_user: Option<bool>,
    /// Also write per-trial records of a sweep (needs --out).
    #[arg(long)]
    raw: bool,
    /// Add a wall_time_ms column (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Corrupt each solver allocation before auditing (validate self-test).
    #[arg(long = "inject-fault")]
    inject_fault: bool,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_range(text: &str) -> std::result::Result<[f64; 2], String> {
    let (lo, hi) = text.split_once(',').ok_or("expected `lo,hi`")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(lo)?, num(hi)?])
}

impl Flags {
    fn overrides(&self) -> Overrides {
        let on = |b: bool| b.then_some(true);
        Overrides {
            protocols: self.protocols.clone(),
            k: self.k.clone(),
            users: self.users,
            d_km: self.d_km.clone(),
            snr_db: self.snr_db,
            d_range: self.d_range,
            snr_db_range: self.snr_db_range,
            trials: self.trials,
            seed: self.seed,
            eps: self.eps,
            refill: on(self.refill),
            bp2_same_user: self.bp2_same_user,
            raw: on(self.raw),
            timing: on(self.timing),
            inject_fault: on(self.inject_fault),
            out: self.out.clone(),
        }
    }
}

fn emit(path: Option<&Path>, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write_file(p, fill),
        None => {
            let mut buf = Vec::new();
            fill(&mut buf)?;
            std::io::stdout()
                .write_all(&buf)
                .map_err(|e| HarnessError::io("<stdout>", e))
        }
    }
}

fn json_into<T: Serialize>(value: &T) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |buf| {
        buf.extend_from_slice(output::to_json(value).as_bytes());
        buf.push(b'\n');
        Ok(())
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    seed: u64,
    k: usize,
    users: usize,
    d_km: f64,
    snr_db: f64,
    weights: &'a [f64],
    results: Vec<SolveEntry<'a>>,
}

#[derive(Serialize)]
struct SolveEntry<'a> {
    report: &'a relay_ofdma::SolveReport,
    allocation: &'a relay_ofdma::Allocation,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = cli.config.as_deref().map(FileConfig::load).transpose()?;
    let (kind, flags) = match &cli.command {
        Command::Solve(f) => (ExperimentKind::SingleSolve, f),
        Command::GapPdf(f) => (ExperimentKind::GapPdf, f),
        Command::Sweep(f) => (ExperimentKind::SweepDistance, f),
        Command::Validate(f) => (ExperimentKind::Validate, f),
    };
    let spec = ExperimentSpec::resolve(kind, file.as_ref(), &flags.overrides())?;
    let out = spec.output_path.as_deref();

    match kind {
        ExperimentKind::SingleSolve => {
            let draw = experiment::draw_trial(&spec, 0);
            let solved = experiment::run_single(&spec)?;
            let doc = SolveOutput {
                seed: draw.seed,
                k: draw.k,
                users: draw.users,
                d_km: draw.d_km,
                snr_db: draw.snr_db,
                weights: &draw.weights,
                results: solved
                    .iter()
                    .map(|(a, r)| SolveEntry {
                        report: r,
                        allocation: a,
                    })
                    .collect(),
            };
            emit(out, json_into(&doc))?;
        }
        ExperimentKind::GapPdf => {
            let result = experiment::run_gap_pdf(&spec)?;
            let label = out.unwrap_or(Path::new("<stdout>"));
            emit(out, |buf| {
                output::write_records(buf, &result.records, spec.timing, label)
            })?;
            if let Some(path) = out {
                let hist = sibling(path, "hist.csv");
                write_file(&hist, |buf| output::write_histogram(buf, &result.histogram, &hist))?;
                output::write_sidecar(path, &spec, &result.summary)?;
            }
            report_gap(&result.summary);
        }
        ExperimentKind::SweepDistance => {
            if spec.raw && out.is_none() {
                return Err(HarnessError::Config(
                    "--raw needs --out to place the per-trial file".into(),
                ));
            }
            let result = experiment::run_sweep(&spec)?;
            let label = out.unwrap_or(Path::new("<stdout>"));
            emit(out, |buf| output::write_sweep(buf, &result.rows, label))?;
            if let Some(path) = out {
                if spec.raw {
                    let raw = sibling(path, "raw.csv");
                    write_file(&raw, |buf| output::write_records(buf, &result.raw, spec.timing, &raw))?;
                }
                output::write_sidecar(path, &spec, ())?;
            }
        }
        ExperimentKind::Validate => {
            let report = experiment::run_validate(&spec)?;
            emit(out, json_into(&report))?;
            eprintln!(
                "validate: {} ({} comparisons, {} failed, max relative discrepancy {:.3e})",
                if report.pass { "PASS" } else { "FAIL" },
                report.comparisons.len(),
                report.failed_comparisons,
                report.max_rel_discrepancy,
            );
            for p in &report.properties {
                eprintln!("  {}: {} ({})", p.name, if p.pass { "pass" } else { "FAIL" }, p.detail);
            }
            if !report.pass {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report_gap(summary: &[GapSummary]) {
    for s in summary {
        eprintln!(
            "{}: {} solves, {} approximate exits (max delta {:.4e}), {} exact, max iterations {}",
            output::name(&s.protocol),
            s.solves,
            s.approx_exits,
            s.max_delta,
            s.exact_exits,
            s.max_iterations,
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
