//! CSV and JSON emission. Column orders are fixed and documented in the README;
//! floats use Rust's shortest round-trip formatting so a CSV can be re-read
//! without loss and identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::error::{HarnessError, Result};
use crate::experiment::{HistogramBin, SweepRow, TrialRecord};

pub const RECORD_COLUMNS: [&str; 11] = [
    "trial",
    "seed",
    "protocol",
    "d_km",
    "k",
    "ptot_db",
    "wsr",
    "delta",
    "n_sp_over_k",
    "iterations",
    "exit",
];
/// Appended to [`RECORD_COLUMNS`] only when timing is requested, since it
/// would otherwise break byte-identical reruns.
pub const TIMING_COLUMN: &str = "wall_time_ms";

pub const HISTOGRAM_COLUMNS: [&str; 5] = ["protocol", "lo_db", "hi_db", "count", "density"];

pub const SWEEP_COLUMNS: [&str; 11] = [
    "d_km",
    "protocol",
    "k",
    "ptot_db",
    "trials",
    "mean_wsr",
    "mean_n_sp_over_k",
    "mean_delta",
    "max_delta",
    "max_iterations",
    "exact_exits",
];

/// Serialized name of a unit enum variant, e.g. `bp1`.
pub fn name<T: Serialize>(value: &T) -> String {
    // unit enum variants serialize to their configured names
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn exit_label(exact: bool) -> &'static str {
    if exact {
        "exact"
    } else {
        "approx"
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    }
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord], timing: bool, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err(path);
    let mut header: Vec<&str> = RECORD_COLUMNS.to_vec();
    if timing {
        header.push(TIMING_COLUMN);
    }
    w.write_record(&header).map_err(&err)?;
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.seed.to_string(),
            name(&r.protocol),
            r.d_km.to_string(),
            r.k.to_string(),
            r.ptot_db.to_string(),
            r.wsr.to_string(),
            r.delta.to_string(),
            r.n_sp_over_k.to_string(),
            r.iterations.to_string(),
            exit_label(r.exact).to_owned(),
        ];
        if timing {
            row.push(r.wall_time_ms.to_string());
        }
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_histogram<W: Write>(out: W, bins: &[HistogramBin], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err(path);
    w.write_record(HISTOGRAM_COLUMNS).map_err(&err)?;
    for b in bins {
        w.write_record([
            name(&b.protocol),
            b.lo_db.to_string(),
            b.hi_db.to_string(),
            b.count.to_string(),
            b.density.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err(path);
    w.write_record(SWEEP_COLUMNS).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.d_km.to_string(),
            name(&r.protocol),
            r.k.to_string(),
            r.ptot_db.to_string(),
            r.trials.to_string(),
            r.mean_wsr.to_string(),
            r.mean_n_sp_over_k.to_string(),
            r.mean_delta.to_string(),
            r.max_delta.to_string(),
            r.max_iterations.to_string(),
            r.exact_exits.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Sibling of `path` with `suffix` replacing its extension, e.g.
/// `gap.csv` -> `gap.hist.csv` for suffix `hist.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Creates the parent directory of `path` and writes through `fill`.
pub fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data always serializes")
}

/// Sidecar describing how an output file was produced.
#[derive(Serialize)]
pub struct Sidecar<'a, S: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: &'a ExperimentSpec,
    pub summary: S,
}

pub fn write_sidecar<S: Serialize>(csv_path: &Path, spec: &ExperimentSpec, summary: S) -> Result<PathBuf> {
    let path = sibling(csv_path, "json");
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec,
        summary,
    };
    write_file(&path, |buf| {
        buf.extend_from_slice(to_json(&sidecar).as_bytes());
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(path)
}
