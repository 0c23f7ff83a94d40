//! Experiment specification: built-in defaults, an optional TOML file, and
//! command-line overrides, merged in that order.

use std::path::{Path, PathBuf};

use relay_ofdma::{Protocol, SolverOptions, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleSolve,
    GapPdf,
    SweepDistance,
    Validate,
}

/// Protocol as named on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Proposed,
    Bp1,
    Bp2,
}

impl ProtocolName {
    pub fn to_protocol(self, bp2_same_user: bool) -> Protocol {
        match self {
            ProtocolName::Proposed => Protocol::Proposed,
            ProtocolName::Bp1 => Protocol::Benchmark1,
            ProtocolName::Bp2 => Protocol::Benchmark2 {
                same_user: bp2_same_user,
            },
        }
    }

    pub const ALL: [ProtocolName; 3] = [ProtocolName::Proposed, ProtocolName::Bp1, ProtocolName::Bp2];
}

/// `[system]` table of a config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub k: Option<usize>,
    pub users: Option<usize>,
    pub d_km: Option<f64>,
    pub center_km: Option<f64>,
    pub region_radius_km: Option<f64>,
    pub snr_db: Option<f64>,
    pub taps: Option<usize>,
    pub pathloss_exp: Option<f64>,
    pub d_ref_km: Option<f64>,
    pub seed: Option<u64>,
    pub weights: Option<Vec<f64>>,
}

/// `[experiment]` table of a config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: Option<usize>,
    pub protocols: Option<Vec<ProtocolName>>,
    pub d_values: Option<Vec<f64>>,
    pub k_values: Option<Vec<usize>>,
    pub d_range: Option<[f64; 2]>,
    pub snr_db_range: Option<[f64; 2]>,
    pub eps: Option<f64>,
    pub refill: Option<bool>,
    pub bp2_same_user: Option<bool>,
    pub raw: Option<bool>,
    pub timing: Option<bool>,
    pub inject_fault: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Command-line overrides; `None`/empty means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub protocols: Vec<ProtocolName>,
    pub k: Vec<usize>,
    pub users: Option<usize>,
    pub d_km: Vec<f64>,
    pub snr_db: Option<f64>,
    pub d_range: Option<[f64; 2]>,
    pub snr_db_range: Option<[f64; 2]>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub refill: Option<bool>,
    pub bp2_same_user: Option<bool>,
    pub raw: Option<bool>,
    pub timing: Option<bool>,
    pub inject_fault: Option<bool>,
    pub out: Option<PathBuf>,
}

/// Fully resolved experiment description. Serialized next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub protocols: Vec<ProtocolName>,
    /// Scenario template. `d_km`, `k`, the SNR and the weights are replaced per
    /// trial where the experiment draws them.
    pub base: SystemConfig,
    pub snr_db: f64,
    /// Relay distances swept by `sweep`.
    pub d_values: Vec<f64>,
    /// Subcarrier counts drawn from by `gap-pdf`.
    pub k_values: Vec<usize>,
    /// Ranges drawn from by `gap-pdf` and `validate`.
    pub d_range: [f64; 2],
    pub snr_db_range: [f64; 2],
    /// Fixed user weights; drawn per trial in `[0.8, 1.2]` when `None`.
    pub fixed_weights: Option<Vec<f64>>,
    pub solver: SolverOptions,
    pub bp2_same_user: bool,
    pub raw: bool,
    pub timing: bool,
    pub inject_fault: bool,
    pub output_path: Option<PathBuf>,
}

pub const GAP_PDF_K_VALUES: [usize; 5] = [8, 16, 32, 64, 128];
pub const VALIDATE_MAX_K: usize = 4;
pub const VALIDATE_MAX_USERS: usize = 2;

impl ExperimentSpec {
    /// Built-in defaults reproducing the reference experiments.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let (k, users, trials, protocols) = match kind {
            ExperimentKind::SingleSolve => (32, 5, 1, vec![ProtocolName::Proposed]),
            ExperimentKind::GapPdf => (32, 5, 10_000, vec![ProtocolName::Proposed, ProtocolName::Bp1]),
            ExperimentKind::SweepDistance => (32, 5, 1000, ProtocolName::ALL.to_vec()),
            ExperimentKind::Validate => (VALIDATE_MAX_K, VALIDATE_MAX_USERS, 200, ProtocolName::ALL.to_vec()),
        };
        let mut base = SystemConfig::new(k, users);
        base.seed = 1;
        Self {
            kind,
            trials,
            protocols,
            base,
            snr_db: 20.0,
            d_values: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            k_values: GAP_PDF_K_VALUES.to_vec(),
            d_range: [0.1, 0.9],
            snr_db_range: [0.0, 45.0],
            fixed_weights: None,
            solver: SolverOptions::default(),
            bp2_same_user: true,
            raw: false,
            timing: false,
            inject_fault: false,
            output_path: None,
        }
    }

    /// Merges defaults, then the file, then the command line, and validates.
    pub fn resolve(kind: ExperimentKind, file: Option<&FileConfig>, cli: &Overrides) -> Result<Self> {
        let mut spec = Self::defaults(kind);
        if let Some(file) = file {
            spec.apply_file(file);
        }
        spec.apply_overrides(cli);
        spec.validate()?;
        Ok(spec)
    }

    fn apply_file(&mut self, file: &FileConfig) {
        let s = &file.system;
        let b = &mut self.base;
        set(&mut b.k, s.k);
        set(&mut b.users, s.users);
        set(&mut b.d_km, s.d_km);
        set(&mut b.center_km, s.center_km);
        set(&mut b.region_radius_km, s.region_radius_km);
        set(&mut b.taps, s.taps);
        set(&mut b.pathloss_exp, s.pathloss_exp);
        set(&mut b.d_ref_km, s.d_ref_km);
        set(&mut b.seed, s.seed);
        set(&mut self.snr_db, s.snr_db);
        if s.weights.is_some() {
            self.fixed_weights = s.weights.clone();
        }
        if let Some(k) = s.k {
            // an explicit K pins the gap-pdf draw too
            self.k_values = vec![k];
        }

        let e = &file.experiment;
        set(&mut self.trials, e.trials);
        set(&mut self.protocols, e.protocols.clone());
        set(&mut self.d_values, e.d_values.clone());
        set(&mut self.k_values, e.k_values.clone());
        set(&mut self.d_range, e.d_range);
        set(&mut self.snr_db_range, e.snr_db_range);
        set(&mut self.solver.eps, e.eps);
        set(&mut self.solver.refill, e.refill);
        set(&mut self.bp2_same_user, e.bp2_same_user);
        set(&mut self.raw, e.raw);
        set(&mut self.timing, e.timing);
        set(&mut self.inject_fault, e.inject_fault);
        if e.out.is_some() {
            self.output_path = e.out.clone();
        }
    }

    fn apply_overrides(&mut self, cli: &Overrides) {
        if !cli.protocols.is_empty() {
            self.protocols = dedup(&cli.protocols);
        }
        if let Some(&k) = cli.k.first() {
            self.base.k = k;
            self.k_values = cli.k.clone();
        }
        set(&mut self.base.users, cli.users);
        if let Some(&d) = cli.d_km.first() {
            self.base.d_km = d;
            self.d_values = cli.d_km.clone();
        }
        set(&mut self.snr_db, cli.snr_db);
        set(&mut self.d_range, cli.d_range);
        set(&mut self.snr_db_range, cli.snr_db_range);
        set(&mut self.trials, cli.trials);
        set(&mut self.base.seed, cli.seed);
        set(&mut self.solver.eps, cli.eps);
        set(&mut self.solver.refill, cli.refill);
        set(&mut self.bp2_same_user, cli.bp2_same_user);
        set(&mut self.raw, cli.raw);
        set(&mut self.timing, cli.timing);
        set(&mut self.inject_fault, cli.inject_fault);
        if cli.out.is_some() {
            self.output_path = cli.out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.protocols.is_empty() {
            return bad("at least one protocol is required".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.solver.eps.is_finite() && self.solver.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.solver.eps));
        }
        if !self.snr_db.is_finite() {
            return bad(format!("snr_db must be finite, got {}", self.snr_db));
        }
        for (name, [lo, hi]) in [("d_range", self.d_range), ("snr_db_range", self.snr_db_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} must be an ordered finite pair, got [{lo}, {hi}]"));
            }
        }
        if let Some(w) = &self.fixed_weights {
            if w.len() != self.base.users {
                return bad(format!("{} weights given for {} users", w.len(), self.base.users));
            }
        }
        match self.kind {
            ExperimentKind::SweepDistance if self.d_values.is_empty() => {
                return bad("sweep needs at least one d value".into());
            }
            ExperimentKind::GapPdf if self.k_values.is_empty() => {
                return bad("gap-pdf needs at least one K value".into());
            }
            ExperimentKind::Validate if self.base.k > VALIDATE_MAX_K || self.base.users > VALIDATE_MAX_USERS => {
                return bad(format!(
                    "validate is limited to K <= {VALIDATE_MAX_K} and U <= {VALIDATE_MAX_USERS}, got K={} U={}",
                    self.base.k, self.base.users
                ));
            }
            _ => {}
        }
        // check every scenario shape the experiment will generate
        let mut probe = self.base.clone();
        probe.weights = vec![1.0; probe.users];
        probe.ptot_over_sigma2_db = self.snr_db;
        let ks: Vec<usize> = match self.kind {
            ExperimentKind::GapPdf => self.k_values.clone(),
            _ => vec![self.base.k],
        };
        let ds: Vec<f64> = match self.kind {
            ExperimentKind::SweepDistance => self.d_values.clone(),
            ExperimentKind::GapPdf | ExperimentKind::Validate => self.d_range.to_vec(),
            ExperimentKind::SingleSolve => vec![self.base.d_km],
        };
        for &k in &ks {
            for &d in &ds {
                probe.k = k;
                probe.d_km = d;
                if self.kind == ExperimentKind::Validate {
                    probe.taps = probe.taps.min(k);
                }
                probe.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn protocols(&self) -> Vec<Protocol> {
        self.protocols
            .iter()
            .map(|p| p.to_protocol(self.bp2_same_user))
            .collect()
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn dedup(list: &[ProtocolName]) -> Vec<ProtocolName> {
    let mut out: Vec<ProtocolName> = Vec::with_capacity(list.len());
    for &p in list {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}
