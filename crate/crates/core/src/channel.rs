//! Simulation geometry and frequency-selective channel gains.
//!
//! The source sits at the origin, the centre of the user region lies on the
//! positive x-axis at `center_km`, and the relay is placed on the segment
//! between them at `d_km` from the source. Every link is an `L`-tap
//! delay line with independent circularly-symmetric complex Gaussian taps whose
//! total variance follows a power-law path loss. Subcarrier gains are the
//! squared magnitudes of the `K`-point DFT of the taps, normalized by the noise
//! power (taken as 1).
//!
//! # Random streams
//!
//! All randomness comes from ChaCha8 seeded with `SystemConfig::seed` through
//! `seed_from_u64`, using one independent stream per consumer:
//!
//! | stream            | consumer                       |
//! |-------------------|--------------------------------|
//! | 0                 | geometry (users in index order)|
//! | 1                 | source-relay taps              |
//! | 2 + u             | source-user `u` taps           |
//! | 2 + U + u         | relay-user `u` taps            |
//! | `u64::MAX`        | reserved for experiment drivers|
//!
//! A uniform variate is `(next_u64 >> 11) * 2^-53`; Gaussians use the
//! Box-Muller transform with `u1 = 1 - uniform` so that `ln u1` is finite.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances are clamped to this value (1 m) before path loss is evaluated.
pub const MIN_DISTANCE_KM: f64 = 0.001;

pub const GEOMETRY_STREAM: u64 = 0;
pub const SOURCE_RELAY_STREAM: u64 = 1;
/// Stream reserved for experiment drivers (trial parameters, user weights).
pub const DRIVER_STREAM: u64 = u64::MAX;

pub fn source_user_stream(u: usize) -> u64 {
    2 + u as u64
}

pub fn relay_user_stream(users: usize, u: usize) -> u64 {
    2 + (users + u) as u64
}

/// Opens stream `index` of the generator seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform variate on `[0, 1)` with 53 random bits.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform variate on `[lo, hi)`.
pub fn uniform_in<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Two independent standard normal variates (Box-Muller).
pub fn standard_normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of subcarriers `K`.
    pub k: usize,
    /// Number of users `U`.
    pub users: usize,
    /// Source-to-relay distance.
    pub d_km: f64,
    /// Source-to-user-region-centre distance.
    pub center_km: f64,
    pub region_radius_km: f64,
    /// Total power budget over noise power, in dB.
    pub ptot_over_sigma2_db: f64,
    /// Per-user weights `w_u > 0`.
    pub weights: Vec<f64>,
    pub seed: u64,
    /// Channel impulse-response length `L`.
    pub taps: usize,
    pub pathloss_exp: f64,
    pub d_ref_km: f64,
}

impl SystemConfig {
    /// Configuration with the reference scenario defaults and unit weights.
    pub fn new(k: usize, users: usize) -> Self {
        Self {
            k,
            users,
            d_km: 0.5,
            center_km: 1.0,
            region_radius_km: 0.05,
            ptot_over_sigma2_db: 20.0,
            weights: vec![1.0; users],
            seed: 0,
            taps: 6,
            pathloss_exp: 2.5,
            d_ref_km: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.users == 0 {
            return bad("U must be at least 1".into());
        }
        if self.taps == 0 || self.taps > self.k {
            return bad(format!("taps must lie in [1, K={}], got {}", self.k, self.taps));
        }
        if self.weights.len() != self.users {
            return bad(format!("expected {} weights, got {}", self.users, self.weights.len()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return bad(format!("weights must be positive and finite, got {w}"));
        }
        if !(self.d_km.is_finite() && self.d_km > 0.0) {
            return bad(format!("d_km must be positive, got {}", self.d_km));
        }
        if !(self.center_km.is_finite() && self.center_km >= 0.0) {
            return bad(format!("center_km must be nonnegative, got {}", self.center_km));
        }
        if !(self.region_radius_km.is_finite() && self.region_radius_km >= 0.0) {
            return bad(format!(
                "region_radius_km must be nonnegative, got {}",
                self.region_radius_km
            ));
        }
        if !self.ptot_over_sigma2_db.is_finite() {
            return bad("ptot_over_sigma2_db must be finite".into());
        }
        if !(self.pathloss_exp.is_finite() && self.d_ref_km.is_finite() && self.d_ref_km > 0.0) {
            return bad("path-loss parameters must be finite with d_ref_km > 0".into());
        }
        Ok(())
    }

    /// Linear power budget `P_tot` in units of the noise power.
    pub fn p_tot(&self) -> f64 {
        db_to_linear(self.ptot_over_sigma2_db)
    }

    pub fn w_max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Expected total tap energy `(distance / d_ref)^(-pathloss_exp)` after clamping.
    pub fn path_loss(&self, distance_km: f64) -> f64 {
        (distance_km.max(MIN_DISTANCE_KM) / self.d_ref_km).powf(-self.pathloss_exp)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub relay_pos: [f64; 2],
    pub user_pos: Vec<[f64; 2]>,
    pub d_su: Vec<f64>,
    pub d_ru: Vec<f64>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places the relay and draws users uniformly over the region disk.
pub fn sample_geometry<R: RngCore + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
    let center = [cfg.center_km, 0.0];
    let relay_pos = [cfg.d_km, 0.0];
    let user_pos: Vec<[f64; 2]> = (0..cfg.users)
        .map(|_| {
            // area-uniform: radius ~ R * sqrt(u1)
            let radius = cfg.region_radius_km * uniform(rng).sqrt();
            let angle = 2.0 * PI * uniform(rng);
            [center[0] + radius * angle.cos(), center[1] + radius * angle.sin()]
        })
        .collect();
    let d_su = user_pos.iter().map(|&p| distance([0.0, 0.0], p)).collect();
    let d_ru = user_pos.iter().map(|&p| distance(relay_pos, p)).collect();
    Geometry {
        relay_pos,
        user_pos,
        d_su,
        d_ru,
    }
}

/// Draws `cfg.taps` i.i.d. complex Gaussian taps with total variance
/// `path_loss(distance_km)`.
pub fn sample_impulse_response<R: RngCore + ?Sized>(
    distance_km: f64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Vec<Complex64> {
    let tap_var = cfg.path_loss(distance_km) / cfg.taps as f64;
    let scale = (tap_var / 2.0).sqrt();
    (0..cfg.taps)
        .map(|_| {
            let (re, im) = standard_normal_pair(rng);
            Complex64::new(scale * re, scale * im)
        })
        .collect()
}

/// `|h_k|^2` for `h_k = sum_t c_t exp(-j 2 pi k t / K)`, k = 0..K-1.
pub fn taps_to_subcarrier_gains(taps: &[Complex64], k: usize) -> Vec<f64> {
    (0..k)
        .map(|bin| {
            taps.iter()
                .enumerate()
                .map(|(t, &c)| {
                    // reduce the phase index first to keep the angle small
                    let idx = (bin * t) % k;
                    c * Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / k as f64)
                })
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect()
}

/// Normalized channel power gains for all subcarriers and users.
///
/// `g_su` and `g_ru` are stored row-major as `[k * U + u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    k: usize,
    users: usize,
    g_sr: Vec<f64>,
    g_su: Vec<f64>,
    g_ru: Vec<f64>,
}

impl GainTable {
    /// Builds a table from per-subcarrier rows; `g_su[k][u]`, `g_ru[k][u]`.
    pub fn new(g_sr: Vec<f64>, g_su: Vec<Vec<f64>>, g_ru: Vec<Vec<f64>>) -> Result<Self> {
        let k = g_sr.len();
        if k == 0 {
            return Err(Error::InvalidInput("gain table has no subcarriers".into()));
        }
        let users = g_su.first().map_or(0, Vec::len);
        if users == 0 {
            return Err(Error::InvalidInput("gain table has no users".into()));
        }
        if g_su.len() != k || g_ru.len() != k {
            return Err(Error::InvalidInput(format!(
                "expected {k} rows, got {} source-user and {} relay-user rows",
                g_su.len(),
                g_ru.len()
            )));
        }
        if g_su.iter().chain(&g_ru).any(|row| row.len() != users) {
            return Err(Error::InvalidInput("ragged gain rows".into()));
        }
        let table = Self {
            k,
            users,
            g_sr,
            g_su: g_su.concat(),
            g_ru: g_ru.concat(),
        };
        table.check_entries()?;
        Ok(table)
    }

    fn check_entries(&self) -> Result<()> {
        let ok = |g: &f64| g.is_finite() && *g >= 0.0;
        if self.g_sr.iter().chain(&self.g_su).chain(&self.g_ru).all(ok) {
            Ok(())
        } else {
            Err(Error::InvalidInput("gains must be finite and nonnegative".into()))
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn sr(&self, k: usize) -> f64 {
        self.g_sr[k]
    }

    pub fn su(&self, k: usize, u: usize) -> f64 {
        self.g_su[k * self.users + u]
    }

    pub fn ru(&self, k: usize, u: usize) -> f64 {
        self.g_ru[k * self.users + u]
    }

    pub fn g_sr(&self) -> &[f64] {
        &self.g_sr
    }

    /// Source-user gains, row-major `[k * U + u]`.
    pub fn g_su(&self) -> &[f64] {
        &self.g_su
    }

    /// Returns a copy with subcarriers relabeled: entry `k` of the result is
    /// entry `perm[k]` of `self`.
    pub fn permute_subcarriers(&self, perm: &[usize]) -> Self {
        let u = self.users;
        let mut out = self.clone();
        for (k, &src) in perm.iter().enumerate() {
            out.g_sr[k] = self.g_sr[src];
            out.g_su[k * u..(k + 1) * u].copy_from_slice(&self.g_su[src * u..(src + 1) * u]);
            out.g_ru[k * u..(k + 1) * u].copy_from_slice(&self.g_ru[src * u..(src + 1) * u]);
        }
        out
    }

    /// Returns a copy with users relabeled: user `u` of the result is user
    /// `perm[u]` of `self`.
    pub fn permute_users(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for k in 0..self.k {
            for (u, &src) in perm.iter().enumerate() {
                out.g_su[k * self.users + u] = self.su(k, src);
                out.g_ru[k * self.users + u] = self.ru(k, src);
            }
        }
        out
    }
}

/// Draws the geometry and every link's subcarrier gains for `cfg.seed`.
pub fn build_gain_table(cfg: &SystemConfig) -> Result<(Geometry, GainTable)> {
    cfg.validate()?;
    let geometry = sample_geometry(cfg, &mut stream(cfg.seed, GEOMETRY_STREAM));
    let link = |distance: f64, index: u64| {
        let taps = sample_impulse_response(distance, cfg, &mut stream(cfg.seed, index));
        taps_to_subcarrier_gains(&taps, cfg.k)
    };

    let g_sr = link(cfg.d_km, SOURCE_RELAY_STREAM);
    let su_links: Vec<Vec<f64>> = (0..cfg.users)
        .map(|u| link(geometry.d_su[u], source_user_stream(u)))
        .collect();
    let ru_links: Vec<Vec<f64>> = (0..cfg.users)
        .map(|u| link(geometry.d_ru[u], relay_user_stream(cfg.users, u)))
        .collect();

    let transpose =
        |links: &[Vec<f64>]| -> Vec<f64> { (0..cfg.k).flat_map(|k| links.iter().map(move |l| l[k])).collect() };
    let table = GainTable {
        k: cfg.k,
        users: cfg.users,
        g_sr,
        g_su: transpose(&su_links),
        g_ru: transpose(&ru_links),
    };
    table.check_entries()?;
    Ok((geometry, table))
}
