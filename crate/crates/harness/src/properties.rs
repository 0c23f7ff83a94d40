//! Randomized property suites over the closed forms and the multiplier
//! machinery. Each suite returns a [`PropertyCheck`] instead of panicking so
//! that `validate` can report every outcome in one verdict.

use rand_chacha::ChaCha8Rng;
use relay_ofdma::channel::{stream, uniform, DRIVER_STREAM};
use relay_ofdma::dual::{mu_upper_bound, solve_lrp};
use relay_ofdma::pair_gains::{
    effective_gain_benchmark, effective_gain_proposed, optimal_split_benchmark, optimal_split_proposed, snr_relay_aided,
};
use relay_ofdma::{GainTable, LinkGains, PairGainTable, PairSplit, Protocol};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    pub pass: bool,
    /// First failing case, or a summary statistic when everything passed.
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: &str, cases: u64, failures: u64, first_failure: Option<String>, summary: String) -> Self {
        Self {
            name: name.to_owned(),
            cases,
            failures,
            pass: failures == 0,
            detail: first_failure.unwrap_or(summary),
        }
    }
}

/// Log-uniform gain in `[1e-3, 1e3]`, with occasional exact ties and zeros
/// so the branch boundaries are exercised.
fn random_tuple(rng: &mut ChaCha8Rng) -> LinkGains {
    let mut draw = || 10f64.powf(-3.0 + 6.0 * uniform(rng));
    let mut g = LinkGains::new(draw(), draw(), draw(), draw());
    match (uniform(rng) * 20.0) as u32 {
        0 => g.g_su_l = 0.0,
        1 => g.g_ru_l = g.g_su_k,
        2 => g.g_sr = g.g_su_k,
        _ => {}
    }
    g
}

/// The proposed effective gain never falls below the benchmark one, and the
/// two coincide exactly when both fall back to direct transmission or the
/// second-slot source gain vanishes (so the formulas agree).
pub fn gain_dominance(cases: u64, seed: u64) -> PropertyCheck {
    let mut rng = stream(seed, DRIVER_STREAM);
    let (mut failures, mut first) = (0u64, None);
    let mut strict = 0u64;
    for _ in 0..cases {
        let g = random_tuple(&mut rng);
        let (prop, bench) = (effective_gain_proposed(&g), effective_gain_benchmark(&g));
        let relay_p = g.g_sr.min(g.g_su_l + g.g_ru_l) > g.g_su_k;
        let relay_b = g.g_sr.min(g.g_ru_l) > g.g_su_k;
        let should_tie = (!relay_p && !relay_b) || (relay_p && relay_b && g.g_su_l == 0.0);
        let ok = if should_tie { prop == bench } else { prop > bench };
        strict += u64::from(prop > bench);
        if !ok {
            failures += 1;
            first.get_or_insert_with(|| format!("{g:?}: proposed {prop} vs benchmark {bench}"));
        }
    }
    PropertyCheck::new(
        "gain-dominance",
        cases,
        failures,
        first,
        format!("{strict} strict, {} ties", cases - strict),
    )
}

/// Destination-limited SNR of a split: both hops must decode.
fn min_snr(g: &LinkGains, p_s1: f64, p_s2: f64, p_r: f64) -> f64 {
    (g.g_sr * p_s1).min(snr_relay_aided(g, p_s1, p_s2, p_r))
}

/// Best min-SNR over a `points`-per-axis grid of the power simplex.
fn grid_best(g: &LinkGains, p: f64, points: usize, beamforming: bool) -> f64 {
    let step = p / points as f64;
    let mut best = 0.0f64;
    for i in 0..=points {
        let p_s1 = i as f64 * step;
        let j_max = if beamforming { points - i } else { 0 };
        for j in 0..=j_max {
            let p_s2 = j as f64 * step;
            let p_r = (p - p_s1 - p_s2).max(0.0);
            best = best.max(min_snr(g, p_s1, p_s2, p_r));
        }
    }
    best
}

/// The closed-form split attains `G_eff * P` and no grid point beats it.
pub fn split_optimality(cases: u64, powers: &[f64], grid_points: usize, seed: u64) -> PropertyCheck {
    const GRID_SLACK: f64 = 1e-12;
    const SPLIT_TOL: f64 = 1e-9;
    let mut rng = stream(seed, DRIVER_STREAM);
    let (mut failures, mut first) = (0u64, None);
    let mut worst_split = 0.0f64;
    let mut checked = 0u64;
    for _ in 0..cases {
        let g = random_tuple(&mut rng);
        for &p in powers {
            let variants: [(&str, f64, PairSplit, bool); 2] = [
                (
                    "proposed",
                    effective_gain_proposed(&g),
                    optimal_split_proposed(&g, p),
                    true,
                ),
                (
                    "benchmark",
                    effective_gain_benchmark(&g),
                    optimal_split_benchmark(&g, p),
                    false,
                ),
            ];
            for (name, g_eff, split, beamforming) in variants {
                checked += 1;
                let target = g_eff * p;
                let achieved = min_snr(&g, split.p_s1, split.p_s2, split.p_r);
                let split_err = (achieved - target).abs() / target.max(f64::MIN_POSITIVE);
                worst_split = worst_split.max(split_err);
                let budget_err = (split.total() - p).abs() / p;
                let grid = grid_best(&g, p, grid_points, beamforming);
                let ok = split_err <= SPLIT_TOL && budget_err <= SPLIT_TOL && grid <= target * (1.0 + GRID_SLACK);
                if !ok {
                    failures += 1;
                    first.get_or_insert_with(|| {
                        format!("{name} {g:?} P={p}: target {target}, split {achieved}, grid {grid}")
                    });
                }
            }
        }
    }
    PropertyCheck::new(
        "split-optimality",
        checked,
        failures,
        first,
        format!("worst closed-form relative error {worst_split:.3e}"),
    )
}

/// The subgradient `P_tot - P(mu)` is nondecreasing along `mus`.
pub fn subgradient_monotone(
    gains: &GainTable,
    weights: &[f64],
    p_tot: f64,
    protocol: Protocol,
    mus: &[f64],
) -> Result<Option<String>> {
    let table = PairGainTable::build(gains, protocol);
    let mut prev: Option<(f64, f64)> = None;
    for &mu in mus {
        let g = solve_lrp(&table, weights, mu, p_tot)?.subgradient;
        if let Some((prev_mu, prev_g)) = prev {
            if g < prev_g - 1e-9 * p_tot {
                return Ok(Some(format!(
                    "{}: g({prev_mu:.6e}) = {prev_g:.9e} > g({mu:.6e}) = {g:.9e}",
                    protocol.name()
                )));
            }
        }
        prev = Some((mu, g));
    }
    Ok(None)
}

/// `count` increasing multipliers spanning `(0, mu_bound]`, denser near 0
/// where the allocated power changes fastest.
pub fn mu_grid(k: usize, weights: &[f64], p_tot: f64, count: usize) -> Vec<f64> {
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let top = mu_upper_bound(k, w_max, p_tot);
    (1..=count).map(|j| top * (j as f64 / count as f64).powi(3)).collect()
}
