//! Exhaustive reference optimizer for tiny instances.
//!
//! Every discrete configuration (a partial matching of first-slot to
//! second-slot subcarriers in relay-aided mode with a user per pair, and a
//! user for each remaining direct subcarrier) is enumerated. For a fixed
//! configuration the objective is a sum of independent concave channels, so
//! the optimal powers follow from water-filling on a single scalar level. This
//! module shares no multiplier machinery with [`crate::dual`].

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::channel::GainTable;
use crate::dual::{Allocation, DirectLink, Protocol, RelayPair};
use crate::error::{Error, Result};
use crate::pair_gains::{rate, LinkGains};

pub const MAX_K: usize = 5;
pub const MAX_USERS: usize = 3;

/// One discrete configuration; powers are decided separately.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Configuration {
    /// `(k, l, user)` relay-aided pairs.
    pub pairs: Vec<(usize, usize, usize)>,
    /// `(k, user)` first-slot direct transmissions.
    pub directs_1: Vec<(usize, usize)>,
    /// `(l, user)` second-slot direct transmissions.
    pub directs_2: Vec<(usize, usize)>,
}

fn guard(k: usize, users: usize) -> Result<()> {
    if k == 0 || users == 0 || k > MAX_K || users > MAX_USERS {
        return Err(Error::TooLarge { k, users });
    }
    Ok(())
}

/// Calls `visit` once for every discrete configuration of the protocol.
pub fn enumerate_configurations(
    k: usize,
    users: usize,
    protocol: Protocol,
    mut visit: impl FnMut(&Configuration),
) -> Result<()> {
    guard(k, users)?;
    let mut cfg = Configuration::default();
    match protocol {
        Protocol::Benchmark2 { same_user } => diagonal(0, k, users, same_user, &mut cfg, &mut visit),
        _ => {
            let mut used_l = vec![false; k];
            matchings(0, k, users, &mut used_l, &mut cfg, &mut visit)
        }
    }
    Ok(())
}

/// Number of configurations `enumerate_configurations` visits.
pub fn count_configurations(k: usize, users: usize, protocol: Protocol) -> Result<u64> {
    let mut n = 0u64;
    enumerate_configurations(k, users, protocol, |_| n += 1)?;
    Ok(n)
}

fn matchings(
    k: usize,
    k_n: usize,
    users: usize,
    used_l: &mut [bool],
    cfg: &mut Configuration,
    visit: &mut impl FnMut(&Configuration),
) {
    if k == k_n {
        let free_l: Vec<usize> = (0..k_n).filter(|&l| !used_l[l]).collect();
        return direct_users_2(0, &free_l, users, cfg, visit);
    }
    // k unpaired: direct in slot 1 with any user
    for a in 0..users {
        cfg.directs_1.push((k, a));
        matchings(k + 1, k_n, users, used_l, cfg, visit);
        cfg.directs_1.pop();
    }
    for l in 0..k_n {
        if used_l[l] {
            continue;
        }
        used_l[l] = true;
        for u in 0..users {
            cfg.pairs.push((k, l, u));
            matchings(k + 1, k_n, users, used_l, cfg, visit);
            cfg.pairs.pop();
        }
        used_l[l] = false;
    }
}

fn direct_users_2(
    i: usize,
    free_l: &[usize],
    users: usize,
    cfg: &mut Configuration,
    visit: &mut impl FnMut(&Configuration),
) {
    if i == free_l.len() {
        return visit(cfg);
    }
    for b in 0..users {
        cfg.directs_2.push((free_l[i], b));
        direct_users_2(i + 1, free_l, users, cfg, visit);
        cfg.directs_2.pop();
    }
}

fn diagonal(
    k: usize,
    k_n: usize,
    users: usize,
    same_user: bool,
    cfg: &mut Configuration,
    visit: &mut impl FnMut(&Configuration),
) {
    if k == k_n {
        return visit(cfg);
    }
    for u in 0..users {
        cfg.pairs.push((k, k, u));
        diagonal(k + 1, k_n, users, same_user, cfg, visit);
        cfg.pairs.pop();
    }
    for a in 0..users {
        for b in 0..users {
            if same_user && a != b {
                continue;
            }
            cfg.directs_1.push((k, a));
            cfg.directs_2.push((k, b));
            diagonal(k + 1, k_n, users, same_user, cfg, visit);
            cfg.directs_1.pop();
            cfg.directs_2.pop();
        }
    }
}

/// Maximizes `sum_i w_i R(g_i p_i)` subject to `sum_i p_i = budget`.
///
/// The level `nu` solving `sum_i [w_i log2(e) / (2 nu) - 1/g_i]^+ = budget` is
/// bracketed by bisection to `1e-12`; the powers are then recomputed exactly
/// on the resulting active set.
pub fn water_fill(channels: &[(f64, f64)], budget: f64) -> Vec<f64> {
    let c = LOG2_E / 2.0;
    let powers_at = |nu: f64| -> Vec<f64> {
        channels
            .iter()
            .map(|&(w, g)| if g > 0.0 { (w * c / nu - 1.0 / g).max(0.0) } else { 0.0 })
            .collect()
    };
    let nu_hi = channels.iter().map(|&(w, g)| w * c * g).fold(0.0, f64::max);
    if nu_hi <= 0.0 || budget <= 0.0 {
        return vec![0.0; channels.len()];
    }
    // sum of powers is decreasing in nu and vanishes at nu_hi
    let (mut lo, mut hi) = (0.0f64, nu_hi);
    for _ in 0..2000 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if powers_at(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // exact solve on the active set: sum_active (w_i s - 1/g_i) = budget
    let active: Vec<bool> = powers_at(0.5 * (lo + hi)).iter().map(|&p| p > 0.0).collect();
    let (sw, sinv) = channels
        .iter()
        .zip(&active)
        .filter(|(_, &on)| on)
        .fold((0.0, 0.0), |(sw, si), (&(w, g), _)| (sw + w, si + 1.0 / g));
    if sw > 0.0 {
        let s = (budget + sinv) / sw;
        let exact: Vec<f64> = channels
            .iter()
            .zip(&active)
            .map(|(&(w, g), &on)| if on { w * s - 1.0 / g } else { 0.0 })
            .collect();
        if exact.iter().all(|&p| p >= 0.0) {
            return exact;
        }
    }
    powers_at(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub wsr: f64,
    pub allocation: Allocation,
    /// Number of discrete configurations examined.
    pub enumerated: u64,
}

/// Exact maximum weighted sum rate by exhaustive enumeration.
pub fn oracle_solve(gains: &GainTable, weights: &[f64], p_tot: f64, protocol: Protocol) -> Result<OracleResult> {
    let (k_n, users) = (gains.k(), gains.users());
    guard(k_n, users)?;
    if weights.len() != users || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive, one per user".into()));
    }
    if !(p_tot.is_finite() && p_tot > 0.0) {
        return Err(Error::InvalidInput(format!("P_tot must be positive, got {p_tot}")));
    }
    let link =
        |k: usize, l: usize, u: usize| LinkGains::new(gains.sr(k), gains.su(k, u), gains.su(l, u), gains.ru(l, u));

    let mut best: Option<(f64, Configuration, Vec<f64>)> = None;
    let mut enumerated = 0u64;
    let mut channels = Vec::with_capacity(2 * k_n);
    enumerate_configurations(k_n, users, protocol, |cfg| {
        enumerated += 1;
        channels.clear();
        channels.extend(
            cfg.pairs
                .iter()
                .map(|&(k, l, u)| (weights[u], protocol.effective_gain(&link(k, l, u)))),
        );
        channels.extend(cfg.directs_1.iter().map(|&(k, a)| (weights[a], gains.su(k, a))));
        channels.extend(cfg.directs_2.iter().map(|&(l, b)| (weights[b], gains.su(l, b))));
        let powers = water_fill(&channels, p_tot);
        let value: f64 = channels.iter().zip(&powers).map(|(&(w, g), &p)| w * rate(g * p)).sum();
        if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
            best = Some((value, cfg.clone(), powers));
        }
    })?;

    let (wsr, cfg, powers) = best.expect("at least one configuration");
    let mut powers = powers.into_iter();
    let mut allocation = Allocation::default();
    for &(k, l, user) in &cfg.pairs {
        let s = protocol.optimal_split(&link(k, l, user), powers.next().unwrap());
        allocation.pairs.push(RelayPair {
            k,
            l,
            user,
            p_s1: s.p_s1,
            p_s2: s.p_s2,
            p_r: s.p_r,
        });
    }
    for &(index, user) in &cfg.directs_1 {
        allocation.directs_1.push(DirectLink {
            index,
            user,
            power: powers.next().unwrap(),
        });
    }
    for &(index, user) in &cfg.directs_2 {
        allocation.directs_2.push(DirectLink {
            index,
            user,
            power: powers.next().unwrap(),
        });
    }
    allocation.pairs.sort_by_key(|p| p.k);
    allocation.directs_2.sort_by_key(|d| d.index);
    Ok(OracleResult {
        wsr,
        allocation,
        enumerated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{stream, uniform, uniform_in};
    use crate::dual::evaluate_wsr;

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn closed_form_count(k: u64, u: u64) -> u64 {
        (0..=k)
            .map(|m| {
                let fact: u64 = (1..=m).product();
                binom(k, m).pow(2) * fact * u.pow(m as u32) * u.pow(2 * (k - m) as u32)
            })
            .sum()
    }

    fn random_gains(seed: u64, k: usize, users: usize) -> GainTable {
        let mut rng = stream(seed, 91);
        let mut draw = || 10f64.powf(uniform_in(&mut rng, -1.0, 1.0));
        let g_sr = (0..k).map(|_| draw()).collect();
        let g_su = (0..k).map(|_| (0..users).map(|_| draw()).collect()).collect();
        let g_ru = (0..k).map(|_| (0..users).map(|_| draw()).collect()).collect();
        GainTable::new(g_sr, g_su, g_ru).unwrap()
    }

    #[test]
    fn hand_counts() {
        assert_eq!(count_configurations(1, 1, Protocol::Proposed).unwrap(), 2);
        assert_eq!(count_configurations(2, 1, Protocol::Proposed).unwrap(), 7);
    }

    #[test]
    fn count_matches_closed_form() {
        for k in 1..=3 {
            for u in 1..=2 {
                let n = count_configurations(k, u, Protocol::Benchmark1).unwrap();
                assert_eq!(n, closed_form_count(k as u64, u as u64), "K={k} U={u}");
            }
        }
    }

    #[test]
    fn diagonal_counts() {
        // each k: U relay choices, plus U (same user) or U^2 direct choices
        let n = count_configurations(3, 2, Protocol::Benchmark2 { same_user: true }).unwrap();
        assert_eq!(n, 4u64.pow(3));
        let n = count_configurations(3, 2, Protocol::Benchmark2 { same_user: false }).unwrap();
        assert_eq!(n, 6u64.pow(3));
    }

    #[test]
    fn configurations_are_ofdma_valid() {
        enumerate_configurations(3, 2, Protocol::Proposed, |cfg| {
            let mut s1 = [0; 3];
            let mut s2 = [0; 3];
            cfg.pairs.iter().for_each(|&(k, l, _)| {
                s1[k] += 1;
                s2[l] += 1;
            });
            cfg.directs_1.iter().for_each(|&(k, _)| s1[k] += 1);
            cfg.directs_2.iter().for_each(|&(l, _)| s2[l] += 1);
            assert_eq!(s1, [1; 3]);
            assert_eq!(s2, [1; 3]);
        })
        .unwrap();
    }

    #[test]
    fn size_guard() {
        assert!(matches!(
            count_configurations(6, 1, Protocol::Proposed),
            Err(Error::TooLarge { .. })
        ));
        assert!(count_configurations(2, 4, Protocol::Proposed).is_err());
    }

    #[test]
    fn water_fill_spends_budget() {
        let mut rng = stream(4, 0);
        for _ in 0..200 {
            let n = 1 + (uniform(&mut rng) * 8.0) as usize;
            let ch: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    (
                        uniform_in(&mut rng, 0.8, 1.2),
                        10f64.powf(uniform_in(&mut rng, -2.0, 2.0)),
                    )
                })
                .collect();
            let budget = 10f64.powf(uniform_in(&mut rng, -1.0, 3.0));
            let p = water_fill(&ch, budget);
            assert!(p.iter().all(|&x| x >= 0.0));
            let total: f64 = p.iter().sum();
            assert!((total - budget).abs() <= 1e-9 * budget, "{total} vs {budget}");
        }
    }

    #[test]
    fn water_fill_two_equal_channels_split_evenly() {
        let p = water_fill(&[(1.0, 2.0), (1.0, 2.0)], 6.0);
        assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] - 3.0).abs() < 1e-12);
        assert_eq!(water_fill(&[(1.0, 0.0), (1.0, 0.0)], 6.0), vec![0.0, 0.0]);
    }

    #[test]
    fn all_zero_gains() {
        let gains = GainTable::new(vec![0.0; 2], vec![vec![0.0]; 2], vec![vec![0.0]; 2]).unwrap();
        let r = oracle_solve(&gains, &[1.0], 4.0, Protocol::Proposed).unwrap();
        assert_eq!(r.wsr, 0.0);
    }

    #[test]
    fn single_subcarrier_without_relay_link() {
        let gains = GainTable::new(vec![0.0], vec![vec![1.5]], vec![vec![2.0]]).unwrap();
        let r = oracle_solve(&gains, &[1.1], 8.0, Protocol::Proposed).unwrap();
        assert_eq!(r.enumerated, 2);
        assert_eq!(r.allocation.n_sp(), 0);
        let want = 2.0 * 1.1 * rate(1.5 * 4.0);
        assert!((r.wsr - want).abs() < 1e-12 * want);
    }

    #[test]
    fn oracle_allocations_pass_audit() {
        for seed in 0..10 {
            let gains = random_gains(seed, 3, 2);
            let w = [1.0, 0.9];
            for protocol in [
                Protocol::Proposed,
                Protocol::Benchmark1,
                Protocol::Benchmark2 { same_user: true },
            ] {
                let r = oracle_solve(&gains, &w, 5.0, protocol).unwrap();
                let f = evaluate_wsr(&r.allocation, &gains, &w, 5.0, protocol).unwrap();
                assert!((f - r.wsr).abs() <= 1e-9 * r.wsr);
                assert!((r.allocation.total_power() - 5.0).abs() <= 1e-9 * 5.0);
            }
        }
    }

    #[test]
    fn invariant_under_relabeling() {
        for seed in 0..5 {
            let gains = random_gains(seed + 50, 3, 2);
            let w = [1.15, 0.85];
            let base = oracle_solve(&gains, &w, 3.0, Protocol::Proposed).unwrap().wsr;
            let sub = gains.permute_subcarriers(&[2, 0, 1]);
            let r = oracle_solve(&sub, &w, 3.0, Protocol::Proposed).unwrap().wsr;
            assert!((r - base).abs() <= 1e-9 * base);
            let usr = gains.permute_users(&[1, 0]);
            let r = oracle_solve(&usr, &[0.85, 1.15], 3.0, Protocol::Proposed).unwrap().wsr;
            assert!((r - base).abs() <= 1e-9 * base);
        }
    }
}
