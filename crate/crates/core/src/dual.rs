//! Dual method for the relaxed allocation problem.
//!
//! The total-power constraint is priced with a multiplier `mu`. For a fixed
//! `mu` the Lagrangian separates over (real or virtual) subcarrier pairs:
//! every channel receives the water-filling power `Lambda(w, mu, G)`, each pair
//! `(k, l)` takes the better of the relay-aided mode and two direct
//! transmissions, and the pairing itself is a maximum-weight perfect matching
//! on the resulting `K x K` metric matrix. The multiplier is located by
//! bisection on the sign of the subgradient `P_tot - sum P`, and the solution
//! of the Lagrangian relaxation at the final upper bracket is returned as the
//! allocation, together with the relative duality-gap certificate
//! `delta = mu_max * g(mu_max) / f`.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentSolver, SquareMatrix};
use crate::channel::GainTable;
use crate::error::{Error, Result, Violation};
use crate::pair_gains::{
    effective_gain_benchmark, effective_gain_proposed, optimal_split_benchmark, optimal_split_proposed, rate,
    split_rate, LinkGains, PairSplit,
};

/// Subgradients within this fraction of `P_tot` count as zero.
pub const STATIONARY_TOL: f64 = 1e-9;
/// Relative slack allowed on the total-power constraint by the audit.
pub const POWER_TOL: f64 = 1e-9;
/// Relative tolerance for the pair-split rate check in the audit.
pub const SPLIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Source and relay beamform on the second-slot subcarrier of a pair.
    Proposed,
    /// The source is silent on the second-slot subcarrier of a pair.
    Benchmark1,
    /// `Benchmark1` restricted to pairing subcarrier `k` with subcarrier `k`.
    /// With `same_user`, an unpaired diagonal couple serves a single user in
    /// both slots.
    Benchmark2 { same_user: bool },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Proposed => "proposed",
            Protocol::Benchmark1 => "bp1",
            Protocol::Benchmark2 { .. } => "bp2",
        }
    }

    pub fn effective_gain(&self, g: &LinkGains) -> f64 {
        match self {
            Protocol::Proposed => effective_gain_proposed(g),
            _ => effective_gain_benchmark(g),
        }
    }

    pub fn optimal_split(&self, g: &LinkGains, p: f64) -> PairSplit {
        match self {
            Protocol::Proposed => optimal_split_proposed(g, p),
            _ => optimal_split_benchmark(g, p),
        }
    }

    /// Whether pairing is fixed to `k <-> k`.
    pub fn identity_pairing(&self) -> bool {
        matches!(self, Protocol::Benchmark2 { .. })
    }

    fn same_user_directs(&self) -> bool {
        matches!(self, Protocol::Benchmark2 { same_user: true })
    }
}

/// Effective pair gains `G_klu` for one protocol, plus the raw link gains
/// needed to recover power splits.
#[derive(Debug, Clone)]
pub struct PairGainTable {
    protocol: Protocol,
    k: usize,
    users: usize,
    /// `[(k * K + l) * U + u]`
    g_eff: Vec<f64>,
    /// `log2` and reciprocal of `g_eff`, so the per-multiplier metric needs
    /// no transcendental calls per entry.
    eff_log: Vec<f64>,
    eff_inv: Vec<f64>,
    /// The same for the direct gains, `[k * U + u]`.
    su_log: Vec<f64>,
    su_inv: Vec<f64>,
    gains: GainTable,
}

impl PairGainTable {
    pub fn build(gains: &GainTable, protocol: Protocol) -> Self {
        let (k_n, u_n) = (gains.k(), gains.users());
        let mut g_eff = Vec::with_capacity(k_n * k_n * u_n);
        for k in 0..k_n {
            for l in 0..k_n {
                for u in 0..u_n {
                    let link = LinkGains::new(gains.sr(k), gains.su(k, u), gains.su(l, u), gains.ru(l, u));
                    g_eff.push(protocol.effective_gain(&link));
                }
            }
        }
        let su: Vec<f64> = (0..k_n).flat_map(|k| (0..u_n).map(move |u| gains.su(k, u))).collect();
        Self {
            protocol,
            k: k_n,
            users: u_n,
            eff_log: g_eff.iter().map(|g| g.log2()).collect(),
            eff_inv: g_eff.iter().map(|g| g.recip()).collect(),
            su_log: su.iter().map(|g| g.log2()).collect(),
            su_inv: su.iter().map(|g| g.recip()).collect(),
            g_eff,
            gains: gains.clone(),
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn eff(&self, k: usize, l: usize, u: usize) -> f64 {
        self.g_eff[(k * self.k + l) * self.users + u]
    }

    /// Direct gain of subcarrier `k` to user `u` in the first slot.
    #[inline]
    pub fn direct_1(&self, k: usize, u: usize) -> f64 {
        self.gains.su(k, u)
    }

    /// Direct gain of subcarrier `l` to user `u` in the second slot.
    #[inline]
    pub fn direct_2(&self, l: usize, u: usize) -> f64 {
        self.gains.su(l, u)
    }

    pub fn link(&self, k: usize, l: usize, u: usize) -> LinkGains {
        let g = &self.gains;
        LinkGains::new(g.sr(k), g.su(k, u), g.su(l, u), g.ru(l, u))
    }

    fn has_positive_gain(&self) -> bool {
        let direct = (0..self.k).any(|k| (0..self.users).any(|u| self.direct_1(k, u) > 0.0));
        direct || self.g_eff.iter().any(|&g| g > 0.0)
    }
}

/// Water-filling power `[w log2(e) / (2 mu) - 1/G]^+`.
#[inline]
pub fn lambda_power(w: f64, mu: f64, g: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    (w * LOG2_E / (2.0 * mu) - 1.0 / g).max(0.0)
}

/// Best value of `w R(G x) - mu x` over `x >= 0`, and the maximizing power.
#[inline]
pub fn channel_metric(w: f64, mu: f64, g: f64) -> (f64, f64) {
    let power = lambda_power(w, mu, g);
    if power == 0.0 {
        return (0.0, 0.0);
    }
    (w * rate(g * power) - mu * power, power)
}

/// Upper bound on the optimal multiplier: `K w_max log2(e) / P_tot`.
pub fn mu_upper_bound(k: usize, w_max: f64, p_tot: f64) -> f64 {
    k as f64 * w_max * LOG2_E / p_tot
}

/// Best single-channel choice: metric, user and water-filling power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelChoice {
    pub metric: f64,
    pub user: usize,
    pub power: f64,
}

impl ChannelChoice {
    const IDLE: Self = Self {
        metric: 0.0,
        user: 0,
        power: 0.0,
    };

    /// Best user for one channel whose per-user gains, `log2` gains and
    /// reciprocal gains are the given slices. Ties go to the lowest user.
    fn best_over_users(price: &Price, gains: &[f64], logs: &[f64], invs: &[f64]) -> Self {
        let mut best = Self {
            metric: price.metric(0, gains[0], logs[0], invs[0]),
            ..Self::IDLE
        };
        for u in 1..gains.len() {
            let metric = price.metric(u, gains[u], logs[u], invs[u]);
            if metric > best.metric {
                best = Self {
                    metric,
                    user: u,
                    power: 0.0,
                };
            }
        }
        best.power = lambda_power(price.weights[best.user], price.mu, gains[best.user]);
        best
    }
}

/// Per-user constants of the channel metric at one multiplier.
struct Price<'a> {
    mu: f64,
    weights: &'a [f64],
    /// Water level `w log2(e) / (2 mu)`.
    level: Vec<f64>,
    half_w: Vec<f64>,
    /// `w/2 log2(level) - w/2 log2(e)`.
    offset: Vec<f64>,
}

impl<'a> Price<'a> {
    fn new(weights: &'a [f64], mu: f64) -> Self {
        let level: Vec<f64> = weights.iter().map(|w| w * LOG2_E / (2.0 * mu)).collect();
        let half_w: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
        let offset = level
            .iter()
            .zip(&half_w)
            .map(|(l, h)| h * l.log2() - h * LOG2_E)
            .collect();
        Self {
            mu,
            weights,
            level,
            half_w,
            offset,
        }
    }

    /// [`channel_metric`] from precomputed `log2 g` and `1/g`: with positive
    /// power, `w R(G L) - mu L = w/2 log2 G + w/2 log2(level) - w/2 log2 e + mu/G`.
    #[inline]
    fn metric(&self, u: usize, g: f64, log_g: f64, inv_g: f64) -> f64 {
        if g * self.level[u] <= 1.0 {
            return 0.0;
        }
        (self.half_w[u] * log_g + self.offset[u] + self.mu * inv_g).max(0.0)
    }
}

/// Mode selected for a (real or virtual) pair `(k, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairRole {
    Relay { user: usize, power: f64 },
    Direct { a: usize, p: f64, b: usize, q: f64 },
}

impl PairRole {
    fn power(&self) -> f64 {
        match *self {
            PairRole::Relay { power, .. } => power,
            PairRole::Direct { p, q, .. } => p + q,
        }
    }
}

/// Per-pair metrics of the Lagrangian relaxation at one multiplier.
///
/// The direct-mode metric of a pair is additively separable over the two
/// slots, so only the per-slot best direct choices are kept.
#[derive(Debug, Clone)]
pub struct LrpMetrics {
    k: usize,
    relay: Vec<ChannelChoice>,
    direct_1: Vec<ChannelChoice>,
    direct_2: Vec<ChannelChoice>,
    /// Same-user direct couples on the diagonal: metric, user, p, q.
    same_user: Option<Vec<(f64, usize, f64, f64)>>,
    c: SquareMatrix,
}

impl LrpMetrics {
    /// `C_kl`; pairs the protocol forbids are `-inf`.
    pub fn c(&self) -> &SquareMatrix {
        &self.c
    }

    /// `max_u A_klu` with its user.
    pub fn relay_best(&self, k: usize, l: usize) -> ChannelChoice {
        self.relay[k * self.k + l]
    }

    /// `max_{a,b} B_klab`.
    pub fn direct_best(&self, k: usize, l: usize) -> f64 {
        match &self.same_user {
            Some(diag) => {
                debug_assert_eq!(k, l);
                diag[k].0
            }
            None => self.direct_1[k].metric + self.direct_2[l].metric,
        }
    }

    /// Mode attaining `C_kl`. The relay-aided mode wins ties with a positive
    /// metric; pairs whose every metric is zero stay direct and idle.
    pub fn role(&self, k: usize, l: usize) -> PairRole {
        let relay = self.relay_best(k, l);
        let direct = self.direct_best(k, l);
        if relay.metric > direct || (relay.metric == direct && relay.metric > 0.0) {
            return PairRole::Relay {
                user: relay.user,
                power: relay.power,
            };
        }
        match &self.same_user {
            Some(diag) => {
                let (_, u, p, q) = diag[k];
                PairRole::Direct { a: u, p, b: u, q }
            }
            None => {
                let (d1, d2) = (self.direct_1[k], self.direct_2[l]);
                PairRole::Direct {
                    a: d1.user,
                    p: d1.power,
                    b: d2.user,
                    q: d2.power,
                }
            }
        }
    }
}

pub fn lrp_metrics(table: &PairGainTable, weights: &[f64], mu: f64) -> LrpMetrics {
    let (k_n, u_n) = (table.k, table.users);
    let price = Price::new(weights, mu);
    let su = table.gains.g_su();
    let direct: Vec<ChannelChoice> = (0..k_n)
        .map(|k| {
            let r = k * u_n..(k + 1) * u_n;
            ChannelChoice::best_over_users(&price, &su[r.clone()], &table.su_log[r.clone()], &table.su_inv[r])
        })
        .collect();
    // both slots see the same source-user gains
    let direct_1 = direct.clone();
    let direct_2 = direct;

    let same_user = table.protocol.same_user_directs().then(|| {
        (0..k_n)
            .map(|k| {
                let mut best = (f64::NEG_INFINITY, 0, 0.0, 0.0);
                for (u, &w) in weights.iter().enumerate() {
                    let (m1, p) = channel_metric(w, mu, table.direct_1(k, u));
                    let (m2, q) = channel_metric(w, mu, table.direct_2(k, u));
                    if m1 + m2 > best.0 {
                        best = (m1 + m2, u, p, q);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    });

    let identity = table.protocol.identity_pairing();
    let mut relay = vec![ChannelChoice::IDLE; k_n * k_n];
    for k in 0..k_n {
        for l in 0..k_n {
            if identity && k != l {
                continue;
            }
            let r = (k * k_n + l) * u_n..(k * k_n + l + 1) * u_n;
            relay[k * k_n + l] = ChannelChoice::best_over_users(
                &price,
                &table.g_eff[r.clone()],
                &table.eff_log[r.clone()],
                &table.eff_inv[r],
            );
        }
    }

    let mut metrics = LrpMetrics {
        k: k_n,
        relay,
        direct_1,
        direct_2,
        same_user,
        c: SquareMatrix::filled(k_n, f64::NEG_INFINITY),
    };
    for k in 0..k_n {
        for l in 0..k_n {
            if identity && k != l {
                continue;
            }
            let best = metrics.relay_best(k, l).metric.max(metrics.direct_best(k, l));
            metrics.c.set(k, l, best);
        }
    }
    metrics
}

/// Allocated subcarrier pair in relay-aided mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayPair {
    pub k: usize,
    pub l: usize,
    pub user: usize,
    pub p_s1: f64,
    pub p_s2: f64,
    pub p_r: f64,
}

impl RelayPair {
    pub fn total(&self) -> f64 {
        self.p_s1 + self.p_s2 + self.p_r
    }
}

/// Direct source transmission on one subcarrier of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectLink {
    pub index: usize,
    pub user: usize,
    pub power: f64,
}

/// A complete resource allocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub pairs: Vec<RelayPair>,
    /// Direct transmissions on first-slot subcarriers.
    pub directs_1: Vec<DirectLink>,
    /// Direct transmissions on second-slot subcarriers.
    pub directs_2: Vec<DirectLink>,
}

impl Allocation {
    pub fn total_power(&self) -> f64 {
        self.pairs.iter().map(RelayPair::total).sum::<f64>()
            + self.directs_1.iter().map(|d| d.power).sum::<f64>()
            + self.directs_2.iter().map(|d| d.power).sum::<f64>()
    }

    /// Number of subcarrier pairs in relay-aided mode.
    pub fn n_sp(&self) -> usize {
        self.pairs.len()
    }

    fn sort(&mut self) {
        self.pairs.sort_by_key(|p| p.k);
        self.directs_1.sort_by_key(|d| d.index);
        self.directs_2.sort_by_key(|d| d.index);
    }
}

/// Builds an allocation from a pairing and per-pair roles.
fn materialize(table: &PairGainTable, pairing: &[(usize, usize, PairRole)]) -> Allocation {
    let mut alloc = Allocation::default();
    for &(k, l, role) in pairing {
        match role {
            PairRole::Relay { user, power } => {
                let s = table.protocol.optimal_split(&table.link(k, l, user), power);
                alloc.pairs.push(RelayPair {
                    k,
                    l,
                    user,
                    p_s1: s.p_s1,
                    p_s2: s.p_s2,
                    p_r: s.p_r,
                });
            }
            PairRole::Direct { a, p, b, q } => {
                alloc.directs_1.push(DirectLink {
                    index: k,
                    user: a,
                    power: p,
                });
                alloc.directs_2.push(DirectLink {
                    index: l,
                    user: b,
                    power: q,
                });
            }
        }
    }
    alloc.sort();
    alloc
}

/// Maximum-weight perfect matching on `C`.
///
/// Without fixed pairing the direct-mode term of `C_kl` is `d1[k] + d2[l]`,
/// which every perfect matching collects in full, so matching on the surplus
/// `C_kl - d1[k] - d2[l] >= 0` is equivalent. The surplus is zero wherever the
/// direct mode wins, which keeps warm-started solves across nearby
/// multipliers cheap.
fn best_pairing(metrics: &LrpMetrics, solver: &mut AssignmentSolver) -> Result<Vec<usize>> {
    let n = metrics.k;
    let mut surplus = SquareMatrix::filled(n, 0.0);
    for k in 0..n {
        for l in 0..n {
            let gain = metrics.relay_best(k, l).metric - metrics.direct_best(k, l);
            if gain > 0.0 {
                surplus.set(k, l, gain);
            }
        }
    }
    Ok(solver.solve(&surplus)?.perm)
}

/// Optimum of the Lagrangian relaxation at one multiplier.
#[derive(Debug, Clone)]
pub struct LrpSolution {
    pub mu: f64,
    /// `(k, l, role)` for every matched pair, in increasing `k`.
    pub pairing: Vec<(usize, usize, PairRole)>,
    pub allocation: Allocation,
    /// Dual function value `d(mu) = mu P_tot + sum_k C_k,perm(k)`.
    pub lagrangian: f64,
    pub total_power: f64,
    /// `P_tot - total_power`.
    pub subgradient: f64,
}

pub fn solve_lrp(table: &PairGainTable, weights: &[f64], mu: f64, p_tot: f64) -> Result<LrpSolution> {
    solve_lrp_with(table, weights, mu, p_tot, &mut AssignmentSolver::default())
}

/// [`solve_lrp`] reusing the matching state of earlier multipliers.
fn solve_lrp_with(
    table: &PairGainTable,
    weights: &[f64],
    mu: f64,
    p_tot: f64,
    solver: &mut AssignmentSolver,
) -> Result<LrpSolution> {
    let metrics = lrp_metrics(table, weights, mu);
    let perm: Vec<usize> = if table.protocol.identity_pairing() {
        (0..table.k).collect()
    } else {
        best_pairing(&metrics, solver)?
    };
    let pairing: Vec<(usize, usize, PairRole)> = perm
        .iter()
        .enumerate()
        .map(|(k, &l)| (k, l, metrics.role(k, l)))
        .collect();
    let matched: f64 = perm.iter().enumerate().map(|(k, &l)| metrics.c().get(k, l)).sum();
    let total_power: f64 = pairing.iter().map(|(_, _, r)| r.power()).sum();
    Ok(LrpSolution {
        mu,
        allocation: materialize(table, &pairing),
        pairing,
        lagrangian: mu * p_tot + matched,
        total_power,
        subgradient: p_tot - total_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMode {
    /// The subgradient vanished at a bisection midpoint: the allocation is
    /// optimal.
    ExactStationary,
    /// The bracket shrank below `eps`; the allocation at the upper bracket is
    /// returned with its duality-gap certificate.
    ApproxUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub mu: f64,
    pub subgradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub protocol: Protocol,
    pub wsr: f64,
    pub mode: ExitMode,
    /// Relative gap certificate `mu_max g(mu_max) / wsr`; 0 for exact exits.
    pub delta: f64,
    pub n_sp: usize,
    pub mu_final: f64,
    /// Dual function value at `mu_final`; upper-bounds the optimal WSR.
    pub dual_value: f64,
    pub total_power: f64,
    /// Bisection iterations (the closing re-solve at `mu_max` is not counted).
    pub iterations: usize,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bisection stops once `mu_max - mu_min <= eps`.
    pub eps: f64,
    /// Spend leftover budget by water-filling at the final assignment.
    pub refill: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            refill: false,
        }
    }
}

fn check_weights(weights: &[f64], users: usize) -> Result<()> {
    if weights.len() != users {
        return Err(Error::InvalidInput(format!(
            "expected {users} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Weighted sum rate of an allocation, without auditing it.
fn wsr_unchecked(table: &PairGainTable, weights: &[f64], alloc: &Allocation) -> f64 {
    let relay: f64 = alloc
        .pairs
        .iter()
        .map(|p| weights[p.user] * rate(table.eff(p.k, p.l, p.user) * p.total()))
        .sum();
    let d1: f64 = alloc
        .directs_1
        .iter()
        .map(|d| weights[d.user] * rate(table.direct_1(d.index, d.user) * d.power))
        .sum();
    let d2: f64 = alloc
        .directs_2
        .iter()
        .map(|d| weights[d.user] * rate(table.direct_2(d.index, d.user) * d.power))
        .sum();
    relay + d1 + d2
}

/// Water-fills the full budget over the channels fixed by `pairing`, starting
/// from a multiplier `mu_hi` whose demand does not exceed `p_tot`.
fn refill(
    table: &PairGainTable,
    weights: &[f64],
    pairing: &[(usize, usize, PairRole)],
    mu_hi: f64,
    p_tot: f64,
) -> Vec<(usize, usize, PairRole)> {
    let at = |mu: f64| -> Vec<(usize, usize, PairRole)> {
        pairing
            .iter()
            .map(|&(k, l, role)| {
                let role = match role {
                    PairRole::Relay { user, .. } => PairRole::Relay {
                        user,
                        power: lambda_power(weights[user], mu, table.eff(k, l, user)),
                    },
                    PairRole::Direct { a, b, .. } => PairRole::Direct {
                        a,
                        p: lambda_power(weights[a], mu, table.direct_1(k, a)),
                        b,
                        q: lambda_power(weights[b], mu, table.direct_2(l, b)),
                    },
                };
                (k, l, role)
            })
            .collect()
    };
    let demand = |mu: f64| at(mu).iter().map(|(_, _, r)| r.power()).sum::<f64>();
    let usable = pairing.iter().any(|&(k, l, role)| match role {
        PairRole::Relay { user, .. } => table.eff(k, l, user) > 0.0,
        PairRole::Direct { a, b, .. } => table.direct_1(k, a) > 0.0 || table.direct_2(l, b) > 0.0,
    });
    if !usable {
        return pairing.to_vec();
    }
    let (mut lo, mut hi) = (0.0f64, mu_hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if demand(mid) > p_tot {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Runs the bisection dual method and returns the recovered allocation.
pub fn solve(
    gains: &GainTable,
    weights: &[f64],
    p_tot: f64,
    protocol: Protocol,
    opts: &SolverOptions,
) -> Result<(Allocation, SolveReport)> {
    if !(p_tot.is_finite() && p_tot > 0.0) {
        return Err(Error::InvalidInput(format!("P_tot must be positive, got {p_tot}")));
    }
    if !(opts.eps.is_finite() && opts.eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {}", opts.eps)));
    }
    check_weights(weights, gains.users())?;
    let table = PairGainTable::build(gains, protocol);

    if !table.has_positive_gain() {
        // every allocation has zero rate; report the idle one as optimal
        let sol = solve_lrp(&table, weights, mu_upper_bound(table.k, 1.0, p_tot), p_tot)?;
        let report = SolveReport {
            protocol,
            wsr: 0.0,
            mode: ExitMode::ExactStationary,
            delta: 0.0,
            n_sp: sol.allocation.n_sp(),
            mu_final: 0.0,
            dual_value: 0.0,
            total_power: 0.0,
            iterations: 0,
            trace: Vec::new(),
        };
        return Ok((sol.allocation, report));
    }

    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let (mut mu_min, mut mu_max) = (0.0, mu_upper_bound(table.k, w_max, p_tot));
    let mut at_max: Option<LrpSolution> = None;
    let mut trace = Vec::new();
    let mut matcher = AssignmentSolver::default();

    while mu_max - mu_min > opts.eps {
        let mu_mid = 0.5 * (mu_min + mu_max);
        let sol = solve_lrp_with(&table, weights, mu_mid, p_tot, &mut matcher)?;
        trace.push(TraceStep {
            mu: mu_mid,
            subgradient: sol.subgradient,
        });
        if sol.subgradient.abs() <= STATIONARY_TOL * p_tot {
            return Ok(finish(
                &table,
                weights,
                p_tot,
                sol,
                ExitMode::ExactStationary,
                trace,
                opts,
            ));
        }
        if sol.subgradient > 0.0 {
            mu_max = mu_mid;
            at_max = Some(sol);
        } else {
            mu_min = mu_mid;
        }
    }

    let sol = match at_max {
        Some(sol) => sol,
        None => solve_lrp_with(&table, weights, mu_max, p_tot, &mut matcher)?,
    };
    Ok(finish(
        &table,
        weights,
        p_tot,
        sol,
        ExitMode::ApproxUpperBound,
        trace,
        opts,
    ))
}

fn finish(
    table: &PairGainTable,
    weights: &[f64],
    p_tot: f64,
    sol: LrpSolution,
    mode: ExitMode,
    trace: Vec<TraceStep>,
    opts: &SolverOptions,
) -> (Allocation, SolveReport) {
    let allocation = if opts.refill {
        materialize(table, &refill(table, weights, &sol.pairing, sol.mu, p_tot))
    } else {
        sol.allocation.clone()
    };
    let wsr = wsr_unchecked(table, weights, &allocation);
    let delta = match mode {
        ExitMode::ExactStationary => 0.0,
        ExitMode::ApproxUpperBound => {
            // `d(mu_max) - wsr` bounds the shortfall from the optimum. Without
            // refill it equals `mu_max g(mu_max)` exactly; after refill the
            // achieved WSR has grown and the bound tightens accordingly.
            let bound = if opts.refill {
                (sol.lagrangian - wsr).max(0.0)
            } else {
                sol.mu * sol.subgradient
            };
            if wsr > 0.0 {
                bound / wsr
            } else if bound == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    };
    let report = SolveReport {
        protocol: table.protocol,
        wsr,
        mode,
        delta,
        n_sp: allocation.n_sp(),
        mu_final: sol.mu,
        dual_value: sol.lagrangian,
        total_power: allocation.total_power(),
        iterations: trace.len(),
        trace,
    };
    (allocation, report)
}

/// Audits an allocation against every constraint of the problem and returns
/// its weighted sum rate.
pub fn evaluate_wsr(
    alloc: &Allocation,
    gains: &GainTable,
    weights: &[f64],
    p_tot: f64,
    protocol: Protocol,
) -> Result<f64> {
    check_weights(weights, gains.users())?;
    let (k_n, u_n) = (gains.k(), gains.users());
    let fail = |v: Violation| Err(Error::Infeasible(v));

    let mut slot1 = vec![0usize; k_n];
    let mut slot2 = vec![0usize; k_n];
    let mut slot1_user = vec![usize::MAX; k_n];
    let mut slot2_user = vec![usize::MAX; k_n];
    let check_power = |what: &'static str, index: usize, value: f64| {
        if value.is_finite() && value >= 0.0 {
            Ok(())
        } else {
            Err(Error::Infeasible(Violation::InvalidPower { what, index, value }))
        }
    };

    for p in &alloc.pairs {
        for (what, value, limit) in [
            ("subcarrier", p.k, k_n),
            ("subcarrier", p.l, k_n),
            ("user", p.user, u_n),
        ] {
            if value >= limit {
                return fail(Violation::OutOfRange { what, value });
            }
        }
        slot1[p.k] += 1;
        slot2[p.l] += 1;
        check_power("relay-pair first-slot source", p.k, p.p_s1)?;
        check_power("relay-pair second-slot source", p.l, p.p_s2)?;
        check_power("relay", p.l, p.p_r)?;
    }
    for (slot, list, counts, users) in [
        (1u8, &alloc.directs_1, &mut slot1, &mut slot1_user),
        (2u8, &alloc.directs_2, &mut slot2, &mut slot2_user),
    ] {
        for d in list {
            if d.index >= k_n {
                return fail(Violation::OutOfRange {
                    what: "subcarrier",
                    value: d.index,
                });
            }
            if d.user >= u_n {
                return fail(Violation::OutOfRange {
                    what: "user",
                    value: d.user,
                });
            }
            counts[d.index] += 1;
            users[d.index] = d.user;
            check_power(
                if slot == 1 {
                    "first-slot direct"
                } else {
                    "second-slot direct"
                },
                d.index,
                d.power,
            )?;
        }
    }
    for (slot, counts) in [(1u8, &slot1), (2u8, &slot2)] {
        if let Some((index, &count)) = counts.iter().enumerate().find(|(_, &c)| c != 1) {
            return fail(Violation::Coverage { slot, index, count });
        }
    }

    let used = alloc.total_power();
    if used > p_tot * (1.0 + POWER_TOL) {
        return fail(Violation::PowerBudget { used, budget: p_tot });
    }

    if protocol != Protocol::Proposed {
        if let Some(p) = alloc.pairs.iter().find(|p| p.p_s2 != 0.0) {
            return fail(Violation::Protocol(format!(
                "source transmits on second-slot subcarrier {} of pair ({},{}) under {}",
                p.l,
                p.k,
                p.l,
                protocol.name()
            )));
        }
    }
    if protocol.identity_pairing() {
        if let Some(p) = alloc.pairs.iter().find(|p| p.k != p.l) {
            return fail(Violation::Protocol(format!(
                "pair ({},{}) is off-diagonal under bp2",
                p.k, p.l
            )));
        }
        if protocol.same_user_directs() {
            for k in 0..k_n {
                if slot1_user[k] != usize::MAX && slot1_user[k] != slot2_user[k] {
                    return fail(Violation::Protocol(format!(
                        "unpaired subcarrier {k} serves users {} and {} under bp2 with same-user directs",
                        slot1_user[k], slot2_user[k]
                    )));
                }
            }
        }
    }

    let mut wsr = 0.0;
    for p in &alloc.pairs {
        let link = LinkGains::new(
            gains.sr(p.k),
            gains.su(p.k, p.user),
            gains.su(p.l, p.user),
            gains.ru(p.l, p.user),
        );
        let optimal = rate(protocol.effective_gain(&link) * p.total());
        let achieved = split_rate(&link, p.p_s1, p.p_s2, p.p_r);
        if (achieved - optimal).abs() > SPLIT_TOL * optimal.max(1.0) {
            return fail(Violation::Split {
                k: p.k,
                l: p.l,
                achieved,
                optimal,
            });
        }
        wsr += weights[p.user] * optimal;
    }
    for d in &alloc.directs_1 {
        wsr += weights[d.user] * rate(gains.su(d.index, d.user) * d.power);
    }
    for d in &alloc.directs_2 {
        wsr += weights[d.user] * rate(gains.su(d.index, d.user) * d.power);
    }
    Ok(wsr)
}
