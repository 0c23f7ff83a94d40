//! Closed-form rate maximization for one subcarrier pair in relay-aided mode.
//!
//! For a pair `(k, l)` serving user `u` with sum power `P`, the achievable rate
//! is `R(min{G_sr,k p_s1, SNR(p_s1, p_s2, p_r)})`. The maximum over the power
//! simplex equals `R(G_eff P)`, where `G_eff` is the effective gain of the
//! protocol. Because `R` is increasing, it suffices to maximize the minimum of
//! the relay-decoding SNR and the destination SNR, which is a piecewise-linear
//! problem once the second-slot beamforming split is fixed at the
//! Cauchy-Schwarz equality point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `R(x) = log2(1 + x) / 2`, in bits per OFDM symbol.
#[inline]
pub fn rate(snr: f64) -> f64 {
    debug_assert!(snr >= 0.0, "negative SNR {snr}");
    0.5 * snr.ln_1p() * std::f64::consts::LOG2_E
}

/// [`rate`] with input validation.
pub fn checked_rate(snr: f64) -> Result<f64> {
    if snr.is_nan() || snr < 0.0 {
        return Err(Error::InvalidInput(format!("SNR must be nonnegative, got {snr}")));
    }
    Ok(rate(snr))
}

/// Channel gains seen by the pair `(k, l)` for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    /// Source-to-relay gain on `k`.
    pub g_sr: f64,
    /// Source-to-user gain on `k` (first slot).
    pub g_su_k: f64,
    /// Source-to-user gain on `l` (second slot).
    pub g_su_l: f64,
    /// Relay-to-user gain on `l`.
    pub g_ru_l: f64,
}

impl LinkGains {
    pub fn new(g_sr: f64, g_su_k: f64, g_su_l: f64, g_ru_l: f64) -> Self {
        Self {
            g_sr,
            g_su_k,
            g_su_l,
            g_ru_l,
        }
    }

    /// `G_sr,k - G_su,k`.
    pub fn diff(&self) -> f64 {
        self.g_sr - self.g_su_k
    }

    /// `G_su,l + G_ru,l`, the beamforming gain available in the second slot.
    pub fn beamforming_sum(&self) -> f64 {
        self.g_su_l + self.g_ru_l
    }

    fn direct_only(&self) -> f64 {
        self.g_sr.min(self.g_su_k)
    }
}

/// Optimal power split for one pair and the rate it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSplit {
    /// Source power on `k` in the first slot.
    pub p_s1: f64,
    /// Source power on `l` in the second slot.
    pub p_s2: f64,
    /// Relay power on `l`.
    pub p_r: f64,
    pub rate: f64,
}

impl PairSplit {
    pub fn total(&self) -> f64 {
        self.p_s1 + self.p_s2 + self.p_r
    }
}

/// Destination SNR after maximum-ratio combining of both slots.
pub fn snr_relay_aided(g: &LinkGains, p_s1: f64, p_s2: f64, p_r: f64) -> f64 {
    let beam = (g.g_su_l * p_s2).sqrt() + (g.g_ru_l * p_r).sqrt();
    g.g_su_k * p_s1 + beam * beam
}

/// Rate actually delivered by an arbitrary split: both the relay and the
/// destination must decode.
pub fn split_rate(g: &LinkGains, p_s1: f64, p_s2: f64, p_r: f64) -> f64 {
    rate((g.g_sr * p_s1).min(snr_relay_aided(g, p_s1, p_s2, p_r)))
}

/// Effective gain with source/relay beamforming in the second slot.
pub fn effective_gain_proposed(g: &LinkGains) -> f64 {
    let b = g.beamforming_sum();
    if g.g_sr.min(b) > g.g_su_k {
        g.g_sr * b / (g.diff() + b)
    } else {
        g.direct_only()
    }
}

/// Effective gain when the source is silent in the second slot.
pub fn effective_gain_benchmark(g: &LinkGains) -> f64 {
    if g.g_sr.min(g.g_ru_l) > g.g_su_k {
        g.g_sr * g.g_ru_l / (g.diff() + g.g_ru_l)
    } else {
        g.direct_only()
    }
}

/// Closed-form `G_proposed - G_benchmark`, valid when
/// `min{g_sr, g_ru_l} > g_su_k`.
pub fn protocol_gap(g: &LinkGains) -> f64 {
    let diff = g.diff();
    diff * g.g_su_l * g.g_sr / ((diff + g.g_su_l + g.g_ru_l) * (diff + g.g_ru_l))
}

pub fn optimal_split_proposed(g: &LinkGains, p: f64) -> PairSplit {
    let b = g.beamforming_sum();
    if g.g_sr.min(b) > g.g_su_k {
        let diff = g.diff();
        let second = diff / (diff + b) * p;
        PairSplit {
            p_s1: b / (diff + b) * p,
            p_s2: g.g_su_l / b * second,
            p_r: g.g_ru_l / b * second,
            rate: rate(effective_gain_proposed(g) * p),
        }
    } else {
        PairSplit {
            p_s1: p,
            p_s2: 0.0,
            p_r: 0.0,
            rate: rate(g.direct_only() * p),
        }
    }
}

pub fn optimal_split_benchmark(g: &LinkGains, p: f64) -> PairSplit {
    if g.g_sr.min(g.g_ru_l) > g.g_su_k {
        let diff = g.diff();
        PairSplit {
            p_s1: g.g_ru_l / (diff + g.g_ru_l) * p,
            p_s2: 0.0,
            p_r: diff / (diff + g.g_ru_l) * p,
            rate: rate(effective_gain_benchmark(g) * p),
        }
    } else {
        PairSplit {
            p_s1: p,
            p_s2: 0.0,
            p_r: 0.0,
            rate: rate(g.direct_only() * p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Best `min{relay SNR, destination SNR}` over a simplex grid with
    /// `n` steps per axis.
    fn grid_best(g: &LinkGains, p: f64, n: usize, beamforming: bool) -> f64 {
        let h = p / n as f64;
        let mut best = 0.0f64;
        for i in 0..=n {
            let p1 = i as f64 * h;
            let rest = n - i;
            let js: Box<dyn Iterator<Item = usize>> = if beamforming {
                Box::new(0..=rest)
            } else {
                Box::new(0..=0)
            };
            for j in js {
                let p2 = j as f64 * h;
                let pr = (p - p1 - p2).max(0.0);
                let v = (g.g_sr * p1).min(snr_relay_aided(g, p1, p2, pr));
                best = best.max(v);
            }
        }
        best
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0), 0.0);
        assert!(close(rate(3.0), 1.0, 1e-15));
        assert!(close(rate(1.0), 0.5, 1e-15));
        assert!(checked_rate(-1.0).is_err());
        assert!(checked_rate(f64::NAN).is_err());
    }

    #[test]
    fn snr_examples() {
        let g = LinkGains::new(0.0, 1.0, 2.0, 3.0);
        assert!(close(snr_relay_aided(&g, 5.0, 1.2, 1.8), 20.0, 1e-12));
        assert_eq!(snr_relay_aided(&g, 0.0, 0.0, 0.0), 0.0);
        assert!(close(snr_relay_aided(&g, 2.0, 0.0, 4.0), 1.0 * 2.0 + 3.0 * 4.0, 1e-15));
    }

    #[test]
    fn proposed_gain_examples() {
        let g = LinkGains::new(4.0, 1.0, 2.0, 3.0);
        assert!(close(effective_gain_proposed(&g), 2.5, 1e-15));
        // grid search confirms the closed form on this tuple
        assert!(close(grid_best(&g, 1.0, 400, true), 2.5, 1e-3));

        assert_eq!(effective_gain_proposed(&LinkGains::new(1.0, 2.0, 5.0, 5.0)), 1.0);

        let g = LinkGains::new(4.0, 1.0, 0.0, 3.0);
        assert!(close(effective_gain_proposed(&g), 2.0, 1e-15));
        assert_eq!(effective_gain_proposed(&g), effective_gain_benchmark(&g));
    }

    #[test]
    fn benchmark_gain_examples() {
        let g = LinkGains::new(4.0, 1.0, 2.0, 3.0);
        assert!(close(effective_gain_benchmark(&g), 2.0, 1e-15));
        assert!(close(grid_best(&g, 1.0, 2000, false), 2.0, 1e-3));
        assert_eq!(effective_gain_benchmark(&LinkGains::new(4.0, 5.0, 2.0, 3.0)), 4.0);

        let gap = effective_gain_proposed(&g) - effective_gain_benchmark(&g);
        assert!(close(gap, 0.5, 1e-15));
        assert!(close(protocol_gap(&g), 3.0 * 2.0 * 4.0 / (8.0 * 6.0), 1e-15));
        assert!(close(protocol_gap(&g), gap, 1e-14));
    }

    #[test]
    fn proposed_split_example() {
        let g = LinkGains::new(4.0, 1.0, 2.0, 3.0);
        let s = optimal_split_proposed(&g, 8.0);
        assert!(close(s.p_s1, 5.0, 1e-14));
        assert!(close(s.p_s2, 1.2, 1e-14));
        assert!(close(s.p_r, 1.8, 1e-14));
        assert!(close(g.g_sr * s.p_s1, 20.0, 1e-14));
        assert!(close(snr_relay_aided(&g, s.p_s1, s.p_s2, s.p_r), 20.0, 1e-12));
        assert!(close(s.rate, rate(20.0), 1e-15));
        assert!(grid_best(&g, 8.0, 200, true) <= 20.0 * (1.0 + 1e-12));
    }

    #[test]
    fn split_degenerate_cases() {
        let g = LinkGains::new(1.0, 2.0, 5.0, 5.0);
        let s = optimal_split_proposed(&g, 5.0);
        assert_eq!((s.p_s1, s.p_s2, s.p_r), (5.0, 0.0, 0.0));
        let s = optimal_split_benchmark(&g, 5.0);
        assert_eq!((s.p_s1, s.p_s2, s.p_r), (5.0, 0.0, 0.0));

        let g = LinkGains::new(4.0, 1.0, 2.0, 3.0);
        for s in [optimal_split_proposed(&g, 0.0), optimal_split_benchmark(&g, 0.0)] {
            assert_eq!(s.total(), 0.0);
            assert_eq!(s.rate, 0.0);
        }

        let zero = LinkGains::new(0.0, 0.0, 0.0, 0.0);
        let s = optimal_split_proposed(&zero, 3.0);
        assert_eq!((s.p_s1, s.rate), (3.0, 0.0));
        assert_eq!(effective_gain_benchmark(&zero), 0.0);
    }

    #[test]
    fn benchmark_split_example() {
        let g = LinkGains::new(4.0, 1.0, 2.0, 3.0);
        let s = optimal_split_benchmark(&g, 6.0);
        assert!(close(s.p_s1, 3.0, 1e-15));
        assert!(close(s.p_r, 3.0, 1e-15));
        assert_eq!(s.p_s2, 0.0);
        assert!(close(g.g_sr * s.p_s1, 12.0, 1e-14));
        assert!(close(snr_relay_aided(&g, s.p_s1, 0.0, s.p_r), 12.0, 1e-14));
    }

    #[test]
    fn gain_is_continuous_at_branch_boundary() {
        // min{g_sr, B} approaches g_su_k from above
        let g_su_k = 2.0;
        for eps in [1e-3, 1e-6, 1e-9] {
            let above = LinkGains::new(g_su_k + eps, g_su_k, 3.0, 4.0);
            let below = LinkGains::new(g_su_k - eps, g_su_k, 3.0, 4.0);
            let jump = effective_gain_proposed(&above) - effective_gain_proposed(&below);
            assert!(jump.abs() < 10.0 * eps, "jump {jump} at eps {eps}");

            let above = LinkGains::new(5.0, g_su_k, 1.0, 1.0 + eps);
            let below = LinkGains::new(5.0, g_su_k, 1.0, 1.0 - eps);
            let jump = effective_gain_proposed(&above) - effective_gain_proposed(&below);
            assert!(jump.abs() < 10.0 * eps, "jump {jump} at eps {eps}");

            let above = LinkGains::new(5.0, g_su_k, 0.0, g_su_k + eps);
            let below = LinkGains::new(5.0, g_su_k, 0.0, g_su_k - eps);
            let jump = effective_gain_benchmark(&above) - effective_gain_benchmark(&below);
            assert!(jump.abs() < 10.0 * eps, "jump {jump} at eps {eps}");
        }
    }

    fn gain() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), 0.0..10.0f64, 1e-3..1e3f64]
    }

    fn tuple() -> impl Strategy<Value = LinkGains> {
        (gain(), gain(), gain(), gain()).prop_map(|(a, b, c, d)| LinkGains::new(a, b, c, d))
    }

    /// Tuples with `min{g_sr, g_ru_l} > g_su_k`.
    fn relay_favoured() -> impl Strategy<Value = LinkGains> {
        (0.0..10.0f64, 1e-6..50.0f64, gain(), 1e-6..50.0f64)
            .prop_map(|(su_k, d_sr, su_l, d_ru)| LinkGains::new(su_k + d_sr, su_k, su_l, su_k + d_ru))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn proposed_dominates_benchmark(g in tuple()) {
            prop_assert!(effective_gain_proposed(&g) >= effective_gain_benchmark(&g));
        }

        #[test]
        fn gap_formula_matches_difference(g in relay_favoured()) {
            let diff = effective_gain_proposed(&g) - effective_gain_benchmark(&g);
            prop_assert!(close(diff, protocol_gap(&g), 1e-10));
        }

        #[test]
        fn gap_monotone_in_relay_gains(g in relay_favoured(), step in 1e-4..1.0f64) {
            let gap = |g: &LinkGains| effective_gain_proposed(g) - effective_gain_benchmark(g);
            let base = gap(&g);
            let up_sr = LinkGains { g_sr: g.g_sr + step, ..g };
            prop_assert!(gap(&up_sr) >= base - 1e-12 * base.abs().max(1.0));
            let up_ru = LinkGains { g_ru_l: g.g_ru_l + step, ..g };
            prop_assert!(gap(&up_ru) <= base + 1e-12 * base.abs().max(1.0));
        }

        #[test]
        fn splits_are_feasible_and_tight(g in tuple(), p in 0.0..100.0f64) {
            for (s, geff) in [
                (optimal_split_proposed(&g, p), effective_gain_proposed(&g)),
                (optimal_split_benchmark(&g, p), effective_gain_benchmark(&g)),
            ] {
                prop_assert!(s.p_s1 >= 0.0 && s.p_s2 >= 0.0 && s.p_r >= 0.0);
                prop_assert!((s.total() - p).abs() <= 1e-9 * p.max(1e-300));
                let achieved = (g.g_sr * s.p_s1).min(snr_relay_aided(&g, s.p_s1, s.p_s2, s.p_r));
                prop_assert!(close(achieved, geff * p, 1e-9), "{} vs {}", achieved, geff * p);
                prop_assert!(close(s.rate, rate(geff * p), 1e-12));
            }
            // beamforming split sits at the Cauchy-Schwarz equality point
            let s = optimal_split_proposed(&g, p);
            let p2 = s.p_s2 + s.p_r;
            if p2 > 0.0 {
                let beam = (g.g_su_l * s.p_s2).sqrt() + (g.g_ru_l * s.p_r).sqrt();
                prop_assert!(close(beam * beam, g.beamforming_sum() * p2, 1e-9));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn grid_search_never_beats_closed_form(g in tuple(), pi in 0usize..3) {
            let p = [0.1, 1.0, 10.0][pi];
            let geff = effective_gain_proposed(&g);
            let best = grid_best(&g, p, 200, true);
            prop_assert!(best <= geff * p * (1.0 + 1e-9) + 1e-300);
            let geff = effective_gain_benchmark(&g);
            let best = grid_best(&g, p, 200, false);
            prop_assert!(best <= geff * p * (1.0 + 1e-9) + 1e-300);
        }
    }
}
