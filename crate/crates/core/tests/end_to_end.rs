use relay_ofdma::{build_gain_table, evaluate_wsr, oracle_solve, solve, Protocol, SolverOptions, SystemConfig};

const PROTOCOLS: [Protocol; 3] = [
    Protocol::Proposed,
    Protocol::Benchmark1,
    Protocol::Benchmark2 { same_user: true },
];

fn scenario(k: usize, users: usize, seed: u64, d_km: f64, snr_db: f64) -> SystemConfig {
    let mut cfg = SystemConfig::new(k, users);
    cfg.seed = seed;
    cfg.d_km = d_km;
    cfg.ptot_over_sigma2_db = snr_db;
    cfg.taps = cfg.taps.min(k);
    cfg.weights = (0..users).map(|u| 0.8 + 0.1 * u as f64).collect();
    cfg
}

#[test]
fn solver_stays_within_its_certificate_of_the_oracle() {
    for seed in 0..12u64 {
        let cfg = scenario(
            2 + (seed as usize % 3),
            1 + (seed as usize % 2),
            seed,
            0.1 + 0.07 * seed as f64,
            5.0 * seed as f64,
        );
        let (_, gains) = build_gain_table(&cfg).unwrap();
        for protocol in PROTOCOLS {
            let (alloc, report) =
                solve(&gains, &cfg.weights, cfg.p_tot(), protocol, &SolverOptions::default()).unwrap();
            let audited = evaluate_wsr(&alloc, &gains, &cfg.weights, cfg.p_tot(), protocol).unwrap();
            assert!((audited - report.wsr).abs() <= 1e-9 * report.wsr.max(1.0));

            let best = oracle_solve(&gains, &cfg.weights, cfg.p_tot(), protocol).unwrap().wsr;
            let tol = 1e-6 * best.max(1.0);
            assert!(
                report.wsr <= best + tol,
                "seed {seed} {protocol:?}: solver beats oracle"
            );
            assert!(
                best <= report.dual_value + tol,
                "seed {seed} {protocol:?}: oracle above dual bound"
            );
            assert!(
                best <= report.wsr * (1.0 + report.delta) + tol,
                "seed {seed} {protocol:?}: certificate {} does not cover {best} vs {}",
                report.delta,
                report.wsr
            );
        }
    }
}

#[test]
fn relabeling_subcarriers_and_users_preserves_the_optimum() {
    for seed in 0..6u64 {
        let cfg = scenario(16, 4, 100 + seed, 0.3, 20.0);
        let (_, gains) = build_gain_table(&cfg).unwrap();
        let sub_perm: Vec<usize> = (0..16).map(|i| (5 * i + seed as usize) % 16).collect();
        let user_perm = [2, 0, 3, 1];
        let relabeled = gains.permute_subcarriers(&sub_perm).permute_users(&user_perm);
        let weights: Vec<f64> = user_perm.iter().map(|&u| cfg.weights[u]).collect();
        for protocol in [Protocol::Proposed, Protocol::Benchmark1] {
            let opts = SolverOptions::default();
            let (_, a) = solve(&gains, &cfg.weights, cfg.p_tot(), protocol, &opts).unwrap();
            let (_, b) = solve(&relabeled, &weights, cfg.p_tot(), protocol, &opts).unwrap();
            assert!(
                (a.dual_value - b.dual_value).abs() <= 1e-9 * a.dual_value,
                "{protocol:?}"
            );
            assert!(
                (a.wsr - b.wsr).abs() <= 1e-9 * a.wsr + 1e-6,
                "{protocol:?}: {} vs {}",
                a.wsr,
                b.wsr
            );
        }
    }
}

#[test]
fn channel_draws_are_reproducible() {
    let cfg = scenario(32, 5, 9, 0.4, 20.0);
    let (geo_a, a) = build_gain_table(&cfg).unwrap();
    let (geo_b, b) = build_gain_table(&cfg).unwrap();
    assert_eq!(geo_a, geo_b);
    assert_eq!(a, b);
    let (_, c) = build_gain_table(&SystemConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn proposed_dominates_the_benchmarks() {
    for seed in 0..8u64 {
        let cfg = scenario(32, 5, 300 + seed, 0.2 + 0.1 * seed as f64, 20.0);
        let (_, gains) = build_gain_table(&cfg).unwrap();
        let dual = |p| {
            solve(&gains, &cfg.weights, cfg.p_tot(), p, &SolverOptions::default())
                .unwrap()
                .1
                .dual_value
        };
        let (proposed, bp1, bp2) = (dual(PROTOCOLS[0]), dual(PROTOCOLS[1]), dual(PROTOCOLS[2]));
        assert!(proposed >= bp1 * (1.0 - 1e-9), "seed {seed}");
        assert!(bp1 >= bp2 * (1.0 - 1e-9), "seed {seed}");
    }
}
