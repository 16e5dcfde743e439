mod common;

use proptest::prelude::*;
use simal_core::sim::{
    simulate_metapop, simulate_seir, MobilityGraph, NodeSeeds, Scenario, E, I, R, S,
};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn first_day_infections_match_binomial_mean() {
    let sc = Scenario { horizon: 1, ..Scenario::seir_default(2.0, 0.45) };
    let draws: Vec<f64> = (0..100_000u64)
        .map(|seed| simulate_seir(&sc, seed).unwrap().flows(0, 0)[0] as f64)
        .collect();
    let (m, se) = mean_se(&draws);
    let s0 = 96_000.0;
    let expected = s0 * -(-2.0f64 * 2000.0 / 100_000.0).exp_m1();
    assert!((m - expected).abs() < 3.0 * se, "mean {m}, expected {expected}, se {se}");
}

#[test]
fn identity_graph_decouples_nodes() {
    let seeds = 10_000u64;
    let horizon = 20;
    let single = Scenario {
        horizon,
        population: 5_000,
        e0: 20,
        i0: 20,
        ..Scenario::seir_default(2.0, 0.45)
    };
    let meta = Scenario {
        nodes: Some(NodeSeeds {
            populations: vec![5_000; 3],
            e0: vec![20; 3],
            i0: vec![20; 3],
        }),
        ..single.clone()
    };
    let g = MobilityGraph::identity(3);
    let mut base = vec![Vec::new(); horizon];
    let mut nodes = vec![vec![Vec::new(); horizon]; 3];
    for seed in 0..seeds {
        let a = simulate_seir(&single, seed).unwrap();
        let b = simulate_metapop(&meta, &g, seed + 1_000_000).unwrap();
        for t in 0..horizon {
            base[t].push(a.state(t, 0)[I] as f64);
            for d in 0..3 {
                nodes[d][t].push(b.state(t, d)[I] as f64);
            }
        }
    }
    for t in [2, 5, 10, 19] {
        let (m0, s0) = mean_se(&base[t]);
        for node in &nodes {
            let (m1, s1) = mean_se(&node[t]);
            let tol = 3.0 * (s0 * s0 + s1 * s1).sqrt();
            assert!((m0 - m1).abs() < tol, "day {t}: {m0} vs {m1} (tol {tol})");
        }
    }
}

#[test]
fn fully_mixing_reaches_every_node() {
    let sc = Scenario {
        horizon: 30,
        nodes: Some(NodeSeeds {
            populations: vec![10_000; 4],
            e0: vec![50, 0, 0, 0],
            i0: vec![50, 0, 0, 0],
        }),
        ..Scenario::seir_default(3.5, 0.5)
    };
    let g = MobilityGraph::fully_mixing(4);
    let runs = 200;
    let reached = (0..runs)
        .filter(|&seed| {
            let tr = simulate_metapop(&sc, &g, seed).unwrap();
            (1..4).all(|d| (0..30).any(|t| tr.state(t, d)[E] > 0))
        })
        .count();
    assert_eq!(reached, runs as usize);
}

#[test]
fn zero_beta_metapop_only_drains_seeds() {
    let sc = Scenario {
        horizon: 15,
        nodes: Some(NodeSeeds {
            populations: vec![1_000, 2_000],
            e0: vec![10, 0],
            i0: vec![5, 0],
        }),
        ..Scenario::seir_default(0.0, 0.45)
    };
    let tr = simulate_metapop(&sc, &MobilityGraph::fully_mixing(2), 4).unwrap();
    for t in 0..15 {
        assert_eq!(tr.state(t, 0)[S], 985);
        assert_eq!(tr.state(t, 1), [2_000, 0, 0, 0]);
    }
}

#[test]
fn graph_row_sums_are_enforced() {
    assert!(MobilityGraph::from_transition(2, vec![0.6, 0.5, 0.5, 0.5]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_are_conserved_and_monotone(
        beta in 0.0f64..6.0,
        eps in 0.01f64..1.0,
        mu in 0.05f64..3.0,
        pop in 1u64..50_000,
        e_frac in 0.0f64..0.5,
        i_frac in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let e0 = (pop as f64 * e_frac) as u64;
        let i0 = (pop as f64 * i_frac) as u64;
        let sc = Scenario { beta, epsilon: eps, mu, horizon: 60, population: pop, e0, i0, nodes: None };
        let tr = simulate_seir(&sc, seed).unwrap();
        let mut prev = [pop - e0 - i0, e0, i0, 0];
        for t in 0..60 {
            let s = tr.state(t, 0);
            prop_assert_eq!(s.iter().sum::<u64>(), pop);
            prop_assert!(s[S] <= prev[S] && s[R] >= prev[R]);
            let f = tr.flows(t, 0);
            prop_assert_eq!(prev[S] - s[S], f[0]);
            prop_assert_eq!(s[R] - prev[R], f[2]);
            prev = s;
        }
    }
}
