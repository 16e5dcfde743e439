//! Trains an STNP on a small metapopulation dataset over the default
//! five-node ring and prints the loss before and after.
//!
//! cargo run --release -p simal-core --example stnp_metapop -- 0

use std::time::Instant;

use simal_core::active::Features;
use simal_core::np::{NpArchitecture, Sample, TrainConfig, TrainedSurrogate};
use simal_core::sim::{simulate_metapop, MobilityGraph, Scenario};

fn main() -> simal_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let graph = MobilityGraph::default_ring();
    let mut train = Vec::new();
    for (i, (b, e)) in [(1.5, 0.3), (2.0, 0.45), (2.5, 0.6), (3.0, 0.35), (3.5, 0.5), (4.0, 0.4)].into_iter().enumerate() {
        let sc = Scenario::metapop_default(b, e, graph.size());
        for s in 0..4 {
            let tr = simulate_metapop(&sc, &graph, (10 * i + s) as u64)?;
            train.push(Sample { theta: Features::Nodes.theta(&sc), x: Features::Nodes.x(&tr) });
        }
    }
    let arch = NpArchitecture::stnp(3, 2, 100, graph.size());
    let mut m = TrainedSurrogate::new(arch, Some(graph.transition().to_vec()), seed)?;
    let cfg = TrainConfig { context_fraction: 0.2, patience: 1000, ..Default::default() };
    let t = Instant::now();
    let r = m.train(&train, &[], &cfg, 0)?;
    println!("loss {:.4} -> {:.4} after {} steps in {:.1?}", r.initial_loss, r.final_loss, r.steps_run, t.elapsed());
    Ok(())
}
