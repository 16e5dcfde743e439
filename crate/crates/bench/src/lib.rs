//! Fixtures shared by the benchmarks.

use simal_core::active::Features;
use simal_core::np::{NpArchitecture, Sample, TrainConfig, TrainedSurrogate};
use simal_core::sim::{simulate_seir, Scenario};

/// `scenarios` SEIR scenarios on a β×ε line with `per` samples each.
pub fn seir_samples(scenarios: usize, per: usize, horizon: usize) -> Vec<Sample> {
    let mut out = Vec::with_capacity(scenarios * per);
    for i in 0..scenarios {
        let f = i as f64 / scenarios.max(2).saturating_sub(1) as f64;
        let sc = Scenario {
            horizon,
            ..Scenario::seir_default(1.1 + 2.9 * f, 0.25 + 0.4 * f)
        };
        for s in 0..per {
            let tr = simulate_seir(&sc, (i * 1000 + s) as u64).expect("valid scenario");
            out.push(Features::Infectious.sample(&sc, &tr));
        }
    }
    out
}

/// Default-size NP surrogate briefly trained on `train`.
pub fn trained_np(train: &[Sample], horizon: usize, steps: usize) -> TrainedSurrogate {
    let mut m = TrainedSurrogate::new(NpArchitecture::np(2, horizon), None, 0).expect("valid architecture");
    let cfg = TrainConfig {
        steps,
        ..Default::default()
    };
    m.train(train, &[], &cfg, 0).expect("training runs");
    m
}
