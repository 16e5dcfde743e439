//! Runs the SEIR active-learning loop for one acquisition function and
//! prints the test MAE per round. A third argument trains the offline
//! reference for that many steps instead.
//!
//! cargo run --release -p simal-core --example seir_active -- lig 0

use std::time::Instant;

use simal_core::acquisition::Acquisition;
use simal_core::active::{run_active_loop, train_offline, Features, LoopConfig, RunOptions, SimDataset, SimulatorSource};
use simal_core::sim::{default_initial_ids, default_split, SeirSimulator, DEFAULT_BETA, DEFAULT_EPSILON};

fn main() -> simal_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let acq: Acquisition = args.get(1).map_or("lig", String::as_str).parse()?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = LoopConfig::seir(acq, seed);
    cfg.min_rounds = cfg.max_rounds;
    let sim = SeirSimulator;
    let src = SimulatorSource { simulator: &sim, features: Features::Infectious, samples: cfg.samples, base_seed: seed };
    if let Some(steps) = args.get(3).and_then(|s| s.parse().ok()) {
        let t = Instant::now();
        let mut tc = simal_core::np::TrainConfig::offline();
        tc.steps = steps;
        let off = train_offline(&default_split(), &cfg, &tc, &src)?;
        println!("offline mae {:.2} after {} steps in {:.1?}", off.test_mae, off.train.steps_run, t.elapsed());
        return Ok(());
    }
    let mut ds = SimDataset::new(default_split(), &default_initial_ids(DEFAULT_BETA, DEFAULT_EPSILON)?, &src)?;
    let t = Instant::now();
    let report = run_active_loop(&mut ds, &cfg, &src, &RunOptions::default())?;
    for m in &report.metrics {
        println!("round {:>2}  {:>5.2}%  mae {:>9.2}  val {:>8.4}", m.round, m.pct_data, m.test_mae, m.val_loss);
    }
    let picks: Vec<usize> = report.choices.iter().map(|c| c.scenario_id).collect();
    println!("picked {picks:?} in {:.1?}", t.elapsed());
    Ok(())
}
