//! Stochastic epidemic simulators: single-population chain-binomial SEIR and
//! a contact-coupled metapopulation variant, plus scenario grids and dataset
//! files.

mod graph;
mod grid;
mod io;
mod scenario;
mod seir;

pub use graph::MobilityGraph;
pub use grid::{
    default_initial_ids, default_split, scenario_grid, split_grid, GridRange, LabeledScenario, Role,
    DEFAULT_BETA, DEFAULT_EPSILON,
};
pub use io::{
    generate, manifest_path, read_jsonl, sample_seed, sha256_hex, to_jsonl, write_atomic, Manifest,
    SimRecord, DATASET_FORMAT_VERSION,
};
pub use scenario::{NodeSeeds, Scenario};
pub use seir::{
    simulate_metapop, simulate_seir, MetapopSimulator, SeirSimulator, Simulator, Trajectory, E, I, R, S,
};
