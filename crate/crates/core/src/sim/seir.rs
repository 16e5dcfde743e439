use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::graph::MobilityGraph;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const S: usize = 0;
pub const E: usize = 1;
pub const I: usize = 2;
pub const R: usize = 3;

/// Simulated counts for days `1..=T`.
///
/// `states[t * nodes + d]` is the `[S, E, I, R]` state of node `d` at the end
/// of day `t + 1`; `incidence` holds the `[S→E, E→I, I→R]` flows during that
/// day with the same indexing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub states: Vec<[u64; 4]>,
    pub incidence: Vec<[u64; 3]>,
}

impl Trajectory {
    pub fn state(&self, t: usize, d: usize) -> [u64; 4] {
        self.states[t * self.nodes + d]
    }

    pub fn flows(&self, t: usize, d: usize) -> [u64; 3] {
        self.incidence[t * self.nodes + d]
    }

    /// Compartment `c` as a `T×D` row-major series.
    pub fn compartment(&self, c: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[c] as f64).collect()
    }

    /// Daily infectious prevalence of a single-population run.
    pub fn infectious(&self) -> Vec<f64> {
        self.compartment(I)
    }

    /// Per-node `[prevalence I, incidence S→E]` features, `T×D×2` row-major.
    pub fn node_features(&self) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.incidence)
            .flat_map(|(s, f)| [s[I] as f64, f[0] as f64])
            .collect()
    }
}

/// Something that turns a scenario and seed into a trajectory.
pub trait Simulator: Send + Sync {
    fn simulate(&self, scenario: &Scenario, seed: u64) -> Result<Trajectory>;
}

/// Single-population chain-binomial SEIR.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeirSimulator;

impl Simulator for SeirSimulator {
    fn simulate(&self, scenario: &Scenario, seed: u64) -> Result<Trajectory> {
        simulate_seir(scenario, seed)
    }
}

/// Contact-coupled metapopulation SEIR over a fixed graph.
#[derive(Clone, Debug)]
pub struct MetapopSimulator {
    pub graph: MobilityGraph,
}

impl Simulator for MetapopSimulator {
    fn simulate(&self, scenario: &Scenario, seed: u64) -> Result<Trajectory> {
        simulate_metapop(scenario, &self.graph, seed)
    }
}

fn hazard(rate: f64) -> f64 {
    -(-rate).exp_m1()
}

fn binomial(rng: &mut Rng, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    let dist = Binomial::new(n, p.min(1.0))
        .map_err(|e| Error::numerical(format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Chain-binomial SEIR with daily exponential hazards. All three transitions
/// are drawn from the start-of-day state and applied together.
pub fn simulate_seir(scenario: &Scenario, seed: u64) -> Result<Trajectory> {
    scenario.validate()?;
    if scenario.node_count() != 1 {
        return Err(Error::validation("simulate_seir expects a single population"));
    }
    run_chain_binomial(scenario, &[1.0], 1, seed)
}

/// Metapopulation SEIR. Node `d` sees force of infection
/// `β Σ_j M[d][j] I_j / N_j`; nobody moves, so node sizes stay fixed.
pub fn simulate_metapop(scenario: &Scenario, graph: &MobilityGraph, seed: u64) -> Result<Trajectory> {
    scenario.validate()?;
    graph.check_rows()?;
    let d = scenario.node_count();
    if d < 2 {
        return Err(Error::validation("simulate_metapop needs at least two nodes"));
    }
    if graph.size() != d {
        return Err(Error::validation(format!(
            "graph has {} nodes but the scenario has {d}",
            graph.size()
        )));
    }
    run_chain_binomial(scenario, graph.transition(), d, seed)
}

fn run_chain_binomial(scenario: &Scenario, mixing: &[f64], nodes: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = Rng::seed_from_u64(seed);
    let pops: Vec<f64> = (0..nodes).map(|d| scenario.node_init(d).0 as f64).collect();
    let mut state: Vec<[u64; 4]> = (0..nodes)
        .map(|d| {
            let (n, e0, i0) = scenario.node_init(d);
            [n - e0 - i0, e0, i0, 0]
        })
        .collect();
    let p_ei = hazard(scenario.epsilon);
    let p_ir = hazard(scenario.mu);
    let mut states = Vec::with_capacity(scenario.horizon * nodes);
    let mut incidence = Vec::with_capacity(scenario.horizon * nodes);
    let mut pressure = vec![0.0; nodes];
    for _ in 0..scenario.horizon {
        for (d, p) in pressure.iter_mut().enumerate() {
            let row = &mixing[d * nodes..(d + 1) * nodes];
            *p = row
                .iter()
                .zip(&state)
                .zip(&pops)
                .map(|((m, s), n)| m * s[I] as f64 / n)
                .sum();
        }
        for d in 0..nodes {
            let [s, e, i, r] = state[d];
            let se = binomial(&mut rng, s, hazard(scenario.beta * pressure[d]))?;
            let ei = binomial(&mut rng, e, p_ei)?;
            let ir = binomial(&mut rng, i, p_ir)?;
            state[d] = [s - se, e + se - ei, i + ei - ir, r + ir];
            states.push(state[d]);
            incidence.push([se, ei, ir]);
        }
    }
    Ok(Trajectory {
        nodes,
        horizon: scenario.horizon,
        seed,
        states,
        incidence,
    })
}
