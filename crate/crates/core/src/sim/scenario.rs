use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-node populations and initial seeds for the metapopulation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSeeds {
    pub populations: Vec<u64>,
    pub e0: Vec<u64>,
    pub i0: Vec<u64>,
}

/// One simulator configuration.
///
/// Rates are per day. `population`, `e0` and `i0` describe the single
/// population model; when `nodes` is set they are ignored in favor of the
/// per-node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub beta: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub horizon: usize,
    pub population: u64,
    pub e0: u64,
    pub i0: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<NodeSeeds>,
}

impl Scenario {
    /// The SEIR configuration used for the acquisition comparison: N = 1e5,
    /// E0 = I0 = 2000, one-day infectious period, 100 days.
    pub fn seir_default(beta: f64, epsilon: f64) -> Self {
        Scenario {
            beta,
            epsilon,
            mu: 1.0,
            horizon: 100,
            population: 100_000,
            e0: 2_000,
            i0: 2_000,
            nodes: None,
        }
    }

    /// `nodes` equal subpopulations totalling 1e5, seeded only at node 0
    /// with 2% of its population split evenly between E and I.
    pub fn metapop_default(beta: f64, epsilon: f64, nodes: usize) -> Self {
        let per = 100_000 / nodes.max(1) as u64;
        let seed = per / 100;
        let mut e0 = vec![0; nodes];
        let mut i0 = vec![0; nodes];
        if nodes > 0 {
            e0[0] = seed;
            i0[0] = seed;
        }
        Scenario {
            nodes: Some(NodeSeeds {
                populations: vec![per; nodes],
                e0,
                i0,
            }),
            ..Scenario::seir_default(beta, epsilon)
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.as_ref().map_or(1, |n| n.populations.len())
    }

    /// Population, E0 and I0 of node `d`.
    pub fn node_init(&self, d: usize) -> (u64, u64, u64) {
        match &self.nodes {
            Some(n) => (n.populations[d], n.e0[d], n.i0[d]),
            None => (self.population, self.e0, self.i0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(msg));
        if !self.beta.is_finite() || self.beta < 0.0 {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be > 0, got {}", self.mu));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least one day".into());
        }
        if let Some(n) = &self.nodes {
            let d = n.populations.len();
            if d == 0 || n.e0.len() != d || n.i0.len() != d {
                return bad("per-node populations and seeds must have equal, nonzero length".into());
            }
        }
        for d in 0..self.node_count() {
            let (pop, e0, i0) = self.node_init(d);
            if pop == 0 {
                return bad(format!("node {d} has zero population"));
            }
            if e0 + i0 > pop {
                return bad(format!("node {d}: E0 + I0 = {} exceeds N = {pop}", e0 + i0));
            }
        }
        Ok(())
    }
}
