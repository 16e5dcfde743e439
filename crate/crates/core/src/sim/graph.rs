use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling between metapopulation nodes.
///
/// Holds the raw nonnegative weights and the row-normalized matrix `M` used
/// both by the simulator (force-of-infection mixing) and by the diffusion
/// convolutions of the spatiotemporal surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityGraph {
    size: usize,
    weights: Vec<f64>,
    transition: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl MobilityGraph {
    /// Builds from a `D×D` weight matrix (row-major). Every diagonal weight
    /// must be positive so each node keeps some local mixing.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || weights.len() != size * size {
            return Err(Error::validation(format!(
                "graph of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("graph weights must be finite and nonnegative"));
        }
        let mut transition = weights.clone();
        for i in 0..size {
            if weights[i * size + i] <= 0.0 {
                return Err(Error::validation(format!("node {i} has no self weight")));
            }
            let row = &mut transition[i * size..(i + 1) * size];
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= s);
        }
        let g = MobilityGraph {
            size,
            weights,
            transition,
        };
        g.check_rows()?;
        Ok(g)
    }

    /// Wraps an already row-stochastic matrix.
    pub fn from_transition(size: usize, transition: Vec<f64>) -> Result<Self> {
        let g = MobilityGraph {
            size,
            weights: transition.clone(),
            transition,
        };
        if g.transition.len() != size * size {
            return Err(Error::validation("transition matrix has the wrong size"));
        }
        g.check_rows()?;
        Ok(g)
    }

    pub fn identity(size: usize) -> Self {
        let mut w = vec![0.0; size * size];
        for i in 0..size {
            w[i * size + i] = 1.0;
        }
        Self::from_weights(size, w).expect("identity is valid")
    }

    /// Every node mixes uniformly with every node.
    pub fn fully_mixing(size: usize) -> Self {
        Self::from_weights(size, vec![1.0; size * size]).expect("uniform is valid")
    }

    /// Cycle with self loops: weight `self_weight` on the diagonal and
    /// `neighbor_weight` to each ring neighbor.
    pub fn ring_with_self(size: usize, self_weight: f64, neighbor_weight: f64) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        for i in 0..size {
            w[i * size + i] = self_weight;
            if size > 1 {
                w[i * size + (i + 1) % size] += neighbor_weight;
                w[i * size + (i + size - 1) % size] += neighbor_weight;
            }
        }
        Self::from_weights(size, w)
    }

    /// Default five-node ring used for the spatiotemporal experiments.
    pub fn default_ring() -> Self {
        Self::ring_with_self(5, 0.8, 0.1).expect("valid ring")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-normalized coupling `M`, row-major.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn check_rows(&self) -> Result<()> {
        let n = self.size;
        for i in 0..n {
            let row = &self.transition[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|v| *v < 0.0) {
                return Err(Error::validation(format!("row {i} of the coupling matrix sums to {s}")));
            }
            if row[i] <= 0.0 {
                return Err(Error::validation(format!("row {i} has a zero diagonal")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stochastic() {
        let g = MobilityGraph::default_ring();
        for i in 0..5 {
            let s: f64 = g.transition()[i * 5..(i + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(g.transition()[i * 5 + i] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(MobilityGraph::from_transition(2, vec![0.5, 0.4, 0.0, 1.0]).is_err());
        assert!(MobilityGraph::from_weights(2, vec![0.0, 1.0, 1.0, 1.0]).is_err());
    }
}
