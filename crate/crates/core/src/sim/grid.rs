use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::error::{Error, Result};

/// Inclusive arithmetic range `start, start + step, ..., stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub const fn new(start: f64, stop: f64, step: f64) -> Self {
        GridRange { start, stop, step }
    }

    pub fn single(value: f64) -> Self {
        GridRange::new(value, value, 1.0)
    }

    /// Grid values, rounded to 12 decimals so `1.1 + 29 * 0.1` lands on 4.0.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err(Error::validation("grid range must be finite"));
        }
        if self.stop < self.start || self.step <= 0.0 {
            return Err(Error::validation(format!(
                "empty grid range {}..{} step {}",
                self.start, self.stop, self.step
            )));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| round12(self.start + i as f64 * self.step))
            .collect())
    }

    /// Midpoints between consecutive grid values.
    pub fn midpoints(&self) -> Result<Vec<f64>> {
        let v = self.values()?;
        Ok(v.windows(2).map(|w| round12(0.5 * (w[0] + w[1]))).collect())
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

pub const DEFAULT_BETA: GridRange = GridRange::new(1.1, 4.0, 0.1);
pub const DEFAULT_EPSILON: GridRange = GridRange::new(0.25, 0.65, 0.05);

/// β-major Cartesian grid of default SEIR scenarios.
pub fn scenario_grid(beta: GridRange, epsilon: GridRange) -> Result<Vec<Scenario>> {
    let eps = epsilon.values()?;
    Ok(beta
        .values()?
        .into_iter()
        .flat_map(|b| eps.iter().map(move |&e| Scenario::seir_default(b, e)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Candidate,
    Acquired,
    Validation,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Candidate => "candidate",
            Role::Acquired => "acquired",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScenario {
    pub id: usize,
    pub role: Role,
    pub scenario: Scenario,
}

/// Candidate grid plus off-grid validation and test scenarios.
///
/// Grid points get ids `0..n` in β-major order. Holdouts sit at cell
/// midpoints so none coincides with a candidate: the `j`-th holdout uses β
/// midpoint `⌊j·Bm/H⌋` and ε midpoint `(3j) mod Em`, spreading them evenly
/// along β while cycling ε. Even `j` go to validation, odd `j` to test.
pub fn split_grid(
    beta: GridRange,
    epsilon: GridRange,
    n_validation: usize,
    n_test: usize,
) -> Result<Vec<LabeledScenario>> {
    let mut out: Vec<LabeledScenario> = scenario_grid(beta, epsilon)?
        .into_iter()
        .enumerate()
        .map(|(id, scenario)| LabeledScenario {
            id,
            role: Role::Candidate,
            scenario,
        })
        .collect();
    let holdouts = n_validation + n_test;
    if holdouts == 0 {
        return Ok(out);
    }
    let bm = beta.midpoints()?;
    let em = epsilon.midpoints()?;
    if bm.is_empty() || em.is_empty() {
        return Err(Error::validation("holdouts need at least two grid values per axis"));
    }
    let mut val = Vec::new();
    let mut test = Vec::new();
    for j in 0..holdouts {
        let b = bm[j * bm.len() / holdouts];
        let e = em[(3 * j) % em.len()];
        let sc = Scenario::seir_default(b, e);
        let to_val = (j % 2 == 0 && val.len() < n_validation) || test.len() >= n_test;
        if to_val {
            val.push(sc);
        } else {
            test.push(sc);
        }
    }
    let base = out.len();
    for (k, scenario) in val.into_iter().enumerate() {
        out.push(LabeledScenario { id: base + k, role: Role::Validation, scenario });
    }
    let base = out.len();
    for (k, scenario) in test.into_iter().enumerate() {
        out.push(LabeledScenario { id: base + k, role: Role::Test, scenario });
    }
    Ok(out)
}

/// 270 candidates, 15 validation and 15 test scenarios.
pub fn default_split() -> Vec<LabeledScenario> {
    split_grid(DEFAULT_BETA, DEFAULT_EPSILON, 15, 15).expect("default grid is valid")
}

/// Ids of the two default starting scenarios: the β extremes at median ε.
pub fn default_initial_ids(beta: GridRange, epsilon: GridRange) -> Result<Vec<usize>> {
    let nb = beta.values()?.len();
    let ne = epsilon.values()?.len();
    let mid = ne / 2;
    let mut ids = vec![mid, (nb - 1) * ne + mid];
    ids.dedup();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_grid_has_270_scenarios() {
        let g = scenario_grid(DEFAULT_BETA, DEFAULT_EPSILON).unwrap();
        assert_eq!(g.len(), 270);
        assert_eq!((g[0].beta, g[0].epsilon), (1.1, 0.25));
        assert_eq!((g[1].beta, g[1].epsilon), (1.1, 0.3));
        assert_eq!((g[269].beta, g[269].epsilon), (4.0, 0.65));
    }

    #[test]
    fn single_beta_row() {
        let g = scenario_grid(GridRange::single(1.1), DEFAULT_EPSILON).unwrap();
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn empty_range_is_rejected() {
        assert!(GridRange::new(2.0, 1.0, 0.1).values().is_err());
        assert!(GridRange::new(1.0, 2.0, 0.0).values().is_err());
    }

    #[test]
    fn default_split_counts_and_disjointness() {
        let s = default_split();
        let count = |r| s.iter().filter(|x| x.role == r).count();
        assert_eq!((count(Role::Candidate), count(Role::Validation), count(Role::Test)), (270, 15, 15));
        let keys: HashSet<(u64, u64)> = s
            .iter()
            .map(|x| (x.scenario.beta.to_bits(), x.scenario.epsilon.to_bits()))
            .collect();
        assert_eq!(keys.len(), 300);
        assert!(s.iter().enumerate().all(|(i, x)| x.id == i));
    }

    #[test]
    fn initial_ids_are_beta_corners() {
        let ids = default_initial_ids(DEFAULT_BETA, DEFAULT_EPSILON).unwrap();
        let g = scenario_grid(DEFAULT_BETA, DEFAULT_EPSILON).unwrap();
        assert_eq!((g[ids[0]].beta, g[ids[0]].epsilon), (1.1, 0.45));
        assert_eq!((g[ids[1]].beta, g[ids[1]].epsilon), (4.0, 0.45));
    }
}
