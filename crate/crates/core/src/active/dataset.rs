use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::np::Sample;
use crate::sim::{sample_seed, LabeledScenario, Role, Scenario, SimRecord, Simulator, Trajectory};

/// How a simulated trajectory becomes a surrogate training pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    /// `θ = [β, ε]`, `x` = daily infectious prevalence.
    Infectious,
    /// Per node `θ_d = [β, ε, (E0 + I0)/N_d]`, `x_{t,d}` = [prevalence,
    /// S→E incidence].
    Nodes,
}

impl Features {
    pub fn theta(self, sc: &Scenario) -> Vec<f64> {
        match self {
            Features::Infectious => vec![sc.beta, sc.epsilon],
            Features::Nodes => (0..sc.node_count())
                .flat_map(|d| {
                    let (n, e0, i0) = sc.node_init(d);
                    [sc.beta, sc.epsilon, (e0 + i0) as f64 / n as f64]
                })
                .collect(),
        }
    }

    pub fn x(self, tr: &Trajectory) -> Vec<f64> {
        match self {
            Features::Infectious => tr.infectious(),
            Features::Nodes => tr.node_features(),
        }
    }

    pub fn sample(self, sc: &Scenario, tr: &Trajectory) -> Sample {
        Sample {
            theta: self.theta(sc),
            x: self.x(tr),
        }
    }
}

/// Supplies the `m` samples of a scenario on request.
pub trait SampleSource: Sync {
    fn samples(&self, scenario: &LabeledScenario) -> Result<Vec<Sample>>;
    /// Inputs of a scenario, available without simulating it.
    fn theta(&self, scenario: &LabeledScenario) -> Vec<f64>;
}

/// Queries a simulator with the seeds `sample_seed(base_seed, id, j)`.
pub struct SimulatorSource<'a> {
    pub simulator: &'a dyn Simulator,
    pub features: Features,
    pub samples: usize,
    pub base_seed: u64,
}

impl SampleSource for SimulatorSource<'_> {
    fn samples(&self, ls: &LabeledScenario) -> Result<Vec<Sample>> {
        (0..self.samples)
            .map(|j| {
                let tr = self.simulator.simulate(&ls.scenario, sample_seed(self.base_seed, ls.id, j))?;
                Ok(self.features.sample(&ls.scenario, &tr))
            })
            .collect()
    }

    fn theta(&self, ls: &LabeledScenario) -> Vec<f64> {
        self.features.theta(&ls.scenario)
    }
}

/// Serves samples from a pre-generated dataset file.
pub struct RecordSource {
    by_id: BTreeMap<usize, Vec<Sample>>,
    features: Features,
}

impl RecordSource {
    pub fn new(records: &[SimRecord], features: Features) -> Self {
        let mut by_id: BTreeMap<usize, Vec<(usize, Sample)>> = BTreeMap::new();
        for r in records {
            by_id
                .entry(r.scenario_id)
                .or_default()
                .push((r.sample, features.sample(&r.scenario, &r.trajectory)));
        }
        RecordSource {
            by_id: by_id
                .into_iter()
                .map(|(k, mut v)| {
                    v.sort_by_key(|(s, _)| *s);
                    (k, v.into_iter().map(|(_, s)| s).collect())
                })
                .collect(),
            features,
        }
    }
}

impl SampleSource for RecordSource {
    fn samples(&self, ls: &LabeledScenario) -> Result<Vec<Sample>> {
        self.by_id
            .get(&ls.id)
            .cloned()
            .ok_or_else(|| Error::validation(format!("dataset has no samples for scenario {}", ls.id)))
    }

    fn theta(&self, ls: &LabeledScenario) -> Vec<f64> {
        self.features.theta(&ls.scenario)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: usize,
    pub chosen: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Scenarios with roles, the samples fetched so far and the acquisition
/// history.
#[derive(Clone, Debug)]
pub struct SimDataset {
    pub scenarios: Vec<LabeledScenario>,
    pub samples: BTreeMap<usize, Vec<Sample>>,
    pub history: Vec<HistoryEntry>,
    original_candidates: Vec<usize>,
}

impl SimDataset {
    /// Marks `initial` candidates as acquired and fetches samples for them
    /// and for every validation and test scenario.
    pub fn new(scenarios: Vec<LabeledScenario>, initial: &[usize], source: &dyn SampleSource) -> Result<Self> {
        let original_candidates: Vec<usize> = scenarios.iter().filter(|s| s.role == Role::Candidate).map(|s| s.id).collect();
        if scenarios.iter().enumerate().any(|(i, s)| s.id != i) {
            return Err(Error::validation("scenario ids must be 0..n in order"));
        }
        let mut ds = SimDataset {
            scenarios,
            samples: BTreeMap::new(),
            history: Vec::new(),
            original_candidates,
        };
        if initial.is_empty() {
            return Err(Error::validation("the initial acquired set is empty"));
        }
        for &id in initial {
            ds.acquire(id, source)?;
        }
        if ds.ids(Role::Candidate).is_empty() {
            return Err(Error::validation("the candidate pool is empty"));
        }
        for id in ds.ids(Role::Validation).into_iter().chain(ds.ids(Role::Test)) {
            let s = source.samples(&ds.scenarios[id])?;
            ds.samples.insert(id, s);
        }
        Ok(ds)
    }

    pub fn ids(&self, role: Role) -> Vec<usize> {
        self.scenarios.iter().filter(|s| s.role == role).map(|s| s.id).collect()
    }

    pub fn pool_size(&self) -> usize {
        self.original_candidates.len()
    }

    /// Moves a candidate to the acquired set and fetches its samples.
    pub fn acquire(&mut self, id: usize, source: &dyn SampleSource) -> Result<()> {
        let ls = self
            .scenarios
            .get(id)
            .ok_or_else(|| Error::validation(format!("no scenario {id}")))?;
        if ls.role != Role::Candidate {
            return Err(Error::validation(format!(
                "scenario {id} is {} and cannot be acquired",
                ls.role.as_str()
            )));
        }
        let s = source.samples(ls)?;
        self.samples.insert(id, s);
        self.scenarios[id].role = Role::Acquired;
        Ok(())
    }

    /// All samples of scenarios with `role`, in id order.
    pub fn role_samples(&self, role: Role) -> Vec<Sample> {
        self.ids(role)
            .into_iter()
            .flat_map(|id| self.samples.get(&id).cloned().unwrap_or_default())
            .collect()
    }

    /// Disjoint roles, acquired ⊆ original candidates, contiguous history.
    pub fn check_invariants(&self) -> Result<()> {
        for s in &self.scenarios {
            if s.role == Role::Acquired && self.original_candidates.binary_search(&s.id).is_err() {
                return Err(Error::validation(format!("scenario {} was acquired from outside the pool", s.id)));
            }
        }
        for (i, h) in self.history.iter().enumerate() {
            if h.round != i + 1 {
                return Err(Error::validation("acquisition history is not contiguous"));
            }
        }
        Ok(())
    }

    pub fn roles(&self) -> Vec<Role> {
        self.scenarios.iter().map(|s| s.role).collect()
    }

    /// Restores roles and history from a checkpoint, refetching samples of
    /// acquired scenarios.
    pub fn restore(&mut self, roles: &[Role], history: Vec<HistoryEntry>, source: &dyn SampleSource) -> Result<()> {
        if roles.len() != self.scenarios.len() {
            return Err(Error::Integrity("checkpoint describes a different scenario set".into()));
        }
        for (id, &role) in roles.iter().enumerate() {
            let cur = self.scenarios[id].role;
            if cur == role {
                continue;
            }
            if cur == Role::Candidate && role == Role::Acquired {
                self.acquire(id, source)?;
            } else {
                return Err(Error::Integrity(format!(
                    "checkpoint marks scenario {id} as {} but it is {}",
                    role.as_str(),
                    cur.as_str()
                )));
            }
        }
        self.history = history;
        self.check_invariants()
    }
}

/// Mean absolute error over all coordinates of matched prediction and
/// truth vectors.
pub fn mae(predictions: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != truth.len() || predictions.is_empty() {
        return Err(Error::shape("mae", format!("{} predictions for {} truths", predictions.len(), truth.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::shape("mae", format!("vectors of length {} and {}", p.len(), t.len())));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += p.len();
    }
    Ok(total / count as f64)
}

/// Coordinate-wise mean of the samples' outputs.
pub fn seed_mean(samples: &[Sample]) -> Vec<f64> {
    let n = samples.len() as f64;
    let mut m = vec![0.0; samples.first().map_or(0, |s| s.x.len())];
    for s in samples {
        for (a, b) in m.iter_mut().zip(&s.x) {
            *a += b / n;
        }
    }
    m
}
