use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use simal_core::acquisition::Acquisition;
use simal_core::sim::{GridRange, DEFAULT_BETA, DEFAULT_EPSILON};
use simal_core::theory::ScalingConfig;
use simal_core::{Error, Result};

/// Reads a settings file. A resolved `config.toml` from a run directory is
/// accepted too; its `settings` table is used.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    if let Some(toml::Value::Table(inner)) = table.remove("settings") {
        table = inner;
    }
    table
        .try_into()
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

/// `start:stop:step`, or a single value.
pub fn parse_range(s: &str) -> std::result::Result<GridRange, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [v] => Ok(GridRange::single(v)),
        [a, b, c] => Ok(GridRange::new(a, b, c)),
        _ => Err(format!("expected start:stop:step, got '{s}'")),
    }
}

pub fn parse_acquisition(s: &str) -> std::result::Result<Acquisition, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Seir,
    Metapop,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Seir => "seir",
            Model::Metapop => "metapop",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub model: Model,
    pub beta: GridRange,
    pub epsilon: GridRange,
    pub validation: usize,
    pub test: usize,
    pub samples: usize,
    pub horizon: usize,
    /// Ring size of the metapopulation graph.
    pub nodes: usize,
    pub seed: u64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            model: Model::Seir,
            beta: DEFAULT_BETA,
            epsilon: DEFAULT_EPSILON,
            validation: 15,
            test: 15,
            samples: 30,
            horizon: 100,
            nodes: 5,
            seed: 0,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct SimulateFlags {
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// β grid as start:stop:step.
    #[arg(long, value_parser = parse_range)]
    beta: Option<GridRange>,
    /// ε grid as start:stop:step.
    #[arg(long, value_parser = parse_range)]
    epsilon: Option<GridRange>,
    #[arg(long)]
    validation: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Samples per scenario.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! overlay {
    ($settings:expr, $flags:expr, $($field:ident),*) => {
        $(if let Some(v) = $flags.$field.clone() { $settings.$field = v; })*
    };
}

impl SimulateFlags {
    pub fn apply(&self, s: &mut SimulateSettings) {
        overlay!(s, self, model, beta, epsilon, validation, test, samples, horizon, nodes, seed);
    }
}

/// Surrogate size overrides shared by the training commands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    /// Width of every hidden layer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Defaults to 0.1 for NP and 0.2 for STNP.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_fraction: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ArchFlags {
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    context_fraction: Option<f64>,
}

impl ArchFlags {
    pub fn apply(&self, s: &mut ArchSettings) {
        if self.latent_dim.is_some() {
            s.latent_dim = self.latent_dim;
        }
        if self.width.is_some() {
            s.width = self.width;
        }
        if self.context_fraction.is_some() {
            s.context_fraction = self.context_fraction;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSettings {
    /// Dataset written by `simulate`.
    pub data: PathBuf,
    pub seeds: Vec<u64>,
    /// 0 fits the normalizers only, giving the untrained baseline.
    pub steps: usize,
    pub patience: usize,
    pub predict_draws: usize,
    /// Written as an `[arch]` table.
    pub arch: ArchSettings,
}

impl Default for OfflineSettings {
    fn default() -> Self {
        OfflineSettings {
            data: PathBuf::new(),
            seeds: vec![0],
            steps: 500,
            patience: 50,
            predict_draws: 30,
            arch: ArchSettings::default(),
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct OfflineFlags {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    predict_draws: Option<usize>,
    #[command(flatten)]
    arch: ArchFlags,
}

impl OfflineFlags {
    pub fn apply(&self, s: &mut OfflineSettings) {
        overlay!(s, self, data, seeds, steps, patience, predict_draws);
        self.arch.apply(&mut s.arch);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveSettings {
    /// Dataset written by `simulate`; without one the default SEIR split is
    /// simulated on demand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub acquisitions: Vec<Acquisition>,
    pub seeds: Vec<u64>,
    /// Base seed of on-demand simulation.
    pub sim_seed: u64,
    /// Samples per scenario for on-demand simulation.
    pub samples: usize,
    /// Initial acquired ids; empty picks the β extremes at median ε.
    pub initial: Vec<usize>,
    pub rounds: usize,
    pub min_rounds: usize,
    pub batch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_random: Option<usize>,
    pub convergence_tol: f64,
    pub steps: usize,
    pub patience: usize,
    pub n_z: usize,
    pub predict_draws: usize,
    /// Written as an `[arch]` table.
    pub arch: ArchSettings,
}

impl Default for ActiveSettings {
    fn default() -> Self {
        ActiveSettings {
            data: None,
            acquisitions: vec![Acquisition::Lig],
            seeds: vec![0],
            sim_seed: 0,
            samples: 30,
            initial: Vec::new(),
            rounds: 9,
            min_rounds: 1,
            batch: 1,
            group_random: None,
            convergence_tol: 1e-3,
            steps: 200,
            patience: 50,
            n_z: 30,
            predict_draws: 30,
            arch: ArchSettings::default(),
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ActiveFlags {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated: lig, meanstd, maxent, random.
    #[arg(long = "acq", value_delimiter = ',', value_parser = parse_acquisition)]
    acquisitions: Option<Vec<Acquisition>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    sim_seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<usize>>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    min_rounds: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Pick each batch member as the best of a random group of the pool.
    #[arg(long, value_name = "GROUPS")]
    group_random: Option<usize>,
    #[arg(long)]
    convergence_tol: Option<f64>,
    /// Training steps per round.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    n_z: Option<usize>,
    #[arg(long)]
    predict_draws: Option<usize>,
    #[command(flatten)]
    arch: ArchFlags,
}

impl ActiveFlags {
    pub fn apply(&self, s: &mut ActiveSettings) {
        if self.data.is_some() {
            s.data = self.data.clone();
        }
        if self.group_random.is_some() {
            s.group_random = self.group_random;
        }
        overlay!(
            s, self, acquisitions, seeds, sim_seed, samples, initial, rounds, min_rounds, batch,
            convergence_tol, steps, patience, n_z, predict_draws
        );
        self.arch.apply(&mut s.arch);
    }
}

#[derive(Args, Debug, Default)]
pub struct TheoryFlags {
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    rounds_per_dim: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TheoryFlags {
    pub fn apply(&self, s: &mut ScalingConfig) {
        overlay!(s, self, dims, rounds_per_dim, sigma, m, replicates, seed);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreCmdSettings {
    /// Surrogate file written by `train-offline`.
    pub surrogate: PathBuf,
    pub data: PathBuf,
    pub acquisition: Acquisition,
    /// Scenarios whose samples form the context; empty picks the β
    /// extremes at median ε. The rest of the pool is scored.
    pub context_ids: Vec<usize>,
    pub round: usize,
    pub seed: u64,
    pub n_z: usize,
    pub n_x: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_fraction: Option<f64>,
}

impl Default for ScoreCmdSettings {
    fn default() -> Self {
        ScoreCmdSettings {
            surrogate: PathBuf::new(),
            data: PathBuf::new(),
            acquisition: Acquisition::Lig,
            context_ids: Vec::new(),
            round: 1,
            seed: 0,
            n_z: 30,
            n_x: 1,
            context_fraction: None,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ScoreFlags {
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "acq", value_parser = parse_acquisition)]
    acquisition: Option<Acquisition>,
    #[arg(long, value_delimiter = ',')]
    context_ids: Option<Vec<usize>>,
    #[arg(long)]
    round: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_z: Option<usize>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    context_fraction: Option<f64>,
}

impl ScoreFlags {
    pub fn apply(&self, s: &mut ScoreCmdSettings) {
        if self.context_fraction.is_some() {
            s.context_fraction = self.context_fraction;
        }
        overlay!(s, self, surrogate, data, acquisition, context_ids, round, seed, n_z, n_x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("1.1:4.0:0.1").unwrap(), GridRange::new(1.1, 4.0, 0.1));
        assert_eq!(parse_range("2").unwrap(), GridRange::single(2.0));
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("a:b:c").is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.toml");
        fs::write(&p, "rounds = 4\nseeds = [1, 2]\nacquisitions = [\"random\"]\n").unwrap();
        let mut s: ActiveSettings = load(Some(&p)).unwrap();
        assert_eq!((s.rounds, s.seeds.clone(), s.batch), (4, vec![1, 2], 1));
        let flags = ActiveFlags { rounds: Some(6), ..Default::default() };
        flags.apply(&mut s);
        assert_eq!((s.rounds, s.seeds.clone()), (6, vec![1, 2]));
        assert_eq!(s.acquisitions, vec![Acquisition::Random]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.toml");
        fs::write(&p, "roundz = 4\n").unwrap();
        assert!(matches!(load::<ActiveSettings>(Some(&p)), Err(Error::Validation(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let s = ActiveSettings::default();
        let text = toml::to_string(&crate::rundir::Resolved {
            command: "active".into(),
            config_hash: "x".into(),
            settings: &s,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.toml");
        fs::write(&p, text).unwrap();
        assert_eq!(load::<ActiveSettings>(Some(&p)).unwrap(), s);
    }
}
