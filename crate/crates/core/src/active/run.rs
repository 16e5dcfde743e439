use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::dataset::{mae, seed_mean, HistoryEntry, SampleSource, SimDataset};
use crate::acquisition::{score_candidates, top_b, write_scores_csv, Acquisition, AcquisitionScore, ScoreSettings};
use crate::error::{Error, Result};
use crate::np::{choose_context, NpArchitecture, Sample, TrainConfig, TrainReport, TrainedSurrogate};
use crate::rng::{purpose, stream};
use crate::sim::{sha256_hex, write_atomic, LabeledScenario, Role};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub acquisition: Acquisition,
    pub batch: usize,
    pub samples: usize,
    pub max_rounds: usize,
    /// Rounds before which the convergence stop is not checked.
    pub min_rounds: usize,
    pub convergence_tol: f64,
    pub train: TrainConfig,
    pub score: ScoreSettings,
    /// Latent draws for test predictions.
    pub predict_draws: usize,
    /// Split the pool into this many random groups and take the best
    /// candidate of each of `batch` groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_random: Option<usize>,
    pub seed: u64,
    pub arch: NpArchitecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<f64>>,
}

impl LoopConfig {
    /// SEIR defaults: batch 1, 30 samples per scenario, 200 steps per
    /// round, patience 50.
    pub fn seir(acquisition: Acquisition, seed: u64) -> Self {
        LoopConfig {
            acquisition,
            batch: 1,
            samples: 30,
            max_rounds: 9,
            min_rounds: 1,
            convergence_tol: 1e-3,
            train: TrainConfig::default(),
            score: ScoreSettings::default(),
            predict_draws: 30,
            group_random: None,
            seed,
            arch: NpArchitecture::np(2, 100),
            transition: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 || self.samples < 1 {
            return Err(Error::validation("batch and samples per scenario must be at least 1"));
        }
        if self.predict_draws < 2 || self.score.n_z < 2 {
            return Err(Error::validation("predictions need at least two latent draws"));
        }
        if let Some(g) = self.group_random {
            if g < self.batch {
                return Err(Error::validation("group-random mode needs at least `batch` groups"));
            }
        }
        self.train.validate()?;
        self.arch.validate()
    }

    /// Untrained surrogate for this configuration.
    pub fn surrogate(&self) -> Result<TrainedSurrogate> {
        TrainedSurrogate::new(self.arch.clone(), self.transition.clone(), self.seed)
    }

    /// sha256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub acquired: usize,
    pub pct_data: f64,
    pub test_mae: f64,
    pub val_loss: f64,
    pub train_loss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub round: usize,
    pub scenario_id: usize,
    pub score: f64,
    pub beta: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    PoolExhausted,
    Converged,
}

/// Everything needed to continue a run at a round boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config_hash: String,
    pub next_round: usize,
    pub roles: Vec<Role>,
    pub history: Vec<HistoryEntry>,
    pub metrics: Vec<MetricsRow>,
    pub choices: Vec<ChoiceRow>,
    pub scores: Vec<AcquisitionScore>,
    pub best_val: Option<f64>,
    pub finished: Option<StopReason>,
    pub surrogate: serde_json::Value,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory for CSV reports and the checkpoint.
    pub out: Option<PathBuf>,
    /// Continue from the checkpoint in `out` if there is one.
    pub resume: bool,
    /// Return after this round's checkpoint, as if interrupted.
    pub stop_after_round: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub metrics: Vec<MetricsRow>,
    pub choices: Vec<ChoiceRow>,
    pub stop: Option<StopReason>,
    pub last_train: Option<TrainReport>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_HEADER: [&str; 7] = ["round", "acquired", "pct_data", "test_mae", "val_loss", "train_loss", "steps"];
pub const CHOICES_HEADER: [&str; 5] = ["round", "scenario_id", "score", "beta", "epsilon"];

/// Test MAE in raw units: predictive mean at each test scenario against the
/// mean over its simulated samples.
pub fn evaluate_test(
    surrogate: &TrainedSurrogate,
    train: &[Sample],
    context_fraction: f64,
    tests: &[Vec<Sample>],
    draws: usize,
    seed: u64,
    key: u64,
) -> Result<f64> {
    let rows = choose_context(train.len(), context_fraction, &mut stream(seed, &[purpose::CONTEXT, key]));
    let ctx = surrogate.context(train, &rows)?;
    let mut preds = Vec::with_capacity(tests.len());
    let mut truth = Vec::with_capacity(tests.len());
    for (i, t) in tests.iter().enumerate() {
        let theta = &t.first().ok_or_else(|| Error::validation("test scenario without samples"))?.theta;
        let mut rng = stream(seed, &[purpose::PREDICT, key, i as u64]);
        preds.push(surrogate.predict_raw_mean(&ctx, theta, draws, &mut rng)?);
        truth.push(seed_mean(t));
    }
    mae(&preds, &truth)
}

fn csv_bytes<R: AsRef<[u8]>>(header: &[&str], rows: impl Iterator<Item = Vec<R>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn write_reports(dir: &Path, state: &RunState) -> Result<()> {
    let metrics = csv_bytes(
        &METRICS_HEADER,
        state.metrics.iter().map(|m| {
            vec![
                m.round.to_string(),
                m.acquired.to_string(),
                format!("{:.4}", m.pct_data),
                format!("{:.6}", m.test_mae),
                format!("{:.6}", m.val_loss),
                format!("{:.6}", m.train_loss),
                m.steps.to_string(),
            ]
        }),
    )?;
    write_atomic(&dir.join("metrics.csv"), &metrics)?;
    let choices = csv_bytes(
        &CHOICES_HEADER,
        state.choices.iter().map(|c| {
            vec![
                c.round.to_string(),
                c.scenario_id.to_string(),
                format!("{:e}", c.score),
                c.beta.to_string(),
                c.epsilon.to_string(),
            ]
        }),
    )?;
    write_atomic(&dir.join("choices.csv"), &choices)?;
    let mut scores = Vec::new();
    write_scores_csv(&mut scores, &state.scores, true)?;
    write_atomic(&dir.join("scores.csv"), &scores)
}

fn select(
    cfg: &LoopConfig,
    scores: &[AcquisitionScore],
    round: usize,
) -> Vec<usize> {
    match cfg.group_random {
        None => top_b(scores, cfg.batch),
        Some(g) => {
            let mut order: Vec<&AcquisitionScore> = scores.iter().collect();
            order.sort_by_key(|s| s.scenario_id);
            order.shuffle(&mut stream(cfg.seed, &[purpose::GROUPING, round as u64]));
            let groups = g.min(order.len());
            let mut chosen = Vec::new();
            for gi in 0..groups {
                if chosen.len() == cfg.batch {
                    break;
                }
                let members: Vec<AcquisitionScore> = order
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % groups == gi)
                    .map(|(_, s)| (*s).clone())
                    .collect();
                chosen.extend(top_b(&members, 1));
            }
            chosen
        }
    }
}

/// Runs the active-learning loop: train, evaluate, score the remaining
/// candidates, acquire the best, repeat.
///
/// Round 0 trains on the initial set. Each later round adds `batch`
/// scenarios. With `opts.out` set, CSV reports and a checkpoint are
/// rewritten after every round; with `opts.resume` an existing checkpoint
/// is continued, and a finished run is returned unchanged.
pub fn run_active_loop(
    dataset: &mut SimDataset,
    cfg: &LoopConfig,
    source: &dyn SampleSource,
    opts: &RunOptions,
) -> Result<RunReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut surrogate = cfg.surrogate()?;
    let ckpt_path = opts.out.as_ref().map(|d| d.join(CHECKPOINT_FILE));
    let mut state = match (&ckpt_path, opts.resume) {
        (Some(p), true) if p.exists() => {
            let st = read_checkpoint(p)?;
            if st.config_hash != hash {
                return Err(Error::validation(format!(
                    "checkpoint was written with config {} but this run has config {hash}",
                    st.config_hash
                )));
            }
            dataset.restore(&st.roles, st.history.clone(), source)?;
            surrogate = TrainedSurrogate::from_json(&serde_json::to_vec(&st.surrogate)?)?;
            st
        }
        _ => RunState {
            config_hash: hash.clone(),
            next_round: 0,
            roles: dataset.roles(),
            history: dataset.history.clone(),
            metrics: Vec::new(),
            choices: Vec::new(),
            scores: Vec::new(),
            best_val: None,
            finished: None,
            surrogate: serde_json::Value::Null,
        },
    };
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
    }
    if state.finished.is_some() {
        return Ok(RunReport {
            metrics: state.metrics,
            choices: state.choices,
            stop: state.finished,
            last_train: None,
        });
    }

    let val = dataset.role_samples(Role::Validation);
    let tests: Vec<Vec<Sample>> = dataset
        .ids(Role::Test)
        .into_iter()
        .map(|id| dataset.samples[&id].clone())
        .collect();
    loop {
        let round = state.next_round;
        dataset.check_invariants()?;
        let train = dataset.role_samples(Role::Acquired);
        let report = surrogate.train(&train, &val, &cfg.train, round as u64)?;
        let test_mae = evaluate_test(
            &surrogate,
            &train,
            cfg.train.context_fraction,
            &tests,
            cfg.predict_draws,
            cfg.seed,
            round as u64,
        )?;
        let acquired = dataset.ids(Role::Acquired).len();
        state.metrics.push(MetricsRow {
            round,
            acquired,
            pct_data: 100.0 * acquired as f64 / dataset.pool_size() as f64,
            test_mae,
            val_loss: report.best_val,
            train_loss: report.final_loss,
            steps: report.steps_run,
        });
        let improved = state.best_val.is_none_or(|b| report.best_val < b - cfg.convergence_tol);
        state.best_val = Some(state.best_val.map_or(report.best_val, |b| b.min(report.best_val)));
        let last_train = Some(report);

        let candidates = dataset.ids(Role::Candidate);
        let stop = if round >= cfg.max_rounds {
            Some(StopReason::MaxRounds)
        } else if candidates.is_empty() {
            Some(StopReason::PoolExhausted)
        } else if round >= cfg.min_rounds && !improved {
            Some(StopReason::Converged)
        } else {
            None
        };
        if stop.is_none() {
            let rows = choose_context(
                train.len(),
                cfg.train.context_fraction,
                &mut stream(cfg.seed, &[purpose::CONTEXT, round as u64]),
            );
            let ctx = surrogate.context(&train, &rows)?;
            let cand: Vec<(usize, Vec<f64>)> = candidates
                .iter()
                .map(|&id| (id, source.theta(&dataset.scenarios[id])))
                .collect();
            let scores = score_candidates(cfg.acquisition, &surrogate, &ctx, &cand, round + 1, cfg.seed, &cfg.score)?;
            let chosen = select(cfg, &scores, round + 1);
            let mut chosen_scores = Vec::with_capacity(chosen.len());
            for &id in &chosen {
                let s = scores.iter().find(|s| s.scenario_id == id).expect("chosen from scores").score;
                dataset.acquire(id, source)?;
                let sc = &dataset.scenarios[id].scenario;
                state.choices.push(ChoiceRow {
                    round: round + 1,
                    scenario_id: id,
                    score: s,
                    beta: sc.beta,
                    epsilon: sc.epsilon,
                });
                chosen_scores.push(s);
            }
            dataset.history.push(HistoryEntry {
                round: round + 1,
                chosen,
                scores: chosen_scores,
            });
            state.scores.extend(scores);
            state.next_round = round + 1;
        }
        state.finished = stop;
        state.roles = dataset.roles();
        state.history = dataset.history.clone();
        state.surrogate = serde_json::from_slice(&surrogate.to_json()?)?;
        if let (Some(dir), Some(p)) = (&opts.out, &ckpt_path) {
            write_reports(dir, &state)?;
            write_checkpoint(p, &state)?;
        }
        if stop.is_some() || opts.stop_after_round == Some(round) {
            return Ok(RunReport {
                metrics: state.metrics,
                choices: state.choices,
                stop,
                last_train,
            });
        }
    }
}

/// Result of training on the whole candidate pool.
#[derive(Clone, Debug)]
pub struct OfflineReport {
    pub test_mae: f64,
    pub train: TrainReport,
    pub surrogate: TrainedSurrogate,
}

/// Offline reference: one surrogate trained on every candidate scenario,
/// with the loop's validation and test sets.
pub fn train_offline(
    scenarios: &[LabeledScenario],
    cfg: &LoopConfig,
    train_cfg: &TrainConfig,
    source: &dyn SampleSource,
) -> Result<OfflineReport> {
    let fetch = |role: Role| -> Result<Vec<Vec<Sample>>> {
        scenarios
            .iter()
            .filter(|s| s.role == role)
            .map(|s| source.samples(s))
            .collect()
    };
    let train: Vec<Sample> = fetch(Role::Candidate)?.into_iter().flatten().collect();
    let val: Vec<Sample> = fetch(Role::Validation)?.into_iter().flatten().collect();
    let tests = fetch(Role::Test)?;
    let mut surrogate = cfg.surrogate()?;
    let report = if train_cfg.steps == 0 {
        surrogate.fit_normalizers(&train)?;
        surrogate.steps = surrogate.steps.max(1);
        TrainReport {
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
            best_val: f64::NAN,
            steps_run: 0,
            stopped_early: false,
            minibatch_losses: Vec::new(),
        }
    } else {
        surrogate.train(&train, &val, train_cfg, u64::MAX)?
    };
    let test_mae = evaluate_test(
        &surrogate,
        &train,
        train_cfg.context_fraction,
        &tests,
        cfg.predict_draws,
        cfg.seed,
        u64::MAX,
    )?;
    Ok(OfflineReport {
        test_mae,
        train: report,
        surrogate,
    })
}
