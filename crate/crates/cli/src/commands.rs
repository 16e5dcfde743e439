use std::fs;
use std::path::{Path, PathBuf};

use simal_core::acquisition::{score_candidates, write_scores_csv, ScoreSettings, DEFAULT_RIDGE};
use simal_core::active::{
    run_active_loop, train_offline, Features, LoopConfig, RecordSource, RunOptions, SampleSource, SimDataset,
    SimulatorSource, CHECKPOINT_FILE,
};
use simal_core::np::{choose_context, NpArchitecture, Sample, TrainConfig, TrainedSurrogate};
use simal_core::rng::{purpose, stream};
use simal_core::sim::{
    default_split, generate, manifest_path, sha256_hex, split_grid, to_jsonl, write_atomic, LabeledScenario,
    Manifest, MetapopSimulator, MobilityGraph, Role, Scenario, SeirSimulator, Simulator, DATASET_FORMAT_VERSION,
};
use simal_core::theory::{scaling_experiment, write_theory_csv, ScalingConfig};
use simal_core::{Error, Result};

use crate::config::{ActiveSettings, ArchSettings, Model, OfflineSettings, ScoreCmdSettings, SimulateSettings};
use crate::rundir::{DirState, RunDir};

pub const DATA_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "dataset.manifest.json";

fn up_to_date(dir: &RunDir) -> bool {
    if dir.state == DirState::Complete {
        println!("{} is up to date", dir.path.display());
        return true;
    }
    false
}

fn csv_err(e: csv::Error) -> Error {
    Error::from(e)
}

pub fn simulate(out: &Path, s: &SimulateSettings, force: bool) -> Result<()> {
    let dir = RunDir::open(out, "simulate", s, force, false)?;
    if up_to_date(&dir) {
        return Ok(());
    }
    if s.samples == 0 || s.horizon == 0 {
        return Err(Error::validation("samples and horizon must be at least 1"));
    }
    let graph = match s.model {
        Model::Seir => None,
        Model::Metapop if s.nodes == 5 => Some(MobilityGraph::default_ring()),
        Model::Metapop => Some(MobilityGraph::ring_with_self(s.nodes, 0.8, 0.1)?),
    };
    let scenarios: Vec<LabeledScenario> = split_grid(s.beta, s.epsilon, s.validation, s.test)?
        .into_iter()
        .map(|mut ls| {
            let base = match &graph {
                None => Scenario::seir_default(ls.scenario.beta, ls.scenario.epsilon),
                Some(g) => Scenario::metapop_default(ls.scenario.beta, ls.scenario.epsilon, g.size()),
            };
            ls.scenario = Scenario { horizon: s.horizon, ..base };
            ls
        })
        .collect();
    let sim: Box<dyn Simulator> = match &graph {
        None => Box::new(SeirSimulator),
        Some(g) => Box::new(MetapopSimulator { graph: g.clone() }),
    };
    let records = generate(&scenarios, sim.as_ref(), s.samples, s.seed)?;
    let bytes = to_jsonl(&records)?;
    write_atomic(&dir.file(DATA_FILE), &bytes)?;
    Manifest {
        version: DATASET_FORMAT_VERSION,
        simulator: s.model.as_str().into(),
        samples: s.samples,
        base_seed: s.seed,
        records: records.len(),
        data_file: DATA_FILE.into(),
        sha256: sha256_hex(&bytes),
        graph,
        scenarios,
    }
    .write(&dir.file(MANIFEST_FILE))?;
    dir.finish(&[DATA_FILE, MANIFEST_FILE])?;
    println!("wrote {} records to {}", records.len(), dir.file(DATA_FILE).display());
    Ok(())
}

/// A dataset directory, its `.jsonl` file or its manifest.
fn manifest_location(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else if path.extension().is_some_and(|e| e == "jsonl") {
        manifest_path(path)
    } else {
        path.to_path_buf()
    }
}

/// A loaded dataset and the surrogate setup that fits it.
struct Data {
    scenarios: Vec<LabeledScenario>,
    source: RecordSource,
    arch: NpArchitecture,
    transition: Option<Vec<f64>>,
    context_fraction: f64,
}

fn model_setup(
    model: Model,
    x_dim: usize,
    horizon: usize,
    graph: Option<&MobilityGraph>,
    a: &ArchSettings,
) -> Result<(NpArchitecture, Option<Vec<f64>>, f64)> {
    let (mut arch, transition, ctx) = match (model, graph) {
        (Model::Seir, _) => (NpArchitecture::np(2, x_dim), None, 0.1),
        (Model::Metapop, Some(g)) => (
            NpArchitecture::stnp(3, 2, horizon, g.size()),
            Some(g.transition().to_vec()),
            0.2,
        ),
        (Model::Metapop, None) => return Err(Error::Format("metapopulation dataset without a graph".into())),
    };
    if let Some(l) = a.latent_dim {
        arch.latent_dim = l;
    }
    if let Some(w) = a.width {
        arch.encoder_widths.iter_mut().chain(arch.decoder_widths.iter_mut()).for_each(|v| *v = w);
    }
    arch.validate()?;
    Ok((arch, transition, a.context_fraction.unwrap_or(ctx)))
}

fn load_data(path: &Path, a: &ArchSettings) -> Result<Data> {
    let mpath = manifest_location(path);
    if !mpath.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no dataset manifest at {}", mpath.display()),
        )));
    }
    let manifest = Manifest::read(&mpath)?;
    let records = manifest.load_records(&mpath)?;
    let (model, features) = match manifest.simulator.as_str() {
        "seir" => (Model::Seir, Features::Infectious),
        "metapop" => (Model::Metapop, Features::Nodes),
        other => return Err(Error::Format(format!("unknown simulator '{other}' in {}", mpath.display()))),
    };
    let first = records
        .first()
        .ok_or_else(|| Error::validation(format!("{} holds no records", mpath.display())))?;
    let x_dim = features.x(&first.trajectory).len();
    let (arch, transition, context_fraction) =
        model_setup(model, x_dim, first.scenario.horizon, manifest.graph.as_ref(), a)?;
    Ok(Data {
        source: RecordSource::new(&records, features),
        scenarios: manifest.scenarios,
        arch,
        transition,
        context_fraction,
    })
}

/// The β extremes among candidates at the median ε.
pub fn extreme_ids(scenarios: &[LabeledScenario]) -> Result<Vec<usize>> {
    let cands: Vec<&LabeledScenario> = scenarios.iter().filter(|s| s.role == Role::Candidate).collect();
    let mut eps: Vec<f64> = cands.iter().map(|s| s.scenario.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let Some(&mid) = eps.get(eps.len() / 2) else {
        return Err(Error::validation("the dataset has no candidate scenarios"));
    };
    let row: Vec<&&LabeledScenario> = cands.iter().filter(|s| s.scenario.epsilon == mid).collect();
    let lo = row.iter().min_by(|a, b| a.scenario.beta.total_cmp(&b.scenario.beta)).expect("nonempty");
    let hi = row.iter().max_by(|a, b| a.scenario.beta.total_cmp(&b.scenario.beta)).expect("nonempty");
    let mut ids = vec![lo.id, hi.id];
    ids.dedup();
    Ok(ids)
}

pub fn train_offline_cmd(out: &Path, s: &OfflineSettings, force: bool) -> Result<()> {
    let dir = RunDir::open(out, "train-offline", s, force, false)?;
    if up_to_date(&dir) {
        return Ok(());
    }
    if s.seeds.is_empty() {
        return Err(Error::validation("no seeds given"));
    }
    let data = load_data(&s.data, &s.arch)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "steps", "initial_loss", "final_loss", "best_val", "test_mae"])
        .map_err(csv_err)?;
    let mut outputs = vec!["offline.csv".to_string()];
    for &seed in &s.seeds {
        let mut cfg = LoopConfig::seir(simal_core::acquisition::Acquisition::Random, seed);
        cfg.arch = data.arch.clone();
        cfg.transition = data.transition.clone();
        cfg.predict_draws = s.predict_draws;
        let train = TrainConfig {
            steps: s.steps,
            patience: s.patience,
            context_fraction: data.context_fraction,
            ..TrainConfig::offline()
        };
        let r = train_offline(&data.scenarios, &cfg, &train, &data.source)?;
        let name = format!("surrogate-seed{seed}.json");
        write_atomic(&dir.file(&name), &r.surrogate.to_json()?)?;
        outputs.push(name);
        w.write_record([
            seed.to_string(),
            r.train.steps_run.to_string(),
            r.train.initial_loss.to_string(),
            r.train.final_loss.to_string(),
            r.train.best_val.to_string(),
            r.test_mae.to_string(),
        ])
        .map_err(csv_err)?;
        println!("seed {seed}: {} steps, test MAE {:.3}", r.train.steps_run, r.test_mae);
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.file("offline.csv"), &bytes)?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    dir.finish(&names)
}

pub fn active(out: &Path, s: &ActiveSettings, force: bool, resume: bool, stop_after_round: Option<usize>) -> Result<()> {
    let dir = RunDir::open(out, "active", s, force, resume)?;
    if up_to_date(&dir) {
        return Ok(());
    }
    if s.acquisitions.is_empty() || s.seeds.is_empty() {
        return Err(Error::validation("need at least one acquisition and one seed"));
    }
    let seir = SeirSimulator;
    let (scenarios, source, arch, transition, ctx): (_, Box<dyn SampleSource>, _, _, _) = match &s.data {
        Some(p) => {
            let d = load_data(p, &s.arch)?;
            (d.scenarios, Box::new(d.source), d.arch, d.transition, d.context_fraction)
        }
        None => {
            let (arch, t, c) = model_setup(Model::Seir, 100, 100, None, &s.arch)?;
            let src = SimulatorSource {
                simulator: &seir,
                features: Features::Infectious,
                samples: s.samples,
                base_seed: s.sim_seed,
            };
            (default_split(), Box::new(src), arch, t, c)
        }
    };
    let initial = if s.initial.is_empty() {
        extreme_ids(&scenarios)?
    } else {
        s.initial.clone()
    };

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary
        .write_record(["acquisition", "seed", "round", "acquired", "pct_data", "test_mae", "stop"])
        .map_err(csv_err)?;
    let mut outputs = vec!["summary.csv".to_string()];
    for &acq in &s.acquisitions {
        for &seed in &s.seeds {
            let name = format!("{acq}-seed{seed}");
            let mut cfg = LoopConfig::seir(acq, seed);
            cfg.batch = s.batch;
            cfg.samples = s.samples;
            cfg.max_rounds = s.rounds;
            cfg.min_rounds = s.min_rounds;
            cfg.convergence_tol = s.convergence_tol;
            cfg.train.steps = s.steps;
            cfg.train.patience = s.patience;
            cfg.train.context_fraction = ctx;
            cfg.score = ScoreSettings { n_z: s.n_z, ..ScoreSettings::default() };
            cfg.predict_draws = s.predict_draws;
            cfg.group_random = s.group_random;
            cfg.arch = arch.clone();
            cfg.transition = transition.clone();
            let mut ds = SimDataset::new(scenarios.clone(), &initial, source.as_ref())?;
            let opts = RunOptions {
                out: Some(dir.file(&name)),
                resume: true,
                stop_after_round,
            };
            let report = run_active_loop(&mut ds, &cfg, source.as_ref(), &opts)?;
            let Some(stop) = report.stop else {
                println!("{name}: stopped after round {} (rerun to resume)", report.metrics.len() - 1);
                return Ok(());
            };
            let stop = serde_json::to_value(stop)?.as_str().unwrap_or_default().to_string();
            for m in &report.metrics {
                summary
                    .write_record([
                        acq.to_string(),
                        seed.to_string(),
                        m.round.to_string(),
                        m.acquired.to_string(),
                        m.pct_data.to_string(),
                        m.test_mae.to_string(),
                        stop.clone(),
                    ])
                    .map_err(csv_err)?;
            }
            let last = report.metrics.last().expect("at least one round");
            println!("{name}: {} rounds, final test MAE {:.3} ({stop})", report.metrics.len(), last.test_mae);
            for f in ["metrics.csv", "choices.csv", "scores.csv", CHECKPOINT_FILE] {
                outputs.push(format!("{name}/{f}"));
            }
        }
    }
    let bytes = summary.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.file("summary.csv"), &bytes)?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    dir.finish(&names)
}

pub fn theory(out: &Path, s: &ScalingConfig, force: bool) -> Result<()> {
    let dir = RunDir::open(out, "theory", s, force, false)?;
    if up_to_date(&dir) {
        return Ok(());
    }
    let report = scaling_experiment(s)?;
    let mut bytes = Vec::new();
    write_theory_csv(&mut bytes, &report.rows)?;
    write_atomic(&dir.file("theory.csv"), &bytes)?;
    let summary = serde_json::json!({
        "dims": s.dims,
        "greedy_mean": report.greedy_mean,
        "random_mean": report.random_mean,
        "greedy_slope": report.greedy_slope,
        "random_slope": report.random_slope,
        "slope_difference": report.slope_difference,
        "ratios": report.ratios,
        "ratio_spearman": report.ratio_spearman,
    });
    let mut text = serde_json::to_vec_pretty(&summary)?;
    text.push(b'\n');
    write_atomic(&dir.file("summary.json"), &text)?;
    dir.finish(&["theory.csv", "summary.json"])?;
    println!(
        "slopes in d: greedy {:.3}, random {:.3}; ratio Spearman {:.2}",
        report.greedy_slope, report.random_slope, report.ratio_spearman
    );
    Ok(())
}

pub fn score(out: &Path, s: &ScoreCmdSettings, force: bool) -> Result<()> {
    let dir = RunDir::open(out, "score", s, force, false)?;
    if up_to_date(&dir) {
        return Ok(());
    }
    let data = load_data(&s.data, &ArchSettings::default())?;
    let bytes = fs::read(&s.surrogate)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", s.surrogate.display()))))?;
    let surrogate = TrainedSurrogate::from_json(&bytes)?;
    let ctx_ids = if s.context_ids.is_empty() {
        extreme_ids(&data.scenarios)?
    } else {
        s.context_ids.clone()
    };
    let mut ctx_samples: Vec<Sample> = Vec::new();
    for &id in &ctx_ids {
        let ls = data
            .scenarios
            .get(id)
            .ok_or_else(|| Error::validation(format!("no scenario {id}")))?;
        ctx_samples.extend(data.source.samples(ls)?);
    }
    let fraction = s.context_fraction.unwrap_or(data.context_fraction);
    let rows = choose_context(
        ctx_samples.len(),
        fraction,
        &mut stream(s.seed, &[purpose::CONTEXT, s.round as u64]),
    );
    let ctx = surrogate.context(&ctx_samples, &rows)?;
    let cand: Vec<(usize, Vec<f64>)> = data
        .scenarios
        .iter()
        .filter(|ls| ls.role == Role::Candidate && !ctx_ids.contains(&ls.id))
        .map(|ls| (ls.id, data.source.theta(ls)))
        .collect();
    let settings = ScoreSettings {
        n_z: s.n_z,
        n_x: s.n_x,
        ridge: DEFAULT_RIDGE,
    };
    let scores = score_candidates(s.acquisition, &surrogate, &ctx, &cand, s.round, s.seed, &settings)?;
    let mut bytes = Vec::new();
    write_scores_csv(&mut bytes, &scores, true)?;
    write_atomic(&dir.file("scores.csv"), &bytes)?;
    dir.finish(&["scores.csv"])?;
    let best = scores.iter().max_by(|a, b| a.score.total_cmp(&b.score));
    if let Some(b) = best {
        println!("scored {} candidates; best is scenario {} ({:.4})", scores.len(), b.scenario_id, b.score);
    }
    Ok(())
}
