use std::collections::BTreeSet;

use simal_core::acquisition::Acquisition;
use simal_core::active::{
    read_checkpoint, run_active_loop, LoopConfig, RunOptions, SimDataset, SimulatorSource, StopReason, Features,
    CHECKPOINT_FILE,
};
use simal_core::np::NpArchitecture;
use simal_core::sim::{split_grid, GridRange, LabeledScenario, Role, SeirSimulator};
use simal_core::Error;

const HORIZON: usize = 30;

fn scenarios() -> Vec<LabeledScenario> {
    let mut s = split_grid(GridRange::new(1.5, 3.5, 0.5), GridRange::new(0.3, 0.6, 0.1), 2, 2).unwrap();
    for ls in &mut s {
        ls.scenario.horizon = HORIZON;
    }
    s
}

fn config(acq: Acquisition) -> LoopConfig {
    let mut cfg = LoopConfig::seir(acq, 17);
    cfg.samples = 3;
    cfg.max_rounds = 3;
    cfg.train.steps = 20;
    cfg.train.eval_every = 5;
    cfg.score.n_z = 6;
    cfg.predict_draws = 4;
    cfg.arch = NpArchitecture::np(2, HORIZON);
    cfg.arch.latent_dim = 4;
    cfg.arch.encoder_widths = vec![16];
    cfg.arch.decoder_widths = vec![16];
    cfg
}


fn run(cfg: &LoopConfig, opts: &RunOptions) -> (SimDataset, simal_core::Result<simal_core::active::RunReport>) {
    let sim = SeirSimulator;
    let src = SimulatorSource { simulator: &sim, features: Features::Infectious, samples: cfg.samples, base_seed: 5 };
    let mut ds = SimDataset::new(scenarios(), &[0, 19], &src).unwrap();
    let r = run_active_loop(&mut ds, cfg, &src, opts);
    (ds, r)
}

#[test]
fn loop_respects_roles_and_budget() {
    let cfg = config(Acquisition::MeanStd);
    let (ds, r) = run(&cfg, &RunOptions::default());
    let r = r.unwrap();
    assert_eq!(r.stop, Some(StopReason::MaxRounds));
    assert_eq!(r.metrics.len(), 4);
    assert_eq!(r.choices.len(), 3);
    let acquired: BTreeSet<usize> = ds.ids(Role::Acquired).into_iter().collect();
    assert_eq!(acquired.len(), 5);
    for c in &r.choices {
        assert!(acquired.contains(&c.scenario_id));
        assert!(c.scenario_id < 20, "acquired a holdout scenario");
    }
    for (i, h) in ds.history.iter().enumerate() {
        assert_eq!(h.round, i + 1);
        assert_eq!(h.chosen.len(), cfg.batch);
    }
    for (k, m) in r.metrics.iter().enumerate() {
        assert_eq!(m.round, k);
        assert_eq!(m.acquired, 2 + k);
        assert!(m.test_mae.is_finite() && m.test_mae > 0.0);
    }
}

#[test]
fn interrupted_run_resumes_identically() {
    let cfg = config(Acquisition::Lig);
    let ta = tempfile::tempdir().unwrap();
    let a = ta.path().to_path_buf();
    let (_, full) = run(&cfg, &RunOptions { out: Some(a.clone()), resume: false, stop_after_round: None });
    let full = full.unwrap();

    let tb = tempfile::tempdir().unwrap();
    let b = tb.path().to_path_buf();
    let (_, first) = run(&cfg, &RunOptions { out: Some(b.clone()), resume: false, stop_after_round: Some(1) });
    assert_eq!(first.unwrap().stop, None);
    let (_, rest) = run(&cfg, &RunOptions { out: Some(b.clone()), resume: true, stop_after_round: None });
    let rest = rest.unwrap();
    assert_eq!(rest.metrics, full.metrics);
    assert_eq!(rest.choices, full.choices);
    for f in ["metrics.csv", "choices.csv", "scores.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    // A finished run is left alone.
    let before = std::fs::read(b.join(CHECKPOINT_FILE)).unwrap();
    let (_, again) = run(&cfg, &RunOptions { out: Some(b.clone()), resume: true, stop_after_round: None });
    assert_eq!(again.unwrap().metrics, full.metrics);
    assert_eq!(std::fs::read(b.join(CHECKPOINT_FILE)).unwrap(), before);
}

#[test]
fn resume_rejects_other_config_and_tampering() {
    let cfg = config(Acquisition::Random);
    let td = tempfile::tempdir().unwrap();
    let d = td.path().to_path_buf();
    let (_, r) = run(&cfg, &RunOptions { out: Some(d.clone()), resume: false, stop_after_round: Some(0) });
    r.unwrap();
    let mut other = cfg.clone();
    other.seed += 1;
    let (_, r) = run(&other, &RunOptions { out: Some(d.clone()), resume: true, stop_after_round: None });
    assert!(matches!(r, Err(Error::Validation(_))));

    let p = d.join(CHECKPOINT_FILE);
    let mut bytes = std::fs::read(&p).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 1;
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::Integrity(_)) | Err(Error::Format(_))));
    let (_, r) = run(&cfg, &RunOptions { out: Some(d.clone()), resume: true, stop_after_round: None });
    assert!(r.is_err());
}

#[test]
fn group_random_takes_one_per_group() {
    let mut cfg = config(Acquisition::Lig);
    cfg.batch = 2;
    cfg.max_rounds = 1;
    cfg.group_random = Some(4);
    let (_, r) = run(&cfg, &RunOptions::default());
    let r = r.unwrap();
    assert_eq!(r.choices.len(), 2);
    assert_ne!(r.choices[0].scenario_id, r.choices[1].scenario_id);
    cfg.group_random = Some(1);
    assert!(cfg.validate().is_err());
}

#[test]
fn random_acquisition_depends_on_seed() {
    let mut cfg = config(Acquisition::Random);
    cfg.max_rounds = 2;
    cfg.train.steps = 1;
    let picks = |seed| {
        let mut c = cfg.clone();
        c.seed = seed;
        run(&c, &RunOptions::default()).1.unwrap().choices.iter().map(|c| c.scenario_id).collect::<Vec<_>>()
    };
    assert_eq!(picks(1), picks(1));
    let distinct: BTreeSet<Vec<usize>> = (0..6).map(picks).collect();
    assert!(distinct.len() > 1);
}
