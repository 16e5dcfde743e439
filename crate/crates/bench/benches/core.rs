use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng as _;
use std::hint::black_box;

use simal_bench::{seir_samples, trained_np};
use simal_core::acquisition::{kozachenko_leonenko_entropy, score_candidates, Acquisition, ScoreSettings};
use simal_core::autodiff::{Tape, Tensor};
use simal_core::np::{choose_context, TrainConfig};
use simal_core::rng::{from_seed, stream};
use simal_core::sim::{simulate_metapop, simulate_seir, MobilityGraph, Scenario};

fn tape(c: &mut Criterion) {
    let n = 128;
    let a = Tensor::matrix(n, n, (0..n * n).map(|i| (i % 17) as f64 / 17.0).collect()).unwrap();
    let b = Tensor::matrix(n, n, (0..n * n).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
    c.bench_function("tape matmul tanh backward 128", |bench| {
        let mut t = Tape::new();
        bench.iter(|| {
            t.clear();
            let x = t.input(a.clone()).unwrap();
            let w = t.input(b.clone()).unwrap();
            let y = t.matmul(x, w).unwrap();
            let h = t.tanh(y).unwrap();
            let l = t.sum(h).unwrap();
            black_box(t.backward(l).unwrap());
        })
    });
}

fn simulators(c: &mut Criterion) {
    let sc = Scenario::seir_default(2.5, 0.45);
    c.bench_function("simulate_seir 100 days", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(simulate_seir(&sc, seed).unwrap())
        })
    });
    let g = MobilityGraph::default_ring();
    let msc = Scenario::metapop_default(2.5, 0.45, g.size());
    c.bench_function("simulate_metapop 5 nodes", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(simulate_metapop(&msc, &g, seed).unwrap())
        })
    });
}

fn np(c: &mut Criterion) {
    let train = seir_samples(10, 30, 100);
    let base = trained_np(&train, 100, 1);
    let cfg = TrainConfig {
        steps: 10,
        ..Default::default()
    };
    let mut group = c.benchmark_group("np");
    group.sample_size(10);
    group.bench_function("10 training steps, 300 rows", |b| {
        b.iter_batched(
            || base.clone(),
            |mut m| black_box(m.train(&train, &[], &cfg, 1).unwrap()),
            BatchSize::LargeInput,
        )
    });

    let model = trained_np(&train, 100, 50);
    let rows = choose_context(train.len(), 0.1, &mut from_seed(1));
    let ctx = model.context(&train, &rows).unwrap();
    let cands: Vec<(usize, Vec<f64>)> = (0..16).map(|i| (i, vec![1.2 + 0.18 * i as f64, 0.4])).collect();
    for acq in [Acquisition::Lig, Acquisition::MaxEnt] {
        group.bench_function(format!("score 16 candidates {acq}"), |b| {
            b.iter(|| black_box(score_candidates(acq, &model, &ctx, &cands, 1, 0, &ScoreSettings::default()).unwrap()))
        });
    }
    group.finish();
}

fn knn(c: &mut Criterion) {
    let mut r = stream(7, &[0]);
    let samples: Vec<f64> = (0..2000 * 3).map(|_| r.random::<f64>()).collect();
    c.bench_function("kozachenko_leonenko n=2000 d=3", |b| {
        b.iter(|| black_box(kozachenko_leonenko_entropy(&samples, 3, 3).unwrap()))
    });
}

criterion_group!(benches, tape, simulators, np, knn);
criterion_main!(benches);
