//! Test-only oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simal_core::autodiff::{Tape, Tensor, Var};

/// Central finite-difference gradient of a scalar graph with respect to
/// each input tensor, evaluated with fresh forward-only tapes.
pub fn finite_difference<F>(f: &F, inputs: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.input(x.clone()).unwrap()).collect();
        let y = f(&mut t, &vars);
        t.value(y).item().unwrap()
    };
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            g.data_mut()[j] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Reverse-mode gradients for the same graph.
pub fn analytic<F>(f: &F, inputs: &[Tensor]) -> Vec<Tensor>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.input(x.clone()).unwrap()).collect();
    let y = f(&mut t, &vars);
    let g = t.backward(y).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(v, x)| g.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect()
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)` per tensor, maximised.
pub fn max_relative_error(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff: f64 = x.data().iter().zip(y.data()).map(|(p, q)| (p - q).powi(2)).sum();
            let nx: f64 = x.data().iter().map(|p| p * p).sum();
            let ny: f64 = y.data().iter().map(|p| p * p).sum();
            let scale = nx.sqrt().max(ny.sqrt()).max(1e-12);
            diff.sqrt() / scale
        })
        .fold(0.0, f64::max)
}

pub fn gradient_error<F>(f: &F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    max_relative_error(&analytic(f, inputs), &finite_difference(f, inputs, 1e-5))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    let data = (0..r * c).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(r, c, data).unwrap()
}

/// One instruction of a randomly generated graph over `(ROWS, COLS)` values.
#[derive(Clone, Debug)]
pub enum Instr {
    Unary(u8, usize),
    Binary(u8, usize, usize),
    /// `x · W` with a square weight input.
    Matmul(usize, usize),
    /// Concat two values on columns, then slice a window back out.
    ConcatSlice(usize, usize, usize),
    /// Adds row `row` of one value as a bias to another.
    Bias(usize, usize, usize),
}

pub const ROWS: usize = 3;
pub const COLS: usize = 4;

/// A random composite graph: a list of instructions whose operands index
/// earlier values (inputs first). Always ends in a scalar reduction.
#[derive(Clone, Debug)]
pub struct RandomGraph {
    pub n_inputs: usize,
    pub instrs: Vec<Instr>,
    pub use_mean: bool,
}

impl RandomGraph {
    pub fn generate(seed: u64, n_instrs: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_inputs = 3;
        let mut instrs = Vec::new();
        for i in 0..n_instrs {
            let avail = n_inputs + i;
            let pick = |rng: &mut ChaCha8Rng| {
                // Favor recent values so graphs are deep, not just wide.
                if rng.random_bool(0.6) {
                    avail - 1 - rng.random_range(0..avail.min(3))
                } else {
                    rng.random_range(0..avail)
                }
            };
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            let instr = match rng.random_range(0..5) {
                0 | 1 => Instr::Unary(rng.random_range(0..8), a),
                2 => Instr::Binary(rng.random_range(0..4), a, b),
                3 => Instr::Matmul(a, rng.random_range(0..n_inputs)),
                _ => {
                    if rng.random_bool(0.5) {
                        Instr::ConcatSlice(a, b, rng.random_range(0..=COLS))
                    } else {
                        Instr::Bias(a, b, rng.random_range(0..ROWS))
                    }
                }
            };
            instrs.push(instr);
        }
        RandomGraph {
            n_inputs,
            instrs,
            use_mean: rng.random_bool(0.5),
        }
    }

    /// Inputs: two `(ROWS, COLS)` values and one `(COLS, COLS)` weight, which
    /// is also padded to `(ROWS, COLS)` where used elementwise.
    pub fn inputs(&self, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        vec![
            random_matrix(&mut rng, ROWS, COLS, 1.0),
            random_matrix(&mut rng, ROWS, COLS, 1.0),
            random_matrix(&mut rng, COLS, COLS, 0.7),
        ]
    }

    pub fn build(&self, t: &mut Tape, inputs: &[Var]) -> Var {
        let weight = inputs[2];
        // Elementwise view of the weight: its first ROWS rows.
        let w_rows = t.slice(weight, 0, 0, ROWS).unwrap();
        let mut vals: Vec<Var> = vec![inputs[0], inputs[1], w_rows];
        for instr in &self.instrs {
            let v = match *instr {
                Instr::Unary(k, a) => {
                    let x = vals[a];
                    match k {
                        0 => t.tanh(x).unwrap(),
                        1 => t.sigmoid(x).unwrap(),
                        2 => t.relu(x).unwrap(),
                        3 => {
                            let s = t.tanh(x).unwrap();
                            t.exp(s).unwrap()
                        }
                        4 => {
                            let s = t.softplus(x).unwrap();
                            let s = t.add_scalar(s, 0.1).unwrap();
                            t.log(s).unwrap()
                        }
                        5 => t.softplus(x).unwrap(),
                        6 => t.scale(x, -0.7).unwrap(),
                        _ => t.add_scalar(x, 0.3).unwrap(),
                    }
                }
                Instr::Binary(k, a, b) => {
                    let (x, y) = (vals[a], vals[b]);
                    match k {
                        0 => t.add(x, y).unwrap(),
                        1 => t.sub(x, y).unwrap(),
                        2 => {
                            let y = t.tanh(y).unwrap();
                            t.mul(x, y).unwrap()
                        }
                        _ => {
                            let d = t.softplus(y).unwrap();
                            let d = t.add_scalar(d, 0.5).unwrap();
                            t.div(x, d).unwrap()
                        }
                    }
                }
                Instr::Matmul(a, _) => {
                    let y = t.matmul(vals[a], weight).unwrap();
                    t.tanh(y).unwrap()
                }
                Instr::ConcatSlice(a, b, start) => {
                    let c = t.concat(&[vals[a], vals[b]], 1).unwrap();
                    t.slice(c, 1, start, COLS).unwrap()
                }
                Instr::Bias(a, b, row) => {
                    let r = t.slice(vals[b], 0, row, 1).unwrap();
                    t.add_bias(vals[a], r).unwrap()
                }
            };
            vals.push(v);
        }
        let last = *vals.last().unwrap();
        let sq = t.mul(last, last).unwrap();
        let mixed = t.add(sq, last).unwrap();
        if self.use_mean {
            t.mean(mixed).unwrap()
        } else {
            t.sum(mixed).unwrap()
        }
    }
}

/// One closure per primitive op, each ending in a scalar reduction.
pub type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

pub fn primitive_cases() -> Vec<(&'static str, Build)> {
    fn reduce(t: &mut Tape, v: Var) -> Var {
        // Weighted sum so the upstream gradient is not uniform.
        let (r, c) = t.value(v).dims2().unwrap();
        let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.1 * i as f64).collect();
        let w = t.constant(Tensor::matrix(r, c, w).unwrap()).unwrap();
        let p = t.mul(v, w).unwrap();
        t.sum(p).unwrap()
    }
    vec![
        ("matmul", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.matmul(x[0], x[2]).unwrap();
            reduce(t, y)
        })),
        ("add", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.add(x[0], x[1]).unwrap();
            reduce(t, y)
        })),
        ("sub", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.sub(x[0], x[1]).unwrap();
            reduce(t, y)
        })),
        ("mul", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.mul(x[0], x[1]).unwrap();
            reduce(t, y)
        })),
        ("div", Box::new(|t: &mut Tape, x: &[Var]| {
            let d = t.exp(x[1]).unwrap();
            let y = t.div(x[0], d).unwrap();
            reduce(t, y)
        })),
        ("tanh", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.tanh(x[0]).unwrap();
            reduce(t, y)
        })),
        ("sigmoid", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.sigmoid(x[0]).unwrap();
            reduce(t, y)
        })),
        ("relu", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.relu(x[0]).unwrap();
            reduce(t, y)
        })),
        ("exp", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.exp(x[0]).unwrap();
            reduce(t, y)
        })),
        ("log", Box::new(|t: &mut Tape, x: &[Var]| {
            let p = t.exp(x[0]).unwrap();
            let p = t.add_scalar(p, 0.5).unwrap();
            let y = t.log(p).unwrap();
            reduce(t, y)
        })),
        ("softplus", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.softplus(x[0]).unwrap();
            reduce(t, y)
        })),
        ("sum", Box::new(|t: &mut Tape, x: &[Var]| {
            let sq = t.mul(x[0], x[0]).unwrap();
            t.sum(sq).unwrap()
        })),
        ("mean", Box::new(|t: &mut Tape, x: &[Var]| {
            let sq = t.mul(x[0], x[1]).unwrap();
            t.mean(sq).unwrap()
        })),
        ("concat", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.concat(&[x[0], x[1]], 1).unwrap();
            let z = t.concat(&[y, y], 0).unwrap();
            reduce(t, z)
        })),
        ("slice", Box::new(|t: &mut Tape, x: &[Var]| {
            let a = t.slice(x[0], 1, 1, 2).unwrap();
            let b = t.slice(x[1], 0, 1, 2).unwrap();
            let sa = reduce(t, a);
            let sb = reduce(t, b);
            t.add(sa, sb).unwrap()
        })),
        ("add_bias", Box::new(|t: &mut Tape, x: &[Var]| {
            let b = t.slice(x[1], 0, 2, 1).unwrap();
            let y = t.add_bias(x[0], b).unwrap();
            reduce(t, y)
        })),
        ("scale", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.scale(x[0], -2.5).unwrap();
            reduce(t, y)
        })),
        ("add_scalar", Box::new(|t: &mut Tape, x: &[Var]| {
            let y = t.add_scalar(x[0], 1.5).unwrap();
            let y = t.mul(y, y).unwrap();
            reduce(t, y)
        })),
    ]
}

/// Inputs for [`primitive_cases`], bounded away from the relu kink.
pub fn primitive_inputs(seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut away = |r, c| {
        let mut m = random_matrix(&mut rng, r, c, 1.0);
        for v in m.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1_f64.copysign(*v);
            }
        }
        m
    };
    vec![away(ROWS, COLS), away(ROWS, COLS), away(COLS, COLS)]
}

/// Deterministic mean field of the daily chain-binomial SEIR.
///
/// Within each day the force of infection is frozen at its start-of-day
/// value, and the S, E and I stocks present at dawn decay at their hazards.
/// Those three linear ODEs are integrated with classical RK4 over the day and
/// the outflows are applied together, mirroring the synchronous update.
/// Returns I at the end of days 1..=T.
pub fn mean_field_infectious(beta: f64, eps: f64, mu: f64, n: f64, e0: f64, i0: f64, days: usize) -> Vec<f64> {
    const SUBSTEPS: usize = 50;
    let (mut s, mut e, mut i) = (n - e0 - i0, e0, i0);
    let mut out = Vec::with_capacity(days);
    for _ in 0..days {
        let rates = [beta * i / n, eps, mu];
        let mut stock = [s, e, i];
        let h = 1.0 / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            for (u, k) in stock.iter_mut().zip(rates) {
                let f = |y: f64| -k * y;
                let k1 = f(*u);
                let k2 = f(*u + 0.5 * h * k1);
                let k3 = f(*u + 0.5 * h * k2);
                let k4 = f(*u + h * k3);
                *u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        let (se, ei, ir) = (s - stock[0], e - stock[1], i - stock[2]);
        s -= se;
        e += se - ei;
        i += ei - ir;
        out.push(i);
    }
    out
}

/// A latent-dim-2 NP meta-trained on random linear functions
/// `x = z₁ + z₂ θ + 0.1 η`, `z ~ N(0, I)`, `θ ~ U(−1, 1)`, followed by a
/// three-point context drawn from a fresh task.
pub fn meta_trained_tiny_np(seed: u64, steps: usize) -> (simal_core::np::TrainedSurrogate, simal_core::np::Context) {
    use rand_distr::StandardNormal;
    use simal_core::autodiff::AdamState;
    use simal_core::np::layers::Graph;
    use simal_core::np::{NpArchitecture, ObsNoise, Sample, TrainConfig, TrainedSurrogate};

    let mut arch = NpArchitecture::np(1, 1);
    arch.latent_dim = 2;
    arch.encoder_widths = vec![32, 32];
    arch.decoder_widths = vec![32, 32];
    arch.obs_noise = ObsNoise::Learned;
    let mut s = TrainedSurrogate::new(arch, None, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let task = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Sample> {
        let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        (0..n)
            .map(|_| {
                let t: f64 = rng.random_range(-1.0..1.0);
                let eta: f64 = rng.sample(StandardNormal);
                Sample { theta: vec![t], x: vec![z[0] + z[1] * t + 0.1 * eta] }
            })
            .collect()
    };
    let mut adam = AdamState::new(TrainConfig::default().adam, &s.params);
    for _ in 0..steps {
        let rows = task(&mut rng, 16);
        let n_ctx = rng.random_range(1..=8);
        let (t, x) = s.tensors(&rows).unwrap();
        let ctx: Vec<usize> = (0..n_ctx).collect();
        let target: Vec<usize> = (0..rows.len()).collect();
        let etas = vec![Tensor::matrix(1, 2, vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).unwrap()];
        let grads = {
            let mut g = Graph::new(&s.params);
            let l = s.elbo_graph(&mut g, &t, &x, &ctx, &target, &etas).unwrap();
            g.tape.backward(l).unwrap()
        };
        adam.step(&mut s.params, &grads).unwrap();
        s.steps += 1;
    }
    let ctx_rows = task(&mut rng, 3);
    let ctx = s.context(&ctx_rows, &[0, 1, 2]).unwrap();
    (s, ctx)
}
