use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gaussian::GaussianDiag;
use super::layers::Graph;
use super::net::{kl_on_tape, ModelKind, NpArchitecture, NpNet, ProcessNet};
use super::normalizer::Normalizer;
use super::stnp::StnpNet;
use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream, Rng};

pub const SURROGATE_FORMAT_VERSION: u32 = 1;

/// One training pair in raw simulator units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Net {
    Np(NpNet),
    Stnp(StnpNet),
}

impl Net {
    pub fn as_dyn(&self) -> &dyn ProcessNet {
        match self {
            Net::Np(n) => n,
            Net::Stnp(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_rows: usize,
    pub context_fraction: f64,
    pub patience: usize,
    pub eval_every: usize,
    pub n_z: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_rows: 256,
            context_fraction: 0.1,
            patience: 50,
            eval_every: 10,
            n_z: 1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Offline reference training: 500 steps, patience 50.
    pub fn offline() -> Self {
        TrainConfig {
            steps: 500,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_rows < 2 || self.n_z < 1 || self.patience < 1 || self.eval_every < 1 {
            return Err(Error::validation("batch_rows >= 2, n_z >= 1, patience >= 1 and eval_every >= 1 are required"));
        }
        if !(self.context_fraction > 0.0 && self.context_fraction <= 1.0) {
            return Err(Error::validation("context fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data loss with fixed noise before the first update.
    pub initial_loss: f64,
    /// Same quantity after training (and after restoring the best weights).
    pub final_loss: f64,
    /// Best validation loss seen, or `final_loss` without validation data.
    pub best_val: f64,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub minibatch_losses: Vec<f64>,
}

/// Aggregated context representation and the prior it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub rows: Vec<usize>,
    pub sum: Vec<f64>,
    pub count: usize,
    pub prior: GaussianDiag,
}

/// Draws from the context-conditioned predictive, in normalized units.
/// `samples` are decoded means, one per latent draw; observation noise is
/// not added.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Architecture, weights and normalization of a neural-process surrogate.
#[derive(Clone, Debug)]
pub struct TrainedSurrogate {
    pub arch: NpArchitecture,
    pub net: Net,
    pub params: ParamStore,
    pub theta_norm: Normalizer,
    pub x_norm: Normalizer,
    pub steps: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    arch: NpArchitecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition: Option<Vec<f64>>,
    theta_norm: Normalizer,
    x_norm: Normalizer,
    steps: u64,
    seed: u64,
    params: serde_json::Value,
}

/// Sorted random subset of `0..n` with `max(1, round(fraction·n))` entries.
pub fn choose_context(n: usize, fraction: f64, rng: &mut Rng) -> Vec<usize> {
    let k = ((fraction * n as f64).round() as usize).clamp(1, n.max(1));
    let mut v = sample_indices(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

fn normal_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).expect("shape matches")
}

fn stack(rows: &[Vec<f64>], width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::shape("stack", format!("row of length {} where {width} expected", r.len())));
        }
        data.extend_from_slice(r);
    }
    Tensor::matrix(rows.len(), width, data)
}

fn select_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(t.row_slice(i));
    }
    Tensor::matrix(idx.len(), c, data).expect("sizes agree")
}

impl TrainedSurrogate {
    /// Freshly initialized surrogate. `transition` is the row-stochastic
    /// coupling matrix, required for STNP.
    pub fn new(arch: NpArchitecture, transition: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = stream(seed, &[purpose::INIT]);
        let net = match arch.kind {
            ModelKind::Np => Net::Np(NpNet::new(arch.clone(), &mut params, &mut rng)?),
            ModelKind::Stnp => {
                let m = transition.ok_or_else(|| Error::validation("STNP needs a coupling matrix"))?;
                Net::Stnp(StnpNet::new(arch.clone(), m, &mut params, &mut rng)?)
            }
        };
        Ok(TrainedSurrogate {
            theta_norm: Normalizer::identity(arch.sample_theta_len()),
            x_norm: Normalizer::identity(arch.sample_x_len()),
            arch,
            net,
            params,
            steps: 0,
            seed,
        })
    }

    pub fn net(&self) -> &dyn ProcessNet {
        self.net.as_dyn()
    }

    fn latent_shape(&self) -> [usize; 2] {
        match self.arch.kind {
            ModelKind::Np => [1, self.arch.latent_dim],
            ModelKind::Stnp => [self.arch.horizon, self.arch.latent_dim],
        }
    }

    pub fn latent_len(&self) -> usize {
        let [a, b] = self.latent_shape();
        a * b
    }

    /// Refits θ and x standardization to `train`.
    pub fn fit_normalizers(&mut self, train: &[Sample]) -> Result<()> {
        self.theta_norm = Normalizer::fit(train.iter().map(|s| s.theta.as_slice()))?;
        self.x_norm = Normalizer::fit(train.iter().map(|s| s.x.as_slice()))?;
        Ok(())
    }

    pub fn normalize_theta(&self, theta: &[f64]) -> Vec<f64> {
        self.theta_norm.normalize(theta)
    }

    /// Normalized `(θ, x)` matrices for a set of samples.
    pub fn tensors(&self, samples: &[Sample]) -> Result<(Tensor, Tensor)> {
        let th: Vec<Vec<f64>> = samples.iter().map(|s| self.theta_norm.normalize(&s.theta)).collect();
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| self.x_norm.normalize(&s.x)).collect();
        Ok((
            stack(&th, self.arch.sample_theta_len())?,
            stack(&xs, self.arch.sample_x_len())?,
        ))
    }

    /// Negative ELBO per target coordinate on the tape.
    ///
    /// The posterior conditions on every row, the prior on `context` rows;
    /// the reconstruction covers `target` rows. `etas` holds one standard
    /// normal draw per latent sample.
    pub fn elbo_graph(
        &self,
        g: &mut Graph,
        theta: &Tensor,
        x: &Tensor,
        context: &[usize],
        target: &[usize],
        etas: &[Tensor],
    ) -> Result<Var> {
        if context.is_empty() {
            return Err(Error::validation("the ELBO prior needs a nonempty context"));
        }
        if target.is_empty() || etas.is_empty() {
            return Err(Error::validation("the ELBO needs targets and at least one latent draw"));
        }
        let net = self.net();
        let n = theta.rows();
        let reps = net.representations(g, theta, x)?;
        let agg_all = g.tape.mean_rows(reps)?;
        let mut w = vec![0.0; n];
        for &i in context {
            w[i] = 1.0 / context.len() as f64;
        }
        let w = g.constant(Tensor::row(&w))?;
        let agg_ctx = g.tape.matmul(w, reps)?;
        let (mq, sq) = net.latent(g, agg_all)?;
        let (mp, sp) = net.latent(g, agg_ctx)?;
        let (tt, tx) = if target.len() == n {
            (theta.clone(), x.clone())
        } else {
            (select_rows(theta, target), select_rows(x, target))
        };
        let mut recon: Option<Var> = None;
        for eta in etas {
            let e = g.constant(eta.clone())?;
            let noise = g.tape.mul(sq, e)?;
            let z = g.tape.add(mq, noise)?;
            let ll = net.log_likelihood(g, z, &tt, &tx)?;
            recon = Some(match recon {
                Some(acc) => g.tape.add(acc, ll)?,
                None => ll,
            });
        }
        let recon = g.tape.scale(recon.expect("nonempty"), 1.0 / etas.len() as f64)?;
        let kl = kl_on_tape(g, mq, sq, mp, sp)?;
        let neg = g.tape.sub(kl, recon)?;
        g.tape.scale(neg, 1.0 / (target.len() * tx.cols()) as f64)
    }

    fn draw_etas(&self, rng: &mut Rng, n: usize) -> Vec<Tensor> {
        (0..n).map(|_| normal_tensor(rng, &self.latent_shape())).collect()
    }

    /// Loss value with noise from `rng`; `context` as in [`elbo_graph`].
    pub fn loss(&self, theta: &Tensor, x: &Tensor, context: &[usize], target: &[usize], n_z: usize, rng: &mut Rng) -> Result<f64> {
        let etas = self.draw_etas(rng, n_z);
        let mut g = Graph::new(&self.params);
        let l = self.elbo_graph(&mut g, theta, x, context, target, &etas)?;
        g.value(l).item()
    }

    /// Trains on `train` with early stopping on `val`, warm-starting from
    /// the current weights. Normalization is refit to `train` first. `key`
    /// separates the random streams of successive calls (the round index).
    pub fn train(&mut self, train: &[Sample], val: &[Sample], cfg: &TrainConfig, key: u64) -> Result<TrainReport> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::validation("no training samples"));
        }
        self.fit_normalizers(train)?;
        let (theta, x) = self.tensors(train)?;
        let n = theta.rows();
        let all: Vec<usize> = (0..n).collect();

        let mut eval_rng = stream(self.seed, &[purpose::VALIDATION, key]);
        let eval_ctx = choose_context(n, cfg.context_fraction, &mut eval_rng);
        let eval_etas = self.draw_etas(&mut eval_rng, 4);
        let full_loss = |s: &Self| -> Result<f64> {
            let mut g = Graph::new(&s.params);
            let l = s.elbo_graph(&mut g, &theta, &x, &eval_ctx, &all, &eval_etas)?;
            g.value(l).item()
        };
        let val_set = if val.is_empty() {
            None
        } else {
            let (vt, vx) = self.tensors(val)?;
            let ct = select_rows(&theta, &eval_ctx);
            let cx = select_rows(&x, &eval_ctx);
            let joint_t = Tensor::matrix(ct.rows() + vt.rows(), vt.cols(), [ct.data(), vt.data()].concat())?;
            let joint_x = Tensor::matrix(cx.rows() + vx.rows(), vx.cols(), [cx.data(), vx.data()].concat())?;
            let ctx: Vec<usize> = (0..ct.rows()).collect();
            let tgt: Vec<usize> = (ct.rows()..ct.rows() + vt.rows()).collect();
            Some((joint_t, joint_x, ctx, tgt))
        };
        let val_loss = |s: &Self| -> Result<f64> {
            match &val_set {
                Some((t, xx, c, tg)) => {
                    let mut g = Graph::new(&s.params);
                    let l = s.elbo_graph(&mut g, t, xx, c, tg, &eval_etas)?;
                    g.value(l).item()
                }
                None => full_loss(s),
            }
        };

        let initial_loss = full_loss(self)?;
        let mut best_val = val_loss(self)?;
        let mut best_params = self.params.clone();
        let mut since_best = 0usize;
        let mut adam = AdamState::new(cfg.adam, &self.params);
        let mut losses = Vec::with_capacity(cfg.steps);
        let mut stopped_early = false;
        let mut steps_run = 0;
        for step in 0..cfg.steps {
            let mut rng = stream(self.seed, &[purpose::TRAIN, key, step as u64]);
            let rows: Vec<usize> = if n <= cfg.batch_rows {
                all.clone()
            } else {
                let mut v = sample_indices(&mut rng, n, cfg.batch_rows).into_vec();
                v.sort_unstable();
                v
            };
            let (bt, bx) = if rows.len() == n {
                (theta.clone(), x.clone())
            } else {
                (select_rows(&theta, &rows), select_rows(&x, &rows))
            };
            let b = rows.len();
            let ctx = choose_context(b, cfg.context_fraction, &mut rng);
            let etas = self.draw_etas(&mut rng, cfg.n_z);
            let target: Vec<usize> = (0..b).collect();
            let grads = {
                let mut g = Graph::new(&self.params);
                let l = self.elbo_graph(&mut g, &bt, &bx, &ctx, &target, &etas)?;
                losses.push(g.value(l).item()?);
                g.tape.backward(l)?
            };
            adam.step(&mut self.params, &grads)?;
            self.steps += 1;
            steps_run += 1;
            since_best += 1;
            if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps {
                let v = val_loss(self)?;
                if v < best_val {
                    best_val = v;
                    best_params = self.params.clone();
                    since_best = 0;
                }
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
        self.params = best_params;
        Ok(TrainReport {
            initial_loss,
            final_loss: full_loss(self)?,
            best_val,
            steps_run,
            stopped_early,
            minibatch_losses: losses,
        })
    }

    /// Encodes the chosen rows of `samples` as the current context.
    pub fn context(&self, samples: &[Sample], rows: &[usize]) -> Result<Context> {
        if rows.is_empty() {
            return Err(Error::validation("empty context"));
        }
        let chosen: Vec<Sample> = rows.iter().map(|&i| samples[i].clone()).collect();
        let (t, x) = self.tensors(&chosen)?;
        let mut g = Graph::new(&self.params);
        let reps = self.net().representations(&mut g, &t, &x)?;
        let r = g.value(reps);
        let mut sum = vec![0.0; r.cols()];
        for i in 0..r.rows() {
            for (s, v) in sum.iter_mut().zip(r.row_slice(i)) {
                *s += v;
            }
        }
        let prior = self.latent_from_sums(&[sum.clone()], rows.len())?.remove(0);
        Ok(Context {
            rows: rows.to_vec(),
            sum,
            count: rows.len(),
            prior,
        })
    }

    /// Latent distributions for aggregated sums `Σ r_i` over `count` rows.
    fn latent_from_sums(&self, sums: &[Vec<f64>], count: usize) -> Result<Vec<GaussianDiag>> {
        let width = sums.first().map_or(0, |s| s.len());
        let aggs: Vec<Vec<f64>> = sums.iter().map(|s| s.iter().map(|v| v / count as f64).collect()).collect();
        let mut g = Graph::new(&self.params);
        match &self.net {
            Net::Np(np) => {
                let a = g.constant(stack(&aggs, width)?)?;
                let (m, s) = np.latent_rows(&mut g, a)?;
                let (m, s) = (g.value(m), g.value(s));
                (0..m.rows())
                    .map(|i| GaussianDiag::new(m.row_slice(i).to_vec(), s.row_slice(i).to_vec()))
                    .collect()
            }
            Net::Stnp(net) => aggs
                .into_iter()
                .map(|a| {
                    let v = g.constant(Tensor::row(&a))?;
                    let (m, s) = net.latent(&mut g, v)?;
                    GaussianDiag::new(g.value(m).data().to_vec(), g.value(s).data().to_vec())
                })
                .collect(),
        }
    }

    /// `q(z | context ∪ {(θ, x_k)})` for each normalized `x_k`.
    pub fn posteriors(&self, ctx: &Context, theta_norm: &[f64], xs_norm: &[Vec<f64>]) -> Result<Vec<GaussianDiag>> {
        if xs_norm.is_empty() {
            return Ok(Vec::new());
        }
        let th = stack(&vec![theta_norm.to_vec(); xs_norm.len()], self.arch.sample_theta_len())?;
        let xs = stack(xs_norm, self.arch.sample_x_len())?;
        let mut g = Graph::new(&self.params);
        let reps = self.net().representations(&mut g, &th, &xs)?;
        let r = g.value(reps);
        let sums: Vec<Vec<f64>> = (0..r.rows())
            .map(|i| ctx.sum.iter().zip(r.row_slice(i)).map(|(a, b)| a + b).collect())
            .collect();
        self.latent_from_sums(&sums, ctx.count + 1)
    }

    /// Decoded means (normalized) at `θ` for each latent sample.
    pub fn decode_means(&self, theta_norm: &[f64], zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let [zr, zc] = self.latent_shape();
        let mut g = Graph::new(&self.params);
        match &self.net {
            Net::Np(np) => {
                let z = g.constant(stack(zs, zc)?)?;
                let th = stack(&vec![theta_norm.to_vec(); zs.len()], self.arch.sample_theta_len())?;
                let m = np.decode_var(&mut g, z, &th)?;
                let m = g.value(m);
                Ok((0..m.rows()).map(|i| m.row_slice(i).to_vec()).collect())
            }
            Net::Stnp(net) => {
                let th = Tensor::row(theta_norm);
                zs.iter()
                    .map(|z| {
                        let zv = g.constant(Tensor::matrix(zr, zc, z.clone())?)?;
                        Ok(net.decode(&mut g, zv, &th)?.into_data())
                    })
                    .collect()
            }
        }
    }

    /// Observation std per output coordinate, normalized units.
    pub fn obs_std(&self) -> Vec<f64> {
        self.net().obs_std(&self.params)
    }

    /// Samples `n_z` latents from the context prior and decodes each at the
    /// raw parameter vector `theta`.
    pub fn predict(&self, ctx: &Context, theta: &[f64], n_z: usize, rng: &mut Rng) -> Result<Prediction> {
        if n_z < 2 {
            return Err(Error::validation("prediction needs at least two latent draws"));
        }
        if self.steps == 0 {
            return Err(Error::validation("surrogate has not been trained"));
        }
        let zs: Vec<Vec<f64>> = (0..n_z).map(|_| ctx.prior.sample(rng)).collect();
        let samples = self.decode_means(&self.normalize_theta(theta), &zs)?;
        let dim = samples[0].len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for s in &samples {
            for ((sd, v), m) in std.iter_mut().zip(s).zip(&mean) {
                *sd += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|v| *v = (*v / (n - 1.0)).sqrt());
        Ok(Prediction { samples, mean, std })
    }

    /// Predictive mean at `theta` in raw simulator units.
    pub fn predict_raw_mean(&self, ctx: &Context, theta: &[f64], n_z: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let p = self.predict(ctx, theta, n_z, rng)?;
        Ok(self.x_norm.denormalize(&p.mean))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let transition = match &self.net {
            Net::Stnp(s) => Some(s.transition.clone()),
            Net::Np(_) => None,
        };
        let ck = Checkpoint {
            version: SURROGATE_FORMAT_VERSION,
            arch: self.arch.clone(),
            transition,
            theta_norm: self.theta_norm.clone(),
            x_norm: self.x_norm.clone(),
            steps: self.steps,
            seed: self.seed,
            params: self.params.to_json_value(),
        };
        Ok(serde_json::to_vec(&ck)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.version != SURROGATE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "surrogate format version {} is not supported (expected {SURROGATE_FORMAT_VERSION})",
                ck.version
            )));
        }
        let mut s = Self::new(ck.arch, ck.transition, ck.seed)?;
        let loaded = ParamStore::from_json_value(ck.params)?;
        s.params.assign_from(&loaded)?;
        s.theta_norm = ck.theta_norm;
        s.x_norm = ck.x_norm;
        s.steps = ck.steps;
        if !s.params.all_finite() {
            return Err(Error::Integrity("checkpoint holds non-finite parameters".into()));
        }
        Ok(s)
    }
}
