use serde::{Deserialize, Serialize};

use super::layers::{Activation, Graph, Mlp};
use crate::autodiff::{softplus, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const STD_FLOOR: f64 = 1e-3;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Global latent, MLP encoder and decoder.
    Np,
    /// Per-step latent process with graph-diffusion recurrent encoder and
    /// decoder.
    Stnp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "std")]
pub enum ObsNoise {
    Learned,
    Fixed(f64),
}

/// Shape and size description of a surrogate.
///
/// For `Np`, `theta_dim` and `x_dim` are the full input and output widths
/// and `horizon`/`nodes` are informational. For `Stnp`, `theta_dim` is per
/// node and `x_dim` is per node per step, so one sample has
/// `nodes·theta_dim` parameters and `horizon·nodes·x_dim` outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpArchitecture {
    pub kind: ModelKind,
    pub theta_dim: usize,
    pub x_dim: usize,
    pub horizon: usize,
    pub nodes: usize,
    pub latent_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub order: usize,
    pub obs_noise: ObsNoise,
}

impl NpArchitecture {
    /// Global-latent NP for flat inputs with 2×128 MLPs and 32 latents.
    pub fn np(theta_dim: usize, x_dim: usize) -> Self {
        NpArchitecture {
            kind: ModelKind::Np,
            theta_dim,
            x_dim,
            horizon: x_dim,
            nodes: 1,
            latent_dim: 32,
            encoder_widths: vec![128, 128],
            decoder_widths: vec![128, 128],
            order: 0,
            obs_noise: ObsNoise::Learned,
        }
    }

    /// Spatiotemporal NP: recurrent width 64, 32 latents per step, K = 2.
    pub fn stnp(theta_dim: usize, x_dim: usize, horizon: usize, nodes: usize) -> Self {
        NpArchitecture {
            kind: ModelKind::Stnp,
            theta_dim,
            x_dim,
            horizon,
            nodes,
            latent_dim: 32,
            encoder_widths: vec![64],
            decoder_widths: vec![64],
            order: 2,
            obs_noise: ObsNoise::Learned,
        }
    }

    pub fn sample_theta_len(&self) -> usize {
        match self.kind {
            ModelKind::Np => self.theta_dim,
            ModelKind::Stnp => self.nodes * self.theta_dim,
        }
    }

    pub fn sample_x_len(&self) -> usize {
        match self.kind {
            ModelKind::Np => self.x_dim,
            ModelKind::Stnp => self.horizon * self.nodes * self.x_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.theta_dim, self.x_dim, self.horizon, self.nodes, self.latent_dim];
        if dims.contains(&0) {
            return Err(Error::validation("architecture dimensions must be at least 1"));
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() || self.encoder_widths.contains(&0) || self.decoder_widths.contains(&0) {
            return Err(Error::validation("encoder and decoder need nonzero widths"));
        }
        if let ObsNoise::Fixed(s) = self.obs_noise {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation("fixed observation std must be positive"));
            }
        }
        if self.kind == ModelKind::Stnp && self.order < 1 && self.nodes > 1 {
            return Err(Error::validation("a multi-node STNP needs diffusion order K >= 1"));
        }
        Ok(())
    }
}

/// Operations every surrogate network provides. Inputs are normalized
/// tensors with one sample per row.
pub trait ProcessNet {
    fn arch(&self) -> &NpArchitecture;

    /// Per-sample representations, `(n, R)`.
    fn representations(&self, g: &mut Graph, theta: &Tensor, x: &Tensor) -> Result<Var>;

    /// Latent mean and std from one aggregated `(1, R)` representation.
    /// Shapes are `(1, L)` for a global latent and `(T, L)` for a process.
    fn latent(&self, g: &mut Graph, agg: Var) -> Result<(Var, Var)>;

    /// `Σ log p(x | z, θ)` over all rows and outputs.
    fn log_likelihood(&self, g: &mut Graph, z: Var, theta: &Tensor, x: &Tensor) -> Result<Var>;

    /// Decoded means `(n, X)` for one latent sample shared by all rows.
    fn decode(&self, g: &mut Graph, z: Var, theta: &Tensor) -> Result<Tensor>;

    /// Observation std for every output coordinate, length `X`.
    fn obs_std(&self, store: &ParamStore) -> Vec<f64>;
}

pub(crate) fn split_heads(g: &mut Graph, out: Var, latent: usize) -> Result<(Var, Var)> {
    let mean = g.tape.slice(out, 1, 0, latent)?;
    let raw = g.tape.slice(out, 1, latent, latent)?;
    let sp = g.tape.softplus(raw)?;
    let std = g.tape.add_scalar(sp, STD_FLOOR)?;
    Ok((mean, std))
}

pub(crate) fn obs_std_var(g: &mut Graph, obs: &Option<ParamId>, noise: ObsNoise, width: usize) -> Result<Var> {
    match (obs, noise) {
        (Some(id), ObsNoise::Learned) => {
            let raw = g.p(*id);
            let sp = g.tape.softplus(raw)?;
            g.tape.add_scalar(sp, STD_FLOOR)
        }
        (_, ObsNoise::Fixed(s)) => g.constant(Tensor::filled(&[1, width], s)),
        (None, ObsNoise::Learned) => Err(Error::validation("learned noise without a parameter")),
    }
}

pub(crate) fn obs_std_values(store: &ParamStore, obs: &Option<ParamId>, noise: ObsNoise, width: usize) -> Vec<f64> {
    match (obs, noise) {
        (Some(id), ObsNoise::Learned) => store.get(*id).data().iter().map(|r| softplus(*r) + STD_FLOOR).collect(),
        (_, ObsNoise::Fixed(s)) => vec![s; width],
        (None, ObsNoise::Learned) => vec![1.0; width],
    }
}

/// `Σ log N(x | mean, std)` with `std` a `(1, c)` row shared by all rows.
pub(crate) fn gaussian_ll(g: &mut Graph, mean: Var, std_row: Var, x: Var) -> Result<Var> {
    let (n, c) = g.value(mean).dims2()?;
    let std = g.tape.repeat_rows(std_row, n)?;
    let diff = g.tape.sub(x, mean)?;
    let u = g.tape.div(diff, std)?;
    let u2 = g.tape.square(u)?;
    let quad = g.tape.sum(u2)?;
    let logs = g.tape.log(std_row)?;
    let logsum = g.tape.sum(logs)?;
    let a = g.tape.scale(quad, -0.5)?;
    let b = g.tape.scale(logsum, -(n as f64))?;
    let s = g.tape.add(a, b)?;
    g.tape.add_scalar(s, -0.5 * (n * c) as f64 * LN_2PI)
}

/// Closed-form `KL(N(mq, sq) ‖ N(mp, sp))` summed over all entries.
pub fn kl_on_tape(g: &mut Graph, mq: Var, sq: Var, mp: Var, sp: Var) -> Result<Var> {
    let count = g.value(mq).len() as f64;
    let lp = g.tape.log(sp)?;
    let lq = g.tape.log(sq)?;
    let log_ratio = g.tape.sub(lp, lq)?;
    let dm = g.tape.sub(mq, mp)?;
    let dm2 = g.tape.square(dm)?;
    let sq2 = g.tape.square(sq)?;
    let num = g.tape.add(sq2, dm2)?;
    let sp2 = g.tape.square(sp)?;
    let den = g.tape.scale(sp2, 2.0)?;
    let frac = g.tape.div(num, den)?;
    let terms = g.tape.add(log_ratio, frac)?;
    let total = g.tape.sum(terms)?;
    g.tape.add_scalar(total, -0.5 * count)
}

/// Global-latent neural process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NpNet {
    pub arch: NpArchitecture,
    pub encoder: Mlp,
    pub heads: Mlp,
    pub decoder: Mlp,
    pub obs: Option<ParamId>,
}

impl NpNet {
    pub fn new(arch: NpArchitecture, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut enc = vec![arch.theta_dim + arch.x_dim];
        enc.extend(&arch.encoder_widths);
        let r = *enc.last().unwrap();
        let mut dec = vec![arch.latent_dim + arch.theta_dim];
        dec.extend(&arch.decoder_widths);
        dec.push(arch.x_dim);
        let encoder = Mlp::new(store, "np.enc", &enc, Activation::Relu, rng)?;
        let heads = Mlp::new(store, "np.heads", &[r, r, 2 * arch.latent_dim], Activation::Relu, rng)?;
        let decoder = Mlp::new(store, "np.dec", &dec, Activation::Relu, rng)?;
        let obs = match arch.obs_noise {
            ObsNoise::Learned => Some(store.add("np.obs", Tensor::zeros(&[1, arch.x_dim]))?),
            ObsNoise::Fixed(_) => None,
        };
        Ok(NpNet {
            arch,
            encoder,
            heads,
            decoder,
            obs,
        })
    }

    /// Decoded means for per-row latents `z` of shape `(n, L)` or a shared
    /// `(1, L)`.
    pub fn decode_var(&self, g: &mut Graph, z: Var, theta: &Tensor) -> Result<Var> {
        let n = theta.rows();
        let zr = if g.value(z).rows() == n { z } else { g.tape.repeat_rows(z, n)? };
        let th = g.constant(theta.clone())?;
        let inp = g.tape.concat(&[zr, th], 1)?;
        self.decoder.forward(g, inp)
    }

    /// Heads applied to several aggregated representations at once.
    pub fn latent_rows(&self, g: &mut Graph, agg: Var) -> Result<(Var, Var)> {
        let out = self.heads.forward(g, agg)?;
        split_heads(g, out, self.arch.latent_dim)
    }
}

impl ProcessNet for NpNet {
    fn arch(&self) -> &NpArchitecture {
        &self.arch
    }

    fn representations(&self, g: &mut Graph, theta: &Tensor, x: &Tensor) -> Result<Var> {
        if theta.rows() == 0 {
            return Err(Error::validation("cannot encode an empty batch"));
        }
        let th = g.constant(theta.clone())?;
        let xv = g.constant(x.clone())?;
        let inp = g.tape.concat(&[th, xv], 1)?;
        self.encoder.forward(g, inp)
    }

    fn latent(&self, g: &mut Graph, agg: Var) -> Result<(Var, Var)> {
        self.latent_rows(g, agg)
    }

    fn log_likelihood(&self, g: &mut Graph, z: Var, theta: &Tensor, x: &Tensor) -> Result<Var> {
        let mean = self.decode_var(g, z, theta)?;
        let std = obs_std_var(g, &self.obs, self.arch.obs_noise, self.arch.x_dim)?;
        let xv = g.constant(x.clone())?;
        gaussian_ll(g, mean, std, xv)
    }

    fn decode(&self, g: &mut Graph, z: Var, theta: &Tensor) -> Result<Tensor> {
        let v = self.decode_var(g, z, theta)?;
        Ok(g.value(v).clone())
    }

    fn obs_std(&self, store: &ParamStore) -> Vec<f64> {
        obs_std_values(store, &self.obs, self.arch.obs_noise, self.arch.x_dim)
    }
}
