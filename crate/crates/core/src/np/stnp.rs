use serde::{Deserialize, Serialize};

use super::layers::{diffusion_supports, Activation, DcgruCell, Graph, GruCell, Linear, Mlp};
use super::net::{gaussian_ll, obs_std_values, obs_std_var, split_heads, ModelKind, NpArchitecture, ObsNoise, ProcessNet};
use crate::autodiff::{ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Spatiotemporal neural process over `D` coupled nodes.
///
/// Encoder: a diffusion-convolutional GRU reads `[θ_d, x_{t,d}]` per node
/// and step; hidden states are mean-pooled over nodes, giving one
/// representation per sample and step. Aggregating those over samples and
/// passing each step through shared heads yields `q(z_t | x_{1:t}, θ)`.
/// Decoder: a second diffusion GRU reads `[z_t, θ_d]` and emits per-node
/// Gaussian means.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StnpNet {
    pub arch: NpArchitecture,
    pub transition: Vec<f64>,
    pub encoder: DcgruCell,
    pub heads: Mlp,
    pub decoder: DcgruCell,
    pub output: Linear,
    pub obs: Option<ParamId>,
}

impl StnpNet {
    pub fn new(arch: NpArchitecture, transition: Vec<f64>, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        if arch.kind != ModelKind::Stnp {
            return Err(Error::validation("StnpNet needs an stnp architecture"));
        }
        if transition.len() != arch.nodes * arch.nodes {
            return Err(Error::validation(format!(
                "transition matrix has {} entries for {} nodes",
                transition.len(),
                arch.nodes
            )));
        }
        let h = arch.encoder_widths[0];
        let hd = arch.decoder_widths[0];
        let l = arch.latent_dim;
        let encoder = DcgruCell::new(store, "stnp.enc", arch.order, arch.theta_dim + arch.x_dim, h, rng)?;
        let heads = Mlp::new(store, "stnp.heads", &[h, h, 2 * l], Activation::Relu, rng)?;
        let decoder = DcgruCell::new(store, "stnp.dec", arch.order, l + arch.theta_dim, hd, rng)?;
        let output = Linear::new(store, "stnp.out", hd, arch.x_dim, rng)?;
        let obs = match arch.obs_noise {
            ObsNoise::Learned => Some(store.add("stnp.obs", Tensor::zeros(&[1, arch.x_dim]))?),
            ObsNoise::Fixed(_) => None,
        };
        Ok(StnpNet {
            arch,
            transition,
            encoder,
            heads,
            decoder,
            output,
            obs,
        })
    }

    fn check(&self, theta: &Tensor, x: Option<&Tensor>) -> Result<usize> {
        let n = theta.rows();
        if n == 0 {
            return Err(Error::validation("cannot encode an empty batch"));
        }
        if theta.cols() != self.arch.sample_theta_len() {
            return Err(Error::shape(
                "stnp",
                format!("θ has {} columns, expected {}", theta.cols(), self.arch.sample_theta_len()),
            ));
        }
        if let Some(x) = x {
            if x.rows() != n || x.cols() != self.arch.sample_x_len() {
                return Err(Error::shape(
                    "stnp",
                    format!(
                        "x is {:?}, expected ({n}, {}) for T={} and D={}",
                        x.shape(),
                        self.arch.sample_x_len(),
                        self.arch.horizon,
                        self.arch.nodes
                    ),
                ));
            }
        }
        Ok(n)
    }

    /// Per-node θ rows, `(n·D, Θ)`.
    fn theta_nodes(&self, theta: &Tensor) -> Tensor {
        let (d, p) = (self.arch.nodes, self.arch.theta_dim);
        Tensor::matrix(theta.rows() * d, p, theta.data().to_vec()).expect("same length")
    }

    /// Encoder input at step `t`, `(n·D, Θ + F)`.
    fn step_input(&self, theta: &Tensor, x: &Tensor, t: usize) -> Tensor {
        let (d, p, f) = (self.arch.nodes, self.arch.theta_dim, self.arch.x_dim);
        let n = theta.rows();
        let mut data = Vec::with_capacity(n * d * (p + f));
        for b in 0..n {
            let th = theta.row_slice(b);
            let xs = x.row_slice(b);
            for node in 0..d {
                data.extend_from_slice(&th[node * p..(node + 1) * p]);
                let off = (t * d + node) * f;
                data.extend_from_slice(&xs[off..off + f]);
            }
        }
        Tensor::matrix(n * d, p + f, data).expect("sizes agree")
    }

    fn supports(&self, g: &mut Graph, n: usize) -> Result<Vec<Var>> {
        diffusion_supports(g, &self.transition, self.arch.nodes, n, self.arch.order)
    }

    fn pooling(&self, g: &mut Graph, n: usize) -> Result<Option<Var>> {
        let d = self.arch.nodes;
        if d == 1 {
            return Ok(None);
        }
        let mut w = vec![0.0; n * n * d];
        for b in 0..n {
            for node in 0..d {
                w[b * n * d + b * d + node] = 1.0 / d as f64;
            }
        }
        Ok(Some(g.constant(Tensor::matrix(n, n * d, w)?)?))
    }

    /// Node-pooled encoder states per step, each `(n, H)`. With `plain`
    /// the single-node GRU code path is used (order 0, one node only).
    pub fn encoder_states(&self, g: &mut Graph, theta: &Tensor, x: &Tensor, plain: bool) -> Result<Vec<Var>> {
        let n = self.check(theta, Some(x))?;
        if plain && (self.arch.nodes != 1 || self.arch.order != 0) {
            return Err(Error::validation("the plain GRU path needs D = 1 and K = 0"));
        }
        let supports = self.supports(g, n)?;
        let pool = self.pooling(g, n)?;
        let gru = plain.then(|| GruCell::from_dcgru(&self.encoder));
        let mut h = g.constant(Tensor::zeros(&[n * self.arch.nodes, self.encoder.hidden]))?;
        let mut out = Vec::with_capacity(self.arch.horizon);
        for t in 0..self.arch.horizon {
            let xt = g.constant(self.step_input(theta, x, t))?;
            h = match &gru {
                Some(cell) => cell.step(g, xt, h)?,
                None => self.encoder.step(g, xt, h, &supports)?,
            };
            out.push(match pool {
                Some(p) => g.tape.matmul(p, h)?,
                None => h,
            });
        }
        Ok(out)
    }

    /// Runs the decoder, calling `emit(t, means_t)` with `(n·D, F)` means.
    fn run_decoder(
        &self,
        g: &mut Graph,
        z: Var,
        theta: &Tensor,
        mut emit: impl FnMut(&mut Graph, usize, Var) -> Result<()>,
    ) -> Result<()> {
        let n = self.check(theta, None)?;
        let rows = n * self.arch.nodes;
        let zshape = g.value(z).shape().to_vec();
        if zshape != [self.arch.horizon, self.arch.latent_dim] {
            return Err(Error::shape("stnp.decode", format!("latent has shape {zshape:?}")));
        }
        let supports = self.supports(g, n)?;
        let th = g.constant(self.theta_nodes(theta))?;
        let mut h = g.constant(Tensor::zeros(&[rows, self.decoder.hidden]))?;
        for t in 0..self.arch.horizon {
            let zt = g.tape.slice(z, 0, t, 1)?;
            let zr = g.tape.repeat_rows(zt, rows)?;
            let inp = g.tape.concat(&[zr, th], 1)?;
            h = self.decoder.step(g, inp, h, &supports)?;
            let mean = self.output.forward(g, h)?;
            emit(g, t, mean)?;
        }
        Ok(())
    }

    /// Step `t` targets, `(n·D, F)`.
    fn step_target(&self, x: &Tensor, t: usize) -> Tensor {
        let (d, f) = (self.arch.nodes, self.arch.x_dim);
        let n = x.rows();
        let mut data = Vec::with_capacity(n * d * f);
        for b in 0..n {
            data.extend_from_slice(&x.row_slice(b)[t * d * f..(t + 1) * d * f]);
        }
        Tensor::matrix(n * d, f, data).expect("sizes agree")
    }
}

impl ProcessNet for StnpNet {
    fn arch(&self) -> &NpArchitecture {
        &self.arch
    }

    fn representations(&self, g: &mut Graph, theta: &Tensor, x: &Tensor) -> Result<Var> {
        let states = self.encoder_states(g, theta, x, false)?;
        g.tape.concat(&states, 1)
    }

    fn latent(&self, g: &mut Graph, agg: Var) -> Result<(Var, Var)> {
        let h = self.encoder.hidden;
        let rows: Vec<Var> = (0..self.arch.horizon)
            .map(|t| g.tape.slice(agg, 1, t * h, h))
            .collect::<Result<_>>()?;
        let stacked = g.tape.concat(&rows, 0)?;
        let out = self.heads.forward(g, stacked)?;
        split_heads(g, out, self.arch.latent_dim)
    }

    fn log_likelihood(&self, g: &mut Graph, z: Var, theta: &Tensor, x: &Tensor) -> Result<Var> {
        self.check(theta, Some(x))?;
        let std = obs_std_var(g, &self.obs, self.arch.obs_noise, self.arch.x_dim)?;
        let mut total: Option<Var> = None;
        self.run_decoder(g, z, theta, |g, t, mean| {
            let target = g.constant(self.step_target(x, t))?;
            let ll = gaussian_ll(g, mean, std, target)?;
            total = Some(match total {
                Some(acc) => g.tape.add(acc, ll)?,
                None => ll,
            });
            Ok(())
        })?;
        total.ok_or_else(|| Error::validation("empty horizon"))
    }

    fn decode(&self, g: &mut Graph, z: Var, theta: &Tensor) -> Result<Tensor> {
        let n = theta.rows();
        let (d, f) = (self.arch.nodes, self.arch.x_dim);
        let width = self.arch.sample_x_len();
        let mut out = vec![0.0; n * width];
        self.run_decoder(g, z, theta, |g, t, mean| {
            let m = g.value(mean);
            for b in 0..n {
                for node in 0..d {
                    let src = m.row_slice(b * d + node);
                    let off = b * width + (t * d + node) * f;
                    out[off..off + f].copy_from_slice(src);
                }
            }
            Ok(())
        })?;
        Tensor::matrix(n, width, out)
    }

    fn obs_std(&self, store: &ParamStore) -> Vec<f64> {
        let per = obs_std_values(store, &self.obs, self.arch.obs_noise, self.arch.x_dim);
        (0..self.arch.horizon * self.arch.nodes).flat_map(|_| per.iter().copied()).collect()
    }
}
