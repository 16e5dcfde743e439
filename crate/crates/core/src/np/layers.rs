use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;

/// A tape plus lazily bound parameter leaves, so a parameter used many times
/// (recurrent weights) enters the tape once and its gradients accumulate.
pub struct Graph<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let v = self.tape.param(self.store, id);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

/// Affine map `x W + b` on row-major batches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Linear {
            w: store.add(format!("{name}.w"), glorot(rng, input, output))?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, output]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.p(self.w);
        let b = g.p(self.b);
        let xw = g.tape.matmul(x, w)?;
        g.tape.add_bias(xw, b)
    }
}

/// Stack of linear layers with an activation between them (none after the
/// last).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers, activation })
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x)?;
            if i < last {
                x = self.activation.apply(&mut g.tape, x)?;
            }
        }
        Ok(x)
    }
}

/// Graph diffusion convolution `Σ_k S_k X W_k + b` where `S_0 = I` and the
/// caller supplies `S_1..S_K` (block-diagonal powers of the transition
/// matrix, one block per sequence in the batch). The `W_k` are stored
/// stacked as one `((K+1)·in) × out` matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiffusionConv {
    pub order: usize,
    pub lin: Linear,
}

impl DiffusionConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        order: usize,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(DiffusionConv {
            order,
            lin: Linear::new(store, name, (order + 1) * input, output, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, supports: &[Var]) -> Result<Var> {
        debug_assert_eq!(supports.len(), self.order);
        let stacked = if self.order == 0 {
            x
        } else {
            let mut parts = vec![x];
            for &s in supports {
                parts.push(g.tape.matmul(s, x)?);
            }
            g.tape.concat(&parts, 1)?
        };
        self.lin.forward(g, stacked)
    }
}

/// Block-diagonal `I_B ⊗ M^k` for `k = 1..=order`, as tape constants.
pub fn diffusion_supports(g: &mut Graph, transition: &[f64], nodes: usize, batch: usize, order: usize) -> Result<Vec<Var>> {
    let n = nodes * batch;
    let mut power = Tensor::identity(nodes);
    let m = Tensor::matrix(nodes, nodes, transition.to_vec())?;
    let mut out = Vec::with_capacity(order);
    for _ in 0..order {
        power = power.matmul(&m)?;
        let mut block = vec![0.0; n * n];
        for b in 0..batch {
            for i in 0..nodes {
                for j in 0..nodes {
                    block[(b * nodes + i) * n + b * nodes + j] = power.get(i, j);
                }
            }
        }
        out.push(g.constant(Tensor::matrix(n, n, block)?)?);
    }
    Ok(out)
}

/// Gated recurrent cell whose input and hidden maps are diffusion
/// convolutions. With order 0 it is an ordinary GRU applied per node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcgruCell {
    pub hidden: usize,
    pub gates: DiffusionConv,
    pub candidate: DiffusionConv,
}

impl DcgruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        order: usize,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(DcgruCell {
            hidden,
            gates: DiffusionConv::new(store, &format!("{name}.gates"), order, input + hidden, 2 * hidden, rng)?,
            candidate: DiffusionConv::new(store, &format!("{name}.cand"), order, input + hidden, hidden, rng)?,
        })
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var, supports: &[Var]) -> Result<Var> {
        let xh = g.tape.concat(&[x, h], 1)?;
        let pre = self.gates.forward(g, xh, supports)?;
        let ru = g.tape.sigmoid(pre)?;
        gru_update(g, x, h, ru, self.hidden, |g, xrh| self.candidate.forward(g, xrh, supports))
    }
}

/// Plain GRU over rows, the single-node reference for [`DcgruCell`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruCell {
    pub hidden: usize,
    pub gates: Linear,
    pub candidate: Linear,
}

impl GruCell {
    /// Shares weights with an order-0 diffusion cell.
    pub fn from_dcgru(cell: &DcgruCell) -> Self {
        assert_eq!(cell.gates.order, 0, "only an order-0 cell is a plain GRU");
        GruCell {
            hidden: cell.hidden,
            gates: cell.gates.lin.clone(),
            candidate: cell.candidate.lin.clone(),
        }
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        let xh = g.tape.concat(&[x, h], 1)?;
        let pre = self.gates.forward(g, xh)?;
        let ru = g.tape.sigmoid(pre)?;
        gru_update(g, x, h, ru, self.hidden, |g, xrh| self.candidate.forward(g, xrh))
    }
}

fn gru_update(
    g: &mut Graph,
    x: Var,
    h: Var,
    ru: Var,
    hidden: usize,
    candidate: impl FnOnce(&mut Graph, Var) -> Result<Var>,
) -> Result<Var> {
    let r = g.tape.slice(ru, 1, 0, hidden)?;
    let u = g.tape.slice(ru, 1, hidden, hidden)?;
    let rh = g.tape.mul(r, h)?;
    let xrh = g.tape.concat(&[x, rh], 1)?;
    let pre = candidate(g, xrh)?;
    let c = g.tape.tanh(pre)?;
    // h' = u ⊙ h + (1 - u) ⊙ c = c + u ⊙ (h - c)
    let diff = g.tape.sub(h, c)?;
    let gated = g.tape.mul(u, diff)?;
    g.tape.add(c, gated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    #[test]
    fn mlp_shapes() {
        let mut store = ParamStore::new();
        let mut rng = from_seed(1);
        let mlp = Mlp::new(&mut store, "m", &[3, 8, 2], Activation::Relu, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros(&[5, 3])).unwrap();
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).shape(), &[5, 2]);
    }

    #[test]
    fn supports_are_block_diagonal_powers() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let m = [0.5, 0.5, 0.25, 0.75];
        let s = diffusion_supports(&mut g, &m, 2, 2, 2).unwrap();
        let s1 = g.value(s[0]).clone();
        assert_eq!(s1.get(0, 1), 0.5);
        assert_eq!(s1.get(2, 3), 0.5);
        assert_eq!(s1.get(0, 2), 0.0);
        let s2 = g.value(s[1]);
        assert!((s2.get(0, 0) - (0.25 + 0.125)).abs() < 1e-15);
    }
}
