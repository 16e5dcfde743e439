use std::collections::{BTreeMap, HashMap};

use super::tensor::gemm;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Primitive operations the tape can record.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Matmul,
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Log,
    Softplus,
    /// Sum of all elements, producing a scalar.
    Sum,
    /// Mean of all elements, producing a scalar.
    Mean,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    /// `(r, c) + (1, c)` with the row broadcast over every row.
    AddBias,
    Scale(f64),
    AddScalar(f64),
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Softplus => "softplus",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::AddBias => "add_bias",
            OpKind::Scale(_) => "scale",
            OpKind::AddScalar(_) => "add_scalar",
        }
    }
}

#[derive(Debug)]
enum Origin {
    Input,
    Param(ParamId),
    Op(OpKind, Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    origin: Origin,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    inputs: HashMap<Var, Tensor>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf created by [`Tape::input`].
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v)
    }

    /// Gradient accumulated over every use of a parameter on the tape.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Define-by-run recording of tensor operations for reverse-mode
/// differentiation. Nodes are appended in evaluation order, so the node list
/// is already topologically sorted.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, origin: Origin) -> Var {
        self.nodes.push(Node { value, origin });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf whose gradient is reported by [`Gradients::wrt`].
    /// Also used for constants; an unused gradient costs nothing.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::numerical("non-finite input tensor"));
        }
        Ok(self.push(value, Origin::Input))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.input(value)
    }

    /// Records a parameter leaf, copying its current value from `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Origin::Param(id))
    }

    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let value = self.forward(&kind, inputs)?;
        if !value.all_finite() {
            return Err(Error::numerical(format!(
                "{} produced a non-finite value (output shape {:?})",
                kind.name(),
                value.shape()
            )));
        }
        Ok(self.push(value, Origin::Op(kind, inputs.to_vec())))
    }

    fn arity(kind: &OpKind, inputs: &[Var], n: usize) -> Result<()> {
        if inputs.len() != n {
            return Err(Error::shape(
                kind.name(),
                format!("expected {n} inputs, got {}", inputs.len()),
            ));
        }
        Ok(())
    }

    fn same_shape(&self, kind: &OpKind, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(kind.name(), format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn forward(&self, kind: &OpKind, inputs: &[Var]) -> Result<Tensor> {
        use OpKind::*;
        match kind {
            Matmul => {
                Self::arity(kind, inputs, 2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                match (a.dims2(), b.dims2()) {
                    (Ok((_, k)), Ok((k2, _))) if k == k2 => a.matmul(b),
                    _ => Err(Error::shape("matmul", format!("{:?} x {:?}", a.shape(), b.shape()))),
                }
            }
            Add | Sub | Mul | Div => {
                Self::arity(kind, inputs, 2)?;
                self.same_shape(kind, inputs[0], inputs[1])?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                let f: fn(f64, f64) -> f64 = match kind {
                    Add => |x, y| x + y,
                    Sub => |x, y| x - y,
                    Mul => |x, y| x * y,
                    _ => |x, y| x / y,
                };
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(a.shape().to_vec(), data)
            }
            Tanh | Sigmoid | Relu | Exp | Log | Softplus | Scale(_) | AddScalar(_) => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                Ok(match kind {
                    Tanh => a.map(f64::tanh),
                    Sigmoid => a.map(sigmoid),
                    Relu => a.map(|x| x.max(0.0)),
                    Exp => a.map(f64::exp),
                    Log => a.map(f64::ln),
                    Softplus => a.map(softplus),
                    Scale(c) => {
                        let c = *c;
                        a.map(|x| x * c)
                    }
                    AddScalar(c) => {
                        let c = *c;
                        a.map(|x| x + c)
                    }
                    _ => unreachable!(),
                })
            }
            Sum | Mean => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                if a.is_empty() {
                    return Err(Error::shape(kind.name(), "empty tensor"));
                }
                let s = a.sum();
                Ok(Tensor::scalar(if matches!(kind, Mean) { s / a.len() as f64 } else { s }))
            }
            AddBias => {
                Self::arity(kind, inputs, 2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                let (r, c) = a.dims2()?;
                if b.shape() != [1, c] {
                    return Err(Error::shape(
                        "add_bias",
                        format!("bias {:?} does not fit {:?}", b.shape(), a.shape()),
                    ));
                }
                let mut data = a.data().to_vec();
                for i in 0..r {
                    for (x, bj) in data[i * c..(i + 1) * c].iter_mut().zip(b.data()) {
                        *x += bj;
                    }
                }
                Tensor::new(vec![r, c], data)
            }
            Concat { axis } => self.concat_forward(*axis, inputs),
            Slice { axis, start, len } => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                let (r, c) = a.dims2()?;
                let extent = if *axis == 0 { r } else { c };
                if *axis > 1 || start + len > extent || *len == 0 {
                    return Err(Error::shape(
                        "slice",
                        format!("axis {axis} range {start}..{} of {:?}", start + len, a.shape()),
                    ));
                }
                if *axis == 0 {
                    Tensor::new(vec![*len, c], a.data()[start * c..(start + len) * c].to_vec())
                } else {
                    let mut data = Vec::with_capacity(r * len);
                    for i in 0..r {
                        data.extend_from_slice(&a.data()[i * c + start..i * c + start + len]);
                    }
                    Tensor::new(vec![r, *len], data)
                }
            }
        }
    }

    fn concat_forward(&self, axis: usize, inputs: &[Var]) -> Result<Tensor> {
        if inputs.is_empty() || axis > 1 {
            return Err(Error::shape("concat", format!("axis {axis} with {} inputs", inputs.len())));
        }
        let dims: Vec<(usize, usize)> = inputs
            .iter()
            .map(|&v| self.value(v).dims2())
            .collect::<Result<_>>()?;
        let shapes = || dims.iter().map(|d| format!("{d:?}")).collect::<Vec<_>>().join(", ");
        if axis == 0 {
            let c = dims[0].1;
            if dims.iter().any(|d| d.1 != c) {
                return Err(Error::shape("concat", format!("axis 0 column mismatch: {}", shapes())));
            }
            let mut data = Vec::new();
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            Tensor::new(vec![dims.iter().map(|d| d.0).sum(), c], data)
        } else {
            let r = dims[0].0;
            if dims.iter().any(|d| d.0 != r) {
                return Err(Error::shape("concat", format!("axis 1 row mismatch: {}", shapes())));
            }
            let total: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row_slice(i));
                }
            }
            Tensor::new(vec![r, total], data)
        }
    }

    /// Back-propagates from a scalar `loss`, then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::validation("backward on an empty tape"));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), 1.0));

        let mut out = Gradients::default();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].origin {
                Origin::Input => {
                    out.inputs.insert(Var(idx), g);
                }
                Origin::Param(id) => match out.params.get_mut(id) {
                    Some(acc) => add_into(acc.data_mut(), g.data()),
                    None => {
                        out.params.insert(*id, g);
                    }
                },
                Origin::Op(kind, inputs) => {
                    for (parent, pg) in self.local_grads(idx, kind, inputs, &g)? {
                        match &mut grads[parent.0] {
                            Some(acc) => add_into(acc.data_mut(), pg.data()),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
            }
        }
        self.nodes.clear();
        Ok(out)
    }

    fn local_grads(
        &self,
        idx: usize,
        kind: &OpKind,
        inputs: &[Var],
        g: &Tensor,
    ) -> Result<Vec<(Var, Tensor)>> {
        use OpKind::*;
        let y = &self.nodes[idx].value;
        let x = |i: usize| self.value(inputs[i]);
        let elementwise = |f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            // f(input, output, upstream)
            let xs = x(0);
            let data = xs
                .data()
                .iter()
                .zip(y.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            Tensor::new(xs.shape().to_vec(), data).expect("same shape")
        };
        let res = match kind {
            Matmul => {
                let (a, b) = (x(0), x(1));
                let (m, k) = a.dims2()?;
                let n = b.cols();
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, b.data(), true, &mut ga, 0.0);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, a.data(), true, g.data(), false, &mut gb, 0.0);
                vec![
                    (inputs[0], Tensor::new(vec![m, k], ga)?),
                    (inputs[1], Tensor::new(vec![k, n], gb)?),
                ]
            }
            Add => vec![(inputs[0], g.clone()), (inputs[1], g.clone())],
            Sub => vec![(inputs[0], g.clone()), (inputs[1], g.map(|v| -v))],
            Mul | Div => {
                let (a, b) = (x(0), x(1));
                let mut ga = g.clone();
                let mut gb = g.clone();
                for i in 0..g.len() {
                    let (ai, bi, gi) = (a.data()[i], b.data()[i], g.data()[i]);
                    if matches!(kind, Mul) {
                        ga.data_mut()[i] = gi * bi;
                        gb.data_mut()[i] = gi * ai;
                    } else {
                        ga.data_mut()[i] = gi / bi;
                        gb.data_mut()[i] = -gi * ai / (bi * bi);
                    }
                }
                vec![(inputs[0], ga), (inputs[1], gb)]
            }
            Tanh => vec![(inputs[0], elementwise(&|_, yi, gi| gi * (1.0 - yi * yi)))],
            Sigmoid => vec![(inputs[0], elementwise(&|_, yi, gi| gi * yi * (1.0 - yi)))],
            Relu => vec![(inputs[0], elementwise(&|xi, _, gi| if xi > 0.0 { gi } else { 0.0 }))],
            Exp => vec![(inputs[0], elementwise(&|_, yi, gi| gi * yi))],
            Log => vec![(inputs[0], elementwise(&|xi, _, gi| gi / xi))],
            Softplus => vec![(inputs[0], elementwise(&|xi, _, gi| gi * sigmoid(xi)))],
            Scale(c) => vec![(inputs[0], g.map(|v| v * c))],
            AddScalar(_) => vec![(inputs[0], g.clone())],
            Sum | Mean => {
                let a = x(0);
                let gv = g.item()?;
                let v = if matches!(kind, Mean) { gv / a.len() as f64 } else { gv };
                vec![(inputs[0], Tensor::filled(a.shape(), v))]
            }
            AddBias => {
                let (r, c) = g.dims2()?;
                let mut gb = vec![0.0; c];
                for i in 0..r {
                    add_into(&mut gb, g.row_slice(i));
                }
                vec![(inputs[0], g.clone()), (inputs[1], Tensor::new(vec![1, c], gb)?)]
            }
            Concat { axis } => {
                let mut res = Vec::with_capacity(inputs.len());
                let mut offset = 0;
                let (r, c) = g.dims2()?;
                for &v in inputs {
                    let (vr, vc) = self.value(v).dims2()?;
                    let part = if *axis == 0 {
                        let t = g.data()[offset * c..(offset + vr) * c].to_vec();
                        offset += vr;
                        t
                    } else {
                        let mut t = Vec::with_capacity(r * vc);
                        for i in 0..r {
                            t.extend_from_slice(&g.data()[i * c + offset..i * c + offset + vc]);
                        }
                        offset += vc;
                        t
                    };
                    res.push((v, Tensor::new(vec![vr, vc], part)?));
                }
                res
            }
            Slice { axis, start, len } => {
                let a = x(0);
                let (r, c) = a.dims2()?;
                let mut ga = vec![0.0; r * c];
                if *axis == 0 {
                    ga[start * c..(start + len) * c].copy_from_slice(g.data());
                } else {
                    for i in 0..r {
                        ga[i * c + start..i * c + start + len].copy_from_slice(g.row_slice(i));
                    }
                }
                vec![(inputs[0], Tensor::new(vec![r, c], ga)?)]
            }
        };
        Ok(res)
    }

    // Typed conveniences over `apply`.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Matmul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Div, &[a, b])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softplus, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Concat { axis }, parts)
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis, start, len }, &[a])
    }
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.apply(OpKind::AddBias, &[a, bias])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::Scale(c), &[a])
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::AddScalar(c), &[a])
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    /// Repeats a `(1, c)` row `n` times as an explicit `ones(n,1) · row`.
    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let ones = self.constant(Tensor::filled(&[n, 1], 1.0))?;
        self.matmul(ones, row)
    }

    /// Column means of an `(n, c)` matrix as a `(1, c)` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).dims2()?.0;
        let w = self.constant(Tensor::filled(&[1, n], 1.0 / n as f64))?;
        self.matmul(w, a)
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}
