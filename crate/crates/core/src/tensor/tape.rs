use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvGeom};
use super::{Real, Tensor};
use crate::hsic::{self, Bandwidth, HsicResult, Samples};
use crate::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

const SIGMOID_CLAMP: f64 = 30.0;
const BCE_EPS: f64 = 1e-7;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: usize, weight: usize, bias: usize, geom: ConvGeom },
    MaxPool2 { input: usize, argmax: Vec<usize> },
    Upsample2 { input: usize },
    Concat { a: usize, b: usize },
    Affine { input: usize, weight: usize, bias: usize },
    Relu(usize),
    Sigmoid(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    Reshape(usize),
    Column { input: usize, col: usize },
    Mse { pred: usize, label: usize },
    Bce { prob: usize, label: usize },
    Hsic { a: usize, b: usize, grad_a: Vec<f64>, grad_b: Vec<f64> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    name: Option<String>,
    requires_grad: bool,
}

/// Ordered record of executed operations.
///
/// Node indices increase in execution order, so walking them backwards is a
/// reverse topological order. Leaves registered with [`Tape::param`] are
/// tracked and named; [`Tape::constant`] leaves never receive gradients.
#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tracked leaf whose gradient is reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Var {
        self.push_node(value, Op::Leaf, Some(name.into()), true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, Op::Leaf, None, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push_node(&mut self, value: Tensor<T>, op: Op, name: Option<String>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, name, requires_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[usize], what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push_node(value, op, None, requires_grad))
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    /// 2-D convolution over NCHW input with OIKhKw weights, stride 1.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, padding: usize) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(input)?, self.idx(weight)?, self.idx(bias)?);
        let [n, c_in, h, w] = self.val(xi).dims4()?;
        let [c_out, wc, kh, kw] = self.val(wi).dims4()?;
        if wc != c_in {
            return Err(Error::Shape(format!(
                "conv2d: input has {c_in} channels, weights expect {wc}"
            )));
        }
        if self.val(bi).shape() != [c_out] {
            return Err(Error::Shape(format!(
                "conv2d: bias shape {:?}, expected [{c_out}]",
                self.val(bi).shape()
            )));
        }
        let oh = (h + 2 * padding) as isize - kh as isize + 1;
        let ow = (w + 2 * padding) as isize - kw as isize + 1;
        if oh <= 0 || ow <= 0 {
            return Err(Error::Shape(format!(
                "conv2d: non-positive output size {oh}x{ow}"
            )));
        }
        let geom = ConvGeom {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            pad: padding,
            oh: oh as usize,
            ow: ow as usize,
        };
        let out = kernels::conv2d_forward(&geom, self.val(xi).data(), self.val(wi).data(), self.val(bi).data());
        let value = Tensor::from_parts(vec![n, c_out, geom.oh, geom.ow], out);
        self.push(value, Op::Conv2d { input: xi, weight: wi, bias: bi, geom }, &[xi, wi, bi], "conv2d")
    }

    /// 2x2 max pooling, stride 2.
    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let [n, c, h, w] = self.val(xi).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("maxpool2d: odd spatial extent {h}x{w}")));
        }
        let (out, argmax) = kernels::maxpool2_forward(self.val(xi).data(), n, c, h, w);
        let value = Tensor::from_parts(vec![n, c, h / 2, w / 2], out);
        self.push(value, Op::MaxPool2 { input: xi, argmax }, &[xi], "maxpool2d")
    }

    /// Nearest-neighbour upsampling by a factor of two.
    pub fn upsample_nearest(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let [n, c, h, w] = self.val(xi).dims4()?;
        let out = kernels::upsample2_forward(self.val(xi).data(), n * c, h, w);
        let value = Tensor::from_parts(vec![n, c, 2 * h, 2 * w], out);
        self.push(value, Op::Upsample2 { input: xi }, &[xi], "upsample_nearest")
    }

    /// Concatenates along the channel axis; channels of `a` come first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let [n, ca, h, w] = self.val(ai).dims4()?;
        let [nb, cb, hb, wb] = self.val(bi).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!(
                "concat_channels: {:?} vs {:?}",
                self.val(ai).shape(),
                self.val(bi).shape()
            )));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for s in 0..n {
            out.extend_from_slice(&self.val(ai).data()[s * ca * plane..(s + 1) * ca * plane]);
            out.extend_from_slice(&self.val(bi).data()[s * cb * plane..(s + 1) * cb * plane]);
        }
        let value = Tensor::from_parts(vec![n, ca + cb, h, w], out);
        self.push(value, Op::Concat { a: ai, b: bi }, &[ai, bi], "concat_channels")
    }

    /// `input (N×F) · weight (F×G) + bias (G)`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(input)?, self.idx(weight)?, self.idx(bias)?);
        let (n, f) = match self.val(xi).shape() {
            &[n, f] => (n, f),
            s => return Err(Error::Shape(format!("affine: input must be N×F, got {s:?}"))),
        };
        let g = match self.val(wi).shape() {
            &[wf, g] if wf == f => g,
            s => return Err(Error::Shape(format!("affine: weights {s:?} do not match F={f}"))),
        };
        if self.val(bi).shape() != [g] {
            return Err(Error::Shape(format!(
                "affine: bias shape {:?}, expected [{g}]",
                self.val(bi).shape()
            )));
        }
        let out = kernels::affine_forward(self.val(xi).data(), self.val(wi).data(), self.val(bi).data(), n, f, g);
        self.push(Tensor::from_parts(vec![n, g], out), Op::Affine { input: xi, weight: wi, bias: bi }, &[xi, wi, bi], "affine")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.val(xi).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(xi), &[xi], "relu")
    }

    /// Logistic sigmoid; the argument is clamped to [-30, 30] first.
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.val(xi).map(sigmoid);
        self.push(value, Op::Sigmoid(xi), &[xi], "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (self.val(ai), self.val(bi));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(value, op(ai, bi), &[ai, bi], what)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xi = self.idx(x)?;
        let f = T::of(factor);
        let value = self.val(xi).map(|v| v * f);
        self.push(value, Op::Scale(xi, factor), &[xi], "scale")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let total = self.val(xi).data().iter().fold(T::zero(), |acc, &v| acc + v);
        self.push(Tensor::scalar(total), Op::Sum(xi), &[xi], "sum")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.val(xi).clone().reshape(shape)?;
        self.push(value, Op::Reshape(xi), &[xi], "reshape")
    }

    /// Flattens everything after the leading axis: N×... → N×F.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x)?.shape().to_vec();
        let n = *shape.first().ok_or_else(|| Error::Shape("flatten: rank-0 tensor".into()))?;
        let f = shape[1..].iter().product();
        self.reshape(x, &[n, f])
    }

    /// Column `col` of an N×G matrix as a length-N vector.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        let (n, g) = match self.val(xi).shape() {
            &[n, g] if col < g => (n, g),
            s => return Err(Error::Shape(format!("column {col} of {s:?}"))),
        };
        let data = (0..n).map(|r| self.val(xi).data()[r * g + col]).collect();
        self.push(Tensor::from_parts(vec![n], data), Op::Column { input: xi, col }, &[xi], "column")
    }

    /// Mean squared error over every element.
    pub fn mse_loss(&mut self, pred: Var, label: Var) -> Result<Var> {
        let (pi, li) = (self.idx(pred)?, self.idx(label)?);
        let (p, l) = (self.val(pi), self.val(li));
        if p.shape() != l.shape() {
            return Err(Error::Shape(format!("mse_loss: {:?} vs {:?}", p.shape(), l.shape())));
        }
        if p.is_empty() {
            return Err(Error::Shape("mse_loss: empty tensors".into()));
        }
        let ss = p
            .data()
            .iter()
            .zip(l.data())
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        let value = Tensor::scalar(ss / T::of(p.len() as f64));
        self.push(value, Op::Mse { pred: pi, label: li }, &[pi, li], "mse_loss")
    }

    /// Mean binary cross-entropy. Probabilities are clamped to [1e-7, 1-1e-7];
    /// labels must be exactly 0 or 1. Gradient flows to `prob` only.
    pub fn bce_loss(&mut self, prob: Var, label: Var) -> Result<Var> {
        let (pi, li) = (self.idx(prob)?, self.idx(label)?);
        let (p, l) = (self.val(pi), self.val(li));
        if p.shape() != l.shape() {
            return Err(Error::Shape(format!("bce_loss: {:?} vs {:?}", p.shape(), l.shape())));
        }
        if p.is_empty() {
            return Err(Error::Shape("bce_loss: empty tensors".into()));
        }
        if let Some(bad) = l.data().iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::InvalidArgument(format!("bce_loss: label {bad:?} is not 0 or 1")));
        }
        let total = p.data().iter().zip(l.data()).fold(0.0f64, |acc, (&pv, &y)| {
            let q = clamp_prob(pv.as_f64());
            acc - if y == T::one() { q.ln() } else { (1.0 - q).ln() }
        });
        let value = Tensor::scalar(T::of(total / p.len() as f64));
        self.push(value, Op::Bce { prob: pi, label: li }, &[pi], "bce_loss")
    }

    /// Biased HSIC between the rows of `a` and `b` (each N or N×D).
    ///
    /// Evaluated in f64. Bandwidths are resolved once at record time and
    /// treated as constants by the backward pass.
    pub fn hsic(&mut self, a: Var, b: Var, bw_a: Bandwidth, bw_b: Bandwidth) -> Result<(Var, HsicResult)> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let sa = to_samples(self.val(ai))?;
        let sb = to_samples(self.val(bi))?;
        let sigma_a = bw_a.resolve(&sa)?;
        let sigma_b = bw_b.resolve(&sb)?;
        let (res, grad) = hsic::hsic_with_gradient(&sa, &sb, sigma_a, sigma_b)?;
        let value = Tensor::scalar(T::of(res.raw));
        let op = Op::Hsic {
            a: ai,
            b: bi,
            grad_a: grad.wrt_a,
            grad_b: grad.wrt_b,
        };
        let var = self.push(value, op, &[ai, bi], "hsic")?;
        Ok((var, res))
    }

    /// Reverse pass from a scalar node. Does not modify the tape, so it can be
    /// replayed any number of times.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let li = self.idx(loss)?;
        let shape = self.val(li).shape();
        if self.val(li).len() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=li).map(|_| None).collect();
        grads[li] = Some(Tensor::full(shape, T::one()));

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut named = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(name) = &node.name {
                let g = grads
                    .get(i)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                named.insert(name.clone(), g);
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            named,
        })
    }

    fn propagate(&self, op: &Op, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let needs = |i: usize| self.nodes[i].requires_grad;
        match op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                if needs(*input) {
                    let gi = kernels::conv2d_backward_input(geom, g.data(), self.val(*weight).data());
                    accumulate(grads, *input, self.val(*input).shape(), gi);
                }
                if needs(*weight) || needs(*bias) {
                    let (gw, gb) = kernels::conv2d_backward_params(geom, g.data(), self.val(*input).data());
                    if needs(*weight) {
                        accumulate(grads, *weight, self.val(*weight).shape(), gw);
                    }
                    if needs(*bias) {
                        accumulate(grads, *bias, self.val(*bias).shape(), gb);
                    }
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let mut gi = vec![T::zero(); self.val(*input).len()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    gi[src] = gi[src] + gv;
                }
                accumulate(grads, *input, self.val(*input).shape(), gi);
            }
            Op::Upsample2 { input } => {
                let [n, c, h, w] = self.val(*input).dims4().expect("validated in forward");
                let gi = kernels::upsample2_backward(g.data(), n * c, h, w);
                accumulate(grads, *input, self.val(*input).shape(), gi);
            }
            Op::Concat { a, b } => {
                let [n, ca, h, w] = self.val(*a).dims4().expect("validated in forward");
                let cb = self.val(*b).dims4().expect("validated in forward")[1];
                let plane = h * w;
                let (mut ga, mut gb) = (Vec::with_capacity(n * ca * plane), Vec::with_capacity(n * cb * plane));
                for s in 0..n {
                    let base = s * (ca + cb) * plane;
                    ga.extend_from_slice(&g.data()[base..base + ca * plane]);
                    gb.extend_from_slice(&g.data()[base + ca * plane..base + (ca + cb) * plane]);
                }
                if needs(*a) {
                    accumulate(grads, *a, self.val(*a).shape(), ga);
                }
                if needs(*b) {
                    accumulate(grads, *b, self.val(*b).shape(), gb);
                }
            }
            Op::Affine { input, weight, bias } => {
                let (n, f) = (self.val(*input).shape()[0], self.val(*input).shape()[1]);
                let gcols = self.val(*weight).shape()[1];
                if needs(*input) {
                    let gi = kernels::affine_backward_input(g.data(), self.val(*weight).data(), n, f, gcols);
                    accumulate(grads, *input, self.val(*input).shape(), gi);
                }
                if needs(*weight) || needs(*bias) {
                    let (gw, gb) = kernels::affine_backward_params(g.data(), self.val(*input).data(), n, f, gcols);
                    if needs(*weight) {
                        accumulate(grads, *weight, self.val(*weight).shape(), gw);
                    }
                    if needs(*bias) {
                        accumulate(grads, *bias, self.val(*bias).shape(), gb);
                    }
                }
            }
            Op::Relu(x) => {
                let gi = self
                    .val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(grads, *x, out.shape(), gi);
            }
            Op::Sigmoid(x) => {
                let gi = out
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&s, &gv)| gv * s * (T::one() - s))
                    .collect();
                accumulate(grads, *x, out.shape(), gi);
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, out.shape(), g.data().to_vec());
                }
                if needs(*b) {
                    accumulate(grads, *b, out.shape(), g.data().to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, out.shape(), g.data().to_vec());
                }
                if needs(*b) {
                    accumulate(grads, *b, out.shape(), g.data().iter().map(|&v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a).data(), self.val(*b).data());
                if needs(*a) {
                    let gi = g.data().iter().zip(vb).map(|(&gv, &y)| gv * y).collect();
                    accumulate(grads, *a, out.shape(), gi);
                }
                if needs(*b) {
                    let gi = g.data().iter().zip(va).map(|(&gv, &x)| gv * x).collect();
                    accumulate(grads, *b, out.shape(), gi);
                }
            }
            Op::Scale(x, factor) => {
                let f = T::of(*factor);
                accumulate(grads, *x, out.shape(), g.data().iter().map(|&v| v * f).collect());
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                let shape = self.val(*x).shape();
                accumulate(grads, *x, shape, vec![gv; self.val(*x).len()]);
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, self.val(*x).shape(), g.data().to_vec());
            }
            Op::Column { input, col } => {
                let shape = self.val(*input).shape();
                let cols = shape[1];
                let mut gi = vec![T::zero(); self.val(*input).len()];
                for (r, &gv) in g.data().iter().enumerate() {
                    gi[r * cols + col] = gv;
                }
                accumulate(grads, *input, shape, gi);
            }
            Op::Mse { pred, label } => {
                let (p, l) = (self.val(*pred).data(), self.val(*label).data());
                let scale = g.data()[0] * T::of(2.0 / p.len() as f64);
                if needs(*pred) {
                    let gi = p.iter().zip(l).map(|(&a, &b)| scale * (a - b)).collect();
                    accumulate(grads, *pred, self.val(*pred).shape(), gi);
                }
                if needs(*label) {
                    let gi = p.iter().zip(l).map(|(&a, &b)| scale * (b - a)).collect();
                    accumulate(grads, *label, self.val(*label).shape(), gi);
                }
            }
            Op::Bce { prob, label } => {
                let (p, l) = (self.val(*prob).data(), self.val(*label).data());
                let upstream = g.data()[0].as_f64() / p.len() as f64;
                let gi = p
                    .iter()
                    .zip(l)
                    .map(|(&pv, &y)| {
                        let q = pv.as_f64();
                        if !(BCE_EPS..=1.0 - BCE_EPS).contains(&q) {
                            return T::zero();
                        }
                        let d = if y == T::one() { -1.0 / q } else { 1.0 / (1.0 - q) };
                        T::of(upstream * d)
                    })
                    .collect();
                accumulate(grads, *prob, self.val(*prob).shape(), gi);
            }
            Op::Hsic { a, b, grad_a, grad_b } => {
                let up = g.data()[0].as_f64();
                if needs(*a) {
                    let gi = grad_a.iter().map(|&v| T::of(up * v)).collect();
                    accumulate(grads, *a, self.val(*a).shape(), gi);
                }
                if needs(*b) {
                    let gi = grad_b.iter().map(|&v| T::of(up * v)).collect();
                    accumulate(grads, *b, self.val(*b).shape(), gi);
                }
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], at: usize, shape: &[usize], contribution: Vec<T>) {
    match &mut grads[at] {
        Some(existing) => kernels::add_assign(existing.data_mut(), &contribution),
        slot @ None => *slot = Some(Tensor::from_parts(shape.to_vec(), contribution)),
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    let c = T::of(SIGMOID_CLAMP);
    let x = v.max(-c).min(c);
    T::one() / (T::one() + (-x).exp())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

fn to_samples<T: Real>(t: &Tensor<T>) -> Result<Samples> {
    let (n, dim) = match t.shape() {
        &[n] => (n, 1),
        &[n, d] => (n, d),
        s => return Err(Error::Shape(format!("hsic: samples must be N or N×D, got {s:?}"))),
    };
    Samples::from_flat(n, dim, t.data().iter().map(|v| v.as_f64()).collect())
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Real> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
    named: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to any node on the tape; `None` when the node
    /// did not influence the loss or is not tracked.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Gradient of a named parameter; zero-filled if untouched by the loss.
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.named.get(name)
    }

    pub fn by_name(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.named
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor<T>> {
        self.named
    }
}
