use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::split_axis;
use super::{Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul { a: usize, b: usize, shared_rhs: bool },
    Add(usize, usize),
    AddBcast(usize, usize),
    Mul(usize, usize),
    Scale(usize, S),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Transpose(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    Expand(usize),
    Softmax { a: usize, axis: usize },
    LayerNorm { x: usize, gain: usize, bias: usize, xhat: Vec<S>, rstd: Vec<S> },
    Gelu(usize),
    Dropout { a: usize, mask: Vec<S> },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<S> },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Reverse-mode differentiation tape.
///
/// Values are recorded in evaluation order, so recording order is a valid
/// topological order and `backward` is a single reverse sweep. A tape has a
/// single owner; reuse one across steps with [`Tape::clear`].
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// Records an input. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    /// Matrix product over the last two dims.
    ///
    /// Either both operands carry identical leading (batch) dims, or `b` is a
    /// plain matrix shared across every leading index of `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || TensorError::MatMul {
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let shared_rhs = sb.len() == 2;
        if !shared_rhs && sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(mismatch());
        }
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = vec![S::zero(); out_shape.iter().product()];
        if shared_rhs {
            let rows = av.len() / k;
            S::gemm(rows, k, n, av, k as isize, 1, bv, n as isize, 1, S::zero(), &mut out);
        } else {
            let batch = av.len() / (m * k);
            for i in 0..batch {
                S::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..],
                    k as isize,
                    1,
                    &bv[i * k * n..],
                    n as isize,
                    1,
                    S::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        let value = Tensor::from_vec(&out_shape, out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a: a.0,
                b: b.0,
                shared_rhs,
            },
            rg,
        ))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Mismatch {
                op: "elementwise",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Add(a.0, b.0), rg))
    }

    /// Adds `b` to every trailing block of `a`; `b`'s shape must equal a
    /// suffix of `a`'s shape (bias rows, positional tables).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(TensorError::Mismatch {
                op: "add_broadcast",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let mut value = self.value(a).clone();
        let bv = self.value(b).data();
        for chunk in value.data_mut().chunks_mut(bv.len()) {
            for (x, &y) in chunk.iter_mut().zip(bv) {
                *x += y;
            }
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::AddBcast(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b)?;
        let bv = self.value(b).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(bv)
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a.0);
        self.push(value, Op::Scale(a.0, factor), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a.0);
        self.push(value, Op::Sum(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / S::from_f64(t.numel() as f64));
        let rg = self.rg(a.0);
        self.push(value, Op::Mean(a.0), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Reshape(a.0), rg))
    }

    /// Swaps the last two dims.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(TensorError::InvalidAxis {
                op: "transpose",
                axis: 1,
                shape,
            });
        }
        let value = transpose_last2(self.value(a));
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Transpose(a.0), rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or(TensorError::EmptyConcat)?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::Mismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let value = Tensor::from_vec(&out_shape, data)?;
        let rg = inputs.iter().any(|v| self.rg(v.0));
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.iter().map(|v| v.0).collect(),
                axis,
            },
            rg,
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                shape,
            });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(TensorError::SliceRange {
                start,
                len,
                dim: shape[axis],
            });
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::from_vec(&out_shape, data)?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Slice { a: a.0, axis, start }, rg))
    }

    /// Repeats `a` `n` times along a new leading dim.
    pub fn expand(&mut self, a: Var, n: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        let mut shape = vec![n];
        shape.extend_from_slice(t.shape());
        let mut data = Vec::with_capacity(n * t.numel());
        for _ in 0..n {
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(&shape, data)?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Expand(a.0), rg))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                shape,
            });
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let mut data = self.value(a).data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * dim * inner + j * inner + i;
                let max = (0..dim)
                    .map(|j| data[idx(j)])
                    .fold(S::neg_infinity(), S::max);
                let mut total = S::zero();
                for j in 0..dim {
                    let e = (data[idx(j)] - max).exp();
                    data[idx(j)] = e;
                    total += e;
                }
                for j in 0..dim {
                    data[idx(j)] /= total;
                }
            }
        }
        let value = Tensor::from_vec(&shape, data)?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Softmax { a: a.0, axis }, rg))
    }

    /// Normalizes each trailing vector to zero mean and unit variance, then
    /// applies `gain` and `bias` (both of trailing length).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: S) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(TensorError::Mismatch {
                    op: "layer_norm",
                    left: shape.clone(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = src.len() / d;
        let dn = S::from_f64(d as f64);
        let mut xhat = Vec::with_capacity(src.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(src.len());
        for row in src.chunks(d) {
            let mean = row.iter().copied().sum::<S>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
            let r = S::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let value = Tensor::from_vec(&shape, out)?;
        let rg = self.rg(x.0) || self.rg(gain.0) || self.rg(bias.0);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu_scalar);
        let rg = self.rg(a.0);
        self.push(value, Op::Gelu(a.0), rg)
    }

    /// Inverted dropout. Identity when `p == 0` or outside training.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, seed: u64) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::DropoutRate(p));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = S::from_f64(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        let value = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Dropout { a: a.0, mask }, rg))
    }

    /// Mean negative log-likelihood of `labels` under softmax(`logits`).
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(TensorError::Mismatch {
                op: "cross_entropy",
                left: shape,
                right: vec![labels.len()],
            });
        }
        let k = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Label { label: bad, classes: k });
        }
        let src = self.value(logits).data();
        let mut probs = Vec::with_capacity(src.len());
        let mut loss = 0.0f64;
        for (row, &label) in src.chunks(k).zip(labels) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
            loss += (lse - row[label]).as_f64();
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let value = Tensor::scalar(S::from_f64(loss / labels.len() as f64));
        let rg = self.rg(logits.0);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate across every
    /// use of a value. The tape is left intact; call [`Tape::clear`] to reuse.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, TensorError> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(loss_shape));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], idx: usize, g: Tensor<S>) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<(), TensorError> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, shared_rhs } => {
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                let sa = av.shape();
                let sb = bv.shape();
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                if shared_rhs {
                    let rows = av.numel() / k;
                    if self.rg(a) {
                        // dA = dC · Bᵀ
                        let mut da = vec![S::zero(); av.numel()];
                        S::gemm(rows, n, k, gd, n as isize, 1, bv.data(), 1, n as isize, S::zero(), &mut da);
                        self.accumulate(grads, a, Tensor::from_vec(sa, da)?);
                    }
                    if self.rg(b) {
                        // dB = Aᵀ · dC
                        let mut db = vec![S::zero(); bv.numel()];
                        S::gemm(k, rows, n, av.data(), 1, k as isize, gd, n as isize, 1, S::zero(), &mut db);
                        self.accumulate(grads, b, Tensor::from_vec(sb, db)?);
                    }
                } else {
                    let batch = av.numel() / (m * k);
                    if self.rg(a) {
                        let mut da = vec![S::zero(); av.numel()];
                        for i in 0..batch {
                            S::gemm(
                                m,
                                n,
                                k,
                                &gd[i * m * n..],
                                n as isize,
                                1,
                                &bv.data()[i * k * n..],
                                1,
                                n as isize,
                                S::zero(),
                                &mut da[i * m * k..(i + 1) * m * k],
                            );
                        }
                        self.accumulate(grads, a, Tensor::from_vec(sa, da)?);
                    }
                    if self.rg(b) {
                        let mut db = vec![S::zero(); bv.numel()];
                        for i in 0..batch {
                            S::gemm(
                                k,
                                m,
                                n,
                                &av.data()[i * m * k..],
                                1,
                                k as isize,
                                &gd[i * m * n..],
                                n as isize,
                                1,
                                S::zero(),
                                &mut db[i * k * n..(i + 1) * k * n],
                            );
                        }
                        self.accumulate(grads, b, Tensor::from_vec(sb, db)?);
                    }
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::AddBcast(a, b) => {
                self.accumulate(grads, a, g.clone());
                if self.rg(b) {
                    let sb = self.nodes[b].value.shape();
                    let len: usize = sb.iter().product();
                    let mut db = vec![S::zero(); len];
                    for chunk in gd.chunks(len) {
                        for (acc, &v) in db.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, b, Tensor::from_vec(sb, db)?);
                }
            }
            &Op::Mul(a, b) => {
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                if self.rg(a) {
                    let da = gd.iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, a, Tensor::from_vec(av.shape(), da)?);
                }
                if self.rg(b) {
                    let db = gd.iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, b, Tensor::from_vec(bv.shape(), db)?);
                }
            }
            &Op::Scale(a, factor) => {
                self.accumulate(grads, a, g.map(|x| x * factor));
            }
            &Op::Sum(a) => {
                let shape = self.nodes[a].value.shape();
                self.accumulate(grads, a, Tensor::full(shape, gd[0]));
            }
            &Op::Mean(a) => {
                let t = &self.nodes[a].value;
                let v = gd[0] / S::from_f64(t.numel() as f64);
                self.accumulate(grads, a, Tensor::full(t.shape(), v));
            }
            &Op::Reshape(a) => {
                let shape = self.nodes[a].value.shape();
                self.accumulate(grads, a, g.clone().reshaped(shape)?);
            }
            &Op::Transpose(a) => {
                self.accumulate(grads, a, transpose_last2(g));
            }
            Op::Concat { inputs, axis } => {
                let axis = *axis;
                let out_shape = g.shape();
                let (outer, total, inner) = split_axis(out_shape, axis);
                let mut offset = 0;
                for &input in inputs {
                    let shape = self.nodes[input].value.shape();
                    let len = shape[axis];
                    if self.rg(input) {
                        let mut part = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            part.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        self.accumulate(grads, input, Tensor::from_vec(shape, part)?);
                    }
                    offset += len;
                }
            }
            &Op::Slice { a, axis, start } => {
                let shape = self.nodes[a].value.shape();
                let (outer, dim, inner) = split_axis(shape, axis);
                let len = g.shape()[axis];
                let mut da = vec![S::zero(); outer * dim * inner];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    da[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                self.accumulate(grads, a, Tensor::from_vec(shape, da)?);
            }
            &Op::Expand(a) => {
                let t = &self.nodes[a].value;
                let mut da = vec![S::zero(); t.numel()];
                for chunk in gd.chunks(t.numel()) {
                    for (acc, &v) in da.iter_mut().zip(chunk) {
                        *acc += v;
                    }
                }
                self.accumulate(grads, a, Tensor::from_vec(t.shape(), da)?);
            }
            &Op::Softmax { a, axis } => {
                let y = node.value.data();
                let (outer, dim, inner) = split_axis(node.value.shape(), axis);
                let mut da = vec![S::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * dim * inner + j * inner + i;
                        let dot: S = (0..dim).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..dim {
                            da[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                self.accumulate(grads, a, Tensor::from_vec(node.value.shape(), da)?);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let gv = self.nodes[gain].value.data();
                let d = gv.len();
                let dn = S::from_f64(d as f64);
                let mut dgain = vec![S::zero(); d];
                let mut dbias = vec![S::zero(); d];
                let mut dx = vec![S::zero(); gd.len()];
                for (r, (grow, hrow)) in gd.chunks(d).zip(xhat.chunks(d)).enumerate() {
                    let mut sum_dh = S::zero();
                    let mut sum_dh_h = S::zero();
                    for j in 0..d {
                        dgain[j] += grow[j] * hrow[j];
                        dbias[j] += grow[j];
                        let dh = grow[j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hrow[j];
                    }
                    let scale = rstd[r] / dn;
                    for j in 0..d {
                        let dh = grow[j] * gv[j];
                        dx[r * d + j] = scale * (dn * dh - sum_dh - hrow[j] * sum_dh_h);
                    }
                }
                if self.rg(x) {
                    self.accumulate(grads, x, Tensor::from_vec(node.value.shape(), dx)?);
                }
                self.accumulate(grads, gain, Tensor::from_vec(&[d], dgain)?);
                self.accumulate(grads, bias, Tensor::from_vec(&[d], dbias)?);
            }
            &Op::Gelu(a) => {
                let xv = self.nodes[a].value.data();
                let da = gd
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| gi * gelu_derivative(xi))
                    .collect();
                self.accumulate(grads, a, Tensor::from_vec(node.value.shape(), da)?);
            }
            Op::Dropout { a, mask } => {
                let da = gd.iter().zip(mask).map(|(&gi, &m)| gi * m).collect();
                self.accumulate(grads, *a, Tensor::from_vec(node.value.shape(), da)?);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let shape = self.nodes[*logits].value.shape();
                let k = shape[1];
                let scale = gd[0] / S::from_f64(labels.len() as f64);
                let mut dl: Vec<S> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    dl[row * k + label] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::from_vec(shape, dl)?);
            }
        }
        Ok(())
    }
}

fn transpose_last2<S: Real>(t: &Tensor<S>) -> Tensor<S> {
    let shape = t.shape();
    let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let src = t.data();
    let mut data = vec![S::zero(); src.len()];
    for (b, block) in src.chunks(r * c).enumerate() {
        let dst = &mut data[b * r * c..(b + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = block[i * c + j];
            }
        }
    }
    let mut out_shape = shape.to_vec();
    let n = out_shape.len();
    out_shape.swap(n - 2, n - 1);
    Tensor::from_vec(&out_shape, data).expect("transpose preserves element count")
}

pub(crate) fn gelu_scalar<S: Real>(x: S) -> S {
    let half = S::from_f64(0.5);
    half * x * (S::one() + (x * S::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_derivative<S: Real>(x: S) -> S {
    let half = S::from_f64(0.5);
    let cdf = half * (S::one() + (x * S::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * S::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}
