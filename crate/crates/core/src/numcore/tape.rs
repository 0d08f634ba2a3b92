//! Reverse-mode differentiation over a flat operation record.
//!
//! Nodes are appended in execution order, so the record is topologically
//! sorted by construction. [`Tape::backward`] walks it once in reverse.

use super::ops::{self, BinaryOp};
use super::tensor::{for_each_index2, sum_to_shape};
use super::{fft, NumError, Result, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Affine(Var, T),
    MatMul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    SumAll(Var),
    SumAxis(Var, usize),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Abs(Var),
    Square(Var),
    Unfold(Var, usize, usize),
    Concat(Vec<Var>),
    PairwiseCosine(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record plus leaf gradient accumulators.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    flops: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            flops: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Approximate floating-point operations executed by forward ops so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool, flops: u64) -> Var {
        self.flops += flops;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad, 0)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let out = ops::binary(op, self.value(a), self.value(b))?;
        let n = out.len() as u64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Binary(op, a, b), rg, n))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let n = out.len() as u64;
        let rg = self.rg(x);
        self.push(out, Op::Affine(x, scale), rg, 2 * n)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.affine(x, s, T::zero())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let flops = ops::matmul_flops(self.shape(a), self.shape(b));
        let out = ops::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg, flops))
    }

    /// `x · w (+ b)` over the last axis.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg, 0))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = ops::permute(self.value(x), axes)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Permute(x, axes.to_vec()), rg, 0))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let nd = self.value(x).ndim();
        if nd < 2 {
            return Err(NumError::Axis {
                op: "transpose",
                axis: 1,
                shape: self.shape(x).to_vec(),
            });
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(x, &axes)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.len() as u64;
        let out = Tensor::scalar(v.sum());
        let rg = self.rg(x);
        self.push(out, Op::SumAll(x), rg, n)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum_all(x);
        self.scale(s, T::one() / T::from_f64(n as f64))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::sum_axis(self.value(x), axis)?;
        let n = self.value(x).len() as u64;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SumAxis(x, axis), rg, n))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let len = *self.shape(x).get(axis).ok_or_else(|| NumError::Axis {
            op: "mean_axis",
            axis,
            shape: self.shape(x).to_vec(),
        })?;
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, T::one() / T::from_f64(len as f64)))
    }

    /// Mean along `axis` that is exactly invariant to reordering that axis.
    pub fn mean_axis_sorted(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::sum_axis_sorted(self.value(x), axis)?;
        let len = self.shape(x)[axis];
        let n = self.value(x).len() as u64;
        let rg = self.rg(x);
        let s = self.push(out, Op::SumAxis(x, axis), rg, n);
        Ok(self.scale(s, T::one() / T::from_f64(len as f64)))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::softmax(self.value(x), axis)?;
        let n = out.len() as u64;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Softmax(x, axis), rg, 4 * n))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let r = ops::layer_norm_forward(self.value(x), self.value(gain), self.value(bias), eps)?;
        let n = r.y.len() as u64;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            r.y,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat: r.xhat,
                rstd: r.rstd,
            },
            rg,
            8 * n,
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(ops::gelu_scalar);
        let n = out.len() as u64;
        let rg = self.rg(x);
        self.push(out, Op::Gelu(x), rg, 8 * n)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(ops::sigmoid_scalar);
        let n = out.len() as u64;
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg, 4 * n)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.abs());
        let n = out.len() as u64;
        let rg = self.rg(x);
        self.push(out, Op::Abs(x), rg, n)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let n = out.len() as u64;
        let rg = self.rg(x);
        self.push(out, Op::Square(x), rg, n)
    }

    pub fn unfold(&mut self, x: Var, size: usize, step: usize) -> Result<Var> {
        let out = ops::unfold(self.value(x), size, step)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Unfold(x, size, step), rg, 0))
    }

    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat_last(&vals)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg, 0))
    }

    /// Mean pairwise cosine similarity among the `K` rows of each batch slice.
    pub fn pairwise_cosine(&mut self, x: Var) -> Result<Var> {
        let v = ops::mean_pairwise_cosine(self.value(x))?;
        let n = self.value(x).len() as u64;
        let k = self.shape(x)[1] as u64;
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::PairwiseCosine(x), rg, 3 * n * k))
    }

    /// One-sided DFT along `axis`, returned as (real, imaginary) parts.
    pub fn rfft(&mut self, x: Var, axis: usize) -> Result<(Var, Var)> {
        let n = *self.shape(x).get(axis).ok_or_else(|| NumError::Axis {
            op: "rfft",
            axis,
            shape: self.shape(x).to_vec(),
        })?;
        if n < 2 {
            return Err(NumError::Invalid(format!("rfft needs at least 2 points, got {n}")));
        }
        let (c, s) = fft::forward_matrices::<T>(n);
        let (xt, perm) = self.axis_to_rows(x, axis)?;
        let c = self.constant(c);
        let s = self.constant(s);
        let re = self.matmul(c, xt)?;
        let im = self.matmul(s, xt)?;
        Ok((self.restore_axis(re, &perm)?, self.restore_axis(im, &perm)?))
    }

    /// Inverse of [`Tape::rfft`]; `n` is the time-domain length.
    pub fn irfft(&mut self, re: Var, im: Var, n: usize, axis: usize) -> Result<Var> {
        let f = *self.shape(re).get(axis).ok_or_else(|| NumError::Axis {
            op: "irfft",
            axis,
            shape: self.shape(re).to_vec(),
        })?;
        if n < 2 || fft::rfft_bins(n) != f || self.shape(re) != self.shape(im) {
            return Err(NumError::Shape {
                op: "irfft",
                lhs: self.shape(re).to_vec(),
                rhs: vec![n],
            });
        }
        let (r, i) = fft::inverse_matrices::<T>(n);
        let (ret, perm) = self.axis_to_rows(re, axis)?;
        let (imt, _) = self.axis_to_rows(im, axis)?;
        let r = self.constant(r);
        let i = self.constant(i);
        let a = self.matmul(r, ret)?;
        let b = self.matmul(i, imt)?;
        let y = self.add(a, b)?;
        self.restore_axis(y, &perm)
    }

    /// Moves `axis` to the second-to-last position so a left matmul acts on it.
    fn axis_to_rows(&mut self, x: Var, axis: usize) -> Result<(Var, Option<Vec<usize>>)> {
        let nd = self.value(x).ndim();
        if nd == 1 {
            let n = self.shape(x)[0];
            return Ok((self.reshape(x, &[n, 1])?, Some(vec![])));
        }
        if axis == nd - 2 {
            return Ok((x, None));
        }
        let mut axes: Vec<usize> = (0..nd).filter(|&a| a != axis).collect();
        axes.insert(nd - 2, axis);
        Ok((self.permute(x, &axes)?, Some(axes)))
    }

    fn restore_axis(&mut self, x: Var, perm: &Option<Vec<usize>>) -> Result<Var> {
        match perm {
            None => Ok(x),
            Some(p) if p.is_empty() => {
                let n = self.shape(x)[0];
                self.reshape(x, &[n])
            }
            Some(p) => {
                let inv = ops::inverse_permutation(p);
                self.permute(x, &inv)
            }
        }
    }

    /// Propagates `d root / d node` to every node requiring a gradient and
    /// adds the result into the leaf accumulators.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(NumError::NonScalarRoot(self.shape(root).to_vec()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Tensor::full(self.shape(root), T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contributions = self.local_grads(i, &g)?;
            for (v, gv) in contributions {
                if !self.rg(v) {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&gv)?,
                    slot => *slot = Some(gv),
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                match &mut self.grads[i] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let out = &node.value;
        let grads = match &node.op {
            Op::Leaf => vec![],
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut r = Vec::with_capacity(2);
                match op {
                    BinaryOp::Add => {
                        r.push((*a, sum_to_shape(g, av.shape())));
                        r.push((*b, sum_to_shape(g, bv.shape())));
                    }
                    BinaryOp::Sub => {
                        r.push((*a, sum_to_shape(g, av.shape())));
                        r.push((*b, sum_to_shape(&g.map(|v| -v), bv.shape())));
                    }
                    BinaryOp::Mul => {
                        if self.rg(*a) {
                            r.push((*a, sum_to_shape(&ops::binary(BinaryOp::Mul, g, bv)?, av.shape())));
                        }
                        if self.rg(*b) {
                            r.push((*b, sum_to_shape(&ops::binary(BinaryOp::Mul, g, av)?, bv.shape())));
                        }
                    }
                    BinaryOp::Div => {
                        let ga = ops::binary(BinaryOp::Div, g, bv)?;
                        if self.rg(*b) {
                            let t = ops::binary(BinaryOp::Mul, &ga, out)?;
                            r.push((*b, sum_to_shape(&t.map(|v| -v), bv.shape())));
                        }
                        r.push((*a, sum_to_shape(&ga, av.shape())));
                    }
                }
                r
            }
            Op::Affine(x, s) => {
                let s = *s;
                vec![(*x, g.map(|v| v * s))]
            }
            Op::MatMul(a, b) => self.matmul_backward(*a, *b, g)?,
            Op::Reshape(x) => vec![(*x, g.reshape(self.shape(*x))?)],
            Op::Permute(x, axes) => vec![(*x, ops::permute(g, &ops::inverse_permutation(axes))?)],
            Op::SumAll(x) => vec![(*x, Tensor::full(self.shape(*x), g.item()))],
            Op::SumAxis(x, axis) => {
                let shape = self.shape(*x);
                let (outer, len, inner) = ops::axis_split(shape, *axis);
                let mut d = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for j in 0..len {
                        d[(o * len + j) * inner..(o * len + j + 1) * inner].copy_from_slice(src);
                    }
                }
                vec![(*x, Tensor::new(shape.to_vec(), d)?)]
            }
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = ops::axis_split(out.shape(), *axis);
                let (y, gd) = (out.data(), g.data());
                let mut d = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for k in 0..inner {
                        let base = o * len * inner + k;
                        let mut dotp = T::zero();
                        for j in 0..len {
                            dotp += gd[base + j * inner] * y[base + j * inner];
                        }
                        for j in 0..len {
                            let p = base + j * inner;
                            d[p] = y[p] * (gd[p] - dotp);
                        }
                    }
                }
                vec![(*x, Tensor::new(out.shape().to_vec(), d)?)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let dd = *out.shape().last().unwrap();
                let rows = out.len() / dd;
                let gv = self.value(*gain).data();
                let gd = g.data();
                let mut dx = vec![T::zero(); out.len()];
                let mut dg = vec![T::zero(); dd];
                let mut db = vec![T::zero(); dd];
                let inv_d = T::one() / T::from_f64(dd as f64);
                for r in 0..rows {
                    let gr = &gd[r * dd..(r + 1) * dd];
                    let hr = &xhat[r * dd..(r + 1) * dd];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..dd {
                        let dh = gr[j] * gv[j];
                        m1 += dh;
                        m2 += dh * hr[j];
                        dg[j] += gr[j] * hr[j];
                        db[j] += gr[j];
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    for j in 0..dd {
                        let dh = gr[j] * gv[j];
                        dx[r * dd + j] = rstd[r] * (dh - m1 - hr[j] * m2);
                    }
                }
                vec![
                    (*x, Tensor::new(out.shape().to_vec(), dx)?),
                    (*gain, Tensor::new(vec![dd], dg)?),
                    (*bias, Tensor::new(vec![dd], db)?),
                ]
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &xv)| gv * ops::gelu_grad_scalar(xv))
                    .collect();
                vec![(*x, Tensor::new(out.shape().to_vec(), d)?)]
            }
            Op::Sigmoid(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gv, &y)| gv * y * (T::one() - y))
                    .collect();
                vec![(*x, Tensor::new(out.shape().to_vec(), d)?)]
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &xv)| {
                        if xv > T::zero() {
                            gv
                        } else if xv < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                vec![(*x, Tensor::new(out.shape().to_vec(), d)?)]
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let two = T::from_f64(2.0);
                let d = g.data().iter().zip(xv).map(|(&gv, &xv)| two * gv * xv).collect();
                vec![(*x, Tensor::new(out.shape().to_vec(), d)?)]
            }
            Op::Unfold(x, size, step) => {
                let shape = self.shape(*x);
                let l = *shape.last().unwrap();
                let n = (l - size) / step + 1;
                let rows = self.value(*x).len() / l;
                let mut d = vec![T::zero(); rows * l];
                let gd = g.data();
                for r in 0..rows {
                    for w in 0..n {
                        let src = &gd[(r * n + w) * size..(r * n + w + 1) * size];
                        for (p, &v) in src.iter().enumerate() {
                            d[r * l + w * step + p] += v;
                        }
                    }
                }
                vec![(*x, Tensor::new(shape.to_vec(), d)?)]
            }
            Op::Concat(parts) => {
                let widths: Vec<usize> = parts.iter().map(|&p| *self.shape(p).last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let rows = out.len() / total;
                let mut bufs: Vec<Vec<T>> = widths.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (buf, &w) in bufs.iter_mut().zip(&widths) {
                        buf.extend_from_slice(&g.data()[off..off + w]);
                        off += w;
                    }
                }
                let mut r = Vec::with_capacity(parts.len());
                for (&p, buf) in parts.iter().zip(bufs) {
                    r.push((p, Tensor::new(self.shape(p).to_vec(), buf)?));
                }
                r
            }
            Op::PairwiseCosine(x) => vec![(*x, ops::pairwise_cosine_backward(self.value(*x), g.item()))],
        };
        Ok(grads)
    }

    fn matmul_backward(&self, a: Var, b: Var, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let (av, bv) = (self.value(a), self.value(b));
        let plan = ops::matmul_plan(av.shape(), bv.shape())?;
        let (m, k, n) = (plan.m, plan.k, plan.n);
        let mut da = vec![T::zero(); av.len()];
        let mut db = vec![T::zero(); bv.len()];
        let (want_a, want_b) = (self.rg(a), self.rg(b));
        if bv.ndim() == 2 {
            let rows = av.len() / k.max(1);
            if want_a {
                ops::gemm_nt(g.data(), bv.data(), &mut da, rows, n, k);
            }
            if want_b {
                ops::gemm_tn(av.data(), g.data(), &mut db, rows, k, n);
            }
        } else {
            let gd = g.data();
            for_each_index2(&plan.batch, &plan.a_strides, &plan.b_strides, |bi, oa, ob| {
                let gs = &gd[bi * m * n..(bi + 1) * m * n];
                if want_a {
                    ops::gemm_nt(gs, &bv.data()[ob..ob + k * n], &mut da[oa..oa + m * k], m, n, k);
                }
                if want_b {
                    ops::gemm_tn(&av.data()[oa..oa + m * k], gs, &mut db[ob..ob + k * n], m, k, n);
                }
            });
        }
        let mut r = Vec::with_capacity(2);
        if want_a {
            r.push((a, Tensor::new(av.shape().to_vec(), da)?));
        }
        if want_b {
            r.push((b, Tensor::new(bv.shape().to_vec(), db)?));
        }
        Ok(r)
    }
}
