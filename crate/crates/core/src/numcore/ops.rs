//! Forward kernels. Each function is pure; the tape wraps them with
//! backward rules.

use super::tensor::{broadcast_shape, broadcast_strides, for_each_index2, strides};
use super::{NumError, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }
}

/// Broadcasting element-wise binary operation.
pub fn binary<T: Scalar>(op: BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| op.apply(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let shape = broadcast_shape(op.name(), a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &shape);
    let sb = broadcast_strides(b.shape(), &shape);
    let n: usize = shape.iter().product();
    let mut out = vec![T::zero(); n];
    let (ad, bd) = (a.data(), b.data());
    for_each_index2(&shape, &sa, &sb, |flat, oa, ob| {
        out[flat] = op.apply(ad[oa], bd[ob]);
    });
    Tensor::new(shape, out)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(BinaryOp::Add, a, b)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(BinaryOp::Mul, a, b)
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] += dot(arow, brow);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Batch layout of a `[.., m, k] x [.., k, n]` product.
#[derive(Debug, Clone)]
pub(crate) struct MatmulPlan {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub batch: Vec<usize>,
    pub a_strides: Vec<usize>,
    pub b_strides: Vec<usize>,
    pub out_shape: Vec<usize>,
}

pub(crate) fn matmul_plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    let err = || NumError::Shape {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(err());
    }
    let ab = &a[..a.len() - 2];
    let bb = &b[..b.len() - 2];
    let batch = broadcast_shape("matmul", ab, bb).map_err(|_| err())?;
    let a_strides = broadcast_strides(ab, &batch).into_iter().map(|s| s * m * k).collect();
    let b_strides = broadcast_strides(bb, &batch).into_iter().map(|s| s * k * n).collect();
    let mut out_shape = batch.clone();
    out_shape.extend([m, n]);
    Ok(MatmulPlan {
        m,
        k,
        n,
        batch,
        a_strides,
        b_strides,
        out_shape,
    })
}

/// Batched matrix product with broadcasting over leading axes.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let plan = matmul_plan(a.shape(), b.shape())?;
    let (m, k, n) = (plan.m, plan.k, plan.n);
    let total: usize = plan.out_shape.iter().product();
    let mut out = vec![T::zero(); total];
    if b.ndim() == 2 {
        // weights shared across the batch: one flat product
        let rows = a.len() / k.max(1);
        if k > 0 {
            gemm_nn(a.data(), b.data(), &mut out, rows, k, n);
        }
    } else {
        let (ad, bd) = (a.data(), b.data());
        for_each_index2(&plan.batch, &plan.a_strides, &plan.b_strides, |bi, oa, ob| {
            gemm_nn(
                &ad[oa..oa + m * k],
                &bd[ob..ob + k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        });
    }
    Tensor::new(plan.out_shape, out)
}

pub fn matmul_flops(plan_a: &[usize], plan_b: &[usize]) -> u64 {
    match matmul_plan(plan_a, plan_b) {
        Ok(p) => 2 * (p.batch.iter().product::<usize>() * p.m * p.k * p.n) as u64,
        Err(_) => 0,
    }
}

/// Reorders axes: output axis `i` is input axis `axes[i]`.
pub fn permute<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let nd = x.ndim();
    let mut seen = vec![false; nd];
    if axes.len() != nd || axes.iter().any(|&a| a >= nd || std::mem::replace(&mut seen[a], true)) {
        return Err(NumError::Shape {
            op: "permute",
            lhs: x.shape().to_vec(),
            rhs: axes.to_vec(),
        });
    }
    let in_strides = strides(x.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape()[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let zero = vec![0; nd];
    let mut out = vec![T::zero(); x.len()];
    let xd = x.data();
    for_each_index2(&out_shape, &src_strides, &zero, |flat, src, _| {
        out[flat] = xd[src];
    });
    Tensor::new(out_shape, out)
}

pub fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(NumError::Axis {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    check_axis("softmax", x.shape(), axis)?;
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(NumError::NonFinite { op: "softmax" });
    }
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let xd = x.data();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut mx = xd[base];
            for j in 1..len {
                mx = mx.max(xd[base + j * inner]);
            }
            let mut s = T::zero();
            for j in 0..len {
                let e = (xd[base + j * inner] - mx).exp();
                out[base + j * inner] = e;
                s += e;
            }
            for j in 0..len {
                out[base + j * inner] /= s;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Output of [`layer_norm_forward`] with the activations needed for backward.
pub(crate) struct LayerNormOut<T> {
    pub y: Tensor<T>,
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<LayerNormOut<T>> {
    let d = *x.shape().last().ok_or_else(|| NumError::Shape {
        op: "layer_norm",
        lhs: x.shape().to_vec(),
        rhs: gain.shape().to_vec(),
    })?;
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(NumError::Shape {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let rows = x.len() / d.max(1);
    let inv_d = T::one() / T::from_f64(d as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let (g, b) = (gain.data(), bias.data());
    for r in 0..rows {
        let row = &x.data()[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * g[j] + b[j];
        }
    }
    Ok(LayerNormOut {
        y: Tensor::new(x.shape().to_vec(), y)?,
        xhat,
        rstd,
    })
}

/// Layer normalization over the last axis with affine gain and bias.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    Ok(layer_norm_forward(x, gain, bias, eps)?.y)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::from_f64(3.0) * k * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Sum along `axis`, removing it.
pub fn sum_axis<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    check_axis("sum_axis", x.shape(), axis)?;
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let mut out = vec![T::zero(); outer * inner];
    let xd = x.data();
    for o in 0..outer {
        for j in 0..len {
            let src = &xd[(o * len + j) * inner..(o * len + j + 1) * inner];
            for (dst, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *dst += v;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    Tensor::new(shape, out)
}

/// Like [`sum_axis`] but adds each slice in sorted order, so the result is
/// bitwise independent of the order of elements along `axis`.
pub fn sum_axis_sorted<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    check_axis("sum_axis_sorted", x.shape(), axis)?;
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let mut out = vec![T::zero(); outer * inner];
    let xd = x.data();
    let mut buf = Vec::with_capacity(len);
    for o in 0..outer {
        for i in 0..inner {
            buf.clear();
            buf.extend((0..len).map(|j| xd[(o * len + j) * inner + i]));
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            out[o * inner + i] = buf.iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    Tensor::new(shape, out)
}

/// Sliding windows over the last axis: `[.., L] -> [.., n, size]` with `n = (L - size)/step + 1`.
pub fn unfold<T: Scalar>(x: &Tensor<T>, size: usize, step: usize) -> Result<Tensor<T>> {
    let l = *x.shape().last().unwrap_or(&0);
    if size == 0 || step == 0 || size > l || !(l - size).is_multiple_of(step) {
        return Err(NumError::Invalid(format!(
            "unfold: window {size} stride {step} does not tile length {l}"
        )));
    }
    let n = (l - size) / step + 1;
    let rows = x.len() / l;
    let mut out = Vec::with_capacity(rows * n * size);
    for r in 0..rows {
        let row = &x.data()[r * l..(r + 1) * l];
        for w in 0..n {
            out.extend_from_slice(&row[w * step..w * step + size]);
        }
    }
    let mut shape = x.shape()[..x.ndim() - 1].to_vec();
    shape.extend([n, size]);
    Tensor::new(shape, out)
}

/// Concatenates along the last axis; leading axes must match.
pub fn concat_last<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| NumError::Invalid("concat of zero tensors".into()))?;
    let lead = &first.shape()[..first.ndim() - 1];
    for p in parts {
        if p.ndim() != first.ndim() || &p.shape()[..p.ndim() - 1] != lead {
            return Err(NumError::Shape {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let rows: usize = lead.iter().product();
    let widths: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(shape, out)
}

/// Norm below which a vector is treated as zero in cosine similarity.
pub const COSINE_NORM_FLOOR: f64 = 1e-8;

/// Mean over the batch and unordered pairs `i < j` of the cosine similarity
/// between rows of each `[K, D]` slice of `x: [B, K, D]`.
pub fn mean_pairwise_cosine<T: Scalar>(x: &Tensor<T>) -> Result<T> {
    let (b, k, d) = bkd(x)?;
    let xd = x.data();
    let mut total = T::zero();
    for bi in 0..b {
        let slab = &xd[bi * k * d..(bi + 1) * k * d];
        let norms: Vec<T> = (0..k)
            .map(|i| dot(&slab[i * d..(i + 1) * d], &slab[i * d..(i + 1) * d]).sqrt())
            .collect();
        for i in 0..k {
            for j in i + 1..k {
                if norms[i].to_f64() < COSINE_NORM_FLOOR || norms[j].to_f64() < COSINE_NORM_FLOOR {
                    continue;
                }
                total += dot(&slab[i * d..(i + 1) * d], &slab[j * d..(j + 1) * d]) / (norms[i] * norms[j]);
            }
        }
    }
    let pairs = (b * k * (k - 1) / 2) as f64;
    Ok(total / T::from_f64(pairs))
}

pub(crate) fn bkd<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, k, d] if k >= 2 => Ok((b, k, d)),
        _ => Err(NumError::Invalid(format!(
            "pairwise cosine expects [B, K>=2, D], got {:?}",
            x.shape()
        ))),
    }
}

pub(crate) fn pairwise_cosine_backward<T: Scalar>(x: &Tensor<T>, upstream: T) -> Tensor<T> {
    let (b, k, d) = bkd(x).expect("validated in forward");
    let xd = x.data();
    let pairs = T::from_f64((b * k * (k - 1) / 2) as f64);
    let scale = upstream / pairs;
    let mut g = vec![T::zero(); x.len()];
    for bi in 0..b {
        let off = bi * k * d;
        let slab = &xd[off..off + k * d];
        let norms: Vec<T> = (0..k)
            .map(|i| dot(&slab[i * d..(i + 1) * d], &slab[i * d..(i + 1) * d]).sqrt())
            .collect();
        for i in 0..k {
            for j in i + 1..k {
                if norms[i].to_f64() < COSINE_NORM_FLOOR || norms[j].to_f64() < COSINE_NORM_FLOOR {
                    continue;
                }
                let (u, v) = (&slab[i * d..(i + 1) * d], &slab[j * d..(j + 1) * d]);
                let nn = norms[i] * norms[j];
                let cos = dot(u, v) / nn;
                let nu2 = norms[i] * norms[i];
                let nv2 = norms[j] * norms[j];
                for t in 0..d {
                    g[off + i * d + t] += scale * (v[t] / nn - cos * u[t] / nu2);
                    g[off + j * d + t] += scale * (u[t] / nn - cos * v[t] / nv2);
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), g).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_contraction() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let col = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(matmul(&eye, &col).unwrap().data(), &[3.0, 4.0]);
        let row = t(&[1, 2], &[1.0, 2.0]);
        let c = matmul(&row, &col).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(matmul(&a, &b), Err(NumError::Shape { .. })));
    }

    #[test]
    fn matmul_broadcasts_batch() {
        // [2,2] constant against [3,2,1] batch
        let a = t(&[2, 2], &[1.0, 1.0, 0.0, 2.0]);
        let b = t(&[3, 2, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[3, 2, 1]);
        assert_eq!(c.data(), &[3.0, 4.0, 7.0, 8.0, 11.0, 12.0]);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&t(&[4], &[0.0; 4]), 0).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let s = softmax(&t(&[2], &[1000.0, 0.0]), 0).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1].abs() < 1e-12);
        let s = softmax(&t(&[3], &[1.0, 2.0, 3.0]), 0).unwrap();
        for (got, want) in s.data().iter().zip([0.0900, 0.2447, 0.6652]) {
            assert!((got - want).abs() < 1e-4);
        }
        assert!(softmax(&t(&[2], &[f64::NAN, 0.0]), 0).is_err());
    }

    #[test]
    fn softmax_inner_axis() {
        let x = t(&[2, 3], &[1.0, 5.0, -2.0, 0.5, 0.5, 9.0]);
        let s = softmax(&x, 0).unwrap();
        for c in 0..3 {
            assert!((s.data()[c] + s.data()[3 + c] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::<f64>::ones(&[3]);
        let zero = Tensor::<f64>::zeros(&[3]);
        let y = layer_norm(&t(&[1, 3], &[5.0, 5.0, 5.0]), &one, &zero, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let y = layer_norm(&t(&[1, 3], &[2.0, 4.0, 6.0]), &one, &zero, 0.0).unwrap();
        for (got, want) in y.data().iter().zip([-1.2247, 0.0, 1.2247]) {
            assert!((got - want).abs() < 1e-4);
        }
        let bias = t(&[3], &[0.5, -1.0, 2.0]);
        let y = layer_norm(&t(&[1, 3], &[2.0, 4.0, 7.0]), &zero, &bias, 1e-5).unwrap();
        assert_eq!(y.data(), bias.data());
    }

    #[test]
    fn unfold_counts_patches() {
        let x = Tensor::<f64>::zeros(&[2, 96]);
        assert_eq!(unfold(&x, 16, 8).unwrap().shape(), &[2, 11, 16]);
        assert_eq!(unfold(&x, 96, 96).unwrap().shape(), &[2, 1, 96]);
        assert!(unfold(&x, 16, 7).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn pairwise_cosine_examples() {
        let same = t(&[1, 3, 2], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!((mean_pairwise_cosine(&same).unwrap() - 1.0).abs() < 1e-12);
        let ortho = t(&[1, 2, 2], &[1.0, 0.0, 0.0, 3.0]);
        assert!(mean_pairwise_cosine(&ortho).unwrap().abs() < 1e-12);
        let h = 0.5f64.sqrt();
        let x = t(&[1, 2, 2], &[1.0, 0.0, h, h]);
        assert!((mean_pairwise_cosine(&x).unwrap() - 0.7071).abs() < 1e-4);
        let zero_row = t(&[1, 2, 2], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(mean_pairwise_cosine(&zero_row).unwrap(), 0.0);
    }
}
