//! Real-input discrete Fourier transforms.
//!
//! Sizes here are small (tens to a few hundred points), so the transforms
//! are dense DFT matrices. The same matrices drive the differentiable
//! versions on the tape, where the adjoint is simply the transpose.

use std::f64::consts::PI;

use super::{NumError, Result, Scalar, Tensor};

/// Complex array stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T> {
    shape: Vec<usize>,
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn new(shape: Vec<usize>, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(NumError::Shape {
                op: "complex",
                lhs: shape,
                rhs: vec![re.len(), im.len()],
            });
        }
        Ok(Self { shape, re, im })
    }

    pub fn from_parts(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(NumError::Shape {
                op: "complex",
                lhs: re.shape().to_vec(),
                rhs: im.shape().to_vec(),
            });
        }
        let shape = re.shape().to_vec();
        Ok(Self {
            shape,
            re: re.into_data(),
            im: im.into_data(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn re(&self) -> &[T] {
        &self.re
    }

    pub fn im(&self) -> &[T] {
        &self.im
    }

    pub fn re_tensor(&self) -> Tensor<T> {
        Tensor::new(self.shape.clone(), self.re.clone()).expect("consistent")
    }

    pub fn im_tensor(&self) -> Tensor<T> {
        Tensor::new(self.shape.clone(), self.im.clone()).expect("consistent")
    }

    /// Squared magnitude per element.
    pub fn power(&self) -> Vec<T> {
        self.re.iter().zip(&self.im).map(|(&a, &b)| a * a + b * b).collect()
    }
}

/// Number of one-sided bins for a length-`t` real signal.
pub fn rfft_bins(t: usize) -> usize {
    t / 2 + 1
}

fn angle(f: usize, t: usize, n: usize) -> f64 {
    // reduce before scaling to keep the argument small
    2.0 * PI * ((f * t) % n) as f64 / n as f64
}

/// Forward DFT matrices `[F, T]`: real part `cos`, imaginary part `-sin`.
pub fn forward_matrices<T: Scalar>(n: usize) -> (Tensor<T>, Tensor<T>) {
    let f = rfft_bins(n);
    let mut c = Vec::with_capacity(f * n);
    let mut s = Vec::with_capacity(f * n);
    for k in 0..f {
        for t in 0..n {
            let a = angle(k, t, n);
            c.push(T::from_f64(a.cos()));
            s.push(T::from_f64(-a.sin()));
        }
    }
    (
        Tensor::new(vec![f, n], c).expect("sized"),
        Tensor::new(vec![f, n], s).expect("sized"),
    )
}

/// Inverse DFT matrices `[T, F]` mapping one-sided spectra back to real
/// signals. Imaginary parts of the DC and (even-length) Nyquist bins are
/// ignored, as in any real inverse transform.
pub fn inverse_matrices<T: Scalar>(n: usize) -> (Tensor<T>, Tensor<T>) {
    let f = rfft_bins(n);
    let mut r = Vec::with_capacity(f * n);
    let mut i = Vec::with_capacity(f * n);
    for t in 0..n {
        for k in 0..f {
            let w = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            let a = angle(k, t, n);
            r.push(T::from_f64(w * a.cos() / n as f64));
            i.push(T::from_f64(-w * a.sin() / n as f64));
        }
    }
    (
        Tensor::new(vec![n, f], r).expect("sized"),
        Tensor::new(vec![n, f], i).expect("sized"),
    )
}

/// One-sided DFT along the last axis.
pub fn rfft<T: Scalar>(x: &Tensor<T>) -> Result<ComplexTensor<T>> {
    let n = *x.shape().last().unwrap_or(&0);
    if n < 2 {
        return Err(NumError::Invalid(format!("rfft needs at least 2 points, got {n}")));
    }
    let f = rfft_bins(n);
    let (c, s) = forward_matrices::<T>(n);
    let rows = x.len() / n;
    let mut re = vec![T::zero(); rows * f];
    let mut im = vec![T::zero(); rows * f];
    for r in 0..rows {
        let row = &x.data()[r * n..(r + 1) * n];
        for k in 0..f {
            let cr = &c.data()[k * n..(k + 1) * n];
            let sr = &s.data()[k * n..(k + 1) * n];
            re[r * f + k] = row.iter().zip(cr).map(|(&a, &b)| a * b).sum();
            im[r * f + k] = row.iter().zip(sr).map(|(&a, &b)| a * b).sum();
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = f;
    ComplexTensor::new(shape, re, im)
}

/// Inverse of [`rfft`] along the last axis; `n` resolves the parity of the
/// original length.
pub fn irfft<T: Scalar>(x: &ComplexTensor<T>, n: usize) -> Result<Tensor<T>> {
    let f = *x.shape().last().unwrap_or(&0);
    if n < 2 || rfft_bins(n) != f {
        return Err(NumError::Shape {
            op: "irfft",
            lhs: x.shape().to_vec(),
            rhs: vec![n],
        });
    }
    let (r, i) = inverse_matrices::<T>(n);
    let rows = x.re().len() / f;
    let mut out = vec![T::zero(); rows * n];
    for row in 0..rows {
        let re = &x.re()[row * f..(row + 1) * f];
        let im = &x.im()[row * f..(row + 1) * f];
        for t in 0..n {
            let rr = &r.data()[t * f..(t + 1) * f];
            let ri = &i.data()[t * f..(t + 1) * f];
            let mut acc = T::zero();
            for k in 0..f {
                acc += re[k] * rr[k] + im[k] * ri[k];
            }
            out[row * n + t] = acc;
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}
