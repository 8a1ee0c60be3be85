//! Dense complex tensors.
//!
//! Data is stored row-major: the last index runs fastest. Every vectorization
//! convention downstream (superoperator matrices, Choi matrices, purified
//! states) is built on top of this ordering, so it is never configurable.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![ZERO; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(mismatch(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` on every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: C64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    /// Identity matrix as a rank-2 tensor.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { ONE } else { ZERO })
    }

    /// Independent standard complex Gaussian entries (real and imaginary parts
    /// each N(0, 1/2)).
    pub fn random_gaussian<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let data = (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(s * re, s * im)
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (k, &i) in index.iter().enumerate() {
            off = off * self.shape[k] + i;
        }
        self.data[off]
    }

    /// Changes shape metadata only; the linearized data is untouched.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(mismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Output axis `k` is input axis `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if order.len() != r {
            return Err(Error::InvalidPermutation(order.to_vec()));
        }
        for &o in order {
            if o >= r || seen[o] {
                return Err(Error::InvalidPermutation(order.to_vec()));
            }
            seen[o] = true;
        }
        if order.iter().enumerate().all(|(k, &o)| k == o) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = order.iter().map(|&o| self.shape[o]).collect();
        let old_strides = strides(&self.shape);
        let src_strides: Vec<usize> = order.iter().map(|&o| old_strides[o]).collect();
        let n = self.data.len();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; r];
        let mut off = 0usize;
        for _ in 0..n {
            data.push(self.data[off]);
            for k in (0..r).rev() {
                idx[k] += 1;
                off += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                off -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    /// Sums over the paired axes. The result carries the unpaired axes of
    /// `self` followed by the unpaired axes of `other`, each in original order.
    pub fn contract(&self, other: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
        let (ra, rb) = (self.rank(), other.rank());
        let mut used_a = vec![false; ra];
        let mut used_b = vec![false; rb];
        for &(i, j) in pairs {
            if i >= ra {
                return Err(Error::AxisOutOfRange { axis: i, rank: ra });
            }
            if j >= rb {
                return Err(Error::AxisOutOfRange { axis: j, rank: rb });
            }
            if used_a[i] || used_b[j] {
                return Err(mismatch(format!("axis paired twice in {pairs:?}")));
            }
            if self.shape[i] != other.shape[j] {
                return Err(mismatch(format!(
                    "paired axes ({i}, {j}) have dims {} and {}",
                    self.shape[i], other.shape[j]
                )));
            }
            used_a[i] = true;
            used_b[j] = true;
        }
        let free_a: Vec<usize> = (0..ra).filter(|&k| !used_a[k]).collect();
        let free_b: Vec<usize> = (0..rb).filter(|&k| !used_b[k]).collect();

        let mut order_a = free_a.clone();
        order_a.extend(pairs.iter().map(|p| p.0));
        let mut order_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        order_b.extend(free_b.iter().copied());

        let a = self.permute(&order_a)?;
        let b = other.permute(&order_b)?;
        let m: usize = free_a.iter().map(|&k| self.shape[k]).product();
        let kdim: usize = pairs.iter().map(|p| self.shape[p.0]).product();
        let n: usize = free_b.iter().map(|&k| other.shape[k]).product();

        let mut out_shape: Vec<usize> = free_a.iter().map(|&k| self.shape[k]).collect();
        out_shape.extend(free_b.iter().map(|&k| other.shape[k]));
        let data = matmul_rm(&a.data, &b.data, m, kdim, n);
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }

    /// Applies `op` with shape `(outs..., ins...)` to the axes `axes` of `self`;
    /// the output axes take the place of the first targeted axis, in order.
    pub fn apply_on_axes(&self, op: &Tensor, axes: &[usize]) -> Result<Tensor> {
        let n_in = axes.len();
        if op.rank() < n_in {
            return Err(mismatch("operator has fewer axes than targets"));
        }
        let n_out = op.rank() - n_in;
        let pairs: Vec<(usize, usize)> = (0..n_in).map(|k| (n_out + k, axes[k])).collect();
        let t = op.contract(self, &pairs)?;
        // t axes: op outs, then self's untouched axes in order.
        let rest: Vec<usize> = (0..self.rank()).filter(|k| !axes.contains(k)).collect();
        let insert_at = rest.iter().filter(|&&k| k < axes[0]).count();
        let mut order = Vec::with_capacity(t.rank());
        for k in 0..insert_at {
            order.push(n_out + k);
        }
        order.extend(0..n_out);
        for k in insert_at..rest.len() {
            order.push(n_out + k);
        }
        t.permute(&order)
    }

    pub fn conj(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(C64, C64) -> C64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(mismatch(format!(
                "shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Row-major `(m x k) * (k x n)`.
pub(crate) fn matmul_rm(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}
