//! Named row-major parameter matrices and the dense kernels the models use.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Shape of one tensor, as written in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// An ordered list of tensors. Models refer to tensors by index, and the
/// gradient of a model is a `ParamSet` of the same layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

/// How a new tensor is filled.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Uniform(f64),
    /// Uniform in `±1/sqrt(cols)`.
    FanIn,
}

impl ParamSet {
    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut ChaCha8Rng) -> usize {
        let n = rows * cols;
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
            Init::FanIn => {
                let a = 1.0 / (cols.max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            }
        };
        self.tensors.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn shapes(&self) -> Vec<TensorShape> {
        self.tensors
            .iter()
            .map(|t| TensorShape {
                name: t.name.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn fill(&mut self, v: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = v);
        }
    }

    /// `self += scale * other`, element by element in layout order.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Mutable reference to the `k`-th scalar in layout order.
    pub fn scalar_mut(&mut self, mut k: usize) -> &mut f64 {
        for t in &mut self.tensors {
            if k < t.data.len() {
                return &mut t.data[k];
            }
            k -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Replace the values with `flat`, checking layout.
    pub fn load_flat(&mut self, shapes: &[TensorShape], flat: &[f64]) -> Result<()> {
        if shapes != self.shapes().as_slice() {
            return Err(Error::Format("checkpoint tensor layout does not match the model".into()));
        }
        if flat.len() != self.num_params() {
            return Err(Error::Format("checkpoint parameter count does not match the model".into()));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// `W x` for `W` stored as `rows × cols`.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), w.cols);
    (0..w.rows)
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `out += W x`.
pub fn matvec_add(w: &Tensor, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o += w.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ y`.
pub fn matvec_t_add(w: &Tensor, y: &[f64], out: &mut [f64]) {
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(w.row(r)) {
            *o += a * yr;
        }
    }
}

/// `dW += y xᵀ`.
pub fn outer_add(dw: &mut Tensor, y: &[f64], x: &[f64]) {
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        for (d, xc) in dw.row_mut(r).iter_mut().zip(x) {
            *d += yr * xc;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log Σ exp(z)`.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Back through `p = softmax(a)`: `da = p ⊙ (dp - <p, dp>)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}
