//! Dense row-major f64 tensors and the reverse-mode graph that operates on
//! them. Everything is 64-bit: desk-scale sizes make speed a non-issue and
//! the finite-difference checks demand the precision.

mod graph;
pub mod gradcheck;

pub use graph::{Graph, Mode, VarId};

use crate::error::TensorError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A dense tensor: a shape of positive dimensions plus row-major f64 data.
///
/// Values are immutable by convention once handed to a [`Graph`]; gradients
/// live in the graph's nodes, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating that the shape is non-degenerate and the
    /// data length matches.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroDim { op: "tensor", shape });
        }
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::DataLength {
                op: "tensor",
                len: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![1.0; numel],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    /// Uniform values in `(-limit, limit)`.
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Xavier/Glorot uniform init for a `[fan_in, fan_out]` weight matrix.
    pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(&[fan_in, fan_out], limit, rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index of a multi-dimensional index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, &c) in idx.iter().enumerate() {
            debug_assert!(c < self.shape[i]);
            flat = flat * self.shape[i] + c;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    /// Reorder entries along `axis` so that output slot `i` takes input slot
    /// `perm[i]`. Used by the permutation-equivariance tests and the dataset
    /// tooling; not a graph op.
    pub fn permute_index(&self, axis: usize, perm: &[usize]) -> Result<Self, TensorError> {
        if axis >= self.shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "permute_index",
                axis,
                rank: self.shape.len(),
            });
        }
        if perm.len() != self.shape[axis] {
            return Err(TensorError::InvalidParam {
                op: "permute_index",
                msg: format!(
                    "permutation length {} does not match axis length {}",
                    perm.len(),
                    self.shape[axis]
                ),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let axis_len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; self.data.len()];
        for o in 0..outer {
            for (dst, &src) in perm.iter().enumerate() {
                let from = (o * axis_len + src) * inner;
                let to = (o * axis_len + dst) * inner;
                out[to..to + inner].copy_from_slice(&self.data[from..from + inner]);
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-major copy of `data` (with `shape`) under an axis permutation:
/// output axis `i` is input axis `perm[i]`. Returns the permuted data and
/// the permuted shape.
pub(crate) fn permute_raw(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let rank = shape.len();
    debug_assert_eq!(perm.len(), rank);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();

    // Strides of the input, then reordered so stride_for_out_axis[i] is the
    // input stride of the axis that lands at output position i.
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();

    let numel = data.len();
    let mut out = vec![0.0; numel];
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for slot in out.iter_mut() {
        *slot = data[src];
        // Odometer increment over the output index space.
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out, out_shape)
}

/// Inverse of an axis permutation.
pub(crate) fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
