//! Dense `f64` tensors, a gradient tape, and the primitive operations the model is built from.
//!
//! The free functions here ([`matmul`], [`layer_norm`], [`softmax`], [`gelu`],
//! [`dropout`]) are the pure forms of the tape operations and share their
//! kernels, so values computed either way agree bitwise.

mod kernels;
pub mod rng;
mod tape;
mod tensor;

use rand::Rng as _;
use thiserror::Error;

pub use kernels::{normal_cdf, normal_pdf};
pub use rng::{Rng, Seed};
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape {0:?} has a zero dimension")]
    ZeroDimension(Vec<usize>),
    #[error("expected rank <= {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("row range {start}..{end} outside {rows} rows")]
    RowRange { start: usize, end: usize, rows: usize },
    #[error("column range {start}..{end} outside {cols} columns")]
    ColRange { start: usize, end: usize, cols: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("nothing to concatenate")]
    EmptyConcat,
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("loss must be a single value, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("parameter {0} is not on the tape")]
    UnknownParam(usize),
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if a.shape().len() != 2 || b.shape().len() != 2 || k != k2 {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    kernels::gemm(m, k, n, a.data(), false, b.data(), false, &mut out, 0.0);
    Tensor::new(vec![m, n], out)
}

/// Row-wise `(x - mean) / sqrt(var + eps) * gain + bias` with the biased variance.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor, NumericsError> {
    let (_, d) = x.dims2()?;
    if gain.len() != d || bias.len() != d {
        return Err(NumericsError::ShapeMismatch {
            op: "layer_norm",
            left: x.shape().to_vec(),
            right: gain.shape().to_vec(),
        });
    }
    let ln = kernels::layer_norm_rows(x.data(), d, gain.data(), bias.data(), eps);
    Tensor::new(x.shape().to_vec(), ln.y)
}

/// Softmax over the last axis with max subtraction.
pub fn softmax(z: &Tensor) -> Result<Tensor, NumericsError> {
    let (_, d) = z.dims2()?;
    Tensor::new(z.shape().to_vec(), kernels::softmax_rows(z.data(), d))
}

/// `log Σ exp(z)` over all elements.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    kernels::log_sum_exp(z)
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().map(|&v| kernels::gelu_scalar(v)).collect(),
    )
}

/// Inverted dropout; the identity when `training` is false or `rate` is 0.
///
/// Draws one uniform per element in row-major order, the same sequence
/// [`Tape::dropout`] uses.
pub fn dropout(x: &Tensor, rate: f64, rng: &mut Rng, training: bool) -> Result<Tensor, NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::DropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    let data = x
        .data()
        .iter()
        .map(|v| v * if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// Central finite-difference gradient of `f` at `point`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], h: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + h;
            let plus = f(&x);
            x[i] = point[i] - h;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero pairs from
/// reporting round-off as relative error.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests;
