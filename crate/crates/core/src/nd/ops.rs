//! Forward kernels. Each returns what its backward rule needs (argmax
//! positions, dropout masks, probabilities) alongside the output.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Valid (unpadded) 1-D cross-correlation of an `L × D` sequence with
/// `W × D × M` filters, giving `(L − W + 1) × M`.
pub fn conv1d(
    input: ArrayView2<f64>,
    filters: ArrayView3<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let (len, d_in) = input.dim();
    let (width, f_in, maps) = filters.dim();
    if f_in != d_in || bias.len() != maps {
        return Err(Error::Shape(format!(
            "conv1d input {len}x{d_in}, filters {width}x{f_in}x{maps}, bias {}",
            bias.len()
        )));
    }
    if width == 0 || len < width {
        return Err(Error::Shape(format!(
            "conv1d sequence length {len} is shorter than filter width {width}"
        )));
    }
    let out_len = len - width + 1;
    let mut out = Array2::zeros((out_len, maps));
    for w in 0..width {
        let window = input.slice(s![w..w + out_len, ..]);
        ndarray::linalg::general_mat_mul(1.0, &window, &filters.index_axis(Axis(0), w), 1.0, &mut out);
    }
    out += &bias;
    Ok(out)
}

/// Convolution over a one-hot sequence given as symbol indices (`None`
/// is an all-zero column). Equivalent to [`conv1d`] on the one-hot matrix
/// but only gathers filter rows.
pub fn onehot_conv1d(
    indices: &[Option<u8>],
    filters: ArrayView3<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let len = indices.len();
    let (width, symbols, maps) = filters.dim();
    if bias.len() != maps {
        return Err(Error::Shape(format!("bias {} for {maps} maps", bias.len())));
    }
    if width == 0 || len < width {
        return Err(Error::Shape(format!(
            "conv1d sequence length {len} is shorter than filter width {width}"
        )));
    }
    if let Some(bad) = indices.iter().flatten().find(|&&i| i as usize >= symbols) {
        return Err(Error::Shape(format!("symbol {bad} outside {symbols} filter rows")));
    }
    let out_len = len - width + 1;
    let mut out = Array2::zeros((out_len, maps));
    for (t, mut row) in out.outer_iter_mut().enumerate() {
        row.assign(&bias);
        for w in 0..width {
            if let Some(c) = indices[t + w] {
                row += &filters.slice(s![w, c as usize, ..]);
            }
        }
    }
    Ok(out)
}

/// Max pooling along time; returns the pooled `⌊(L − width)/stride⌋ + 1 × M`
/// values and, per output cell, the source row of the maximum (first on
/// ties).
pub fn maxpool1d(
    input: ArrayView2<f64>,
    width: usize,
    stride: usize,
) -> Result<(Array2<f64>, Array2<usize>)> {
    let (len, maps) = input.dim();
    if width == 0 || stride == 0 {
        return Err(Error::Shape("pool width and stride must be positive".into()));
    }
    if len < width {
        return Err(Error::Shape(format!(
            "pool width {width} exceeds sequence length {len}"
        )));
    }
    let out_len = (len - width) / stride + 1;
    let mut out = Array2::zeros((out_len, maps));
    let mut arg = Array2::zeros((out_len, maps));
    for o in 0..out_len {
        let start = o * stride;
        for m in 0..maps {
            let mut best = start;
            for t in start + 1..start + width {
                if input[[t, m]] > input[[best, m]] {
                    best = t;
                }
            }
            out[[o, m]] = input[[best, m]];
            arg[[o, m]] = best;
        }
    }
    Ok((out, arg))
}

/// Per-channel maximum over all time steps ("1-max pooling").
pub fn global_maxpool(input: ArrayView2<f64>) -> Result<(Array1<f64>, Vec<usize>)> {
    let len = input.nrows();
    if len == 0 {
        return Err(Error::Shape("global max pool over an empty sequence".into()));
    }
    let (pooled, arg) = maxpool1d(input, len, len)?;
    Ok((pooled.row(0).to_owned(), arg.row(0).to_vec()))
}

/// `input · weight + bias` for an `N`-vector and `N × K` weight.
pub fn dense(
    input: ArrayView1<f64>,
    weight: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let (n, k) = weight.dim();
    if input.len() != n || bias.len() != k {
        return Err(Error::Shape(format!(
            "dense input {}, weight {n}x{k}, bias {}",
            input.len(),
            bias.len()
        )));
    }
    Ok(input.dot(&weight) + bias)
}

pub fn relu<D: ndarray::Dimension>(input: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    input.mapv(|v| v.max(0.0))
}

/// Inverted-dropout multipliers: each unit is zeroed with probability
/// `rate`, survivors are scaled by `1 / (1 − rate)`. In `Infer` mode (or at
/// rate 0) every multiplier is 1.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

pub fn dropout<R: Rng + ?Sized>(
    input: ArrayView1<f64>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let mask = dropout_mask(input.len(), rate, mode, rng)?;
    Ok(&input * &ArrayView1::from(&mask))
}

/// Max-shifted softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Cross-entropy of `gold` under the softmax of `logits`.
pub fn softmax_xent(logits: ArrayView1<f64>, gold: usize) -> Result<(f64, Array1<f64>)> {
    let c = logits.len();
    if c < 2 {
        return Err(Error::Shape(format!("softmax over {c} classes")));
    }
    if gold >= c {
        return Err(Error::Shape(format!("gold class {gold} with {c} logits")));
    }
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let log_sum = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[gold];
    Ok((loss, softmax(logits)))
}

/// One-vs-rest squared hinge `Σ_k max(0, 1 − y_k s_k)²` with `y_k = +1` for
/// the gold class and `−1` otherwise; returns the loss and `∂loss/∂s`.
pub fn squared_hinge(scores: ArrayView1<f64>, gold: usize) -> Result<(f64, Array1<f64>)> {
    if gold >= scores.len() {
        return Err(Error::Shape(format!(
            "gold class {gold} with {} scores",
            scores.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Array1::zeros(scores.len());
    for (k, &s) in scores.iter().enumerate() {
        let y = if k == gold { 1.0 } else { -1.0 };
        let slack = 1.0 - y * s;
        if slack > 0.0 {
            loss += slack * slack;
            grad[k] = -2.0 * y * slack;
        }
    }
    Ok((loss, grad))
}
