//! Minimal neural-network substrate: dense arrays, LSTM layers, dropout,
//! linear projection, Adam, and finite-difference gradient checking.
//!
//! Everything is double precision and deterministic given a seed. Backward
//! passes are hand-derived per layer and validated against central finite
//! differences.

pub mod adam;
pub mod array;
pub mod lstm;

pub use adam::{Adam, AdamConfig};
pub use array::{add_outer, axpy, dot, matmul_nn, matmul_nt, matvec, matvec_t, Array2};
pub use lstm::{bilstm, bilstm_backward, lstm_cell, lstm_forward, BilstmCache, LstmParams};

use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2,
    pub grad: Array2,
}

impl Param {
    pub fn new(value: Array2) -> Param {
        let grad = Array2::zeros(value.rows(), value.cols());
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Param {
        Param::new(Array2::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform init in `[-bound, bound]`.
pub fn uniform_init(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2 {
    Array2::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Glorot-style uniform init with `fan_in = cols`, `fan_out = rows`.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2 {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform_init(rows, cols, bound, rng)
}

/// Fully connected layer `y = x·Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    /// (output × input)
    pub w: Param,
    /// (1 × output)
    pub b: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Linear {
        Linear {
            w: Param::new(xavier_uniform(output, input, rng)),
            b: Param::zeros(1, output),
        }
    }

    /// `x` is (n × input); returns (n × output).
    pub fn forward(&self, x: &Array2) -> Array2 {
        let mut out = matmul_nt(x, &self.w.value);
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for (v, b) in row.iter_mut().zip(self.b.value.row(0)) {
                *v += b;
            }
        }
        out
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2, d_out: &Array2) -> Array2 {
        for t in 0..x.rows() {
            add_outer(&mut self.w.grad, d_out.row(t), x.row(t));
            for (g, d) in self.b.grad.row_mut(0).iter_mut().zip(d_out.row(t)) {
                *g += d;
            }
        }
        matmul_nn(d_out, &self.w.value)
    }
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1-p)`; the returned mask
/// (scale factors) is needed for the backward pass. Outside training, or at
/// `p = 0`, this is the identity and no mask is returned.
pub fn dropout(
    x: &Array2,
    p: f64,
    training: bool,
    rng: &mut impl Rng,
) -> (Array2, Option<Array2>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
    if !training || p == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    let mask = Array2::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.random_range(0.0..1.0) < p {
            0.0
        } else {
            scale
        }
    });
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
    (out, Some(mask))
}

/// Gradient of dropout: elementwise product with the saved mask.
pub fn dropout_backward(d_out: &Array2, mask: Option<&Array2>) -> Array2 {
    match mask {
        None => d_out.clone(),
        Some(m) => {
            let mut d = d_out.clone();
            for (v, s) in d.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *v *= s;
            }
            d
        }
    }
}

/// Scale all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<'a>(grads: impl Iterator<Item = &'a mut Array2>, max_norm: f64) -> f64 {
    let grads: Vec<&'a mut Array2> = grads.collect();
    let norm = grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads {
            g.scale(scale);
        }
    }
    norm
}

/// Relative error used by the gradient checker:
/// `|ga - gn| / max(1e-8, |ga| + |gn|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Result of a finite-difference check over one parameter group.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckResult {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Central finite differences on up to `max_coords` coordinates of parameter
/// group `group` (all coordinates when the group is small enough). `loss`
/// must be deterministic; it is re-evaluated with single coordinates
/// perturbed by `±eps`.
pub fn grad_check(
    loss: &mut dyn FnMut(&[Array2]) -> f64,
    params: &mut [Array2],
    group: usize,
    analytic: &Array2,
    eps: f64,
    max_coords: usize,
    rng: &mut impl Rng,
) -> GradCheckResult {
    let n = params[group].len();
    assert_eq!(analytic.len(), n, "analytic gradient shape mismatch");
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        // Sample without replacement via partial Fisher-Yates.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..max_coords {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(max_coords);
        idx
    };
    let mut max_rel = 0.0f64;
    for &c in &coords {
        let orig = params[group].as_slice()[c];
        params[group].as_mut_slice()[c] = orig + eps;
        let plus = loss(params);
        params[group].as_mut_slice()[c] = orig - eps;
        let minus = loss(params);
        params[group].as_mut_slice()[c] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        max_rel = max_rel.max(relative_error(analytic.as_slice()[c], numeric));
    }
    GradCheckResult {
        max_rel_error: max_rel,
        checked: coords.len(),
    }
}
