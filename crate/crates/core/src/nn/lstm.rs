//! LSTM cell, unidirectional sequence layer with backpropagation through
//! time, and bidirectional encoding.
//!
//! Gate order in all stacked tensors is [input, forget, cell-candidate,
//! output]. The forget-gate bias is initialized to 1.

use rand::Rng;

use super::array::{add_outer, matmul_nn, matmul_nt, matvec_into, matvec_t, Array2};
use super::{sigmoid, xavier_uniform, NnError, Param};

/// Parameters of one LSTM direction.
#[derive(Debug, Clone)]
pub struct LstmParams {
    /// Input-to-gate weights (4h × d).
    pub w: Param,
    /// Hidden-to-gate weights (4h × h).
    pub u: Param,
    /// Gate bias (1 × 4h).
    pub b: Param,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> LstmParams {
        let mut b = Array2::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            b.set(0, j, 1.0);
        }
        LstmParams {
            w: Param::new(xavier_uniform(4 * hidden, input, rng)),
            u: Param::new(xavier_uniform(4 * hidden, hidden, rng)),
            b: Param::new(b),
            input,
            hidden,
        }
    }
}

/// One step given the pre-activation `pre = W·x + U·h_prev + b` (length 4h).
/// Returns (i, f, g, o, c, tanh_c, h).
#[allow(clippy::type_complexity)]
fn step_from_preact(
    pre: &[f64],
    c_prev: &[f64],
    hidden: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut i = vec![0.0; hidden];
    let mut f = vec![0.0; hidden];
    let mut g = vec![0.0; hidden];
    let mut o = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut tc = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for k in 0..hidden {
        i[k] = sigmoid(pre[k]);
        f[k] = sigmoid(pre[hidden + k]);
        g[k] = pre[2 * hidden + k].tanh();
        o[k] = sigmoid(pre[3 * hidden + k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = c[k].tanh();
        h[k] = o[k] * tc[k];
    }
    (i, f, g, o, c, tc, h)
}

/// Single LSTM step: `(h, c) = cell(x, h_prev, c_prev)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    if x.len() != params.input || h_prev.len() != params.hidden || c_prev.len() != params.hidden {
        return Err(NnError::ShapeMismatch {
            context: format!(
                "lstm_cell: x={}, h={}, c={} for input={}, hidden={}",
                x.len(),
                h_prev.len(),
                c_prev.len(),
                params.input,
                params.hidden
            ),
        });
    }
    let mut pre = params.b.value.row(0).to_vec();
    matvec_into(&params.w.value, x, &mut pre);
    matvec_into(&params.u.value, h_prev, &mut pre);
    let (_, _, _, _, c, _, h) = step_from_preact(&pre, c_prev, params.hidden);
    Ok((h, c))
}

/// Activations cached by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub inputs: Array2,
    i: Array2,
    f: Array2,
    g: Array2,
    o: Array2,
    c: Array2,
    tanh_c: Array2,
}

/// Run the LSTM over the whole sequence (`xs` is n×d, one row per step,
/// initial states zero). Returns the hidden states (n×h) and the cache.
pub fn lstm_forward(params: &LstmParams, xs: &Array2) -> (Array2, LstmCache) {
    assert_eq!(xs.cols(), params.input, "lstm input width mismatch");
    let n = xs.rows();
    let h = params.hidden;
    // Input contributions for every step in one pass.
    let wx = matmul_nt(xs, &params.w.value); // n × 4h
    let mut cache = LstmCache {
        inputs: xs.clone(),
        i: Array2::zeros(n, h),
        f: Array2::zeros(n, h),
        g: Array2::zeros(n, h),
        o: Array2::zeros(n, h),
        c: Array2::zeros(n, h),
        tanh_c: Array2::zeros(n, h),
    };
    let mut out = Array2::zeros(n, h);
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in 0..n {
        let mut pre = params.b.value.row(0).to_vec();
        for (p, w) in pre.iter_mut().zip(wx.row(t)) {
            *p += w;
        }
        matvec_into(&params.u.value, &h_prev, &mut pre);
        let (i, f, g, o, c, tc, ht) = step_from_preact(&pre, &c_prev, h);
        cache.i.row_mut(t).copy_from_slice(&i);
        cache.f.row_mut(t).copy_from_slice(&f);
        cache.g.row_mut(t).copy_from_slice(&g);
        cache.o.row_mut(t).copy_from_slice(&o);
        cache.c.row_mut(t).copy_from_slice(&c);
        cache.tanh_c.row_mut(t).copy_from_slice(&tc);
        out.row_mut(t).copy_from_slice(&ht);
        h_prev = ht;
        c_prev = c;
    }
    (out, cache)
}

/// Backpropagation through time. `d_h_out` is the gradient w.r.t. every
/// hidden state (n×h). Accumulates parameter gradients and returns the
/// gradient w.r.t. the inputs (n×d).
pub fn lstm_backward(params: &mut LstmParams, cache: &LstmCache, d_h_out: &Array2) -> Array2 {
    let n = cache.inputs.rows();
    let h = params.hidden;
    assert_eq!(d_h_out.rows(), n);
    assert_eq!(d_h_out.cols(), h);
    let mut d_pre = Array2::zeros(n, 4 * h);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zeros = vec![0.0; h];
    for t in (0..n).rev() {
        let i = cache.i.row(t);
        let f = cache.f.row(t);
        let g = cache.g.row(t);
        let o = cache.o.row(t);
        let tc = cache.tanh_c.row(t);
        let c_prev = if t > 0 { cache.c.row(t - 1) } else { &zeros[..] };
        let d_pre_t = d_pre.row_mut(t);
        for k in 0..h {
            let dh = d_h_out.get(t, k) + dh_next[k];
            let dc = dc_next[k] + dh * o[k] * (1.0 - tc[k] * tc[k]);
            let d_o = dh * tc[k];
            let d_i = dc * g[k];
            let d_g = dc * i[k];
            let d_f = dc * c_prev[k];
            d_pre_t[k] = d_i * i[k] * (1.0 - i[k]);
            d_pre_t[h + k] = d_f * f[k] * (1.0 - f[k]);
            d_pre_t[2 * h + k] = d_g * (1.0 - g[k] * g[k]);
            d_pre_t[3 * h + k] = d_o * o[k] * (1.0 - o[k]);
            dc_next[k] = dc * f[k];
        }
        dh_next = matvec_t(&params.u.value, d_pre.row(t));
        // Parameter gradients for this step.
        let h_prev_owned;
        let h_prev: &[f64] = if t > 0 {
            // h_{t-1} = o_{t-1} ⊙ tanh(c_{t-1})
            h_prev_owned = cache
                .o
                .row(t - 1)
                .iter()
                .zip(cache.tanh_c.row(t - 1))
                .map(|(a, b)| a * b)
                .collect::<Vec<f64>>();
            &h_prev_owned
        } else {
            &zeros
        };
        add_outer(&mut params.u.grad, d_pre.row(t), h_prev);
        for (bg, dp) in params.b.grad.row_mut(0).iter_mut().zip(d_pre.row(t)) {
            *bg += dp;
        }
    }
    for t in 0..n {
        add_outer(&mut params.w.grad, d_pre.row(t), cache.inputs.row(t));
    }
    matmul_nn(&d_pre, &params.w.value)
}

fn reverse_rows(x: &Array2) -> Array2 {
    let mut out = Array2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(x.row(x.rows() - 1 - r));
    }
    out
}

/// Caches from both directions; the backward cache is over reversed inputs.
#[derive(Debug, Clone)]
pub struct BilstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
}

/// Bidirectional encoding: position `t` of the output is
/// `[forward h_t ; backward h_t]` (n × 2h). Initial states are zero.
pub fn bilstm(
    fwd: &LstmParams,
    bwd: &LstmParams,
    xs: &Array2,
) -> Result<(Array2, BilstmCache), NnError> {
    if xs.rows() == 0 {
        return Err(NnError::EmptySequence);
    }
    assert_eq!(fwd.hidden, bwd.hidden, "directions must share hidden size");
    let n = xs.rows();
    let h = fwd.hidden;
    let (out_f, cache_f) = lstm_forward(fwd, xs);
    let reversed = reverse_rows(xs);
    let (out_b_rev, cache_b) = lstm_forward(bwd, &reversed);
    let mut out = Array2::zeros(n, 2 * h);
    for t in 0..n {
        out.row_mut(t)[..h].copy_from_slice(out_f.row(t));
        out.row_mut(t)[h..].copy_from_slice(out_b_rev.row(n - 1 - t));
    }
    Ok((out, BilstmCache { fwd: cache_f, bwd: cache_b }))
}

/// Backward pass for [`bilstm`]; returns the input gradient (n × d).
pub fn bilstm_backward(
    fwd: &mut LstmParams,
    bwd: &mut LstmParams,
    cache: &BilstmCache,
    d_out: &Array2,
) -> Array2 {
    let n = d_out.rows();
    let h = fwd.hidden;
    assert_eq!(d_out.cols(), 2 * h);
    let mut d_f = Array2::zeros(n, h);
    let mut d_b_rev = Array2::zeros(n, h);
    for t in 0..n {
        d_f.row_mut(t).copy_from_slice(&d_out.row(t)[..h]);
        d_b_rev
            .row_mut(n - 1 - t)
            .copy_from_slice(&d_out.row(t)[h..]);
    }
    let d_xs_f = lstm_backward(fwd, &cache.fwd, &d_f);
    let d_xs_b_rev = lstm_backward(bwd, &cache.bwd, &d_b_rev);
    let mut d_xs = d_xs_f;
    let d_xs_b = reverse_rows(&d_xs_b_rev);
    d_xs.add_assign(&d_xs_b);
    d_xs
}
