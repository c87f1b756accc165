//! LSTM recurrence with gates ordered input, forget, candidate, output.

use crate::ops::OpCounter;
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Borrowed LSTM weights: `w` is `[4h, in]`, `u` is `[4h, h]`, `b` is `[4h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w: &'a Tensor,
    pub u: &'a Tensor,
    pub b: &'a Tensor,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }
}

/// Per-step values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    xs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    gates: Vec<[Vec<f64>; 4]>,
}

impl LstmCache {
    /// Hidden states `h_1..h_T`.
    pub fn hidden_states(&self) -> &[Vec<f64>] {
        &self.hs[1..]
    }
}

/// Runs the cell over `xs` from zero state.
pub fn lstm_forward(p: LstmWeights<'_>, xs: &[Vec<f64>], ops: &mut OpCounter) -> LstmCache {
    let h = p.hidden();
    let n_in = p.input();
    let (w, u, b) = (p.w.data(), p.u.data(), p.b.data());
    let mut cache = LstmCache {
        xs: xs.to_vec(),
        hs: vec![vec![0.0; h]],
        cs: vec![vec![0.0; h]],
        gates: Vec::with_capacity(xs.len()),
    };
    for x in xs {
        let h_prev = cache.hs.last().unwrap().clone();
        let c_prev = cache.cs.last().unwrap().clone();
        let mut z = b.to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let wr = &w[r * n_in..(r + 1) * n_in];
            let ur = &u[r * h..(r + 1) * h];
            *zr += wr.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                + ur.iter().zip(&h_prev).map(|(a, v)| a * v).sum::<f64>();
        }
        let i: Vec<f64> = z[..h].iter().map(|v| sigmoid(*v)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|v| sigmoid(*v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|v| sigmoid(*v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let hn: Vec<f64> = (0..h).map(|k| o[k] * c[k].tanh()).collect();
        ops.add(4 * h * (n_in + h) + 3 * h, 4 * h);
        cache.hs.push(hn);
        cache.cs.push(c);
        cache.gates.push([i, f, g, o]);
    }
    cache
}

/// Gradient buffers matching [`LstmWeights`].
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// Back-propagation through time. `dhs[t]` is the loss gradient arriving at
/// `h_{t+1}` from outside the recurrence; returns input gradients and
/// accumulates into `grads`.
pub fn lstm_backward(p: LstmWeights<'_>, cache: &LstmCache, dhs: &[Vec<f64>], grads: &mut LstmGrads) -> Vec<Vec<f64>> {
    let h = p.hidden();
    let n_in = p.input();
    let (w, u) = (p.w.data(), p.u.data());
    let steps = cache.xs.len();
    let mut dxs = vec![vec![0.0; n_in]; steps];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for t in (0..steps).rev() {
        let [i, f, g, o] = &cache.gates[t];
        let c = &cache.cs[t + 1];
        let c_prev = &cache.cs[t];
        let h_prev = &cache.hs[t];
        let x = &cache.xs[t];
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let dh = dhs[t][k] + dh_next[k];
            let tc = c[k].tanh();
            let dc = dc_next[k] + dh * o[k] * (1.0 - tc * tc);
            dz[k] = dc * g[k] * i[k] * (1.0 - i[k]);
            dz[h + k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
            dz[2 * h + k] = dc * i[k] * (1.0 - g[k] * g[k]);
            dz[3 * h + k] = dh * tc * o[k] * (1.0 - o[k]);
            dc_prev[k] = dc * f[k];
        }
        let mut dh_prev = vec![0.0; h];
        for (r, dzr) in dz.iter().enumerate() {
            grads.b[r] += dzr;
            let wr = &w[r * n_in..(r + 1) * n_in];
            for c in 0..n_in {
                grads.w[r * n_in + c] += dzr * x[c];
                dxs[t][c] += dzr * wr[c];
            }
            let ur = &u[r * h..(r + 1) * h];
            for c in 0..h {
                grads.u[r * h + c] += dzr * h_prev[c];
                dh_prev[c] += dzr * ur[c];
            }
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dxs
}

/// Output of a bidirectional layer: per step `[h_fwd_t, h_bwd_t]`, where the
/// backward direction reads the sequence reversed and is re-aligned.
pub fn bilstm_outputs(fwd: &LstmCache, bwd: &LstmCache) -> Vec<Vec<f64>> {
    let hf = fwd.hidden_states();
    let hb = bwd.hidden_states();
    let n = hf.len();
    (0..n)
        .map(|t| hf[t].iter().chain(&hb[n - 1 - t]).copied().collect())
        .collect()
}
