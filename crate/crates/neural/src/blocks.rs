//! The three PBML blocks: pose estimation from a PD power map, next-pose
//! prediction from a pose window, and lens regression from a pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lstm::{bilstm_outputs, lstm_backward, lstm_forward, LstmGrads, LstmWeights};
use crate::ops::{self, conv2d, conv2d_backward, dense, dense_backward, max_pool, max_pool_backward, OpCounter};
use crate::params::Params;
use crate::spec::{Conv2Mode, NetSpec};
use crate::tensor::Tensor;

/// Pose vectors are `(x, y, z, θ_R, φ_R)`.
pub const POSE_LEN: usize = 5;
/// Lens vectors are `(θ_L, φ_L, f)`, each mapped to `[0, 1]`.
pub const LENS_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockId {
    Estimator = 1,
    Predictor = 2,
    Regressor = 3,
}

impl BlockId {
    pub fn from_index(i: u32) -> Result<BlockId> {
        match i {
            1 => Ok(BlockId::Estimator),
            2 => Ok(BlockId::Predictor),
            3 => Ok(BlockId::Regressor),
            _ => Err(Error::Spec(format!("block must be 1, 2 or 3, got {i}"))),
        }
    }
}

/// A block bound to a spec; `side` is the PD grid side for the estimator.
#[derive(Debug, Clone)]
pub struct Net {
    pub id: BlockId,
    pub spec: NetSpec,
    pub side: usize,
}

fn shape2(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

/// Slice `k` of the leading axis, as its own tensor.
fn slab(t: &Tensor, k: usize) -> Tensor {
    let inner: Vec<usize> = t.shape()[1..].to_vec();
    let n: usize = inner.iter().product();
    Tensor::from_vec(&inner, t.data()[k * n..(k + 1) * n].to_vec()).expect("slab")
}

fn add_slab(t: &mut Tensor, k: usize, g: &Tensor) {
    let n = g.len();
    for (a, b) in t.data_mut()[k * n..(k + 1) * n].iter_mut().zip(g.data()) {
        *a += b;
    }
}

/// `pool(relu(z))`, computed as `relu(pool(z))`; the two agree because ReLU
/// is monotone, and where they pick different cells the ReLU gradient is zero.
fn relu_pool(z: &Tensor, m: usize) -> Result<(Tensor, Vec<usize>)> {
    let (mut pooled, arg) = max_pool(z, m, m)?;
    pooled.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    Ok((pooled, arg))
}

struct DenseCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Chain of dense layers taken from `p.tensors[first..]` as (w, b) pairs.
fn mlp_forward(p: &Params, first: usize, layers: usize, relu: &[bool], x: Vec<f64>, ops: &mut OpCounter) -> Result<(Vec<f64>, DenseCache)> {
    let mut cache = DenseCache {
        inputs: Vec::with_capacity(layers),
        pre: Vec::with_capacity(layers),
    };
    let mut a = x;
    for l in 0..layers {
        let z = dense(&a, &p.tensors[first + 2 * l], &p.tensors[first + 2 * l + 1], ops)?;
        cache.inputs.push(a);
        a = if relu[l] { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
        cache.pre.push(z);
    }
    Ok((a, cache))
}

fn mlp_backward(p: &Params, first: usize, relu: &[bool], cache: &DenseCache, dy: &[f64], g: &mut Params) -> Vec<f64> {
    let mut d = dy.to_vec();
    for l in (0..cache.inputs.len()).rev() {
        if relu[l] {
            ops::relu_backward(&cache.pre[l], &mut d);
        }
        let (gw, rest) = g.tensors[first + 2 * l..].split_at_mut(1);
        d = dense_backward(&cache.inputs[l], &p.tensors[first + 2 * l], &d, gw[0].data_mut(), rest[0].data_mut());
    }
    d
}

fn dense_layout(out: &mut Vec<(String, Vec<usize>)>, name: &str, n_out: usize, n_in: usize) {
    out.push((format!("{name}.w"), vec![n_out, n_in]));
    out.push((format!("{name}.b"), vec![n_out]));
}

fn lstm_layout(out: &mut Vec<(String, Vec<usize>)>, name: &str, h: usize, n_in: usize) {
    out.push((format!("{name}.w"), vec![4 * h, n_in]));
    out.push((format!("{name}.u"), vec![4 * h, h]));
    out.push((format!("{name}.b"), vec![4 * h]));
}

fn lstm_at(p: &Params, i: usize) -> LstmWeights<'_> {
    LstmWeights {
        w: &p.tensors[i],
        u: &p.tensors[i + 1],
        b: &p.tensors[i + 2],
    }
}

fn take_lstm_grads(g: &mut Params, i: usize, src: LstmGrads) {
    for (dst, s) in [(i, src.w), (i + 1, src.u), (i + 2, src.b)] {
        for (a, b) in g.tensors[dst].data_mut().iter_mut().zip(s) {
            *a += b;
        }
    }
}

const EST_RELU: [bool; 3] = [true, true, false];
const REG_RELU: [bool; 4] = [true; 4];

// Tensor positions in each layout.
const EST_K1: usize = 0;
const EST_B1: usize = 1;
const EST_K2: usize = 2;
const EST_B2: usize = 3;
const EST_FC: usize = 4;
const PRED_L1: usize = 0;
const PRED_FWD: usize = 3;
const PRED_BWD: usize = 6;
const PRED_TD: usize = 9;
const PRED_OUT: usize = 11;

struct ConvCache {
    pre1: Vec<Tensor>,
    arg1: Vec<Vec<usize>>,
    pool1: Vec<Tensor>,
    pre2: Vec<Tensor>,
    arg2: Vec<Vec<usize>>,
}

struct PredCache {
    l1: crate::lstm::LstmCache,
    rep: Vec<Vec<f64>>,
    fwd: crate::lstm::LstmCache,
    bwd: crate::lstm::LstmCache,
    last: Vec<f64>,
    td_in: Vec<f64>,
}

impl Net {
    pub fn new(id: BlockId, spec: &NetSpec, side: usize) -> Result<Net> {
        spec.validate(side.max(1))
            .or_else(|e| if id == BlockId::Estimator { Err(e) } else { Ok(()) })?;
        Ok(Net {
            id,
            spec: spec.clone(),
            side,
        })
    }

    pub fn input_len(&self) -> usize {
        match self.id {
            BlockId::Estimator => self.side * self.side,
            BlockId::Predictor => self.spec.recurrent.n_i * POSE_LEN,
            BlockId::Regressor => POSE_LEN,
        }
    }

    pub fn output_len(&self) -> usize {
        match self.id {
            BlockId::Regressor => LENS_LEN,
            _ => POSE_LEN,
        }
    }

    pub fn layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut l = Vec::new();
        match self.id {
            BlockId::Estimator => {
                let c = &self.spec.conv;
                let d = self.spec.conv_dims(self.side)?;
                l.push(("conv1.k".into(), vec![c.n1, c.k1, c.k1]));
                l.push(("conv1.b".into(), vec![c.n1]));
                match c.mode {
                    Conv2Mode::FanOut => {
                        l.push(("conv2.k".into(), vec![c.n2, c.k2, c.k2]));
                        l.push(("conv2.b".into(), vec![c.n1 * c.n2]));
                    }
                    Conv2Mode::Sum => {
                        l.push(("conv2.k".into(), vec![c.n2, c.n1, c.k2, c.k2]));
                        l.push(("conv2.b".into(), vec![c.n2]));
                    }
                }
                dense_layout(&mut l, "fc1", c.nf1, d.flat);
                dense_layout(&mut l, "fc2", c.nf2, c.nf1);
                dense_layout(&mut l, "out", POSE_LEN, c.nf2);
            }
            BlockId::Predictor => {
                let r = &self.spec.recurrent;
                lstm_layout(&mut l, "lstm1", r.nl1, POSE_LEN);
                lstm_layout(&mut l, "bilstm.fwd", r.nl2, r.nl1);
                lstm_layout(&mut l, "bilstm.bwd", r.nl2, r.nl1);
                dense_layout(&mut l, "td", r.nd1, 2 * r.nl2);
                dense_layout(&mut l, "out", POSE_LEN, r.nd1);
            }
            BlockId::Regressor => {
                let d = &self.spec.dense;
                dense_layout(&mut l, "d1", d.d1, POSE_LEN);
                dense_layout(&mut l, "d2", d.d2, d.d1);
                dense_layout(&mut l, "d3", d.d3, d.d2);
                dense_layout(&mut l, "out", LENS_LEN, d.d3);
            }
        }
        Ok(l)
    }

    pub fn zero_params(&self) -> Result<Params> {
        Ok(Params::new(&self.layout()?))
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))`, biases zero except the
    /// regressor's output bias, which starts at the middle of the label range
    /// so the output ReLU is live.
    pub fn init_params(&self, seed: u64) -> Result<Params> {
        let mut p = self.zero_params()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
            if name.ends_with(".b") {
                continue;
            }
            let s = t.shape().to_vec();
            let (fan_in, fan_out) = match s.len() {
                2 => (s[1], s[0]),
                3 => (s[1] * s[2], s[0] * s[1] * s[2]),
                _ => (s[1] * s[2] * s[3], s[0] * s[2] * s[3]),
            };
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        }
        if self.id == BlockId::Regressor {
            let last = p.tensors.len() - 1;
            p.tensors[last].data_mut().iter_mut().for_each(|v| *v = 0.5);
        }
        Ok(p)
    }

    fn check(&self, p: &Params, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape {
                what: "block input",
                expected: vec![self.input_len()],
                got: vec![x.len()],
            });
        }
        let want = self.layout()?;
        let same = want.len() == p.tensors.len() && want.iter().zip(&p.tensors).all(|((_, s), t)| s.as_slice() == t.shape());
        if !same {
            return Err(Error::Shape {
                what: "parameter layout",
                expected: vec![want.iter().map(|(_, s)| s.iter().product::<usize>()).sum()],
                got: vec![p.count()],
            });
        }
        Ok(())
    }

    pub fn forward(&self, p: &Params, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_counted(p, x, &mut OpCounter::default())
    }

    pub fn forward_counted(&self, p: &Params, x: &[f64], ops: &mut OpCounter) -> Result<Vec<f64>> {
        self.check(p, x)?;
        Ok(match self.id {
            BlockId::Estimator => self.est_forward(p, x, ops)?.0,
            BlockId::Predictor => self.pred_forward(p, x, ops)?.0,
            BlockId::Regressor => mlp_forward(p, 0, 4, &REG_RELU, x.to_vec(), ops)?.0,
        })
    }

    /// Output and the gradient of `dy · output` with respect to every
    /// parameter, accumulated into `g`.
    pub fn backward(&self, p: &Params, x: &[f64], dy_of: impl FnOnce(&[f64]) -> Vec<f64>, g: &mut Params) -> Result<Vec<f64>> {
        self.check(p, x)?;
        let mut ops = OpCounter::default();
        match self.id {
            BlockId::Estimator => {
                let (y, conv, fc) = self.est_forward(p, x, &mut ops)?;
                let dy = dy_of(&y);
                self.est_backward(p, x, &conv, &fc, &dy, g);
                Ok(y)
            }
            BlockId::Predictor => {
                let (y, cache) = self.pred_forward(p, x, &mut ops)?;
                let dy = dy_of(&y);
                self.pred_backward(p, &cache, &dy, g);
                Ok(y)
            }
            BlockId::Regressor => {
                let (y, cache) = mlp_forward(p, 0, 4, &REG_RELU, x.to_vec(), &mut ops)?;
                let dy = dy_of(&y);
                mlp_backward(p, 0, &REG_RELU, &cache, &dy, g);
                Ok(y)
            }
        }
    }

    fn est_forward(&self, p: &Params, x: &[f64], ops: &mut OpCounter) -> Result<(Vec<f64>, ConvCache, DenseCache)> {
        let c = &self.spec.conv;
        let input = Tensor::from_vec(&[self.side, self.side], x.to_vec())?;
        let mut cache = ConvCache {
            pre1: Vec::new(),
            arg1: Vec::new(),
            pool1: Vec::new(),
            pre2: Vec::new(),
            arg2: Vec::new(),
        };
        for k in 0..c.n1 {
            let z = conv2d(&input, &slab(&p.tensors[EST_K1], k), p.tensors[EST_B1].data()[k], c.kind, ops)?;
            let (pooled, arg) = relu_pool(&z, c.m1)?;
            cache.pre1.push(z);
            cache.arg1.push(arg);
            cache.pool1.push(pooled);
        }
        let b2 = p.tensors[EST_B2].data();
        let mut pooled2 = Vec::new();
        let mut push2 = |z: Tensor, cache: &mut ConvCache| -> Result<()> {
            let (pooled, arg) = relu_pool(&z, c.m2)?;
            cache.pre2.push(z);
            cache.arg2.push(arg);
            pooled2.push(pooled);
            Ok(())
        };
        match c.mode {
            Conv2Mode::FanOut => {
                let k2 = p.tensors[EST_K2].data();
                let kk = c.k2 * c.k2;
                let pool1 = std::mem::take(&mut cache.pool1);
                for (a, src) in pool1.iter().enumerate() {
                    let n = src.shape()[0];
                    if c.k2 > n {
                        return Err(Error::Shape {
                            what: "conv kernel larger than input",
                            expected: vec![n, n],
                            got: vec![c.k2, c.k2],
                        });
                    }
                    let m = n - c.k2 + 1;
                    for d in 0..c.n2 {
                        let z = ops::conv2d_slices(src.data(), n, &k2[d * kk..(d + 1) * kk], c.k2, b2[a * c.n2 + d], c.kind, ops);
                        push2(Tensor::from_vec(&[m, m], z)?, &mut cache)?;
                    }
                }
                cache.pool1 = pool1;
            }
            Conv2Mode::Sum => {
                for d in 0..c.n2 {
                    let kd = slab(&p.tensors[EST_K2], d);
                    let mut acc: Option<Tensor> = None;
                    let mut scratch = OpCounter::default();
                    for a in 0..c.n1 {
                        let z = conv2d(&cache.pool1[a], &slab(&kd, a), 0.0, c.kind, &mut scratch)?;
                        acc = Some(match acc {
                            None => z,
                            Some(mut t) => {
                                t.data_mut().iter_mut().zip(z.data()).for_each(|(u, v)| *u += v);
                                t
                            }
                        });
                    }
                    let mut z = acc.expect("n1 > 0");
                    z.data_mut().iter_mut().for_each(|v| *v += b2[d]);
                    ops.add(scratch.muls as usize, z.len());
                    push2(z, &mut cache)?;
                }
            }
        }
        let flat = ops::flatten(&pooled2).into_data();
        let (y, fc) = mlp_forward(p, EST_FC, 3, &EST_RELU, flat, ops)?;
        Ok((y, cache, fc))
    }

    fn est_backward(&self, p: &Params, x: &[f64], cache: &ConvCache, fc: &DenseCache, dy: &[f64], g: &mut Params) {
        let c = &self.spec.conv;
        let input = Tensor::from_vec(&[self.side, self.side], x.to_vec()).expect("checked");
        let dflat = mlp_backward(p, EST_FC, &EST_RELU, fc, dy, g);
        let per = dflat.len() / cache.pre2.len();
        let mut dpool1: Vec<Tensor> = cache.pool1.iter().map(|t| Tensor::zeros(t.shape())).collect();
        for (m, pre) in cache.pre2.iter().enumerate() {
            let mut dz = max_pool_backward(pre.len(), &cache.arg2[m], &dflat[m * per..(m + 1) * per]);
            ops::relu_backward(pre.data(), &mut dz);
            let dz = Tensor::from_vec(pre.shape(), dz).expect("shape");
            match c.mode {
                Conv2Mode::FanOut => {
                    let (a, d) = (m / c.n2, m % c.n2);
                    let k = slab(&p.tensors[EST_K2], d);
                    let (din, dk, db) = conv2d_backward(&cache.pool1[a], &k, &dz, c.kind);
                    add_slab(&mut g.tensors[EST_K2], d, &dk);
                    g.tensors[EST_B2].data_mut()[m] += db;
                    add_slab(&mut dpool1[a], 0, &din);
                }
                Conv2Mode::Sum => {
                    let kd = slab(&p.tensors[EST_K2], m);
                    let mut dkd = Tensor::zeros(kd.shape());
                    for a in 0..c.n1 {
                        let (din, dk, db) = conv2d_backward(&cache.pool1[a], &slab(&kd, a), &dz, c.kind);
                        add_slab(&mut dkd, a, &dk);
                        if a == 0 {
                            g.tensors[EST_B2].data_mut()[m] += db;
                        }
                        add_slab(&mut dpool1[a], 0, &din);
                    }
                    add_slab(&mut g.tensors[EST_K2], m, &dkd);
                }
            }
        }
        for k in 0..c.n1 {
            let pre = &cache.pre1[k];
            let mut dz = max_pool_backward(pre.len(), &cache.arg1[k], dpool1[k].data());
            ops::relu_backward(pre.data(), &mut dz);
            let dz = Tensor::from_vec(pre.shape(), dz).expect("shape");
            let (_, dk, db) = conv2d_backward(&input, &slab(&p.tensors[EST_K1], k), &dz, c.kind);
            add_slab(&mut g.tensors[EST_K1], k, &dk);
            g.tensors[EST_B1].data_mut()[k] += db;
        }
    }

    fn pred_forward(&self, p: &Params, x: &[f64], ops: &mut OpCounter) -> Result<(Vec<f64>, PredCache)> {
        let r = &self.spec.recurrent;
        let seq: Vec<Vec<f64>> = x.chunks(POSE_LEN).map(|c| c.to_vec()).collect();
        let l1 = lstm_forward(lstm_at(p, PRED_L1), &seq, ops);
        let h_last = l1.hidden_states().last().expect("n_i > 0").clone();
        let rep = vec![h_last; r.nr1];
        let rev: Vec<Vec<f64>> = rep.iter().rev().cloned().collect();
        let fwd = lstm_forward(lstm_at(p, PRED_FWD), &rep, ops);
        let bwd = lstm_forward(lstm_at(p, PRED_BWD), &rev, ops);
        let outs = bilstm_outputs(&fwd, &bwd);
        let (td_w, td_b) = (&p.tensors[PRED_TD], &p.tensors[PRED_TD + 1]);
        let mut last = Vec::new();
        for o in &outs {
            last = dense(o, td_w, td_b, ops)?;
        }
        let y = dense(&last, &p.tensors[PRED_OUT], &p.tensors[PRED_OUT + 1], ops)?;
        let td_in = outs.last().expect("nr1 > 0").clone();
        Ok((y, PredCache { l1, rep, fwd, bwd, last, td_in }))
    }

    fn pred_backward(&self, p: &Params, cache: &PredCache, dy: &[f64], g: &mut Params) {
        let r = &self.spec.recurrent;
        let (gw, gb) = g.tensors[PRED_OUT..].split_at_mut(1);
        let dlast = dense_backward(&cache.last, &p.tensors[PRED_OUT], dy, gw[0].data_mut(), gb[0].data_mut());
        let (gw, gb) = g.tensors[PRED_TD..].split_at_mut(1);
        let dout = dense_backward(&cache.td_in, &p.tensors[PRED_TD], &dlast, gw[0].data_mut(), gb[0].data_mut());
        let n = r.nr1;
        let h2 = r.nl2;
        let mut dh_f = vec![vec![0.0; h2]; n];
        let mut dh_b = vec![vec![0.0; h2]; n];
        dh_f[n - 1].copy_from_slice(&dout[..h2]);
        // The last output step holds the backward direction's first state.
        dh_b[0].copy_from_slice(&dout[h2..]);
        let grads = |i: usize| {
            let t = &p.tensors;
            LstmGrads {
                w: vec![0.0; t[i].len()],
                u: vec![0.0; t[i + 1].len()],
                b: vec![0.0; t[i + 2].len()],
            }
        };
        let mut gf = grads(PRED_FWD);
        let dx_f = lstm_backward(lstm_at(p, PRED_FWD), &cache.fwd, &dh_f, &mut gf);
        let mut gbk = grads(PRED_BWD);
        let dx_b = lstm_backward(lstm_at(p, PRED_BWD), &cache.bwd, &dh_b, &mut gbk);
        take_lstm_grads(g, PRED_FWD, gf);
        take_lstm_grads(g, PRED_BWD, gbk);
        let h1 = cache.rep[0].len();
        let mut dh1 = vec![0.0; h1];
        for t in 0..n {
            for k in 0..h1 {
                dh1[k] += dx_f[t][k] + dx_b[n - 1 - t][k];
            }
        }
        let steps = cache.l1.hidden_states().len();
        let mut dhs = vec![vec![0.0; h1]; steps];
        dhs[steps - 1] = dh1;
        let mut g1 = grads(PRED_L1);
        lstm_backward(lstm_at(p, PRED_L1), &cache.l1, &dhs, &mut g1);
        take_lstm_grads(g, PRED_L1, g1);
    }
}

/// Shape of a weight matrix as `(rows, cols)`.
pub fn weight_shape(p: &Params, name: &str) -> Option<(usize, usize)> {
    p.get(name).filter(|t| t.shape().len() == 2).map(shape2)
}
