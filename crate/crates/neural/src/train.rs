//! Block-wise training: mini-batch SGD on the mean squared error, early
//! stopping on a held-out validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::Net;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::spec::TrainSpec;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: Vec<f64>) {
        self.inputs.push(x);
        self.targets.push(y);
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

/// Per-feature affine scaling `(v − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Fits on `rows`; features with no spread keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.first().map_or(0, Vec::len);
        let m = rows.len().max(1) as f64;
        let mut mean = vec![0.0; n];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(a, v)| *a += v / m);
        }
        let mut var = vec![0.0; n];
        for r in rows {
            for k in 0..n {
                var[k] += (r[k] - mean[k]).powi(2) / m;
            }
        }
        let std = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| x * s + m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub standardize_inputs: bool,
    pub standardize_targets: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: Params,
    pub input_scaler: Standardizer,
    pub target_scaler: Standardizer,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Mean squared error on the test split, in scaled units.
    pub test_loss: f64,
}

/// Shuffled 70/10/20 split of `0..n`.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (0.7 * n as f64).round() as usize;
    let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    (idx, val, test)
}

/// Mean over samples of `‖ŷ − y‖²`.
pub fn mse(net: &Net, p: &Params, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let yh = net.forward(p, x)?;
        total += yh.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// One update `θ ← θ − ε ∇φ` on a batch; returns the batch loss before it.
pub fn sgd_step(net: &Net, p: &mut Params, inputs: &[&[f64]], targets: &[&[f64]], lr: f64) -> Result<f64> {
    let b = inputs.len() as f64;
    let mut g = p.zeros_like();
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        net.backward(p, x, |yh| {
            loss += yh.iter().zip(y.iter()).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / b;
            yh.iter().zip(y.iter()).map(|(a, t)| 2.0 * (a - t) / b).collect()
        }, &mut g)?;
    }
    if lr != 0.0 {
        p.axpy(-lr, &g);
    }
    Ok(loss)
}

pub fn train_block(net: &Net, data: &Dataset, train: &TrainSpec, opts: TrainOptions, seed: u64) -> Result<Trained> {
    let init = net.init_params(seed)?;
    train_from(net, init, data, train, opts, seed)
}

/// Trains starting from `params` on a seeded 70/10/20 split of `data`.
pub fn train_from(net: &Net, params: Params, data: &Dataset, train: &TrainSpec, opts: TrainOptions, seed: u64) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (tr, va, te) = split_indices(data.len(), seed);
    if tr.is_empty() {
        return Err(Error::TooFewSamples { needed: 2, got: data.len() });
    }
    train_splits(net, params, &data.subset(&tr), &data.subset(&va), &data.subset(&te), train, opts, seed)
}

/// Trains on caller-supplied splits; scalers are fitted on `train_raw` only.
/// Deterministic for a given seed.
#[allow(clippy::too_many_arguments)]
pub fn train_splits(
    net: &Net,
    mut params: Params,
    train_raw: &Dataset,
    val_raw: &Dataset,
    test_raw: &Dataset,
    train: &TrainSpec,
    opts: TrainOptions,
    seed: u64,
) -> Result<Trained> {
    if train_raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.batch == 0 {
        return Err(Error::Spec("batch size must be at least 1".into()));
    }
    let input_scaler = if opts.standardize_inputs {
        Standardizer::fit(&train_raw.inputs)
    } else {
        Standardizer::identity(net.input_len())
    };
    let target_scaler = if opts.standardize_targets {
        Standardizer::fit(&train_raw.targets)
    } else {
        Standardizer::identity(net.output_len())
    };
    let scale = |d: &Dataset| Dataset {
        inputs: d.inputs.iter().map(|x| input_scaler.apply(x)).collect(),
        targets: d.targets.iter().map(|y| target_scaler.apply(y)).collect(),
    };
    let train_set = scale(train_raw);
    let val_set = scale(val_raw);
    let test_set = scale(test_raw);
    // Without a validation split the training loss picks the best epoch.
    let select = if val_set.is_empty() { &train_set } else { &val_set };

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = params.clone();
    let mut best_loss = mse(net, &params, select)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    for epoch in 1..=train.epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(train.batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train_set.inputs[i].as_slice()).collect();
            let ys: Vec<&[f64]> = chunk.iter().map(|&i| train_set.targets[i].as_slice()).collect();
            let l = sgd_step(net, &mut params, &xs, &ys, train.lr)?;
            train_loss += l * chunk.len() as f64 / train_set.len() as f64;
        }
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::Divergence { epoch, loss: train_loss });
        }
        let val_loss = mse(net, &params, select)?;
        history.push(EpochStats { epoch, train_loss, val_loss });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= train.patience {
            break;
        }
    }
    let test_loss = mse(net, &best, &test_set)?;
    Ok(Trained {
        params: best,
        input_scaler,
        target_scaler,
        history,
        best_epoch,
        test_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockId;
    use crate::spec::{DenseSpec, NetSpec};

    fn line_data(n: usize) -> Dataset {
        let mut d = Dataset::default();
        for k in 0..n {
            let x = k as f64 / (n - 1) as f64;
            d.push(vec![x, 0.0, 0.0, 0.0, 0.0], vec![0.3 + 0.5 * x; 3]);
        }
        d
    }

    fn depth_one() -> Net {
        let mut s = NetSpec::default();
        s.dense = DenseSpec { d1: 1, d2: 1, d3: 1 };
        Net::new(BlockId::Regressor, &s, 0).unwrap()
    }

    /// Every unit live for non-negative inputs, so the ReLU chain acts as a line.
    fn live_init(net: &Net) -> Params {
        let mut p = net.zero_params().unwrap();
        for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
            let v = if name.ends_with(".b") { 0.1 } else { 0.5 };
            t.data_mut().iter_mut().for_each(|w| *w = v);
        }
        p
    }

    #[test]
    fn split_is_seventy_ten_twenty() {
        let (a, b, c) = split_indices(100, 3);
        assert_eq!((a.len(), b.len(), c.len()), (70, 10, 20));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn zero_rate_leaves_params_unchanged() {
        let net = depth_one();
        let spec = TrainSpec { batch: 8, lr: 0.0, epochs: 3, patience: 20 };
        let opts = TrainOptions { standardize_inputs: false, standardize_targets: false };
        let out = train_block(&net, &line_data(30), &spec, opts, 5).unwrap();
        assert_eq!(out.params.tensors, net.init_params(5).unwrap().tensors);
    }

    #[test]
    fn first_epoch_losses_do_not_increase() {
        // A single linear layer on fixed data is a convex least-squares problem.
        let net = depth_one();
        let mut p = net.init_params(2).unwrap();
        let data = line_data(16);
        let xs: Vec<&[f64]> = data.inputs.iter().map(Vec::as_slice).collect();
        let ys: Vec<&[f64]> = data.targets.iter().map(Vec::as_slice).collect();
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let l = sgd_step(&net, &mut p, &xs, &ys, 1e-3).unwrap();
            assert!(l <= last + 1e-15);
            last = l;
        }
    }

    #[test]
    fn recovers_a_line() {
        let net = depth_one();
        let spec = TrainSpec { batch: 8, lr: 0.05, epochs: 4000, patience: 4000 };
        let opts = TrainOptions { standardize_inputs: false, standardize_targets: false };
        let data = line_data(60);
        let out = train_from(&net, live_init(&net), &data, &spec, opts, 11).unwrap();
        let at = |x: f64| net.forward(&out.params, &[x, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let (y0, y1) = (at(0.0), at(1.0));
        for k in 0..3 {
            assert!((y0[k] - 0.3).abs() < 1e-3, "intercept {}", y0[k]);
            assert!((y1[k] - y0[k] - 0.5).abs() < 1e-3, "slope {}", y1[k] - y0[k]);
        }
    }

    #[test]
    fn bit_reproducible() {
        let net = depth_one();
        let spec = TrainSpec { batch: 4, lr: 0.01, epochs: 5, patience: 20 };
        let opts = TrainOptions { standardize_inputs: true, standardize_targets: true };
        let a = train_block(&net, &line_data(20), &spec, opts, 9).unwrap();
        let b = train_block(&net, &line_data(20), &spec, opts, 9).unwrap();
        assert_eq!(a.params.tensors, b.params.tensors);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn divergence_is_reported() {
        let net = depth_one();
        let spec = TrainSpec { batch: 4, lr: 1e-3, epochs: 50, patience: 50 };
        let opts = TrainOptions { standardize_inputs: false, standardize_targets: false };
        let mut data = line_data(20);
        data.inputs.iter_mut().for_each(|x| x[0] = 1e300);
        assert!(matches!(
            train_from(&net, live_init(&net), &data, &spec, opts, 1),
            Err(Error::Divergence { epoch: 1, .. })
        ));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let net = depth_one();
        let opts = TrainOptions { standardize_inputs: false, standardize_targets: false };
        assert!(matches!(
            train_block(&net, &Dataset::default(), &NetSpec::default().train, opts, 0),
            Err(Error::EmptyDataset)
        ));
    }
}
