//! Pairwise error probabilities, the union bound on BER and a seeded Monte
//! Carlo estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gsm::{self, GsmCodebook, GsmConfig};
use crate::optics::ChannelMatrix;

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn check_dims(h: &ChannelMatrix, n: usize) -> Result<()> {
    if h.n_t() != n {
        return Err(Error::Dimension {
            expected: h.n_t(),
            got: n,
        });
    }
    Ok(())
}

/// Probability of deciding `x_m` when `x_n` was sent.
pub fn pep(h: &ChannelMatrix, x_m: &[f64], x_n: &[f64], cfg: &GsmConfig) -> Result<f64> {
    check_dims(h, x_m.len())?;
    check_dims(h, x_n.len())?;
    if x_m == x_n {
        return Err(Error::IdenticalCodewords);
    }
    let diff: Vec<f64> = x_m.iter().zip(x_n).map(|(a, b)| a - b).collect();
    let hd = h.apply(&diff)?;
    let norm = hd.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(q_function(cfg.gain() * norm / (2.0 * cfg.sigma)))
}

/// Direct double sum over ordered codeword pairs. Quadratic in the codebook
/// size; kept as the reference for [`BoundEvaluator`].
pub fn ber_bound_naive(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> Result<f64> {
    let n = codebook.len();
    if n < 2 {
        return Err(Error::EmptyCodebook);
    }
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let d = codebook.hamming(a, b) as f64;
                acc += d * pep(h, codebook.codeword(a), codebook.codeword(b), cfg)?;
            }
        }
    }
    Ok(acc / (codebook.eta() as f64 * n as f64))
}

/// Terms whose squared Q argument exceeds the smallest one by more than this
/// are dropped; `Q(t)·e^{t²/2}` is decreasing, so each dropped term is below
/// `e^{-PRUNE/2}` times the largest kept term.
const PRUNE: f64 = 100.0;

/// Precomputed pair structure for evaluating the union bound many times over
/// different channels with the same codebook. Codewords are stored by their
/// nonzero support so a pair distance costs `O(N_a)` after one Gram product.
#[derive(Debug, Clone)]
pub struct BoundEvaluator {
    n_t: usize,
    n_cw: usize,
    width: usize,
    sup_idx: Vec<usize>,
    sup_val: Vec<f64>,
    weights: Vec<f64>,
    norm: f64,
}

impl BoundEvaluator {
    pub fn new(codebook: &GsmCodebook) -> Result<Self> {
        let n = codebook.len();
        if n < 2 {
            return Err(Error::EmptyCodebook);
        }
        let n_t = codebook.n_t();
        let width = codebook
            .codewords()
            .iter()
            .map(|x| x.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
            .max(1);
        let mut sup_idx = vec![0; n * width];
        let mut sup_val = vec![0.0; n * width];
        for (k, x) in codebook.codewords().iter().enumerate() {
            for (slot, (i, v)) in x.iter().enumerate().filter(|(_, v)| **v != 0.0).enumerate() {
                sup_idx[k * width + slot] = i;
                sup_val[k * width + slot] = *v;
            }
        }
        let mut weights = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                weights.push(2.0 * codebook.hamming(a, b) as f64);
            }
        }
        Ok(BoundEvaluator {
            n_t,
            n_cw: n,
            width,
            sup_idx,
            sup_val,
            weights,
            norm: 1.0 / (codebook.eta() as f64 * n as f64),
        })
    }

    /// Squared norms `‖H(x_m − x_n)‖²` for every unordered pair `m < n`, in
    /// lexicographic order.
    pub fn pair_distances(&self, h: &ChannelMatrix) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.weights.len());
        self.fill_distances(h, &mut out)?;
        Ok(out)
    }

    /// Writes the pair distances into `out` and returns the mean codeword
    /// energy `‖H x_k‖²`.
    fn fill_distances(&self, h: &ChannelMatrix, out: &mut Vec<f64>) -> Result<f64> {
        check_dims(h, self.n_t)?;
        let n = self.n_t;
        let mut gram = vec![0.0; n * n];
        for j in 0..h.n_r() {
            let row = h.row(j);
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    gram[a * n + b] += ra * row[b];
                }
            }
        }
        // g[k] = G x_k, and e[k] = x_kᵀ G x_k.
        let w = self.width;
        let mut g = vec![0.0; self.n_cw * n];
        let mut e = vec![0.0; self.n_cw];
        for k in 0..self.n_cw {
            let gk = &mut g[k * n..(k + 1) * n];
            for s in 0..w {
                let v = self.sup_val[k * w + s];
                if v != 0.0 {
                    let row = &gram[self.sup_idx[k * w + s] * n..][..n];
                    for (o, r) in gk.iter_mut().zip(row) {
                        *o += v * r;
                    }
                }
            }
            e[k] = (0..w).map(|s| self.sup_val[k * w + s] * gk[self.sup_idx[k * w + s]]).sum();
        }
        out.clear();
        for a in 0..self.n_cw {
            let ga = &g[a * n..(a + 1) * n];
            let ea = e[a];
            let from = a + 1;
            let idx = &self.sup_idx[from * w..];
            let val = &self.sup_val[from * w..];
            let eb = &e[from..];
            if w == 2 {
                // Two active LEDs per codeword, the usual GSM case.
                out.extend((0..eb.len()).map(|b| {
                    let cross = val[2 * b] * ga[idx[2 * b]] + val[2 * b + 1] * ga[idx[2 * b + 1]];
                    (ea + eb[b] - 2.0 * cross).max(0.0)
                }));
            } else {
                let pairs = idx.chunks_exact(w).zip(val.chunks_exact(w)).zip(eb);
                out.extend(pairs.map(|((is, vs), eb)| {
                    let cross: f64 = is.iter().zip(vs).map(|(i, v)| v * ga[*i]).sum();
                    (ea + eb - 2.0 * cross).max(0.0)
                }));
            }
        }
        Ok(e.iter().sum::<f64>() / self.n_cw as f64)
    }

    fn sum_terms(&self, d2: &[f64], scale: f64) -> f64 {
        let d_min = d2.chunks(8).fold(f64::INFINITY, |m, c| c.iter().fold(m, |a, &b| a.min(b)));
        let cutoff = d_min + PRUNE / scale;
        let mut acc = 0.0;
        for (w, &d) in self.weights.iter().zip(d2) {
            if d <= cutoff {
                acc += w * q_function((d * scale).sqrt());
            }
        }
        acc * self.norm
    }

    fn with_buffer<T>(&self, f: impl FnOnce(&mut Vec<f64>) -> T) -> T {
        thread_local! {
            static PAIRS: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
        }
        PAIRS.with(|b| f(&mut b.borrow_mut()))
    }

    /// Union bound on BER for channel `h`.
    pub fn bound(&self, h: &ChannelMatrix, cfg: &GsmConfig) -> Result<f64> {
        let scale = (cfg.gain() / (2.0 * cfg.sigma)).powi(2);
        self.with_buffer(|d2| {
            self.fill_distances(h, d2)?;
            Ok(self.sum_terms(d2, scale))
        })
    }

    /// Union bound with σ chosen so the average SNR is `snr_db`, as
    /// [`gsm::sigma_for_snr`] does. `None` for a dark channel.
    pub fn bound_at_snr(&self, h: &ChannelMatrix, snr_db: f64) -> Result<Option<f64>> {
        self.with_buffer(|d2| {
            let e = self.fill_distances(h, d2)?;
            if e <= 0.0 {
                return Ok(None);
            }
            // (α R / 2σ)² with σ = α R √(e / (γ N_r)); the gain cancels.
            let scale = 10f64.powf(snr_db / 10.0) * h.n_r() as f64 / (4.0 * e);
            Ok(Some(self.sum_terms(d2, scale)))
        })
    }
}

/// Union bound on BER, including `α` inside the Q argument.
pub fn ber_bound(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> Result<f64> {
    BoundEvaluator::new(codebook)?.bound(h, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerReport {
    pub bound: f64,
    pub simulated: Option<f64>,
    pub trials: u64,
    pub bit_errors: u64,
    /// Half-width of the 95% Wilson interval on the simulated BER.
    pub ci_halfwidth: f64,
    pub snr_db: Option<f64>,
}

/// Half-width of the 95% Wilson score interval for `k` successes in `n`.
pub fn wilson_halfwidth(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

const CHUNK: u64 = 4096;

fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    // SplitMix64 step keeps chunk streams decorrelated.
    let mut z = seed ^ chunk.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counts bit errors over `trials` uniformly drawn codewords sent through the
/// channel and detected by ML. Chunks of trials draw from independent seeded
/// streams, so the result does not depend on the thread count.
pub fn monte_carlo_ber(
    h: &ChannelMatrix,
    codebook: &GsmCodebook,
    cfg: &GsmConfig,
    trials: u64,
    seed: u64,
) -> Result<BerReport> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    check_dims(h, codebook.n_t())?;
    let bound = ber_bound(h, codebook, cfg)?;
    let snr_db = gsm::average_snr(h, codebook, cfg);
    if trials == 0 {
        return Ok(BerReport {
            bound,
            simulated: None,
            trials: 0,
            bit_errors: 0,
            ci_halfwidth: 0.0,
            snr_db,
        });
    }
    let points = gsm::constellation(h, codebook, cfg)?;
    let n_chunks = trials.div_ceil(CHUNK);
    let n_cw = codebook.len();
    let sigma = cfg.sigma;
    let bit_errors: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(seed, c));
            let count = CHUNK.min(trials - c * CHUNK);
            let mut y = vec![0.0; h.n_r()];
            let mut errs = 0u64;
            for _ in 0..count {
                let k = rng.random_range(0..n_cw);
                for (v, p) in y.iter_mut().zip(&points[k]) {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v = p + sigma * n;
                }
                let d = gsm::ml_detect_index(&y, &points).expect("non-empty constellation");
                errs += codebook.hamming(k, d) as u64;
            }
            errs
        })
        .sum();
    let bits = trials * codebook.eta().max(1) as u64;
    Ok(BerReport {
        bound,
        simulated: Some(bit_errors as f64 / bits as f64),
        trials,
        bit_errors,
        ci_halfwidth: wilson_halfwidth(bit_errors, bits),
        snr_db,
    })
}
