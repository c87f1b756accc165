//! Generalized spatial modulation: codebook, received-signal model, average
//! SNR and ML detection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::optics::ChannelMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GsmConfig {
    pub n_t: usize,
    pub n_a: usize,
    pub m: usize,
    /// Mean optical power per active LED (W).
    pub i_p: f64,
    /// Electrical-to-optical conversion (W/A).
    pub alpha: f64,
    /// PD responsivity (A/W).
    pub responsivity: f64,
    /// Noise standard deviation (A).
    pub sigma: f64,
}

impl Default for GsmConfig {
    fn default() -> Self {
        GsmConfig {
            n_t: 16,
            n_a: 2,
            m: 2,
            i_p: 1.0,
            alpha: 1.0,
            responsivity: 0.75,
            sigma: 1e-6,
        }
    }
}

impl GsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_a < 1 || self.n_a > self.n_t {
            return Err(Error::config("gsm.n_a", "must satisfy 1 <= N_a <= N_t"));
        }
        if self.m < 1 || !self.m.is_power_of_two() {
            return Err(Error::config("gsm.m", "must be a power of two"));
        }
        if !(self.i_p > 0.0) {
            return Err(Error::config("gsm.i_p", "must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("gsm.sigma", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.responsivity > 0.0) {
            return Err(Error::config("gsm.alpha", "alpha and responsivity must be positive"));
        }
        Ok(())
    }

    /// Combined electrical gain `α·r` applied to `H·x`.
    pub fn gain(&self) -> f64 {
        self.alpha * self.responsivity
    }

    pub fn with_sigma(&self, sigma: f64) -> GsmConfig {
        GsmConfig {
            sigma,
            ..self.clone()
        }
    }
}

/// `I_m = 2 I_P m / (M + 1)` for `m = 1..M`.
pub fn intensity_levels(m: usize, i_p: f64) -> Vec<f64> {
    (1..=m)
        .map(|k| 2.0 * i_p * k as f64 / (m as f64 + 1.0))
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn floor_log2(v: u128) -> u32 {
    127 - v.leading_zeros()
}

/// First `count` sorted index sets of size `k` drawn from `0..n`, in
/// lexicographic order.
fn combinations(n: usize, k: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    let mut cur: Vec<usize> = (0..k).collect();
    while out.len() < count {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsmCodebook {
    n_t: usize,
    eta: u32,
    pattern_bits: u32,
    symbol_bits: u32,
    patterns: Vec<Vec<usize>>,
    codewords: Vec<Vec<f64>>,
}

impl GsmCodebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Bits per channel use.
    pub fn eta(&self) -> u32 {
        self.eta
    }

    pub fn pattern_bits(&self) -> u32 {
        self.pattern_bits
    }

    pub fn symbol_bits(&self) -> u32 {
        self.symbol_bits
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        &self.codewords[k]
    }

    pub fn codewords(&self) -> &[Vec<f64>] {
        &self.codewords
    }

    pub fn patterns(&self) -> &[Vec<usize>] {
        &self.patterns
    }

    /// Hamming distance between the bit labels of codewords `a` and `b`.
    /// Codeword `k` carries the label `k`.
    pub fn hamming(&self, a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }

    /// Mean emitted vector over the codebook.
    pub fn mean_codeword(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_t];
        for c in &self.codewords {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        let n = self.codewords.len().max(1) as f64;
        acc.iter().map(|a| a / n).collect()
    }
}

/// Codeword `k` uses pattern `k >> symbol_bits`; the low bits pick one level
/// per active LED, first active LED in the most significant position.
pub fn build_codebook(cfg: &GsmConfig) -> Result<GsmCodebook> {
    cfg.validate()?;
    let pattern_bits = floor_log2(binomial(cfg.n_t, cfg.n_a));
    let level_bits = cfg.m.trailing_zeros();
    let symbol_bits = cfg.n_a as u32 * level_bits;
    let eta = pattern_bits + symbol_bits;
    if eta >= 31 {
        return Err(Error::config("gsm", "codebook larger than 2^30 codewords"));
    }
    let patterns = combinations(cfg.n_t, cfg.n_a, 1usize << pattern_bits);
    let levels = intensity_levels(cfg.m, cfg.i_p);
    let mut codewords = Vec::with_capacity(1 << eta);
    for pattern in &patterns {
        for sym in 0..(1usize << symbol_bits) {
            let mut x = vec![0.0; cfg.n_t];
            for (slot, &led) in pattern.iter().enumerate() {
                let shift = (cfg.n_a - 1 - slot) as u32 * level_bits;
                let level = (sym >> shift) & (cfg.m - 1);
                x[led] = levels[level];
            }
            codewords.push(x);
        }
    }
    Ok(GsmCodebook {
        n_t: cfg.n_t,
        eta,
        pattern_bits,
        symbol_bits,
        patterns,
        codewords,
    })
}

/// Noise-free received vector `α r H x`.
pub fn noiseless(h: &ChannelMatrix, x: &[f64], cfg: &GsmConfig) -> Result<Vec<f64>> {
    let g = cfg.gain();
    Ok(h.apply(x)?.into_iter().map(|v| v * g).collect())
}

/// `y = α r H x + n` with i.i.d. `N(0, σ²)` noise drawn from `rng`.
pub fn transmit_with<R: rand::Rng + ?Sized>(
    h: &ChannelMatrix,
    x: &[f64],
    cfg: &GsmConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut y = noiseless(h, x, cfg)?;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::config("gsm.sigma", e.to_string()))?;
    for v in &mut y {
        *v += normal.sample(rng);
    }
    Ok(y)
}

pub fn transmit(h: &ChannelMatrix, x: &[f64], cfg: &GsmConfig, noise_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    transmit_with(h, x, cfg, &mut rng)
}

/// Average SNR in dB; `None` for an all-zero channel.
pub fn average_snr(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> Option<f64> {
    let lin = average_snr_linear(h, codebook, cfg);
    (lin > 0.0).then(|| 10.0 * lin.log10())
}

pub fn average_snr_linear(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> f64 {
    mean_signal_energy(h, codebook) * cfg.gain().powi(2) / (cfg.sigma * cfg.sigma * h.n_r() as f64)
}

/// `Σ_j E{(h_j x)²}` averaged uniformly over the codebook.
pub fn mean_signal_energy(h: &ChannelMatrix, codebook: &GsmCodebook) -> f64 {
    let total: f64 = codebook
        .codewords()
        .iter()
        .map(|x| {
            h.apply(x)
                .map(|hx| hx.iter().map(|v| v * v).sum::<f64>())
                .unwrap_or(0.0)
        })
        .sum();
    total / codebook.len().max(1) as f64
}

/// Noise standard deviation that puts the average SNR at `snr_db`.
pub fn sigma_for_snr(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig, snr_db: f64) -> Option<f64> {
    let e = mean_signal_energy(h, codebook);
    if e <= 0.0 {
        return None;
    }
    let lin = 10f64.powf(snr_db / 10.0);
    Some(cfg.gain() * (e / (lin * h.n_r() as f64)).sqrt())
}

/// Noiseless images of every codeword, used to speed up repeated detection.
pub fn constellation(h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> Result<Vec<Vec<f64>>> {
    codebook.codewords().iter().map(|x| noiseless(h, x, cfg)).collect()
}

/// Index of the constellation point closest to `y`; ties go to the lower index.
pub fn ml_detect_index(y: &[f64], points: &[Vec<f64>]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in points.iter().enumerate() {
        if p.len() != y.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                got: y.len(),
            });
        }
        let d: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    Ok(best)
}

/// `argmin_x ‖y − α r H x‖²` over the codebook, returned as the codeword index.
pub fn ml_detect(y: &[f64], h: &ChannelMatrix, codebook: &GsmCodebook, cfg: &GsmConfig) -> Result<usize> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    ml_detect_index(y, &constellation(h, codebook, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(n_t: usize, n_a: usize, m: usize) -> GsmConfig {
        GsmConfig {
            n_t,
            n_a,
            m,
            ..GsmConfig::default()
        }
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_levels(2, 1.0), vec![2.0 / 3.0, 4.0 / 3.0]);
        assert_eq!(intensity_levels(1, 1.0), vec![1.0]);
        let l = intensity_levels(4, 2.0);
        assert_abs_diff_eq!(l.iter().sum::<f64>() / 4.0, 2.0, epsilon = 1e-15);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn codebook_sizes() {
        let cb = build_codebook(&GsmConfig::default()).unwrap();
        assert_eq!((cb.eta(), cb.len()), (8, 256));
        assert_eq!(cb.patterns().len(), 64);
        let cb = build_codebook(&small(1, 1, 2)).unwrap();
        assert_eq!((cb.eta(), cb.len()), (1, 2));
        let cb = build_codebook(&small(4, 1, 2)).unwrap();
        assert_eq!((cb.eta(), cb.len()), (3, 8));
    }

    #[test]
    fn codewords_have_n_a_active_levels() {
        let cfg = small(6, 3, 4);
        let cb = build_codebook(&cfg).unwrap();
        let levels = intensity_levels(4, 1.0);
        assert_eq!(cb.len(), 1 << cb.eta());
        for x in cb.codewords() {
            let active: Vec<_> = x.iter().filter(|v| **v != 0.0).collect();
            assert_eq!(active.len(), 3);
            assert!(active.iter().all(|v| levels.contains(v)));
        }
        // Distinct labels give distinct vectors.
        for a in 0..cb.len() {
            for b in a + 1..cb.len() {
                assert_ne!(cb.codeword(a), cb.codeword(b));
            }
        }
    }

    #[test]
    fn lexicographic_patterns_and_labels() {
        let cb = build_codebook(&small(4, 2, 2)).unwrap();
        // C(4,2) = 6 → 4 patterns kept.
        assert_eq!(cb.patterns(), &[vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2]]);
        let lo = 2.0 / 3.0;
        let hi = 4.0 / 3.0;
        assert_eq!(cb.codeword(0b0110), &[hi, 0.0, lo, 0.0]);
        assert_eq!(cb.codeword(0b1101), &[0.0, lo, hi, 0.0]);
        assert_eq!(cb.hamming(0b0110, 0b1101), 3);
    }

    #[test]
    fn noiseless_and_noise_only() {
        let h = ChannelMatrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 2.0]]).unwrap();
        let cfg = GsmConfig {
            n_t: 2,
            n_a: 1,
            sigma: 1e-300,
            ..GsmConfig::default()
        };
        let y = transmit(&h, &[1.0, 2.0], &cfg, 7).unwrap();
        assert_abs_diff_eq!(y[0], 0.75 * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.75 * 4.2, epsilon = 1e-15);

        let cfg = cfg.with_sigma(0.3);
        let n1 = transmit(&h, &[0.0, 0.0], &cfg, 11).unwrap();
        let n2 = transmit(&h, &[0.0, 0.0], &cfg, 11).unwrap();
        assert_eq!(n1, n2);
        assert!(n1.iter().any(|v| *v != 0.0));
        assert!(transmit(&h, &[1.0], &cfg, 1).is_err());
    }

    #[test]
    fn snr_examples() {
        let cfg = GsmConfig::default();
        let cb = build_codebook(&cfg).unwrap();
        assert!(average_snr(&ChannelMatrix::zeros(16, 16), &cb, &cfg).is_none());

        let mut h = ChannelMatrix::zeros(4, 16);
        for j in 0..4 {
            for i in 0..16 {
                h.set(j, i, 1e-6 * (1.0 + (i * j) as f64 % 3.0));
            }
        }
        let a = average_snr(&h, &cb, &cfg).unwrap();
        let b = average_snr(&h.scaled(10.0), &cb, &cfg).unwrap();
        assert_abs_diff_eq!(b - a, 20.0, epsilon = 1e-9);

        let sigma = sigma_for_snr(&h, &cb, &cfg, 25.0).unwrap();
        assert_abs_diff_eq!(average_snr(&h, &cb, &cfg.with_sigma(sigma)).unwrap(), 25.0, epsilon = 1e-9);

        let perm = [3, 1, 0, 2];
        assert_abs_diff_eq!(average_snr(&h.permute_rows(&perm), &cb, &cfg).unwrap(), a, epsilon = 1e-12);
    }

    #[test]
    fn single_term_snr_hand_formula() {
        let cfg = GsmConfig {
            n_t: 1,
            n_a: 1,
            m: 1,
            i_p: 2.0,
            alpha: 0.8,
            responsivity: 0.5,
            sigma: 1e-3,
        };
        let cb = build_codebook(&cfg).unwrap();
        assert_eq!(cb.len(), 1);
        let h = ChannelMatrix::from_rows(&[vec![3e-3]]).unwrap();
        let expected = (0.8f64 * 0.5 * 3e-3 * 2.0).powi(2) / (1e-6 * 1.0);
        assert_abs_diff_eq!(average_snr_linear(&h, &cb, &cfg), expected, epsilon = 1e-12 * expected);
    }

    #[test]
    fn detection_examples() {
        let cfg = small(4, 1, 2);
        let cb = build_codebook(&cfg).unwrap();
        let h = ChannelMatrix::from_rows(&[
            vec![1.0, 0.2, 0.0, 0.1],
            vec![0.0, 1.0, 0.3, 0.0],
            vec![0.1, 0.0, 1.0, 0.4],
        ])
        .unwrap();
        for k in 0..cb.len() {
            let y = noiseless(&h, cb.codeword(k), &cfg).unwrap();
            assert_eq!(ml_detect(&y, &h, &cb, &cfg).unwrap(), k);
        }
        // Midpoint of two constellation points resolves to the lower index.
        let pts = constellation(&h, &cb, &cfg).unwrap();
        let mid: Vec<f64> = pts[2].iter().zip(&pts[5]).map(|(a, b)| 0.5 * (a + b)).collect();
        let d2 = |p: &Vec<f64>| p.iter().zip(&mid).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        if pts.iter().all(|p| d2(p) >= d2(&pts[2]) - 1e-15) {
            assert_eq!(ml_detect_index(&mid, &pts).unwrap(), 2);
        }
        // Brute-force comparison under crafted noise.
        let cfg_n = cfg.with_sigma(0.4);
        for seed in 0..50 {
            let y = transmit(&h, cb.codeword(seed as usize % 8), &cfg_n, seed).unwrap();
            let got = ml_detect(&y, &h, &cb, &cfg_n).unwrap();
            let brute = (0..8)
                .min_by(|&a, &b| {
                    let da: f64 = pts[a].iter().zip(&y).map(|(p, v)| (p - v).powi(2)).sum();
                    let db: f64 = pts[b].iter().zip(&y).map(|(p, v)| (p - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(got, brute);
        }
        assert_eq!(ml_detect_index(&[0.0], &[]), Err(Error::EmptyCodebook));
    }

    #[test]
    fn exact_tie_prefers_lower_index() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![5.0, 5.0]];
        assert_eq!(ml_detect_index(&[0.0, 0.0], &pts).unwrap(), 0);
        let pts = vec![vec![5.0, 5.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        assert_eq!(ml_detect_index(&[0.0, 0.0], &pts).unwrap(), 1);
    }
}
