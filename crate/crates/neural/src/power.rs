//! Average received power per PD, arranged on the PD grid.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of the first `n_ta` sample vectors, reshaped row-major to the PD grid.
pub fn avg_power_matrix(samples: &[Vec<f64>], n_ta: usize) -> Result<Tensor> {
    if n_ta == 0 {
        return Err(Error::Spec("N_TA must be at least 1".into()));
    }
    if samples.len() < n_ta {
        return Err(Error::TooFewSamples {
            needed: n_ta,
            got: samples.len(),
        });
    }
    let n_r = samples[0].len();
    let side = (n_r as f64).sqrt().round() as usize;
    if side * side != n_r || n_r == 0 {
        return Err(Error::Spec(format!("N_r = {n_r} is not a perfect square")));
    }
    let mut acc = vec![0.0; n_r];
    for s in &samples[..n_ta] {
        if s.len() != n_r {
            return Err(Error::Shape {
                what: "power sample",
                expected: vec![n_r],
                got: vec![s.len()],
            });
        }
        acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= n_ta as f64);
    Tensor::from_vec(&[side, side], acc)
}
