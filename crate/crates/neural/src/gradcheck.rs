//! Finite-difference audit of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{BlockId, Net};
use crate::error::Result;
use crate::spec::NetSpec;

pub const STEP: f64 = 1e-5;

/// PD grid side used for the estimator when checking from a bare spec.
pub const CHECK_SIDE: usize = 4;

/// Largest relative error between analytic and central-difference gradients
/// of `½‖y − t‖²` over every parameter, for random input, target and weights.
pub fn gradient_check(block: BlockId, spec: &NetSpec, seed: u64) -> Result<f64> {
    let net = Net::new(block, spec, CHECK_SIDE)?;
    gradient_check_net(&net, seed)
}

pub fn gradient_check_net(net: &Net, seed: u64) -> Result<f64> {
    gradient_check_step(net, seed, STEP)
}

/// [`gradient_check_net`] with a caller-chosen difference step. With
/// `h = 1e-5`, components of size ~1e-8 sit at the rounding floor of the
/// outputs; a larger step trades that for truncation error.
pub fn gradient_check_step(net: &Net, seed: u64, step: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut p = net.init_params(seed)?;
    // Small random biases keep units away from the ReLU kink at exactly zero.
    for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
        if name.ends_with(".b") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    // `L(p⁺) − L(p⁻)` factored as `½ Σ (y⁺ − y⁻)(y⁺ + y⁻ − 2t)`; subtracting
    // the two losses directly loses the low digits of small gradients.
    let loss_delta = |up: &[f64], down: &[f64]| -> f64 {
        0.5 * up
            .iter()
            .zip(down)
            .zip(&target)
            .map(|((u, d), t)| (u - d) * (u + d - 2.0 * t))
            .sum::<f64>()
    };

    let mut g = p.zeros_like();
    net.backward(&p, &x, |y| y.iter().zip(&target).map(|(a, b)| a - b).collect(), &mut g)?;
    let analytic: Vec<f64> = g.values().copied().collect();

    let slots: Vec<(usize, usize)> = p
        .tensors
        .iter()
        .enumerate()
        .flat_map(|(t, v)| (0..v.len()).map(move |i| (t, i)))
        .collect();
    let mut worst = 0.0f64;
    for (&ga, &(t, i)) in analytic.iter().zip(&slots) {
        let orig = p.tensors[t].data()[i];
        p.tensors[t].data_mut()[i] = orig + step;
        let up = net.forward(&p, &x)?;
        p.tensors[t].data_mut()[i] = orig - step;
        let down = net.forward(&p, &x)?;
        p.tensors[t].data_mut()[i] = orig;
        let fd = loss_delta(&up, &down) / (2.0 * step);
        let rel = (ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
