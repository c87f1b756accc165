//! Operation counts per block: the closed forms, and counts taken by running
//! a forward pass with an [`OpCounter`] attached.

use crate::blocks::{BlockId, Net};
use crate::error::Result;
use crate::ops::OpCounter;
use crate::spec::NetSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCounts {
    pub mul: f64,
    pub sum: f64,
}

/// Closed-form multiplication and summation counts for blocks 1, 2 and 3,
/// evaluated as written. The pooling factors divide without flooring, so
/// block 1 can be fractional when a pool does not tile its input.
pub fn complexity_counts(spec: &NetSpec, n_r: usize) -> [BlockCounts; 3] {
    let c = &spec.conv;
    let r = &spec.recurrent;
    let d = &spec.dense;
    let f = |v: usize| v as f64;
    let side = f(n_r).sqrt();
    let c1 = side - f(c.k1) + 1.0;
    let c2 = c1 / f(c.m1) - f(c.k2) + 1.0;
    let c3 = c1 / (f(c.m1) * f(c.m2)) - f(c.k2) + 1.0;
    let (n1, n2) = (f(c.n1), f(c.n2));
    let b1 = BlockCounts {
        mul: n1 * f(c.k1).powi(2) * c1 * c1
            + n1 * n2 * f(c.k2).powi(2) * c2 * c2
            + f(c.nf1) * n1 * n2 * c3 * c3
            + f(c.nf1) * f(c.nf2)
            + 5.0 * f(c.nf2),
        sum: n1 * c1 * c1 + f(c.nf1) + f(c.nf2) + 5.0 + n1 * n2 * c2 * c2,
    };
    let (l1, rr, l2) = (f(r.nl1), f(r.nr1), f(r.nl2));
    let core2 = 4.0 * (6.0 * l1 + l1 * l1) + 8.0 * rr * (l1 * (l1 + l2) + l2 * l2);
    let b2 = BlockCounts {
        mul: core2 + 5.0 * l2,
        sum: core2 + 5.0,
    };
    let b3 = BlockCounts {
        mul: 5.0 * f(d.d1) + f(d.d1) * f(d.d2) + f(d.d2) * f(d.d3) + 3.0 * f(d.d3),
        sum: f(d.d1) + f(d.d2) + f(d.d3) + 3.0,
    };
    [b1, b2, b3]
}

/// Counts recorded while running each block once on a PD grid of `side²`.
pub fn instrumented_counts(spec: &NetSpec, side: usize) -> Result<[OpCounter; 3]> {
    let mut out = [OpCounter::default(); 3];
    for (k, id) in [BlockId::Estimator, BlockId::Predictor, BlockId::Regressor].into_iter().enumerate() {
        let net = Net::new(id, spec, side)?;
        let p = net.zero_params()?;
        net.forward_counted(&p, &vec![0.5; net.input_len()], &mut out[k])?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regressor_counts_for_default_sizes() {
        let [_, _, b3] = complexity_counts(&NetSpec::default(), 16);
        assert_eq!(b3.mul, 2640.0);
        assert_eq!(b3.sum, 103.0);
    }

    #[test]
    fn unit_sizes_by_hand() {
        // side 4, kernels 1, pools 1: c1 = c2 = c3 = 4.
        let mut spec = NetSpec::uniform(1);
        spec.conv.k1 = 1;
        spec.conv.k2 = 1;
        let [b1, b2, b3] = complexity_counts(&spec, 16);
        assert_eq!(b1.mul, 16.0 + 16.0 + 16.0 + 1.0 + 5.0);
        assert_eq!(b1.sum, 16.0 + 1.0 + 1.0 + 5.0 + 16.0);
        assert_eq!(b2.mul, 4.0 * 7.0 + 8.0 * 3.0 + 5.0);
        assert_eq!(b2.sum, 4.0 * 7.0 + 8.0 * 3.0 + 5.0);
        assert_eq!(b3.mul, 5.0 + 1.0 + 1.0 + 3.0);
        assert_eq!(b3.sum, 1.0 + 1.0 + 1.0 + 3.0);
    }

    #[test]
    fn regressor_counter_matches_closed_form() {
        for spec in [NetSpec::default(), NetSpec::uniform(2), NetSpec::uniform(7)] {
            let ops = instrumented_counts(&spec, 4).unwrap();
            let cf = complexity_counts(&spec, 16);
            assert_eq!(ops[2].muls as f64, cf[2].mul);
            assert_eq!(ops[2].sums as f64, cf[2].sum);
        }
    }

    #[test]
    fn estimator_counter_matches_when_pools_tile() {
        let ops = instrumented_counts(&NetSpec::default(), 4).unwrap();
        let cf = complexity_counts(&NetSpec::default(), 16);
        assert_eq!(ops[0].muls as f64, cf[0].mul);
        assert_eq!(ops[0].sums as f64, cf[0].sum);
    }
}
