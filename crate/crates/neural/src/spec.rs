use crate::error::{Error, Result};
use crate::ops::ConvKind;

/// How the second convolution stage combines the first stage's maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conv2Mode {
    /// Every first-stage map is convolved with every second-stage kernel,
    /// giving `N_1·N_2` maps.
    FanOut,
    /// Conventional multi-channel convolution: `N_2` maps, each summing over
    /// the `N_1` inputs with its own kernel slice.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub n1: usize,
    pub k1: usize,
    pub m1: usize,
    pub n2: usize,
    pub k2: usize,
    pub m2: usize,
    pub nf1: usize,
    pub nf2: usize,
    pub kind: ConvKind,
    pub mode: Conv2Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentSpec {
    /// Window length of past poses.
    pub n_i: usize,
    pub nl1: usize,
    /// Repeat-vector length.
    pub nr1: usize,
    pub nl2: usize,
    pub nd1: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpec {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub conv: ConvSpec,
    pub recurrent: RecurrentSpec,
    pub dense: DenseSpec,
    pub train: TrainSpec,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            conv: ConvSpec {
                n1: 20,
                k1: 2,
                m1: 1,
                n2: 20,
                k2: 2,
                m2: 1,
                nf1: 20,
                nf2: 20,
                kind: ConvKind::Convolution,
                mode: Conv2Mode::FanOut,
            },
            recurrent: RecurrentSpec {
                n_i: 10,
                nl1: 10,
                nr1: 10,
                nl2: 10,
                nd1: 10,
            },
            dense: DenseSpec { d1: 30, d2: 40, d3: 30 },
            train: TrainSpec {
                batch: 64,
                lr: 1e-3,
                epochs: 200,
                patience: 20,
            },
        }
    }
}

/// Spatial sizes through the convolution stack for a `side × side` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub maps: usize,
    pub flat: usize,
}

impl NetSpec {
    /// Every size set to `n`, keeping the default kernel and pooling sizes.
    pub fn uniform(n: usize) -> NetSpec {
        let mut s = NetSpec::default();
        let c = &mut s.conv;
        c.n1 = n;
        c.n2 = n;
        c.nf1 = n;
        c.nf2 = n;
        s.recurrent = RecurrentSpec {
            n_i: n,
            nl1: n,
            nr1: n,
            nl2: n,
            nd1: n,
        };
        s.dense = DenseSpec { d1: n, d2: n, d3: n };
        s
    }

    pub fn conv_dims(&self, side: usize) -> Result<ConvDims> {
        let c = &self.conv;
        let sizes = [c.n1, c.k1, c.m1, c.n2, c.k2, c.m2, c.nf1, c.nf2];
        if sizes.contains(&0) {
            return Err(Error::Spec("convolution sizes must be positive".into()));
        }
        let shrink = |n: usize, k: usize, what: &str| {
            n.checked_sub(k)
                .map(|v| v + 1)
                .ok_or_else(|| Error::Spec(format!("{what}: kernel {k} exceeds map {n}")))
        };
        let conv1 = shrink(side, c.k1, "conv1")?;
        let pool1 = conv1 / c.m1;
        if pool1 == 0 {
            return Err(Error::Spec("pool1 leaves no output".into()));
        }
        let conv2 = shrink(pool1, c.k2, "conv2")?;
        let pool2 = conv2 / c.m2;
        if pool2 == 0 {
            return Err(Error::Spec("pool2 leaves no output".into()));
        }
        let maps = match c.mode {
            Conv2Mode::FanOut => c.n1 * c.n2,
            Conv2Mode::Sum => c.n2,
        };
        Ok(ConvDims {
            conv1,
            pool1,
            conv2,
            pool2,
            maps,
            flat: maps * pool2 * pool2,
        })
    }

    pub fn validate(&self, side: usize) -> Result<()> {
        self.conv_dims(side)?;
        let r = &self.recurrent;
        if [r.n_i, r.nl1, r.nr1, r.nl2, r.nd1].contains(&0) {
            return Err(Error::Spec("recurrent sizes must be positive".into()));
        }
        let d = &self.dense;
        if [d.d1, d.d2, d.d3].contains(&0) {
            return Err(Error::Spec("dense sizes must be positive".into()));
        }
        let t = &self.train;
        if t.batch == 0 || t.epochs == 0 || !(t.lr >= 0.0 && t.lr.is_finite()) {
            return Err(Error::Spec("batch and epochs must be positive, lr finite and non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_flatten_dimension() {
        let d = NetSpec::default().conv_dims(4).unwrap();
        assert_eq!((d.conv1, d.pool1, d.conv2, d.pool2), (3, 3, 2, 2));
        assert_eq!(d.flat, 20 * 20 * 4);
        assert_eq!(d.flat, 1600);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let mut s = NetSpec::default();
        s.conv.k1 = 5;
        assert!(s.conv_dims(4).is_err());
        s.conv.k1 = 2;
        s.conv.m1 = 4;
        assert!(s.conv_dims(4).is_err());
    }
}
