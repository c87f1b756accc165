//! Layer primitives with their backward passes. Every primitive that does
//! arithmetic takes an [`OpCounter`] so forward costs can be audited.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tally of multiplications in weighted sums and element-wise products, and
/// of bias additions. Accumulations inside a dot product are not counted as
/// sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub muls: u64,
    pub sums: u64,
}

impl OpCounter {
    pub fn add(&mut self, muls: usize, sums: usize) {
        self.muls += muls as u64;
        self.sums += sums as u64;
    }
}

/// Kernel index convention for [`conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// `out[i,j] = Σ K[x,y]·I[i−x+k−1, j−y+k−1]`: the kernel is flipped.
    Convolution,
    /// `out[i,j] = Σ K[x,y]·I[i+x, j+y]`.
    CrossCorrelation,
}

impl ConvKind {
    #[inline]
    fn offset(self, x: usize, k: usize) -> usize {
        match self {
            ConvKind::Convolution => k - 1 - x,
            ConvKind::CrossCorrelation => x,
        }
    }
}

fn square_side(t: &Tensor, what: &'static str) -> Result<usize> {
    match t.shape() {
        [a, b] if a == b => Ok(*a),
        s => Err(Error::Shape {
            what,
            expected: vec![0, 0],
            got: s.to_vec(),
        }),
    }
}

/// Valid, stride-1 2-D convolution of a square map with a square kernel plus
/// a scalar bias.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: f64, kind: ConvKind, ops: &mut OpCounter) -> Result<Tensor> {
    let n = square_side(input, "conv input")?;
    let k = square_side(kernel, "conv kernel")?;
    if k > n || k == 0 {
        return Err(Error::Shape {
            what: "conv kernel larger than input",
            expected: vec![n, n],
            got: vec![k, k],
        });
    }
    let out = conv2d_slices(input.data(), n, kernel.data(), k, bias, kind, ops);
    let m = n - k + 1;
    Tensor::from_vec(&[m, m], out)
}

/// [`conv2d`] on raw row-major slices; sizes are the caller's responsibility.
pub(crate) fn conv2d_slices(inp: &[f64], n: usize, ker: &[f64], k: usize, bias: f64, kind: ConvKind, ops: &mut OpCounter) -> Vec<f64> {
    let m = n - k + 1;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for x in 0..k {
                let r = i + kind.offset(x, k);
                for y in 0..k {
                    acc += ker[x * k + y] * inp[r * n + j + kind.offset(y, k)];
                }
            }
            out[i * m + j] = acc + bias;
        }
    }
    ops.add(k * k * m * m, m * m);
    out
}

/// Gradients of [`conv2d`] with respect to its input, kernel and bias.
pub fn conv2d_backward(input: &Tensor, kernel: &Tensor, dout: &Tensor, kind: ConvKind) -> (Tensor, Tensor, f64) {
    let n = input.shape()[0];
    let k = kernel.shape()[0];
    let m = n - k + 1;
    let (inp, ker, d) = (input.data(), kernel.data(), dout.data());
    let mut din = vec![0.0; n * n];
    let mut dk = vec![0.0; k * k];
    let mut db = 0.0;
    for i in 0..m {
        for j in 0..m {
            let g = d[i * m + j];
            if g == 0.0 {
                continue;
            }
            db += g;
            for x in 0..k {
                let r = i + kind.offset(x, k);
                for y in 0..k {
                    let c = j + kind.offset(y, k);
                    dk[x * k + y] += g * inp[r * n + c];
                    din[r * n + c] += g * ker[x * k + y];
                }
            }
        }
    }
    (
        Tensor::from_vec(&[n, n], din).expect("shape"),
        Tensor::from_vec(&[k, k], dk).expect("shape"),
        db,
    )
}

pub fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes `dout` where the pre-activation was positive.
pub fn relu_backward(pre: &[f64], dout: &mut [f64]) {
    for (g, p) in dout.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Square max-pooling; returns the pooled map and, for each output cell, the
/// flat index of the input cell that won (first maximum on ties). Trailing
/// rows and columns that do not fill a window are dropped.
pub fn max_pool(t: &Tensor, size: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let n = square_side(t, "pool input")?;
    if size == 0 || stride == 0 || size > n {
        return Err(Error::Shape {
            what: "pool window",
            expected: vec![n],
            got: vec![size],
        });
    }
    let m = (n - size) / stride + 1;
    let d = t.data();
    let mut out = vec![0.0; m * m];
    let mut arg = vec![0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut at = 0;
            for x in 0..size {
                for y in 0..size {
                    let idx = (i * stride + x) * n + j * stride + y;
                    if d[idx] > best {
                        best = d[idx];
                        at = idx;
                    }
                }
            }
            out[i * m + j] = best;
            arg[i * m + j] = at;
        }
    }
    Ok((Tensor::from_vec(&[m, m], out)?, arg))
}

pub fn max_pool_backward(input_len: usize, argmax: &[usize], dout: &[f64]) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (a, g) in argmax.iter().zip(dout) {
        din[*a] += g;
    }
    din
}

/// Concatenates the maps in order, each row-major.
pub fn flatten(maps: &[Tensor]) -> Tensor {
    Tensor::vector(maps.iter().flat_map(|m| m.data().iter().copied()).collect())
}

/// `W·x + b` with `W` of shape `[out, in]`.
pub fn dense(x: &[f64], w: &Tensor, b: &Tensor, ops: &mut OpCounter) -> Result<Vec<f64>> {
    let (rows, cols) = match w.shape() {
        [r, c] => (*r, *c),
        s => {
            return Err(Error::Shape {
                what: "dense weight",
                expected: vec![0, x.len()],
                got: s.to_vec(),
            })
        }
    };
    if cols != x.len() || b.len() != rows {
        return Err(Error::Shape {
            what: "dense input",
            expected: vec![rows, cols],
            got: vec![b.len(), x.len()],
        });
    }
    let wd = w.data();
    let out = (0..rows).map(|r| dot(&wd[r * cols..(r + 1) * cols], x) + b.data()[r]).collect();
    ops.add(rows * cols, rows);
    Ok(out)
}

/// Dot product with four running sums, so long rows are not bound by
/// addition latency.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(u, v)| u * v).sum();
    for (u, v) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += u[i] * v[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Accumulates `dW += g xᵀ`, `db += g` and returns `Wᵀ g`.
pub fn dense_backward(x: &[f64], w: &Tensor, g: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let cols = x.len();
    let wd = w.data();
    let mut dx = vec![0.0; cols];
    for (r, gr) in g.iter().enumerate() {
        if *gr == 0.0 {
            continue;
        }
        db[r] += gr;
        let row = &wd[r * cols..(r + 1) * cols];
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += gr * x[c];
            dx[c] += gr * row[c];
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2(n: usize, v: Vec<f64>) -> Tensor {
        Tensor::from_vec(&[n, n], v).unwrap()
    }

    #[test]
    fn full_overlap_sum() {
        let mut c = OpCounter::default();
        let out = conv2d(&Tensor::filled(&[2, 2], 1.0), &Tensor::filled(&[2, 2], 1.0), 0.0, ConvKind::Convolution, &mut c).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data()[0], 4.0);
        assert_eq!(c, OpCounter { muls: 4, sums: 1 });
    }

    #[test]
    fn delta_kernel_shifts() {
        let input = t2(3, (0..9).map(|v| v as f64).collect());
        let mut k = Tensor::zeros(&[2, 2]);
        k.set(0, 0, 1.0);
        let mut c = OpCounter::default();
        // Flipped kernel: K[0,0] picks I[i+1, j+1].
        let conv = conv2d(&input, &k, 0.0, ConvKind::Convolution, &mut c).unwrap();
        assert_eq!(conv.data(), &[4.0, 5.0, 7.0, 8.0]);
        let xc = conv2d(&input, &k, 0.0, ConvKind::CrossCorrelation, &mut c).unwrap();
        assert_eq!(xc.data(), &[0.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn matches_one_based_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = t2(4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect());
        let k = t2(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let out = conv2d(&input, &k, 0.0, ConvKind::Convolution, &mut OpCounter::default()).unwrap();
        // F[i,j] = Σ_{x,y=1..k} K[x,y] I[i−x+1, j−y+1], with output indices
        // i, j running over k..n in one-based terms.
        for i in 2..=4 {
            for j in 2..=4 {
                let mut want = 0.0;
                for x in 1..=2 {
                    for y in 1..=2 {
                        want += k.at(x - 1, y - 1) * input.at(i - x, j - y);
                    }
                }
                assert_abs_diff_eq!(out.at(i - 2, j - 2), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kernel_larger_than_input_fails() {
        let r = conv2d(&Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3, 3]), 0.0, ConvKind::Convolution, &mut OpCounter::default());
        assert!(r.is_err());
    }

    #[test]
    fn relu_and_pool_basics() {
        let r = relu(&Tensor::vector(vec![-1.0, 3.0]));
        assert_eq!(r.data(), &[0.0, 3.0]);
        let t = t2(3, (0..9).map(|v| v as f64).collect());
        let (p, _) = max_pool(&t, 1, 1).unwrap();
        assert_eq!(p, t);
        let (p, arg) = max_pool(&t2(4, (0..16).map(|v| v as f64).collect()), 2, 2).unwrap();
        assert_eq!(p.data(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
    }

    #[test]
    fn dense_identity() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let y = dense(&[1.0, -2.0, 0.5], &w, &Tensor::zeros(&[3]), &mut OpCounter::default()).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [ConvKind::Convolution, ConvKind::CrossCorrelation] {
            let input = t2(4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect());
            let k = t2(3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect());
            let g = t2(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let loss = |i: &Tensor, k: &Tensor| {
                let o = conv2d(i, k, 0.3, kind, &mut OpCounter::default()).unwrap();
                o.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (din, dk, db) = conv2d_backward(&input, &k, &g, kind);
            assert_abs_diff_eq!(db, g.data().iter().sum::<f64>(), epsilon = 1e-12);
            let h = 1e-6;
            for idx in 0..16 {
                let (mut a, mut b) = (input.clone(), input.clone());
                a.data_mut()[idx] += h;
                b.data_mut()[idx] -= h;
                assert_abs_diff_eq!(din.data()[idx], (loss(&a, &k) - loss(&b, &k)) / (2.0 * h), epsilon = 1e-8);
            }
            for idx in 0..9 {
                let (mut a, mut b) = (k.clone(), k.clone());
                a.data_mut()[idx] += h;
                b.data_mut()[idx] -= h;
                assert_abs_diff_eq!(dk.data()[idx], (loss(&input, &a) - loss(&input, &b)) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }
}
