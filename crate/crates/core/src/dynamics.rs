//! User mobility along clothoid paths and AR(1) receiver polar angles.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct ClothoidParams {
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    /// Variance of the per-path Gaussian perturbation of `kappa0` and `kappa1`.
    pub sigma_p2: f64,
    /// Walking speed (m/s).
    pub speed: f64,
    /// Sampling interval (s).
    pub sample_time: f64,
    /// Region the walker is confined to: `[x_min, x_max] × [y_min, y_max]`.
    pub bounds: [f64; 4],
}

impl Default for ClothoidParams {
    fn default() -> Self {
        ClothoidParams {
            x0: 1.0,
            y0: 1.5,
            theta0: 0.3,
            kappa0: 0.15,
            kappa1: 0.01,
            sigma_p2: 1e-3,
            speed: 1.0,
            sample_time: 0.1,
            bounds: [0.25, 4.75, 0.25, 4.75],
        }
    }
}

impl ClothoidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::config("clothoid.speed", "must be positive"));
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::config("clothoid.sample_time", "must be positive"));
        }
        if !(self.sigma_p2 >= 0.0) {
            return Err(Error::config("clothoid.sigma_p2", "must be non-negative"));
        }
        let [x0, x1, y0, y1] = self.bounds;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::config("clothoid.bounds", "empty region"));
        }
        if !(x0..=x1).contains(&self.x0) || !(y0..=y1).contains(&self.y0) {
            return Err(Error::config("clothoid.x0", "start point outside the walking region"));
        }
        Ok(())
    }
}

/// Heading of a clothoid at arc length `s`.
pub fn clothoid_heading(theta0: f64, kappa0: f64, kappa1: f64, s: f64) -> f64 {
    theta0 + kappa0 * s + 0.5 * kappa1 * s * s
}

fn simpson(a: f64, b: f64, fa: [f64; 2], fm: [f64; 2], fb: [f64; 2]) -> [f64; 2] {
    let h = (b - a) / 6.0;
    [h * (fa[0] + 4.0 * fm[0] + fb[0]), h * (fa[1] + 4.0 * fm[1] + fb[1])]
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> [f64; 2]>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; 2],
    fm: [f64; 2],
    fb: [f64; 2],
    whole: [f64; 2],
    tol: f64,
    depth: u32,
) -> [f64; 2] {
    let m = 0.5 * (a + b);
    let lm = f(0.5 * (a + m));
    let rm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, lm, fm);
    let right = simpson(m, b, fm, rm, fb);
    let err = (left[0] + right[0] - whole[0]).abs().max((left[1] + right[1] - whole[1]).abs());
    if depth == 0 || err <= 15.0 * tol {
        let c = |k: usize| left[k] + right[k] + (left[k] + right[k] - whole[k]) / 15.0;
        return [c(0), c(1)];
    }
    let l = adaptive(f, a, m, fa, lm, fm, left, tol / 2.0, depth - 1);
    let r = adaptive(f, m, b, fm, rm, fb, right, tol / 2.0, depth - 1);
    [l[0] + r[0], l[1] + r[1]]
}

/// `∫_a^b (cos θ(s), sin θ(s)) ds` by adaptive Simpson quadrature.
pub fn integrate_heading<F: Fn(f64) -> f64>(theta: F, a: f64, b: f64, tol: f64) -> [f64; 2] {
    let f = |s: f64| {
        let t = theta(s);
        [t.cos(), t.sin()]
    };
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Folds an unbounded coordinate back into `[lo, hi]` as a light ray would
/// bounce between two mirrors; returns the folded value and whether the
/// number of bounces is odd.
fn fold(u: f64, lo: f64, hi: f64) -> (f64, bool) {
    let len = hi - lo;
    let k = ((u - lo) / len).floor();
    let r = u - lo - k * len;
    let odd = (k as i64).rem_euclid(2) == 1;
    if odd {
        (hi - r, true)
    } else {
        (lo + r, false)
    }
}

/// Samples a clothoid path at `n_samples` points spaced `speed·sample_time`
/// apart in arc length. Walls reflect the path specularly.
pub fn clothoid_path(params: &ClothoidParams, n_samples: usize, seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    params.validate()?;
    if n_samples < 2 {
        return Err(Error::config("n_samples", "need at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k0, k1) = if params.sigma_p2 > 0.0 {
        let noise = Normal::new(0.0, params.sigma_p2.sqrt()).map_err(|e| Error::config("clothoid.sigma_p2", e.to_string()))?;
        (params.kappa0 + noise.sample(&mut rng), params.kappa1 + noise.sample(&mut rng))
    } else {
        (params.kappa0, params.kappa1)
    };
    let theta = |s: f64| clothoid_heading(params.theta0, k0, k1, s);
    let ds = params.speed * params.sample_time;
    let [xlo, xhi, ylo, yhi] = params.bounds;
    let (mut ux, mut uy) = (params.x0, params.y0);
    let mut out = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let s = k as f64 * ds;
        if k > 0 {
            let d = integrate_heading(theta, s - ds, s, 1e-12);
            ux += d[0];
            uy += d[1];
        }
        let (x, fx) = fold(ux, xlo, xhi);
        let (y, fy) = fold(uy, ylo, yhi);
        let mut h = theta(s);
        if fx {
            h = PI - h;
        }
        if fy {
            h = -h;
        }
        out.push((x, y, wrap_angle(h)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArParams {
    pub c0: f64,
    pub c1: f64,
    pub sigma_w2: f64,
    pub t_s: f64,
    pub t_c: f64,
    pub mean_phi: f64,
    pub sigma_phi2: f64,
}

impl ArParams {
    /// Derives `(c0, c1, σ_w²)` from the target stationary mean and variance;
    /// `rho_c` is the autocorrelation reached after one coherence time, so
    /// `c1 = rho_c^(T_s/T_c)`.
    pub fn from_targets(mean_phi: f64, sigma_phi2: f64, t_s: f64, t_c: f64, rho_c: f64) -> Result<ArParams> {
        if !(t_s > 0.0 && t_c > 0.0) {
            return Err(Error::config("ar.t_s", "sample and coherence times must be positive"));
        }
        if !(rho_c > 0.0 && rho_c < 1.0) {
            return Err(Error::config("ar.rho_c", "must lie in (0, 1)"));
        }
        if !(sigma_phi2 >= 0.0) {
            return Err(Error::config("ar.sigma_phi2", "must be non-negative"));
        }
        let c1 = rho_c.powf(t_s / t_c);
        Ok(ArParams {
            c0: (1.0 - c1) * mean_phi,
            c1,
            sigma_w2: (1.0 - c1 * c1) * sigma_phi2,
            t_s,
            t_c,
            mean_phi,
            sigma_phi2,
        })
    }

    pub fn stationary_mean(&self) -> f64 {
        self.c0 / (1.0 - self.c1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1.abs() < 1.0) {
            return Err(Error::UnstableAr(self.c1));
        }
        if !(self.sigma_w2 >= 0.0) {
            return Err(Error::config("ar.sigma_w2", "must be non-negative"));
        }
        Ok(())
    }
}

/// AR(1) series without the final clamp, started at the stationary mean.
pub fn ar_series_raw(params: &ArParams, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.sigma_w2.sqrt()).map_err(|e| Error::config("ar.sigma_w2", e.to_string()))?;
    let mut out = Vec::with_capacity(n_samples);
    let mut phi = params.stationary_mean();
    for _ in 0..n_samples {
        phi = params.c0 + params.c1 * phi + noise.sample(&mut rng);
        out.push(phi);
    }
    Ok(out)
}

/// Polar-angle series clamped to `[0, π/2]`.
pub fn ar_polar_series(params: &ArParams, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(ar_series_raw(params, n_samples, seed)?
        .into_iter()
        .map(|p| p.clamp(0.0, FRAC_PI_2))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_time: f64,
    pub samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.samples.iter().map(|(_, p)| p)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,theta_r,phi_r\n");
        for (t, p) in &self.samples {
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{}",
                p.position.x, p.position.y, p.position.z, p.theta_r, p.phi_r
            );
        }
        s
    }
}

/// Joins a clothoid path with an AR(1) polar-angle series; the azimuth is the
/// walking heading and the receiver height is fixed at `z`.
pub fn make_trajectory(clothoid: &ClothoidParams, ar: &ArParams, z: f64, n: usize, seed: u64) -> Result<Trajectory> {
    if (clothoid.sample_time - ar.t_s).abs() > 1e-12 {
        return Err(Error::config("ar.t_s", "must equal the path sample time"));
    }
    let path = clothoid_path(clothoid, n, seed)?;
    let phis = ar_polar_series(ar, n, seed ^ 0xA5A5_5A5A_0F0F_F0F0)?;
    let samples = path
        .into_iter()
        .zip(phis)
        .enumerate()
        .map(|(k, ((x, y, h), phi))| {
            Pose::new(Vec3::new(x, y, z), h, phi).map(|p| (k as f64 * clothoid.sample_time, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        sample_time: clothoid.sample_time,
        samples,
    })
}
