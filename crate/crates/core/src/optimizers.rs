//! Lens parameter selection: exhaustive grid search with refinement, the
//! closest-LED alignment rule and the vertical-lens baseline.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use rayon::prelude::*;

use crate::ber::BoundEvaluator;
use crate::error::{Error, Result};
use crate::geometry::{lens_world_position, receiver_rotation, wrap_angle, LensState, Pose};
use crate::gsm::{GsmCodebook, GsmConfig};
use crate::optics::{channel_matrix, ChannelMatrix, ReceiverConfig, RoomConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensBounds {
    pub f_min: f64,
    pub f_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for LensBounds {
    fn default() -> Self {
        LensBounds {
            f_min: 0.01,
            f_max: 0.15,
            theta_min: 0.0,
            theta_max: 2.0 * PI,
            phi_min: 0.0,
            phi_max: 30f64.to_radians(),
        }
    }
}

impl LensBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.f_min, self.f_max) || self.f_min <= 0.0 {
            return Err(Error::config("bounds.f", "need 0 < f_min <= f_max"));
        }
        if !ok(self.theta_min, self.theta_max) {
            return Err(Error::config("bounds.theta", "need theta_min <= theta_max"));
        }
        if !ok(self.phi_min, self.phi_max) || self.phi_min < 0.0 || self.phi_max > FRAC_PI_2 {
            return Err(Error::config("bounds.phi", "need 0 <= phi_min <= phi_max <= pi/2"));
        }
        Ok(())
    }

    pub fn contains(&self, lens: &LensState) -> bool {
        (self.f_min..=self.f_max).contains(&lens.f)
            && (self.theta_min..=self.theta_max).contains(&lens.theta_l)
            && (self.phi_min..=self.phi_max).contains(&lens.phi_l)
    }

    /// Clamps every variable into the box; the flag reports whether anything moved.
    pub fn clamp(&self, lens: &LensState) -> (LensState, bool) {
        let theta = if self.theta_max - self.theta_min >= 2.0 * PI - 1e-12 {
            let t = wrap_angle(lens.theta_l);
            if t < self.theta_min {
                t + 2.0 * PI
            } else {
                t
            }
        } else {
            lens.theta_l
        };
        let out = LensState {
            f: lens.f.clamp(self.f_min, self.f_max),
            theta_l: theta.clamp(self.theta_min, self.theta_max),
            phi_l: lens.phi_l.clamp(self.phi_min, self.phi_max),
            d_len: lens.d_len,
        };
        let moved = (out.f - lens.f).abs() > 1e-15
            || (out.theta_l - theta).abs() > 1e-15
            || (out.phi_l - lens.phi_l).abs() > 1e-15;
        (out, moved)
    }

    /// Maps a lens to `[0, 1]³` in the order `(θ_L, φ_L, f)`.
    pub fn normalize(&self, lens: &LensState) -> [f64; 3] {
        let u = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        [
            u(lens.theta_l, self.theta_min, self.theta_max),
            u(lens.phi_l, self.phi_min, self.phi_max),
            u(lens.f, self.f_min, self.f_max),
        ]
    }

    /// Inverse of [`LensBounds::normalize`], clamping to the box.
    pub fn denormalize(&self, u: [f64; 3], d_len: f64) -> LensState {
        let v = |t: f64, lo: f64, hi: f64| lo + t.clamp(0.0, 1.0) * (hi - lo);
        LensState {
            theta_l: v(u[0], self.theta_min, self.theta_max),
            phi_l: v(u[1], self.phi_min, self.phi_max),
            f: v(u[2], self.f_min, self.f_max),
            d_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeTag {
    Exhaustive,
    Cls,
    Vulo,
    Pbml,
    Fixed,
}

impl SchemeTag {
    pub fn name(self) -> &'static str {
        match self {
            SchemeTag::Exhaustive => "exhaustive",
            SchemeTag::Cls => "cls",
            SchemeTag::Vulo => "vulo",
            SchemeTag::Pbml => "pbml",
            SchemeTag::Fixed => "none",
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SchemeTag::Exhaustive),
            "cls" => Ok(SchemeTag::Cls),
            "vulo" => Ok(SchemeTag::Vulo),
            "pbml" => Ok(SchemeTag::Pbml),
            "none" | "fixed" => Ok(SchemeTag::Fixed),
            other => Err(Error::config("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub lens: LensState,
    pub ber_bound: f64,
    pub evaluations: usize,
    pub scheme: SchemeTag,
    /// The scheme's raw answer had to be clamped into the bounds.
    pub clamped: bool,
    /// A closed-form scheme hit a degenerate denominator.
    pub degenerate: bool,
}

/// Grid resolution and stopping rule of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_f: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub eps_ber: f64,
    pub max_refinements: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_f: 9,
            n_theta: 9,
            n_phi: 9,
            eps_ber: 1e-6,
            max_refinements: 5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_f < 2 || self.n_theta < 2 || self.n_phi < 2 {
            return Err(Error::config("grid", "need at least two points per dimension"));
        }
        if !(self.eps_ber >= 0.0) {
            return Err(Error::config("grid.eps_ber", "must be non-negative"));
        }
        Ok(())
    }
}

/// Outcome of [`grid_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub point: [f64; 3],
    pub value: f64,
    pub evaluations: usize,
    pub refinements: usize,
    /// Best value found on the first (coarse) grid.
    pub coarse_value: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi == lo {
        return vec![lo; n.max(1)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Minimises `objective` over the box `lo..hi` by a full grid scan followed by
/// repeated scans of a box two grid cells wide around the incumbent. Stops
/// once a refinement improves by less than `eps`. Ties keep the earlier point.
pub fn grid_minimize<F>(objective: F, lo: [f64; 3], hi: [f64; 3], counts: [usize; 3], eps: f64, max_refinements: usize) -> GridOutcome
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    let scan = |lo: [f64; 3], hi: [f64; 3]| -> Vec<([f64; 3], f64)> {
        let axes: Vec<Vec<f64>> = (0..3).map(|d| linspace(lo[d], hi[d], counts[d])).collect();
        let mut pts = Vec::with_capacity(counts.iter().product());
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    pts.push([a, b, c]);
                }
            }
        }
        pts.into_par_iter()
            .map(|p| {
                let v = objective(p);
                (p, if v.is_nan() { f64::INFINITY } else { v })
            })
            .collect()
    };
    let pick = |vals: &[([f64; 3], f64)]| {
        vals.iter()
            .fold(None::<([f64; 3], f64)>, |best, &(p, v)| match best {
                Some((_, bv)) if bv <= v => best,
                _ => Some((p, v)),
            })
            .expect("grid is non-empty")
    };
    let first = scan(lo, hi);
    let mut evaluations = first.len();
    let (mut point, mut value) = pick(&first);
    let coarse_value = value;
    let mut width: [f64; 3] = std::array::from_fn(|d| {
        if counts[d] > 1 {
            (hi[d] - lo[d]) / (counts[d] - 1) as f64
        } else {
            0.0
        }
    });
    let mut refinements = 0;
    while refinements < max_refinements {
        refinements += 1;
        let nlo: [f64; 3] = std::array::from_fn(|d| (point[d] - width[d]).max(lo[d]));
        let nhi: [f64; 3] = std::array::from_fn(|d| (point[d] + width[d]).min(hi[d]));
        let vals = scan(nlo, nhi);
        evaluations += vals.len();
        let (p, v) = pick(&vals);
        let improvement = value - v;
        if v < value {
            point = p;
            value = v;
        }
        for d in 0..3 {
            width[d] = if counts[d] > 1 { (nhi[d] - nlo[d]) / (counts[d] - 1) as f64 } else { 0.0 };
        }
        if improvement < eps {
            break;
        }
    }
    GridOutcome {
        point,
        value,
        evaluations,
        refinements,
        coarse_value,
    }
}

/// Everything needed to evaluate the BER bound for a pose and candidate lens.
/// How the noise level is set when a candidate channel is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseProtocol {
    /// Use `GsmConfig::sigma` as given; lens gain changes the SNR.
    FixedSigma,
    /// Rescale σ so every candidate channel sees this average SNR in dB.
    TargetSnr(f64),
}

pub struct LinkModel<'a> {
    pub room: &'a RoomConfig,
    pub rx: &'a ReceiverConfig,
    pub gsm: &'a GsmConfig,
    pub codebook: &'a GsmCodebook,
    pub evaluator: &'a BoundEvaluator,
    pub noise: NoiseProtocol,
}

impl LinkModel<'_> {
    pub fn channel(&self, pose: &Pose, lens: &LensState) -> ChannelMatrix {
        channel_matrix(pose, lens, self.room, self.rx)
    }

    /// Union bound under the model's noise protocol; a dark channel scores
    /// `+∞` so it never wins a search.
    pub fn bound(&self, pose: &Pose, lens: &LensState) -> f64 {
        self.bound_of(&self.channel(pose, lens))
    }

    pub fn bound_of(&self, h: &ChannelMatrix) -> f64 {
        let b = match self.noise {
            NoiseProtocol::FixedSigma => self.evaluator.bound(h, self.gsm).ok(),
            NoiseProtocol::TargetSnr(db) => self.evaluator.bound_at_snr(h, db).ok().flatten(),
        };
        b.unwrap_or(f64::INFINITY)
    }

    pub fn bound_with_sigma(&self, pose: &Pose, lens: &LensState, sigma: f64) -> f64 {
        let h = self.channel(pose, lens);
        self.evaluator
            .bound(&h, &self.gsm.with_sigma(sigma))
            .unwrap_or(f64::INFINITY)
    }
}

pub fn exhaustive_search(model: &LinkModel<'_>, pose: &Pose, bounds: &LensBounds, grid: &GridSpec) -> Result<OptResult> {
    bounds.validate()?;
    grid.validate()?;
    let d_len = model.rx.d_len;
    let out = grid_minimize(
        |p| {
            let lens = LensState::new(p[0], p[1], p[2], d_len);
            model.bound(pose, &lens)
        },
        [bounds.f_min, bounds.theta_min, bounds.phi_min],
        [bounds.f_max, bounds.theta_max, bounds.phi_max],
        [grid.n_f, grid.n_theta, grid.n_phi],
        grid.eps_ber,
        grid.max_refinements,
    );
    Ok(OptResult {
        lens: LensState::new(out.point[0], out.point[1], out.point[2], d_len),
        ber_bound: out.value,
        evaluations: out.evaluations,
        scheme: SchemeTag::Exhaustive,
        clamped: false,
        degenerate: false,
    })
}

/// Index of the LED nearest the lens centre; ties go to the lower index.
pub fn closest_led(pose: &Pose, d_len: f64, room: &RoomConfig) -> usize {
    let p_len = lens_world_position(pose, &LensState::new(1.0, 0.0, 0.0, d_len));
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in room.led_positions().iter().enumerate() {
        let d = (*p - p_len).norm();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Raw closest-LED solution before bound clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClsSolution {
    pub lens: LensState,
    pub led: usize,
    /// Lens axis already on the receiver normal; the azimuth is arbitrary and set to 0.
    pub degenerate: bool,
}

/// Lens angles that point the lens axis at the nearest LED, with the focal
/// length equal to the axial lens-to-PD-plane distance.
pub fn cls_lens(pose: &Pose, room: &RoomConfig, rx: &ReceiverConfig) -> Result<ClsSolution> {
    cls_toward(pose, room, rx, closest_led(pose, rx.d_len, room))
}

/// As [`cls_lens`], but skips LEDs behind the PD plane: the nearest LED the
/// lens can face. `None` when every LED is behind the receiver.
pub fn cls_lens_facing(pose: &Pose, room: &RoomConfig, rx: &ReceiverConfig) -> Result<Option<ClsSolution>> {
    let p_len = lens_world_position(pose, &LensState::new(1.0, 0.0, 0.0, rx.d_len));
    let mut order: Vec<(f64, usize)> = room.led_positions().iter().enumerate().map(|(i, p)| ((*p - p_len).norm(), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, led) in order {
        match cls_toward(pose, room, rx, led) {
            Ok(sol) => return Ok(Some(sol)),
            Err(Error::BehindReceiver(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

fn cls_toward(pose: &Pose, room: &RoomConfig, rx: &ReceiverConfig, led: usize) -> Result<ClsSolution> {
    let probe = LensState::new(1.0, 0.0, 0.0, rx.d_len);
    let u = (room.led_position(led) - lens_world_position(pose, &probe))
        .normalized()
        .ok_or(Error::ZeroDistance)?;
    // Direction to the LED expressed in the receiver frame.
    let v = receiver_rotation(pose).apply(u);
    if v.z <= 1e-12 {
        return Err(Error::BehindReceiver(v.z));
    }
    let lateral = (v.x * v.x + v.y * v.y).sqrt();
    let phi_l = lateral.atan2(v.z);
    let degenerate = lateral < 1e-12;
    let theta_l = if degenerate { 0.0 } else { wrap_angle(v.y.atan2(v.x)) };
    Ok(ClsSolution {
        lens: LensState::new(rx.d_len / v.z, theta_l, phi_l, rx.d_len),
        led,
        degenerate,
    })
}

/// Lens tilted back by the receiver's polar angle so its axis is vertical.
pub fn vulo_lens(pose: &Pose, rx: &ReceiverConfig) -> Result<LensState> {
    let c = pose.phi_r.cos();
    if pose.phi_r >= FRAC_PI_2 || c <= 1e-12 {
        return Err(Error::VerticalFocusDiverges(pose.phi_r));
    }
    Ok(LensState::new(rx.d_len / c, PI, pose.phi_r, rx.d_len))
}

/// Supplies lens settings for the learned scheme.
pub trait LensPredictor {
    fn predict_lens(&self, pose: &Pose) -> Result<LensState>;
}

pub enum Scheme<'a> {
    Exhaustive(GridSpec),
    Cls,
    Vulo,
    Pbml(&'a dyn LensPredictor),
    Fixed(LensState),
}

impl Scheme<'_> {
    pub fn tag(&self) -> SchemeTag {
        match self {
            Scheme::Exhaustive(_) => SchemeTag::Exhaustive,
            Scheme::Cls => SchemeTag::Cls,
            Scheme::Vulo => SchemeTag::Vulo,
            Scheme::Pbml(_) => SchemeTag::Pbml,
            Scheme::Fixed(_) => SchemeTag::Fixed,
        }
    }
}

/// Runs one scheme for one pose and scores its lens with the BER bound.
pub fn solve_p1(model: &LinkModel<'_>, pose: &Pose, bounds: &LensBounds, scheme: &Scheme<'_>) -> Result<OptResult> {
    bounds.validate()?;
    let (raw, degenerate) = match scheme {
        Scheme::Exhaustive(grid) => return exhaustive_search(model, pose, bounds, grid),
        Scheme::Cls => match cls_lens_facing(pose, model.room, model.rx)? {
            Some(sol) => (sol.lens, sol.degenerate),
            // Every LED is behind the array; the channel is dark anyway.
            None => (LensState::new(model.rx.d_len, 0.0, 0.0, model.rx.d_len), true),
        },
        Scheme::Vulo => (vulo_lens(pose, model.rx)?, false),
        Scheme::Pbml(p) => (p.predict_lens(pose)?, false),
        Scheme::Fixed(l) => (*l, false),
    };
    let (mut lens, clamped) = bounds.clamp(&raw);
    if matches!(scheme, Scheme::Cls) && clamped {
        // Keep the focal rule consistent with the lens actually set.
        lens.f = (model.rx.d_len / lens.phi_l.cos()).clamp(bounds.f_min, bounds.f_max);
    }
    lens.d_len = model.rx.d_len;
    Ok(OptResult {
        ber_bound: model.bound(pose, &lens),
        lens,
        evaluations: 1,
        scheme: scheme.tag(),
        clamped,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lens_normal, receiver_normal, Vec3};
    use crate::gsm::build_codebook;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn flat_objective_returns_first_point() {
        let out = grid_minimize(|_| 0.25, [0.0; 3], [1.0; 3], [3, 3, 3], 1e-6, 5);
        assert_eq!(out.point, [0.0, 0.0, 0.0]);
        assert_eq!(out.refinements, 1);
        assert_eq!(out.value, 0.25);
    }

    #[test]
    fn quadratic_converges_within_final_cell() {
        let target = [0.3172, 0.8, 0.55];
        let out = grid_minimize(
            |p| (p[0] - target[0]).powi(2),
            [0.0; 3],
            [1.0; 3],
            [9, 2, 2],
            0.0,
            8,
        );
        // Eight refinements of a 9-point grid: cell width 1/8 · (2/8)^8.
        let cell = 0.125 * 0.25f64.powi(8);
        assert!((out.point[0] - target[0]).abs() <= cell + 1e-15);
        assert!(out.value <= out.coarse_value);
    }

    #[test]
    fn incumbent_never_worse_than_coarse() {
        let f = |p: [f64; 3]| (5.0 * p[0]).sin() + (3.0 * p[1]).cos() * p[2];
        let out = grid_minimize(f, [0.0; 3], [2.0; 3], [5, 5, 5], 1e-9, 5);
        let mut coarse = f64::INFINITY;
        for a in linspace(0.0, 2.0, 5) {
            for b in linspace(0.0, 2.0, 5) {
                for c in linspace(0.0, 2.0, 5) {
                    coarse = coarse.min(f([a, b, c]));
                }
            }
        }
        assert_eq!(out.coarse_value, coarse);
        assert!(out.value <= coarse);
    }

    #[test]
    fn closest_led_examples() {
        let room = RoomConfig::default();
        let p0 = room.led_position(0);
        let pose = Pose::upright(Vec3::new(p0.x, p0.y, 0.0));
        assert_eq!(closest_led(&pose, 0.02, &room), 0);
        let (a, b) = (room.led_position(1), room.led_position(2));
        let pose = Pose::upright(Vec3::new(0.5 * (a.x + b.x), a.y, 0.0));
        assert_eq!(closest_led(&pose, 0.02, &room), 1);
    }

    #[test]
    fn cls_axial_case() {
        let room = RoomConfig::default();
        let rx = ReceiverConfig::default();
        let p = room.led_position(5);
        let pose = Pose::upright(Vec3::new(p.x, p.y, 0.0));
        let sol = cls_lens(&pose, &room, &rx).unwrap();
        assert_eq!(sol.led, 5);
        assert!(sol.degenerate);
        assert_eq!(sol.lens.phi_l, 0.0);
        assert_abs_diff_eq!(sol.lens.f, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn cls_tilted_pose_alignment() {
        let room = RoomConfig::default();
        let rx = ReceiverConfig::default();
        let pose = Pose::from_degrees(Vec3::new(2.5, 2.5, 0.0), 45.0, 17.0).unwrap();
        let sol = cls_lens(&pose, &room, &rx).unwrap();
        let p_len = lens_world_position(&pose, &sol.lens);
        let u = (room.led_position(sol.led) - p_len).normalized().unwrap();
        let n = lens_normal(&pose, &sol.lens);
        assert_abs_diff_eq!(n.dot(u), 1.0, epsilon = 1e-9);
        let eta_r = receiver_normal(&pose);
        assert_abs_diff_eq!(sol.lens.f, rx.d_len / n.dot(eta_r), epsilon = 1e-12);
        // Closed form written with the LED direction components.
        let (ct, st) = (pose.theta_r.cos(), pose.theta_r.sin());
        let (cp, sp) = (pose.phi_r.cos(), pose.phi_r.sin());
        let f2 = rx.d_len / (ct * sp * u.x + st * sp * u.y + cp * u.z);
        assert_abs_diff_eq!(sol.lens.f, f2, epsilon = 1e-12);
    }

    #[test]
    fn vulo_examples() {
        let rx = ReceiverConfig::default();
        let l = vulo_lens(&Pose::upright(Vec3::new(1.0, 1.0, 0.0)), &rx).unwrap();
        assert_eq!(l.phi_l, 0.0);
        assert_abs_diff_eq!(l.f, 0.02, epsilon = 1e-15);
        let pose = Pose::from_degrees(Vec3::new(1.0, 1.0, 0.0), 10.0, 20.0).unwrap();
        let l = vulo_lens(&pose, &rx).unwrap();
        assert_abs_diff_eq!(l.f, 0.021_284, epsilon = 5e-7);
        let pose = Pose::new(Vec3::new(1.0, 1.0, 0.0), 0.0, FRAC_PI_2).unwrap();
        assert!(matches!(vulo_lens(&pose, &rx), Err(Error::VerticalFocusDiverges(_))));
    }

    #[test]
    fn clamp_reports_motion() {
        let b = LensBounds::default();
        let (l, moved) = b.clamp(&LensState::new(0.5, -0.1, 0.9, 0.02));
        assert!(moved);
        assert!(b.contains(&l));
        assert_abs_diff_eq!(l.theta_l, 2.0 * PI - 0.1, epsilon = 1e-12);
        let inside = LensState::new(0.05, 1.0, 0.2, 0.02);
        assert_eq!(b.clamp(&inside), (inside, false));
        let u = b.normalize(&inside);
        let back = b.denormalize(u, 0.02);
        assert_abs_diff_eq!(back.f, inside.f, epsilon = 1e-15);
        assert_abs_diff_eq!(back.phi_l, inside.phi_l, epsilon = 1e-15);
    }

    #[test]
    fn solve_p1_clamps_and_is_deterministic() {
        let room = RoomConfig::default();
        let rx = ReceiverConfig::default();
        let gsm = GsmConfig::default();
        let cb = build_codebook(&gsm).unwrap();
        let ev = BoundEvaluator::new(&cb).unwrap();
        let model = LinkModel {
            room: &room,
            rx: &rx,
            gsm: &gsm,
            codebook: &cb,
            evaluator: &ev,
            noise: NoiseProtocol::FixedSigma,
        };
        let bounds = LensBounds::default();
        let pose = Pose::from_degrees(Vec3::new(0.4, 0.5, 0.0), 200.0, 40.0).unwrap();
        let a = solve_p1(&model, &pose, &bounds, &Scheme::Cls).unwrap();
        let b = solve_p1(&model, &pose, &bounds, &Scheme::Cls).unwrap();
        assert_eq!(a, b);
        assert!(bounds.contains(&a.lens));
        let v = solve_p1(&model, &pose, &bounds, &Scheme::Vulo).unwrap();
        assert!(v.clamped && bounds.contains(&v.lens));
    }

    #[test]
    fn cls_skips_leds_behind_the_array() {
        let room = RoomConfig::default();
        let rx = ReceiverConfig::default();
        // Corner pose tilted away from the luminaires: nothing is in front.
        let away = Pose::from_degrees(Vec3::new(0.25, 0.25, 0.0), 225.0, 60.0).unwrap();
        assert!(matches!(cls_lens(&away, &room, &rx), Err(Error::BehindReceiver(_))));
        assert!(cls_lens_facing(&away, &room, &rx).unwrap().is_none());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut skipped = 0;
        for _ in 0..2000 {
            let pose = Pose::new(
                Vec3::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), 0.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..1.3),
            )
            .unwrap();
            let facing = cls_lens_facing(&pose, &room, &rx).unwrap();
            match cls_lens(&pose, &room, &rx) {
                Ok(sol) => assert_eq!(facing, Some(sol)),
                Err(_) => {
                    if let Some(sol) = facing {
                        skipped += 1;
                        assert_ne!(sol.led, closest_led(&pose, rx.d_len, &room));
                        let eta = (room.led_position(sol.led) - lens_world_position(&pose, &sol.lens)).normalized().unwrap();
                        assert!((lens_normal(&pose, &sol.lens) - eta).norm() < 1e-9);
                    }
                }
            }
        }
        assert!(skipped > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn cls_aligns_and_vulo_is_vertical(
            x in 0.0f64..5.0, y in 0.0f64..5.0, z in 0.0f64..1.0,
            theta in 0.0f64..(2.0 * PI), phi in 0.0f64..(40f64.to_radians()),
        ) {
            let room = RoomConfig::default();
            let rx = ReceiverConfig::default();
            let pose = Pose::new(Vec3::new(x, y, z), theta, phi).unwrap();
            let sol = cls_lens(&pose, &room, &rx).unwrap();
            let u = (room.led_position(sol.led) - lens_world_position(&pose, &sol.lens)).normalized().unwrap();
            prop_assert!((lens_normal(&pose, &sol.lens) - u).norm() < 1e-8);
            let v = vulo_lens(&pose, &rx).unwrap();
            prop_assert!((lens_normal(&pose, &v) - Vec3::Z).norm() < 1e-9);
        }
    }
}
