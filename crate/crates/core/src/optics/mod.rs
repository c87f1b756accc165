//! Imaging channel model: Lambertian line-of-sight gain to the lens aperture,
//! refraction at the lens, projection of each LED onto the PD plane and the
//! overlap of the projected spot with every photodiode.

pub mod polygon;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{
    lens_normal, lens_world_position, pd_world_position, receiver_normal, receiver_plane_axes,
    LensState, Pose, Vec3,
};
use polygon::Point2;

/// Room, luminaire grid and LED emission pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomConfig {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    /// Number of LEDs; a perfect square laid out on a centred grid.
    pub n_t: usize,
    /// Centre-to-centre LED spacing.
    pub d_tx: f64,
    /// Side length of each square luminaire.
    pub d_ts: f64,
    pub led_height: f64,
    /// Half-power semi-angle.
    pub theta_half: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            x_m: 5.0,
            y_m: 5.0,
            z_m: 3.5,
            n_t: 16,
            d_tx: 0.5,
            d_ts: 0.25,
            led_height: 3.5,
            theta_half: 60f64.to_radians(),
        }
    }
}

impl RoomConfig {
    pub fn lambertian_m(&self) -> f64 {
        -(2f64.ln()) / self.theta_half.cos().ln()
    }

    pub fn grid_side(&self) -> usize {
        isqrt(self.n_t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.grid_side().pow(2) != self.n_t {
            return Err(Error::config("room.n_t", "must be a positive perfect square"));
        }
        for (name, v) in [("room.x_m", self.x_m), ("room.y_m", self.y_m), ("room.z_m", self.z_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(self.d_tx > 0.0 && self.d_ts > 0.0) {
            return Err(Error::config("room.d_tx", "LED spacing and size must be positive"));
        }
        let span = (self.grid_side() - 1) as f64 * self.d_tx + self.d_ts;
        if span > self.x_m || span > self.y_m {
            return Err(Error::config("room.d_tx", "LED grid does not fit the room footprint"));
        }
        if !(self.led_height > 0.0 && self.led_height <= self.z_m) {
            return Err(Error::config("room.led_height", "must lie in (0, z_m]"));
        }
        if !(self.theta_half > 0.0 && self.theta_half < PI / 2.0) || self.lambertian_m() <= 0.0 {
            return Err(Error::config("room.theta_half", "must lie in (0, pi/2)"));
        }
        Ok(())
    }

    /// Centre of LED `i`; index runs along x first, then y.
    pub fn led_position(&self, i: usize) -> Vec3 {
        let side = self.grid_side();
        let (row, col) = (i / side, i % side);
        let off = (side as f64 - 1.0) / 2.0;
        Vec3::new(
            self.x_m / 2.0 + (col as f64 - off) * self.d_tx,
            self.y_m / 2.0 + (row as f64 - off) * self.d_tx,
            self.led_height,
        )
    }

    pub fn led_positions(&self) -> Vec<Vec3> {
        (0..self.n_t).map(|i| self.led_position(i)).collect()
    }

    /// Corners A, B, C, D of LED `i` in the order (−,−), (−,+), (+,+), (+,−).
    pub fn led_corners(&self, i: usize) -> [Vec3; 4] {
        let c = self.led_position(i);
        let h = self.d_ts / 2.0;
        [
            Vec3::new(c.x - h, c.y - h, c.z),
            Vec3::new(c.x - h, c.y + h, c.z),
            Vec3::new(c.x + h, c.y + h, c.z),
            Vec3::new(c.x + h, c.y - h, c.z),
        ]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0.0..=self.x_m).contains(&p.x)
            && (0.0..=self.y_m).contains(&p.y)
            && (0.0..=self.z_m).contains(&p.z)
    }
}

/// How the lens aperture area is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aperture {
    /// `A_L = π (k_η f)²`.
    FocalScaled,
    /// Constant aperture area in m².
    Fixed(f64),
}

/// How the light spot of an LED is formed on the PD plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpotModel {
    /// Corner chief rays through the lens centre, crossed with the PD plane.
    ChiefRay,
    /// Chief-ray spot widened by the geometric defocus blur of the aperture
    /// when the PD plane is not at the image plane.
    Defocused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    /// Number of PDs; a perfect square grid.
    pub n_r: usize,
    /// PD side length.
    pub d_rs: f64,
    /// PD centre-to-centre pitch.
    pub d_rx: f64,
    /// Field-of-view half-angle.
    pub phi_fov: f64,
    /// PD responsivity in A/W.
    pub responsivity: f64,
    /// Lens radius per unit focal length.
    pub k_eta: f64,
    /// Relative refractive index of the lens liquid.
    pub n_l: f64,
    /// Lens centre offset along the receiver normal.
    pub d_len: f64,
    pub aperture: Aperture,
    pub spot_model: SpotModel,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            n_r: 16,
            d_rs: 0.0045,
            d_rx: 0.005,
            phi_fov: 90f64.to_radians(),
            responsivity: 0.75,
            k_eta: 0.1,
            n_l: 1.5,
            d_len: 0.02,
            aperture: Aperture::FocalScaled,
            spot_model: SpotModel::Defocused,
        }
    }
}

impl ReceiverConfig {
    pub fn grid_side(&self) -> usize {
        isqrt(self.n_r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.grid_side().pow(2) != self.n_r {
            return Err(Error::config("receiver.n_r", "must be a positive perfect square"));
        }
        if !(self.d_rs > 0.0 && self.d_rs <= self.d_rx) {
            return Err(Error::config("receiver.d_rs", "must satisfy 0 < d_rs <= d_rx"));
        }
        if !(self.n_l > 1.0) {
            return Err(Error::config("receiver.n_l", "must exceed 1"));
        }
        if !(self.d_len > 0.0 && self.d_len.is_finite()) {
            return Err(Error::config("receiver.d_len", "must be positive"));
        }
        if !(self.phi_fov > 0.0) {
            return Err(Error::config("receiver.phi_fov", "must be positive"));
        }
        if !(self.responsivity > 0.0 && self.k_eta > 0.0) {
            return Err(Error::config("receiver.responsivity", "responsivity and k_eta must be positive"));
        }
        if let Aperture::Fixed(a) = self.aperture {
            if !(a > 0.0) {
                return Err(Error::config("receiver.aperture", "fixed area must be positive"));
            }
        }
        Ok(())
    }

    /// Centre of PD `j` in receiver-plane coordinates; row-major along X'.
    pub fn pd_center(&self, j: usize) -> Point2 {
        let side = self.grid_side();
        let (row, col) = (j / side, j % side);
        let off = (side as f64 - 1.0) / 2.0;
        [(col as f64 - off) * self.d_rx, (row as f64 - off) * self.d_rx]
    }

    /// PD `j` as a quad in receiver-plane coordinates.
    pub fn pd_square(&self, j: usize) -> [Point2; 4] {
        polygon::square(self.pd_center(j), self.d_rs)
    }

    /// Half-width of the square region covered by the PD array.
    pub fn array_half_extent(&self) -> f64 {
        let side = self.grid_side() as f64;
        0.5 * ((side - 1.0) * self.d_rx + self.d_rs)
    }

    pub fn aperture_area(&self, f: f64) -> f64 {
        match self.aperture {
            Aperture::FocalScaled => PI * (self.k_eta * f).powi(2),
            Aperture::Fixed(a) => a,
        }
    }

    /// PD `j` as a world-space quad for a given pose.
    pub fn pd_quad(&self, pose: &Pose, j: usize) -> Quad {
        let sq = self.pd_square(j);
        Quad(sq.map(|p| pd_world_position(pose, Vec3::new(p[0], p[1], 0.0))))
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Four ordered coplanar vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad(pub [Vec3; 4]);

impl Quad {
    pub fn centroid(&self) -> Vec3 {
        let s = self.0.iter().fold(Vec3::ZERO, |a, &b| a + b);
        s * 0.25
    }

    /// Normal of the best-fit plane (Newell's method); `None` if degenerate.
    pub fn plane_normal(&self) -> Option<Vec3> {
        let v = &self.0;
        let mut n = Vec3::ZERO;
        for i in 0..4 {
            let a = v[i];
            let b = v[(i + 1) % 4];
            n = n + Vec3::new(
                (a.y - b.y) * (a.z + b.z),
                (a.z - b.z) * (a.x + b.x),
                (a.x - b.x) * (a.y + b.y),
            );
        }
        n.normalized()
    }
}

/// An orthonormal 2-D basis of a plane in room space.
#[derive(Debug, Clone, Copy)]
pub struct PlaneFrame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

impl PlaneFrame {
    /// The PD plane of the receiver at `pose`, spanned by the X' and Y' axes.
    pub fn receiver(pose: &Pose) -> PlaneFrame {
        let (u, v) = receiver_plane_axes(pose);
        PlaneFrame {
            origin: pose.position,
            u,
            v,
        }
    }

    /// Plane through a quad's centroid; falls back to the XY plane for fully
    /// degenerate input.
    pub fn of_quad(q: &Quad) -> PlaneFrame {
        let origin = q.centroid();
        let n = q.plane_normal().unwrap_or(Vec3::Z);
        let seed = if n.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let u = (seed - n * seed.dot(n)).normalized().unwrap_or(Vec3::X);
        let v = n.cross(u);
        PlaneFrame { origin, u, v }
    }

    pub fn project(&self, p: Vec3) -> Point2 {
        let d = p - self.origin;
        [d.dot(self.u), d.dot(self.v)]
    }

    pub fn project_quad(&self, q: &Quad) -> [Point2; 4] {
        q.0.map(|p| self.project(p))
    }
}

/// Spot area: the shoelace sum of the quad's vertex cross products, taken
/// about the centroid in the quad's own plane.
pub fn quad_area(q: &Quad) -> f64 {
    let frame = PlaneFrame::of_quad(q);
    polygon::area(&frame.project_quad(q))
}

/// Overlap area between two coplanar quads; the second one must be convex.
pub fn intersection_area(spot: &Quad, pd: &Quad) -> f64 {
    let frame = PlaneFrame::of_quad(pd);
    polygon::intersection_area(&frame.project_quad(spot), &frame.project_quad(pd))
}

/// Photodiode gains, `N_r × N_t`, row `j` = PD, column `i` = LED.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n_r: usize,
    n_t: usize,
    data: Vec<f64>,
}

impl ChannelMatrix {
    pub fn zeros(n_r: usize, n_t: usize) -> Self {
        ChannelMatrix {
            n_r,
            n_t,
            data: vec![0.0; n_r * n_t],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_r = rows.len();
        let n_t = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_r * n_t);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n_t {
                return Err(Error::Dimension {
                    expected: n_t,
                    got: row.len(),
                });
            }
            for &v in row {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("H[{j}]"), "entries must be finite and non-negative"));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(ChannelMatrix { n_r, n_t, data })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.n_t + i]
    }

    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.data[j * self.n_t + i] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_t..(j + 1) * self.n_t]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_r).map(|j| self.get(j, i)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, s: f64) -> ChannelMatrix {
        ChannelMatrix {
            n_r: self.n_r,
            n_t: self.n_t,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// `H · x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_t {
            return Err(Error::Dimension {
                expected: self.n_t,
                got: x.len(),
            });
        }
        Ok((0..self.n_r)
            .map(|j| self.row(j).iter().zip(x).map(|(h, v)| h * v).sum())
            .collect())
    }

    /// Reorders PD rows: row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> ChannelMatrix {
        let mut out = ChannelMatrix::zeros(self.n_r, self.n_t);
        for (k, &j) in perm.iter().enumerate() {
            out.data[k * self.n_t..(k + 1) * self.n_t].copy_from_slice(self.row(j));
        }
        out
    }
}

/// Angles and distance from the lens centre to LED `i`.
#[derive(Debug, Clone, Copy)]
pub struct LosGeometry {
    pub distance: f64,
    /// Unit vector from the lens centre toward the LED.
    pub direction: Vec3,
    pub cos_irradiance: f64,
    pub cos_incidence: f64,
}

pub fn los_geometry(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
) -> Result<LosGeometry> {
    let p_len = lens_world_position(pose, lens);
    let delta = room.led_position(led_index) - p_len;
    let distance = delta.norm();
    if distance == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let direction = delta * (1.0 / distance);
    Ok(LosGeometry {
        distance,
        direction,
        cos_irradiance: direction.z,
        cos_incidence: direction.dot(lens_normal(pose, lens)),
    })
}

/// Lambertian LoS gain from LED `i` to the lens aperture; zero outside the
/// field of view or when the LED is behind the lens.
pub fn los_gain(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> Result<f64> {
    let g = los_geometry(led_index, pose, lens, room)?;
    if g.cos_incidence <= 0.0 || g.cos_irradiance <= 0.0 {
        return Ok(0.0);
    }
    let incidence = g.cos_incidence.min(1.0).acos();
    if incidence > rx.phi_fov {
        return Ok(0.0);
    }
    let m = room.lambertian_m();
    let area = rx.aperture_area(lens.f);
    Ok((m + 1.0) * area / (2.0 * PI * g.distance * g.distance)
        * g.cos_irradiance.powf(m)
        * g.cos_incidence)
}

/// Closed-form LoS gain written in terms of the lens height below the LED
/// plane; equals [`los_gain`] when the aperture is `π (k_η f)²` and the
/// distance exponent is read as `m + 3` on `‖P_i − P_len‖`.
pub fn los_gain_closed_form(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> Result<f64> {
    let g = los_geometry(led_index, pose, lens, room)?;
    if g.cos_incidence <= 0.0 || g.cos_irradiance <= 0.0 || g.cos_incidence.min(1.0).acos() > rx.phi_fov {
        return Ok(0.0);
    }
    let m = room.lambertian_m();
    let k_los = (m + 1.0) * rx.k_eta * rx.k_eta / 2.0;
    let height = room.led_position(led_index).z - pose.position.z - lens.d_len * pose.phi_r.cos();
    Ok(k_los * lens.f * lens.f * height.powf(m) / g.distance.powf(m + 2.0) * g.cos_incidence)
}

/// Refracts the direction toward a source through a surface with unit
/// normal `normal` and relative index `n_l`. Returns the propagation
/// direction of the refracted ray (pointing into the lens).
pub fn refract(incident: Vec3, normal: Vec3, n_l: f64) -> Result<Vec3> {
    let c = normal.cross(incident);
    let arg = 1.0 - c.dot(c) / (n_l * n_l);
    if arg < 0.0 {
        return Err(Error::TotalInternalReflection(arg));
    }
    Ok(normal.cross(c) * (1.0 / n_l) - normal * arg.sqrt())
}

/// Where the ray `origin + λ·dir` meets the PD plane at `pose`.
fn cross_pd_plane(origin: Vec3, dir: Vec3, pose: &Pose) -> Result<Vec3> {
    let n = receiver_normal(pose);
    let den = dir.dot(n);
    if den.abs() < 1e-12 {
        return Err(Error::ParallelRay);
    }
    let lambda = (pose.position - origin).dot(n) / den;
    if lambda <= 0.0 {
        return Err(Error::RayMissesPlane);
    }
    Ok(origin + dir * lambda)
}

/// Chief-ray image of LED `i`'s four corners on the PD plane.
pub fn project_spot(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> Result<Quad> {
    let p_len = lens_world_position(pose, lens);
    let n_len = lens_normal(pose, lens);
    let corners = room.led_corners(led_index);
    let mut out = [Vec3::ZERO; 4];
    for (k, q) in corners.iter().enumerate() {
        let dir = (*q - p_len).normalized().ok_or(Error::ZeroDistance)?;
        let refracted = refract(dir, n_len, rx.n_l)?;
        out[k] = cross_pd_plane(p_len, refracted, pose)?;
    }
    Ok(Quad(out))
}

/// Paraxial image of each LED corner on the image plane perpendicular to the
/// lens axis: `P_IP − m·(q − P_len)` resolved per vertex, with the lateral
/// part scaled by the magnification `m = f/(f + d)`.
pub fn image_points(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
) -> Result<[Vec3; 4]> {
    let p_len = lens_world_position(pose, lens);
    let n_len = lens_normal(pose, lens);
    let mut out = [Vec3::ZERO; 4];
    for (k, q) in room.led_corners(led_index).iter().enumerate() {
        let to_q = *q - p_len;
        let axial = to_q.dot(n_len);
        if axial <= 0.0 {
            return Err(Error::RayMissesPlane);
        }
        out[k] = p_len - to_q * magnification(lens.f, axial);
    }
    Ok(out)
}

/// Thin-lens magnification for an object at axial distance `object`.
pub fn magnification(f: f64, object: f64) -> f64 {
    f / (f + object)
}

/// Axial distance behind the lens at which an object at axial distance
/// `object` comes to focus.
pub fn image_distance(f: f64, object: f64) -> f64 {
    object * magnification(f, object)
}

/// Spot polygon for LED `i` in receiver-plane coordinates, or `None` when
/// the LED produces no spot.
pub fn spot_polygon(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
    frame: &PlaneFrame,
) -> Option<Vec<Point2>> {
    match rx.spot_model {
        SpotModel::ChiefRay => {
            let quad = project_spot(led_index, pose, lens, room, rx).ok()?;
            Some(frame.project_quad(&quad).to_vec())
        }
        SpotModel::Defocused => {
            let quad = project_spot(led_index, pose, lens, room, rx).ok()?;
            let blur = defocus_radius(led_index, pose, lens, room, rx).ok()?;
            Some(dilate(&frame.project_quad(&quad), blur))
        }
    }
}

/// Radius of the geometric blur disc on the PD plane: the aperture cone
/// converging on the image point, cut by the PD plane.
pub fn defocus_radius(
    led_index: usize,
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> Result<f64> {
    let p_len = lens_world_position(pose, lens);
    let n_len = lens_normal(pose, lens);
    let to_led = room.led_position(led_index) - p_len;
    let dir = to_led.normalized().ok_or(Error::ZeroDistance)?;
    let refracted = refract(dir, n_len, rx.n_l)?;
    let hit = cross_pd_plane(p_len, refracted, pose)?;
    let along = (hit - p_len).norm();
    let axial_img = image_distance(lens.f, to_led.dot(n_len));
    let cos_ref = (-refracted.dot(n_len)).max(1e-12);
    let img_along = axial_img / cos_ref;
    let aperture_radius = rx.aperture_area(lens.f).sqrt() / PI.sqrt();
    Ok(aperture_radius * (along - img_along).abs() / img_along)
}

const BLUR_SIDES: usize = 16;

/// Convex hull of the Minkowski sum of a quad and a regular polygon
/// approximating a disc of radius `r`.
fn dilate(pts: &[Point2; 4], r: f64) -> Vec<Point2> {
    if r <= 0.0 {
        return pts.to_vec();
    }
    let mut cloud = Vec::with_capacity(4 * BLUR_SIDES);
    for p in pts {
        for k in 0..BLUR_SIDES {
            let a = 2.0 * PI * k as f64 / BLUR_SIDES as f64;
            cloud.push([p[0] + r * a.cos(), p[1] + r * a.sin()]);
        }
    }
    convex_hull(cloud)
}

fn convex_hull(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let turn = |o: Point2, a: Point2, b: Point2| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Per-LED spot diagnostics used by the channel builder and the renderer.
#[derive(Debug, Clone)]
pub struct SpotReport {
    pub led: usize,
    pub los_gain: f64,
    /// Spot outline in receiver-plane coordinates; empty when absent.
    pub outline: Vec<Point2>,
    pub area: f64,
    /// Fraction of the spot landing on each PD.
    pub pd_fractions: Vec<f64>,
}

impl SpotReport {
    pub fn captured_fraction(&self) -> f64 {
        self.pd_fractions.iter().sum()
    }

    /// True when part of the spot falls outside the PD array's bounding square.
    pub fn clipped_by_array(&self, rx: &ReceiverConfig) -> bool {
        let h = rx.array_half_extent();
        self.outline
            .iter()
            .any(|p| p[0].abs() > h || p[1].abs() > h)
    }
}

pub fn spot_reports(
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> Vec<SpotReport> {
    let frame = PlaneFrame::receiver(pose);
    let pds: Vec<[Point2; 4]> = (0..rx.n_r).map(|j| rx.pd_square(j)).collect();
    (0..room.n_t)
        .map(|i| {
            let gain = los_gain(i, pose, lens, room, rx).unwrap_or(0.0);
            let outline = if gain > 0.0 {
                spot_polygon(i, pose, lens, room, rx, &frame).unwrap_or_default()
            } else {
                Vec::new()
            };
            let area = polygon::area(&outline);
            let pd_fractions = if area > 0.0 && area.is_finite() {
                let (lo, hi) = bounding_box(&outline);
                pds.iter()
                    .map(|sq| {
                        let (a, b) = (sq[0], sq[2]);
                        if b[0] <= lo[0] || a[0] >= hi[0] || b[1] <= lo[1] || a[1] >= hi[1] {
                            0.0
                        } else {
                            polygon::intersection_area(&outline, sq) / area
                        }
                    })
                    .collect()
            } else {
                vec![0.0; rx.n_r]
            };
            SpotReport {
                led: i,
                los_gain: gain,
                outline,
                area,
                pd_fractions,
            }
        })
        .collect()
}

fn bounding_box(pts: &[Point2]) -> (Point2, Point2) {
    pts.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    )
}

/// Imaging channel: `H[j][i] = h_i^LoS · |spot_i ∩ PD_j| / |spot_i|`.
pub fn channel_matrix(
    pose: &Pose,
    lens: &LensState,
    room: &RoomConfig,
    rx: &ReceiverConfig,
) -> ChannelMatrix {
    let mut h = ChannelMatrix::zeros(rx.n_r, room.n_t);
    for rep in spot_reports(pose, lens, room, rx) {
        for (j, frac) in rep.pd_fractions.iter().enumerate() {
            let v = rep.los_gain * frac;
            if v > 0.0 && v.is_finite() {
                h.set(j, rep.led, v);
            }
        }
    }
    h
}
