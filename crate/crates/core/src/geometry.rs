//! Room, receiver and lens coordinate frames.
//!
//! The receiver frame is the room frame rotated by `theta_r` about Z and then
//! by `phi_r` about Y; the lens frame is the receiver frame rotated by
//! `theta_l` about Z' and then `phi_l` about Y'. All angles are radians.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector along `self`; `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(pub [[f64; 3]; 3]);

impl Rot3 {
    pub const IDENTITY: Rot3 = Rot3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Frame rotation about Z by `a` (passive convention).
    pub fn about_z(a: f64) -> Rot3 {
        let (s, c) = a.sin_cos();
        Rot3([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Frame rotation about Y by `a` (passive convention).
    pub fn about_y(a: f64) -> Rot3 {
        let (s, c) = a.sin_cos();
        Rot3([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    }

    /// `Y(phi) · Z(theta)`: rotate about Z first, then about the new Y.
    pub fn z_then_y(theta: f64, phi: f64) -> Rot3 {
        Rot3::about_y(phi).compose(&Rot3::about_z(theta))
    }

    pub fn compose(&self, o: &Rot3) -> Rot3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Rot3(out)
    }

    pub fn transpose(&self) -> Rot3 {
        let m = &self.0;
        Rot3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    /// Inverse of an orthonormal matrix.
    pub fn inverse(&self) -> Rot3 {
        self.transpose()
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest entry of |RᵀR − I|.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().compose(self);
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.0[i][j] - target).abs());
            }
        }
        worst
    }
}

/// Receiver position (centre of the PD plane) and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Azimuth in `[0, 2π)`.
    pub theta_r: f64,
    /// Polar tilt in `[0, π/2]`.
    pub phi_r: f64,
}

impl Pose {
    /// Wraps the azimuth into `[0, 2π)` and rejects polar angles outside
    /// `[0, π/2]`.
    pub fn new(position: Vec3, theta_r: f64, phi_r: f64) -> Result<Pose> {
        if !(position.x.is_finite() && position.y.is_finite() && position.z.is_finite()) {
            return Err(Error::config("pose.position", "non-finite coordinate"));
        }
        if !theta_r.is_finite() {
            return Err(Error::config("pose.theta_r", "non-finite angle"));
        }
        if !(0.0..=FRAC_PI_2).contains(&phi_r) {
            return Err(Error::config(
                "pose.phi_r",
                format!("{phi_r} rad outside [0, pi/2]"),
            ));
        }
        Ok(Pose {
            position,
            theta_r: wrap_angle(theta_r),
            phi_r,
        })
    }

    pub fn upright(position: Vec3) -> Pose {
        Pose {
            position,
            theta_r: 0.0,
            phi_r: 0.0,
        }
    }

    /// Helper for the common degree-valued configuration boundary.
    pub fn from_degrees(position: Vec3, theta_r_deg: f64, phi_r_deg: f64) -> Result<Pose> {
        Pose::new(position, theta_r_deg.to_radians(), phi_r_deg.to_radians())
    }
}

/// Maps any finite angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Focal length, lens angles relative to the receiver frame, and the fixed
/// lens-centre offset along the receiver normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensState {
    pub f: f64,
    pub theta_l: f64,
    pub phi_l: f64,
    pub d_len: f64,
}

impl LensState {
    pub fn new(f: f64, theta_l: f64, phi_l: f64, d_len: f64) -> LensState {
        LensState {
            f,
            theta_l,
            phi_l,
            d_len,
        }
    }

    pub fn from_degrees(f: f64, theta_l_deg: f64, phi_l_deg: f64, d_len: f64) -> LensState {
        LensState::new(f, theta_l_deg.to_radians(), phi_l_deg.to_radians(), d_len)
    }
}

/// `⁰R₁`: room frame to receiver frame.
pub fn receiver_rotation(pose: &Pose) -> Rot3 {
    Rot3::z_then_y(pose.theta_r, pose.phi_r)
}

/// `¹R₂`: receiver frame to lens frame.
pub fn lens_rotation(lens: &LensState) -> Rot3 {
    Rot3::z_then_y(lens.theta_l, lens.phi_l)
}

/// Unit normal of the PD plane in room coordinates.
pub fn receiver_normal(pose: &Pose) -> Vec3 {
    let (st, ct) = pose.theta_r.sin_cos();
    let (sp, cp) = pose.phi_r.sin_cos();
    Vec3::new(ct * sp, st * sp, cp)
}

/// Unit normal of the lens (its optical axis) in room coordinates.
pub fn lens_normal(pose: &Pose, lens: &LensState) -> Vec3 {
    let (str_, ctr) = pose.theta_r.sin_cos();
    let (spr, cpr) = pose.phi_r.sin_cos();
    let (stl, ctl) = lens.theta_l.sin_cos();
    let (spl, cpl) = lens.phi_l.sin_cos();
    Vec3::new(
        ctr * cpr * ctl * spl - str_ * stl * spl + ctr * spr * cpl,
        str_ * cpr * ctl * spl + ctr * stl * spl + str_ * spr * cpl,
        -spr * ctl * spl + cpr * cpl,
    )
}

/// Receiver-frame X' and Y' axes expressed in room coordinates; together
/// with [`receiver_normal`] they span the receiver frame.
pub fn receiver_plane_axes(pose: &Pose) -> (Vec3, Vec3) {
    let inv = receiver_rotation(pose).inverse();
    (inv.apply(Vec3::X), inv.apply(Vec3::Y))
}

/// Room coordinates of a point `(x', y', 0)` in the PD plane.
pub fn pd_world_position(pose: &Pose, pd_local: Vec3) -> Vec3 {
    let (st, ct) = pose.theta_r.sin_cos();
    let (sp, cp) = pose.phi_r.sin_cos();
    let p = pose.position;
    Vec3::new(
        p.x + pd_local.x * ct * cp - pd_local.y * st,
        p.y + pd_local.x * st * cp + pd_local.y * ct,
        p.z - pd_local.x * sp,
    )
}

/// Room coordinates of the lens centre.
pub fn lens_world_position(pose: &Pose, lens: &LensState) -> Vec3 {
    pose.position + receiver_normal(pose) * lens.d_len
}
