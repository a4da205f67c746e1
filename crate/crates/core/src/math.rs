//! Small numerical kit shared by the simulator and the navigation filter:
//! a generic fixed-step RK4 and the quaternion attitude helpers.
//!
//! Attitude quaternions are scalar-first Hamilton quaternions that rotate
//! body-frame vectors into the reference frame, so the kinematics read
//! `q̇ = ½ q ⊗ (0, ω_B)` and the reference-to-body direction cosine matrix is
//! `C_BN(q) = R(q)ᵀ`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;

/// A state that RK4 can advance: `self + h * rate`.
pub trait OdeState: Sized {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self;
}

impl OdeState for f64 {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + h * rate
    }
}

impl OdeState for Vec3 {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + rate * h
    }
}

impl OdeState for Quat {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        Quaternion::from(self.coords + rate.coords * h)
    }
}

/// One classical fourth-order Runge-Kutta step of `ẏ = f(t, y)` where `t` is
/// measured from the start of the step.
pub fn rk4<S: OdeState>(y: &S, dt: f64, f: impl Fn(f64, &S) -> S) -> S {
    let half = 0.5 * dt;
    let k1 = f(0.0, y);
    let k2 = f(half, &y.add_scaled(&k1, half));
    let k3 = f(half, &y.add_scaled(&k2, half));
    let k4 = f(dt, &y.add_scaled(&k3, dt));
    let y = y.add_scaled(&k1, dt / 6.0);
    let y = y.add_scaled(&k2, dt / 3.0);
    let y = y.add_scaled(&k3, dt / 3.0);
    y.add_scaled(&k4, dt / 6.0)
}

pub fn identity_quat() -> Quat {
    Quaternion::new(1.0, 0.0, 0.0, 0.0)
}

/// `q̇ = ½ q ⊗ (0, ω)` with `ω` expressed in the body frame.
pub fn quat_rate(q: &Quat, omega: &Vec3) -> Quat {
    (q * Quaternion::from_imag(*omega)) * 0.5
}

pub fn normalized(q: &Quat) -> Quat {
    let n = q.norm();
    if n > 0.0 {
        q / n
    } else {
        identity_quat()
    }
}

/// Body-to-reference rotation matrix `R(q)`.
pub fn body_to_ref(q: &Quat) -> Mat3 {
    UnitQuaternion::new_unchecked(normalized(q)).to_rotation_matrix().into_inner()
}

/// Reference-to-body direction cosine matrix `C_BN(q)`.
pub fn dcm_ref_to_body(q: &Quat) -> Mat3 {
    body_to_ref(q).transpose()
}

/// Rotation angle between two attitudes, rad.
pub fn attitude_angle(a: &Quat, b: &Quat) -> f64 {
    let d = normalized(a).conjugate() * normalized(b);
    2.0 * d.imag().norm().atan2(d.w.abs())
}

/// Quaternion rotating body `x` onto the unit vector `dir` by the shortest arc.
pub fn boresight_quat(dir: &Vec3) -> Quat {
    UnitQuaternion::rotation_between(&Vec3::x(), dir)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI))
        .into_inner()
}

/// Rotate `v` by `angle` about a unit axis perpendicular to it. `clock` picks
/// the axis within the perpendicular plane.
pub fn tilt(v: &Vec3, angle: f64, clock: f64) -> Vec3 {
    let n = v.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let axis = e1 * clock.cos() + e2 * clock.sin();
    let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
    rot * v
}
