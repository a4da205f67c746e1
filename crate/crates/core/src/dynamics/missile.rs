use serde::{Deserialize, Serialize};

use super::gravity::{GravityModel, G_REF};
use super::thrusters::{thruster_wrench, ThrusterCommand, ThrusterTable};
use crate::error::{Result, SimError};
use crate::math::{normalized, quat_rate, rk4, body_to_ref, Mat3, OdeState, Quat, Vec3};

/// Cylinder airframe: height along body `x`, fuel burned from wet to dry mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MassProperties {
    pub height_m: f64,
    pub radius_m: f64,
    pub wet_mass_kg: f64,
    pub dry_mass_kg: f64,
}

impl Default for MassProperties {
    fn default() -> Self {
        MassProperties {
            height_m: 1.0,
            radius_m: 0.25,
            wet_mass_kg: 50.0,
            dry_mass_kg: 25.0,
        }
    }
}

impl MassProperties {
    pub fn fuel_capacity(&self) -> f64 {
        self.wet_mass_kg - self.dry_mass_kg
    }

    /// Principal moments per kilogram; `J(m) = m · diag(unit_inertia)`.
    pub fn unit_inertia(&self) -> Vec3 {
        let r2 = self.radius_m * self.radius_m;
        let transverse = (3.0 * r2 + self.height_m * self.height_m) / 12.0;
        Vec3::new(r2 / 2.0, transverse, transverse)
    }

    pub fn inertia(&self, mass: f64) -> Mat3 {
        Mat3::from_diagonal(&(self.unit_inertia() * mass))
    }

    /// Center-of-mass offset corresponding to a percentage variation along
    /// each body axis: `x` scales with half the height, `y`/`z` with the radius.
    pub fn com_offset_from_percent(&self, percent: &Vec3) -> Vec3 {
        Vec3::new(
            percent.x / 100.0 * self.height_m / 2.0,
            percent.y / 100.0 * self.radius_m,
            percent.z / 100.0 * self.radius_m,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissileState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body-to-engagement-frame attitude.
    pub attitude: Quat,
    pub omega: Vec3,
    pub mass: f64,
    /// Lagged body force, N.
    pub force: Vec3,
    /// Lagged body torque, N·m.
    pub torque: Vec3,
    /// Lagged sum of individual thruster force magnitudes, N.
    pub thrust: f64,
    /// Center-of-mass offset reached when all fuel is spent.
    pub com_offset_full: Vec3,
}

impl MissileState {
    pub fn new(position: Vec3, velocity: Vec3, attitude: Quat, props: &MassProperties) -> Self {
        MissileState {
            position,
            velocity,
            attitude,
            omega: Vec3::zeros(),
            mass: props.wet_mass_kg,
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
            thrust: 0.0,
            com_offset_full: Vec3::zeros(),
        }
    }

    pub fn fuel_used(&self, props: &MassProperties) -> f64 {
        (props.wet_mass_kg - self.mass).clamp(0.0, props.fuel_capacity())
    }

    /// Instantaneous center of mass: the drawn offset scaled by the fraction of
    /// fuel used.
    pub fn r_com(&self, props: &MassProperties) -> Vec3 {
        self.com_offset_full * (self.fuel_used(props) / props.fuel_capacity())
    }

    pub fn inertia(&self, props: &MassProperties) -> Mat3 {
        props.inertia(self.mass)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.attitude.coords.iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.mass.is_finite()
    }
}

impl OdeState for MissileState {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        MissileState {
            position: self.position + rate.position * h,
            velocity: self.velocity + rate.velocity * h,
            attitude: self.attitude.add_scaled(&rate.attitude, h),
            omega: self.omega + rate.omega * h,
            mass: self.mass + rate.mass * h,
            force: self.force + rate.force * h,
            torque: self.torque + rate.torque * h,
            thrust: self.thrust + rate.thrust * h,
            com_offset_full: self.com_offset_full,
        }
    }
}

/// First-order lag toward the commanded value.
pub fn lag_rate<T>(current: T, commanded: T, tau: f64) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    (commanded - current) * (1.0 / tau)
}

/// `ω̇` from `J ω̇ = −ω × (J ω) − J̇ ω + L` for a diagonal inertia tensor.
fn euler_rate_diag(omega: &Vec3, j: &Vec3, j_dot: &Vec3, torque: &Vec3) -> Vec3 {
    let h = omega.component_mul(j);
    (torque - omega.cross(&h) - j_dot.component_mul(omega)).component_div(j)
}

/// One RK4 step of the thruster ignition lag on force and torque.
pub fn lag_step(force: &Vec3, torque: &Vec3, force_cmd: &Vec3, torque_cmd: &Vec3, tau_u: f64, dt: f64) -> (Vec3, Vec3) {
    let f = rk4(force, dt, |_, f| lag_rate(*f, *force_cmd, tau_u));
    let l = rk4(torque, dt, |_, l| lag_rate(*l, *torque_cmd, tau_u));
    (f, l)
}

/// One RK4 step of the Euler rotational equations with a general inertia
/// tensor held constant over the step.
pub fn euler_rotation_step(omega: &Vec3, j: &Mat3, j_dot: &Mat3, torque: &Vec3, dt: f64) -> Result<Vec3> {
    let j_inv = j.try_inverse().ok_or(SimError::SingularInertia)?;
    Ok(rk4(omega, dt, |_, w| j_inv * (torque - w.cross(&(j * w)) - j_dot * w)))
}

/// One RK4 step of the quaternion kinematics, renormalized.
pub fn quaternion_step(q: &Quat, omega: &Vec3, dt: f64) -> Quat {
    normalized(&rk4(q, dt, |_, q| quat_rate(q, omega)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationalStep {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
    pub fuel_exhausted: bool,
}

/// One RK4 step of the translational equations and mass flow. `thrust_sum` is
/// the summed magnitude of the individual thruster forces.
#[allow(clippy::too_many_arguments)]
pub fn translational_step(
    position: &Vec3,
    velocity: &Vec3,
    mass: f64,
    force_body: &Vec3,
    thrust_sum: f64,
    attitude: &Quat,
    gravity: &GravityModel,
    isp: f64,
    dry_mass: f64,
    dt: f64,
) -> TranslationalStep {
    let force_ref = body_to_ref(attitude) * force_body;
    let m_dot = -thrust_sum / (isp * G_REF);
    // (r, v, m) packed as two vectors; the mass rides in a scalar.
    let (mut r, mut v, mut m) = (*position, *velocity, mass);
    let rate = |r: &Vec3, v: &Vec3, m: f64| (*v, force_ref / m + gravity.accel(r), m_dot);
    let half = 0.5 * dt;
    let k1 = rate(&r, &v, m);
    let k2 = rate(&(r + k1.0 * half), &(v + k1.1 * half), m + k1.2 * half);
    let k3 = rate(&(r + k2.0 * half), &(v + k2.1 * half), m + k2.2 * half);
    let k4 = rate(&(r + k3.0 * dt), &(v + k3.1 * dt), m + k3.2 * dt);
    r += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
    v += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
    m += (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2) * (dt / 6.0);
    TranslationalStep {
        position: r,
        velocity: v,
        mass: m,
        fuel_exhausted: m <= dry_mass,
    }
}

/// Everything needed to advance the missile.
#[derive(Debug, Clone, PartialEq)]
pub struct MissileModel {
    pub props: MassProperties,
    pub thrusters: ThrusterTable,
    pub isp_s: f64,
    pub tau_u_s: f64,
    pub gravity: GravityModel,
}

impl Default for MissileModel {
    fn default() -> Self {
        MissileModel {
            props: MassProperties::default(),
            thrusters: ThrusterTable::default(),
            isp_s: 250.0,
            tau_u_s: 0.020,
            gravity: GravityModel::default(),
        }
    }
}

impl MissileModel {
    pub fn validate(&self) -> Result<()> {
        let j = self.props.unit_inertia();
        if j.iter().any(|&x| !(x > 0.0)) {
            return Err(SimError::SingularInertia);
        }
        if !(self.isp_s > 0.0) || !(self.tau_u_s > 0.0) {
            return Err(SimError::Config("isp and tau_u must be positive".into()));
        }
        if !(self.props.wet_mass_kg > self.props.dry_mass_kg) {
            return Err(SimError::Config("wet mass must exceed dry mass".into()));
        }
        Ok(())
    }

    /// Full state derivative with the commanded wrench held fixed.
    pub fn rate(&self, s: &MissileState, force_cmd: &Vec3, torque_cmd: &Vec3, thrust_cmd: f64) -> MissileState {
        let unit_j = self.props.unit_inertia();
        let thrust = s.thrust.max(0.0);
        let m_dot = -thrust / (self.isp_s * G_REF);
        let j = unit_j * s.mass;
        let j_dot = unit_j * m_dot;
        let accel = body_to_ref(&s.attitude) * s.force / s.mass + self.gravity.accel(&s.position);
        MissileState {
            position: s.velocity,
            velocity: accel,
            attitude: quat_rate(&s.attitude, &s.omega),
            omega: euler_rate_diag(&s.omega, &j, &j_dot, &s.torque),
            mass: m_dot,
            force: lag_rate(s.force, *force_cmd, self.tau_u_s),
            torque: lag_rate(s.torque, *torque_cmd, self.tau_u_s),
            thrust: lag_rate(s.thrust, thrust_cmd, self.tau_u_s),
            com_offset_full: Vec3::zeros(),
        }
    }

    /// Advance the coupled rigid-body state by one RK4 step. The commanded
    /// wrench is evaluated about the center of mass at the start of the step;
    /// once the dry mass is reached the thrusters no longer ignite.
    pub fn step(&self, s: &MissileState, commands: &ThrusterCommand, dt: f64) -> MissileState {
        let (force_cmd, torque_cmd, thrust_cmd) = if s.mass > self.props.dry_mass_kg {
            let w = thruster_wrench(commands, &self.thrusters, &s.r_com(&self.props));
            (w.force, w.torque, self.thrusters.total_thrust(commands))
        } else {
            (Vec3::zeros(), Vec3::zeros(), 0.0)
        };
        let mut next = rk4(s, dt, |_, y| self.rate(y, &force_cmd, &torque_cmd, thrust_cmd));
        next.attitude = normalized(&next.attitude);
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::identity_quat;
    use nalgebra::UnitQuaternion;
    use std::f64::consts::PI;

    #[test]
    fn lag_fixed_point() {
        let f = Vec3::new(1.0, -2.0, 3.0);
        let (f2, l2) = lag_step(&f, &f, &f, &f, 0.02, 0.02);
        assert_eq!(f2, f);
        assert_eq!(l2, f);
    }

    #[test]
    fn lag_reaches_one_time_constant() {
        let target = Vec3::new(0.0, 5000.0, 0.0);
        let (mut f, mut l) = (Vec3::zeros(), Vec3::zeros());
        let dt = 0.02 / 200.0;
        for _ in 0..200 {
            (f, l) = lag_step(&f, &l, &target, &target, 0.02, dt);
        }
        let expected = (1.0 - (-1.0f64).exp()) * 5000.0;
        assert!(((f.y - expected) / expected).abs() < 1e-6);
        assert_eq!(f, l);
    }

    #[test]
    fn lag_decays() {
        let f0 = Vec3::new(100.0, 0.0, 0.0);
        let (mut f, mut l) = (f0, f0);
        for _ in 0..500 {
            (f, l) = lag_step(&f, &l, &Vec3::zeros(), &Vec3::zeros(), 0.02, 0.0002);
        }
        assert!(f.norm() < 0.01 * f0.norm());
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let j = MassProperties::default().inertia(40.0);
        let w = Vec3::new(0.0, 3.0, 0.0);
        let w2 = euler_rotation_step(&w, &j, &Mat3::zeros(), &Vec3::zeros(), 0.02).unwrap();
        assert!((w2 - w).norm() < 1e-15);
    }

    #[test]
    fn spherical_body_keeps_rate() {
        let j = Mat3::identity() * 2.0;
        let w = Vec3::new(0.3, -1.0, 2.0);
        let w2 = euler_rotation_step(&w, &j, &Mat3::zeros(), &Vec3::zeros(), 0.02).unwrap();
        assert!((w2 - w).norm() < 1e-15);
    }

    #[test]
    fn asymmetric_body_conserves_momentum_magnitude() {
        let j = Mat3::from_diagonal(&Vec3::new(1.0, 2.5, 4.0));
        let mut w = Vec3::new(0.4, 1.2, -0.7);
        let h0 = (j * w).norm();
        for _ in 0..50 {
            let w2 = euler_rotation_step(&w, &j, &Mat3::zeros(), &Vec3::zeros(), 0.02).unwrap();
            let rel = ((j * w2).norm() - (j * w).norm()).abs() / h0;
            assert!(rel < 1e-8, "per-step drift {rel}");
            w = w2;
        }
    }

    #[test]
    fn singular_inertia_rejected() {
        let r = euler_rotation_step(&Vec3::x(), &Mat3::zeros(), &Mat3::zeros(), &Vec3::zeros(), 0.02);
        assert!(matches!(r, Err(SimError::SingularInertia)));
    }

    #[test]
    fn quaternion_zero_rate_is_identity_map() {
        let q = UnitQuaternion::from_euler_angles(0.1, -0.4, 1.2).into_inner();
        assert_eq!(quaternion_step(&q, &Vec3::zeros(), 0.02), q);
    }

    #[test]
    fn quaternion_half_turn_about_x() {
        let mut q = identity_quat();
        for _ in 0..50 {
            q = quaternion_step(&q, &Vec3::new(PI, 0.0, 0.0), 0.02);
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
        let expected = [0.0, 1.0, 0.0, 0.0];
        let got = [q.w, q.i, q.j, q.k];
        for (a, b) in got.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{got:?}");
        }
    }

    #[test]
    fn divert_mass_flow() {
        let s = translational_step(
            &Vec3::zeros(),
            &Vec3::zeros(),
            50.0,
            &Vec3::new(0.0, 5000.0, 0.0),
            5000.0,
            &identity_quat(),
            &GravityModel::Off,
            250.0,
            25.0,
            1e-3,
        );
        let m_dot = (50.0 - s.mass) / 1e-3;
        assert!((m_dot - 5000.0 / (250.0 * 9.81)).abs() < 1e-6);
        assert!((m_dot - 2.0387).abs() < 1e-4);
    }

    #[test]
    fn divert_acceleration() {
        let dt = 1e-6;
        let s = translational_step(
            &Vec3::zeros(),
            &Vec3::zeros(),
            50.0,
            &Vec3::new(0.0, 5000.0, 0.0),
            0.0,
            &identity_quat(),
            &GravityModel::Off,
            250.0,
            25.0,
            dt,
        );
        assert!((s.velocity / dt - Vec3::new(0.0, 100.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn coasting_is_straight_line() {
        let v = Vec3::new(3000.0, 10.0, -5.0);
        let s = translational_step(
            &Vec3::zeros(),
            &v,
            50.0,
            &Vec3::zeros(),
            0.0,
            &identity_quat(),
            &GravityModel::Off,
            250.0,
            25.0,
            0.02,
        );
        assert_eq!(s.velocity, v);
        assert!((s.position - v * 0.02).norm() < 1e-12);
        assert_eq!(s.mass, 50.0);
        assert!(!s.fuel_exhausted);
    }

    #[test]
    fn exhaustion_flagged() {
        let s = translational_step(
            &Vec3::zeros(),
            &Vec3::zeros(),
            25.001,
            &Vec3::new(0.0, 5000.0, 0.0),
            5000.0,
            &identity_quat(),
            &GravityModel::Off,
            250.0,
            25.0,
            0.02,
        );
        assert!(s.fuel_exhausted);
    }

    #[test]
    fn coupled_step_matches_components_when_decoupled() {
        // Torque-free spin about a principal axis at constant mass.
        let model = MissileModel {
            gravity: GravityModel::Off,
            ..MissileModel::default()
        };
        let mut s = MissileState::new(Vec3::zeros(), Vec3::new(3000.0, 0.0, 0.0), identity_quat(), &model.props);
        s.omega = Vec3::new(1.0, 0.0, 0.0);
        let next = model.step(&s, &[false; 16], 0.02);
        let q = quaternion_step(&s.attitude, &s.omega, 0.02);
        assert!((next.attitude.coords - q.coords).norm() < 1e-14);
        assert!((next.position - Vec3::new(60.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn inertia_matches_cylinder() {
        let j = MassProperties::default().inertia(50.0);
        assert!((j[(0, 0)] - 50.0 * 0.0625 / 2.0).abs() < 1e-12);
        assert!((j[(1, 1)] - 50.0 * (3.0 * 0.0625 + 1.0) / 12.0).abs() < 1e-12);
        assert_eq!(j[(1, 1)], j[(2, 2)]);
    }
}
