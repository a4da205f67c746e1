//! Engagement initial conditions and target maneuvers.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{GravityModel, MassProperties, MissileState, TargetState, G_REF};
use crate::error::{Result, SimError};
use crate::math::{boresight_quat, rk4, tilt, OdeState, Vec3};
use crate::seeker::uniform;

/// Sampling bounds for one episode. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub range_m: [f64; 2],
    pub missile_speed_mps: f64,
    pub target_speed_mps: f64,
    pub theta_deg: [f64; 2],
    pub phi_deg: [f64; 2],
    pub beta_deg: [f64; 2],
    pub alpha_deg: [f64; 2],
    pub heading_error_deg: [f64; 2],
    pub attitude_error_deg: [f64; 2],
    pub target_accel_mps2: [f64; 2],
    pub bang_duration_s: [f64; 2],
    pub bang_start_s: [f64; 2],
    pub weave_period_s: [f64; 2],
    pub weave_offset_s: [f64; 2],
    pub com_variation_pct: [f64; 2],
    /// Disable to fly a non-maneuvering target.
    pub maneuvers: bool,
    /// Refine the collision triangle for gravity by shooting.
    pub gravity_correction: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            range_m: [50e3, 55e3],
            missile_speed_mps: 3000.0,
            target_speed_mps: 4000.0,
            theta_deg: [80.0, 100.0],
            phi_deg: [-10.0, 10.0],
            beta_deg: [-10.0, 10.0],
            alpha_deg: [-10.0, 10.0],
            heading_error_deg: [0.0, 5.0],
            attitude_error_deg: [0.0, 5.0],
            target_accel_mps2: [0.0, 5.0 * G_REF],
            bang_duration_s: [1.0, 4.0],
            bang_start_s: [0.0, 6.0],
            weave_period_s: [1.0, 5.0],
            weave_offset_s: [1.0, 5.0],
            com_variation_pct: [-2.5, 2.5],
            maneuvers: true,
            gravity_correction: true,
        }
    }
}

impl ScenarioConfig {
    /// No heading/attitude errors, no maneuvers, no center-of-mass shift.
    pub fn nominal(self) -> Self {
        ScenarioConfig {
            heading_error_deg: [0.0, 0.0],
            attitude_error_deg: [0.0, 0.0],
            com_variation_pct: [0.0, 0.0],
            maneuvers: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("range_m", self.range_m),
            ("theta_deg", self.theta_deg),
            ("phi_deg", self.phi_deg),
            ("beta_deg", self.beta_deg),
            ("alpha_deg", self.alpha_deg),
            ("heading_error_deg", self.heading_error_deg),
            ("attitude_error_deg", self.attitude_error_deg),
            ("target_accel_mps2", self.target_accel_mps2),
            ("bang_duration_s", self.bang_duration_s),
            ("bang_start_s", self.bang_start_s),
            ("weave_period_s", self.weave_period_s),
            ("weave_offset_s", self.weave_offset_s),
            ("com_variation_pct", self.com_variation_pct),
        ];
        for (name, [lo, hi]) in bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SimError::Config(format!("scenario {name} must be finite and ordered")));
            }
        }
        if !(self.range_m[0] > 0.0) {
            return Err(SimError::Config("scenario range must be positive".into()));
        }
        if !(self.missile_speed_mps > 0.0) || !(self.target_speed_mps >= 0.0) {
            return Err(SimError::Config("missile speed must be positive and target speed non-negative".into()));
        }
        if !(self.bang_duration_s[0] > 0.0) || !(self.weave_period_s[0] > 0.0) {
            return Err(SimError::Config("maneuver durations and periods must be positive".into()));
        }
        if self.target_accel_mps2[0] < 0.0 || self.heading_error_deg[0] < 0.0 || self.attitude_error_deg[0] < 0.0 {
            return Err(SimError::Config("error and acceleration magnitudes must be non-negative".into()));
        }
        Ok(())
    }
}

/// Target evasive maneuver, with acceleration orthogonal to target velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Maneuver {
    None,
    /// Constant lateral acceleration from `start`, switching sign every
    /// `duration`. `clock` orients it about the velocity vector.
    BangBang {
        accel: f64,
        start: f64,
        duration: f64,
        clock: f64,
    },
    /// Vertical weave `accel · sin(2π(t + offset)/period)`.
    VerticalS { accel: f64, period: f64, offset: f64 },
}

/// Unit vector perpendicular to `v`, in the plane of `v` and local vertical,
/// rotated about `v` by `clock`.
fn lateral_direction(v: &Vec3, clock: f64) -> Vec3 {
    let n = match v.try_normalize(1e-12) {
        Some(n) => n,
        None => return Vec3::zeros(),
    };
    let up = Vec3::z();
    let mut e1 = up - n * up.dot(&n);
    if e1.norm() < 1e-9 {
        e1 = Vec3::x() - n * n.x;
    }
    let e1 = e1.normalize();
    let e2 = n.cross(&e1);
    e1 * clock.cos() + e2 * clock.sin()
}

/// Commanded target acceleration at time `t` given its current velocity.
pub fn target_accel_command(maneuver: &Maneuver, t: f64, velocity: &Vec3) -> Vec3 {
    match *maneuver {
        Maneuver::None => Vec3::zeros(),
        Maneuver::BangBang {
            accel,
            start,
            duration,
            clock,
        } => {
            if t < start {
                return Vec3::zeros();
            }
            let phase = ((t - start) / duration).floor() as i64;
            let sign = if phase % 2 == 0 { 1.0 } else { -1.0 };
            lateral_direction(velocity, clock) * (sign * accel)
        }
        Maneuver::VerticalS { accel, period, offset } => {
            lateral_direction(velocity, 0.0) * (accel * (TAU * (t + offset) / period).sin())
        }
    }
}

/// Everything drawn at the start of an episode. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub range: f64,
    pub theta: f64,
    pub phi: f64,
    pub beta: f64,
    pub alpha: f64,
    pub heading_error: f64,
    pub heading_clock: f64,
    pub attitude_error: f64,
    pub attitude_clock: f64,
    pub maneuver: Maneuver,
    pub com_variation_pct: [f64; 3],
}

fn uniform_deg(rng: &mut impl Rng, b: [f64; 2]) -> f64 {
    uniform(rng, b).to_radians()
}

pub fn sample_draw(config: &ScenarioConfig, rng: &mut impl Rng) -> ScenarioDraw {
    let range = uniform(rng, config.range_m);
    let theta = uniform_deg(rng, config.theta_deg);
    let phi = uniform_deg(rng, config.phi_deg);
    let beta = uniform_deg(rng, config.beta_deg);
    let alpha = uniform_deg(rng, config.alpha_deg);
    let heading_error = uniform_deg(rng, config.heading_error_deg);
    let heading_clock = rng.random::<f64>() * TAU;
    let attitude_error = uniform_deg(rng, config.attitude_error_deg);
    let attitude_clock = rng.random::<f64>() * TAU;
    let accel = uniform(rng, config.target_accel_mps2);
    let bang = rng.random_bool(0.5);
    let duration = uniform(rng, config.bang_duration_s);
    let start = uniform(rng, config.bang_start_s);
    let clock = rng.random::<f64>() * TAU;
    let period = uniform(rng, config.weave_period_s);
    let offset = uniform(rng, config.weave_offset_s);
    let com_variation_pct = std::array::from_fn(|_| uniform(rng, config.com_variation_pct));
    let maneuver = if !config.maneuvers {
        Maneuver::None
    } else if bang {
        Maneuver::BangBang {
            accel,
            start,
            duration,
            clock,
        }
    } else {
        Maneuver::VerticalS { accel, period, offset }
    };
    ScenarioDraw {
        range,
        theta,
        phi,
        beta,
        alpha,
        heading_error,
        heading_clock,
        attitude_error,
        attitude_clock,
        maneuver,
        com_variation_pct,
    }
}

/// Target position from range and the polar/azimuth angles (missile at the
/// origin, `θ` measured from local vertical).
pub fn target_position(draw: &ScenarioDraw) -> Vec3 {
    let (st, ct) = draw.theta.sin_cos();
    let (sp, cp) = draw.phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct) * draw.range
}

/// Target velocity direction: straight back along the LOS, then offset by
/// `β` in azimuth and `α` in elevation.
pub fn target_velocity(draw: &ScenarioDraw, speed: f64) -> Vec3 {
    let d = -target_position(draw).normalize();
    let az = d.y.atan2(d.x) + draw.beta;
    let el = d.z.clamp(-1.0, 1.0).asin() + draw.alpha;
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * speed
}

/// Straight-line collision triangle: the missile velocity of magnitude
/// `speed` that meets the target soonest. Returns `(velocity, time)`.
pub fn collision_triangle(r_t: &Vec3, v_t: &Vec3, speed: f64) -> Option<(Vec3, f64)> {
    // |r s + v_T| = V_M with s = 1/t.
    let a = r_t.norm_squared();
    let b = 2.0 * r_t.dot(v_t);
    let c = v_t.norm_squared() - speed * speed;
    let disc = b * b - 4.0 * a * c;
    if a == 0.0 || disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let s = [(-b + root) / (2.0 * a), (-b - root) / (2.0 * a)]
        .into_iter()
        .filter(|s| *s > 0.0)
        .fold(f64::NAN, f64::max);
    if !s.is_finite() {
        return None;
    }
    Some((r_t * s + v_t, 1.0 / s))
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    m: TargetState,
    t: TargetState,
}

impl OdeState for Pair {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        Pair {
            m: self.m.add_scaled(&rate.m, h),
            t: self.t.add_scaled(&rate.t, h),
        }
    }
}

/// Relative position at closest approach of two unpowered point masses.
fn coast_miss(r_m: &Vec3, v_m: &Vec3, r_t: &Vec3, v_t: &Vec3, gravity: &GravityModel, t_guess: f64) -> (Vec3, f64) {
    let steps = 200usize;
    let dt = 1.2 * t_guess / steps as f64;
    let f = |_: f64, p: &Pair| Pair {
        m: TargetState {
            position: p.m.velocity,
            velocity: gravity.accel(&p.m.position),
        },
        t: TargetState {
            position: p.t.velocity,
            velocity: gravity.accel(&p.t.position),
        },
    };
    let mut p = Pair {
        m: TargetState {
            position: *r_m,
            velocity: *v_m,
        },
        t: TargetState {
            position: *r_t,
            velocity: *v_t,
        },
    };
    for k in 0..steps {
        let next = rk4(&p, dt, f);
        let rel = next.t.position - next.m.position;
        let vrel = next.t.velocity - next.m.velocity;
        if rel.dot(&vrel) >= 0.0 {
            // Closest approach inside this step: linear refinement.
            let rel0 = p.t.position - p.m.position;
            let vrel0 = p.t.velocity - p.m.velocity;
            let tau = (-rel0.dot(&vrel0) / vrel0.norm_squared()).clamp(0.0, dt);
            return (rel0 + vrel0 * tau, k as f64 * dt + tau);
        }
        p = next;
    }
    (p.t.position - p.m.position, steps as f64 * dt)
}

/// Missile velocity on the collision triangle, corrected for differential
/// gravity by shooting on the coasting miss.
pub fn gravity_collision_velocity(r_t: &Vec3, v_t: &Vec3, speed: f64, gravity: &GravityModel) -> Option<Vec3> {
    let (mut v_m, t_go) = collision_triangle(r_t, v_t, speed)?;
    for _ in 0..6 {
        let (miss, t) = coast_miss(&Vec3::zeros(), &v_m, r_t, v_t, gravity, t_go);
        if miss.norm() < 1e-4 || t <= 0.0 {
            break;
        }
        v_m = (v_m + miss / t).normalize() * speed;
    }
    Some(v_m)
}

/// Initial missile and target states for a draw.
pub fn init_episode(
    draw: &ScenarioDraw,
    config: &ScenarioConfig,
    props: &MassProperties,
    gravity: &GravityModel,
) -> Result<(MissileState, TargetState)> {
    let r_t = target_position(draw);
    let v_t = target_velocity(draw, config.target_speed_mps);
    let v_nominal = if config.gravity_correction {
        gravity_collision_velocity(&r_t, &v_t, config.missile_speed_mps, gravity)
    } else {
        collision_triangle(&r_t, &v_t, config.missile_speed_mps).map(|(v, _)| v)
    }
    .ok_or_else(|| SimError::Config("no collision-triangle solution for this draw".into()))?;
    let v_m = tilt(&v_nominal, draw.heading_error, draw.heading_clock);
    let boresight = tilt(&r_t.normalize(), draw.attitude_error, draw.attitude_clock);
    let mut missile = MissileState::new(Vec3::zeros(), v_m, boresight_quat(&boresight), props);
    missile.com_offset_full = props.com_offset_from_percent(&Vec3::from(draw.com_variation_pct));
    Ok((
        missile,
        TargetState {
            position: r_t,
            velocity: v_t,
        },
    ))
}

/// Gravity-free collision-triangle velocity for a draw, before heading error.
pub fn nominal_missile_velocity(draw: &ScenarioDraw, config: &ScenarioConfig) -> Option<Vec3> {
    let r_t = target_position(draw);
    collision_triangle(&r_t, &target_velocity(draw, config.target_speed_mps), config.missile_speed_mps).map(|(v, _)| v)
}
