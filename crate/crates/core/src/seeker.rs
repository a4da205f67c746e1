//! Strapdown seeker and rate-gyro measurement model.
//!
//! Body-frame line-of-sight angles are distorted by angle scale-factor errors
//! (constant per episode, or a sinusoid of the seeker angle), the gyro rates by
//! a constant per-axis scale factor, then Gaussian noise is added and the two
//! angles pass through a first-order measurement filter.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{dcm_ref_to_body, Quat, Vec3};

pub const OBS_DIM: usize = 5;

/// Error-model bounds for one case of the study.
///
/// With `angle_dependent` the angle bounds limit the sinusoid amplitudes,
/// otherwise they bound the constant angle errors directly. Rate errors are
/// drawn from `U(omega_bounds)` on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFactorConfig {
    pub case_id: Option<u8>,
    pub angle_dependent: bool,
    pub angle_bounds: [f64; 2],
    pub omega_bounds: [f64; 2],
    #[serde(default = "default_period_bounds")]
    pub period_bounds: [f64; 2],
    #[serde(default = "default_phase_bounds")]
    pub phase_bounds: [f64; 2],
}

fn default_period_bounds() -> [f64; 2] {
    [0.5, 3.0]
}

fn default_phase_bounds() -> [f64; 2] {
    [-PI, PI]
}

impl ScaleFactorConfig {
    /// The seven study cases. Rate errors use the symmetric `±A_ω^MAX` form
    /// except case 6, whose amplitudes are pinned at their maxima.
    pub fn case(id: u8) -> Result<Self> {
        let (lad, angle, omega) = match id {
            0 => (false, [-1e-4, 1e-4], [-1e-4, 1e-4]),
            1 => (false, [-1e-3, 1e-3], [-1e-3, 1e-3]),
            2 => (false, [-5e-3, 5e-3], [-5e-3, 5e-3]),
            3 => (true, [0.0, 5e-3], [-5e-3, 5e-3]),
            4 => (false, [-1e-2, 1e-2], [-1e-2, 1e-2]),
            5 => (true, [0.0, 1e-2], [-1e-2, 1e-2]),
            6 => (true, [5e-3, 5e-3], [5e-3, 5e-3]),
            _ => return Err(SimError::UnknownCase(id)),
        };
        Ok(ScaleFactorConfig {
            case_id: Some(id),
            angle_dependent: lad,
            angle_bounds: angle,
            omega_bounds: omega,
            period_bounds: default_period_bounds(),
            phase_bounds: default_phase_bounds(),
        })
    }

    /// No scale-factor errors at all.
    pub fn none() -> Self {
        ScaleFactorConfig {
            case_id: None,
            angle_dependent: false,
            angle_bounds: [0.0, 0.0],
            omega_bounds: [0.0, 0.0],
            period_bounds: default_period_bounds(),
            phase_bounds: default_phase_bounds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("angle_bounds", self.angle_bounds),
            ("omega_bounds", self.omega_bounds),
            ("period_bounds", self.period_bounds),
            ("phase_bounds", self.phase_bounds),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SimError::Config(format!("{name} must be finite and ordered")));
            }
        }
        if self.period_bounds[0] <= 0.0 {
            return Err(SimError::Config("period_bounds must be positive".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ScaleFactorDraw {
        sample_scale_factors(self, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleError {
    Constant { u: f64, v: f64 },
    Sinusoidal {
        amp_u: f64,
        amp_v: f64,
        period_u: f64,
        period_v: f64,
        phase_u: f64,
        phase_v: f64,
    },
}

/// Scale-factor errors drawn at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactorDraw {
    pub angle: AngleError,
    pub omega: [f64; 3],
}

impl ScaleFactorDraw {
    pub fn zero() -> Self {
        ScaleFactorDraw {
            angle: AngleError::Constant { u: 0.0, v: 0.0 },
            omega: [0.0; 3],
        }
    }

    /// Full error vector `[ε_θu, ε_θv, ε_ω]` at the given true body angles.
    pub fn epsilon(&self, theta_u: f64, theta_v: f64) -> [f64; OBS_DIM] {
        let (eu, ev) = angle_epsilon(self, theta_u, theta_v);
        [eu, ev, self.omega[0], self.omega[1], self.omega[2]]
    }
}

/// Uniform draw on `[lo, hi]`; collapses to `lo` when the bounds coincide.
pub(crate) fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi == lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

pub fn sample_scale_factors(config: &ScaleFactorConfig, rng: &mut impl Rng) -> ScaleFactorDraw {
    let angle = if config.angle_dependent {
        AngleError::Sinusoidal {
            amp_u: uniform(rng, config.angle_bounds),
            amp_v: uniform(rng, config.angle_bounds),
            period_u: uniform(rng, config.period_bounds),
            period_v: uniform(rng, config.period_bounds),
            phase_u: uniform(rng, config.phase_bounds),
            phase_v: uniform(rng, config.phase_bounds),
        }
    } else {
        AngleError::Constant {
            u: uniform(rng, config.angle_bounds),
            v: uniform(rng, config.angle_bounds),
        }
    };
    let omega = std::array::from_fn(|_| uniform(rng, config.omega_bounds));
    ScaleFactorDraw { angle, omega }
}

/// Angle scale-factor errors at the given body angles.
pub fn angle_epsilon(draw: &ScaleFactorDraw, theta_u: f64, theta_v: f64) -> (f64, f64) {
    match draw.angle {
        AngleError::Constant { u, v } => (u, v),
        AngleError::Sinusoidal {
            amp_u,
            amp_v,
            period_u,
            period_v,
            phase_u,
            phase_v,
        } => (
            amp_u * (2.0 * PI * theta_u / period_u + phase_u).cos(),
            amp_v * (2.0 * PI * theta_v / period_v + phase_v).cos(),
        ),
    }
}

/// Ground-truth body-frame seeker angles `(θu, θv)` of the target.
pub fn los_body_angles(r_missile: &Vec3, r_target: &Vec3, attitude: &Quat) -> Result<(f64, f64)> {
    let rel = r_target - r_missile;
    let range = rel.norm();
    if !(range > 0.0) {
        return Err(SimError::ZeroRange);
    }
    let los_body = dcm_ref_to_body(attitude) * (rel / range);
    Ok(angles_of(&los_body))
}

/// `(arcsin(λ·û), arcsin(λ·v̂))` for a unit direction `λ`.
pub fn angles_of(unit: &Vec3) -> (f64, f64) {
    (unit.y.clamp(-1.0, 1.0).asin(), unit.z.clamp(-1.0, 1.0).asin())
}

/// One measurement `o = [θ̃u, θ̃v, ω̃]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub theta_u: f64,
    pub theta_v: f64,
    pub omega: Vec3,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [self.theta_u, self.theta_v, self.omega.x, self.omega.y, self.omega.z]
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Observation {
            theta_u: a[0],
            theta_v: a[1],
            omega: Vec3::new(a[2], a[3], a[4]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Measurement noise and filtering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeekerConfig {
    pub sigma_theta: f64,
    pub sigma_omega: f64,
    /// Angle filter time constant, s. Zero bypasses the filter.
    pub tau_theta_s: f64,
    pub fov_half_angle_deg: f64,
}

impl Default for SeekerConfig {
    fn default() -> Self {
        SeekerConfig {
            sigma_theta: 1e-3,
            sigma_omega: 1e-3,
            tau_theta_s: 0.020,
            fov_half_angle_deg: 30.0,
        }
    }
}

impl SeekerConfig {
    pub fn ideal() -> Self {
        SeekerConfig {
            sigma_theta: 0.0,
            sigma_omega: 0.0,
            tau_theta_s: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_theta >= 0.0 && self.sigma_omega >= 0.0 && self.tau_theta_s >= 0.0) {
            return Err(SimError::Config("seeker noise and filter constants must be non-negative".into()));
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg < 90.0) {
            return Err(SimError::Config("fov_half_angle_deg must lie in (0, 90)".into()));
        }
        Ok(())
    }
}

/// Discrete first-order lag on the two measured angles, sampled once per
/// observation. The first sample initializes the state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngleFilter {
    state: Option<(f64, f64)>,
}

impl AngleFilter {
    pub fn update(&mut self, u: f64, v: f64, tau: f64, dt: f64) -> (f64, f64) {
        let out = match self.state {
            Some((fu, fv)) if tau > 0.0 => {
                let gain = 1.0 - (-dt / tau).exp();
                (fu + gain * (u - fu), fv + gain * (v - fv))
            }
            _ => (u, v),
        };
        self.state = Some(out);
        out
    }
}

/// A measurement together with the ground truth it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeekerSample {
    pub obs: Observation,
    pub true_angles: (f64, f64),
    pub epsilon: [f64; OBS_DIM],
}

/// Produce a measured observation; `dt` is the time since the previous sample.
#[allow(clippy::too_many_arguments)]
pub fn observe(
    r_missile: &Vec3,
    attitude: &Quat,
    omega: &Vec3,
    r_target: &Vec3,
    draw: &ScaleFactorDraw,
    config: &SeekerConfig,
    filter: &mut AngleFilter,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<SeekerSample> {
    let (tu, tv) = los_body_angles(r_missile, r_target, attitude)?;
    let epsilon = draw.epsilon(tu, tv);
    let mut noise = || -> f64 { rng.sample(StandardNormal) };
    let mu = (1.0 + epsilon[0]) * tu + config.sigma_theta * noise();
    let mv = (1.0 + epsilon[1]) * tv + config.sigma_theta * noise();
    let w = Vec3::new(
        (1.0 + epsilon[2]) * omega.x + config.sigma_omega * noise(),
        (1.0 + epsilon[3]) * omega.y + config.sigma_omega * noise(),
        (1.0 + epsilon[4]) * omega.z + config.sigma_omega * noise(),
    );
    let (fu, fv) = filter.update(mu, mv, config.tau_theta_s, dt);
    Ok(SeekerSample {
        obs: Observation {
            theta_u: fu,
            theta_v: fv,
            omega: w,
        },
        true_angles: (tu, tv),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::identity_quat;
    use nalgebra::UnitQuaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boresight_and_side_angles() {
        let q = identity_quat();
        assert_eq!(los_body_angles(&Vec3::zeros(), &Vec3::x(), &q).unwrap(), (0.0, 0.0));
        let (u, v) = los_body_angles(&Vec3::zeros(), &Vec3::y(), &q).unwrap();
        assert!((u - PI / 2.0).abs() < 1e-15 && v == 0.0);
        let a = 10f64.to_radians();
        let (u, v) = los_body_angles(&Vec3::zeros(), &Vec3::new(a.cos(), a.sin(), 0.0), &q).unwrap();
        assert!((u - 0.174533).abs() < 1e-6 && v.abs() < 1e-15);
    }

    #[test]
    fn zero_range_is_error() {
        let r = Vec3::new(1.0, 2.0, 3.0);
        assert!(matches!(los_body_angles(&r, &r, &identity_quat()), Err(SimError::ZeroRange)));
    }

    #[test]
    fn rotated_body_sees_rotated_los() {
        // Body yawed +10 degrees: a target dead ahead in the reference frame
        // appears at -10 degrees azimuth.
        let q = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 10f64.to_radians()).into_inner();
        let (u, _) = los_body_angles(&Vec3::zeros(), &Vec3::x(), &q).unwrap();
        assert!((u + 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_error_values() {
        let draw = |period| ScaleFactorDraw {
            angle: AngleError::Sinusoidal {
                amp_u: 1e-2,
                amp_v: 1e-2,
                period_u: period,
                period_v: period,
                phase_u: 0.0,
                phase_v: 0.0,
            },
            omega: [0.0; 3],
        };
        assert_eq!(angle_epsilon(&draw(1.0), 0.0, 0.0).0, 1e-2);
        assert!(angle_epsilon(&draw(1.0), 0.25, 0.0).0.abs() < 1e-12);
        assert!((angle_epsilon(&draw(0.5), 0.25, 0.0).0 + 1e-2).abs() < 1e-15);
    }

    #[test]
    fn case_zero_draws_are_small() {
        let cfg = ScaleFactorConfig::case(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = cfg.sample(&mut rng);
            assert!(d.epsilon(0.1, -0.2).iter().all(|e| e.abs() <= 1e-4));
        }
    }

    #[test]
    fn case_six_is_pinned() {
        let cfg = ScaleFactorConfig::case(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let d = cfg.sample(&mut rng);
            assert_eq!(d.omega, [5e-3; 3]);
            match d.angle {
                AngleError::Sinusoidal { amp_u, amp_v, .. } => assert_eq!((amp_u, amp_v), (5e-3, 5e-3)),
                _ => panic!("case 6 is angle dependent"),
            }
        }
    }

    #[test]
    fn degenerate_bounds_are_deterministic() {
        let cfg = ScaleFactorConfig {
            angle_bounds: [2e-3, 2e-3],
            omega_bounds: [-1e-3, -1e-3],
            ..ScaleFactorConfig::none()
        };
        let d = cfg.sample(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(d.epsilon(0.3, 0.3), [2e-3, 2e-3, -1e-3, -1e-3, -1e-3]);
    }

    #[test]
    fn unknown_case() {
        assert!(matches!(ScaleFactorConfig::case(7), Err(SimError::UnknownCase(7))));
    }

    fn distorted(theta_u: f64, eps_u: f64, omega: Vec3, eps_w: [f64; 3]) -> Observation {
        // Target placed so that the true azimuth equals theta_u.
        let target = Vec3::new(theta_u.cos(), theta_u.sin(), 0.0) * 1000.0;
        let draw = ScaleFactorDraw {
            angle: AngleError::Constant { u: eps_u, v: 0.0 },
            omega: eps_w,
        };
        let mut filter = AngleFilter::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        observe(&Vec3::zeros(), &identity_quat(), &omega, &target, &draw, &SeekerConfig::ideal(), &mut filter, 0.04, &mut rng)
            .unwrap()
            .obs
    }

    #[test]
    fn ideal_observation_is_ground_truth() {
        let o = distorted(0.1, 0.0, Vec3::new(0.2, -0.3, 0.4), [0.0; 3]);
        assert!((o.theta_u - 0.1).abs() < 1e-15);
        assert_eq!(o.omega, Vec3::new(0.2, -0.3, 0.4));
    }

    #[test]
    fn scale_factor_applied() {
        let o = distorted(0.1, 5e-3, Vec3::new(1.0, 0.0, 0.0), [1e-2, 0.0, 0.0]);
        assert!((o.theta_u - 0.1005).abs() < 1e-15);
        assert!((o.omega.x - 1.01).abs() < 1e-15);
    }

    #[test]
    fn filter_converges_to_constant_input() {
        let mut f = AngleFilter::default();
        f.update(0.0, 0.0, 0.02, 0.04);
        let mut out = (0.0, 0.0);
        for _ in 0..20 {
            out = f.update(1.0, -1.0, 0.02, 0.04);
        }
        assert!((out.0 - 1.0).abs() < 1e-12 && (out.1 + 1.0).abs() < 1e-12);
        let mut g = AngleFilter::default();
        g.update(0.0, 0.0, 0.02, 0.04);
        let first = g.update(1.0, 1.0, 0.02, 0.04).0;
        assert!((first - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
    }
}
