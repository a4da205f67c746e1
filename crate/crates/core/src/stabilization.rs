//! Scale-factor compensation of raw measurements and computational
//! stabilization of the strapdown seeker angles into the frame `N′` fixed at
//! the missile's initial attitude.

use crate::math::{body_to_ref, identity_quat, normalized, quat_rate, rk4, Quat, Vec3};
use crate::seeker::{angles_of, Observation, OBS_DIM};

/// Largest estimate magnitude accepted by [`compensate`]; keeps every
/// denominator `1 + ε̆` at or above 0.75.
pub const MAX_ESTIMATE: f64 = 0.25;

pub type CompensatedObservation = Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensated {
    pub obs: CompensatedObservation,
    /// Set when an estimate was non-finite or outside `±MAX_ESTIMATE`.
    pub clamped: bool,
}

/// Divide each measured channel by `1 + ε̆`.
pub fn compensate(obs: &Observation, eps_hat: &[f64; OBS_DIM]) -> Compensated {
    let mut clamped = false;
    let raw = obs.to_array();
    let out: [f64; OBS_DIM] = std::array::from_fn(|i| {
        let mut e = eps_hat[i];
        if !e.is_finite() {
            e = 0.0;
            clamped = true;
        } else if e.abs() > MAX_ESTIMATE {
            e = e.clamp(-MAX_ESTIMATE, MAX_ESTIMATE);
            clamped = true;
        }
        raw[i] / (1.0 + e)
    });
    Compensated {
        obs: Observation::from_array(&out),
        clamped,
    }
}

/// Integrated attitude change since the start of the episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizerState {
    pub dq: Quat,
}

impl Default for StabilizerState {
    fn default() -> Self {
        StabilizerState { dq: identity_quat() }
    }
}

/// One RK4 step of the attitude-change quaternion under a constant rate.
pub fn integrate_dq(state: &StabilizerState, omega: &Vec3, dt: f64) -> StabilizerState {
    StabilizerState {
        dq: normalized(&rk4(&state.dq, dt, |_, q| quat_rate(q, omega))),
    }
}

/// Shape of the body rate between two gyro samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RateProfile {
    /// Straight line between the samples.
    #[default]
    Linear,
    /// Known torque relaxing from `start` toward `command` with time constant
    /// `tau`, acting on principal moments `inertia`. The part of the sampled
    /// rate change the model does not explain is spread linearly.
    LaggedTorque {
        start: Vec3,
        command: Vec3,
        tau: f64,
        inertia: Vec3,
    },
}

impl RateProfile {
    /// Modeled rate change accrued by time `t` into the interval.
    fn modeled(&self, t: f64) -> Vec3 {
        match *self {
            RateProfile::Linear => Vec3::zeros(),
            RateProfile::LaggedTorque {
                start,
                command,
                tau,
                inertia,
            } => {
                let relax = tau * (1.0 - (-t / tau).exp());
                (command * t + (start - command) * relax).component_div(&inertia)
            }
        }
    }

    /// Body rate at `t ∈ [0, interval]` consistent with both samples.
    pub fn rate(&self, omega_start: &Vec3, omega_end: &Vec3, interval: f64, t: f64) -> Vec3 {
        let residual = omega_end - omega_start - self.modeled(interval);
        omega_start + self.modeled(t) + residual * (t / interval)
    }
}

impl StabilizerState {
    /// Advance over one measurement interval using `substeps` RK4 steps with
    /// the rate linearly interpolated between the samples at either end.
    pub fn propagate(&self, omega_start: &Vec3, omega_end: &Vec3, interval: f64, substeps: usize) -> Self {
        self.propagate_with(omega_start, omega_end, interval, substeps, &RateProfile::Linear)
    }

    /// As [`propagate`](Self::propagate) with an explicit rate profile.
    pub fn propagate_with(
        &self,
        omega_start: &Vec3,
        omega_end: &Vec3,
        interval: f64,
        substeps: usize,
        profile: &RateProfile,
    ) -> Self {
        let h = interval / substeps as f64;
        let mut dq = self.dq;
        for k in 0..substeps {
            let t0 = k as f64 * h;
            let rate = |t: f64| profile.rate(omega_start, omega_end, interval, t0 + t);
            dq = normalized(&rk4(&dq, h, |t, q| quat_rate(q, &rate(t))));
        }
        StabilizerState { dq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilized {
    pub theta_u: f64,
    pub theta_v: f64,
    /// Set when `sin²θu + sin²θv > 1` and the boresight component was clamped.
    pub clamped: bool,
}

/// Reconstructed body-frame line-of-sight unit vector from the two angles.
pub fn reconstruct_los(theta_u: f64, theta_v: f64) -> (Vec3, bool) {
    let y = theta_u.sin();
    let z = theta_v.sin();
    let radicand = 1.0 - y * y - z * z;
    let clamped = radicand < 0.0;
    (Vec3::new(radicand.max(0.0).sqrt(), y, z), clamped)
}

/// Rotate compensated body angles into `N′` using the integrated `dq`.
pub fn stabilize(theta_u: f64, theta_v: f64, dq: &Quat) -> Stabilized {
    let (los_body, clamped) = reconstruct_los(theta_u, theta_v);
    let los = body_to_ref(dq) * los_body;
    let (u, v) = angles_of(&los);
    Stabilized {
        theta_u: u,
        theta_v: v,
        clamped,
    }
}
