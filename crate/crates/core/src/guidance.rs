//! Classical guidance policy: a Kalman track of the lateral relative motion
//! from stabilized LOS angles, zero-effort-miss divert pulses, and
//! rate-command attitude control that keeps the target near the boresight.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MissileModel, ThrusterCommand, ThrusterTable, G_REF, NUM_THRUSTERS};
use crate::error::{Result, SimError};
use crate::math::{dcm_ref_to_body, Quat, Vec3};
use crate::stabilization::RateProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    /// Navigation constant `N`.
    pub nav_gain: f64,
    /// Fixed closing speed, m/s; `None` uses the nominal head-on sum.
    pub closing_speed_mps: Option<f64>,
    /// Initial range assumed for time-to-go, m; `None` uses the middle of
    /// the scenario range bounds.
    pub nominal_range_m: Option<f64>,
    /// Floor on the time-to-go estimate, s.
    pub min_time_to_go_s: f64,
    /// Accumulated velocity demand that triggers a divert pulse, m/s.
    pub divert_deadband_mps: f64,
    /// Limit on the accumulated velocity demand, m/s.
    pub divert_demand_limit_mps: f64,
    /// Body-rate command per radian of boresight error, 1/s.
    pub attitude_gain: f64,
    /// Boresight error ignored by the attitude loop, rad.
    pub attitude_deadband_rad: f64,
    /// Pitch/yaw rate error tolerated before an ACS pulse, rad/s.
    pub rate_deadband: f64,
    /// Roll rate error tolerated before an ACS pulse, rad/s.
    pub roll_rate_deadband: f64,
    /// Assumed standard deviation of a stabilized angle sample, rad.
    pub los_noise_rad: f64,
    /// Spectral density of LOS angular acceleration one second before
    /// intercept, rad²/s³.
    pub los_process_noise: f64,
    /// Power of time-to-go by which the process noise grows toward intercept.
    pub los_process_exponent: f64,
    /// Prior standard deviation of the LOS rate, rad/s.
    pub los_rate_prior_rad_s: f64,
    /// Undo the seeker's first-order angle filter before stabilization.
    pub invert_seeker_lag: bool,
    /// Shape the body rate between gyro samples with the commanded ACS torque.
    pub shaped_rate_interpolation: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            nav_gain: 2.5,
            closing_speed_mps: None,
            nominal_range_m: None,
            min_time_to_go_s: 0.3,
            divert_deadband_mps: 2.4,
            divert_demand_limit_mps: 6.0,
            attitude_gain: 3.0,
            attitude_deadband_rad: 0.02,
            rate_deadband: 0.8,
            roll_rate_deadband: 1.0,
            los_noise_rad: 1e-3,
            los_process_noise: 2e-4,
            los_process_exponent: 2.0,
            los_rate_prior_rad_s: 0.003,
            invert_seeker_lag: true,
            shaped_rate_interpolation: true,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nav_gain", self.nav_gain),
            ("attitude_gain", self.attitude_gain),
            ("min_time_to_go_s", self.min_time_to_go_s),
            ("los_noise_rad", self.los_noise_rad),
            ("los_rate_prior_rad_s", self.los_rate_prior_rad_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("guidance {name} must be positive")));
            }
        }
        let non_negative = [
            ("divert_deadband_mps", self.divert_deadband_mps),
            ("divert_demand_limit_mps", self.divert_demand_limit_mps),
            ("los_process_noise", self.los_process_noise),
            ("los_process_exponent", self.los_process_exponent),
            ("attitude_deadband_rad", self.attitude_deadband_rad),
            ("rate_deadband", self.rate_deadband),
            ("roll_rate_deadband", self.roll_rate_deadband),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("guidance {name} must be non-negative")));
            }
        }
        for (name, v) in [("closing_speed_mps", self.closing_speed_mps), ("nominal_range_m", self.nominal_range_m)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(SimError::Config(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Nominal closing speed: the sum of the speed magnitudes for a head-on
/// geometry, unless overridden.
pub fn closing_speed_estimate(missile_speed: f64, target_speed: f64, config: &GuidanceConfig) -> f64 {
    config.closing_speed_mps.unwrap_or(missile_speed + target_speed)
}

/// Time-to-go at elapsed time `t` for an engagement that started at
/// `range` and closes at `closing_speed`, floored.
pub fn time_to_go_estimate(range: f64, closing_speed: f64, t: f64, config: &GuidanceConfig) -> f64 {
    (range / closing_speed - t).max(config.min_time_to_go_s)
}

/// Which thrusters produce each signed body force or torque.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Divert thruster for `[+y, −y, +z, −z]`.
    pub divert: [usize; 4],
    /// ACS thrusters for `[axis][0 = positive, 1 = negative]` torque.
    pub acs: [[Vec<usize>; 2]; 3],
}

impl Allocation {
    /// Classify every thruster by the dominant signed component of its force
    /// (diverts) or of its torque about the geometric center (ACS).
    pub fn from_table(table: &ThrusterTable) -> Result<Self> {
        let mut divert = [usize::MAX; 4];
        let mut acs: [[Vec<usize>; 2]; 3] = Default::default();
        let origin = Vec3::zeros();
        for i in 0..NUM_THRUSTERS {
            let w = table.unit_wrench(i, &origin);
            if i < 4 {
                let d = w.force;
                let slot = if d.y.abs() > d.z.abs() {
                    if d.y > 0.0 { 0 } else { 1 }
                } else if d.z > 0.0 {
                    2
                } else {
                    3
                };
                divert[slot] = i;
            } else {
                let t = w.torque;
                let axis = t.iamax();
                let sign = if t[axis] > 0.0 { 0 } else { 1 };
                acs[axis][sign].push(i);
            }
        }
        if divert.contains(&usize::MAX) || acs.iter().flatten().any(|v| v.is_empty()) {
            return Err(SimError::Config("thruster table cannot produce every force and torque direction".into()));
        }
        Ok(Allocation { divert, acs })
    }
}

/// Kalman filter on both stabilized LOS angles with a random-walk rate
/// model. The axes share one covariance because they see the same noise.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LosFilter {
    /// `[axis][angle, rate]`.
    x: [[f64; 2]; 2],
    p: [[f64; 2]; 2],
}

impl LosFilter {
    fn start(angles: (f64, f64), config: &GuidanceConfig) -> Self {
        let s = config.los_noise_rad;
        let r = config.los_rate_prior_rad_s;
        LosFilter {
            x: [[angles.0, 0.0], [angles.1, 0.0]],
            p: [[s * s, 0.0], [0.0, r * r]],
        }
    }

    fn predict(&mut self, dt: f64, q: f64) {
        for x in self.x.iter_mut() {
            x[0] += x[1] * dt;
        }
        let p = self.p;
        let p00 = p[0][0] + 2.0 * dt * p[0][1] + dt * dt * p[1][1] + q * dt.powi(3) / 3.0;
        let p01 = p[0][1] + dt * p[1][1] + q * dt * dt / 2.0;
        let p11 = p[1][1] + q * dt;
        self.p = [[p00, p01], [p01, p11]];
    }

    fn correct(&mut self, angles: (f64, f64), sigma: f64) {
        let p = self.p;
        let s = p[0][0] + sigma * sigma;
        let k = [p[0][0] / s, p[0][1] / s];
        for (x, z) in self.x.iter_mut().zip([angles.0, angles.1]) {
            let r = z - x[0];
            x[0] += k[0] * r;
            x[1] += k[1] * r;
        }
        let p01 = (1.0 - k[0]) * p[0][1];
        self.p = [[(1.0 - k[0]) * p[0][0], p01], [p01, p[1][1] - k[1] * p[0][1]]];
    }

    fn rates(&self) -> (f64, f64) {
        (self.x[0][1], self.x[1][1])
    }
}

/// Inverse of the seeker's discrete first-order angle filter: recovers the
/// unfiltered sample from consecutive filtered ones.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LagInverse {
    prev: Option<(f64, f64)>,
}

impl LagInverse {
    pub fn update(&mut self, u: f64, v: f64, tau: f64, dt: f64) -> (f64, f64) {
        let out = match self.prev {
            Some((pu, pv)) if tau > 0.0 => {
                let gain = 1.0 - (-dt / tau).exp();
                (pu + (u - pu) / gain, pv + (v - pv) / gain)
            }
            _ => (u, v),
        };
        self.prev = Some((u, v));
        out
    }
}

/// The policy's own model of the torque it has commanded, from nominal
/// thruster geometry, lag and mass flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueModel {
    torques: [Vec3; NUM_THRUSTERS],
    thrusts: [f64; NUM_THRUSTERS],
    unit_inertia: Vec3,
    mass: f64,
    dry_mass: f64,
    mass_flow_per_newton: f64,
    tau: f64,
    lagged: Vec3,
}

impl TorqueModel {
    pub fn new(model: &MissileModel) -> Self {
        let origin = Vec3::zeros();
        TorqueModel {
            torques: std::array::from_fn(|i| model.thrusters.unit_wrench(i, &origin).torque),
            thrusts: std::array::from_fn(|i| model.thrusters.thrusters[i].thrust),
            unit_inertia: model.props.unit_inertia(),
            mass: model.props.wet_mass_kg,
            dry_mass: model.props.dry_mass_kg,
            mass_flow_per_newton: 1.0 / (model.isp_s * G_REF),
            tau: model.tau_u_s,
            lagged: Vec3::zeros(),
        }
    }

    /// Rate profile for the interval about to be flown under `cmd`; advances
    /// the model to the end of that interval.
    pub fn step(&mut self, cmd: &ThrusterCommand, dt: f64) -> RateProfile {
        let command: Vec3 = (0..NUM_THRUSTERS).filter(|&i| cmd[i]).map(|i| self.torques[i]).sum();
        let thrust: f64 = (0..NUM_THRUSTERS).filter(|&i| cmd[i]).map(|i| self.thrusts[i]).sum();
        let profile = RateProfile::LaggedTorque {
            start: self.lagged,
            command,
            tau: self.tau,
            inertia: self.unit_inertia * self.mass,
        };
        self.lagged = command + (self.lagged - command) * (-dt / self.tau).exp();
        self.mass = (self.mass - thrust * self.mass_flow_per_newton * dt).max(self.dry_mass);
        profile
    }

    /// Current mass estimate, kg.
    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Per-episode policy memory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuidanceState {
    filter: Option<LosFilter>,
    /// Velocity still owed to the navigation law, stabilization frame, m/s.
    demand: Vec3,
}

impl GuidanceState {
    /// Filtered stabilized LOS rates, rad/s; zero before the first update.
    pub fn los_rates(&self) -> (f64, f64) {
        self.filter.map_or((0.0, 0.0), |f| f.rates())
    }
}

/// What the policy sees at one decision instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceInput {
    /// Compensated body-frame seeker angles.
    pub body_angles: (f64, f64),
    /// Stabilized angles.
    pub stabilized: (f64, f64),
    /// Compensated body rates.
    pub omega: Vec3,
    /// Current body attitude relative to the stabilization frame.
    pub dq: Quat,
    /// Estimated time-to-go, s.
    pub time_to_go: f64,
    /// Estimated acceleration from one divert thruster, m/s².
    pub divert_accel: f64,
}

/// One 25 Hz decision.
pub fn guidance_step(
    input: &GuidanceInput,
    closing_speed: f64,
    config: &GuidanceConfig,
    alloc: &Allocation,
    state: &mut GuidanceState,
    dt: f64,
) -> ThrusterCommand {
    let filter = match state.filter.as_mut() {
        Some(f) => {
            let q = config.los_process_noise * input.time_to_go.powf(-config.los_process_exponent);
            f.predict(dt, q);
            f
        }
        None => state.filter.insert(LosFilter::start(input.stabilized, config)),
    };
    filter.correct(input.stabilized, config.los_noise_rad);
    let (du, dv) = filter.rates();

    let mut cmd = [false; NUM_THRUSTERS];

    // Proportional navigation, accumulated as a velocity demand in the
    // stabilization frame and paid out in whole divert pulses.
    let k = config.nav_gain * closing_speed;
    state.demand += Vec3::new(0.0, k * du, k * dv) * dt;
    let limit = config.divert_demand_limit_mps;
    state.demand.apply(|x| *x = x.clamp(-limit, limit));
    let to_body = dcm_ref_to_body(&input.dq);
    let want = to_body * state.demand;
    let db = config.divert_deadband_mps;
    let pulse = input.divert_accel * dt;
    let mut delivered = Vec3::zeros();
    if want.y > db {
        cmd[alloc.divert[0]] = true;
        delivered.y = pulse;
    } else if want.y < -db {
        cmd[alloc.divert[1]] = true;
        delivered.y = -pulse;
    }
    if want.z > db {
        cmd[alloc.divert[2]] = true;
        delivered.z = pulse;
    } else if want.z < -db {
        cmd[alloc.divert[3]] = true;
        delivered.z = -pulse;
    }
    state.demand -= to_body.transpose() * delivered;
    state.demand.x = 0.0;

    // Boresight error drives yaw (u) and pitch (v) rate commands; roll is damped.
    let (bu, bv) = input.body_angles;
    let kp = config.attitude_gain;
    let shrink = |x: f64| x.signum() * (x.abs() - config.attitude_deadband_rad).max(0.0);
    let desired = Vec3::new(0.0, -kp * shrink(bv), kp * shrink(bu));
    let deadbands = [config.roll_rate_deadband, config.rate_deadband, config.rate_deadband];
    for axis in 0..3 {
        let err = desired[axis] - input.omega[axis];
        let side = if err > deadbands[axis] {
            0
        } else if err < -deadbands[axis] {
            1
        } else {
            continue;
        };
        for &i in &alloc.acs[axis][side] {
            cmd[i] = true;
        }
    }
    cmd
}
