use super::gravity::GravityModel;
use crate::math::{OdeState, Vec3, rk4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl OdeState for TargetState {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        TargetState {
            position: self.position + rate.position * h,
            velocity: self.velocity + rate.velocity * h,
        }
    }
}

/// One RK4 step with the maneuver command held over the step.
pub fn target_step(target: &TargetState, accel_cmd: &Vec3, gravity: &GravityModel, dt: f64) -> TargetState {
    rk4(target, dt, |_, s| TargetState {
        position: s.velocity,
        velocity: accel_cmd + gravity.accel(&s.position),
    })
}
