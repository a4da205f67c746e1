//! Rigid-body missile and point-mass target dynamics.

pub mod gravity;
pub mod missile;
pub mod target;
pub mod thrusters;

pub use gravity::{GravityModel, G_REF, MU_EARTH};
pub use missile::{
    euler_rotation_step, lag_step, quaternion_step, translational_step, MassProperties, MissileModel,
    MissileState, TranslationalStep,
};
pub use target::{target_step, TargetState};
pub use thrusters::{thruster_wrench, Thruster, ThrusterCommand, ThrusterTable, Wrench, NUM_THRUSTERS};
