use serde::{Deserialize, Serialize};

use crate::math::Vec3;

pub const MU_EARTH: f64 = 3.986004418e14;
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;
pub const G_REF: f64 = 9.81;

/// Gravitational acceleration in the engagement frame.
///
/// The point-mass model places the engagement origin at `origin` in
/// Earth-centered coordinates; engagement `+z` is local vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GravityModel {
    Off,
    Uniform { accel: [f64; 3] },
    PointMass { mu: f64, origin: [f64; 3] },
}

impl GravityModel {
    pub fn point_mass_at_altitude(altitude_m: f64) -> Self {
        GravityModel::PointMass {
            mu: MU_EARTH,
            origin: [0.0, 0.0, EARTH_RADIUS_M + altitude_m],
        }
    }

    pub fn uniform(g: f64) -> Self {
        GravityModel::Uniform {
            accel: [0.0, 0.0, -g],
        }
    }

    pub fn accel(&self, r: &Vec3) -> Vec3 {
        match *self {
            GravityModel::Off => Vec3::zeros(),
            GravityModel::Uniform { accel } => Vec3::from(accel),
            GravityModel::PointMass { mu, origin } => {
                let re = r + Vec3::from(origin);
                let d = re.norm();
                -re * (mu / (d * d * d))
            }
        }
    }
}

impl Default for GravityModel {
    fn default() -> Self {
        Self::point_mass_at_altitude(200e3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_altitude_magnitude_in_range() {
        let g = GravityModel::default().accel(&Vec3::zeros());
        assert!((8.0..=9.81).contains(&g.norm()));
        assert!(g.z < 0.0 && g.x == 0.0 && g.y == 0.0);
    }

    #[test]
    fn off_is_zero() {
        assert_eq!(GravityModel::Off.accel(&Vec3::new(1.0, 2.0, 3.0)), Vec3::zeros());
    }
}
