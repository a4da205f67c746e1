use crate::math::Vec3;

pub const NUM_THRUSTERS: usize = 16;
pub const DIVERT_THRUST_N: f64 = 5000.0;
pub const ACS_THRUST_N: f64 = 125.0;

/// On/off flags, one per thruster, in table order.
pub type ThrusterCommand = [bool; NUM_THRUSTERS];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thruster {
    pub direction: Vec3,
    pub position: Vec3,
    pub thrust: f64,
}

/// Body-frame force and torque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterTable {
    pub thrusters: [Thruster; NUM_THRUSTERS],
}

impl Default for ThrusterTable {
    fn default() -> Self {
        // (direction, location) rows; the first four are the divert thrusters.
        const ROWS: [([f64; 3], [f64; 3]); NUM_THRUSTERS] = [
            ([0.0, -1.0, 0.0], [0.0, -0.25, 0.0]),
            ([0.0, 1.0, 0.0], [0.0, 0.25, 0.0]),
            ([0.0, 0.0, 1.0], [0.0, 0.0, 0.25]),
            ([0.0, 0.0, -1.0], [0.0, 0.0, -0.25]),
            ([0.0, 0.0, 1.0], [0.0, -0.25, 0.0]),
            ([0.0, 0.0, -1.0], [0.0, 0.25, 0.0]),
            ([0.0, -1.0, 0.0], [0.0, 0.0, 0.25]),
            ([0.0, 1.0, 0.0], [0.0, 0.0, -0.25]),
            ([0.0, 0.0, -1.0], [0.5, 0.0, -0.25]),
            ([0.0, 0.0, 1.0], [-0.5, 0.0, 0.25]),
            ([0.0, 0.0, 1.0], [0.5, 0.0, 0.25]),
            ([0.0, 0.0, -1.0], [-0.5, 0.0, -0.25]),
            ([0.0, -1.0, 0.0], [0.5, -0.25, 0.0]),
            ([0.0, 1.0, 0.0], [-0.5, 0.25, 0.0]),
            ([0.0, 1.0, 0.0], [0.5, 0.25, 0.0]),
            ([0.0, -1.0, 0.0], [-0.5, -0.25, 0.0]),
        ];
        let thrusters = std::array::from_fn(|i| {
            let (d, p) = ROWS[i];
            Thruster {
                direction: Vec3::from(d),
                position: Vec3::from(p),
                thrust: if i < 4 { DIVERT_THRUST_N } else { ACS_THRUST_N },
            }
        });
        ThrusterTable { thrusters }
    }
}

impl ThrusterTable {
    /// Sum of the thrust magnitudes of the active thrusters, N.
    pub fn total_thrust(&self, commands: &ThrusterCommand) -> f64 {
        self.thrusters
            .iter()
            .zip(commands)
            .filter(|(_, &on)| on)
            .map(|(t, _)| t.thrust)
            .sum()
    }

    /// Force and torque (about `r_com`) of a single thruster firing.
    pub fn unit_wrench(&self, index: usize, r_com: &Vec3) -> Wrench {
        let t = &self.thrusters[index];
        let force = t.direction * t.thrust;
        Wrench {
            force,
            torque: (t.position - r_com).cross(&force),
        }
    }
}

/// Commanded body force and torque of the active thrusters about the current
/// center of mass.
pub fn thruster_wrench(commands: &ThrusterCommand, table: &ThrusterTable, r_com: &Vec3) -> Wrench {
    let mut w = Wrench::default();
    for (i, _) in commands.iter().enumerate().filter(|(_, &on)| on) {
        let u = table.unit_wrench(i, r_com);
        w.force += u.force;
        w.torque += u.torque;
    }
    w
}
