//! A pen pinched between thumb and index fingertip, free to pivot about the
//! contact under gravity against Coulomb friction.

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenParams {
    pub mass: f64,
    /// Pivot to center of mass, m.
    pub com_dist: f64,
    /// Moment of inertia about the pivot, kg·m².
    pub inertia: f64,
    /// Effective friction radius at the fingertip contact, m.
    pub contact_radius: f64,
    pub friction: f64,
}

impl Default for PenParams {
    /// A 20 g, 14 cm pen held near one end: uniform rod about its end.
    fn default() -> Self {
        let mass = 0.02;
        let length: f64 = 0.14;
        PenParams {
            mass,
            com_dist: 0.5 * length,
            inertia: mass * length * length / 3.0,
            contact_radius: 0.006,
            friction: 0.5,
        }
    }
}

impl PenParams {
    pub fn is_valid(&self) -> bool {
        [self.mass, self.com_dist, self.inertia, self.contact_radius, self.friction]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }

    pub fn gravity_torque(&self, theta: f64) -> f64 {
        self.mass * GRAVITY * self.com_dist * theta.sin()
    }

    pub fn friction_torque(&self, grip_force: f64) -> f64 {
        self.friction * grip_force.max(0.0) * self.contact_radius
    }

    /// Pinch force that just holds the pen at rest at `theta`.
    pub fn holding_force(&self, theta: f64) -> f64 {
        self.gravity_torque(theta).abs() / (self.friction * self.contact_radius)
    }

    /// Kinetic plus potential energy, with the pivot as reference height.
    pub fn energy(&self, s: &PenState) -> f64 {
        0.5 * self.inertia * s.omega * s.omega + self.mass * GRAVITY * self.com_dist * s.theta.cos()
    }
}

/// Angle from vertical and angular rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenState {
    pub theta: f64,
    pub omega: f64,
}

/// One semi-implicit Euler step (rate first, then angle). A resting pen
/// stays put while friction can balance gravity; a sliding pen sticks when
/// friction reverses its rate and can hold it.
pub fn pen_step(params: &PenParams, s: PenState, grip_force: f64, dt: f64) -> PenState {
    debug_assert!(dt > 0.0 && dt <= 0.01);
    let tau_g = params.gravity_torque(s.theta);
    let tau_f = params.friction_torque(grip_force);
    if s.omega == 0.0 && tau_g.abs() <= tau_f {
        return s;
    }
    let dir = if s.omega != 0.0 { s.omega.signum() } else { tau_g.signum() };
    let alpha = (tau_g - dir * tau_f) / params.inertia;
    let mut omega = s.omega + alpha * dt;
    if s.omega != 0.0 && omega.signum() != s.omega.signum() && tau_g.abs() <= tau_f {
        omega = 0.0;
    }
    PenState {
        theta: s.theta + omega * dt,
        omega,
    }
}

/// Rotation task: stop at each intermediate angle, then at the final angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenTask {
    pub start_deg: f64,
    pub waypoints_deg: [f64; 2],
    pub final_deg: f64,
    pub tolerance_deg: f64,
    /// Pinch force below which the pen slips out of the fingers, N.
    pub drop_force: f64,
    /// Initial pinch force, N.
    pub initial_grip: f64,
}

impl Default for PenTask {
    fn default() -> Self {
        PenTask {
            start_deg: 10.0,
            waypoints_deg: [30.0, 60.0],
            final_deg: 90.0,
            tolerance_deg: 5.0,
            drop_force: 0.2,
            initial_grip: 3.0,
        }
    }
}

impl PenTask {
    /// Targets in order, final last, radians.
    pub fn targets(&self) -> [f64; 3] {
        [
            self.waypoints_deg[0].to_radians(),
            self.waypoints_deg[1].to_radians(),
            self.final_deg.to_radians(),
        ]
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance_deg.to_radians()
    }
}
