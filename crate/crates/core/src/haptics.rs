//! Fingertip taxel arrays to glove motor torques.
//!
//! Each fingertip carries a 4×4 taxel array whose counts are in units of
//! 1/3000 N. The aggregate fingertip force is the sum over the array; the
//! glove torque for that finger is the force times the force arm from the
//! sensor center to the proximal phalanx, saturated at the motor cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Taxel counts per newton.
pub const COUNTS_PER_NEWTON: f64 = 3000.0;

/// Torque cap of the glove's finger motors, N·m.
pub const GLOVE_TORQUE_MAX: f64 = 0.5;

/// Default fingertip force arm, m.
pub const DEFAULT_FORCE_ARM: f64 = 0.04;

pub const TAXEL_ROWS: usize = 4;
pub const TAXEL_COLS: usize = 4;
pub const FINGER_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum HapticsError {
    #[error("force arm must be positive, got {0}")]
    NonPositiveArm(f64),
    #[error("torque cap must be positive, got {0}")]
    NonPositiveTorqueMax(f64),
    #[error("force must be a finite non-negative value, got {0}")]
    InvalidForce(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerId {
    Thumb = 0,
    Index = 1,
    Middle = 2,
    Ring = 3,
    Little = 4,
}

impl FingerId {
    pub const ALL: [FingerId; FINGER_COUNT] = [
        FingerId::Thumb,
        FingerId::Index,
        FingerId::Middle,
        FingerId::Ring,
        FingerId::Little,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FingerId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FingerId::Thumb => "thumb",
            FingerId::Index => "index",
            FingerId::Middle => "middle",
            FingerId::Ring => "ring",
            FingerId::Little => "little",
        }
    }
}

/// Raw 4×4 readout of one fingertip sensor, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct TaxelMatrix(pub [[u16; TAXEL_COLS]; TAXEL_ROWS]);

impl TaxelMatrix {
    pub fn zero() -> Self {
        TaxelMatrix::default()
    }

    pub fn filled(count: u16) -> Self {
        TaxelMatrix([[count; TAXEL_COLS]; TAXEL_ROWS])
    }

    pub fn total_counts(&self) -> u64 {
        self.0.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> + '_ {
        self.0.iter().flatten().copied()
    }
}

/// One haptic sample of a hand: all five fingertip arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HapticFrame {
    pub fingers: [TaxelMatrix; FINGER_COUNT],
    pub t_us: u64,
    pub seq: u32,
}

impl HapticFrame {
    pub fn finger(&self, f: FingerId) -> &TaxelMatrix {
        &self.fingers[f.index()]
    }

    pub fn finger_mut(&mut self, f: FingerId) -> &mut TaxelMatrix {
        &mut self.fingers[f.index()]
    }

    pub fn forces(&self) -> [f64; FINGER_COUNT] {
        self.fingers.map(|t| aggregate_force(&t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticConfig {
    /// Force arm per finger, m.
    pub force_arm: [f64; FINGER_COUNT],
    /// Motor saturation, N·m.
    pub torque_max: f64,
}

impl Default for HapticConfig {
    fn default() -> Self {
        HapticConfig {
            force_arm: [DEFAULT_FORCE_ARM; FINGER_COUNT],
            torque_max: GLOVE_TORQUE_MAX,
        }
    }
}

impl HapticConfig {
    pub fn validate(&self) -> Result<(), HapticsError> {
        if let Some(&arm) = self.force_arm.iter().find(|&&l| !(l > 0.0)) {
            return Err(HapticsError::NonPositiveArm(arm));
        }
        if !(self.torque_max > 0.0) {
            return Err(HapticsError::NonPositiveTorqueMax(self.torque_max));
        }
        Ok(())
    }
}

/// Torque setpoints for the five glove motors, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GloveCommand {
    pub tau: [f64; FINGER_COUNT],
}

impl GloveCommand {
    pub fn zero() -> Self {
        GloveCommand::default()
    }

    pub fn max(&self) -> f64 {
        self.tau.iter().copied().fold(0.0, f64::max)
    }
}

/// Total fingertip force in newtons.
pub fn aggregate_force(t: &TaxelMatrix) -> f64 {
    t.total_counts() as f64 / COUNTS_PER_NEWTON
}

/// Unsaturated finger torque `force · arm`.
pub fn compute_torque(force: f64, arm: f64) -> Result<f64, HapticsError> {
    if !(arm > 0.0) {
        return Err(HapticsError::NonPositiveArm(arm));
    }
    if !(force >= 0.0) || !force.is_finite() {
        return Err(HapticsError::InvalidForce(force));
    }
    Ok(force * arm)
}

/// Glove torques for one haptic frame, saturated at the configured cap.
pub fn render_frame(frame: &HapticFrame, cfg: &HapticConfig) -> Result<GloveCommand, HapticsError> {
    cfg.validate()?;
    let mut cmd = GloveCommand::zero();
    for f in FingerId::ALL {
        let raw = compute_torque(aggregate_force(frame.finger(f)), cfg.force_arm[f.index()])?;
        cmd.tau[f.index()] = raw.min(cfg.torque_max);
    }
    Ok(cmd)
}

/// Force that renders to `torque` on a finger with force arm `arm`.
pub fn force_from_torque(torque: f64, arm: f64) -> f64 {
    torque / arm
}
