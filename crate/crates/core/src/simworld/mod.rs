//! Robot-side world: fingertip contact with parameterized objects, taxel
//! synthesis, the pivoting-pen scene and the occluded-box scene.
//!
//! Contact is a per-finger linear spring indexed by normalized bend: finger
//! `f` touches the object at `contact_bend[f]` and pushes back with
//! `k · (bend − contact_bend[f])` beyond that point.

mod boxscene;
mod pen;
mod scenes;
mod world;

pub use boxscene::{sample_box_scene, BoxScene, BoxSpec, HandGeometry};
pub use pen::{pen_step, PenParams, PenState, PenTask, GRAVITY};
pub use scenes::{catalog_object, PenSetup, SceneConfig, SceneKind};
pub use world::{default_arms, HandParams, SideState, SimWorld, StepReport};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::haptics::{TaxelMatrix, COUNTS_PER_NEWTON, FINGER_COUNT, TAXEL_COLS, TAXEL_ROWS};
use crate::kinematics::KinematicsError;
use crate::retargeting::Side;

/// Minimum per-contact force for a grasp, N.
pub const GRASP_MIN_FORCE: f64 = 0.2;
/// Lift height of the simulated lift test, m.
pub const LIFT_HEIGHT: f64 = 0.05;
/// A lift succeeds when the object trails the hand by less than this, m.
pub const LIFT_TOLERANCE: f64 = 0.005;
/// Largest per-taxel seeded deviation, counts.
pub const TAXEL_NOISE_MAX: i32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("taxel count overflow for a {0} N fingertip force")]
    Overflow(f64),
    #[error("force must be finite and non-negative, got {0}")]
    InvalidForce(f64),
    #[error("indentation depth must be non-negative, got {0}")]
    NegativeDepth(f64),
    #[error("invalid object {name}: {reason}")]
    InvalidObject { name: String, reason: String },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("unknown scene or object {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectKind {
    Rigid,
    /// `plasticity` is the fraction of each indentation that persists.
    Deformable { plasticity: f64 },
    Pen,
}

impl ObjectKind {
    pub fn code(&self) -> crate::protocol::ObjectKindCode {
        use crate::protocol::ObjectKindCode;
        match self {
            ObjectKind::Rigid => ObjectKindCode::Rigid,
            ObjectKind::Deformable { .. } => ObjectKindCode::Deformable,
            ObjectKind::Pen => ObjectKindCode::Pen,
        }
    }
}

fn default_mass() -> f64 {
    0.1
}
fn default_friction() -> f64 {
    0.5
}
fn default_mm_per_bend() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub name: String,
    /// Hand that interacts with the object.
    pub side: Side,
    pub kind: ObjectKind,
    /// Contact stiffness, N per unit normalized bend.
    pub stiffness: f64,
    /// Bend at which each finger (thumb..little) first touches.
    pub contact_bend: [f64; FINGER_COUNT],
    #[serde(default)]
    pub pose: Pose,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Fingertip friction coefficient.
    #[serde(default = "default_friction")]
    pub friction: f64,
    /// Surface travel per unit of bend past contact, mm.
    #[serde(default = "default_mm_per_bend")]
    pub mm_per_bend: f64,
}

impl SimObject {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: &str| {
            Err(SimError::InvalidObject {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() || self.name.len() > 255 {
            return bad("name must be 1 to 255 bytes");
        }
        if !(self.stiffness > 0.0) || !self.stiffness.is_finite() {
            return bad("stiffness must be positive");
        }
        if !self.contact_bend.iter().all(|c| (0.0..=1.0).contains(c)) {
            return bad("contact_bend must lie in [0, 1]");
        }
        if !(self.mass > 0.0 && self.friction > 0.0 && self.mm_per_bend > 0.0) {
            return bad("mass, friction and mm_per_bend must be positive");
        }
        if let ObjectKind::Deformable { plasticity } = self.kind {
            if !(0.0..=1.0).contains(&plasticity) {
                return bad("plasticity must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }
}

/// Linear spring law `k · max(0, bend − contact_bend[finger])`, N.
pub fn contact_force(obj: &SimObject, finger: usize, bend: f64) -> f64 {
    obj.stiffness * (bend - obj.contact_bend[finger]).max(0.0)
}

/// Center-heavy distribution kernel, weights sum to 36.
const KERNEL: [[u64; TAXEL_COLS]; TAXEL_ROWS] = [[1, 2, 2, 1], [2, 4, 4, 2], [2, 4, 4, 2], [1, 2, 2, 1]];
const KERNEL_SUM: u64 = 36;
/// Taxel order for spreading the rounding remainder: center, edges, corners.
const REMAINDER_ORDER: [(usize, usize); 16] = [
    (1, 1),
    (1, 2),
    (2, 1),
    (2, 2),
    (0, 1),
    (0, 2),
    (1, 0),
    (2, 0),
    (1, 3),
    (2, 3),
    (3, 1),
    (3, 2),
    (0, 0),
    (0, 3),
    (3, 0),
    (3, 3),
];

/// Largest force whose taxelization cannot overflow any taxel, N.
pub fn taxel_force_limit() -> f64 {
    // Center taxel: total·4/36 + 1 remainder + noise must stay ≤ u16::MAX.
    let max_total = (u64::from(u16::MAX) - 1 - TAXEL_NOISE_MAX as u64) * KERNEL_SUM / 4;
    max_total as f64 / COUNTS_PER_NEWTON
}

/// Spreads `force` over a 4×4 taxel array. The counts sum to
/// `round(force · 3000)` exactly; per-taxel noise of at most two counts moves
/// counts between taxel pairs without changing the sum.
pub fn taxelize(force: f64, rng_seed: u64) -> Result<TaxelMatrix, SimError> {
    if !(force >= 0.0) || !force.is_finite() {
        return Err(SimError::InvalidForce(force));
    }
    if force > taxel_force_limit() {
        return Err(SimError::Overflow(force));
    }
    let total = (force * COUNTS_PER_NEWTON).round() as u64;
    let mut counts = [[0i64; TAXEL_COLS]; TAXEL_ROWS];
    let mut assigned = 0;
    for (r, row) in KERNEL.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            let v = total * w / KERNEL_SUM;
            counts[r][c] = v as i64;
            assigned += v;
        }
    }
    for &(r, c) in REMAINDER_ORDER.iter().take((total - assigned) as usize) {
        counts[r][c] += 1;
    }

    if total > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut cells: Vec<(usize, usize)> = REMAINDER_ORDER.to_vec();
        cells.shuffle(&mut rng);
        for pair in cells.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            let delta = rng.random_range(-TAXEL_NOISE_MAX..=TAXEL_NOISE_MAX) as i64;
            // Keep both taxels non-negative.
            let delta = delta.clamp(-counts[a.0][a.1], counts[b.0][b.1]);
            counts[a.0][a.1] += delta;
            counts[b.0][b.1] -= delta;
        }
    }

    let mut out = TaxelMatrix::zero();
    for r in 0..TAXEL_ROWS {
        for c in 0..TAXEL_COLS {
            out.0[r][c] = u16::try_from(counts[r][c]).map_err(|_| SimError::Overflow(force))?;
        }
    }
    Ok(out)
}

/// Per-indentation depths of a deformable object, mm.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeformationLedger {
    entries: Vec<f64>,
    total: f64,
}

impl DeformationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_indentation(&mut self, depth_mm: f64) -> Result<(), SimError> {
        if !(depth_mm >= 0.0) || !depth_mm.is_finite() {
            return Err(SimError::NegativeDepth(depth_mm));
        }
        self.entries.push(depth_mm);
        self.total += depth_mm;
        Ok(())
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total_mm(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Object displacement relative to the hand during a lift of
/// [`LIFT_HEIGHT`]. The thumb opposes the four fingers; the object is held
/// when the friction available on the weaker side of the pinch, counted on
/// both contact faces, carries its weight.
pub fn lift_displacement(forces: &[f64; FINGER_COUNT], obj: &SimObject) -> f64 {
    let thumb = forces[0];
    let fingers: f64 = forces[1..].iter().sum();
    let capacity = 2.0 * obj.friction * thumb.min(fingers);
    if capacity >= obj.weight() {
        0.0
    } else {
        LIFT_HEIGHT
    }
}

/// At least two opposing contacts (thumb and one finger) of
/// [`GRASP_MIN_FORCE`] or more, and the object follows a simulated lift.
pub fn grasp_success(forces: &[f64; FINGER_COUNT], obj: &SimObject) -> bool {
    let thumb = forces[0] >= GRASP_MIN_FORCE;
    let finger = forces[1..].iter().any(|&f| f >= GRASP_MIN_FORCE);
    thumb && finger && lift_displacement(forces, obj) < LIFT_TOLERANCE
}
