//! Operator policies: stand-ins for the human at the console. A policy sees
//! what the operator would see (delayed scene snapshots) and, in haptic mode,
//! feels the glove; it answers with wrist poses and glove readings.

use std::collections::VecDeque;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rot3, Vec3};
use crate::haptics::{force_from_torque, GloveCommand, HapticConfig, FINGER_COUNT};
use crate::protocol::SceneSnapshot;
use crate::retargeting::{wrist_for_target, OperatorCalibration, RetargetConfig, Side, WristSample};
use crate::simworld::SceneConfig;

use super::config::ConfigError;

mod grasp;
mod pen;
mod probe;
mod scripted;

pub use grasp::{ForceGrasp, NominalGrasp, VisualGrasp};
pub use pen::PenPolicy;
pub use probe::BlindProbe;
pub use scripted::{ClosureRamp, TrajectoryReplay, TrajectoryRow};

/// Scene snapshots with their arrival time, oldest first.
#[derive(Debug, Clone, Default)]
pub struct SceneHistory {
    entries: VecDeque<(f64, SceneSnapshot)>,
}

const HISTORY_LEN: usize = 256;

impl SceneHistory {
    pub fn push(&mut self, t: f64, scene: SceneSnapshot) {
        if self.entries.len() == HISTORY_LEN {
            self.entries.pop_front();
        }
        self.entries.push_back((t, scene));
    }

    pub fn latest(&self) -> Option<&SceneSnapshot> {
        self.entries.back().map(|(_, s)| s)
    }

    /// Newest snapshot that arrived at least `delay` before `t`, with its
    /// arrival time.
    pub fn delayed(&self, t: f64, delay: f64) -> Option<(f64, &SceneSnapshot)> {
        let cutoff = t - delay + 1e-9;
        self.entries.iter().rev().find(|(at, _)| *at <= cutoff).map(|(at, s)| (*at, s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fingertip forces as felt through the glove.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Felt {
    pub forces: [f64; FINGER_COUNT],
    /// Haptic frame sequence number.
    pub seq: u32,
}

impl Felt {
    pub fn from_command(cmd: &GloveCommand, cfg: &HapticConfig, seq: u32) -> Self {
        Felt {
            forces: std::array::from_fn(|f| force_from_torque(cmd.tau[f], cfg.force_arm[f])),
            seq,
        }
    }
}

/// What a policy perceives at one control tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Session time, s.
    pub t: f64,
    pub t_us: u64,
    /// Per side (left, right); `None` without glove feedback or before the
    /// first haptic frame.
    pub felt: [Option<Felt>; 2],
    pub scenes: &'a SceneHistory,
}

/// One tracker and glove reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorInput {
    pub side: Side,
    pub wrist: WristSample,
    pub glove_bend: [f64; FINGER_COUNT],
    pub glove_split: f64,
}

pub trait Policy: Send {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput>;

    /// Time at which the policy considered its task over.
    fn finished_at(&self) -> Option<f64> {
        None
    }
}

/// Synthesizes tracker samples for a policy that plans in robot coordinates.
/// The tracker frame is deliberately skewed from the robot frame so that
/// calibration does real work.
#[derive(Debug, Clone, Copy)]
pub struct VirtualTracker {
    pub calib: OperatorCalibration,
    pub retarget: RetargetConfig,
}

impl VirtualTracker {
    pub fn new(retarget: RetargetConfig) -> Self {
        VirtualTracker {
            calib: OperatorCalibration {
                p_init: Vec3::new(0.3, -0.2, 1.1),
                r_gl: Rot3::from_euler_xyz(0.1, -0.2, 1.3),
            },
            retarget,
        }
    }

    pub fn wrist(&self, side: Side, target: &Pose, t_us: u64) -> WristSample {
        wrist_for_target(&self.calib, self.retarget.home(side), target, &self.retarget, t_us)
    }

    pub fn home(&self, side: Side) -> Pose {
        self.retarget.home(side).pose()
    }

    pub fn at_home(&self, side: Side, t_us: u64) -> WristSample {
        self.wrist(side, &self.home(side), t_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    HapticClosedLoop,
    VisualClosedLoop,
    ScriptedTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Close the hand at a steady rate, ignoring feedback.
    #[default]
    Closure,
    /// Close on an in-hand object and hold it.
    Grasp,
    /// Find and grasp the object hidden in the box.
    BlindGrasp,
    /// Let the pen slide through its waypoints.
    PenSlide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Aggressive,
    #[default]
    Conservative,
}

impl Strategy {
    /// Finger closing rate, bend per second.
    pub fn close_rate(self) -> f64 {
        match self {
            Strategy::Aggressive => 2.0,
            Strategy::Conservative => 0.5,
        }
    }
}

fn default_target_force() -> f64 {
    2.0
}
fn default_threshold() -> f64 {
    3.0
}
fn default_delay() -> f64 {
    0.2
}
fn default_noise() -> f64 {
    0.3
}
fn default_closure_rate() -> f64 {
    0.1
}
fn default_max_bend() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub task: Task,
    /// Per-finger force at which haptic grasping stops closing, N.
    #[serde(default = "default_target_force")]
    pub target_force: f64,
    /// Visible indentation at which visual grasping stops closing, mm.
    #[serde(default = "default_threshold")]
    pub indentation_threshold_mm: f64,
    /// Camera-to-operator latency, s.
    #[serde(default = "default_delay")]
    pub observation_delay_s: f64,
    /// Standard deviation of visual position estimates, mm.
    #[serde(default = "default_noise")]
    pub observation_noise_mm: f64,
    #[serde(default)]
    pub strategy: Strategy,
    /// Scripted closure rate, bend per second.
    #[serde(default = "default_closure_rate")]
    pub closure_rate: f64,
    /// Scripted closure end point.
    #[serde(default = "default_max_bend")]
    pub max_bend: f64,
    /// Recorded operator trajectory (CSV) for `scripted_trajectory`.
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, task: Task) -> Self {
        PolicySpec {
            kind,
            task,
            target_force: default_target_force(),
            indentation_threshold_mm: default_threshold(),
            observation_delay_s: default_delay(),
            observation_noise_mm: default_noise(),
            strategy: Strategy::default(),
            closure_rate: default_closure_rate(),
            max_bend: default_max_bend(),
            trajectory: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("target_force", self.target_force),
            ("indentation_threshold_mm", self.indentation_threshold_mm),
            ("closure_rate", self.closure_rate),
            ("max_bend", self.max_bend),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("policy {name} must be positive")));
            }
        }
        if !(self.observation_delay_s >= 0.0) || !(self.observation_noise_mm >= 0.0) {
            return Err(ConfigError::Invalid("policy delay and noise must be non-negative".into()));
        }
        if self.max_bend > 1.0 {
            return Err(ConfigError::Invalid("policy max_bend must be at most 1".into()));
        }
        Ok(())
    }
}

/// What the operator knows about the session before it starts.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub side: Side,
    pub retarget: RetargetConfig,
    pub haptic: HapticConfig,
    /// Nominal scene, without the per-trial variation the robot applies.
    pub scene: SceneConfig,
    pub control_hz: f64,
}

pub fn build_policy(spec: &PolicySpec, ctx: &PolicyContext) -> Result<Box<dyn Policy>, ConfigError> {
    spec.validate()?;
    let tracker = VirtualTracker::new(ctx.retarget);
    let haptic = spec.kind == PolicyKind::HapticClosedLoop;
    Ok(match (spec.kind, spec.task) {
        (PolicyKind::ScriptedTrajectory, _) => match &spec.trajectory {
            Some(path) => Box::new(TrajectoryReplay::load(path)?),
            None => Box::new(ClosureRamp::new(ctx.side, tracker, spec.closure_rate, spec.max_bend)),
        },
        (_, Task::Closure) => Box::new(ClosureRamp::new(ctx.side, tracker, spec.closure_rate, spec.max_bend)),
        (PolicyKind::HapticClosedLoop, Task::Grasp) => Box::new(ForceGrasp::new(
            ctx.side,
            tracker,
            spec.strategy.close_rate(),
            spec.target_force,
        )),
        (PolicyKind::VisualClosedLoop, Task::Grasp) => Box::new(VisualGrasp::new(ctx.side, tracker, spec)),
        (_, Task::BlindGrasp) => {
            let spec_box = ctx
                .scene
                .box_spec
                .ok_or_else(|| ConfigError::Invalid("blind_grasp needs a box scene".into()))?;
            if haptic {
                Box::new(BlindProbe::new(ctx.side, tracker, spec_box, ctx.scene.hand.geometry))
            } else {
                Box::new(NominalGrasp::new(ctx.side, tracker, spec_box.center))
            }
        }
        (_, Task::PenSlide) => {
            let pen = ctx
                .scene
                .pen
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("pen_slide needs a pen scene".into()))?;
            let obj = ctx
                .scene
                .objects
                .iter()
                .find(|o| o.name == pen.object)
                .ok_or_else(|| ConfigError::Invalid("pen object missing".into()))?;
            Box::new(PenPolicy::new(
                ctx.side,
                tracker,
                pen,
                obj,
                spec,
                haptic,
                ctx.scene.hand.slew_rate,
            ))
        }
    })
}
