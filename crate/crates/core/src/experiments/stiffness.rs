//! Force-versus-closure curves for objects of different stiffness, recorded
//! from the robot-side session log.

use serde::{Deserialize, Serialize};

use super::stats::ls_slope;
use super::{ExperimentError, ExperimentResult, Trial, TrialRecord, Verdict};
use crate::haptics::FINGER_COUNT;
use crate::protocol::Message;
use crate::retargeting::Side;
use crate::sessions::policy::{PolicyKind, PolicySpec, Task};
use crate::sessions::{parse_log, ConfigError, Direction, FeedbackMode};
use crate::simworld::{catalog_object, SceneConfig, SimObject};

/// Condition name of the no-object run, which stands in for zero stiffness.
pub const CONTROL_CONDITION: &str = "no_object";
/// Finger whose curve is fitted.
pub const FIT_FINGER: usize = 1;
const CLOSURE_RATE: f64 = 0.1;
const MAX_BEND: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub condition: String,
    pub stiffness: f64,
    pub t_s: f64,
    pub finger: usize,
    pub bend: f64,
    pub force_n: f64,
}

pub(super) fn default_objects() -> Vec<SimObject> {
    ["soft_bottle", "hard_bottle", "drill"]
        .iter()
        .map(|n| catalog_object(n, Side::Right).expect("catalog object"))
        .collect()
}

/// Slope of force on bend for one condition and finger, over the samples in
/// contact (force above zero), or over all samples when fewer than two are.
pub fn fit_slope(points: &[CurvePoint], condition: &str, finger: usize) -> Option<f64> {
    let all: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.condition == condition && p.finger == finger)
        .map(|p| (p.bend, p.force_n))
        .collect();
    let contact: Vec<(f64, f64)> = all.iter().copied().filter(|p| p.1 > 0.0).collect();
    ls_slope(if contact.len() >= 2 { &contact } else { &all })
}

fn curve(condition: &str, stiffness: f64, bytes: &[u8]) -> Result<Vec<CurvePoint>, ExperimentError> {
    let log = parse_log(bytes).map_err(|e| ConfigError::Invalid(format!("robot log unreadable: {e}")))?;
    let mut hand = None;
    let mut out = Vec::new();
    for r in &log.records {
        match (&r.packet.message, r.direction) {
            (Message::HandState { hand: h, .. }, Direction::Local) => hand = Some(*h),
            (Message::Haptic { frame, .. }, Direction::Sent) => {
                let Some(h) = hand.take() else { continue };
                let forces = frame.forces();
                for f in 0..FINGER_COUNT {
                    out.push(CurvePoint {
                        condition: condition.to_string(),
                        stiffness,
                        t_s: r.packet.t_us as f64 * 1e-6,
                        finger: f,
                        bend: h.bend[f],
                        force_n: forces[f],
                    });
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn check_objects(objects: &[SimObject]) -> Result<(), ConfigError> {
    if objects.is_empty() {
        return Err(ConfigError::Invalid("stiffness_curves needs at least one object".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for o in objects {
        o.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if o.name == CONTROL_CONDITION {
            return Err(ConfigError::Invalid(format!("object name {CONTROL_CONDITION:?} is reserved")));
        }
        if !names.insert(o.name.as_str()) {
            return Err(ConfigError::Invalid(format!("object {:?} listed twice", o.name)));
        }
    }
    Ok(())
}

/// Closes the right hand at a constant rate against each object in turn,
/// plus once with no object. Slopes must rise with configured stiffness.
pub fn stiffness_curves(objects: &[SimObject], seed: u64) -> Result<ExperimentResult, ExperimentError> {
    check_objects(objects)?;
    let policy = PolicySpec {
        closure_rate: CLOSURE_RATE,
        max_bend: MAX_BEND,
        ..PolicySpec::new(PolicyKind::ScriptedTrajectory, Task::Closure)
    };
    let mut runs: Vec<(String, f64, SceneConfig)> = vec![(CONTROL_CONDITION.into(), 0.0, SceneConfig::empty(CONTROL_CONDITION))];
    for o in objects {
        let obj = SimObject { side: Side::Right, ..o.clone() };
        runs.push((o.name.clone(), o.stiffness, SceneConfig::single(obj)));
    }

    let mut points = Vec::new();
    let mut records = Vec::new();
    for (condition, k, scene) in &runs {
        let mut trial = Trial::new(scene.clone(), scene.clone(), policy.clone(), FeedbackMode::VisualPlusHaptic, seed, MAX_BEND / CLOSURE_RATE + 1.0);
        trial.keep_robot_log = true;
        let out = trial.run()?;
        let bytes = out.robot_log.into_bytes().unwrap_or_default();
        let pts = curve(condition, *k, &bytes)?;
        let slope = fit_slope(&pts, condition, FIT_FINGER);
        records.push(TrialRecord {
            condition: condition.clone(),
            trial: 0,
            seed,
            success: slope.is_some(),
            time_s: out.end_time,
            deformation_mm: None,
            slope,
        });
        points.extend(pts);
    }

    // Order by configured stiffness; the control run comes first at zero.
    let mut order: Vec<(f64, f64, &str)> = runs
        .iter()
        .zip(&records)
        .map(|((c, k, _), r)| (*k, r.slope.unwrap_or(f64::NAN), c.as_str()))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let increasing = order.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    let listing = order.iter().map(|(k, s, c)| format!("{c} k={k} slope={s:.1}")).collect::<Vec<_>>().join(", ");
    let control = records[0].slope.unwrap_or(f64::NAN);

    let conditions: Vec<&str> = runs.iter().map(|r| r.0.as_str()).collect();
    let verdicts = vec![
        Verdict::new("slopes_strictly_increasing", increasing, listing),
        Verdict::new("control_flat", control.abs() < 1e-9, format!("no-object slope {control}")),
    ];
    let mut result = ExperimentResult::new("stiffness_curves", seed, &conditions, records, verdicts);
    result.curve = points;
    Ok(result)
}
