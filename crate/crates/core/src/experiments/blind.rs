//! Grasping an object hidden in a box: tactile probing against a baseline
//! that closes at the nominal box center.

use super::stats::sign_test_p;
use super::{trial_seed, ExperimentError, ExperimentResult, Trial, TrialRecord, Verdict};
use crate::sessions::policy::{PolicyKind, PolicySpec, Task};
use crate::sessions::{ConfigError, FeedbackMode};
use crate::simworld::{BoxSpec, SceneConfig};

pub const BLIND_TIMEOUT_S: f64 = 30.0;
pub const MIN_TRIALS: u32 = 100;
const HAPTIC: &str = "haptic_probe";
const BASELINE: &str = "visual_nominal";

fn run_one(scene: &SceneConfig, kind: PolicyKind, mode: FeedbackMode, seed: u64, i: u32, condition: &str) -> Result<TrialRecord, ExperimentError> {
    let spec = PolicySpec {
        seed,
        ..PolicySpec::new(kind, Task::BlindGrasp)
    };
    let out = Trial::new(scene.clone(), scene.clone(), spec, mode, seed, BLIND_TIMEOUT_S).run()?;
    let success = out.world.grasp_success("hidden");
    Ok(TrialRecord {
        condition: condition.into(),
        trial: i,
        seed,
        success,
        time_s: if success { out.end_time } else { BLIND_TIMEOUT_S },
        deformation_mm: None,
        slope: None,
    })
}

/// Default box, object placement drawn per trial seed.
pub fn blind_grasp(trials: u32, seed: u64) -> Result<ExperimentResult, ExperimentError> {
    blind_grasp_in(&BoxSpec::default(), trials, seed)
}

pub fn blind_grasp_in(spec: &BoxSpec, trials: u32, seed: u64) -> Result<ExperimentResult, ExperimentError> {
    if trials < MIN_TRIALS {
        return Err(ConfigError::Invalid(format!("blind_grasp needs at least {MIN_TRIALS} trials")).into());
    }
    let scene = SceneConfig {
        box_spec: Some(*spec),
        ..SceneConfig::empty("box")
    };
    let mut records = Vec::new();
    for i in 0..trials {
        let s = trial_seed(seed, i);
        records.push(run_one(&scene, PolicyKind::HapticClosedLoop, FeedbackMode::VisualPlusHaptic, s, i, HAPTIC)?);
        records.push(run_one(&scene, PolicyKind::VisualClosedLoop, FeedbackMode::VisualOnly, s, i, BASELINE)?);
    }
    let mut result = ExperimentResult::new("blind_grasp", seed, &[HAPTIC, BASELINE], records, Vec::new());
    let h = result.condition(HAPTIC).expect("condition").success_rate;
    let b = result.condition(BASELINE).expect("condition").success_rate;
    // Paired outcome: haptic succeeds where the baseline fails.
    let (mut wins, mut losses) = (0, 0);
    for pair in result.records.chunks(2) {
        match (pair[0].success, pair[1].success) {
            (true, false) => wins += 1,
            (false, true) => losses += 1,
            _ => {}
        }
    }
    result.verdicts = vec![
        Verdict::new("haptic_success_at_least_0.4", h >= 0.4, format!("haptic {h:.3}")),
        Verdict::new("haptic_at_least_4x_baseline", h >= 4.0 * b, format!("haptic {h:.3}, baseline {b:.3}")),
        Verdict::new("baseline_at_most_0.1", b <= 0.1, format!("baseline {b:.3}")),
        Verdict::new(
            "paired_sign_test",
            sign_test_p(wins, losses) < 0.05,
            format!("{wins} haptic-only successes, {losses} baseline-only, p={:.2e}", sign_test_p(wins, losses)),
        ),
    ];
    Ok(result)
}
