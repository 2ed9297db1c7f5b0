//! Letting a pinched pen slide through its waypoints, with and without
//! haptic feedback, on paired per-trial pen variations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::{mean, paired_wins, sign_test_p};
use super::{trial_seed, ExperimentError, ExperimentResult, Trial, TrialRecord, Verdict};
use crate::sessions::policy::{PolicyKind, PolicySpec, Task};
use crate::sessions::FeedbackMode;
use crate::simworld::SceneConfig;

pub const SLIDE_TIMEOUT_S: f64 = 20.0;
const HAPTIC: &str = "haptic";
const VISUAL: &str = "visual";

/// The built-in pen scene with mass within ±10 %, friction within ±15 %,
/// stiffness within ±10 % and thumb and index contact points within ±0.01.
/// The initial finger bends stay at their nominal values.
pub fn jitter_pen_scene(nominal: &SceneConfig, seed: u64) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7065_6e73);
    let mut scene = nominal.clone();
    let Some(pen) = scene.pen.as_mut() else {
        return scene;
    };
    let mass = rng.random_range(0.9..=1.1);
    let friction = rng.random_range(0.85..=1.15);
    pen.params.mass *= mass;
    pen.params.inertia *= mass;
    pen.params.friction *= friction;
    let name = pen.object.clone();
    if let Some(obj) = scene.objects.iter_mut().find(|o| o.name == name) {
        obj.mass *= mass;
        obj.friction *= friction;
        obj.stiffness *= rng.random_range(0.9..=1.1);
        for c in obj.contact_bend.iter_mut().take(2) {
            *c = (*c + rng.random_range(-0.01..=0.01)).clamp(0.0, 1.0);
        }
    }
    scene
}

/// One pen session. Succeeds when the pen stopped at every angle in turn
/// without dropping or passing the final angle; otherwise its time is the
/// timeout.
pub fn pen_trial(truth: &SceneConfig, nominal: &SceneConfig, spec: &PolicySpec, mode: FeedbackMode, seed: u64) -> Result<TrialRecord, ExperimentError> {
    let out = Trial::new(truth.clone(), nominal.clone(), spec.clone(), mode, seed, SLIDE_TIMEOUT_S).run()?;
    let w = &out.world;
    let done = w.pen_completed_at().filter(|_| !w.pen_dropped() && !w.pen_overshot());
    Ok(TrialRecord {
        condition: mode.name().into(),
        trial: 0,
        seed,
        success: done.is_some(),
        time_s: done.unwrap_or(SLIDE_TIMEOUT_S),
        deformation_mm: None,
        slope: None,
    })
}

pub fn active_slide(trials: u32, seed: u64) -> Result<ExperimentResult, ExperimentError> {
    let nominal = SceneConfig::builtin("pen").expect("built-in pen scene");
    let mut records = Vec::new();
    for i in 0..trials {
        let s = trial_seed(seed, i);
        let truth = jitter_pen_scene(&nominal, s);
        for (name, kind, mode) in [
            (HAPTIC, PolicyKind::HapticClosedLoop, FeedbackMode::VisualPlusHaptic),
            (VISUAL, PolicyKind::VisualClosedLoop, FeedbackMode::VisualOnly),
        ] {
            let spec = PolicySpec {
                seed: s,
                ..PolicySpec::new(kind, Task::PenSlide)
            };
            let mut rec = pen_trial(&truth, &nominal, &spec, mode, s)?;
            rec.condition = name.into();
            rec.trial = i;
            records.push(rec);
        }
    }
    let column = |name: &str| -> Vec<f64> { records.iter().filter(|r| r.condition == name).map(|r| r.time_s).collect() };
    let (h, v) = (column(HAPTIC), column(VISUAL));
    let (w, l, _) = paired_wins(&h, &v);
    let p = sign_test_p(w, l);
    let (mh, mv) = (mean(&h).unwrap_or(f64::NAN), mean(&v).unwrap_or(f64::NAN));
    let mut result = ExperimentResult::new("active_slide", seed, &[HAPTIC, VISUAL], records, Vec::new());
    let sh = result.condition(HAPTIC).expect("condition").success_rate;
    let sv = result.condition(VISUAL).expect("condition").success_rate;
    result.verdicts = vec![
        Verdict::new("haptic_faster", mh < mv, format!("mean {mh:.2} vs {mv:.2} s")),
        Verdict::new("haptic_success_not_lower", sh >= sv, format!("{sh:.2} vs {sv:.2}")),
        Verdict::new("paired_sign_test", p < 0.05, format!("{w}/{} pairs faster, p={p:.2e}", w + l)),
    ];
    Ok(result)
}
