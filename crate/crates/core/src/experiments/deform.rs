//! Grasping a deformable fruit under aggressive and conservative closing,
//! with and without haptic feedback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::{mean, paired_wins, sign_test_p};
use super::{trial_seed, ExperimentError, ExperimentResult, Trial, TrialRecord, Verdict};
use crate::retargeting::Side;
use crate::sessions::policy::{PolicyKind, PolicySpec, Strategy, Task};
use crate::sessions::FeedbackMode;
use crate::simworld::{catalog_object, SceneConfig, SimObject};

pub const DEFORM_TIMEOUT_S: f64 = 5.0;
const OBJECT: &str = "soft_fruit";
const CONDITIONS: [(&str, bool, Strategy); 4] = [
    ("haptic_aggressive", true, Strategy::Aggressive),
    ("visual_aggressive", false, Strategy::Aggressive),
    ("haptic_conservative", true, Strategy::Conservative),
    ("visual_conservative", false, Strategy::Conservative),
];

/// Per-trial fruit: stiffness within ±20 %, contact points within ±0.03.
fn jittered(nominal: &SimObject, seed: u64) -> SimObject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6672_7569_74);
    let mut o = nominal.clone();
    o.stiffness *= rng.random_range(0.8..=1.2);
    for c in o.contact_bend.iter_mut() {
        *c = (*c + rng.random_range(-0.03..=0.03)).clamp(0.0, 1.0);
    }
    o
}

pub fn deform_grasp(trials: u32, seed: u64) -> Result<ExperimentResult, ExperimentError> {
    let nominal_obj = catalog_object(OBJECT, Side::Right).expect("catalog object");
    let nominal = SceneConfig::single(nominal_obj.clone());
    let mut records = Vec::new();
    for i in 0..trials {
        let s = trial_seed(seed, i);
        let truth = SceneConfig::single(jittered(&nominal_obj, s));
        for (name, haptic, strategy) in CONDITIONS {
            let (kind, mode) = if haptic {
                (PolicyKind::HapticClosedLoop, FeedbackMode::VisualPlusHaptic)
            } else {
                (PolicyKind::VisualClosedLoop, FeedbackMode::VisualOnly)
            };
            let spec = PolicySpec {
                strategy,
                seed: s,
                ..PolicySpec::new(kind, Task::Grasp)
            };
            let out = Trial::new(truth.clone(), nominal.clone(), spec, mode, s, DEFORM_TIMEOUT_S).run()?;
            let success = out.world.grasp_success(OBJECT);
            records.push(TrialRecord {
                condition: name.into(),
                trial: i,
                seed: s,
                success,
                time_s: if success { out.end_time } else { DEFORM_TIMEOUT_S },
                deformation_mm: Some(out.world.ledger().total_mm()),
                slope: None,
            });
        }
    }

    let column = |name: &str, f: fn(&TrialRecord) -> f64| -> Vec<f64> {
        records.iter().filter(|r| r.condition == name).map(f).collect()
    };
    let deformation = |r: &TrialRecord| r.deformation_mm.unwrap_or(f64::NAN);
    let time = |r: &TrialRecord| r.time_s;
    let mut verdicts = Vec::new();
    for strategy in ["aggressive", "conservative"] {
        let h = column(&format!("haptic_{strategy}"), deformation);
        let v = column(&format!("visual_{strategy}"), deformation);
        let (w, l, _) = paired_wins(&h, &v);
        let p = sign_test_p(w, l);
        let (mh, mv) = (mean(&h).unwrap_or(f64::NAN), mean(&v).unwrap_or(f64::NAN));
        verdicts.push(Verdict::new(
            &format!("haptic_deforms_less_{strategy}"),
            mh < mv && p < 0.05,
            format!("mean {mh:.2} vs {mv:.2} mm, {w}/{} pairs lower, p={p:.2e}", w + l),
        ));
    }
    for mode in ["haptic", "visual"] {
        let c = column(&format!("{mode}_conservative"), time);
        let a = column(&format!("{mode}_aggressive"), time);
        // Conservative "wins" this comparison by being slower.
        let (w, l, _) = paired_wins(&a, &c);
        let p = sign_test_p(w, l);
        let (mc, ma) = (mean(&c).unwrap_or(f64::NAN), mean(&a).unwrap_or(f64::NAN));
        verdicts.push(Verdict::new(
            &format!("conservative_slower_{mode}"),
            mc > ma && p < 0.05,
            format!("mean {mc:.3} vs {ma:.3} s, {w}/{} pairs slower, p={p:.2e}", w + l),
        ));
    }
    let names: Vec<&str> = CONDITIONS.iter().map(|c| c.0).collect();
    Ok(ExperimentResult::new("deform_grasp", seed, &names, records, verdicts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let o = catalog_object(OBJECT, Side::Right).unwrap();
        assert_eq!(jittered(&o, 3), jittered(&o, 3));
        for s in 0..100 {
            let j = jittered(&o, s);
            j.validate().unwrap();
            assert!((j.stiffness / o.stiffness - 1.0).abs() <= 0.2 + 1e-12);
            for f in 0..5 {
                assert!((j.contact_bend[f] - o.contact_bend[f]).abs() <= 0.03 + 1e-12);
            }
        }
    }
}
