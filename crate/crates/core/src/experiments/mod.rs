//! Batch experiments. Every trial is a full loopback session: operator and
//! robot cores exchange real wire frames on the simulated clock, so results
//! are reproducible from the base seed alone. Trials run one after another.

mod blind;
mod deform;
mod slide;
pub mod stats;
mod stiffness;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retargeting::Side;
use crate::sessions::policy::{build_policy, PolicyContext, PolicySpec};
use crate::sessions::{ConfigError, FeedbackMode, Loopback, SceneSpec, SessionConfig, SessionError, SessionLog, SessionOutcome};
use crate::simworld::SceneConfig;

pub use blind::{blind_grasp, blind_grasp_in, BLIND_TIMEOUT_S, MIN_TRIALS as BLIND_MIN_TRIALS};
pub use deform::{deform_grasp, DEFORM_TIMEOUT_S};
pub use slide::{active_slide, jitter_pen_scene, pen_trial, SLIDE_TIMEOUT_S};
pub use stiffness::{fit_slope, stiffness_curves, CurvePoint, CONTROL_CONDITION, FIT_FINGER};

pub const EXPERIMENTS: &[&str] = &["stiffness_curves", "blind_grasp", "active_slide", "deform_grasp"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write summary: {0}")]
    Json(#[from] serde_json::Error),
}

/// One CSV row. Fields an experiment does not measure are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: String,
    pub trial: u32,
    pub seed: u64,
    pub success: bool,
    /// Completion time; failed trials count as the timeout, s.
    pub time_s: f64,
    pub deformation_mm: Option<f64>,
    /// Fitted force-per-bend slope, N.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub mean_deformation_mm: Option<f64>,
    pub slope: Option<f64>,
}

impl ConditionSummary {
    pub fn from_records(condition: &str, records: &[TrialRecord]) -> Self {
        let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.condition == condition).collect();
        let n = rows.len() as u32;
        let successes = rows.iter().filter(|r| r.success).count() as u32;
        let times: Vec<f64> = rows.iter().map(|r| r.time_s).collect();
        let deform: Vec<f64> = rows.iter().filter_map(|r| r.deformation_mm).collect();
        ConditionSummary {
            condition: condition.to_string(),
            trials: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { f64::from(successes) / f64::from(n) },
            mean_time_s: stats::mean(&times).unwrap_or(0.0),
            mean_deformation_mm: stats::mean(&deform),
            slope: rows.first().and_then(|r| r.slope),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &str, passed: bool, detail: String) -> Self {
        Verdict {
            criterion: criterion.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub seed: u64,
    pub conditions: Vec<ConditionSummary>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    /// Raw force-versus-bend samples, stiffness experiment only.
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

impl ExperimentResult {
    fn new(name: &str, seed: u64, conditions: &[&str], records: Vec<TrialRecord>, verdicts: Vec<Verdict>) -> Self {
        ExperimentResult {
            name: name.to_string(),
            seed,
            conditions: conditions.iter().map(|c| ConditionSummary::from_records(c, &records)).collect(),
            verdicts,
            records,
            curve: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentOptions {
    /// Trials per condition; each experiment has its own default.
    pub trials: Option<u32>,
    pub seed: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions { trials: None, seed: 1 }
    }
}

/// Runs one experiment by name with its default objects and settings.
pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<ExperimentResult, ExperimentError> {
    if opts.trials == Some(0) {
        return Err(ConfigError::Invalid("trials must be positive".into()).into());
    }
    match name {
        "stiffness_curves" => stiffness_curves(&stiffness::default_objects(), opts.seed),
        "blind_grasp" => blind_grasp(opts.trials.unwrap_or(200), opts.seed),
        "active_slide" => active_slide(opts.trials.unwrap_or(25), opts.seed),
        "deform_grasp" => deform_grasp(opts.trials.unwrap_or(25), opts.seed),
        other => Err(ConfigError::Invalid(format!("unknown experiment {other:?}; expected one of {EXPERIMENTS:?}")).into()),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiments: &'a [ExperimentResult],
}

/// Writes `<name>.csv` per experiment (plus `stiffness_curves_points.csv`)
/// and `summary.json` into `dir`. Output bytes depend only on the results.
pub fn emit_report(results: &[ExperimentResult], dir: &Path) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    for r in results {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", r.name)))?;
        for rec in &r.records {
            w.serialize(rec)?;
        }
        w.flush()?;
        if !r.curve.is_empty() {
            let mut w = csv::Writer::from_path(dir.join(format!("{}_points.csv", r.name)))?;
            for p in &r.curve {
                w.serialize(p)?;
            }
            w.flush()?;
        }
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&Summary { experiments: results })?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// One loopback session that stops once the policy reports completion.
pub(crate) struct Trial {
    pub cfg: SessionConfig,
    /// What the robot simulates.
    pub truth: SceneConfig,
    /// What the operator policy is told.
    pub nominal: SceneConfig,
    pub policy: PolicySpec,
    pub keep_robot_log: bool,
}

impl Trial {
    pub fn new(truth: SceneConfig, nominal: SceneConfig, policy: PolicySpec, mode: FeedbackMode, seed: u64, timeout_s: f64) -> Self {
        let cfg = SessionConfig {
            scene: SceneSpec::Inline(Box::new(truth.clone())),
            feedback_mode: mode,
            seed,
            duration_s: timeout_s,
            sides: vec![Side::Right],
            ..Default::default()
        };
        Trial {
            cfg,
            truth,
            nominal,
            policy,
            keep_robot_log: false,
        }
    }

    pub fn run(self) -> Result<SessionOutcome, ExperimentError> {
        let ctx = PolicyContext {
            side: Side::Right,
            retarget: self.cfg.retarget,
            haptic: self.cfg.haptic,
            scene: self.nominal,
            control_hz: self.cfg.rates.control_hz,
        };
        let policy = build_policy(&self.policy, &ctx)?;
        let robot_log = if self.keep_robot_log {
            SessionLog::memory(&self.cfg)
        } else {
            SessionLog::disabled()
        };
        let session = Loopback::new(&self.cfg, &self.truth, policy, robot_log, SessionLog::disabled())?;
        Ok(session.stop_when_finished(true).run()?)
    }
}

/// Seed of trial `i` under base seed `base`; conditions share it so trials
/// pair up.
pub(crate) fn trial_seed(base: u64, i: u32) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(u64::from(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_records() {
        let rec = |c: &str, s: bool, t: f64| TrialRecord {
            condition: c.into(),
            trial: 0,
            seed: 0,
            success: s,
            time_s: t,
            deformation_mm: None,
            slope: None,
        };
        let records = vec![rec("a", true, 1.0), rec("a", false, 3.0), rec("b", true, 2.0)];
        let a = ConditionSummary::from_records("a", &records);
        assert_eq!((a.trials, a.successes), (2, 1));
        assert_eq!(a.success_rate, 0.5);
        assert_eq!(a.mean_time_s, 2.0);
        assert_eq!(a.mean_deformation_mm, None);
    }

    #[test]
    fn empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(&[], dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["experiments"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn unknown_and_zero_trials_rejected() {
        let opts = ExperimentOptions::default();
        assert!(matches!(run_experiment("nope", &opts), Err(ExperimentError::Config(_))));
        let zero = ExperimentOptions { trials: Some(0), ..opts };
        assert!(matches!(run_experiment("blind_grasp", &zero), Err(ExperimentError::Config(_))));
        let few = ExperimentOptions { trials: Some(99), ..opts };
        assert!(matches!(run_experiment("blind_grasp", &few), Err(ExperimentError::Config(_))));
    }
}
