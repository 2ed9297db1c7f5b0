//! Session configuration file. The schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::haptics::HapticConfig;
use crate::kinematics::ArmModel;
use crate::protocol::{RateSpec, Role};
use crate::retargeting::{RetargetConfig, Side};
use crate::simworld::{default_arms, SceneConfig};

pub const ROBOT_ENDPOINT_ENV: &str = "TELEHAPTIC_ROBOT_ENDPOINT";
pub const BRIDGE_ENDPOINT_ENV: &str = "TELEHAPTIC_BRIDGE_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    VisualOnly,
    #[default]
    VisualPlusHaptic,
}

impl FeedbackMode {
    pub fn haptic(self) -> bool {
        self == FeedbackMode::VisualPlusHaptic
    }

    pub fn name(self) -> &'static str {
        match self {
            FeedbackMode::VisualOnly => "visual_only",
            FeedbackMode::VisualPlusHaptic => "visual_plus_haptic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Ticks advance in lockstep with the peer, as fast as possible.
    #[default]
    Simulated,
    /// Ticks follow the wall clock; streams are decoupled by mailboxes.
    Wall,
}

/// `"default"` or explicit left and right arm models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmSpec {
    Named(String),
    Custom { left: Box<ArmModel>, right: Box<ArmModel> },
}

impl Default for ArmSpec {
    fn default() -> Self {
        ArmSpec::Named("default".into())
    }
}

impl ArmSpec {
    pub fn models(&self) -> Result<[ArmModel; 2], ConfigError> {
        match self {
            ArmSpec::Named(n) if n == "default" => Ok(default_arms()),
            ArmSpec::Named(n) => Err(ConfigError::Invalid(format!("unknown arm model {n:?}"))),
            ArmSpec::Custom { left, right } => Ok([(**left).clone(), (**right).clone()]),
        }
    }
}

/// A built-in scene name or a full scene definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSpec {
    Named(String),
    Inline(Box<SceneConfig>),
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec::Named("empty".into())
    }
}

impl SceneSpec {
    pub fn resolve(&self) -> Result<SceneConfig, ConfigError> {
        let scene = match self {
            SceneSpec::Named(n) => SceneConfig::builtin(n).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            SceneSpec::Inline(s) => (**s).clone(),
        };
        scene.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(scene)
    }
}

fn default_robot_endpoint() -> String {
    "127.0.0.1:7400".into()
}
fn default_bridge_endpoint() -> String {
    "127.0.0.1:7401".into()
}
fn default_duration() -> f64 {
    10.0
}
fn default_sides() -> Vec<Side> {
    vec![Side::Right]
}
fn default_staleness() -> f64 {
    0.1
}
fn default_connect_timeout() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Checked against the subcommand when present.
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default = "default_robot_endpoint")]
    pub robot_endpoint: String,
    #[serde(default = "default_bridge_endpoint")]
    pub bridge_endpoint: String,
    #[serde(default)]
    pub rates: RateSpec,
    #[serde(default)]
    pub retarget: RetargetConfig,
    #[serde(default)]
    pub haptic: HapticConfig,
    #[serde(default)]
    pub arm: ArmSpec,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub feedback_mode: FeedbackMode,
    #[serde(default)]
    pub seed: u64,
    /// Session length, s.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub clock: ClockMode,
    /// Arms driven by the operator.
    #[serde(default = "default_sides")]
    pub sides: Vec<Side>,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    /// Glove torques drop to zero when no haptic frame arrived for this long, s.
    #[serde(default = "default_staleness")]
    pub staleness_timeout_s: f64,
    /// How long to wait for the peer to connect, s.
    #[serde(default = "default_connect_timeout")]
    pub connect_timeout_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn check_endpoint(name: &str, ep: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Invalid(format!("{name} {ep:?} must be host:port"));
    let (host, port) = ep.rsplit_once(':').ok_or_else(bad)?;
    if host.is_empty() || port.parse::<u16>().is_err() {
        return Err(bad());
    }
    Ok(())
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Reads, applies environment overrides, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ROBOT_ENDPOINT_ENV) {
            self.robot_endpoint = v;
        }
        if let Some(v) = get(BRIDGE_ENDPOINT_ENV) {
            self.bridge_endpoint = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        check_endpoint("robot_endpoint", &self.robot_endpoint)?;
        check_endpoint("bridge_endpoint", &self.bridge_endpoint)?;
        if !self.rates.is_valid() {
            return invalid("rates must be positive".into());
        }
        if let Err(e) = self.retarget.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.haptic.validate() {
            return invalid(e.to_string());
        }
        for arm in self.arm.models()? {
            if let Err(e) = arm.validate() {
                return invalid(e.to_string());
            }
        }
        self.scene.resolve()?;
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return invalid("duration_s must be positive".into());
        }
        if self.sides.is_empty() || (self.sides.len() == 2 && self.sides[0] == self.sides[1]) || self.sides.len() > 2 {
            return invalid("sides must list each side at most once".into());
        }
        if !(self.staleness_timeout_s > 0.0) || !(self.connect_timeout_s >= 0.0) {
            return invalid("timeouts must be positive".into());
        }
        Ok(())
    }

    pub fn is_active(&self, side: Side) -> bool {
        self.sides.contains(&side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg = SessionConfig::from_json("{}").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.rates, RateSpec::default());
        assert_eq!(cfg.feedback_mode, FeedbackMode::VisualPlusHaptic);
        assert_eq!(cfg.sides, vec![Side::Right]);
    }

    #[test]
    fn full_round_trip() {
        let mut cfg = SessionConfig {
            role: Some(Role::Robot),
            scene: SceneSpec::Inline(Box::new(SceneConfig::builtin("pen").unwrap())),
            sides: vec![Side::Left, Side::Right],
            log_path: Some("/tmp/x.log".into()),
            ..Default::default()
        };
        cfg.feedback_mode = FeedbackMode::VisualOnly;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = SessionConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        back.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            r#"{"robot_endpoint":"nowhere"}"#,
            r#"{"rates":{"control_hz":0,"haptic_hz":62,"scene_hz":30}}"#,
            r#"{"scene":"no_such_scene"}"#,
            r#"{"duration_s":-1}"#,
            r#"{"sides":["left","left"]}"#,
            r#"{"arm":"tentacle"}"#,
            r#"{"haptic":{"force_arm":[0.04,0.04,0.0,0.04,0.04],"torque_max":0.5}}"#,
        ] {
            let cfg = SessionConfig::from_json(text).unwrap();
            assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))), "{text}");
        }
        assert!(matches!(SessionConfig::from_json(r#"{"bogus":1}"#), Err(ConfigError::Parse(_))));
        assert!(matches!(SessionConfig::from_json("{"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn env_overrides_endpoints() {
        let mut cfg = SessionConfig::default();
        cfg.apply_env(|k| (k == ROBOT_ENDPOINT_ENV).then(|| "10.0.0.2:9000".to_string()));
        assert_eq!(cfg.robot_endpoint, "10.0.0.2:9000");
        assert_eq!(cfg.bridge_endpoint, default_bridge_endpoint());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            SessionConfig::load(Path::new("/nonexistent/cfg.json")),
            Err(ConfigError::Io { .. })
        ));
    }
}
