//! Robot and operator sessions: configuration, logs, the two cores, the
//! drivers that connect them, and the console bridge.

use thiserror::Error;

pub mod bridge;
pub mod config;
pub mod log;
pub mod policy;

mod loopback;
mod net;
mod operator;
mod robot;

pub use config::{ArmSpec, ClockMode, ConfigError, FeedbackMode, SceneSpec, SessionConfig};
pub use log::{parse_log, read_log, verify_retargeting, Direction, LogError, LogRecord, ParsedLog, ReplayReport, SessionLog};
pub use loopback::{Loopback, PacketFilter, SessionOutcome};
pub use net::{run_operator, OperatorHook, RobotServer};
pub use operator::{OperatorCore, OperatorEvent, OperatorReport};
pub use robot::{RobotCore, RobotReport};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Sim(#[from] crate::simworld::SimError),
    #[error("haptics: {0}")]
    Haptics(#[from] crate::haptics::HapticsError),
    #[error("protocol: {0}")]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot bind {endpoint}: {source}")]
    Bind {
        endpoint: String,
        source: std::io::Error,
    },
    #[error("cannot connect to {endpoint}: {source}")]
    Connect {
        endpoint: String,
        source: std::io::Error,
    },
    #[error("peer closed the connection")]
    PeerLost,
    #[error("handshake failed: {0}")]
    Handshake(String),
}

impl SessionError {
    /// Network failures as opposed to configuration or internal errors.
    pub fn is_network(&self) -> bool {
        matches!(
            self,
            SessionError::Io(_)
                | SessionError::Bind { .. }
                | SessionError::Connect { .. }
                | SessionError::PeerLost
                | SessionError::Handshake(_)
                | SessionError::Protocol(_)
        )
    }
}
