//! Append-only session logs: a preamble with the session config, then one
//! record per message, each record reusing the wire frame encoding.
//!
//! ```text
//! preamble: "THLOG" 0x00 0x00 0x01 | u32 LE n | n bytes of config JSON
//! record:   u32 LE frame_len | u8 direction | u64 LE tick | frame bytes
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::config::SessionConfig;
use crate::geometry::Rot3;
use crate::protocol::{decode, encode, Message, Packet, ProtocolError};
use crate::retargeting::{apply_to_robot, calibrate, relative_pose, Side};

pub const LOG_MAGIC: [u8; 8] = *b"THLOG\x00\x00\x01";
const RECORD_HEADER: usize = 4 + 1 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Received = 0,
    Sent = 1,
    /// Internal state recorded for offline checks; never on the wire.
    Local = 2,
}

impl Direction {
    fn from_u8(v: u8) -> Option<Direction> {
        match v {
            0 => Some(Direction::Received),
            1 => Some(Direction::Sent),
            2 => Some(Direction::Local),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a session log")]
    BadMagic,
    #[error("log truncated at byte {0}")]
    Truncated(usize),
    #[error("bad direction byte {0} at byte {1}")]
    BadDirection(u8, usize),
    #[error("corrupt frame at byte {offset}: {source}")]
    Frame { offset: usize, source: ProtocolError },
    #[error("corrupt config preamble: {0}")]
    Config(#[from] serde_json::Error),
}

enum Sink {
    Disabled,
    Memory(Vec<u8>),
    File(BufWriter<File>),
}

pub struct SessionLog {
    sink: Sink,
    records: u64,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog").field("records", &self.records).finish()
    }
}

fn preamble(cfg: &SessionConfig) -> Vec<u8> {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let mut out = LOG_MAGIC.to_vec();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

impl SessionLog {
    pub fn disabled() -> Self {
        SessionLog {
            sink: Sink::Disabled,
            records: 0,
        }
    }

    pub fn memory(cfg: &SessionConfig) -> Self {
        SessionLog {
            sink: Sink::Memory(preamble(cfg)),
            records: 0,
        }
    }

    pub fn file(path: &Path, cfg: &SessionConfig) -> std::io::Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&preamble(cfg))?;
        Ok(SessionLog {
            sink: Sink::File(w),
            records: 0,
        })
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self.sink, Sink::Disabled)
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn record(&mut self, dir: Direction, tick: u64, packet: &Packet) -> std::io::Result<()> {
        if !self.is_enabled() {
            return Ok(());
        }
        let frame = encode(packet).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        self.record_frame(dir, tick, &frame)
    }

    /// Records an already encoded frame.
    pub fn record_frame(&mut self, dir: Direction, tick: u64, frame: &[u8]) -> std::io::Result<()> {
        let mut head = [0u8; RECORD_HEADER];
        head[0..4].copy_from_slice(&(frame.len() as u32).to_le_bytes());
        head[4] = dir as u8;
        head[5..13].copy_from_slice(&tick.to_le_bytes());
        match &mut self.sink {
            Sink::Disabled => return Ok(()),
            Sink::Memory(buf) => {
                buf.extend_from_slice(&head);
                buf.extend_from_slice(frame);
            }
            Sink::File(w) => {
                w.write_all(&head)?;
                w.write_all(frame)?;
            }
        }
        self.records += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        if let Sink::File(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }

    /// Log bytes for an in-memory log, `None` otherwise.
    pub fn into_bytes(mut self) -> Option<Vec<u8>> {
        let _ = self.flush();
        match self.sink {
            Sink::Memory(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub direction: Direction,
    pub tick: u64,
    pub packet: Packet,
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub config: SessionConfig,
    pub records: Vec<LogRecord>,
}

pub fn parse_log(bytes: &[u8]) -> Result<ParsedLog, LogError> {
    if bytes.len() < 12 || bytes[..8] != LOG_MAGIC {
        return Err(LogError::BadMagic);
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + n).ok_or(LogError::Truncated(bytes.len()))?;
    let config: SessionConfig = serde_json::from_slice(body)?;
    let mut pos = 12 + n;
    let mut records = Vec::new();
    while pos < bytes.len() {
        let head = bytes.get(pos..pos + RECORD_HEADER).ok_or(LogError::Truncated(pos))?;
        let len = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
        let direction = Direction::from_u8(head[4]).ok_or(LogError::BadDirection(head[4], pos))?;
        let tick = u64::from_le_bytes(head[5..13].try_into().unwrap());
        let frame_at = pos + RECORD_HEADER;
        let frame = bytes.get(frame_at..frame_at + len).ok_or(LogError::Truncated(pos))?;
        let (packet, used) = decode(frame).map_err(|source| LogError::Frame { offset: frame_at, source })?;
        if used != len {
            return Err(LogError::Truncated(frame_at));
        }
        records.push(LogRecord { direction, tick, packet });
        pos = frame_at + len;
    }
    Ok(ParsedLog { config, records })
}

pub fn read_log(path: &Path) -> Result<ParsedLog, LogError> {
    parse_log(&std::fs::read(path)?)
}

/// Offline recomputation of end-effector targets from logged wrist samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct ReplayReport {
    /// (wrist, target) pairs compared.
    pub checked: usize,
    /// Targets with no matching wrist sample.
    pub unmatched: usize,
    pub max_position_error: f64,
    pub max_orientation_error: f64,
}

impl ReplayReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.unmatched == 0 && self.max_position_error <= tol && self.max_orientation_error <= tol
    }
}

/// Pairs `Wrist` and `Target` records by side and control tick (frame seq)
/// across any number of logs. Each side is calibrated on its first wrist
/// sample; orientation error is the Frobenius norm of the difference.
pub fn verify_retargeting(logs: &[ParsedLog]) -> ReplayReport {
    use std::collections::BTreeMap;
    let mut wrists = BTreeMap::new();
    let mut targets = Vec::new();
    let retarget = logs.first().map(|l| l.config.retarget).unwrap_or_default();
    for log in logs {
        for r in &log.records {
            match &r.packet.message {
                Message::Wrist { side, sample } => {
                    wrists.insert((*side, r.packet.seq), *sample);
                }
                Message::Target { side, target } => targets.push((*side, r.packet.seq, *target)),
                _ => {}
            }
        }
    }
    let mut report = ReplayReport::default();
    for side in Side::BOTH {
        let Some((_, first)) = wrists.range((side, 0)..=(side, u32::MAX)).next() else {
            report.unmatched += targets.iter().filter(|t| t.0 == side).count();
            continue;
        };
        let calib = calibrate(first);
        let home = retarget.home(side);
        for (_, seq, logged) in targets.iter().filter(|t| t.0 == side) {
            let Some(sample) = wrists.get(&(side, *seq)) else {
                report.unmatched += 1;
                continue;
            };
            let Ok(rel) = relative_pose(&calib, sample) else {
                report.unmatched += 1;
                continue;
            };
            let expected = apply_to_robot(home, &rel, &retarget);
            let pos = (expected.k_now - logged.k_now).norm();
            let rot = frobenius(&expected.q_gn, &logged.q_gn);
            report.checked += 1;
            report.max_position_error = report.max_position_error.max(pos);
            report.max_orientation_error = report.max_orientation_error.max(rot);
        }
    }
    report
}

fn frobenius(a: &Rot3, b: &Rot3) -> f64 {
    (a.matrix() - b.matrix()).norm()
}
