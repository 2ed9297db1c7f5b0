//! Operator-side session core: calibration, retargeting, glove rendering and
//! the staleness guard. Tracker and glove readings come from a [`Policy`].

use serde::Serialize;

use super::config::{FeedbackMode, SessionConfig};
use super::log::{Direction, SessionLog};
use super::policy::{Felt, Observation, Policy, SceneHistory};
use super::SessionError;
use crate::haptics::{render_frame, GloveCommand, HapticConfig, HapticFrame};
use crate::protocol::{Message, Packet, RateSpec, Role, Stream, TickEvent};
use crate::retargeting::{calibrate, map_hand, relative_pose, HandPose, OperatorCalibration, RelativePose, Side};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OperatorReport {
    pub control_ticks: u64,
    pub control_sent: u64,
    pub haptic_received: u64,
    pub scene_received: u64,
    pub glove_sent: u64,
    pub stale_events: u64,
    pub max_glove_torque: f64,
    /// Policy finish time, s.
    pub finished_at: Option<f64>,
    pub peer_lost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum OperatorEvent {
    Calibrated { side: Side, t: f64 },
    /// No haptic frame for longer than the staleness timeout; glove zeroed.
    StaleHaptics { side: Side, t: f64 },
    HapticsResumed { side: Side, t: f64 },
    /// A wrist sample could not be retargeted; the previous control was kept.
    BadWrist { side: Side, t: f64 },
}

pub struct OperatorCore {
    rates: RateSpec,
    haptic: HapticConfig,
    mode: FeedbackMode,
    sides: Vec<Side>,
    staleness: f64,
    policy: Box<dyn Policy>,
    calib: [Option<OperatorCalibration>; 2],
    last_control: [(RelativePose, HandPose); 2],
    felt: [Option<Felt>; 2],
    last_haptic: [f64; 2],
    latest_frame: [Option<HapticFrame>; 2],
    latest_glove: [Option<GloveCommand>; 2],
    stale: [bool; 2],
    scenes: SceneHistory,
    glove_out: Vec<Packet>,
    events: Vec<OperatorEvent>,
    log: SessionLog,
    report: OperatorReport,
    now: f64,
}

impl std::fmt::Debug for OperatorCore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorCore")
            .field("mode", &self.mode)
            .field("report", &self.report)
            .finish_non_exhaustive()
    }
}

impl OperatorCore {
    /// `initial_hand` is what the operator's hand is assumed to do before the
    /// policy speaks for a side.
    pub fn new(cfg: &SessionConfig, initial_hand: [HandPose; 2], policy: Box<dyn Policy>, log: SessionLog) -> Self {
        OperatorCore {
            rates: cfg.rates,
            haptic: cfg.haptic,
            mode: cfg.feedback_mode,
            sides: cfg.sides.clone(),
            staleness: cfg.staleness_timeout_s,
            policy,
            calib: [None; 2],
            last_control: [(RelativePose::identity(), initial_hand[0]), (RelativePose::identity(), initial_hand[1])],
            felt: [None; 2],
            last_haptic: [0.0; 2],
            latest_frame: [None; 2],
            latest_glove: [None; 2],
            stale: [false; 2],
            scenes: SceneHistory::default(),
            glove_out: Vec::new(),
            events: Vec::new(),
            log,
            report: OperatorReport::default(),
            now: 0.0,
        }
    }

    pub fn hello(&self) -> Packet {
        Packet::new(
            0,
            0,
            Message::Hello {
                role: Role::Operator,
                rates: self.rates,
            },
        )
    }

    /// The robot's rates win; the operator follows its schedule.
    pub fn adopt_rates(&mut self, rates: RateSpec) {
        self.rates = rates;
    }

    pub fn rates(&self) -> RateSpec {
        self.rates
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    /// Switching to visual-only zeroes the glove immediately.
    pub fn set_mode(&mut self, mode: FeedbackMode) -> Result<(), SessionError> {
        if mode == self.mode {
            return Ok(());
        }
        self.mode = mode;
        if !mode.haptic() {
            let t_us = (self.now * 1e6) as u64;
            for side in self.sides.clone() {
                let i = side.index();
                if self.felt[i].take().is_some() {
                    self.send_glove(self.report.control_ticks, side, 0, t_us, GloveCommand::zero())?;
                }
            }
        }
        Ok(())
    }

    /// Forgets the calibration of `side`; the next wrist sample becomes the
    /// new reference.
    pub fn recalibrate(&mut self, side: Side) {
        self.calib[side.index()] = None;
    }

    pub fn report(&self) -> OperatorReport {
        OperatorReport {
            finished_at: self.policy.finished_at(),
            ..self.report
        }
    }

    pub fn events(&self) -> &[OperatorEvent] {
        &self.events
    }

    pub fn scenes(&self) -> &SceneHistory {
        &self.scenes
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn latest_frame(&self, side: Side) -> Option<&HapticFrame> {
        self.latest_frame[side.index()].as_ref()
    }

    pub fn latest_glove(&self, side: Side) -> Option<&GloveCommand> {
        self.latest_glove[side.index()].as_ref()
    }

    pub fn policy_finished(&self) -> Option<f64> {
        self.policy.finished_at()
    }

    pub fn policy_mut(&mut self) -> &mut dyn Policy {
        self.policy.as_mut()
    }

    pub fn mark_peer_lost(&mut self) {
        self.report.peer_lost = true;
    }

    /// Glove commands produced since the last call.
    pub fn drain_glove(&mut self) -> Vec<Packet> {
        std::mem::take(&mut self.glove_out)
    }

    fn send_glove(&mut self, tick: u64, side: Side, seq: u32, t_us: u64, command: GloveCommand) -> Result<(), SessionError> {
        let p = Packet::new(seq, t_us, Message::Glove { side, command });
        self.log.record(Direction::Sent, tick, &p)?;
        self.report.glove_sent += 1;
        self.report.max_glove_torque = self.report.max_glove_torque.max(command.max());
        self.latest_glove[side.index()] = Some(command);
        self.glove_out.push(p);
        Ok(())
    }

    /// Handles one packet from the robot at session time `now` (s).
    pub fn on_packet(&mut self, tick: u64, now: f64, p: &Packet) -> Result<(), SessionError> {
        self.now = self.now.max(now);
        self.log.record(Direction::Received, tick, p)?;
        match &p.message {
            Message::Haptic { side, frame } => {
                self.report.haptic_received += 1;
                if !self.sides.contains(side) {
                    return Ok(());
                }
                let i = side.index();
                self.last_haptic[i] = now;
                self.latest_frame[i] = Some(*frame);
                if self.stale[i] {
                    self.stale[i] = false;
                    self.events.push(OperatorEvent::HapticsResumed { side: *side, t: now });
                }
                if self.mode.haptic() {
                    let command = render_frame(frame, &self.haptic)?;
                    self.felt[i] = Some(Felt::from_command(&command, &self.haptic, p.seq));
                    self.send_glove(tick, *side, p.seq, p.t_us, command)?;
                }
            }
            Message::Scene(s) => {
                self.report.scene_received += 1;
                self.scenes.push(now, s.clone());
            }
            _ => {}
        }
        Ok(())
    }

    /// Runs one scheduled tick and returns the packets to send to the robot.
    pub fn on_tick(&mut self, ev: &TickEvent) -> Result<Vec<Packet>, SessionError> {
        if ev.stream != Stream::Control {
            return Ok(Vec::new());
        }
        let tick = ev.index;
        let t = ev.t_us as f64 * 1e-6;
        self.now = self.now.max(t);
        self.report.control_ticks += 1;
        self.check_staleness(tick, t, ev.t_us)?;
        let felt = if self.mode.haptic() { self.felt } else { [None; 2] };
        let obs = Observation {
            t,
            t_us: ev.t_us,
            felt,
            scenes: &self.scenes,
        };
        let inputs = self.policy.step(&obs);
        let seq = tick as u32;
        for input in inputs {
            let side = input.side;
            if !self.sides.contains(&side) {
                continue;
            }
            let i = side.index();
            let calib = *self.calib[i].get_or_insert_with(|| {
                self.events.push(OperatorEvent::Calibrated { side, t });
                calibrate(&input.wrist)
            });
            let rec = Packet::new(seq, ev.t_us, Message::Wrist { side, sample: input.wrist });
            self.log.record(Direction::Local, tick, &rec)?;
            match relative_pose(&calib, &input.wrist) {
                Ok(pose) => self.last_control[i] = (pose, map_hand(input.glove_bend, input.glove_split)),
                Err(_) => self.events.push(OperatorEvent::BadWrist { side, t }),
            }
        }
        let mut out = Vec::with_capacity(self.sides.len());
        for &side in &self.sides {
            let (pose, hand) = self.last_control[side.index()];
            let p = Packet::new(seq, ev.t_us, Message::Control { side, pose, hand });
            self.log.record(Direction::Sent, tick, &p)?;
            self.report.control_sent += 1;
            out.push(p);
        }
        Ok(out)
    }

    fn check_staleness(&mut self, tick: u64, t: f64, t_us: u64) -> Result<(), SessionError> {
        if !self.mode.haptic() {
            return Ok(());
        }
        for side in self.sides.clone() {
            let i = side.index();
            if self.stale[i] || t - self.last_haptic[i] <= self.staleness + 1e-9 {
                continue;
            }
            self.stale[i] = true;
            self.events.push(OperatorEvent::StaleHaptics { side, t });
            self.report.stale_events += 1;
            let seq = self.felt[i].map_or(0, |f| f.seq);
            self.felt[i] = Some(Felt {
                forces: [0.0; crate::haptics::FINGER_COUNT],
                seq,
            });
            self.send_glove(tick, side, seq, t_us, GloveCommand::zero())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(SessionLog, OperatorReport, Vec<OperatorEvent>), SessionError> {
        self.log.flush()?;
        let report = self.report();
        Ok((self.log, report, self.events))
    }
}
