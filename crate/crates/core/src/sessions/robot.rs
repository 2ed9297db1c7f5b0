//! Robot-side session core: applies received control, steps the simulated
//! world, samples fingertip arrays and scene snapshots.

use serde::Serialize;

use super::config::SessionConfig;
use super::log::{Direction, SessionLog};
use super::SessionError;
use crate::protocol::{tick_time_us, Message, Packet, RateSpec, Role, Stream, TickEvent};
use crate::retargeting::{apply_to_robot, HandPose, RelativePose, Side};
use crate::simworld::{SceneConfig, SimWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RobotReport {
    pub control_ticks: u64,
    pub haptic_ticks: u64,
    pub scene_ticks: u64,
    pub controls_received: u64,
    /// Controls replaced by a newer one before they were applied.
    pub controls_dropped: u64,
    pub haptic_sent: u64,
    pub scene_sent: u64,
    pub peer_lost: bool,
}

#[derive(Debug, Clone, Copy)]
struct PendingControl {
    seq: u32,
    pose: RelativePose,
    hand: HandPose,
}

#[derive(Debug)]
pub struct RobotCore {
    rates: RateSpec,
    retarget: crate::retargeting::RetargetConfig,
    sides: Vec<Side>,
    world: SimWorld,
    pending: [Option<PendingControl>; 2],
    log: SessionLog,
    report: RobotReport,
}

impl RobotCore {
    pub fn new(cfg: &SessionConfig, scene: &SceneConfig, log: SessionLog) -> Result<Self, SessionError> {
        let arms = cfg.arm.models()?;
        let world = SimWorld::new(scene, arms, &cfg.retarget, cfg.seed)?;
        Ok(RobotCore {
            rates: cfg.rates,
            retarget: cfg.retarget,
            sides: cfg.sides.clone(),
            world,
            pending: [None; 2],
            log,
            report: RobotReport::default(),
        })
    }

    pub fn hello(&self) -> Packet {
        Packet::new(
            0,
            0,
            Message::Hello {
                role: Role::Robot,
                rates: self.rates,
            },
        )
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn report(&self) -> RobotReport {
        self.report
    }

    /// Controls overwritten in a mailbox before the core saw them.
    pub fn note_dropped(&mut self, n: u64) {
        self.report.controls_dropped += n;
    }

    pub fn mark_peer_lost(&mut self) {
        self.report.peer_lost = true;
    }

    /// Handles one packet from the operator. Only control packets for active
    /// sides have an effect; anything else is logged and ignored.
    pub fn on_packet(&mut self, tick: u64, p: &Packet) -> Result<(), SessionError> {
        self.log.record(Direction::Received, tick, p)?;
        if let Message::Control { side, pose, hand } = &p.message {
            if !self.sides.contains(side) {
                return Ok(());
            }
            self.report.controls_received += 1;
            let slot = &mut self.pending[side.index()];
            if slot.is_some() {
                self.report.controls_dropped += 1;
            }
            *slot = Some(PendingControl {
                seq: p.seq,
                pose: *pose,
                hand: *hand,
            });
        }
        Ok(())
    }

    /// Runs one scheduled tick and returns the packets to send.
    pub fn on_tick(&mut self, ev: &TickEvent) -> Result<Vec<Packet>, SessionError> {
        let tick = ev.index;
        let mut out = Vec::new();
        match ev.stream {
            Stream::Control => {
                self.report.control_ticks += 1;
                for side in Side::BOTH {
                    let Some(c) = self.pending[side.index()].take() else {
                        continue;
                    };
                    let target = apply_to_robot(self.retarget.home(side), &c.pose, &self.retarget);
                    self.world.set_command(side, target, c.hand);
                    let rec = Packet::new(c.seq, ev.t_us, Message::Target { side, target });
                    self.log.record(Direction::Local, tick, &rec)?;
                }
                self.world.step(1.0 / self.rates.control_hz);
            }
            Stream::Haptic => {
                self.report.haptic_ticks += 1;
                let seq = tick as u32;
                let t_us = tick_time_us(self.rates.haptic_hz, tick);
                for &side in &self.sides {
                    let hand = self.world.side(side).hand;
                    let rec = Packet::new(seq, t_us, Message::HandState { side, hand });
                    self.log.record(Direction::Local, tick, &rec)?;
                    let frame = self.world.haptic_frame(side, seq, t_us)?;
                    let p = Packet::haptic(side, frame);
                    self.log.record(Direction::Sent, tick, &p)?;
                    self.report.haptic_sent += 1;
                    out.push(p);
                }
            }
            Stream::Scene => {
                self.report.scene_ticks += 1;
                let p = Packet::new(tick as u32, ev.t_us, Message::Scene(self.world.snapshot()));
                self.log.record(Direction::Sent, tick, &p)?;
                self.report.scene_sent += 1;
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Closes the episode: pending indentations are booked and the log is
    /// flushed.
    pub fn finish(mut self) -> Result<(SimWorld, SessionLog, RobotReport), SessionError> {
        self.world.finish_episode();
        self.log.flush()?;
        Ok((self.world, self.log, self.report))
    }
}
