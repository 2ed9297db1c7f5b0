//! Both cores in one process, connected by byte pipes that carry real wire
//! frames. Ticks run in lockstep on the simulated clock, so a session is a
//! pure function of its config, scene, policy and seed.

use super::config::SessionConfig;
use super::log::SessionLog;
use super::operator::{OperatorCore, OperatorEvent, OperatorReport};
use super::policy::Policy;
use super::robot::{RobotCore, RobotReport};
use super::SessionError;
use crate::protocol::{encode, FrameReader, Message, MultiRateSchedule, Packet, Stream, TickEvent};
use crate::simworld::{SceneConfig, SimWorld};

/// Decides, per robot-to-operator packet, whether it is delivered.
pub type PacketFilter = Box<dyn FnMut(&Packet) -> bool + Send>;

#[derive(Debug)]
pub struct SessionOutcome {
    pub robot: RobotReport,
    pub operator: OperatorReport,
    pub events: Vec<OperatorEvent>,
    pub world: SimWorld,
    pub robot_log: SessionLog,
    pub operator_log: SessionLog,
    /// Session time when the run stopped, s.
    pub end_time: f64,
}

pub struct Loopback {
    robot: RobotCore,
    operator: OperatorCore,
    schedule: MultiRateSchedule,
    to_robot: FrameReader,
    to_operator: FrameReader,
    filter: Option<PacketFilter>,
    stop_on_finish: bool,
    stopped: bool,
    end_time: f64,
}

impl std::fmt::Debug for Loopback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Loopback").field("end_time", &self.end_time).finish_non_exhaustive()
    }
}

fn pump(reader: &mut FrameReader, mut handle: impl FnMut(&Packet) -> Result<(), SessionError>) -> Result<(), SessionError> {
    while let Some(p) = reader.next_packet() {
        handle(&p?)?;
    }
    Ok(())
}

impl Loopback {
    pub fn new(
        cfg: &SessionConfig,
        scene: &SceneConfig,
        policy: Box<dyn Policy>,
        robot_log: SessionLog,
        operator_log: SessionLog,
    ) -> Result<Self, SessionError> {
        let mut robot = RobotCore::new(cfg, scene, robot_log)?;
        let mut operator = OperatorCore::new(cfg, scene.initial_hand, policy, operator_log);
        let mut to_robot = FrameReader::new();
        let mut to_operator = FrameReader::new();
        to_operator.push(&encode(&robot.hello())?);
        to_robot.push(&encode(&operator.hello())?);
        let mut rates = None;
        pump(&mut to_operator, |p| {
            if let Message::Hello { rates: r, .. } = p.message {
                rates = Some(r);
            }
            operator.on_packet(0, 0.0, p)
        })?;
        let rates = rates.ok_or_else(|| SessionError::Handshake("no hello from robot".into()))?;
        operator.adopt_rates(rates);
        pump(&mut to_robot, |p| robot.on_packet(0, p))?;
        Ok(Loopback {
            robot,
            operator,
            schedule: MultiRateSchedule::new(&rates, cfg.duration_s),
            to_robot,
            to_operator,
            filter: None,
            stop_on_finish: false,
            stopped: false,
            end_time: 0.0,
        })
    }

    /// Drops robot-to-operator packets for which `filter` returns false.
    pub fn with_filter(mut self, filter: PacketFilter) -> Self {
        self.filter = Some(filter);
        self
    }

    /// Ends the session at the first control tick after the policy finished.
    pub fn stop_when_finished(mut self, yes: bool) -> Self {
        self.stop_on_finish = yes;
        self
    }

    pub fn robot(&self) -> &RobotCore {
        &self.robot
    }

    pub fn operator(&self) -> &OperatorCore {
        &self.operator
    }

    pub fn operator_mut(&mut self) -> &mut OperatorCore {
        &mut self.operator
    }

    /// Runs the next scheduled tick; `None` once the session is over.
    pub fn step(&mut self) -> Result<Option<TickEvent>, SessionError> {
        if self.stopped {
            return Ok(None);
        }
        let Some(ev) = self.schedule.next() else {
            self.stopped = true;
            return Ok(None);
        };
        self.end_time = ev.t_us as f64 * 1e-6;
        let tick = ev.index;
        match ev.stream {
            Stream::Control => {
                for p in self.operator.on_tick(&ev)? {
                    self.to_robot.push(&encode(&p)?);
                }
                let robot = &mut self.robot;
                pump(&mut self.to_robot, |p| robot.on_packet(tick, p))?;
                self.robot.on_tick(&ev)?;
                if self.stop_on_finish && self.operator.policy_finished().is_some() {
                    self.stopped = true;
                }
            }
            Stream::Haptic | Stream::Scene => {
                for p in self.robot.on_tick(&ev)? {
                    if self.filter.as_mut().is_none_or(|f| f(&p)) {
                        self.to_operator.push(&encode(&p)?);
                    }
                }
                let now = self.end_time;
                let operator = &mut self.operator;
                pump(&mut self.to_operator, |p| operator.on_packet(tick, now, p))?;
            }
        }
        self.operator.drain_glove();
        Ok(Some(ev))
    }

    pub fn run(mut self) -> Result<SessionOutcome, SessionError> {
        while self.step()?.is_some() {}
        self.finish()
    }

    pub fn finish(self) -> Result<SessionOutcome, SessionError> {
        let (world, robot_log, robot) = self.robot.finish()?;
        let (operator_log, operator, events) = self.operator.finish()?;
        Ok(SessionOutcome {
            robot,
            operator,
            events,
            world,
            robot_log,
            operator_log,
            end_time: self.end_time,
        })
    }
}
