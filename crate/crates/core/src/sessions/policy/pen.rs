use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Observation, OperatorInput, Policy, PolicySpec, VirtualTracker};
use crate::haptics::FINGER_COUNT;
use crate::retargeting::Side;
use crate::simworld::{pen_step, PenParams, PenSetup, PenState, PenTask, SimObject};

/// Planned pinch-force deficit relative to the nominal holding force.
const SLIP_FRACTION: f64 = 0.3;
/// Extra time after the observation delay before the pen is judged at rest, s.
const OBS_SETTLE: f64 = 0.1;
/// Hold force relative to what the next target needs.
const HOLD_FACTOR: f64 = 2.0;
/// Contact points are re-estimated while holding only below this force,
/// where a stiffness error biases them least, N.
const ESTIMATE_MAX_FORCE: f64 = 6.0;
const MAX_PULSE: f64 = 0.6;
const SIM_DT: f64 = 0.002;
/// Visual operators start this far above the planned slip force and back
/// off by `VISUAL_BACKOFF` after every pulse that did not move the pen, N.
const VISUAL_MARGIN: f64 = 1.0;
const VISUAL_BACKOFF: f64 = 0.2;
const HAPTIC_BACKOFF: f64 = 0.1;
/// Pulses aim this fraction of the tolerance short of the target, since
/// overshooting past the tolerance cannot be undone.
const AIM_SHORT: f64 = 0.3;
/// A target counts as reached this fraction of the tolerance below it.
const REACH: f64 = 0.7;
/// Largest planned travel per pulse; net torque grows as the pen swings
/// down, so long pulses amplify model error.
const MAX_STEP: f64 = 12.0 * std::f64::consts::PI / 180.0;
/// Pulses shorter than this carry too little information to refit, rad.
const REFIT_MIN_TRAVEL: f64 = 3.0 * std::f64::consts::PI / 180.0;
const NO_MOTION: f64 = 1.0 * std::f64::consts::PI / 180.0;
/// Force servo gain on each new haptic frame during a pulse.
const SERVO_GAIN: f64 = 0.5;
/// Frames older than this into a pulse still show the previous pinch, s.
const SERVO_DELAY: f64 = 0.05;
/// Smallest planned pinch force above the drop force, N.
const DROP_MARGIN: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Hold { since: f64 },
    Pulse { from: f64, until: f64 },
    Done,
}

/// Lets the pen slide through its waypoints in controlled pulses: loosen the
/// pinch below the holding force for a planned time, squeeze to stop, look,
/// repeat. With glove feedback the pinch force is known and servoed; without
/// it the force is inferred from the commanded bend and a nominal contact
/// point, and the operator backs off cautiously.
#[derive(Debug, Clone)]
pub struct PenPolicy {
    side: Side,
    tracker: VirtualTracker,
    params: PenParams,
    task: PenTask,
    stiffness: f64,
    contact: [f64; 2],
    haptic: bool,
    delay: f64,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    target: usize,
    phase: Phase,
    force: f64,
    offset: f64,
    bend: [f64; 2],
    nominal_friction: f64,
    /// Finger force slew, N/s.
    force_rate: f64,
    /// Start angle, force before, planned force and length of the last pulse.
    last_pulse: Option<(f64, f64, f64, f64)>,
    last_seq: Option<u32>,
    finished: Option<f64>,
}

impl PenPolicy {
    pub fn new(
        side: Side,
        tracker: VirtualTracker,
        pen: &PenSetup,
        obj: &SimObject,
        spec: &PolicySpec,
        haptic: bool,
        slew_rate: f64,
    ) -> Self {
        let contact = [obj.contact_bend[0], obj.contact_bend[1]];
        let force = pen.task.initial_grip;
        let noise_rad = spec.observation_noise_mm * 1e-3 / (2.0 * pen.params.com_dist);
        PenPolicy {
            side,
            tracker,
            params: pen.params,
            task: pen.task,
            stiffness: obj.stiffness,
            contact,
            haptic,
            delay: spec.observation_delay_s,
            noise: Normal::new(0.0, noise_rad).expect("validated noise"),
            rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x70656e),
            target: 0,
            phase: Phase::Hold { since: 0.0 },
            force,
            offset: if haptic { 0.0 } else { VISUAL_MARGIN },
            bend: contact.map(|c| c + force / obj.stiffness),
            nominal_friction: pen.params.friction,
            force_rate: obj.stiffness * slew_rate,
            last_pulse: None,
            last_seq: None,
            finished: None,
        }
    }

    fn hold_force(&self) -> f64 {
        let targets = self.task.targets();
        let idx = self.target.min(targets.len() - 1);
        let theta = (targets[idx] + self.task.tolerance()).min(std::f64::consts::PI);
        (HOLD_FACTOR * self.params.holding_force(theta.max(targets[idx]))).max(self.task.initial_grip)
    }

    /// Rest angle after loosening to `slip` for `duration` from rest at
    /// `theta0`, then squeezing back to the hold force at the slew limit.
    fn predict(&self, params: &PenParams, theta0: f64, from: f64, slip: f64, duration: f64) -> f64 {
        let mut s = PenState { theta: theta0, omega: 0.0 };
        let mut f = from;
        let mut t = 0.0;
        while t < duration {
            f = (f - self.force_rate * SIM_DT).max(slip);
            s = pen_step(params, s, f, SIM_DT);
            t += SIM_DT;
        }
        self.brake(params, s, f).theta
    }

    fn brake(&self, params: &PenParams, mut s: PenState, slip: f64) -> PenState {
        let hold = self.hold_force();
        let mut f = slip;
        for _ in 0..500 {
            f = (f + self.force_rate * SIM_DT).min(hold);
            s = pen_step(params, s, f, SIM_DT);
            if s.omega == 0.0 {
                break;
            }
        }
        s
    }

    /// Pulse length that brings the modeled pen from rest at `theta0` to
    /// `aim`, including the stop after the squeeze.
    fn plan_pulse(&self, theta0: f64, aim: f64, from: f64, slip: f64) -> f64 {
        let mut s = PenState { theta: theta0, omega: 0.0 };
        let mut f = from;
        let mut t = 0.0;
        while t < MAX_PULSE {
            if self.brake(&self.params, s, f).theta >= aim {
                return t;
            }
            f = (f - self.force_rate * SIM_DT).max(slip);
            s = pen_step(&self.params, s, f, SIM_DT);
            t += SIM_DT;
        }
        MAX_PULSE
    }

    /// Refits the friction coefficient so the model reproduces the last
    /// pulse. Predicted travel shrinks as friction grows.
    fn refit_friction(&mut self, theta0: f64, from: f64, slip: f64, duration: f64, observed: f64) {
        let (mut lo, mut hi) = (0.6 * self.nominal_friction, 1.6 * self.nominal_friction);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            let trial = PenParams { friction: mid, ..self.params };
            if self.predict(&trial, theta0, from, slip, duration) > observed {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.params.friction = 0.5 * (lo + hi);
    }

    fn look(&mut self, obs: &Observation<'_>, since: f64) -> Option<Option<f64>> {
        if obs.t < since + self.delay + OBS_SETTLE {
            return None;
        }
        let (at, scene) = obs.scenes.delayed(obs.t, self.delay)?;
        if at < since + OBS_SETTLE {
            return None;
        }
        let pen = scene.pen?;
        if pen.dropped {
            return Some(None);
        }
        if pen.omega != 0.0 {
            return None;
        }
        Some(Some(pen.theta + self.noise.sample(&mut self.rng)))
    }

    fn decide(&mut self, obs: &Observation<'_>, since: f64) {
        let theta = match self.look(obs, since) {
            None => return,
            Some(None) => {
                self.phase = Phase::Done;
                self.finished = Some(obs.t);
                return;
            }
            Some(Some(theta)) => theta,
        };
        if let Some((start, from, slip, duration)) = self.last_pulse.take() {
            if theta - start < NO_MOTION {
                self.offset -= if self.haptic { HAPTIC_BACKOFF } else { VISUAL_BACKOFF };
            } else if theta - start >= REFIT_MIN_TRAVEL {
                self.refit_friction(start, from, slip, duration, theta);
            }
        }
        let targets = self.task.targets();
        let reach = REACH * self.task.tolerance();
        while self.target < targets.len() && theta >= targets[self.target] - reach {
            self.target += 1;
        }
        if self.target == targets.len() {
            self.phase = Phase::Done;
            self.finished = Some(obs.t);
            return;
        }
        // Timing assumes the intended deficit; the offset only hedges the
        // commanded force.
        let floor = self.task.drop_force + DROP_MARGIN;
        let planned = ((1.0 - SLIP_FRACTION) * self.params.holding_force(theta)).max(floor);
        let slip = (planned + self.offset).max(floor);
        let aim = (targets[self.target] - AIM_SHORT * self.task.tolerance()).min(theta + MAX_STEP);
        let duration = self.plan_pulse(theta, aim, self.force, planned);
        self.last_pulse = Some((theta, self.force, planned, duration));
        self.force = slip;
        self.phase = Phase::Pulse {
            from: obs.t,
            until: obs.t + duration,
        };
        self.set_bend();
    }

    fn set_bend(&mut self) {
        for i in 0..2 {
            self.bend[i] = (self.contact[i] + self.force / self.stiffness).clamp(0.0, 1.0);
        }
    }

    /// Haptic only: re-estimate the contact point while holding, servo the
    /// felt pinch force while pulsing.
    fn use_glove(&mut self, obs: &Observation<'_>) {
        let Some(felt) = obs.felt[self.side.index()] else {
            return;
        };
        if self.last_seq == Some(felt.seq) {
            return;
        }
        self.last_seq = Some(felt.seq);
        match self.phase {
            Phase::Hold { since } if obs.t >= since + 0.05 => {
                for i in 0..2 {
                    if felt.forces[i] > ESTIMATE_MAX_FORCE {
                        continue;
                    }
                    let est = self.bend[i] - felt.forces[i] / self.stiffness;
                    self.contact[i] += 0.5 * (est - self.contact[i]);
                }
            }
            Phase::Pulse { from, .. } if obs.t >= from + SERVO_DELAY => {
                for i in 0..2 {
                    let err = self.force - felt.forces[i];
                    let floor = self.contact[i] + (self.task.drop_force + DROP_MARGIN) / self.stiffness;
                    self.bend[i] = (self.bend[i] + SERVO_GAIN * err / self.stiffness).max(floor).clamp(0.0, 1.0);
                }
            }
            _ => {}
        }
    }
}

impl Policy for PenPolicy {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        if self.haptic {
            self.use_glove(obs);
        }
        match self.phase {
            Phase::Hold { since } => self.decide(obs, since),
            Phase::Pulse { until, .. } if obs.t >= until => {
                if self.haptic {
                    // The servo has found the bend that gives the pulse force.
                    for i in 0..2 {
                        self.contact[i] = self.bend[i] - self.force / self.stiffness;
                    }
                }
                self.force = self.hold_force();
                self.set_bend();
                self.phase = Phase::Hold { since: obs.t };
            }
            _ => {}
        }
        let mut glove_bend = [0.0; FINGER_COUNT];
        glove_bend[0] = self.bend[0];
        glove_bend[1] = self.bend[1];
        let home = self.tracker.home(self.side);
        vec![OperatorInput {
            side: self.side,
            wrist: self.tracker.wrist(self.side, &home, obs.t_us),
            glove_bend,
            glove_split: 0.0,
        }]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}
