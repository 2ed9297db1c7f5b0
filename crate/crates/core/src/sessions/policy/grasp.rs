use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Observation, OperatorInput, Policy, PolicySpec, VirtualTracker};
use crate::geometry::{Pose, Vec3};
use crate::haptics::FINGER_COUNT;
use crate::protocol::ObjectKindCode;
use crate::retargeting::Side;

/// Time the hand is held still before a grasp counts as finished, s.
const SETTLE: f64 = 0.3;

fn input(side: Side, tracker: &VirtualTracker, pose: &Pose, t_us: u64, bend: [f64; FINGER_COUNT]) -> OperatorInput {
    OperatorInput {
        side,
        wrist: tracker.wrist(side, pose, t_us),
        glove_bend: bend,
        glove_split: 0.0,
    }
}

fn tick_dt(last: &mut Option<f64>, t: f64) -> f64 {
    let dt = last.map_or(0.0, |l| (t - l).max(0.0));
    *last = Some(t);
    dt
}

/// Closes every finger until the glove reports `target_force` on it, then
/// freezes that finger.
#[derive(Debug, Clone)]
pub struct ForceGrasp {
    side: Side,
    tracker: VirtualTracker,
    rate: f64,
    target_force: f64,
    bend: [f64; FINGER_COUNT],
    frozen: [bool; FINGER_COUNT],
    all_frozen_at: Option<f64>,
    last_t: Option<f64>,
    finished: Option<f64>,
}

impl ForceGrasp {
    pub fn new(side: Side, tracker: VirtualTracker, rate: f64, target_force: f64) -> Self {
        ForceGrasp {
            side,
            tracker,
            rate,
            target_force,
            bend: [0.0; FINGER_COUNT],
            frozen: [false; FINGER_COUNT],
            all_frozen_at: None,
            last_t: None,
            finished: None,
        }
    }
}

impl Policy for ForceGrasp {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let dt = tick_dt(&mut self.last_t, obs.t);
        let felt = obs.felt[self.side.index()];
        for f in 0..FINGER_COUNT {
            if self.frozen[f] {
                continue;
            }
            if felt.is_some_and(|x| x.forces[f] >= self.target_force) || self.bend[f] >= 1.0 {
                self.frozen[f] = true;
                continue;
            }
            self.bend[f] = (self.bend[f] + self.rate * dt).min(1.0);
        }
        if self.all_frozen_at.is_none() && self.frozen.iter().all(|f| *f) {
            self.all_frozen_at = Some(obs.t);
        }
        if let (None, Some(at)) = (self.finished, self.all_frozen_at) {
            if obs.t >= at + SETTLE {
                self.finished = Some(obs.t);
            }
        }
        let home = self.tracker.home(self.side);
        vec![input(self.side, &self.tracker, &home, obs.t_us, self.bend)]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}

/// Closes every finger until the delayed, noisy view shows enough
/// indentation (or, on objects that do not deform visibly, shows thumb and
/// a finger touching), then freezes the whole hand.
#[derive(Debug, Clone)]
pub struct VisualGrasp {
    side: Side,
    tracker: VirtualTracker,
    rate: f64,
    threshold_mm: f64,
    delay: f64,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    seen_at: f64,
    seen_mm: f64,
    bend: f64,
    stopped_at: Option<f64>,
    last_t: Option<f64>,
    finished: Option<f64>,
}

impl VisualGrasp {
    pub fn new(side: Side, tracker: VirtualTracker, spec: &PolicySpec) -> Self {
        VisualGrasp {
            side,
            tracker,
            rate: spec.strategy.close_rate(),
            threshold_mm: spec.indentation_threshold_mm,
            delay: spec.observation_delay_s,
            noise: Normal::new(0.0, spec.observation_noise_mm).expect("validated noise"),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            seen_at: f64::NEG_INFINITY,
            seen_mm: 0.0,
            bend: 0.0,
            stopped_at: None,
            last_t: None,
            finished: None,
        }
    }

    fn should_stop(&mut self, obs: &Observation<'_>) -> bool {
        let Some((at, scene)) = obs.scenes.delayed(obs.t, self.delay) else {
            return false;
        };
        let soft = |kind: ObjectKindCode| kind == ObjectKindCode::Deformable;
        let deformable = scene.objects.iter().any(|o| soft(o.kind));
        if deformable {
            if at != self.seen_at {
                self.seen_at = at;
                let true_mm = scene
                    .objects
                    .iter()
                    .filter(|o| soft(o.kind))
                    .map(|o| o.indentation_mm)
                    .fold(0.0, f64::max);
                self.seen_mm = true_mm + self.noise.sample(&mut self.rng);
            }
            return self.seen_mm >= self.threshold_mm;
        }
        scene
            .sides
            .iter()
            .find(|s| s.side == self.side)
            .is_some_and(|s| s.contact_mask & 1 != 0 && s.contact_mask & 0b11110 != 0)
    }
}

impl Policy for VisualGrasp {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let dt = tick_dt(&mut self.last_t, obs.t);
        if self.stopped_at.is_none() {
            if self.should_stop(obs) || self.bend >= 1.0 {
                self.stopped_at = Some(obs.t);
            } else {
                self.bend = (self.bend + self.rate * dt).min(1.0);
            }
        }
        if let (None, Some(at)) = (self.finished, self.stopped_at) {
            if obs.t >= at + SETTLE {
                self.finished = Some(obs.t);
            }
        }
        let home = self.tracker.home(self.side);
        vec![input(self.side, &self.tracker, &home, obs.t_us, [self.bend; FINGER_COUNT])]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}

/// Blind baseline: the hand goes to the middle of the box and closes fully.
#[derive(Debug, Clone)]
pub struct NominalGrasp {
    side: Side,
    tracker: VirtualTracker,
    pose: Pose,
    finished: Option<f64>,
}

const NOMINAL_CLOSE_RATE: f64 = 2.0;

impl NominalGrasp {
    pub fn new(side: Side, tracker: VirtualTracker, center: Vec3) -> Self {
        let pose = Pose::new(center, tracker.home(side).orientation);
        NominalGrasp {
            side,
            tracker,
            pose,
            finished: None,
        }
    }
}

impl Policy for NominalGrasp {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let bend = (NOMINAL_CLOSE_RATE * obs.t).min(1.0);
        if self.finished.is_none() && obs.t >= 1.0 / NOMINAL_CLOSE_RATE + SETTLE {
            self.finished = Some(obs.t);
        }
        vec![input(self.side, &self.tracker, &self.pose, obs.t_us, [bend; FINGER_COUNT])]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}
