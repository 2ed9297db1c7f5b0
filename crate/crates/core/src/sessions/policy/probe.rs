use super::{Observation, OperatorInput, Policy, VirtualTracker};
use crate::geometry::{Pose, Vec3};
use crate::haptics::FINGER_COUNT;
use crate::retargeting::Side;
use crate::simworld::{BoxSpec, HandGeometry};

/// Probe grid offsets in the box plane, in units of `GRID_STEP`, center first.
const GRID: [(f64, f64); 9] = [
    (0.0, 0.0),
    (0.0, -1.0),
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
    (0.0, 1.0),
    (-1.0, 1.0),
    (-1.0, 0.0),
    (-1.0, -1.0),
];
const GRID_STEP: f64 = 0.075;
/// Hand travel speed between probes, m/s.
const TRAVEL_SPEED: f64 = 0.25;
/// Closing rate while probing, bend/s.
const PROBE_RATE: f64 = 1.0;
/// Felt force that counts as touching something, N.
const TOUCH_FORCE: f64 = 0.3;
const SETTLE: f64 = 0.05;
const OPEN_TIME: f64 = 0.55;
const HOLD_TIME: f64 = 0.4;
const MAX_RECENTER: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Travel { arrived: Option<f64> },
    Close,
    Open { until: f64 },
    Grasp { until: f64 },
    Done,
}

/// Haptic search of the occluded box: close the hand at grid points until
/// something is felt, use the touching fingers and their bend at contact to
/// estimate where the object sits, re-center on it, and grasp once thumb and
/// a finger both touch.
#[derive(Debug, Clone)]
pub struct BlindProbe {
    side: Side,
    tracker: VirtualTracker,
    spec: BoxSpec,
    geometry: HandGeometry,
    hand: [f64; 2],
    goal: [f64; 2],
    phase: Phase,
    next_grid: usize,
    recenters: u32,
    bend: [f64; FINGER_COUNT],
    touched: [Option<f64>; FINGER_COUNT],
    last_t: Option<f64>,
    finished: Option<f64>,
}

impl BlindProbe {
    pub fn new(side: Side, tracker: VirtualTracker, spec: BoxSpec, geometry: HandGeometry) -> Self {
        BlindProbe {
            side,
            tracker,
            spec,
            geometry,
            hand: [0.0; 2],
            goal: [0.0; 2],
            phase: Phase::Travel { arrived: None },
            next_grid: 1,
            recenters: 0,
            bend: [0.0; FINGER_COUNT],
            touched: [None; FINGER_COUNT],
            last_t: None,
            finished: None,
        }
    }

    fn clamp_to_box(&self, p: [f64; 2]) -> [f64; 2] {
        let lim = self.spec.feasible_half();
        [p[0].clamp(-lim[0], lim[0]), p[1].clamp(-lim[1], lim[1])]
    }

    /// Object center relative to the hand, from the fingers that touched.
    fn estimate(&self) -> Option<[f64; 2]> {
        let r = 0.5 * (self.spec.radius_range[0] + self.spec.radius_range[1]);
        let half = 0.5 * self.geometry.aperture;
        // A finger that touches earliest meets the surface closest to the
        // object's centerline.
        let first = (1..FINGER_COUNT)
            .filter_map(|f| self.touched[f].map(|b| (f, b)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((f, b)) = first {
            let y = half * (1.0 - b);
            return Some([self.geometry.finger_x[f], y - r]);
        }
        self.touched[0].map(|b| [self.geometry.finger_x[0], -half * (1.0 - b) + r])
    }

    fn next_probe(&mut self, t: f64) {
        self.recenters = 0;
        if self.next_grid >= GRID.len() {
            self.phase = Phase::Done;
            self.finished = Some(t);
            return;
        }
        let (gx, gy) = GRID[self.next_grid];
        self.next_grid += 1;
        self.goal = self.clamp_to_box([gx * GRID_STEP, gy * GRID_STEP]);
        self.phase = Phase::Open { until: t + OPEN_TIME };
    }

    fn evaluate(&mut self, t: f64) {
        let thumb = self.touched[0].is_some();
        let finger = self.touched[1..].iter().any(Option::is_some);
        if thumb && finger {
            self.bend = [1.0; FINGER_COUNT];
            self.phase = Phase::Grasp { until: t + HOLD_TIME };
            return;
        }
        match self.estimate() {
            Some(rel) if self.recenters < MAX_RECENTER => {
                self.recenters += 1;
                self.goal = self.clamp_to_box([self.hand[0] + rel[0], self.hand[1] + rel[1]]);
                self.phase = Phase::Open { until: t + OPEN_TIME };
            }
            _ => self.next_probe(t),
        }
    }
}

impl Policy for BlindProbe {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let dt = self.last_t.map_or(0.0, |l| (obs.t - l).max(0.0));
        self.last_t = Some(obs.t);
        let felt = obs.felt[self.side.index()];
        match self.phase {
            Phase::Travel { arrived } => {
                let d = [self.goal[0] - self.hand[0], self.goal[1] - self.hand[1]];
                let dist = d[0].hypot(d[1]);
                let step = TRAVEL_SPEED * dt;
                if dist <= step {
                    self.hand = self.goal;
                    match arrived {
                        None => self.phase = Phase::Travel { arrived: Some(obs.t) },
                        Some(at) if obs.t >= at + SETTLE => {
                            self.touched = [None; FINGER_COUNT];
                            self.phase = Phase::Close;
                        }
                        _ => {}
                    }
                } else {
                    self.hand[0] += d[0] / dist * step;
                    self.hand[1] += d[1] / dist * step;
                }
            }
            Phase::Close => {
                for f in 0..FINGER_COUNT {
                    if self.touched[f].is_some() {
                        continue;
                    }
                    if felt.is_some_and(|x| x.forces[f] >= TOUCH_FORCE) {
                        self.touched[f] = Some(self.bend[f]);
                    } else {
                        self.bend[f] = (self.bend[f] + PROBE_RATE * dt).min(1.0);
                    }
                }
                let settled = (0..FINGER_COUNT).all(|f| self.touched[f].is_some() || self.bend[f] >= 1.0);
                if settled {
                    self.evaluate(obs.t);
                }
            }
            Phase::Open { until } => {
                self.bend = [0.0; FINGER_COUNT];
                if obs.t >= until {
                    self.phase = Phase::Travel { arrived: None };
                }
            }
            Phase::Grasp { until } => {
                if obs.t >= until {
                    self.phase = Phase::Done;
                    self.finished = Some(obs.t);
                }
            }
            Phase::Done => {}
        }
        let home = self.tracker.home(self.side);
        let pose = Pose::new(
            self.spec.center + Vec3::new(self.hand[0], self.hand[1], 0.0),
            home.orientation,
        );
        vec![OperatorInput {
            side: self.side,
            wrist: self.tracker.wrist(self.side, &pose, obs.t_us),
            glove_bend: self.bend,
            glove_split: 0.0,
        }]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}
