use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boxscene::{sample_box_scene, BoxScene, HandGeometry};
use super::pen::{pen_step, PenParams, PenState, PenTask};
use super::scenes::SceneConfig;
use super::{
    contact_force, grasp_success, taxel_force_limit, taxelize, DeformationLedger, ObjectKind, SimError, SimObject,
};
use crate::geometry::{Pose, Vec3};
use crate::haptics::{HapticFrame, FINGER_COUNT};
use crate::kinematics::{forward_kinematics, solve_ik, ArmModel, IkParams, JointVector, KinematicsError};
use crate::protocol::{ObjectSnapshot, PenSnapshot, SceneSnapshot, SideSnapshot};
use crate::retargeting::{EndEffectorTarget, HandPose, RetargetConfig, Side};

/// Elbow-bent posture used to seed the first IK solve.
const REST_POSTURE: [f64; 7] = [0.0, 0.4, 0.0, -1.2, 0.0, 0.8, 0.0];

fn default_slew() -> f64 {
    2.0
}
fn default_stall() -> f64 {
    40.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    /// Largest bend change per second.
    #[serde(default = "default_slew")]
    pub slew_rate: f64,
    /// Finger motors stop closing once a fingertip pushes this hard, N.
    #[serde(default = "default_stall")]
    pub stall_force: f64,
    #[serde(default)]
    pub geometry: HandGeometry,
    /// Per-tick solver settings; a tick's solve is warm-started from the
    /// previous joint vector.
    #[serde(default = "tick_ik")]
    pub ik: IkParams,
}

fn tick_ik() -> IkParams {
    IkParams {
        max_iters: 30,
        ..IkParams::default()
    }
}

impl Default for HandParams {
    fn default() -> Self {
        HandParams {
            slew_rate: default_slew(),
            stall_force: default_stall(),
            geometry: HandGeometry::default(),
            ik: tick_ik(),
        }
    }
}

impl HandParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.slew_rate > 0.0) || !(self.stall_force > 0.0) || self.stall_force > taxel_force_limit() {
            return Err(SimError::InvalidScene(
                "slew_rate must be positive and stall_force within the taxel range".into(),
            ));
        }
        if !(self.geometry.aperture > 0.0) {
            return Err(SimError::InvalidScene("hand aperture must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideState {
    pub side: Side,
    pub arm: ArmModel,
    pub q: JointVector,
    pub target: EndEffectorTarget,
    pub achieved: Pose,
    pub ik_ok: bool,
    /// Achieved hand pose.
    pub hand: HandPose,
    /// Most recent commanded hand pose.
    pub hand_cmd: HandPose,
    /// Total fingertip force per finger, N.
    pub forces: [f64; FINGER_COUNT],
    solved: Option<EndEffectorTarget>,
}

#[derive(Debug, Clone, PartialEq)]
struct ObjectState {
    obj: SimObject,
    hidden: bool,
    /// Deepest indentation of each ongoing contact, bend units.
    peak: [f64; FINGER_COUNT],
    touching: [bool; FINGER_COUNT],
    forces: [f64; FINGER_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
struct PenSim {
    object: usize,
    params: PenParams,
    task: PenTask,
    state: PenState,
    dropped: bool,
    next_target: usize,
    completed_at: Option<f64>,
    overshot: bool,
}

/// Summary of one stepped tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub contact_mask: [u8; 2],
}

/// The simulated robot: two arms, two hands, and the scene's objects.
#[derive(Debug, Clone)]
pub struct SimWorld {
    sides: [SideState; 2],
    objects: Vec<ObjectState>,
    box_scene: Option<BoxScene>,
    pen: Option<PenSim>,
    ledger: DeformationLedger,
    hand: HandParams,
    time: f64,
    steps: u64,
    rng: ChaCha8Rng,
}

fn contact_mask(forces: &[f64; FINGER_COUNT]) -> u8 {
    forces
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .fold(0, |m, (i, _)| m | (1 << i))
}

impl SimWorld {
    /// Arms start solved onto the retargeting home poses.
    pub fn new(
        scene: &SceneConfig,
        arms: [ArmModel; 2],
        retarget: &RetargetConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        scene.validate()?;
        let mut sides = Vec::with_capacity(2);
        for (side, arm) in Side::BOTH.into_iter().zip(arms) {
            arm.validate()?;
            let home = retarget.home(side);
            let target = EndEffectorTarget {
                k_now: home.k_init,
                q_gn: home.q_gl,
            };
            let seed_q = JointVector(REST_POSTURE);
            let params = IkParams {
                max_iters: 2000,
                ..IkParams::default()
            };
            let sol = solve_ik(&arm, &target.pose(), &seed_q, &params)?;
            let hand = scene.initial_hand[side.index()];
            sides.push(SideState {
                side,
                achieved: forward_kinematics(&arm, &sol.q),
                arm,
                q: sol.q,
                target,
                ik_ok: true,
                hand,
                hand_cmd: hand,
                forces: [0.0; FINGER_COUNT],
                solved: Some(target),
            });
        }
        let sides: [SideState; 2] = sides.try_into().expect("two sides");

        let mut objects: Vec<ObjectState> = scene
            .objects
            .iter()
            .map(|o| ObjectState {
                obj: o.clone(),
                hidden: false,
                peak: [0.0; FINGER_COUNT],
                touching: [false; FINGER_COUNT],
                forces: [0.0; FINGER_COUNT],
            })
            .collect();

        let box_scene = scene.box_spec.as_ref().map(|spec| sample_box_scene(spec, seed));
        if let Some(b) = &box_scene {
            let center = b.spec.center + Vec3::new(b.object_offset[0], b.object_offset[1], 0.0);
            objects.push(ObjectState {
                obj: SimObject {
                    name: "hidden".into(),
                    side: Side::Right,
                    kind: ObjectKind::Rigid,
                    stiffness: b.spec.stiffness,
                    contact_bend: [f64::INFINITY; FINGER_COUNT],
                    pose: Pose::from_translation(center),
                    mass: b.spec.mass,
                    friction: b.spec.friction,
                    mm_per_bend: 20.0,
                },
                hidden: true,
                peak: [0.0; FINGER_COUNT],
                touching: [false; FINGER_COUNT],
                forces: [0.0; FINGER_COUNT],
            });
        }

        let pen = scene.pen.as_ref().map(|p| PenSim {
            object: objects.iter().position(|o| o.obj.name == p.object).expect("validated"),
            params: p.params,
            task: p.task,
            state: PenState {
                theta: p.task.start_deg.to_radians(),
                omega: 0.0,
            },
            dropped: false,
            next_target: 0,
            completed_at: None,
            overshot: false,
        });

        let mut world = SimWorld {
            sides,
            objects,
            box_scene,
            pen,
            ledger: DeformationLedger::new(),
            hand: scene.hand,
            time: 0.0,
            steps: 0,
            // Taxel noise stream, independent of the scene sampling stream.
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7461_7865_6c73),
        };
        world.update_contacts();
        Ok(world)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn side(&self, side: Side) -> &SideState {
        &self.sides[side.index()]
    }

    pub fn box_scene(&self) -> Option<&BoxScene> {
        self.box_scene.as_ref()
    }

    pub fn ledger(&self) -> &DeformationLedger {
        &self.ledger
    }

    pub fn object(&self, name: &str) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.obj.name == name).map(|o| &o.obj)
    }

    /// Forces exerted on one object by its hand.
    pub fn object_forces(&self, name: &str) -> Option<[f64; FINGER_COUNT]> {
        self.objects.iter().find(|o| o.obj.name == name).map(|o| o.forces)
    }

    /// Grasp criterion for the named object, or the hidden box object when
    /// `name` is `"hidden"`.
    pub fn grasp_success(&self, name: &str) -> bool {
        self.objects
            .iter()
            .find(|o| o.obj.name == name)
            .is_some_and(|o| grasp_success(&o.forces, &o.obj))
    }

    pub fn pen_state(&self) -> Option<PenState> {
        self.pen.as_ref().map(|p| p.state)
    }

    pub fn pen_dropped(&self) -> bool {
        self.pen.as_ref().is_some_and(|p| p.dropped)
    }

    /// Time at which the pen came to rest at the final angle after stopping
    /// at every intermediate angle, if it has.
    pub fn pen_completed_at(&self) -> Option<f64> {
        self.pen.as_ref().and_then(|p| p.completed_at)
    }

    /// Number of task angles (intermediate and final) reached so far.
    pub fn pen_progress(&self) -> usize {
        self.pen.as_ref().map_or(0, |p| p.next_target)
    }

    pub fn pen_overshot(&self) -> bool {
        self.pen.as_ref().is_some_and(|p| p.overshot)
    }

    pub fn set_command(&mut self, side: Side, target: EndEffectorTarget, hand: HandPose) {
        let s = &mut self.sides[side.index()];
        s.target = target;
        s.hand_cmd = hand;
    }

    /// Advances the world by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> StepReport {
        for i in 0..2 {
            self.track_target(i);
            self.slew_hand(i, dt);
        }
        self.update_contacts();
        self.track_deformation();
        self.step_pen(dt);
        self.time += dt;
        self.steps += 1;
        StepReport {
            time: self.time,
            contact_mask: [contact_mask(&self.sides[0].forces), contact_mask(&self.sides[1].forces)],
        }
    }

    fn track_target(&mut self, i: usize) {
        let s = &mut self.sides[i];
        if s.solved == Some(s.target) {
            return;
        }
        match solve_ik(&s.arm, &s.target.pose(), &s.q, &self.hand.ik) {
            Ok(sol) => {
                s.q = sol.q;
                s.ik_ok = true;
                s.solved = Some(s.target);
            }
            Err(KinematicsError::NoConvergence { best }) => {
                s.q = best.q;
                s.ik_ok = false;
            }
            Err(_) => {
                s.ik_ok = false;
                s.solved = Some(s.target);
            }
        }
        s.achieved = forward_kinematics(&s.arm, &s.q);
    }

    fn slew_hand(&mut self, i: usize, dt: f64) {
        let max_step = self.hand.slew_rate * dt;
        let side = self.sides[i].side;
        let stall = self.hand.stall_force;
        for f in 0..FINGER_COUNT {
            let cur = self.sides[i].hand.bend[f];
            let cmd = self.sides[i].hand_cmd.bend[f];
            let mut next = cur + (cmd - cur).clamp(-max_step, max_step);
            if next > cur {
                let limit = self
                    .objects
                    .iter()
                    .filter(|o| o.obj.side == side)
                    .map(|o| o.obj.contact_bend[f] + stall / o.obj.stiffness)
                    .fold(f64::INFINITY, f64::min);
                if next > limit {
                    next = cur.max(limit);
                }
            }
            self.sides[i].hand.bend[f] = next;
        }
        let s = &mut self.sides[i];
        s.hand.thumb_split += (s.hand_cmd.thumb_split - s.hand.thumb_split).clamp(-max_step, max_step);
    }

    fn update_contacts(&mut self) {
        if let Some(b) = &self.box_scene {
            let s = &self.sides[Side::Right.index()];
            let hand_offset = [
                s.achieved.position.x - b.spec.center.x,
                s.achieved.position.y - b.spec.center.y,
            ];
            let rel = b.relative(hand_offset);
            let bends: [f64; FINGER_COUNT] = std::array::from_fn(|f| {
                self.hand
                    .geometry
                    .contact_bend(f, rel, b.object_radius)
                    .unwrap_or(f64::INFINITY)
            });
            if let Some(o) = self.objects.iter_mut().find(|o| o.hidden) {
                o.obj.contact_bend = bends;
            }
        }
        for s in self.sides.iter_mut() {
            s.forces = [0.0; FINGER_COUNT];
        }
        for o in self.objects.iter_mut() {
            let s = &mut self.sides[o.obj.side.index()];
            for f in 0..FINGER_COUNT {
                let force = contact_force(&o.obj, f, s.hand.bend[f]);
                o.forces[f] = force;
                s.forces[f] += force;
            }
        }
    }

    fn track_deformation(&mut self) {
        for o in self.objects.iter_mut() {
            let ObjectKind::Deformable { plasticity } = o.obj.kind else {
                continue;
            };
            let hand = &self.sides[o.obj.side.index()].hand;
            for f in 0..FINGER_COUNT {
                let depth = hand.bend[f] - o.obj.contact_bend[f];
                if depth > 0.0 {
                    o.touching[f] = true;
                    o.peak[f] = o.peak[f].max(depth);
                } else if o.touching[f] {
                    self.ledger
                        .record_indentation(o.peak[f] * o.obj.mm_per_bend)
                        .expect("peak depth is positive");
                    o.obj.contact_bend[f] = (o.obj.contact_bend[f] + plasticity * o.peak[f]).min(1.0);
                    o.touching[f] = false;
                    o.peak[f] = 0.0;
                }
            }
        }
    }

    /// Records indentations still in progress, as if every finger let go now.
    /// Call once at the end of an episode.
    pub fn finish_episode(&mut self) {
        for o in self.objects.iter_mut() {
            let ObjectKind::Deformable { plasticity } = o.obj.kind else {
                continue;
            };
            for f in 0..FINGER_COUNT {
                if o.touching[f] {
                    self.ledger
                        .record_indentation(o.peak[f] * o.obj.mm_per_bend)
                        .expect("peak depth is positive");
                    o.obj.contact_bend[f] = (o.obj.contact_bend[f] + plasticity * o.peak[f]).min(1.0);
                    o.touching[f] = false;
                    o.peak[f] = 0.0;
                }
            }
        }
    }

    fn step_pen(&mut self, dt: f64) {
        let Some(pen) = self.pen.as_mut() else {
            return;
        };
        if pen.dropped {
            return;
        }
        let forces = self.objects[pen.object].forces;
        let grip = forces[0].min(forces[1]);
        if grip < pen.task.drop_force {
            pen.dropped = true;
            return;
        }
        pen.state = pen_step(&pen.params, pen.state, grip, dt);
        let targets = pen.task.targets();
        let tol = pen.task.tolerance();
        if pen.state.theta > targets[2] + tol {
            pen.overshot = true;
        }
        if pen.state.omega == 0.0 && pen.next_target < targets.len() {
            if (pen.state.theta - targets[pen.next_target]).abs() <= tol {
                pen.next_target += 1;
                if pen.next_target == targets.len() {
                    pen.completed_at = Some(self.time + dt);
                }
            }
        }
    }

    /// Samples the fingertip arrays of one hand.
    pub fn haptic_frame(&mut self, side: Side, seq: u32, t_us: u64) -> Result<HapticFrame, SimError> {
        let limit = taxel_force_limit();
        let forces = self.sides[side.index()].forces;
        let mut frame = HapticFrame {
            seq,
            t_us,
            ..Default::default()
        };
        for (f, t) in frame.fingers.iter_mut().enumerate() {
            *t = taxelize(forces[f].min(limit), self.rng.random())?;
        }
        Ok(frame)
    }

    /// Operator-visible world state. The hidden box object is never listed.
    pub fn snapshot(&self) -> SceneSnapshot {
        let sides = self
            .sides
            .iter()
            .map(|s| SideSnapshot {
                side: s.side,
                hand: s.hand,
                target: s.target,
                achieved_position: s.achieved.position,
                achieved_orientation: s.achieved.orientation,
                ik_ok: s.ik_ok,
                contact_mask: contact_mask(&s.forces),
            })
            .collect();
        let objects = self
            .objects
            .iter()
            .filter(|o| !o.hidden)
            .map(|o| {
                let indentation_mm = match o.obj.kind {
                    ObjectKind::Deformable { .. } => {
                        let hand = &self.sides[o.obj.side.index()].hand;
                        (0..FINGER_COUNT)
                            .map(|f| (hand.bend[f] - o.obj.contact_bend[f]).max(0.0))
                            .fold(0.0, f64::max)
                            * o.obj.mm_per_bend
                    }
                    _ => 0.0,
                };
                ObjectSnapshot {
                    name: o.obj.name.clone(),
                    kind: o.obj.kind.code(),
                    indentation_mm,
                    position: o.obj.pose.position,
                    held: grasp_success(&o.forces, &o.obj),
                }
            })
            .collect();
        SceneSnapshot {
            sides,
            objects,
            pen: self.pen.as_ref().map(|p| PenSnapshot {
                theta: p.state.theta,
                omega: p.state.omega,
                dropped: p.dropped,
            }),
            box_present: self.box_scene.is_some(),
            deformation_total_mm: self.ledger.total_mm(),
            deformation_entries: u16::try_from(self.ledger.len()).unwrap_or(u16::MAX),
        }
    }
}

/// Left and right default arms.
pub fn default_arms() -> [ArmModel; 2] {
    [ArmModel::default_for(Side::Left), ArmModel::default_for(Side::Right)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haptics::aggregate_force;
    use crate::simworld::catalog_object;

    fn world(scene: &SceneConfig, seed: u64) -> SimWorld {
        SimWorld::new(scene, default_arms(), &RetargetConfig::default(), seed).unwrap()
    }

    fn home(side: Side) -> EndEffectorTarget {
        let h = RetargetConfig::default();
        let h = h.home(side);
        EndEffectorTarget {
            k_now: h.k_init,
            q_gn: h.q_gl,
        }
    }

    #[test]
    fn arms_start_at_home() {
        let w = world(&SceneConfig::builtin("empty").unwrap(), 0);
        for side in Side::BOTH {
            let s = w.side(side);
            assert!((s.achieved.position - home(side).k_now).norm() < 1e-4);
            assert!(s.arm.within_limits(&s.q));
        }
    }

    #[test]
    fn unchanged_command_leaves_state() {
        let mut w = world(&SceneConfig::builtin("hard_bottle").unwrap(), 0);
        let before = w.side(Side::Right).clone();
        w.set_command(Side::Right, before.target, before.hand);
        w.step(0.002);
        assert_eq!(w.side(Side::Right), &before);
        assert!((w.time() - 0.002).abs() < 1e-15);
    }

    #[test]
    fn slew_rate_bounds_closure() {
        let mut w = world(&SceneConfig::builtin("empty").unwrap(), 0);
        w.set_command(Side::Right, home(Side::Right), HandPose::uniform(1.0, 0.0));
        for _ in 0..100 {
            w.step(0.002);
        }
        // 0.2 s at 2.0 /s
        assert!((w.side(Side::Right).hand.bend[2] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn closing_on_rigid_object_increases_taxel_sums() {
        let mut w = world(&SceneConfig::builtin("hard_bottle").unwrap(), 3);
        w.set_command(Side::Right, home(Side::Right), HandPose::uniform(1.0, 0.0));
        let mut last = 0u64;
        let mut rising = 0;
        for k in 0..400u32 {
            let before = w.side(Side::Right).hand.bend[1];
            w.step(0.002);
            let moved = w.side(Side::Right).hand.bend[1] > before;
            let frame = w.haptic_frame(Side::Right, k, 0).unwrap();
            let total = frame.fingers[1].total_counts();
            if total > 0 && moved {
                assert!(total > last, "step {k}: {total} <= {last}");
                rising += 1;
            }
            last = total;
        }
        assert!(rising > 3);
        // Stalled at the motor force limit.
        let f = aggregate_force(&w.haptic_frame(Side::Right, 0, 0).unwrap().fingers[1]);
        assert!((f - 40.0).abs() < 1e-3);
    }

    #[test]
    fn frames_are_deterministic() {
        let run = || {
            let mut w = world(&SceneConfig::builtin("soft_bottle").unwrap(), 11);
            w.set_command(Side::Right, home(Side::Right), HandPose::uniform(0.6, 0.0));
            (0..200u32)
                .map(|k| {
                    w.step(0.002);
                    w.haptic_frame(Side::Right, k, u64::from(k)).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn plasticity_shifts_contact() {
        let scene = SceneConfig::builtin("soft_fruit").unwrap();
        let obj = catalog_object("soft_fruit", Side::Right).unwrap();
        let mut w = world(&scene, 0);
        w.set_command(Side::Right, home(Side::Right), HandPose::uniform(0.55, 0.0));
        for _ in 0..400 {
            w.step(0.002);
        }
        w.set_command(Side::Right, home(Side::Right), HandPose::open());
        for _ in 0..400 {
            w.step(0.002);
        }
        let after = w.object("soft_fruit").unwrap();
        for f in 0..FINGER_COUNT {
            let delta = 0.55 - obj.contact_bend[f];
            let expected = obj.contact_bend[f] + 0.3 * delta;
            assert!((after.contact_bend[f] - expected).abs() < 1e-12);
        }
        assert_eq!(w.ledger().len(), FINGER_COUNT);
        let expected_total: f64 = obj.contact_bend.iter().map(|c| (0.55 - c) * 20.0).sum();
        assert!((w.ledger().total_mm() - expected_total).abs() < 1e-9);
    }

    #[test]
    fn hidden_object_is_not_in_snapshot() {
        let w = world(&SceneConfig::builtin("box").unwrap(), 5);
        let snap = w.snapshot();
        assert!(snap.box_present);
        assert!(snap.objects.is_empty());
        assert_eq!(snap.sides.len(), 2);
    }

    #[test]
    fn box_grasp_at_object_center() {
        let mut w = world(&SceneConfig::builtin("box").unwrap(), 5);
        let b = *w.box_scene().unwrap();
        let mut target = home(Side::Right);
        target.k_now = b.spec.center + Vec3::new(b.object_offset[0], b.object_offset[1], 0.0);
        w.set_command(Side::Right, target, HandPose::uniform(1.0, 0.0));
        for _ in 0..600 {
            w.step(0.002);
        }
        assert!(w.side(Side::Right).ik_ok);
        assert!(w.grasp_success("hidden"));
    }

    #[test]
    fn pen_released_rotates_and_drops() {
        let mut w = world(&SceneConfig::builtin("pen").unwrap(), 0);
        let start = w.pen_state().unwrap();
        let hand = w.side(Side::Right).hand;
        w.set_command(Side::Right, home(Side::Right), hand);
        for _ in 0..50 {
            w.step(0.002);
        }
        assert_eq!(w.pen_state().unwrap(), start);
        w.set_command(Side::Right, home(Side::Right), HandPose::open());
        for _ in 0..200 {
            w.step(0.002);
        }
        assert!(w.pen_dropped());
        assert!(w.pen_state().unwrap().theta > start.theta);
    }
}
