//! Named objects and scene presets; any of them can also be spelled out in
//! a session config file.

use serde::{Deserialize, Serialize};

use super::boxscene::BoxSpec;
use super::pen::{PenParams, PenTask};
use super::world::HandParams;
use super::{ObjectKind, SimError, SimObject};
use crate::geometry::{Pose, Vec3};
use crate::retargeting::{HandPose, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenSetup {
    /// Name of the pen object in `objects`.
    pub object: String,
    #[serde(default)]
    pub params: PenParams,
    #[serde(default)]
    pub task: PenTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Objects rest in the hand; contact depends on bend only.
    InHand,
    /// One object hidden in a box; contact depends on hand placement.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    #[serde(default)]
    pub objects: Vec<SimObject>,
    #[serde(default)]
    pub pen: Option<PenSetup>,
    #[serde(default, rename = "box")]
    pub box_spec: Option<BoxSpec>,
    #[serde(default)]
    pub hand: HandParams,
    /// Hand pose of each side (left, right) at t = 0.
    #[serde(default)]
    pub initial_hand: [HandPose; 2],
}

const CATALOG: &[&str] = &["soft_bottle", "hard_bottle", "drill", "soft_fruit", "pen"];

/// Object presets. Stiffness values are assumptions; only their ordering
/// carries meaning.
pub fn catalog_object(name: &str, side: Side) -> Option<SimObject> {
    let base = |k: f64, kind: ObjectKind| SimObject {
        name: name.to_string(),
        side,
        kind,
        stiffness: k,
        contact_bend: [0.30, 0.35, 0.35, 0.35, 0.35],
        pose: Pose::from_translation(Vec3::new(0.40, if side == Side::Left { 0.15 } else { -0.15 }, -0.10)),
        mass: 0.1,
        friction: 0.5,
        mm_per_bend: 20.0,
    };
    Some(match name {
        "soft_bottle" => base(200.0, ObjectKind::Rigid),
        "hard_bottle" => base(800.0, ObjectKind::Rigid),
        "drill" => SimObject {
            mass: 1.2,
            ..base(3000.0, ObjectKind::Rigid)
        },
        "soft_fruit" => SimObject {
            contact_bend: [0.35, 0.40, 0.40, 0.42, 0.45],
            mass: 0.15,
            friction: 0.6,
            ..base(50.0, ObjectKind::Deformable { plasticity: 0.3 })
        },
        "pen" => SimObject {
            contact_bend: [0.45, 0.45, 1.0, 1.0, 1.0],
            mass: 0.02,
            ..base(100.0, ObjectKind::Pen)
        },
        _ => return None,
    })
}

impl SceneConfig {
    pub fn empty(name: &str) -> Self {
        SceneConfig {
            name: name.to_string(),
            objects: Vec::new(),
            pen: None,
            box_spec: None,
            hand: HandParams::default(),
            initial_hand: [HandPose::open(); 2],
        }
    }

    /// Single right-hand object from the catalog.
    pub fn single(object: SimObject) -> Self {
        SceneConfig {
            objects: vec![object.clone()],
            ..Self::empty(&object.name)
        }
    }

    /// `empty`, `box`, `pen`, `fruit_basket` (one soft fruit per hand), or
    /// any catalog object name.
    pub fn builtin(name: &str) -> Result<Self, SimError> {
        match name {
            "empty" => Ok(Self::empty(name)),
            "box" => Ok(SceneConfig {
                box_spec: Some(BoxSpec::default()),
                ..Self::empty(name)
            }),
            "pen" => {
                let pen = catalog_object("pen", Side::Right).expect("catalog pen");
                let task = PenTask::default();
                let grip_bend = pen.contact_bend[0] + task.initial_grip / pen.stiffness;
                let mut hand = HandPose::open();
                hand.bend[0] = grip_bend;
                hand.bend[1] = grip_bend;
                Ok(SceneConfig {
                    pen: Some(PenSetup {
                        object: pen.name.clone(),
                        params: PenParams::default(),
                        task,
                    }),
                    initial_hand: [HandPose::open(), hand],
                    ..Self::single(pen)
                })
            }
            "fruit_basket" => {
                let mut objects = Vec::new();
                for (side, name) in [(Side::Left, "fruit_left"), (Side::Right, "fruit_right")] {
                    let mut fruit = catalog_object("soft_fruit", side).expect("catalog fruit");
                    fruit.name = name.into();
                    objects.push(fruit);
                }
                Ok(SceneConfig {
                    objects,
                    ..Self::empty(name)
                })
            }
            other => catalog_object(other, Side::Right)
                .map(Self::single)
                .ok_or_else(|| SimError::Unknown(other.to_string())),
        }
    }

    pub fn builtin_names() -> Vec<&'static str> {
        let mut names = vec!["empty", "box", "fruit_basket"];
        names.extend_from_slice(CATALOG);
        names
    }

    pub fn kind(&self) -> SceneKind {
        if self.box_spec.is_some() {
            SceneKind::Box
        } else {
            SceneKind::InHand
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut names = std::collections::BTreeSet::new();
        for o in &self.objects {
            o.validate()?;
            if !names.insert(o.name.as_str()) {
                return Err(SimError::InvalidScene(format!("duplicate object name {:?}", o.name)));
            }
            if self.box_spec.is_some() && o.name == "hidden" {
                return Err(SimError::InvalidScene("\"hidden\" names the sampled box object".into()));
            }
        }
        if self.objects.len() > 200 {
            return Err(SimError::InvalidScene("at most 200 objects".into()));
        }
        if let Some(pen) = &self.pen {
            let obj = self
                .objects
                .iter()
                .find(|o| o.name == pen.object)
                .ok_or_else(|| SimError::InvalidScene(format!("pen object {:?} not found", pen.object)))?;
            if obj.kind != ObjectKind::Pen {
                return Err(SimError::InvalidScene("pen object must have kind pen".into()));
            }
            if !pen.params.is_valid() {
                return Err(SimError::InvalidScene("pen parameters must be positive".into()));
            }
        }
        if let Some(b) = &self.box_spec {
            if !b.is_valid() {
                return Err(SimError::InvalidScene("box dimensions are inconsistent".into()));
            }
        }
        if !self.initial_hand.iter().all(HandPose::is_valid) {
            return Err(SimError::InvalidScene("initial hand pose outside [0, 1]".into()));
        }
        self.hand.validate()?;
        Ok(())
    }
}
