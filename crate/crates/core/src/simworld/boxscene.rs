//! Open-top box hiding one graspable object from view.
//!
//! Box coordinates are planar offsets from the box center in the robot torso
//! frame. The hand closes along y: the thumb sweeps from `-aperture/2` to the
//! hand center, the four fingers from `+aperture/2`, each fingertip at its own
//! x offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::haptics::FINGER_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandGeometry {
    /// Thumb-to-fingers opening at zero bend, m.
    pub aperture: f64,
    /// Fingertip x offsets from the hand center, thumb first, m.
    pub finger_x: [f64; FINGER_COUNT],
}

impl Default for HandGeometry {
    fn default() -> Self {
        HandGeometry {
            aperture: 0.10,
            finger_x: [0.0, -0.03, -0.01, 0.01, 0.03],
        }
    }
}

impl HandGeometry {
    /// Fingertip y offset from the hand center at `bend`.
    pub fn tip_y(&self, finger: usize, bend: f64) -> f64 {
        let half = 0.5 * self.aperture;
        let y = half * (1.0 - bend);
        if finger == 0 {
            -y
        } else {
            y
        }
    }

    /// Bend at which `finger` touches a disc of radius `radius` at `offset`
    /// (object center minus hand center, box plane). `None` when the
    /// fingertip path misses the disc or the disc already sits under the
    /// open fingertip.
    pub fn contact_bend(&self, finger: usize, offset: [f64; 2], radius: f64) -> Option<f64> {
        let dx = offset[0] - self.finger_x[finger];
        if dx.abs() >= radius {
            return None;
        }
        let chord = (radius * radius - dx * dx).sqrt();
        let half = 0.5 * self.aperture;
        let travel = if finger == 0 {
            (offset[1] - chord) + half
        } else {
            half - (offset[1] + chord)
        };
        let bend = travel / half;
        (0.0..=1.0).contains(&bend).then_some(bend)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    /// Center of the box opening in the torso frame, m.
    pub center: Vec3,
    /// Interior half extents along x and y, m.
    pub half_extent: [f64; 2],
    /// Clearance between object center and walls, m.
    pub margin: f64,
    pub radius_range: [f64; 2],
    pub mass: f64,
    pub friction: f64,
    pub stiffness: f64,
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec {
            center: Vec3::new(0.40, -0.15, -0.10),
            half_extent: [0.15, 0.15],
            margin: 0.04,
            radius_range: [0.015, 0.04],
            mass: 0.1,
            friction: 0.5,
            stiffness: 400.0,
        }
    }
}

impl BoxSpec {
    pub fn is_valid(&self) -> bool {
        let [r0, r1] = self.radius_range;
        r0 > 0.0
            && r0 <= r1
            && self.margin >= r1
            && self.half_extent.iter().all(|h| *h > self.margin)
            && self.mass > 0.0
            && self.friction > 0.0
            && self.stiffness > 0.0
    }

    /// Feasible object-center range along each axis.
    pub fn feasible_half(&self) -> [f64; 2] {
        self.half_extent.map(|h| h - self.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxScene {
    pub spec: BoxSpec,
    /// Hidden object center, box plane, m.
    pub object_offset: [f64; 2],
    pub object_radius: f64,
}

impl BoxScene {
    /// Object center relative to a hand at `hand_offset` (box plane).
    pub fn relative(&self, hand_offset: [f64; 2]) -> [f64; 2] {
        [
            self.object_offset[0] - hand_offset[0],
            self.object_offset[1] - hand_offset[1],
        ]
    }

    pub fn contains_object(&self) -> bool {
        let r = self.object_radius;
        self.object_offset
            .iter()
            .zip(self.spec.half_extent)
            .all(|(c, h)| c.abs() + r <= h)
    }
}

/// Object center uniform over the feasible interior, radius uniform over the
/// configured range. Deterministic per seed.
pub fn sample_box_scene(spec: &BoxSpec, seed: u64) -> BoxScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [fx, fy] = spec.feasible_half();
    let object_offset = [rng.random_range(-fx..=fx), rng.random_range(-fy..=fy)];
    let object_radius = rng.random_range(spec.radius_range[0]..=spec.radius_range[1]);
    BoxScene {
        spec: *spec,
        object_offset,
        object_radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = BoxSpec::default();
        assert_eq!(sample_box_scene(&spec, 7), sample_box_scene(&spec, 7));
        assert_ne!(sample_box_scene(&spec, 7), sample_box_scene(&spec, 8));
    }

    #[test]
    fn objects_inside_bounds() {
        let spec = BoxSpec::default();
        assert!(spec.is_valid());
        for seed in 0..1000 {
            assert!(sample_box_scene(&spec, seed).contains_object());
        }
    }

    #[test]
    fn covers_feasible_area() {
        let spec = BoxSpec::default();
        let [fx, fy] = spec.feasible_half();
        let mut hit = [[false; 5]; 5];
        for seed in 0..1000 {
            let s = sample_box_scene(&spec, seed);
            let cell = |v: f64, h: f64| (((v + h) / (2.0 * h) * 5.0) as usize).min(4);
            hit[cell(s.object_offset[0], fx)][cell(s.object_offset[1], fy)] = true;
        }
        let covered = hit.iter().flatten().filter(|h| **h).count();
        assert!(covered as f64 >= 0.9 * 25.0);
    }

    #[test]
    fn centered_disc_contact_bends() {
        let g = HandGeometry::default();
        // r = 0.03 centered: thumb meets the surface 0.02 m into its 0.05 m travel.
        let thumb = g.contact_bend(0, [0.0, 0.0], 0.03).unwrap();
        assert!((thumb - 0.4).abs() < 1e-12);
        // Index at x = -0.03 is tangent to the disc and misses it.
        assert_eq!(g.contact_bend(1, [0.0, 0.0], 0.03), None);
        let middle = g.contact_bend(2, [0.0, 0.0], 0.03).unwrap();
        let chord = (0.03f64 * 0.03 - 0.01 * 0.01).sqrt();
        assert!((middle - (0.05 - chord) / 0.05).abs() < 1e-12);
        // Fingertip position at the contact bend lies on the circle.
        let y = g.tip_y(2, middle);
        assert!(((0.01f64).powi(2) + y * y - 0.03f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn far_disc_is_missed() {
        let g = HandGeometry::default();
        for f in 0..FINGER_COUNT {
            assert_eq!(g.contact_bend(f, [0.1, 0.0], 0.03), None);
            assert_eq!(g.contact_bend(f, [0.0, 0.2], 0.03), None);
        }
    }
}
