//! Fixtures shared by the benchmarks.

use telehaptic::haptics::{HapticFrame, TaxelMatrix, FINGER_COUNT};
use telehaptic::protocol::{Message, Packet};
use telehaptic::retargeting::{HandPose, RelativePose, Side};
use telehaptic::sessions::{SceneSpec, SessionConfig};
use telehaptic::simworld::taxelize;

/// A haptic frame with a different load on every finger.
pub fn loaded_frame(seq: u32) -> HapticFrame {
    let mut fingers = [TaxelMatrix::zero(); FINGER_COUNT];
    for (i, f) in fingers.iter_mut().enumerate() {
        *f = taxelize(1.5 * (i + 1) as f64, u64::from(seq) + i as u64).expect("force in range");
    }
    HapticFrame {
        fingers,
        t_us: u64::from(seq) * 16_000,
        seq,
    }
}

pub fn control_packet(seq: u32) -> Packet {
    Packet::new(
        seq,
        u64::from(seq) * 2_000,
        Message::Control {
            side: Side::Right,
            pose: RelativePose::identity(),
            hand: HandPose::uniform(0.4, 0.2),
        },
    )
}

/// One simulated second against the hard bottle.
pub fn one_second_session() -> SessionConfig {
    SessionConfig {
        scene: SceneSpec::Named("hard_bottle".into()),
        duration_s: 1.0,
        ..Default::default()
    }
}
