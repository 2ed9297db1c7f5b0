//! Fixed-layout little-endian framing. Byte offsets are documented in
//! `protocol.md` at the repository root.

use thiserror::Error;

use crate::geometry::{Rot3, Vec3};
use crate::haptics::{GloveCommand, HapticFrame, TaxelMatrix, FINGER_COUNT, TAXEL_COLS, TAXEL_ROWS};
use crate::retargeting::{EndEffectorTarget, HandPose, RelativePose, Side, WristSample};

pub const MAGIC: [u8; 2] = [0x54, 0x4C];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

pub const TYPE_HELLO: u8 = 0x00;
pub const TYPE_CONTROL: u8 = 0x01;
pub const TYPE_HAPTIC: u8 = 0x02;
pub const TYPE_SCENE: u8 = 0x03;
pub const TYPE_GLOVE: u8 = 0x04;
/// Log-only record types; never sent on a live connection.
pub const TYPE_WRIST: u8 = 0x10;
pub const TYPE_TARGET: u8 = 0x11;
pub const TYPE_HAND_STATE: u8 = 0x12;

const ROT_LEN: usize = 9 * 8;
const VEC_LEN: usize = 3 * 8;
const HAND_LEN: usize = (FINGER_COUNT + 1) * 8;
pub const HELLO_LEN: usize = 1 + 3 * 8;
pub const CONTROL_LEN: usize = 1 + VEC_LEN + ROT_LEN + HAND_LEN;
pub const HAPTIC_LEN: usize = 1 + FINGER_COUNT * TAXEL_ROWS * TAXEL_COLS * 2;
pub const GLOVE_LEN: usize = 1 + FINGER_COUNT * 8;
pub const WRIST_LEN: usize = 1 + VEC_LEN + ROT_LEN;
pub const TARGET_LEN: usize = 1 + VEC_LEN + ROT_LEN;
pub const HAND_STATE_LEN: usize = 1 + HAND_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("frame truncated: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload length {actual} does not match message layout (expected {expected})")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid field value: {0}")]
    InvalidField(&'static str),
    #[error("payload of {0} bytes exceeds the 65535-byte limit")]
    PayloadTooLarge(usize),
    #[error("haptic frame seq/timestamp disagree with the packet header")]
    InconsistentHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameHeader {
    pub msg_type: u8,
    pub seq: u32,
    pub t_us: u64,
    pub payload_len: u16,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..2].copy_from_slice(&MAGIC);
        b[2] = VERSION;
        b[3] = self.msg_type;
        b[4..8].copy_from_slice(&self.seq.to_le_bytes());
        b[8..16].copy_from_slice(&self.t_us.to_le_bytes());
        b[16..18].copy_from_slice(&self.payload_len.to_le_bytes());
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Robot = 0,
    Operator = 1,
    Bridge = 2,
}

impl Role {
    fn from_u8(v: u8) -> Option<Role> {
        match v {
            0 => Some(Role::Robot),
            1 => Some(Role::Operator),
            2 => Some(Role::Bridge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateSpec {
    pub control_hz: f64,
    pub haptic_hz: f64,
    pub scene_hz: f64,
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            control_hz: 500.0,
            haptic_hz: 62.0,
            scene_hz: 30.0,
        }
    }
}

impl RateSpec {
    pub fn is_valid(&self) -> bool {
        [self.control_hz, self.haptic_hz, self.scene_hz]
            .iter()
            .all(|r| r.is_finite() && *r > 0.0)
    }
}

/// Per-arm state visible to the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideSnapshot {
    pub side: Side,
    pub hand: HandPose,
    pub target: EndEffectorTarget,
    pub achieved_position: Vec3,
    pub achieved_orientation: Rot3,
    pub ik_ok: bool,
    /// Bit i set when finger i touches an object.
    pub contact_mask: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKindCode {
    Rigid = 0,
    Deformable = 1,
    Pen = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSnapshot {
    pub name: String,
    pub kind: ObjectKindCode,
    /// Largest current fingertip indentation, mm.
    pub indentation_mm: f64,
    pub position: Vec3,
    pub held: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenSnapshot {
    pub theta: f64,
    pub omega: f64,
    pub dropped: bool,
}

/// Structured world state streamed in place of video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSnapshot {
    pub sides: Vec<SideSnapshot>,
    pub objects: Vec<ObjectSnapshot>,
    pub pen: Option<PenSnapshot>,
    /// An occluding box is present; its contents are never described.
    pub box_present: bool,
    pub deformation_total_mm: f64,
    pub deformation_entries: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { role: Role, rates: RateSpec },
    Control { side: Side, pose: RelativePose, hand: HandPose },
    /// The frame's `seq`/`t_us` travel in the packet header.
    Haptic { side: Side, frame: HapticFrame },
    Scene(SceneSnapshot),
    Glove { side: Side, command: GloveCommand },
    /// Log-only: raw tracker sample on the operator side.
    Wrist { side: Side, sample: WristSample },
    /// Log-only: end-effector target computed on the robot side.
    Target { side: Side, target: EndEffectorTarget },
    /// Log-only: achieved hand pose on the robot side.
    HandState { side: Side, hand: HandPose },
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::Hello { .. } => TYPE_HELLO,
            Message::Control { .. } => TYPE_CONTROL,
            Message::Haptic { .. } => TYPE_HAPTIC,
            Message::Scene(_) => TYPE_SCENE,
            Message::Glove { .. } => TYPE_GLOVE,
            Message::Wrist { .. } => TYPE_WRIST,
            Message::Target { .. } => TYPE_TARGET,
            Message::HandState { .. } => TYPE_HAND_STATE,
        }
    }

    pub fn side(&self) -> Option<Side> {
        match self {
            Message::Control { side, .. }
            | Message::Haptic { side, .. }
            | Message::Glove { side, .. }
            | Message::Wrist { side, .. }
            | Message::Target { side, .. }
            | Message::HandState { side, .. } => Some(*side),
            Message::Hello { .. } | Message::Scene(_) => None,
        }
    }
}

/// A message with its header sequence number and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub seq: u32,
    pub t_us: u64,
    pub message: Message,
}

impl Packet {
    pub fn new(seq: u32, t_us: u64, message: Message) -> Self {
        Packet { seq, t_us, message }
    }

    pub fn haptic(side: Side, frame: HapticFrame) -> Self {
        Packet {
            seq: frame.seq,
            t_us: frame.t_us,
            message: Message::Haptic { side, frame },
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: &Vec3) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn rot(&mut self, r: &Rot3) {
        r.rows().iter().flatten().for_each(|&x| self.f64(x));
    }
    fn hand(&mut self, h: &HandPose) {
        h.bend.iter().for_each(|&x| self.f64(x));
        self.f64(h.thumb_split);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.pos + n > self.buf.len() {
            return Err(ProtocolError::LengthMismatch {
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ProtocolError::InvalidField("non-finite float"))
        }
    }
    fn vec3(&mut self) -> Result<Vec3, ProtocolError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn rot(&mut self) -> Result<Rot3, ProtocolError> {
        let mut rows = [[0.0; 3]; 3];
        for v in rows.iter_mut().flatten() {
            *v = self.f64()?;
        }
        Rot3::from_rows(rows).map_err(|_| ProtocolError::InvalidField("rotation not orthonormal"))
    }
    fn side(&mut self) -> Result<Side, ProtocolError> {
        Side::from_u8(self.u8()?).ok_or(ProtocolError::InvalidField("side"))
    }
    fn flag(&mut self) -> Result<bool, ProtocolError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(ProtocolError::InvalidField("boolean flag")),
        }
    }
    fn hand(&mut self) -> Result<HandPose, ProtocolError> {
        let mut h = HandPose::default();
        for v in h.bend.iter_mut() {
            *v = self.f64()?;
        }
        h.thumb_split = self.f64()?;
        if h.is_valid() {
            Ok(h)
        } else {
            Err(ProtocolError::InvalidField("hand value outside [0, 1]"))
        }
    }
    fn finish(&self) -> Result<(), ProtocolError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(ProtocolError::LengthMismatch {
                expected: self.pos,
                actual: self.buf.len(),
            })
        }
    }
}

fn fixed_payload_len(msg_type: u8) -> Option<Option<usize>> {
    match msg_type {
        TYPE_HELLO => Some(Some(HELLO_LEN)),
        TYPE_CONTROL => Some(Some(CONTROL_LEN)),
        TYPE_HAPTIC => Some(Some(HAPTIC_LEN)),
        TYPE_SCENE => Some(None),
        TYPE_GLOVE => Some(Some(GLOVE_LEN)),
        TYPE_WRIST => Some(Some(WRIST_LEN)),
        TYPE_TARGET => Some(Some(TARGET_LEN)),
        TYPE_HAND_STATE => Some(Some(HAND_STATE_LEN)),
        _ => None,
    }
}

fn encode_payload(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut w = Writer(Vec::with_capacity(256));
    match msg {
        Message::Hello { role, rates } => {
            w.u8(*role as u8);
            w.f64(rates.control_hz);
            w.f64(rates.haptic_hz);
            w.f64(rates.scene_hz);
        }
        Message::Control { side, pose, hand } => {
            w.u8(*side as u8);
            w.vec3(&pose.p_l);
            w.rot(&pose.r_ln);
            w.hand(hand);
        }
        Message::Haptic { side, frame } => {
            w.u8(*side as u8);
            for t in &frame.fingers {
                t.0.iter().flatten().for_each(|&c| w.u16(c));
            }
        }
        Message::Scene(s) => encode_scene(&mut w, s)?,
        Message::Glove { side, command } => {
            w.u8(*side as u8);
            command.tau.iter().for_each(|&t| w.f64(t));
        }
        Message::Wrist { side, sample } => {
            w.u8(*side as u8);
            w.vec3(&sample.p_now);
            w.rot(&sample.r_gn);
        }
        Message::Target { side, target } => {
            w.u8(*side as u8);
            w.vec3(&target.k_now);
            w.rot(&target.q_gn);
        }
        Message::HandState { side, hand } => {
            w.u8(*side as u8);
            w.hand(hand);
        }
    }
    Ok(w.0)
}

fn encode_scene(w: &mut Writer, s: &SceneSnapshot) -> Result<(), ProtocolError> {
    let flags = u8::from(s.pen.is_some()) | (u8::from(s.box_present) << 1);
    w.u8(flags);
    w.u8(u8::try_from(s.sides.len()).map_err(|_| ProtocolError::InvalidField("too many sides"))?);
    for side in &s.sides {
        w.u8(side.side as u8);
        w.hand(&side.hand);
        w.vec3(&side.target.k_now);
        w.rot(&side.target.q_gn);
        w.vec3(&side.achieved_position);
        w.rot(&side.achieved_orientation);
        w.u8(u8::from(side.ik_ok));
        w.u8(side.contact_mask);
    }
    w.u8(u8::try_from(s.objects.len()).map_err(|_| ProtocolError::InvalidField("too many objects"))?);
    for o in &s.objects {
        w.u8(o.kind as u8);
        w.u8(u8::from(o.held));
        w.f64(o.indentation_mm);
        w.vec3(&o.position);
        let name = o.name.as_bytes();
        w.u8(u8::try_from(name.len()).map_err(|_| ProtocolError::InvalidField("object name too long"))?);
        w.0.extend_from_slice(name);
    }
    if let Some(pen) = &s.pen {
        w.f64(pen.theta);
        w.f64(pen.omega);
        w.u8(u8::from(pen.dropped));
    }
    w.f64(s.deformation_total_mm);
    w.u16(s.deformation_entries);
    Ok(())
}

fn decode_scene(r: &mut Reader<'_>) -> Result<SceneSnapshot, ProtocolError> {
    let flags = r.u8()?;
    if flags & !0b11 != 0 {
        return Err(ProtocolError::InvalidField("scene flags"));
    }
    let n_sides = r.u8()?;
    let mut sides = Vec::with_capacity(n_sides as usize);
    for _ in 0..n_sides {
        let side = r.side()?;
        let hand = r.hand()?;
        let target = EndEffectorTarget {
            k_now: r.vec3()?,
            q_gn: r.rot()?,
        };
        let achieved_position = r.vec3()?;
        let achieved_orientation = r.rot()?;
        let ik_ok = r.flag()?;
        let contact_mask = r.u8()?;
        if contact_mask >= 1 << FINGER_COUNT {
            return Err(ProtocolError::InvalidField("contact mask"));
        }
        sides.push(SideSnapshot {
            side,
            hand,
            target,
            achieved_position,
            achieved_orientation,
            ik_ok,
            contact_mask,
        });
    }
    let n_objects = r.u8()?;
    let mut objects = Vec::with_capacity(n_objects as usize);
    for _ in 0..n_objects {
        let kind = match r.u8()? {
            0 => ObjectKindCode::Rigid,
            1 => ObjectKindCode::Deformable,
            2 => ObjectKindCode::Pen,
            _ => return Err(ProtocolError::InvalidField("object kind")),
        };
        let held = r.flag()?;
        let indentation_mm = r.f64()?;
        let position = r.vec3()?;
        let len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ProtocolError::InvalidField("object name is not UTF-8"))?
            .to_string();
        objects.push(ObjectSnapshot {
            name,
            kind,
            indentation_mm,
            position,
            held,
        });
    }
    let pen = if flags & 1 != 0 {
        Some(PenSnapshot {
            theta: r.f64()?,
            omega: r.f64()?,
            dropped: r.flag()?,
        })
    } else {
        None
    };
    let deformation_total_mm = r.f64()?;
    let deformation_entries = r.u16()?;
    Ok(SceneSnapshot {
        sides,
        objects,
        pen,
        box_present: flags & 2 != 0,
        deformation_total_mm,
        deformation_entries,
    })
}

/// Header plus payload. Output is a pure function of the packet.
pub fn encode(packet: &Packet) -> Result<Vec<u8>, ProtocolError> {
    if let Message::Haptic { frame, .. } = &packet.message {
        if frame.seq != packet.seq || frame.t_us != packet.t_us {
            return Err(ProtocolError::InconsistentHeader);
        }
    }
    let payload = encode_payload(&packet.message)?;
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::PayloadTooLarge(payload.len()));
    }
    let header = FrameHeader {
        msg_type: packet.message.type_code(),
        seq: packet.seq,
        t_us: packet.t_us,
        payload_len: payload.len() as u16,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses the header at the start of `bytes`, validating everything that
/// can be checked before the payload has arrived.
pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader, ProtocolError> {
    let truncated = || ProtocolError::TruncatedFrame {
        needed: HEADER_LEN,
        available: bytes.len(),
    };
    for (i, &m) in MAGIC.iter().enumerate() {
        match bytes.get(i) {
            Some(&b) if b != m => return Err(ProtocolError::BadMagic),
            None => return Err(truncated()),
            _ => {}
        }
    }
    match bytes.get(2) {
        Some(&v) if v != VERSION => return Err(ProtocolError::BadVersion(v)),
        None => return Err(truncated()),
        _ => {}
    }
    let msg_type = *bytes.get(3).ok_or_else(truncated)?;
    let expected = fixed_payload_len(msg_type).ok_or(ProtocolError::UnknownType(msg_type))?;
    if bytes.len() < HEADER_LEN {
        return Err(truncated());
    }
    let payload_len = u16::from_le_bytes([bytes[16], bytes[17]]);
    if let Some(expected) = expected {
        if payload_len as usize != expected {
            return Err(ProtocolError::LengthMismatch {
                expected,
                actual: payload_len as usize,
            });
        }
    }
    Ok(FrameHeader {
        msg_type,
        seq: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
        t_us: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        payload_len,
    })
}

/// Decodes one frame from the start of `bytes`, returning the packet and the
/// number of bytes consumed (header + payload). Nothing is returned for a
/// frame that is not fully present.
pub fn decode(bytes: &[u8]) -> Result<(Packet, usize), ProtocolError> {
    let header = decode_header(bytes)?;
    let total = HEADER_LEN + header.payload_len as usize;
    if bytes.len() < total {
        return Err(ProtocolError::TruncatedFrame {
            needed: total,
            available: bytes.len(),
        });
    }
    let mut r = Reader {
        buf: &bytes[HEADER_LEN..total],
        pos: 0,
    };
    let message = match header.msg_type {
        TYPE_HELLO => {
            let role = Role::from_u8(r.u8()?).ok_or(ProtocolError::InvalidField("role"))?;
            let rates = RateSpec {
                control_hz: r.f64()?,
                haptic_hz: r.f64()?,
                scene_hz: r.f64()?,
            };
            if !rates.is_valid() {
                return Err(ProtocolError::InvalidField("rates must be positive"));
            }
            Message::Hello { role, rates }
        }
        TYPE_CONTROL => Message::Control {
            side: r.side()?,
            pose: RelativePose {
                p_l: r.vec3()?,
                r_ln: r.rot()?,
            },
            hand: r.hand()?,
        },
        TYPE_HAPTIC => {
            let side = r.side()?;
            let mut fingers = [TaxelMatrix::zero(); FINGER_COUNT];
            for t in fingers.iter_mut() {
                for c in t.0.iter_mut().flatten() {
                    *c = r.u16()?;
                }
            }
            Message::Haptic {
                side,
                frame: HapticFrame {
                    fingers,
                    t_us: header.t_us,
                    seq: header.seq,
                },
            }
        }
        TYPE_SCENE => Message::Scene(decode_scene(&mut r)?),
        TYPE_GLOVE => {
            let side = r.side()?;
            let mut command = GloveCommand::zero();
            for t in command.tau.iter_mut() {
                *t = r.f64()?;
            }
            Message::Glove { side, command }
        }
        TYPE_WRIST => Message::Wrist {
            side: r.side()?,
            sample: WristSample {
                p_now: r.vec3()?,
                r_gn: r.rot()?,
                t_us: header.t_us,
            },
        },
        TYPE_TARGET => Message::Target {
            side: r.side()?,
            target: EndEffectorTarget {
                k_now: r.vec3()?,
                q_gn: r.rot()?,
            },
        },
        TYPE_HAND_STATE => Message::HandState {
            side: r.side()?,
            hand: r.hand()?,
        },
        other => return Err(ProtocolError::UnknownType(other)),
    };
    r.finish()?;
    Ok((
        Packet {
            seq: header.seq,
            t_us: header.t_us,
            message,
        },
        total,
    ))
}

/// Incremental frame extraction from a byte stream with resynchronization:
/// after a corrupt frame the reader skips to the next magic sequence.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
    skipped: u64,
    errors: u64,
}

impl FrameReader {
    pub fn new() -> Self {
        FrameReader::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, a decode error for a corrupt one (already
    /// skipped past), or `None` when more bytes are needed.
    pub fn next_packet(&mut self) -> Option<Result<Packet, ProtocolError>> {
        if self.buf.is_empty() {
            return None;
        }
        match decode(&self.buf) {
            Ok((packet, used)) => {
                self.buf.drain(..used);
                Some(Ok(packet))
            }
            Err(ProtocolError::TruncatedFrame { .. }) => None,
            Err(e) => {
                self.errors += 1;
                self.resync();
                Some(Err(e))
            }
        }
    }

    fn resync(&mut self) {
        let next = self.buf[1..]
            .windows(2)
            .position(|w| w == MAGIC)
            .map(|p| p + 1)
            .unwrap_or_else(|| {
                // Keep a trailing first magic byte that may pair with the next push.
                if self.buf.last() == Some(&MAGIC[0]) && self.buf.len() > 1 {
                    self.buf.len() - 1
                } else {
                    self.buf.len()
                }
            });
        self.skipped += next as u64;
        self.buf.drain(..next);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn skipped_bytes(&self) -> u64 {
        self.skipped
    }

    pub fn error_count(&self) -> u64 {
        self.errors
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::geometry::testing::{random_rotation, random_vec};
    use rand::Rng;

    fn hand<R: Rng>(rng: &mut R) -> HandPose {
        HandPose {
            bend: std::array::from_fn(|_| rng.random_range(0.0..=1.0)),
            thumb_split: rng.random_range(0.0..=1.0),
        }
    }

    fn side<R: Rng>(rng: &mut R) -> Side {
        if rng.random_bool(0.5) {
            Side::Left
        } else {
            Side::Right
        }
    }

    fn scene<R: Rng>(rng: &mut R) -> SceneSnapshot {
        let sides = (0..rng.random_range(0..=2))
            .map(|_| SideSnapshot {
                side: side(rng),
                hand: hand(rng),
                target: EndEffectorTarget {
                    k_now: random_vec(rng, 1.0),
                    q_gn: random_rotation(rng),
                },
                achieved_position: random_vec(rng, 1.0),
                achieved_orientation: random_rotation(rng),
                ik_ok: rng.random_bool(0.5),
                contact_mask: rng.random_range(0..32),
            })
            .collect();
        let objects = (0..rng.random_range(0..4))
            .map(|i| ObjectSnapshot {
                name: format!("obj-{i}-{}", rng.random_range(0..1000)),
                kind: [ObjectKindCode::Rigid, ObjectKindCode::Deformable, ObjectKindCode::Pen]
                    [rng.random_range(0..3)],
                indentation_mm: rng.random_range(0.0..10.0),
                position: random_vec(rng, 1.0),
                held: rng.random_bool(0.5),
            })
            .collect();
        SceneSnapshot {
            sides,
            objects,
            pen: rng.random_bool(0.5).then(|| PenSnapshot {
                theta: rng.random_range(-3.0..3.0),
                omega: rng.random_range(-10.0..10.0),
                dropped: rng.random_bool(0.1),
            }),
            box_present: rng.random_bool(0.3),
            deformation_total_mm: rng.random_range(0.0..20.0),
            deformation_entries: rng.random_range(0..100),
        }
    }

    /// A random packet of any type, with consistent headers.
    pub fn random_packet<R: Rng>(rng: &mut R) -> Packet {
        let seq = rng.random();
        let t_us = rng.random_range(0..u64::MAX / 2);
        let message = match rng.random_range(0..8) {
            0 => Message::Hello {
                role: [Role::Robot, Role::Operator, Role::Bridge][rng.random_range(0..3)],
                rates: RateSpec {
                    control_hz: rng.random_range(1.0..1000.0),
                    haptic_hz: rng.random_range(1.0..1000.0),
                    scene_hz: rng.random_range(1.0..1000.0),
                },
            },
            1 => Message::Control {
                side: side(rng),
                pose: RelativePose {
                    p_l: random_vec(rng, 1.0),
                    r_ln: random_rotation(rng),
                },
                hand: hand(rng),
            },
            2 => {
                let mut frame = HapticFrame {
                    seq,
                    t_us,
                    ..Default::default()
                };
                for t in frame.fingers.iter_mut() {
                    for c in t.0.iter_mut().flatten() {
                        *c = rng.random();
                    }
                }
                return Packet::haptic(side(rng), frame);
            }
            3 => Message::Scene(scene(rng)),
            4 => Message::Glove {
                side: side(rng),
                command: GloveCommand {
                    tau: std::array::from_fn(|_| rng.random_range(0.0..0.5)),
                },
            },
            5 => Message::Wrist {
                side: side(rng),
                sample: WristSample {
                    p_now: random_vec(rng, 2.0),
                    r_gn: random_rotation(rng),
                    t_us,
                },
            },
            6 => Message::Target {
                side: side(rng),
                target: EndEffectorTarget {
                    k_now: random_vec(rng, 1.0),
                    q_gn: random_rotation(rng),
                },
            },
            _ => Message::HandState {
                side: side(rng),
                hand: hand(rng),
            },
        };
        Packet::new(seq, t_us, message)
    }
}

#[cfg(test)]
mod tests {
    use super::testing::random_packet;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_control() -> Packet {
        Packet::new(
            7,
            14_000,
            Message::Control {
                side: Side::Right,
                pose: RelativePose {
                    p_l: Vec3::new(0.1, -0.2, 0.05),
                    r_ln: Rot3::from_axis_angle(&Vec3::z(), 0.3),
                },
                hand: HandPose::uniform(0.4, 0.2),
            },
        )
    }

    #[test]
    fn hello_frame_length() {
        let p = Packet::new(
            0,
            0,
            Message::Hello {
                role: Role::Operator,
                rates: RateSpec::default(),
            },
        );
        let bytes = encode(&p).unwrap();
        // 18 header + 1 role + 3·8 rates
        assert_eq!(bytes.len(), 18 + 25);
        assert_eq!(&bytes[0..4], &[0x54, 0x4C, 1, 0x00]);
        assert_eq!(&bytes[16..18], &25u16.to_le_bytes());
    }

    #[test]
    fn zero_haptic_frame_has_160_zero_taxel_bytes() {
        let p = Packet::haptic(Side::Left, HapticFrame::default());
        let bytes = encode(&p).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 1 + 160);
        assert!(bytes[HEADER_LEN + 1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn taxels_are_row_major_little_endian() {
        let mut frame = HapticFrame {
            seq: 3,
            t_us: 99,
            ..Default::default()
        };
        frame.fingers[1].0[0][1] = 0x0102;
        let bytes = encode(&Packet::haptic(Side::Right, frame)).unwrap();
        // finger 1 starts after 16 taxels of finger 0; [0][1] is the second taxel
        let off = HEADER_LEN + 1 + 32 + 2;
        assert_eq!(&bytes[off..off + 2], &[0x02, 0x01]);
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &99u64.to_le_bytes());
    }

    #[test]
    fn round_trip_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10_000 {
            let p = random_packet(&mut rng);
            let bytes = encode(&p).unwrap();
            let (back, used) = decode(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back, p);
            assert_eq!(encode(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupted_magic_and_version() {
        let mut bytes = encode(&sample_control()).unwrap();
        bytes[0] ^= 0xFF;
        assert_eq!(decode(&bytes), Err(ProtocolError::BadMagic));
        let mut bytes = encode(&sample_control()).unwrap();
        bytes[2] = 9;
        assert_eq!(decode(&bytes), Err(ProtocolError::BadVersion(9)));
        let mut bytes = encode(&sample_control()).unwrap();
        bytes[3] = 0x7F;
        assert_eq!(decode(&bytes), Err(ProtocolError::UnknownType(0x7F)));
        let mut bytes = encode(&sample_control()).unwrap();
        bytes[16] = bytes[16].wrapping_add(1);
        assert!(matches!(decode(&bytes), Err(ProtocolError::LengthMismatch { .. })));
    }

    #[test]
    fn truncation_at_every_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let bytes = encode(&random_packet(&mut rng)).unwrap();
            for cut in 0..bytes.len() {
                match decode(&bytes[..cut]) {
                    Err(ProtocolError::TruncatedFrame { .. }) => {}
                    other => panic!("cut at {cut}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn corruption_never_panics_or_overreads() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..2000 {
            let mut bytes = encode(&random_packet(&mut rng)).unwrap();
            for _ in 0..rng.random_range(1..4) {
                let i = rng.random_range(0..bytes.len());
                bytes[i] ^= rng.random_range(1..=255u8);
            }
            if let Ok((_, used)) = decode(&bytes) {
                assert!(used <= bytes.len());
            }
        }
    }

    #[test]
    fn haptic_header_must_agree_with_frame() {
        let frame = HapticFrame {
            seq: 4,
            ..Default::default()
        };
        let p = Packet::new(5, 0, Message::Haptic { side: Side::Left, frame });
        assert_eq!(encode(&p), Err(ProtocolError::InconsistentHeader));
    }

    #[test]
    fn oversized_scene_rejected() {
        let objects = (0..255)
            .map(|i| ObjectSnapshot {
                name: format!("{i:0>255}"),
                kind: ObjectKindCode::Rigid,
                indentation_mm: 0.0,
                position: Vec3::zeros(),
                held: false,
            })
            .collect();
        let p = Packet::new(
            0,
            0,
            Message::Scene(SceneSnapshot {
                objects,
                ..Default::default()
            }),
        );
        assert!(matches!(encode(&p), Err(ProtocolError::PayloadTooLarge(_))));
    }

    #[test]
    fn reader_resyncs_after_garbage() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let packets: Vec<Packet> = (0..200).map(|_| random_packet(&mut rng)).collect();
        let mut stream = Vec::new();
        for p in &packets {
            stream.extend(encode(p).unwrap());
            let garbage: Vec<u8> = (0..rng.random_range(0..40))
                .map(|_| rng.random_range(0u8..0x54))
                .collect();
            stream.extend(garbage);
        }
        let mut reader = FrameReader::new();
        let mut got = Vec::new();
        for chunk in stream.chunks(37) {
            reader.push(chunk);
            while let Some(r) = reader.next_packet() {
                if let Ok(p) = r {
                    got.push(p);
                }
            }
        }
        assert_eq!(got, packets);
    }

    #[test]
    fn reader_recovers_after_corrupted_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let packets: Vec<Packet> = (0..100).map(|_| random_packet(&mut rng)).collect();
        let mut stream = Vec::new();
        let mut corrupted = Vec::new();
        for (i, p) in packets.iter().enumerate() {
            let mut bytes = encode(p).unwrap();
            if i % 10 == 3 {
                bytes[0] = 0x00;
                corrupted.push(i);
            }
            stream.extend(bytes);
        }
        let mut reader = FrameReader::new();
        reader.push(&stream);
        let mut got = Vec::new();
        while let Some(r) = reader.next_packet() {
            if let Ok(p) = r {
                got.push(p);
            }
        }
        let expected: Vec<Packet> = packets
            .iter()
            .enumerate()
            .filter(|(i, _)| !corrupted.contains(i))
            .map(|(_, p)| p.clone())
            .collect();
        assert_eq!(got, expected);
    }
}
