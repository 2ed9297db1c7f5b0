//! Console bridge: an operator session whose tracker and glove are a browser
//! console on a WebSocket. Wire messages are mirrored as JSON text, one
//! object per WebSocket text frame, discriminated by `"type"`.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use tungstenite::{Message as WsMessage, WebSocket};

use super::config::{FeedbackMode, SessionConfig};
use super::log::SessionLog;
use super::net::run_operator;
use super::operator::{OperatorCore, OperatorReport};
use super::policy::{Observation, OperatorInput, Policy};
use super::SessionError;
use crate::geometry::{Rot3, Vec3};
use crate::haptics::{FINGER_COUNT, TAXEL_COLS, TAXEL_ROWS};
use crate::protocol::{ObjectKindCode, RateSpec, SceneSnapshot};
use crate::retargeting::{HandPose, Side, WristSample};

type Rows = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandJson {
    pub bend: [f64; FINGER_COUNT],
    pub thumb_split: f64,
}

impl From<HandPose> for HandJson {
    fn from(h: HandPose) -> Self {
        HandJson {
            bend: h.bend,
            thumb_split: h.thumb_split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideJson {
    pub side: Side,
    pub hand: HandJson,
    pub target_position: [f64; 3],
    pub target_rotation: Rows,
    pub achieved_position: [f64; 3],
    pub achieved_rotation: Rows,
    pub ik_ok: bool,
    pub contact_mask: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectJson {
    pub name: String,
    pub kind: ObjectKindCode,
    pub indentation_mm: f64,
    pub position: [f64; 3],
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenJson {
    pub theta: f64,
    pub omega: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub sides: Vec<SideJson>,
    pub objects: Vec<ObjectJson>,
    pub pen: Option<PenJson>,
    pub box_present: bool,
    pub deformation_total_mm: f64,
    pub deformation_entries: u16,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&SceneSnapshot> for SceneJson {
    fn from(s: &SceneSnapshot) -> Self {
        SceneJson {
            sides: s
                .sides
                .iter()
                .map(|x| SideJson {
                    side: x.side,
                    hand: x.hand.into(),
                    target_position: arr(&x.target.k_now),
                    target_rotation: x.target.q_gn.rows(),
                    achieved_position: arr(&x.achieved_position),
                    achieved_rotation: x.achieved_orientation.rows(),
                    ik_ok: x.ik_ok,
                    contact_mask: x.contact_mask,
                })
                .collect(),
            objects: s
                .objects
                .iter()
                .map(|o| ObjectJson {
                    name: o.name.clone(),
                    kind: o.kind,
                    indentation_mm: o.indentation_mm,
                    position: arr(&o.position),
                    held: o.held,
                })
                .collect(),
            pen: s.pen.map(|p| PenJson {
                theta: p.theta,
                omega: p.omega,
                dropped: p.dropped,
            }),
            box_present: s.box_present,
            deformation_total_mm: s.deformation_total_mm,
            deformation_entries: s.deformation_entries,
        }
    }
}

/// Bridge to console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Hello {
        rates: RateSpec,
        sides: Vec<Side>,
        feedback_mode: FeedbackMode,
    },
    Scene {
        seq: u32,
        t_us: u64,
        scene: SceneJson,
    },
    /// Taxel counts, finger-major then row-major.
    Haptic {
        side: Side,
        seq: u32,
        t_us: u64,
        taxels: [[[u16; TAXEL_COLS]; TAXEL_ROWS]; FINGER_COUNT],
    },
    Glove {
        side: Side,
        seq: u32,
        tau: [f64; FINGER_COUNT],
    },
    Error {
        message: String,
    },
}

/// Console to bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    /// Tracker pose; give either `rotation` (row-major) or `rpy` (rad).
    Wrist {
        side: Side,
        position: [f64; 3],
        #[serde(default)]
        rotation: Option<Rows>,
        #[serde(default)]
        rpy: Option<[f64; 3]>,
    },
    Hand {
        side: Side,
        bend: [f64; FINGER_COUNT],
        #[serde(default)]
        thumb_split: f64,
    },
    /// Both sides when `side` is absent.
    Calibrate {
        #[serde(default)]
        side: Option<Side>,
    },
    FeedbackMode {
        mode: FeedbackMode,
    },
}

#[derive(Debug, Default)]
struct ConsoleInput {
    wrist: [Option<(Vec3, Rot3)>; 2],
    hand: [HandPose; 2],
    calibrate: [bool; 2],
    mode: Option<FeedbackMode>,
    received: u64,
}

/// Shared console input; cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct ConsoleInbox {
    input: Arc<Mutex<ConsoleInput>>,
}

fn reject(message: impl Into<String>) -> String {
    serde_json::to_string(&Outbound::Error { message: message.into() }).expect("serializable")
}

impl ConsoleInbox {
    pub fn new(initial_hand: [HandPose; 2]) -> Self {
        let inbox = ConsoleInbox::default();
        inbox.input.lock().unwrap().hand = initial_hand;
        inbox
    }

    /// Applies one text message. Returns the error reply for input that is
    /// malformed or out of range; such input changes nothing.
    pub fn handle_text(&self, text: &str) -> Result<(), String> {
        let msg: Inbound = serde_json::from_str(text).map_err(|e| reject(format!("malformed message: {e}")))?;
        self.handle(msg).map_err(reject)
    }

    pub fn handle(&self, msg: Inbound) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let mut input = self.input.lock().unwrap();
        match msg {
            Inbound::Wrist {
                side,
                position,
                rotation,
                rpy,
            } => {
                if !finite(&position) {
                    return Err("wrist position must be finite".into());
                }
                let rot = match (rotation, rpy) {
                    (Some(rows), None) => Rot3::from_rows(rows).map_err(|e| format!("wrist rotation: {e}"))?,
                    (None, Some([r, p, y])) if finite(&[r, p, y]) => Rot3::from_euler_xyz(r, p, y),
                    (None, None) => Rot3::identity(),
                    _ => return Err("give either rotation or finite rpy".into()),
                };
                let i = side.index();
                if input.wrist[i].is_none() {
                    // The first real sample becomes the reference frame.
                    input.calibrate[i] = true;
                }
                input.wrist[i] = Some((Vec3::new(position[0], position[1], position[2]), rot));
            }
            Inbound::Hand { side, bend, thumb_split } => {
                let ok = |v: &f64| (0.0..=1.0).contains(v);
                if !bend.iter().all(ok) || !ok(&thumb_split) {
                    return Err("hand values must lie in [0, 1]".into());
                }
                input.hand[side.index()] = HandPose { bend, thumb_split };
            }
            Inbound::Calibrate { side } => match side {
                Some(s) => input.calibrate[s.index()] = true,
                None => input.calibrate = [true; 2],
            },
            Inbound::FeedbackMode { mode } => input.mode = Some(mode),
        }
        input.received += 1;
        Ok(())
    }

    pub fn received(&self) -> u64 {
        self.input.lock().unwrap().received
    }
}

/// Replays the console's latest wrist and hand on every control tick. Until
/// the console sends a wrist pose, the wrist rests at the tracker origin.
#[derive(Debug, Clone)]
pub struct ConsolePolicy {
    inbox: ConsoleInbox,
    sides: Vec<Side>,
}

impl ConsolePolicy {
    pub fn new(inbox: ConsoleInbox, sides: Vec<Side>) -> Self {
        ConsolePolicy { inbox, sides }
    }
}

impl Policy for ConsolePolicy {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let input = self.inbox.input.lock().unwrap();
        self.sides
            .iter()
            .map(|&side| {
                let (p_now, r_gn) = input.wrist[side.index()].unwrap_or((Vec3::zeros(), Rot3::identity()));
                let hand = input.hand[side.index()];
                OperatorInput {
                    side,
                    wrist: WristSample { p_now, r_gn, t_us: obs.t_us },
                    glove_bend: hand.bend,
                    glove_split: hand.thumb_split,
                }
            })
            .collect()
    }
}

/// Runs on the operator loop: applies pending calibrate and mode requests,
/// and publishes state to the console at no more than the scene rate.
#[derive(Debug)]
pub struct BridgePublisher {
    inbox: ConsoleInbox,
    min_interval: f64,
    last_publish: Option<f64>,
    scenes_seen: u64,
}

impl BridgePublisher {
    pub fn new(inbox: ConsoleInbox, rates: &RateSpec) -> Self {
        BridgePublisher {
            inbox,
            min_interval: 1.0 / rates.scene_hz,
            last_publish: None,
            scenes_seen: 0,
        }
    }

    pub fn hello(op: &OperatorCore) -> Outbound {
        Outbound::Hello {
            rates: op.rates(),
            sides: op.sides().to_vec(),
            feedback_mode: op.mode(),
        }
    }

    /// Outbound messages due at session time `now`.
    pub fn poll(&mut self, op: &mut OperatorCore, now: f64) -> Result<Vec<Outbound>, SessionError> {
        let (calibrate, mode) = {
            let mut input = self.inbox.input.lock().unwrap();
            (std::mem::take(&mut input.calibrate), input.mode.take())
        };
        for side in Side::BOTH {
            if calibrate[side.index()] {
                op.recalibrate(side);
            }
        }
        let mut out = Vec::new();
        if let Some(mode) = mode {
            op.set_mode(mode)?;
            out.push(Self::hello(op));
        }
        let scenes = op.report().scene_received;
        let due = self.last_publish.is_none_or(|t| now - t >= self.min_interval - 1e-9);
        if scenes == self.scenes_seen || !due {
            return Ok(out);
        }
        self.scenes_seen = scenes;
        self.last_publish = Some(now);
        if let Some(scene) = op.scenes().latest() {
            out.push(Outbound::Scene {
                seq: scenes.saturating_sub(1) as u32,
                t_us: (now * 1e6) as u64,
                scene: scene.into(),
            });
        }
        for side in op.sides().to_vec() {
            if let Some(frame) = op.latest_frame(side) {
                out.push(Outbound::Haptic {
                    side,
                    seq: frame.seq,
                    t_us: frame.t_us,
                    taxels: frame.fingers.map(|t| t.0),
                });
                let tau = if op.mode().haptic() {
                    op.latest_glove(side).map_or([0.0; FINGER_COUNT], |g| g.tau)
                } else {
                    [0.0; FINGER_COUNT]
                };
                out.push(Outbound::Glove { side, seq: frame.seq, tau });
            }
        }
        Ok(out)
    }
}

type ClientSlot = Arc<Mutex<Option<mpsc::Sender<String>>>>;

/// WebSocket endpoint for one console at a time.
#[derive(Debug)]
pub struct BridgeServer {
    listener: TcpListener,
}

const WS_POLL: Duration = Duration::from_millis(10);

impl BridgeServer {
    pub fn bind(endpoint: &str) -> Result<Self, SessionError> {
        let listener = TcpListener::bind(endpoint).map_err(|source| SessionError::Bind {
            endpoint: endpoint.to_string(),
            source,
        })?;
        listener.set_nonblocking(true)?;
        Ok(BridgeServer { listener })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Connects to the robot as the operator and serves consoles until the
    /// session ends.
    pub fn run(self, cfg: &SessionConfig, initial_hand: [HandPose; 2], log: SessionLog) -> Result<OperatorReport, SessionError> {
        let inbox = ConsoleInbox::new(initial_hand);
        let policy = Box::new(ConsolePolicy::new(inbox.clone(), cfg.sides.clone()));
        let client: ClientSlot = Arc::default();
        let done = Arc::new(AtomicBool::new(false));
        let hello = Arc::new(Mutex::new(String::new()));
        let server = {
            let (inbox, client, done, hello) = (inbox.clone(), client.clone(), done.clone(), hello.clone());
            thread::spawn(move || serve_consoles(self.listener, inbox, client, done, hello))
        };
        let mut publisher = BridgePublisher::new(inbox, &cfg.rates);
        let mut hook = |op: &mut OperatorCore, now: f64| -> Result<(), SessionError> {
            *hello.lock().unwrap() = serde_json::to_string(&BridgePublisher::hello(op)).expect("serializable");
            let out = publisher.poll(op, now)?;
            if let Some(tx) = client.lock().unwrap().as_ref() {
                for m in out {
                    let _ = tx.send(serde_json::to_string(&m).expect("serializable"));
                }
            }
            Ok(())
        };
        let result = run_operator(cfg, initial_hand, policy, log, &mut hook, None);
        done.store(true, Ordering::SeqCst);
        let _ = server.join();
        result
    }
}

fn serve_consoles(listener: TcpListener, inbox: ConsoleInbox, client: ClientSlot, done: Arc<AtomicBool>, hello: Arc<Mutex<String>>) {
    while !done.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                info!("console connected from {peer}");
                let (tx, rx) = mpsc::channel();
                *client.lock().unwrap() = Some(tx);
                if let Err(e) = serve_one(stream, &inbox, rx, &done, &hello) {
                    warn!("console session ended: {e}");
                }
                *client.lock().unwrap() = None;
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(WS_POLL),
            Err(e) => {
                warn!("console accept failed: {e}");
                thread::sleep(WS_POLL);
            }
        }
    }
}

fn serve_one(
    stream: TcpStream,
    inbox: &ConsoleInbox,
    rx: mpsc::Receiver<String>,
    done: &AtomicBool,
    hello: &Mutex<String>,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(WS_POLL))?;
    let greeting = hello.lock().unwrap().clone();
    if !greeting.is_empty() {
        ws.send(WsMessage::text(greeting))?;
    }
    while !done.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                if let Err(reply) = inbox.handle_text(text.as_str()) {
                    ws.send(WsMessage::text(reply))?;
                }
            }
            Ok(WsMessage::Binary(_)) => ws.send(WsMessage::text(reject("binary frames are not accepted")))?,
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        while let Ok(text) = rx.try_recv() {
            ws.send(WsMessage::text(text))?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
