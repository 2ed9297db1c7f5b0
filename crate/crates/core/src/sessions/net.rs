//! TCP drivers. One duplex connection per robot/operator pair; the operator
//! connects. With the simulated clock both ends walk the same tick schedule
//! in lockstep, blocking for the frames the schedule says must come next,
//! which reproduces the in-process loopback exactly. With the wall clock a
//! reader thread fills latest-wins mailboxes, a writer thread drains an
//! outbound queue, and the core loop is paced by real time.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::config::{ClockMode, SessionConfig};
use super::log::SessionLog;
use super::operator::{OperatorCore, OperatorReport};
use super::policy::Policy;
use super::robot::{RobotCore, RobotReport};
use super::SessionError;
use crate::protocol::{encode, FrameReader, LatestWins, Message, MultiRateSchedule, Packet, RateSpec, Role, Stream, TickEvent};
use crate::retargeting::Side;
use crate::simworld::SceneConfig;

const POLL: Duration = Duration::from_millis(5);

fn lost(e: std::io::Error) -> SessionError {
    match e.kind() {
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe
        | ErrorKind::WouldBlock
        | ErrorKind::TimedOut => SessionError::PeerLost,
        _ => SessionError::Io(e),
    }
}

/// Blocking framed packet stream.
struct Connection {
    stream: TcpStream,
    reader: FrameReader,
    buf: Vec<u8>,
}

impl Connection {
    fn new(stream: TcpStream, silence: Duration) -> Result<Self, SessionError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(silence))?;
        Ok(Connection {
            stream,
            reader: FrameReader::new(),
            buf: vec![0; 64 * 1024],
        })
    }

    fn send(&mut self, p: &Packet) -> Result<(), SessionError> {
        self.stream.write_all(&encode(p)?).map_err(lost)
    }

    fn recv(&mut self) -> Result<Packet, SessionError> {
        loop {
            match self.reader.next_packet() {
                Some(Ok(p)) => return Ok(p),
                Some(Err(e)) => {
                    warn!("skipping corrupt frame: {e}");
                    continue;
                }
                None => {}
            }
            let n = self.stream.read(&mut self.buf).map_err(lost)?;
            if n == 0 {
                return Err(SessionError::PeerLost);
            }
            self.reader.push(&self.buf[..n]);
        }
    }

    fn expect_hello(&mut self, role: Role) -> Result<(Packet, RateSpec), SessionError> {
        let p = self.recv()?;
        match p.message {
            Message::Hello { role: r, rates } if r == role => Ok((p, rates)),
            Message::Hello { role: r, .. } => Err(SessionError::Handshake(format!("expected {role:?}, got {r:?}"))),
            other => Err(SessionError::Handshake(format!("expected hello, got type {:#04x}", other.type_code()))),
        }
    }
}

fn silence(cfg: &SessionConfig) -> Duration {
    Duration::from_secs_f64(cfg.connect_timeout_s.max(1.0))
}

fn sleep_until(start: Instant, t_us: u64) {
    let due = start + Duration::from_micros(t_us);
    let now = Instant::now();
    if due > now {
        thread::sleep(due - now);
    }
}

/// A bound robot endpoint waiting for its operator.
#[derive(Debug)]
pub struct RobotServer {
    listener: TcpListener,
}

impl RobotServer {
    pub fn bind(endpoint: &str) -> Result<Self, SessionError> {
        let listener = TcpListener::bind(endpoint).map_err(|source| SessionError::Bind {
            endpoint: endpoint.to_string(),
            source,
        })?;
        Ok(RobotServer { listener })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    fn accept(&self, timeout: Duration) -> Result<Option<TcpStream>, SessionError> {
        self.listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        loop {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    info!("operator connected from {peer}");
                    stream.set_nonblocking(false)?;
                    return Ok(Some(stream));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Ok(None);
                    }
                    thread::sleep(POLL);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Serves one operator session. Without a client within the connect
    /// timeout the report is idle: no ticks, no frames. A peer that goes
    /// away mid-session ends it early with `peer_lost` set.
    pub fn serve(self, cfg: &SessionConfig, scene: &SceneConfig, log: SessionLog) -> Result<RobotReport, SessionError> {
        let mut robot = RobotCore::new(cfg, scene, log)?;
        let Some(stream) = self.accept(Duration::from_secs_f64(cfg.connect_timeout_s))? else {
            info!("no operator connected");
            let (_, _, report) = robot.finish()?;
            return Ok(report);
        };
        let mut conn = Connection::new(stream, silence(cfg))?;
        conn.send(&robot.hello())?;
        let (hello, _) = conn.expect_hello(Role::Operator)?;
        robot.on_packet(0, &hello)?;
        let schedule = MultiRateSchedule::new(&cfg.rates, cfg.duration_s);
        let result = match cfg.clock {
            ClockMode::Simulated => robot_lockstep(&mut robot, &mut conn, schedule, cfg.sides.len()),
            ClockMode::Wall => robot_wall(&mut robot, conn, schedule),
        };
        match result {
            Ok(()) => {}
            Err(SessionError::PeerLost) => {
                warn!("operator lost");
                robot.mark_peer_lost();
            }
            Err(e) => return Err(e),
        }
        let (_, _, report) = robot.finish()?;
        Ok(report)
    }
}

fn robot_lockstep(robot: &mut RobotCore, conn: &mut Connection, schedule: MultiRateSchedule, sides: usize) -> Result<(), SessionError> {
    for ev in schedule {
        if ev.stream == Stream::Control {
            let mut got = 0;
            while got < sides {
                let p = conn.recv()?;
                if matches!(p.message, Message::Control { .. }) && p.seq as u64 == ev.index {
                    got += 1;
                }
                robot.on_packet(ev.index, &p)?;
            }
        }
        for p in robot.on_tick(&ev)? {
            conn.send(&p)?;
        }
    }
    Ok(())
}

/// How long a finished side waits for its peer to finish too.
const LINGER: Duration = Duration::from_secs(1);

fn wait_flag(flag: &AtomicBool, timeout: Duration) {
    let deadline = Instant::now() + timeout;
    while !flag.load(Ordering::SeqCst) && Instant::now() < deadline {
        thread::sleep(POLL);
    }
}

/// Spawns the writer thread; `lost_flag` is raised when a write fails.
fn spawn_writer(mut stream: TcpStream, lost_flag: Arc<AtomicBool>) -> (mpsc::Sender<Vec<u8>>, thread::JoinHandle<()>) {
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let handle = thread::spawn(move || {
        for frame in rx {
            if stream.write_all(&frame).is_err() {
                lost_flag.store(true, Ordering::SeqCst);
                break;
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Write);
    });
    (tx, handle)
}

/// Reads frames until EOF and hands each packet to `route`.
fn spawn_reader(mut conn: Connection, lost_flag: Arc<AtomicBool>, route: impl Fn(Packet) + Send + 'static) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let _ = conn.stream.set_read_timeout(None);
        loop {
            match conn.recv() {
                Ok(p) => route(p),
                Err(e) => {
                    debug!("reader stopped: {e}");
                    lost_flag.store(true, Ordering::SeqCst);
                    break;
                }
            }
        }
    })
}

fn robot_wall(robot: &mut RobotCore, conn: Connection, schedule: MultiRateSchedule) -> Result<(), SessionError> {
    let lost_flag = Arc::new(AtomicBool::new(false));
    let (writer, writer_thread) = spawn_writer(conn.stream.try_clone()?, lost_flag.clone());
    let boxes: Arc<[LatestWins<Packet>; 2]> = Arc::new([LatestWins::new(), LatestWins::new()]);
    let reader_boxes = boxes.clone();
    let reader = spawn_reader(conn, lost_flag.clone(), move |p| {
        if let Message::Control { side, .. } = p.message {
            reader_boxes[side.index()].put(p);
        }
    });
    let start = Instant::now();
    let mut result = Ok(());
    for ev in schedule {
        sleep_until(start, ev.t_us);
        if lost_flag.load(Ordering::SeqCst) {
            result = Err(SessionError::PeerLost);
            break;
        }
        if ev.stream == Stream::Control {
            for side in Side::BOTH {
                if let Some(p) = boxes[side.index()].take() {
                    robot.on_packet(ev.index, &p)?;
                }
            }
        }
        for p in robot.on_tick(&ev)? {
            let _ = writer.send(encode(&p)?);
        }
    }
    robot.note_dropped(boxes.iter().map(|b| b.dropped()).sum());
    // The operator hangs up first; the robot closes after it.
    if result.is_ok() {
        wait_flag(&lost_flag, LINGER);
    }
    drop(writer);
    let _ = writer_thread.join();
    drop(reader);
    result
}

/// Called once per control tick, before the policy runs, with the session
/// time in seconds. The bridge uses it to feed console input in and state out.
pub type OperatorHook<'a> = dyn FnMut(&mut OperatorCore, f64) -> Result<(), SessionError> + 'a;

fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream, SessionError> {
    let deadline = Instant::now() + timeout;
    loop {
        let attempt = endpoint.to_socket_addrs().and_then(|mut addrs| {
            let addr = addrs
                .next()
                .ok_or_else(|| std::io::Error::new(ErrorKind::AddrNotAvailable, "no address"))?;
            TcpStream::connect_timeout(&addr, Duration::from_millis(500))
        });
        match attempt {
            Ok(s) => return Ok(s),
            Err(source) if Instant::now() >= deadline => {
                return Err(SessionError::Connect {
                    endpoint: endpoint.to_string(),
                    source,
                })
            }
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

/// Connects to the robot and runs the operator session to the end of the
/// schedule.
pub fn run_operator(
    cfg: &SessionConfig,
    initial_hand: [crate::retargeting::HandPose; 2],
    policy: Box<dyn Policy>,
    log: SessionLog,
    hook: &mut OperatorHook<'_>,
    stop: Option<&AtomicBool>,
) -> Result<OperatorReport, SessionError> {
    let stream = connect(&cfg.robot_endpoint, Duration::from_secs_f64(cfg.connect_timeout_s))?;
    let mut conn = Connection::new(stream, silence(cfg))?;
    let mut operator = OperatorCore::new(cfg, initial_hand, policy, log);
    conn.send(&operator.hello())?;
    let (hello, rates) = conn.expect_hello(Role::Robot)?;
    operator.on_packet(0, 0.0, &hello)?;
    if rates != cfg.rates {
        info!("following the robot's rates {rates:?}");
    }
    operator.adopt_rates(rates);
    let schedule = MultiRateSchedule::new(&rates, cfg.duration_s);
    let result = match cfg.clock {
        ClockMode::Simulated => operator_lockstep(&mut operator, &mut conn, schedule, hook, stop),
        ClockMode::Wall => operator_wall(&mut operator, conn, schedule, hook, stop),
    };
    match result {
        Ok(()) => {}
        Err(SessionError::PeerLost) => {
            warn!("robot lost");
            operator.mark_peer_lost();
        }
        Err(e) => return Err(e),
    }
    let (_, report, _) = operator.finish()?;
    Ok(report)
}

fn operator_lockstep(
    operator: &mut OperatorCore,
    conn: &mut Connection,
    schedule: MultiRateSchedule,
    hook: &mut OperatorHook<'_>,
    stop: Option<&AtomicBool>,
) -> Result<(), SessionError> {
    let sides = operator.sides().len();
    for ev in schedule {
        if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            break;
        }
        let now = ev.t_us as f64 * 1e-6;
        match ev.stream {
            Stream::Control => {
                hook(operator, now)?;
                for p in operator.on_tick(&ev)? {
                    conn.send(&p)?;
                }
            }
            Stream::Haptic | Stream::Scene => {
                let want = if ev.stream == Stream::Haptic { sides } else { 1 };
                let mut got = 0;
                while got < want {
                    let p = conn.recv()?;
                    if stream_of(&p) == Some(ev.stream) && p.seq as u64 == ev.index {
                        got += 1;
                    }
                    operator.on_packet(ev.index, now, &p)?;
                }
            }
        }
        operator.drain_glove();
    }
    Ok(())
}

fn stream_of(p: &Packet) -> Option<Stream> {
    match p.message {
        Message::Haptic { .. } => Some(Stream::Haptic),
        Message::Scene(_) => Some(Stream::Scene),
        Message::Control { .. } => Some(Stream::Control),
        _ => None,
    }
}

fn operator_wall(
    operator: &mut OperatorCore,
    conn: Connection,
    schedule: MultiRateSchedule,
    hook: &mut OperatorHook<'_>,
    stop: Option<&AtomicBool>,
) -> Result<(), SessionError> {
    let lost_flag = Arc::new(AtomicBool::new(false));
    let (writer, writer_thread) = spawn_writer(conn.stream.try_clone()?, lost_flag.clone());
    let haptic: Arc<[LatestWins<Packet>; 2]> = Arc::new([LatestWins::new(), LatestWins::new()]);
    let (scene_tx, scene_rx) = mpsc::channel::<Packet>();
    let reader_haptic = haptic.clone();
    let reader = spawn_reader(conn, lost_flag.clone(), move |p| match p.message {
        Message::Haptic { side, .. } => {
            reader_haptic[side.index()].put(p);
        }
        Message::Scene(_) => {
            let _ = scene_tx.send(p);
        }
        _ => {}
    });
    let start = Instant::now();
    let mut result = Ok(());
    for ev in schedule.filter(|e: &TickEvent| e.stream == Stream::Control) {
        sleep_until(start, ev.t_us);
        if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            break;
        }
        if lost_flag.load(Ordering::SeqCst) {
            result = Err(SessionError::PeerLost);
            break;
        }
        let now = start.elapsed().as_secs_f64();
        while let Ok(p) = scene_rx.try_recv() {
            operator.on_packet(ev.index, now, &p)?;
        }
        for side in Side::BOTH {
            if let Some(p) = haptic[side.index()].take() {
                operator.on_packet(ev.index, now, &p)?;
            }
        }
        hook(operator, now)?;
        for p in operator.on_tick(&ev)? {
            let _ = writer.send(encode(&p)?);
        }
        operator.drain_glove();
    }
    drop(writer);
    let _ = writer_thread.join();
    wait_flag(&lost_flag, LINGER);
    drop(reader);
    result
}
