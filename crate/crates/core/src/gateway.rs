//! TCP service that streams fleet ticks to one supervision client and feeds its
//! actions back into the tick loop.
//!
//! Threads: an acceptor, one reader per session and a heartbeat timer. The tick
//! loop stays on the caller's thread and talks to the service only through
//! [`GatewayHandle::publish_tick`] and the per-robot action mailbox behind
//! [`GatewayHandle::supervisor`].

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::error::{Error, Result};
use crate::fleet::FleetTick;
use crate::protocol::{tick_messages, ArenaInfo, RequestPayload, WireMessage, PROTOCOL_VERSION};
use crate::supervisor::{ActionMailbox, RemoteSupervisor};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub robots: usize,
    pub arena: ArenaInfo,
    pub heartbeat: Duration,
}

struct Session {
    id: u64,
    stream: TcpStream,
    /// Set once the client's hello has been accepted.
    ready: bool,
}

struct Shared {
    config: GatewayConfig,
    mailbox: Arc<ActionMailbox>,
    session: Mutex<Option<Session>>,
    tick: AtomicUsize,
    /// Robot whose supervisor action the tick loop accepts, if any.
    accepting: Mutex<Option<usize>>,
    shutdown: AtomicBool,
    next_session: AtomicU64,
}

impl Shared {
    fn tick(&self) -> usize {
        self.tick.load(Ordering::SeqCst)
    }

    fn send_to(&self, session_id: u64, msg: &WireMessage) {
        let mut guard = self.session.lock().unwrap();
        if let Some(s) = guard.as_mut().filter(|s| s.id == session_id) {
            if s.stream.write_all(msg.encode().as_bytes()).is_err() {
                drop(guard);
                self.end_session(session_id, "client connection lost");
            }
        }
    }

    fn broadcast(&self, messages: &[WireMessage]) {
        let mut guard = self.session.lock().unwrap();
        let Some(s) = guard.as_mut().filter(|s| s.ready) else {
            return;
        };
        let mut buf = String::new();
        for m in messages {
            buf.push_str(&m.encode());
        }
        if s.stream.write_all(buf.as_bytes()).is_err() {
            let id = s.id;
            drop(guard);
            self.end_session(id, "client connection lost");
        }
    }

    fn end_session(&self, session_id: u64, reason: &str) {
        let mut guard = self.session.lock().unwrap();
        if guard.as_ref().is_some_and(|s| s.id == session_id) {
            let s = guard.take().unwrap();
            let _ = s.stream.shutdown(Shutdown::Both);
            info!("session {session_id} closed: {reason}");
            self.mailbox.close(reason);
        }
    }

    /// Sends an error, then closes the session.
    fn reject(&self, session_id: u64, message: &str) {
        self.send_to(session_id, &WireMessage::error(self.tick(), message));
        self.end_session(session_id, message);
    }
}

/// Running gateway. Dropping the handle stops the service threads.
pub struct GatewayHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    threads: Vec<JoinHandle<()>>,
}

/// Binds and starts serving. Fails if the address is unavailable.
pub fn gateway_serve(bind: impl ToSocketAddrs, config: GatewayConfig) -> Result<GatewayHandle> {
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let mailbox = ActionMailbox::new(config.robots);
    mailbox.close("no supervision client connected");
    let shared = Arc::new(Shared {
        config,
        mailbox,
        session: Mutex::new(None),
        tick: AtomicUsize::new(0),
        accepting: Mutex::new(None),
        shutdown: AtomicBool::new(false),
        next_session: AtomicU64::new(1),
    });
    let acceptor = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("gateway-accept".into())
            .spawn(move || accept_loop(listener, shared))?
    };
    let heartbeat = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("gateway-heartbeat".into())
            .spawn(move || heartbeat_loop(shared))?
    };
    info!("gateway listening on {addr}");
    Ok(GatewayHandle {
        shared,
        addr,
        threads: vec![acceptor, heartbeat],
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = start_session(stream, peer, &shared) {
                    warn!("could not start session with {peer}: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn start_session(stream: TcpStream, peer: SocketAddr, shared: &Arc<Shared>) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let tick = shared.tick();
    {
        let mut guard = shared.session.lock().unwrap();
        if guard.is_some() {
            let msg = WireMessage::error(tick, "supervisor role is already held by another client");
            let _ = writer.write_all(msg.encode().as_bytes());
            let _ = writer.shutdown(Shutdown::Both);
            return Ok(());
        }
        let hello = WireMessage::Hello {
            tick,
            protocol_version: PROTOCOL_VERSION,
            robots: Some(shared.config.robots),
            arena: Some(shared.config.arena.clone()),
        };
        writer.write_all(hello.encode().as_bytes())?;
        let id = shared.next_session.fetch_add(1, Ordering::SeqCst);
        *guard = Some(Session {
            id,
            stream: writer,
            ready: false,
        });
        info!("session {id} from {peer}");
        let shared = Arc::clone(shared);
        thread::Builder::new()
            .name(format!("gateway-session-{id}"))
            .spawn(move || read_loop(stream, id, shared))?;
    }
    Ok(())
}

fn read_loop(stream: TcpStream, id: u64, shared: Arc<Shared>) {
    let reader = BufReader::new(stream);
    let mut greeted = false;
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let msg = match WireMessage::decode(&line) {
            Ok(m) => m,
            Err(e) => {
                shared.reject(id, &e.to_string());
                return;
            }
        };
        match msg {
            WireMessage::Hello {
                protocol_version, ..
            } if !greeted => {
                if protocol_version != PROTOCOL_VERSION {
                    shared.reject(
                        id,
                        &format!("protocol version {protocol_version} is not supported (server speaks {PROTOCOL_VERSION})"),
                    );
                    return;
                }
                greeted = true;
                if let Some(s) = shared
                    .session
                    .lock()
                    .unwrap()
                    .as_mut()
                    .filter(|s| s.id == id)
                {
                    s.ready = true;
                }
                shared.mailbox.open();
            }
            _ if !greeted => {
                shared.reject(id, "expected hello as the first message");
                return;
            }
            WireMessage::HumanAction {
                robot_id, payload, ..
            } => {
                let accepting = *shared.accepting.lock().unwrap();
                if accepting != Some(robot_id) {
                    shared.send_to(
                        id,
                        &WireMessage::error(
                            shared.tick(),
                            format!("robot {robot_id} is not in supervisor mode"),
                        ),
                    );
                    continue;
                }
                if !payload.action.iter().all(|v| v.is_finite()) {
                    shared.reject(id, "human_action must be finite");
                    return;
                }
                if let Err(e) = shared
                    .mailbox
                    .post(robot_id, crate::env::Action(payload.action))
                {
                    warn!("dropping action for robot {robot_id}: {e}");
                }
            }
            WireMessage::Heartbeat { .. } => {}
            other => {
                shared.reject(id, &format!("clients may not send {}", other.kind()));
                return;
            }
        }
    }
    shared.end_session(id, "client disconnected");
}

fn heartbeat_loop(shared: Arc<Shared>) {
    let mut next = Instant::now() + shared.config.heartbeat;
    while !shared.shutdown.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= next {
            shared.broadcast(&[WireMessage::Heartbeat {
                tick: shared.tick(),
            }]);
            next += shared.config.heartbeat;
        } else {
            thread::sleep((next - now).min(Duration::from_millis(20)));
        }
    }
}

impl GatewayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn mailbox(&self) -> &Arc<ActionMailbox> {
        &self.shared.mailbox
    }

    pub fn client_connected(&self) -> bool {
        self.shared.mailbox.is_open()
    }

    /// Blocks until a client has completed the hello exchange.
    pub fn wait_for_client(&self, timeout: Option<Duration>) -> Result<()> {
        let deadline = timeout.map(|t| Instant::now() + t);
        while !self.client_connected() {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(Error::SupervisorUnavailable {
                    robot_id: 0,
                    reason: "no client connected before the deadline".into(),
                });
            }
            thread::sleep(Duration::from_millis(10));
        }
        Ok(())
    }

    /// Supervisor for the tick loop. Before blocking it announces the wait with an
    /// `intervention_request`.
    pub fn supervisor(&self) -> RemoteSupervisor {
        let shared = Arc::clone(&self.shared);
        RemoteSupervisor::new(Arc::clone(&self.shared.mailbox)).with_request_hook(Box::new(
            move |robot_id, state| {
                *shared.accepting.lock().unwrap() = Some(robot_id);
                shared.broadcast(&[WireMessage::InterventionRequest {
                    tick: shared.tick(),
                    robot_id,
                    payload: RequestPayload { state: state.0 },
                }]);
            },
        ))
    }

    /// Broadcasts a finished tick and moves the action gate to the next served robot.
    pub fn publish_tick(&self, tick: &FleetTick) {
        {
            let mut accepting = self.shared.accepting.lock().unwrap();
            if let Some(prev) = *accepting {
                if tick.serving != Some(prev) {
                    self.shared.mailbox.clear(prev);
                }
            }
            *accepting = tick.serving;
        }
        self.shared.tick.store(tick.tick + 1, Ordering::SeqCst);
        self.shared.broadcast(&tick_messages(tick));
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(s) = self.shared.session.lock().unwrap().take() {
            let _ = s.stream.shutdown(Shutdown::Both);
        }
        self.shared.mailbox.close("gateway shut down");
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
