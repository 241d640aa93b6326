//! `ftl serve`: the simulation stepped in real time behind a WebSocket.
//!
//! One loop thread owns the world and applies client commands from a
//! queue between ticks; each client has a session thread that forwards its
//! parsed messages to the queue and writes out the state broadcasts.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use ftl_core::datalog::{FrameRecord, LogHeader, LogWriter};
use ftl_core::sim::{Arena, Identity, PedestrianScript, PedestrianState, SteeredPedestrian, VehicleState, World, CHANNELS, DEFAULT_DT, IMAGE_H, IMAGE_W};
use tungstenite::{Message, WebSocket};

use crate::drive::{mode_name, Pilot};
use crate::protocol::{parse_client, AvView, ClientMessage, DriveMode, McnView, PedView, RecordAction, ServerMessage};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// 0 picks a free port.
    pub port: u16,
    pub identity: Identity,
    pub arena_half_width: f64,
    /// Classifier and regressor checkpoints for auto mode; the expert
    /// drives when absent.
    pub checkpoints: Option<(PathBuf, PathBuf)>,
    pub tick: Duration,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            identity: Identity::A,
            arena_half_width: 5.0,
            checkpoints: None,
            tick: Duration::from_secs_f64(DEFAULT_DT),
        }
    }
}

type ClientId = u64;
type Clients = Arc<Mutex<HashMap<ClientId, Sender<String>>>>;

pub struct ServeHandle {
    port: u16,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn port(&self) -> u16 {
        self.port
    }

    /// Block until the server stops (it only stops via `shutdown`).
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Bind the port and start the loop and accept threads.
pub fn spawn(config: ServeConfig) -> Result<ServeHandle> {
    let listener = TcpListener::bind(("127.0.0.1", config.port)).with_context(|| format!("binding port {}", config.port))?;
    let port = listener.local_addr()?.port();
    listener.set_nonblocking(true)?;
    let pilot = match &config.checkpoints {
        Some((a, b)) => Pilot::from_checkpoints(a, b)?,
        None => Pilot::Expert,
    };
    let stop = Arc::new(AtomicBool::new(false));
    let clients: Clients = Arc::default();
    let (cmd_tx, cmd_rx) = mpsc::channel();

    let sim = {
        let (stop, clients) = (stop.clone(), clients.clone());
        let world = initial_world(&config);
        let tick = config.tick;
        thread::spawn(move || run_loop(world, pilot, tick, cmd_rx, clients, stop))
    };
    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, cmd_tx, clients, stop))
    };
    Ok(ServeHandle {
        port,
        stop,
        threads: vec![sim, acceptor],
    })
}

fn initial_world(config: &ServeConfig) -> World {
    let ped = PedestrianState {
        x: 1.5,
        y: 0.0,
        heading: 0.0,
        speed: 0.0,
        identity: config.identity,
    };
    let steered = SteeredPedestrian::new(ped, Arena::square(config.arena_half_width));
    World::new(VehicleState::default(), PedestrianScript::Steered(steered), DEFAULT_DT)
}

struct Recording {
    writer: LogWriter,
    path: String,
    frames: u64,
}

struct LoopState {
    mode: DriveMode,
    teleop: (f64, f64),
    recording: Option<Recording>,
}

fn reply(clients: &Clients, id: ClientId, msg: ServerMessage) {
    if let Some(tx) = clients.lock().unwrap().get(&id) {
        let _ = tx.send(msg.to_json());
    }
}

fn apply(world: &mut World, st: &mut LoopState, clients: &Clients, id: ClientId, msg: ClientMessage) {
    match msg {
        ClientMessage::PedInput { turn, speed } => match world.script_mut() {
            PedestrianScript::Steered(p) => p.set_input(turn, speed),
            _ => reply(clients, id, ServerMessage::error("this pedestrian is scripted")),
        },
        ClientMessage::Teleop { steering, throttle } => st.teleop = (steering, throttle),
        ClientMessage::Mode { value } => st.mode = value,
        ClientMessage::Record { action: RecordAction::Start, path } => {
            let path = path.unwrap_or_default();
            if st.recording.is_some() {
                return reply(clients, id, ServerMessage::error("already recording"));
            }
            let header = LogHeader::new([CHANNELS, IMAGE_H, IMAGE_W], world.state().dt, "script = serve\n");
            match LogWriter::create(&path, header) {
                Ok(writer) => {
                    st.recording = Some(Recording { writer, path: path.clone(), frames: 0 });
                    reply(clients, id, ServerMessage::Recording { active: true, path, frames: 0 });
                }
                Err(e) => reply(clients, id, ServerMessage::error(format!("cannot record to {path}: {e}"))),
            }
        }
        ClientMessage::Record { action: RecordAction::Stop, .. } => match st.recording.take() {
            Some(rec) => {
                let msg = match rec.writer.finish() {
                    Ok(frames) => ServerMessage::Recording {
                        active: false,
                        path: rec.path,
                        frames,
                    },
                    Err(e) => ServerMessage::error(format!("finishing {}: {e}", rec.path)),
                };
                reply(clients, id, msg);
            }
            None => reply(clients, id, ServerMessage::error("not recording")),
        },
    }
}

fn run_loop(mut world: World, mut pilot: Pilot, tick: Duration, cmds: Receiver<(ClientId, ClientMessage)>, clients: Clients, stop: Arc<AtomicBool>) {
    let mut st = LoopState {
        mode: DriveMode::Auto,
        teleop: (0.0, 0.0),
        recording: None,
    };
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        while let Ok((id, msg)) = cmds.try_recv() {
            apply(&mut world, &mut st, &clients, id, msg);
        }
        let needs_frame = st.recording.is_some() || (st.mode == DriveMode::Auto && matches!(pilot, Pilot::Learned(_)));
        let frame = needs_frame.then(|| world.render());
        let state = world.state().clone();
        let (mut p_present, mut mode) = (None, "teleop");
        let (steering, throttle) = match st.mode {
            DriveMode::Teleop => st.teleop,
            DriveMode::Auto => match &mut pilot {
                Pilot::Expert => {
                    mode = "expert";
                    world.expert_command().unwrap_or((0.0, 0.0))
                }
                Pilot::Learned(c) => {
                    let cmd = c.step(&frame.as_ref().expect("rendered").image, state.time());
                    p_present = cmd.p_present;
                    mode = mode_name(&c.state.mode);
                    (cmd.steering, cmd.throttle)
                }
            },
        };
        if let (Some(rec), Some(frame)) = (st.recording.as_mut(), frame.as_ref()) {
            let r = FrameRecord::new(rec.frames, state.time(), &frame.image, steering, throttle, frame.visible, state.pedestrian.map(|p| p.identity));
            if rec.writer.append(&r).is_ok() {
                rec.frames += 1;
            }
        }
        let msg = ServerMessage::State {
            tick: state.tick,
            av: AvView {
                x: state.av.x,
                y: state.av.y,
                heading: state.av.heading,
                steering,
                throttle,
                mode: mode.to_string(),
            },
            ped: state.pedestrian.map(|p| PedView {
                x: p.x,
                y: p.y,
                heading: p.heading,
                id: p.identity.to_string(),
            }),
            mcn: McnView { p_present },
        }
        .to_json();
        clients.lock().unwrap().retain(|_, tx| tx.send(msg.clone()).is_ok());
        world.step(steering, throttle);

        next += tick;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    if let Some(rec) = st.recording.take() {
        let _ = rec.writer.finish();
    }
}

fn accept_loop(listener: TcpListener, cmds: Sender<(ClientId, ClientMessage)>, clients: Clients, stop: Arc<AtomicBool>) {
    let ids = AtomicU64::new(0);
    let mut sessions = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = ids.fetch_add(1, Ordering::SeqCst);
                let (cmds, clients, stop) = (cmds.clone(), clients.clone(), stop.clone());
                sessions.push(thread::spawn(move || {
                    let _ = session(stream, id, cmds, clients.clone(), stop);
                    clients.lock().unwrap().remove(&id);
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
    for s in sessions {
        let _ = s.join();
    }
}

fn session(stream: TcpStream, id: ClientId, cmds: Sender<(ClientId, ClientMessage)>, clients: Clients, stop: Arc<AtomicBool>) -> Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake: {e}"))?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    let (tx, rx) = mpsc::channel();
    clients.lock().unwrap().insert(id, tx);
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                // Tolerate several newline-delimited messages in one frame.
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    match parse_client(line) {
                        Ok(msg) => cmds.send((id, msg))?,
                        Err(detail) => ws.send(Message::text(ServerMessage::error(detail).to_json()))?,
                    }
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(Message::Binary(_)) => ws.send(Message::text(ServerMessage::error("binary frames are not supported").to_json()))?,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        for out in rx.try_iter() {
            ws.send(Message::text(out))?;
        }
    }
    let _ = ws.close(None);
    Ok(())
}
