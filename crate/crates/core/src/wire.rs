//! Line-delimited JSON protocol between the engine and an interactive client.
//!
//! Every message is one UTF-8 JSON object per line carrying `"v": "v1"` and a
//! `"type"` tag. The client streams tool poses and pedal presses; the engine
//! answers with render frames and trial bookkeeping. [`Engine`] holds the
//! session state machines and is transport-free; [`serve`] puts it behind a
//! TCP listener, one engine per connection.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::records_to_csv;
use crate::geometry::{compute_error, GuidanceError, Pose};
use crate::harness::{condition_code, generate_targets, ExperimentConfig};
use crate::record::TrialRecord;
use crate::rng::{derive_seed, rng_from_seed};
use crate::widget::{build_frame, Condition, RenderFrame, WidgetConfig};

pub const PROTOCOL_VERSION: &str = "v1";

/// Shortest task time a confirmed trial can have, in seconds.
pub const MIN_TASK_TIME: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    StartSession {
        condition: Condition,
        /// Partial widget config merged over the server's.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        widget: Option<serde_json::Map<String, Value>>,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject: Option<u32>,
        /// Client clock (ms) at which the first target is shown.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_client: Option<f64>,
    },
    PoseUpdate {
        session: String,
        seq: u64,
        tool: Pose,
        t_client: f64,
    },
    Pedal {
        session: String,
        t_client: f64,
    },
    EndSession {
        session: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    VersionMismatch,
    UnknownSession,
    NonMonotonicTime,
    InvalidConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        session: String,
        seq: u64,
        frame: RenderFrame,
        error: GuidanceError,
    },
    TrialAdvance {
        session: String,
        trial_index: u32,
        target: Pose,
    },
    SessionSummary {
        session: String,
        records: Vec<TrialRecord>,
        /// The records in dataset CSV form.
        csv: String,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        code: ErrorCode,
        detail: String,
    },
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    v: &'a str,
    #[serde(flatten)]
    msg: &'a T,
}

fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, msg }).expect("protocol messages serialize")
}

impl ClientMessage {
    pub fn to_line(&self) -> String {
        encode(self)
    }
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        encode(self)
    }

    /// Parses a server line, ignoring the version field.
    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        let mut v: Value = serde_json::from_str(line)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("v");
        }
        serde_json::from_value(v)
    }

    fn error(session: Option<&str>, code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error { session: session.map(str::to_string), code, detail: detail.into() }
    }
}

/// Outcome of one client line.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    /// The connection must be closed after sending `messages`.
    pub close: bool,
}

impl Reply {
    fn one(m: ServerMessage) -> Self {
        Self { messages: vec![m], close: false }
    }
}

struct Session {
    condition: Condition,
    widget: WidgetConfig,
    subject: u32,
    seed: u64,
    targets: Vec<Pose>,
    trial: usize,
    tool: Pose,
    trial_start: Option<f64>,
    last_t: Option<f64>,
    records: Vec<TrialRecord>,
}

impl Session {
    fn code(&self) -> u64 {
        condition_code(self.condition)
    }

    fn target(&self) -> Pose {
        self.targets[self.trial]
    }

    /// Rejects client timestamps that run backwards.
    fn accept_time(&mut self, t: f64) -> Result<(), String> {
        if !t.is_finite() {
            return Err("t_client must be finite".into());
        }
        if let Some(last) = self.last_t {
            if t < last {
                return Err(format!("t_client {t} is earlier than previous {last}"));
            }
        }
        self.last_t = Some(t);
        if self.trial_start.is_none() {
            self.trial_start = Some(t);
        }
        Ok(())
    }
}

/// Session state machines for one client connection.
pub struct Engine {
    config: ExperimentConfig,
    sessions: HashMap<String, Session>,
    next_id: u64,
}

impl Engine {
    /// Targets, start poses and the widget defaults come from `config`.
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, sessions: HashMap::new(), next_id: 1 }
    }

    /// Handles one line of client input.
    pub fn handle_line(&mut self, line: &str) -> Reply {
        let mut value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return Reply::one(ServerMessage::error(None, ErrorCode::Malformed, e.to_string())),
        };
        let Some(obj) = value.as_object_mut() else {
            return Reply::one(ServerMessage::error(None, ErrorCode::Malformed, "message must be a JSON object"));
        };
        match obj.remove("v") {
            Some(Value::String(v)) if v == PROTOCOL_VERSION => {}
            Some(other) => {
                return Reply {
                    messages: vec![ServerMessage::error(
                        None,
                        ErrorCode::VersionMismatch,
                        format!("unsupported protocol version {other}, expected \"{PROTOCOL_VERSION}\""),
                    )],
                    close: true,
                }
            }
            None => return Reply::one(ServerMessage::error(None, ErrorCode::Malformed, "missing field `v`")),
        }
        let session_hint = obj.get("session").and_then(Value::as_str).map(str::to_string);
        match serde_json::from_value::<ClientMessage>(value) {
            Ok(msg) => Reply { messages: self.handle(msg), close: false },
            Err(e) => Reply::one(ServerMessage::error(session_hint.as_deref(), ErrorCode::Malformed, e.to_string())),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::StartSession { condition, widget, seed, subject, t_client } => {
                self.start(condition, widget, seed, subject.unwrap_or(0), t_client)
            }
            ClientMessage::PoseUpdate { session, seq, tool, t_client } => {
                let Some(s) = self.sessions.get_mut(&session) else {
                    return vec![unknown(&session)];
                };
                if let Err(e) = s.accept_time(t_client) {
                    return vec![ServerMessage::error(Some(&session), ErrorCode::NonMonotonicTime, e)];
                }
                s.tool = tool;
                let target = s.target();
                vec![ServerMessage::Frame {
                    seq,
                    frame: build_frame(&tool, &target, s.condition, &s.widget),
                    error: compute_error(&tool, &target),
                    session,
                }]
            }
            ClientMessage::Pedal { session, t_client } => {
                let Some(s) = self.sessions.get_mut(&session) else {
                    return vec![unknown(&session)];
                };
                if let Err(e) = s.accept_time(t_client) {
                    return vec![ServerMessage::error(Some(&session), ErrorCode::NonMonotonicTime, e)];
                }
                let start = s.trial_start.unwrap_or(t_client);
                let target = s.target();
                let seed = derive_seed(s.seed, &[3, s.subject as u64, s.code(), s.trial as u64]);
                s.records.push(TrialRecord {
                    subject: s.subject,
                    condition: s.condition,
                    trial: s.trial as u32,
                    target,
                    error: compute_error(&s.tool, &target),
                    task_time: ((t_client - start) / 1000.0).max(MIN_TASK_TIME),
                    timed_out: false,
                    seed,
                });
                s.trial += 1;
                s.trial_start = Some(t_client);
                if s.trial < s.targets.len() {
                    vec![ServerMessage::TrialAdvance { trial_index: s.trial as u32, target: s.target(), session }]
                } else {
                    vec![self.finish(&session)]
                }
            }
            ClientMessage::EndSession { session } => {
                if self.sessions.contains_key(&session) {
                    vec![self.finish(&session)]
                } else {
                    vec![unknown(&session)]
                }
            }
        }
    }

    fn start(
        &mut self,
        condition: Condition,
        overrides: Option<serde_json::Map<String, Value>>,
        seed: u64,
        subject: u32,
        t_client: Option<f64>,
    ) -> Vec<ServerMessage> {
        let widget = match merge_widget(&self.config.widget, overrides) {
            Ok(w) => w,
            Err(e) => return vec![ServerMessage::error(None, ErrorCode::InvalidConfig, e)],
        };
        if let Some(t) = t_client.filter(|t| !t.is_finite()) {
            return vec![ServerMessage::error(None, ErrorCode::Malformed, format!("t_client {t} is not finite"))];
        }
        let code = condition_code(condition);
        let s = subject as u64;
        let mut target_rng = rng_from_seed(derive_seed(seed, &[1, s, code]));
        let targets =
            generate_targets(&self.config.target_region, self.config.trials_per_condition as usize, &mut target_rng);
        let mut start_rng = rng_from_seed(derive_seed(seed, &[2, s, code]));
        let tool = self.config.start.sample(&targets[0], &mut start_rng);
        let id = format!("s{}", self.next_id);
        self.next_id += 1;
        let first = targets[0];
        self.sessions.insert(
            id.clone(),
            Session {
                condition,
                widget,
                subject,
                seed,
                targets,
                trial: 0,
                tool,
                trial_start: t_client,
                last_t: t_client,
                records: Vec::new(),
            },
        );
        vec![ServerMessage::TrialAdvance { session: id, trial_index: 0, target: first }]
    }

    fn finish(&mut self, id: &str) -> ServerMessage {
        let s = self.sessions.remove(id).expect("caller checked the session exists");
        ServerMessage::SessionSummary { session: id.to_string(), csv: records_to_csv(&s.records), records: s.records }
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }
}

fn unknown(session: &str) -> ServerMessage {
    ServerMessage::error(Some(session), ErrorCode::UnknownSession, format!("no open session `{session}`"))
}

fn merge_widget(
    base: &WidgetConfig,
    overrides: Option<serde_json::Map<String, Value>>,
) -> Result<WidgetConfig, String> {
    let Some(overrides) = overrides else { return Ok(base.clone()) };
    let mut merged = serde_json::to_value(base).map_err(|e| e.to_string())?;
    let obj = merged.as_object_mut().expect("widget config is an object");
    for (k, v) in overrides {
        obj.insert(k, v);
    }
    let cfg: WidgetConfig = serde_json::from_value(merged).map_err(|e| format!("widget: {e}"))?;
    cfg.validate().map_err(|e| e.nested("widget").to_string())?;
    Ok(cfg)
}

/// Drops every pose update that is immediately followed by a newer pose
/// update for the same session. Other messages keep their order.
pub fn conflate(batch: Vec<String>) -> Vec<String> {
    let key = |line: &str| -> Option<String> {
        let v: Value = serde_json::from_str(line).ok()?;
        (v.get("type")?.as_str()? == "pose_update").then(|| v.get("session")?.as_str().map(str::to_string))?
    };
    let keys: Vec<Option<String>> = batch.iter().map(|l| key(l)).collect();
    batch
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !matches!((&keys[*i], keys.get(i + 1)), (Some(a), Some(Some(b))) if a == b))
        .map(|(_, l)| l)
        .collect()
}

/// Runs one connection to completion. Lines that arrive while earlier ones
/// are being processed are conflated before handling.
pub fn handle_connection(stream: TcpStream, config: ExperimentConfig) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut engine = Engine::new(config);
    let mut out = std::io::BufWriter::new(stream);
    while let Ok(first) = rx.recv() {
        let mut batch = vec![first];
        batch.extend(rx.try_iter());
        for line in conflate(batch) {
            let reply = engine.handle_line(&line);
            for m in &reply.messages {
                out.write_all(m.to_line().as_bytes())?;
                out.write_all(b"\n")?;
            }
            if reply.close {
                out.flush()?;
                out.get_ref().shutdown(std::net::Shutdown::Both)?;
                return Ok(());
            }
        }
        out.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, config: ExperimentConfig) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let cfg = config.clone();
        thread::spawn(move || {
            let _ = handle_connection(stream, cfg);
        });
    }
    Ok(())
}
