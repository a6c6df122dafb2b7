//! Discrete-event network with per-channel FIFO delivery and a JSON-lines
//! transcript.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilinear::{sha256, DetRng, Digest};

use super::config::NetworkConfig;
use super::message::{peek_kind, Message, Note, KINDS};

/// A message-driven state machine.
pub trait Actor {
    fn id(&self) -> &str;

    fn start(&mut self, _out: &mut Outbox) {}

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox);
}

/// What one actor step produced.
#[derive(Debug, Default)]
pub struct Outbox {
    now: u64,
    pub sent: Vec<(String, Message)>,
    pub notes: Vec<Note>,
}

impl Outbox {
    pub fn new(now: u64) -> Self {
        Self {
            now,
            ..Self::default()
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn send(&mut self, to: impl Into<String>, msg: Message) {
        self.sent.push((to.into(), msg));
    }

    pub fn note(&mut self, note: Note) {
        self.notes.push(note);
    }
}

/// Decodes `bytes` and hands the message to `actor`. Undecodable input is
/// dropped with a protocol-error note.
pub fn actor_step(actor: &mut dyn Actor, now: u64, from: &str, bytes: &[u8]) -> Outbox {
    let mut out = Outbox::new(now);
    match Message::from_wire(bytes) {
        Ok(Message::Note(_)) => out.note(Note::ProtocolError {
            detail: format!("note received from {from}"),
        }),
        Ok(msg) => actor.handle(from, msg, &mut out),
        Err(e) => out.note(Note::ProtocolError {
            detail: format!("from {from}: {e}"),
        }),
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub seq: u64,
    pub time: u64,
    pub from: String,
    pub to: String,
    pub kind: String,
    #[serde(rename = "payload-hash")]
    pub payload_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dropped: bool,
}

impl TranscriptEvent {
    /// The decoded payload, when it was recorded.
    pub fn message(&self) -> Option<Result<Message, String>> {
        let hex = self.payload.as_ref()?;
        Some(
            hex::decode(hex)
                .map_err(|e| e.to_string())
                .and_then(|b| Message::from_wire(&b).map_err(|e| e.to_string())),
        )
    }
}

const EVENT_FIELDS: &[&str] = &["seq", "time", "from", "to", "kind", "payload-hash", "payload", "dropped"];

#[derive(Debug, Error)]
#[error("line {line}: {reason}")]
pub struct TranscriptError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    fn record(&mut self, time: u64, from: &str, to: &str, bytes: &[u8], dropped: bool) {
        let (kind, secret) = peek_kind(bytes).expect("locally encoded message");
        self.events.push(TranscriptEvent {
            seq: self.events.len() as u64,
            time,
            from: from.to_owned(),
            to: to.to_owned(),
            kind: kind.to_owned(),
            payload_hash: hex::encode(sha256(&[bytes])),
            payload: (!secret).then(|| hex::encode(bytes)),
            dropped,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("plain struct"));
            s.push('\n');
        }
        s
    }

    /// Blank lines are skipped; anything else must be one event.
    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line).map_err(|e| TranscriptError {
                line: i + 1,
                reason: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Transcript { events })
    }

    pub fn digest(&self) -> Digest {
        Digest(sha256(&[self.to_jsonl().as_bytes()]))
    }
}

/// A transcript line that could carry something outside the message
/// schemas, such as a retrieval bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leak {
    pub line: usize,
    pub reason: String,
}

/// Checks every line of a JSONL transcript against the event and message
/// schemas. Lines with extra fields, unknown kinds, payloads that do not
/// decode canonically under their kind, or recorded secret payloads are
/// reported.
pub fn scan_b_leak(text: &str) -> Vec<Leak> {
    let mut leaks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut flag = |reason: String| leaks.push(Leak { line: i + 1, reason });
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                flag(format!("not JSON: {e}"));
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            flag("not an object".into());
            continue;
        };
        for key in obj.keys() {
            if !EVENT_FIELDS.contains(&key.as_str()) {
                flag(format!("unexpected field {key:?}"));
            }
        }
        let e: TranscriptEvent = match serde_json::from_value(value) {
            Ok(e) => e,
            Err(e) => {
                flag(format!("bad event: {e}"));
                continue;
            }
        };
        let Some(&(_, secret)) = KINDS.iter().find(|(k, _)| *k == e.kind) else {
            flag(format!("unknown kind {:?}", e.kind));
            continue;
        };
        match (&e.payload, secret) {
            (Some(_), true) => flag(format!("secret {} payload recorded", e.kind)),
            (None, false) => flag(format!("{} payload missing", e.kind)),
            (None, true) => {}
            (Some(hex), false) => match hex::decode(hex) {
                Err(err) => flag(format!("payload is not hex: {err}")),
                Ok(bytes) => match Message::from_wire(&bytes) {
                    Err(err) => flag(format!("payload does not decode: {err}")),
                    Ok(m) if m.kind() != e.kind => {
                        flag(format!("payload is {} but kind says {}", m.kind(), e.kind))
                    }
                    Ok(m) if m.to_wire() != bytes => flag("payload is not canonical".into()),
                    Ok(_) if hex::encode(sha256(&[&bytes])) != e.payload_hash => {
                        flag("payload hash mismatch".into())
                    }
                    Ok(_) => {}
                },
            },
        }
    }
    leaks
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("message addressed to unknown actor {0}")]
    UnknownActor(String),
    #[error("no quiescence after {0} deliveries")]
    Runaway(u64),
}

/// Lookup of actors by id.
pub trait ActorSet {
    /// Ids in start order.
    fn ids(&self) -> Vec<String>;

    fn get(&mut self, id: &str) -> Option<&mut dyn Actor>;
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct InFlight {
    at: u64,
    order: u64,
    from: String,
    to: String,
    bytes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub struct SimNetwork {
    cfg: NetworkConfig,
    rng: DetRng,
    now: u64,
    order: u64,
    queue: BinaryHeap<Reverse<InFlight>>,
    /// Latest delivery time per (from, to) channel.
    channels: BTreeMap<(String, String), u64>,
    transcript: Transcript,
    stats: NetStats,
}

impl SimNetwork {
    pub fn new(cfg: NetworkConfig, rng: DetRng) -> Self {
        Self {
            cfg,
            rng,
            now: 0,
            order: 0,
            queue: BinaryHeap::new(),
            channels: BTreeMap::new(),
            transcript: Transcript::default(),
            stats: NetStats::default(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn send(&mut self, from: &str, to: &str, msg: &Message) {
        let bytes = msg.to_wire();
        self.stats.sent += 1;
        if self.cfg.drop > 0.0 && self.rng.gen_bool(self.cfg.drop) {
            self.stats.dropped += 1;
            self.transcript.record(self.now, from, to, &bytes, true);
            return;
        }
        let jitter = if self.cfg.jitter > 0 {
            self.rng.gen_range(0..=self.cfg.jitter)
        } else {
            0
        };
        let proposed = self.now + self.cfg.latency + jitter;
        let clock = self.channels.entry((from.to_owned(), to.to_owned())).or_default();
        let at = proposed.max(*clock);
        *clock = at;
        self.order += 1;
        self.queue.push(Reverse(InFlight {
            at,
            order: self.order,
            from: from.to_owned(),
            to: to.to_owned(),
            bytes,
        }));
    }

    fn flush(&mut self, actor: &str, out: Outbox) {
        for note in out.notes {
            let bytes = Message::Note(note).to_wire();
            self.transcript.record(self.now, actor, actor, &bytes, false);
        }
        for (to, msg) in &out.sent {
            self.send(actor, to, msg);
        }
    }

    /// Starts every actor, then delivers until nothing is in flight.
    pub fn run(&mut self, actors: &mut dyn ActorSet, limit: u64) -> Result<NetStats, SimError> {
        for id in actors.ids() {
            let actor = actors.get(&id).ok_or_else(|| SimError::UnknownActor(id.clone()))?;
            let mut out = Outbox::new(self.now);
            actor.start(&mut out);
            self.flush(&id, out);
        }
        while let Some(Reverse(m)) = self.queue.pop() {
            if self.stats.delivered >= limit {
                return Err(SimError::Runaway(limit));
            }
            self.now = m.at;
            self.stats.delivered += 1;
            self.transcript.record(self.now, &m.from, &m.to, &m.bytes, false);
            let actor = actors.get(&m.to).ok_or_else(|| SimError::UnknownActor(m.to.clone()))?;
            let out = actor_step(actor, self.now, &m.from, &m.bytes);
            self.flush(&m.to, out);
        }
        Ok(self.stats)
    }
}
