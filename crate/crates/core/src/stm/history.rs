//! Append-only, thread-safe event log.
//!
//! Every STM operation completion is recorded as one event with a global
//! sequence number; the log order is a linearization of operation
//! completions. Reads are recorded while the object latch is held and commits
//! while the write-phase latches are held, so the order in which values
//! become visible agrees with the order of the log — the offline checkers
//! rely on that.

use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{ObjId, Ts};

static NEXT_THREAD_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static THREAD_ID: u64 = NEXT_THREAD_ID.fetch_add(1, Ordering::Relaxed);
}

fn thread_id() -> u64 {
    THREAD_ID.with(|id| *id)
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum EventKind {
    Begin,
    Read { obj: ObjId, value: i64 },
    Write { obj: ObjId, value: i64 },
    Commit,
    Abort,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Event {
    pub seq: u64,
    pub thread: u64,
    pub ts: Ts,
    pub kind: EventKind,
}

#[derive(Debug)]
pub struct HistoryRecorder {
    events: Mutex<Vec<Event>>,
}

impl HistoryRecorder {
    pub fn new() -> Self {
        HistoryRecorder {
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn record(&self, ts: Ts, kind: EventKind) {
        let mut log = self.events.lock();
        let seq = log.len() as u64;
        log.push(Event {
            seq,
            thread: thread_id(),
            ts,
            kind,
        });
    }

    /// Runs `acquire` and records the event it produced under one log lock,
    /// making acquisition and recording a single atomic step. Used by `begin`
    /// so that begin order in the log matches timestamp order.
    pub fn record_with(&self, acquire: impl FnOnce() -> Ts, kind: EventKind) -> Ts {
        let mut log = self.events.lock();
        let ts = acquire();
        let seq = log.len() as u64;
        log.push(Event {
            seq,
            thread: thread_id(),
            ts,
            kind,
        });
        ts
    }

    pub fn snapshot(&self, keys: Vec<String>) -> History {
        History {
            events: self.events.lock().clone(),
            keys,
        }
    }
}

impl Default for HistoryRecorder {
    fn default() -> Self {
        Self::new()
    }
}

/// A frozen event log plus the object-key table it refers to.
#[derive(Clone, Debug)]
pub struct History {
    pub events: Vec<Event>,
    pub keys: Vec<String>,
}

impl History {
    pub fn new(events: Vec<Event>, keys: Vec<String>) -> Self {
        History { events, keys }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Line-oriented text form, parseable back with [`History::parse`].
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "HIST v1 {} {}", self.events.len(), self.keys.len()).unwrap();
        for (i, k) in self.keys.iter().enumerate() {
            writeln!(out, "K {i} {k}").unwrap();
        }
        for e in &self.events {
            match &e.kind {
                EventKind::Begin => writeln!(out, "E {} {} B {}", e.seq, e.thread, e.ts),
                EventKind::Read { obj, value } => {
                    writeln!(out, "E {} {} R {} {} {}", e.seq, e.thread, e.ts, obj.0, value)
                }
                EventKind::Write { obj, value } => {
                    writeln!(out, "E {} {} W {} {} {}", e.seq, e.thread, e.ts, obj.0, value)
                }
                EventKind::Commit => writeln!(out, "E {} {} C {}", e.seq, e.thread, e.ts),
                EventKind::Abort => writeln!(out, "E {} {} A {}", e.seq, e.thread, e.ts),
            }
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<History, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty history file")?;
        let mut h = header.split_whitespace();
        if h.next() != Some("HIST") || h.next() != Some("v1") {
            return Err(format!("bad history header `{header}`"));
        }
        let nevents: usize = h
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or("bad event count")?;
        let nkeys: usize = h
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or("bad key count")?;
        let mut keys = Vec::with_capacity(nkeys);
        let mut events = Vec::with_capacity(nevents);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            match f.next() {
                Some("K") => {
                    let id: usize = f.next().and_then(|s| s.parse().ok()).ok_or("bad key id")?;
                    let name = f.next().ok_or("missing key name")?;
                    if id != keys.len() {
                        return Err(format!("key id {id} out of order"));
                    }
                    keys.push(name.to_string());
                }
                Some("E") => {
                    let seq: u64 = f.next().and_then(|s| s.parse().ok()).ok_or("bad seq")?;
                    let thread: u64 =
                        f.next().and_then(|s| s.parse().ok()).ok_or("bad thread")?;
                    let op = f.next().ok_or("missing op")?;
                    let ts: Ts = f.next().and_then(|s| s.parse().ok()).ok_or("bad ts")?;
                    let kind = match op {
                        "B" => EventKind::Begin,
                        "C" => EventKind::Commit,
                        "A" => EventKind::Abort,
                        "R" | "W" => {
                            let obj: u32 =
                                f.next().and_then(|s| s.parse().ok()).ok_or("bad obj")?;
                            let value: i64 =
                                f.next().and_then(|s| s.parse().ok()).ok_or("bad value")?;
                            if op == "R" {
                                EventKind::Read {
                                    obj: ObjId(obj),
                                    value,
                                }
                            } else {
                                EventKind::Write {
                                    obj: ObjId(obj),
                                    value,
                                }
                            }
                        }
                        other => return Err(format!("unknown event op `{other}`")),
                    };
                    events.push(Event {
                        seq,
                        thread,
                        ts,
                        kind,
                    });
                }
                Some(other) => return Err(format!("unknown line tag `{other}`")),
                None => {}
            }
        }
        if events.len() != nevents || keys.len() != nkeys {
            return Err("history counts do not match header".into());
        }
        Ok(History { events, keys })
    }
}
