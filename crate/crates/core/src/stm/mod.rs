//! Optimistic software transactional memory under timestamp ordering.
//!
//! Two protocols sit behind one transaction interface:
//!
//! * **BTO** — basic timestamp ordering. One version per object, annotated
//!   with the largest reader and writer timestamps plus the full reader and
//!   writer lists. Reads and commits abort when they would violate timestamp
//!   order.
//! * **MVTO** — multi-version timestamp ordering. An ordered version list per
//!   object; a read returns the version with the largest timestamp below the
//!   reader's own and never aborts. A write aborts at commit when a later
//!   reader already read the version it would overwrite.
//!
//! While committing, every transaction also accumulates the set of committed
//! transactions it conflicts with. The miner feeds those sets into the block
//! graph after each commit ([`Stm::get_conflicts`]).
//!
//! Latches are ordered: object ids are assigned in lexicographic key order at
//! [`Stm::init`] and both commit phases acquire latches in ascending id order,
//! so the latching is deadlock-free.

mod bto;
mod mvto;

pub mod history;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use thiserror::Error;

use self::bto::BtoObject;
use self::mvto::VersionList;
use history::{EventKind, History, HistoryRecorder};

/// Transaction timestamp. `0` is reserved for the initializing transaction
/// that writes every object's starting value; real transactions draw strictly
/// increasing timestamps from a shared counter starting at 1.
pub type Ts = u64;

/// Dense index of a shared object, assigned at [`Stm::init`] in lexicographic
/// key order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ObjId(pub u32);

impl ObjId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Protocol {
    Bto,
    Mvto,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Bto => write!(f, "bto"),
            Protocol::Mvto => write!(f, "mvto"),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bto" | "BTO" => Ok(Protocol::Bto),
            "mvto" | "MVTO" => Ok(Protocol::Mvto),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StmError {
    #[error("no shared objects declared")]
    EmptyDomain,
    #[error("duplicate object key `{0}`")]
    DuplicateKey(String),
    #[error("transaction {0} is not committed")]
    NotCommitted(Ts),
}

/// Returned by `read` and `try_commit` when the transaction lost the
/// timestamp-order race. The descriptor is already finalized; the caller
/// retries the whole atomic unit under a fresh `begin`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Abort;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TxnStatus {
    Live,
    Committed,
    Aborted,
}

#[derive(Clone, Debug)]
struct ReadEntry {
    obj: ObjId,
    value: i64,
    /// Writer timestamp of the version this read returned (MVTO bookkeeping;
    /// 0 under BTO where only one version exists).
    version: Ts,
}

/// Per-transaction descriptor: timestamp, buffered read/write sets, status.
/// Owned by exactly one thread; all shared state lives in [`Stm`].
#[derive(Debug)]
pub struct Txn {
    ts: Ts,
    read_set: Vec<ReadEntry>,
    write_set: BTreeMap<ObjId, i64>,
    status: TxnStatus,
}

impl Txn {
    pub fn ts(&self) -> Ts {
        self.ts
    }

    pub fn status(&self) -> TxnStatus {
        self.status
    }

    fn read_entry(&self, obj: ObjId) -> Option<&ReadEntry> {
        self.read_set.iter().find(|e| e.obj == obj)
    }
}

#[derive(Debug)]
enum Store {
    Bto(Vec<Mutex<BtoObject>>),
    Mvto(Vec<Mutex<VersionList>>),
}

/// Shared STM instance: the object store, the timestamp counter, the
/// per-transaction conflict sets and an optional history recorder.
#[derive(Debug)]
pub struct Stm {
    protocol: Protocol,
    keys: Vec<String>,
    store: Store,
    tcntr: AtomicU64,
    conflicts: Mutex<HashMap<Ts, BTreeSet<Ts>>>,
    recorder: Option<HistoryRecorder>,
}

impl Stm {
    /// Initializes every declared object with value 0 on behalf of the
    /// timestamp-0 transaction and resets the counter to 1. Keys are
    /// deduplicated-checked and sorted so that object ids follow
    /// lexicographic key order.
    pub fn init<S: Into<String>>(
        keys: impl IntoIterator<Item = S>,
        protocol: Protocol,
    ) -> Result<Self, StmError> {
        let mut names: Vec<String> = keys.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(StmError::EmptyDomain);
        }
        names.sort();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(StmError::DuplicateKey(pair[0].clone()));
            }
        }
        let store = match protocol {
            Protocol::Bto => Store::Bto(
                (0..names.len())
                    .map(|_| Mutex::new(BtoObject::initial()))
                    .collect(),
            ),
            Protocol::Mvto => Store::Mvto(
                (0..names.len())
                    .map(|_| Mutex::new(VersionList::initial()))
                    .collect(),
            ),
        };
        Ok(Stm {
            protocol,
            keys: names,
            store,
            tcntr: AtomicU64::new(1),
            conflicts: Mutex::new(HashMap::new()),
            recorder: None,
        })
    }

    /// Attach an event recorder; every begin/read/write/commit/abort will be
    /// appended to it.
    pub fn with_recorder(mut self) -> Self {
        self.recorder = Some(HistoryRecorder::new());
        self
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn key_names(&self) -> &[String] {
        &self.keys
    }

    pub fn object_id(&self, name: &str) -> Option<ObjId> {
        self.keys
            .binary_search_by(|k| k.as_str().cmp(name))
            .ok()
            .map(|i| ObjId(i as u32))
    }

    /// Start a new transaction. The timestamp is drawn and the begin event
    /// recorded under one recorder lock, so log order agrees with timestamp
    /// order for begins.
    pub fn begin(&self) -> Txn {
        let ts = match &self.recorder {
            Some(rec) => rec.record_with(|| self.tcntr.fetch_add(1, Ordering::SeqCst), EventKind::Begin),
            None => self.tcntr.fetch_add(1, Ordering::SeqCst),
        };
        Txn {
            ts,
            read_set: Vec::new(),
            write_set: BTreeMap::new(),
            status: TxnStatus::Live,
        }
    }

    /// Transactional read. Returns the buffered write or the previously read
    /// value when the object is already in the local log; otherwise goes to
    /// shared memory under the object latch. Only the shared access is
    /// recorded as a history event.
    ///
    /// Under BTO this aborts the transaction when a higher-timestamped write
    /// is already installed. MVTO reads never abort.
    pub fn read(&self, txn: &mut Txn, obj: ObjId) -> Result<i64, Abort> {
        assert_eq!(txn.status, TxnStatus::Live, "read on a finished transaction");
        if let Some(&v) = txn.write_set.get(&obj) {
            return Ok(v);
        }
        if let Some(e) = txn.read_entry(obj) {
            return Ok(e.value);
        }
        let shared = match &self.store {
            Store::Bto(objs) => {
                let mut o = objs[obj.index()].lock();
                match bto::read(&mut o, txn.ts) {
                    Some(v) => {
                        self.record(txn.ts, EventKind::Read { obj, value: v });
                        Some((v, 0))
                    }
                    None => None,
                }
            }
            Store::Mvto(objs) => {
                let mut vl = objs[obj.index()].lock();
                let (version, v) = mvto::read(&mut vl, txn.ts);
                self.record(txn.ts, EventKind::Read { obj, value: v });
                Some((v, version))
            }
        };
        match shared {
            Some((value, version)) => {
                txn.read_set.push(ReadEntry { obj, value, version });
                Ok(value)
            }
            None => {
                self.finish_abort(txn);
                Err(Abort)
            }
        }
    }

    /// Buffer a write in the local log. Never touches shared state and never
    /// fails; a later write to the same object overwrites the buffered value.
    pub fn write(&self, txn: &mut Txn, obj: ObjId, value: i64) {
        assert_eq!(txn.status, TxnStatus::Live, "write on a finished transaction");
        txn.write_set.insert(obj, value);
        self.record(txn.ts, EventKind::Write { obj, value });
    }

    /// Validate and install the write set, then record conflict and reader
    /// bookkeeping for the read set. On success the transaction is committed
    /// and its conflict set is available through [`Stm::get_conflicts`]; on
    /// failure all latches are released and the local log is discarded.
    pub fn try_commit(&self, txn: &mut Txn) -> Result<(), Abort> {
        assert_eq!(txn.status, TxnStatus::Live, "commit on a finished transaction");
        let mut cl = BTreeSet::new();
        let committed = match &self.store {
            Store::Bto(objs) => bto::try_commit(objs, txn, &mut cl, &self.recorder),
            Store::Mvto(objs) => mvto::try_commit(objs, txn, &mut cl, &self.recorder),
        };
        if !committed {
            self.finish_abort(txn);
            return Err(Abort);
        }
        cl.remove(&txn.ts);
        cl.remove(&0); // the initializing transaction is not a block vertex
        self.conflicts.lock().insert(txn.ts, cl);
        txn.status = TxnStatus::Committed;
        Ok(())
    }

    /// Conflict set recorded while `ts` committed. Stable once the commit has
    /// returned.
    pub fn get_conflicts(&self, ts: Ts) -> Result<BTreeSet<Ts>, StmError> {
        self.conflicts
            .lock()
            .get(&ts)
            .cloned()
            .ok_or(StmError::NotCommitted(ts))
    }

    /// Latest committed value of every object, by object id. Only meaningful
    /// once no transaction is in flight.
    pub fn snapshot_state(&self) -> Vec<i64> {
        match &self.store {
            Store::Bto(objs) => objs.iter().map(|o| o.lock().value).collect(),
            Store::Mvto(objs) => objs.iter().map(|o| o.lock().latest_value()).collect(),
        }
    }

    /// Clone of the recorded history, if recording was enabled.
    pub fn history(&self) -> Option<History> {
        self.recorder
            .as_ref()
            .map(|r| r.snapshot(self.keys.clone()))
    }

    fn record(&self, ts: Ts, kind: EventKind) {
        if let Some(rec) = &self.recorder {
            rec.record(ts, kind);
        }
    }

    fn finish_abort(&self, txn: &mut Txn) {
        txn.status = TxnStatus::Aborted;
        txn.read_set.clear();
        txn.write_set.clear();
        self.record(txn.ts, EventKind::Abort);
    }
}
