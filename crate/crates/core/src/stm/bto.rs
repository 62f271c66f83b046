//! Single-version timestamp ordering.
//!
//! Each object carries the value of its latest committed write, the largest
//! reader/writer timestamps and the full reader/writer lists of committed
//! transactions. A read from timestamp `i` aborts when a write with a larger
//! timestamp is already installed; a commit aborts when any written object
//! has been read or written by a larger timestamp.

use std::collections::BTreeSet;

use parking_lot::Mutex;

use super::history::{EventKind, HistoryRecorder};
use super::{Ts, Txn};

#[derive(Debug)]
pub(super) struct BtoObject {
    pub value: i64,
    pub max_r: Ts,
    pub max_w: Ts,
    pub read_list: BTreeSet<Ts>,
    pub write_list: BTreeSet<Ts>,
}

impl BtoObject {
    pub fn initial() -> Self {
        BtoObject {
            value: 0,
            max_r: 0,
            max_w: 0,
            read_list: BTreeSet::new(),
            write_list: BTreeSet::new(),
        }
    }
}

/// Shared-memory read under the object latch. `None` means the transaction
/// must abort. Raises `max_r` but joins the reader list only at commit, so an
/// abort after this read leaves `max_r` raised — that only causes spurious
/// aborts of older writers, never an inconsistency.
pub(super) fn read(o: &mut BtoObject, ts: Ts) -> Option<i64> {
    if o.max_w > ts {
        return None;
    }
    if o.max_r < ts {
        o.max_r = ts;
    }
    Some(o.value)
}

/// Two-phase commit: latch the write set in ascending object order and
/// validate against `max_r`/`max_w`; install values and merge each object's
/// reader+writer lists into the conflict set; then visit the read set,
/// merging writer lists and joining reader lists. The commit event lands
/// while all write latches are still held.
pub(super) fn try_commit(
    objs: &[Mutex<BtoObject>],
    txn: &Txn,
    cl: &mut BTreeSet<Ts>,
    recorder: &Option<HistoryRecorder>,
) -> bool {
    let mut guards = Vec::with_capacity(txn.write_set.len());
    for &obj in txn.write_set.keys() {
        let g = objs[obj.index()].lock();
        if g.max_w > txn.ts || g.max_r > txn.ts {
            return false;
        }
        guards.push((obj, g));
    }
    for (obj, g) in guards.iter_mut() {
        g.value = txn.write_set[obj];
        g.max_w = txn.ts;
        cl.extend(g.read_list.iter().copied());
        cl.extend(g.write_list.iter().copied());
        g.write_list.insert(txn.ts);
    }
    if let Some(rec) = recorder {
        rec.record(txn.ts, EventKind::Commit);
    }
    drop(guards);
    for entry in &txn.read_set {
        let mut g = objs[entry.obj.index()].lock();
        cl.extend(g.write_list.iter().copied());
        g.read_list.insert(txn.ts);
    }
    true
}
