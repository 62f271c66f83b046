//! Multi-version timestamp ordering.
//!
//! Each object keeps an ordered version list; the version written by the
//! initializing transaction (timestamp 0, value 0) is always present, so a
//! read always finds a version and never aborts. Writes are validated at
//! commit: inserting a version at timestamp `i` is refused when the version
//! it would shadow was already read by a transaction younger than `i`.
//!
//! Version lists grow for the lifetime of the instance; there is no garbage
//! collection. Fine at block scale, where an instance lives for one block.

use std::collections::BTreeSet;

use parking_lot::Mutex;

use super::history::{EventKind, HistoryRecorder};
use super::{Ts, Txn};

#[derive(Debug)]
pub(super) struct Version {
    pub ts: Ts,
    pub value: i64,
    pub max_r: Ts,
    pub readers: Vec<Ts>,
}

#[derive(Debug)]
pub(super) struct VersionList {
    pub versions: Vec<Version>,
}

impl VersionList {
    pub fn initial() -> Self {
        VersionList {
            versions: vec![Version {
                ts: 0,
                value: 0,
                max_r: 0,
                readers: Vec::new(),
            }],
        }
    }

    pub fn latest_value(&self) -> i64 {
        self.versions.last().expect("initial version present").value
    }

    /// Index of the first version with timestamp >= `ts`. Always >= 1 for a
    /// real transaction because the timestamp-0 version is present.
    fn upper_pos(&self, ts: Ts) -> usize {
        self.versions.partition_point(|v| v.ts < ts)
    }
}

/// Returns `(writer timestamp, value)` of the version with the largest
/// timestamp below `ts` and raises its `max_r`.
pub(super) fn read(vl: &mut VersionList, ts: Ts) -> (Ts, i64) {
    let pos = vl.upper_pos(ts);
    let ver = &mut vl.versions[pos - 1];
    if ver.max_r < ts {
        ver.max_r = ts;
    }
    (ver.ts, ver.value)
}

/// Write-validation rule: `false` iff the version preceding `ts` has already
/// been read by a transaction with a timestamp above `ts`.
pub(super) fn check_version(vl: &VersionList, ts: Ts) -> bool {
    let pos = vl.upper_pos(ts);
    vl.versions[pos - 1].max_r <= ts
}

/// Validate and insert the write-set versions in ascending object order, then
/// join the reader list of every version read. Conflicts recorded per write:
/// the shadowed version's writer (or its readers, when it has any) and the
/// next-younger version's writer when one exists; per read: the version's
/// writer and the writer that shadowed it, when present.
pub(super) fn try_commit(
    objs: &[Mutex<VersionList>],
    txn: &Txn,
    cl: &mut BTreeSet<Ts>,
    recorder: &Option<HistoryRecorder>,
) -> bool {
    let mut guards = Vec::with_capacity(txn.write_set.len());
    for &obj in txn.write_set.keys() {
        let g = objs[obj.index()].lock();
        if !check_version(&g, txn.ts) {
            return false;
        }
        guards.push((obj, g));
    }
    for (obj, g) in guards.iter_mut() {
        let value = txn.write_set[obj];
        let pos = g.upper_pos(txn.ts);
        {
            let prev = &g.versions[pos - 1];
            if prev.readers.is_empty() {
                cl.insert(prev.ts);
            } else {
                cl.extend(prev.readers.iter().copied());
            }
        }
        if pos < g.versions.len() {
            cl.insert(g.versions[pos].ts);
        }
        g.versions.insert(
            pos,
            Version {
                ts: txn.ts,
                value,
                max_r: 0,
                readers: Vec::new(),
            },
        );
    }
    if let Some(rec) = recorder {
        rec.record(txn.ts, EventKind::Commit);
    }
    drop(guards);
    for entry in &txn.read_set {
        let mut g = objs[entry.obj.index()].lock();
        let jpos = g
            .versions
            .binary_search_by_key(&entry.version, |v| v.ts)
            .expect("version read earlier is still present");
        g.versions[jpos].readers.push(txn.ts);
        cl.insert(entry.version);
        if let Some(next) = g.versions.get(jpos + 1) {
            cl.insert(next.ts);
        }
    }
    true
}
