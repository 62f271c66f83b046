//! Serial baseline miner and the concurrent miner.
//!
//! The concurrent miner runs a pool of workers over a shared fetch-and-
//! increment index into the unit list. Each unit executes as one STM
//! transaction; on abort the same worker re-runs the whole unit under a fresh
//! timestamp, immediately and without backoff. After a unit commits, its
//! worker registers the vertex and the recorded conflict edges in the block
//! graph. Once the list is drained and all workers have joined, the final
//! state is snapshotted and the block sealed.
//!
//! The serial miner executes units one by one without any STM machinery; its
//! block graph is derived from the pairwise conflict relation of the recorded
//! read/write sets. It doubles as the timing baseline and as a state oracle
//! for degenerate (single-threaded) concurrent runs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::OnceLock;

use parking_lot::Mutex;
use thiserror::Error;

use crate::block::{Block, BlockAu, GraphData};
use crate::contracts::{execute_au, AtomicUnit, AuOutcome, ExecError, KeyTable, Memory, StmMemory};
use crate::graph::BlockGraph;
use crate::stm::history::{Event, EventKind, History};
use crate::stm::{Abort, ObjId, Protocol, Stm, StmError, Ts};

#[derive(Clone, Copy, Debug)]
pub struct MinerConfig {
    pub threads: usize,
    pub protocol: Protocol,
    /// Abort-retry cap per unit; 0 means unbounded.
    pub max_retries: u64,
    pub record_history: bool,
}

impl MinerConfig {
    pub fn new(threads: usize, protocol: Protocol) -> Self {
        MinerConfig {
            threads,
            protocol,
            max_retries: 0,
            record_history: false,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record_history = true;
        self
    }
}

#[derive(Clone, Copy, Default, Debug)]
pub struct MinerStats {
    /// Aborted transaction incarnations (read- and commit-time).
    pub aborts: u64,
}

#[derive(Debug)]
pub struct Mined {
    pub block: Block,
    pub history: Option<History>,
    pub stats: MinerStats,
}

#[derive(Debug, Error)]
pub enum MineError {
    #[error("unit {au_id} exceeded the retry cap of {cap}")]
    RetryCapExceeded { au_id: u64, cap: u64 },
    #[error("unit {au_id}: {source}")]
    Exec { au_id: u64, source: ExecError },
    #[error(transparent)]
    Stm(#[from] StmError),
}

/// Execute the unit list in order against plain state, deriving the block
/// graph from the serial conflict relation: units `i < j` are joined when
/// they touch a common object and at least one writes it.
pub fn mine_serial(aus: &[AtomicUnit], keys: &KeyTable, prev_hash: [u8; 32]) -> (Block, History) {
    let mut state = vec![0i64; keys.len()];
    let mut events: Vec<Event> = Vec::new();
    let mut footprints: Vec<(BTreeSet<ObjId>, BTreeSet<ObjId>)> = Vec::with_capacity(aus.len());
    let mut outcomes = Vec::with_capacity(aus.len());
    for (i, unit) in aus.iter().enumerate() {
        let ts = (i + 1) as Ts;
        push_event(&mut events, ts, EventKind::Begin);
        let mut mem = RecordingMemory {
            state: &mut state,
            ts,
            events: &mut events,
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
        };
        let outcome = execute_au(unit, keys, &mut mem)
            .expect("serial execution cannot abort and the workload keys are declared");
        let (reads, writes) = (mem.reads, mem.writes);
        push_event(&mut events, ts, EventKind::Commit);
        footprints.push((reads, writes));
        outcomes.push(outcome);
    }

    let vertices: Vec<(Ts, u64)> = aus
        .iter()
        .enumerate()
        .map(|(i, u)| ((i + 1) as Ts, u.id))
        .collect();
    let mut edges = Vec::new();
    for i in 0..aus.len() {
        for j in (i + 1)..aus.len() {
            let (ri, wi) = &footprints[i];
            let (rj, wj) = &footprints[j];
            let conflict = wi.intersection(wj).next().is_some()
                || wi.intersection(rj).next().is_some()
                || ri.intersection(wj).next().is_some();
            if conflict {
                edges.push(((i + 1) as Ts, (j + 1) as Ts));
            }
        }
    }
    edges.sort_unstable();

    let final_state = state_map(keys, &state);
    let block_aus = aus
        .iter()
        .zip(&outcomes)
        .map(|(unit, &outcome)| BlockAu {
            unit: unit.clone(),
            outcome,
        })
        .collect();
    let block = Block::assemble(prev_hash, block_aus, GraphData { vertices, edges }, final_state);
    (block, History::new(events, keys.names().to_vec()))
}

/// Concurrent miner: workers drain the unit list through a shared atomic
/// index, executing each unit as an STM transaction with retry-on-abort, and
/// build the block graph as they commit.
pub fn mine_concurrent(
    cfg: &MinerConfig,
    aus: &[AtomicUnit],
    keys: &KeyTable,
    prev_hash: [u8; 32],
) -> Result<Mined, MineError> {
    assert!(cfg.threads >= 1, "miner needs at least one thread");
    let mut stm = Stm::init(keys.names().iter().cloned(), cfg.protocol)?;
    if cfg.record_history {
        stm = stm.with_recorder();
    }
    let graph = BlockGraph::new();
    let next = AtomicUsize::new(0);
    let aborts = AtomicU64::new(0);
    let poisoned = AtomicBool::new(false);
    let failure: Mutex<Option<MineError>> = Mutex::new(None);
    let results: Vec<OnceLock<(Ts, AuOutcome)>> = (0..aus.len()).map(|_| OnceLock::new()).collect();

    std::thread::scope(|scope| {
        for _ in 0..cfg.threads {
            scope.spawn(|| {
                worker(
                    cfg, aus, keys, &stm, &graph, &next, &aborts, &poisoned, &failure, &results,
                )
            });
        }
    });

    if let Some(err) = failure.into_inner() {
        return Err(err);
    }

    let state = stm.snapshot_state();
    let final_state = state_map(keys, &state);
    let block_aus = aus
        .iter()
        .enumerate()
        .map(|(i, unit)| BlockAu {
            unit: unit.clone(),
            outcome: results[i].get().expect("every unit completed").1,
        })
        .collect();
    let block = Block::assemble(
        prev_hash,
        block_aus,
        GraphData::from_graph(&graph),
        final_state,
    );
    Ok(Mined {
        block,
        history: stm.history(),
        stats: MinerStats {
            aborts: aborts.load(Ordering::SeqCst),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn worker(
    cfg: &MinerConfig,
    aus: &[AtomicUnit],
    keys: &KeyTable,
    stm: &Stm,
    graph: &BlockGraph,
    next: &AtomicUsize,
    aborts: &AtomicU64,
    poisoned: &AtomicBool,
    failure: &Mutex<Option<MineError>>,
    results: &[OnceLock<(Ts, AuOutcome)>],
) {
    let fail = |err: MineError| {
        let mut slot = failure.lock();
        if slot.is_none() {
            *slot = Some(err);
        }
        poisoned.store(true, Ordering::SeqCst);
    };
    loop {
        if poisoned.load(Ordering::SeqCst) {
            return;
        }
        let idx = next.fetch_add(1, Ordering::SeqCst);
        if idx >= aus.len() {
            return;
        }
        let unit = &aus[idx];
        let mut attempts: u64 = 0;
        let committed = loop {
            let mut txn = stm.begin();
            let run = execute_au(
                unit,
                keys,
                &mut StmMemory {
                    stm,
                    txn: &mut txn,
                },
            );
            match run {
                Ok(outcome) => {
                    if stm.try_commit(&mut txn).is_ok() {
                        break Some((txn.ts(), outcome));
                    }
                }
                Err(ExecError::Aborted) => {}
                Err(source @ ExecError::UnknownKey(_)) => {
                    fail(MineError::Exec {
                        au_id: unit.id,
                        source,
                    });
                    break None;
                }
            }
            aborts.fetch_add(1, Ordering::Relaxed);
            attempts += 1;
            if cfg.max_retries > 0 && attempts >= cfg.max_retries {
                fail(MineError::RetryCapExceeded {
                    au_id: unit.id,
                    cap: cfg.max_retries,
                });
                break None;
            }
            if poisoned.load(Ordering::SeqCst) {
                break None;
            }
        };
        let Some((ts, outcome)) = committed else { return };
        let conflicts = stm.get_conflicts(ts).expect("transaction just committed");
        graph.build_from_conflicts(ts, unit.id, conflicts);
        results[idx]
            .set((ts, outcome))
            .expect("unit executed exactly once");
    }
}

fn state_map(keys: &KeyTable, state: &[i64]) -> BTreeMap<String, i64> {
    keys.names()
        .iter()
        .cloned()
        .zip(state.iter().copied())
        .collect()
}

fn push_event(events: &mut Vec<Event>, ts: Ts, kind: EventKind) {
    let seq = events.len() as u64;
    events.push(Event {
        seq,
        thread: 0,
        ts,
        kind,
    });
}

/// Serial execution recorder: applies writes immediately, notes each unit's
/// read/write footprint and mirrors the STM recorder's event discipline
/// (first shared read per key, no event for reads of own writes).
struct RecordingMemory<'a> {
    state: &'a mut Vec<i64>,
    ts: Ts,
    events: &'a mut Vec<Event>,
    reads: BTreeSet<ObjId>,
    writes: BTreeSet<ObjId>,
}

impl Memory for RecordingMemory<'_> {
    fn read(&mut self, obj: ObjId) -> Result<i64, Abort> {
        let value = self.state[obj.index()];
        if !self.writes.contains(&obj) && self.reads.insert(obj) {
            push_event(self.events, self.ts, EventKind::Read { obj, value });
        }
        Ok(value)
    }

    fn write(&mut self, obj: ObjId, value: i64) -> Result<(), Abort> {
        self.state[obj.index()] = value;
        self.writes.insert(obj);
        push_event(self.events, self.ts, EventKind::Write { obj, value });
        Ok(())
    }
}
