//! Deterministic re-execution of a proposed block under its dependency graph.
//!
//! Validators run the block's units against raw shared state — no STM, no
//! latches — because the graph guarantees that units touching a common object
//! with a write are never in flight together. Three modes:
//!
//! * serial: units in ascending-timestamp (topological) order, the baseline;
//! * decentralized: symmetric threads claim source nodes themselves, each
//!   draining a thread-local cache of nodes it freed before scanning the
//!   graph again;
//! * fork-join: one master claims and dispatches source nodes to a slave pool
//!   over a bounded queue and drains indegrees on completion notifications.
//!
//! All modes recompute the final state and per-unit outcomes and accept the
//! block iff both match what the block claims. An instrumented mode tags
//! per-key readers and writers to prove, rather than assume, that no
//! conflicting units ever overlap.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, RecvTimeoutError};
use thiserror::Error;

use crate::block::{Block, BlockAu};
use crate::contracts::{execute_au, AuOutcome, KeyTable, Memory};
use crate::graph::{BlockGraph, NodeHandle};
use crate::stm::{Abort, ObjId};

#[derive(Clone, Copy, Debug)]
pub struct ValidatorConfig {
    /// Stall watchdog for the concurrent modes.
    pub watchdog: Duration,
    /// Tag per-key readers/writers during execution and reject on overlap.
    pub instrument: bool,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        ValidatorConfig {
            watchdog: Duration::from_secs(30),
            instrument: false,
        }
    }
}

/// Everything that differed between the recomputed and the claimed block.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Diff {
    /// key -> (computed, claimed)
    pub values: Vec<(String, i64, i64)>,
    /// unit id -> (computed, claimed)
    pub outcomes: Vec<(u64, AuOutcome, AuOutcome)>,
    /// key-set mismatches and other shape problems
    pub structural: Vec<String>,
}

impl Diff {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty() && self.outcomes.is_empty() && self.structural.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum RejectReason {
    #[error("block does not parse: {0}")]
    Parse(String),
    #[error("graph integrity: {0}")]
    GraphIntegrity(String),
    #[error("recomputed state differs from the block: {0:?}")]
    StateDiff(Diff),
    #[error("stalled: {completed}/{total} units after {elapsed:?}")]
    Stalled {
        completed: u64,
        total: u64,
        elapsed: Duration,
    },
    #[error("conflicting units overlapped on `{0}` during instrumented validation")]
    ConflictObserved(String),
}

#[derive(Debug)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// All keys whose values differ, plus key-set mismatches. Empty diff means
/// the states agree.
pub fn compare_final_state(
    computed: &BTreeMap<String, i64>,
    claimed: &BTreeMap<String, i64>,
) -> Diff {
    let mut diff = Diff::default();
    for (k, &cv) in computed {
        match claimed.get(k) {
            Some(&bv) if bv == cv => {}
            Some(&bv) => diff.values.push((k.clone(), cv, bv)),
            None => diff.structural.push(format!("claimed state is missing key `{k}`")),
        }
    }
    for k in claimed.keys() {
        if !computed.contains_key(k) {
            diff.structural.push(format!("claimed state has extra key `{k}`"));
        }
    }
    diff
}

/// Replay units sequentially in the given order against fresh state. The
/// order is arbitrary — validators pass a topological order, negative
/// controls pass something else on purpose.
pub fn replay_in_order<'a>(
    keys: &KeyTable,
    order: impl IntoIterator<Item = &'a BlockAu>,
) -> (BTreeMap<String, i64>, Vec<(u64, AuOutcome)>) {
    let mut state = vec![0i64; keys.len()];
    let mut outcomes = Vec::new();
    for bau in order {
        let outcome = execute_au(&bau.unit, keys, &mut crate::contracts::VecMemory(&mut state))
            .expect("block units execute against their own key table");
        outcomes.push((bau.unit.id, outcome));
    }
    let map = keys
        .names()
        .iter()
        .cloned()
        .zip(state.iter().copied())
        .collect();
    (map, outcomes)
}

fn check_graph_covers_units(block: &Block) -> Result<(), RejectReason> {
    if block.graph.vertices.len() != block.aus.len() {
        return Err(RejectReason::GraphIntegrity(format!(
            "{} vertices for {} units",
            block.graph.vertices.len(),
            block.aus.len()
        )));
    }
    let mut ids: Vec<u64> = block.graph.vertices.iter().map(|&(_, au)| au).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != block.aus.len() || block.aus.iter().any(|b| !ids.contains(&b.unit.id)) {
        return Err(RejectReason::GraphIntegrity(
            "graph vertices do not cover the unit list".into(),
        ));
    }
    Ok(())
}

fn finish(
    block: &Block,
    computed_state: BTreeMap<String, i64>,
    computed_outcomes: &[(u64, AuOutcome)],
) -> Verdict {
    let mut diff = compare_final_state(&computed_state, &block.final_state);
    let claimed: HashMap<u64, AuOutcome> =
        block.aus.iter().map(|b| (b.unit.id, b.outcome)).collect();
    for &(id, got) in computed_outcomes {
        match claimed.get(&id) {
            Some(&want) if want == got => {}
            Some(&want) => diff.outcomes.push((id, got, want)),
            None => diff.structural.push(format!("unit {id} is not in the block")),
        }
    }
    if diff.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject(RejectReason::StateDiff(diff))
    }
}

/// Re-execute in topological (ascending timestamp) order and compare.
pub fn validate_serial(block: &Block) -> Verdict {
    if let Err(r) = check_graph_covers_units(block) {
        return Verdict::Reject(r);
    }
    let keys = block.key_table();
    let by_id: HashMap<u64, &BlockAu> = block.aus.iter().map(|b| (b.unit.id, b)).collect();
    let order = block
        .graph
        .vertices
        .iter()
        .map(|&(_, au)| by_id[&au]);
    let (state, outcomes) = replay_in_order(&keys, order);
    finish(block, state, &outcomes)
}

/// Self-scheduling threads over the claimable graph.
pub fn validate_decentralized(block: &Block, threads: usize, cfg: &ValidatorConfig) -> Verdict {
    assert!(threads >= 1);
    if let Err(r) = check_graph_covers_units(block) {
        return Verdict::Reject(r);
    }
    let graph = match block.graph.build() {
        Ok(g) => g,
        Err(e) => return Verdict::Reject(RejectReason::GraphIntegrity(e.to_string())),
    };
    decentralized_run(block, &graph, threads, cfg)
}

fn decentralized_run(
    block: &Block,
    graph: &BlockGraph,
    threads: usize,
    cfg: &ValidatorConfig,
) -> Verdict {
    let keys = block.key_table();
    let exec = ExecContext::new(block, &keys, cfg.instrument);
    let total = block.aus.len() as u64;
    let deadline = Instant::now() + cfg.watchdog;
    let started = Instant::now();
    let gave_up = AtomicBool::new(false);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| {
                let mut cache: Vec<NodeHandle> = Vec::new();
                while graph.completed() < total && !gave_up.load(Ordering::SeqCst) {
                    let mut progressed = false;
                    while let Some(candidate) = cache.pop() {
                        if let Some(node) = graph.search_local(candidate) {
                            exec.run_node(graph, node, &mut cache);
                            progressed = true;
                        }
                    }
                    if let Some(node) = graph.search_global() {
                        exec.run_node(graph, node, &mut cache);
                        progressed = true;
                    }
                    if !progressed {
                        if Instant::now() > deadline {
                            gave_up.store(true, Ordering::SeqCst);
                            return;
                        }
                        std::thread::yield_now();
                    }
                }
            });
        }
    });

    if gave_up.load(Ordering::SeqCst) {
        return Verdict::Reject(RejectReason::Stalled {
            completed: graph.completed(),
            total,
            elapsed: started.elapsed(),
        });
    }
    debug_assert_eq!(graph.completed(), total);
    exec.verdict(block)
}

/// Master/slave execution: the master claims ready nodes and dispatches them
/// over a bounded queue (backpressure blocks dispatch rather than dropping
/// work); slaves send completion notifications back and the master drains
/// indegrees.
pub fn validate_fork_join(block: &Block, slaves: usize, cfg: &ValidatorConfig) -> Verdict {
    assert!(slaves >= 1);
    if let Err(r) = check_graph_covers_units(block) {
        return Verdict::Reject(r);
    }
    let graph = match block.graph.build() {
        Ok(g) => g,
        Err(e) => return Verdict::Reject(RejectReason::GraphIntegrity(e.to_string())),
    };
    fork_join_run(block, &graph, slaves, cfg)
}

fn fork_join_run(
    block: &Block,
    graph: &BlockGraph,
    slaves: usize,
    cfg: &ValidatorConfig,
) -> Verdict {
    let keys = block.key_table();
    let exec = ExecContext::new(block, &keys, cfg.instrument);
    let total = block.aus.len() as u64;
    let started = Instant::now();

    let (task_tx, task_rx) = bounded::<NodeHandle>(2 * slaves);
    let (done_tx, done_rx) = unbounded::<NodeHandle>();

    let reason: Option<RejectReason> = std::thread::scope(|scope| {
        for _ in 0..slaves {
            let task_rx = task_rx.clone();
            let done_tx = done_tx.clone();
            let exec = &exec;
            scope.spawn(move || {
                for node in task_rx.iter() {
                    exec.run_unit(node);
                    if done_tx.send(node).is_err() {
                        return;
                    }
                }
            });
        }
        drop(task_rx);
        drop(done_tx);

        // master: ready holds unclaimed source candidates
        let mut ready: Vec<NodeHandle> = graph
            .vertices_handles()
            .into_iter()
            .filter(|h| h.in_cnt() == 0)
            .collect();
        let mut in_flight = 0u64;
        let mut completed = 0u64;
        loop {
            while let Some(candidate) = ready.pop() {
                if let Some(node) = graph.search_local(candidate) {
                    task_tx.send(node).expect("slaves outlive dispatch");
                    in_flight += 1;
                }
            }
            if completed == total {
                drop(task_tx);
                return None;
            }
            if in_flight == 0 {
                drop(task_tx);
                return Some(RejectReason::GraphIntegrity(format!(
                    "ready set empty with {} of {total} units done and none in flight",
                    completed
                )));
            }
            match done_rx.recv_timeout(cfg.watchdog) {
                Ok(node) => {
                    completed += 1;
                    in_flight -= 1;
                    graph.dec_in_count(node, &mut ready);
                }
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                    drop(task_tx);
                    return Some(RejectReason::Stalled {
                        completed,
                        total,
                        elapsed: started.elapsed(),
                    });
                }
            }
        }
    });

    if let Some(r) = reason {
        return Verdict::Reject(r);
    }
    exec.verdict(block)
}

/// Shared execution context for the concurrent modes: raw cells, outcome
/// slots and optional per-key access tagging.
struct ExecContext<'b> {
    keys: &'b KeyTable,
    by_id: HashMap<u64, (usize, &'b BlockAu)>,
    cells: Vec<AtomicI64>,
    outcomes: Vec<OnceLock<AuOutcome>>,
    tags: Option<Vec<AtomicI64>>,
    violation: OnceLock<String>,
}

impl<'b> ExecContext<'b> {
    fn new(block: &'b Block, keys: &'b KeyTable, instrument: bool) -> Self {
        ExecContext {
            keys,
            by_id: block
                .aus
                .iter()
                .enumerate()
                .map(|(i, b)| (b.unit.id, (i, b)))
                .collect(),
            cells: (0..keys.len()).map(|_| AtomicI64::new(0)).collect(),
            outcomes: (0..block.aus.len()).map(|_| OnceLock::new()).collect(),
            tags: instrument.then(|| (0..keys.len()).map(|_| AtomicI64::new(0)).collect()),
            violation: OnceLock::new(),
        }
    }

    fn run_node<'g>(&self, graph: &'g BlockGraph, node: NodeHandle<'g>, cache: &mut Vec<NodeHandle<'g>>) {
        self.run_unit(node);
        graph.dec_in_count(node, cache);
    }

    fn run_unit(&self, node: NodeHandle<'_>) {
        let (slot, bau) = self.by_id[&node.au_id()];
        let mut mem = RawMemory {
            ctx: self,
            unit_tag: slot as i64 + 1,
            read_marked: Vec::new(),
            write_marked: Vec::new(),
        };
        let outcome = execute_au(&bau.unit, self.keys, &mut mem)
            .expect("block units execute against their own key table");
        mem.release();
        self.outcomes[slot]
            .set(outcome)
            .expect("unit executed exactly once");
    }

    fn verdict(&self, block: &Block) -> Verdict {
        if let Some(key) = self.violation.get() {
            return Verdict::Reject(RejectReason::ConflictObserved(key.clone()));
        }
        let state: BTreeMap<String, i64> = self
            .keys
            .names()
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), self.cells[i].load(Ordering::SeqCst)))
            .collect();
        let outcomes: Vec<(u64, AuOutcome)> = block
            .aus
            .iter()
            .enumerate()
            .map(|(i, b)| {
                (
                    b.unit.id,
                    *self.outcomes[i].get().expect("all units executed"),
                )
            })
            .collect();
        finish(block, state, &outcomes)
    }

    fn flag_violation(&self, obj: ObjId) {
        let _ = self.violation.set(self.keys.name(obj).to_string());
    }
}

/// Raw shared-state access for validator execution. In instrumented mode a
/// per-key tag counts concurrent readers (positive) or names a writer
/// (negative unit tag); any overlap involving a writer is flagged.
struct RawMemory<'a, 'b> {
    ctx: &'a ExecContext<'b>,
    unit_tag: i64,
    read_marked: Vec<ObjId>,
    write_marked: Vec<ObjId>,
}

impl RawMemory<'_, '_> {
    fn release(&mut self) {
        if let Some(tags) = &self.ctx.tags {
            for &obj in &self.read_marked {
                tags[obj.index()].fetch_sub(1, Ordering::SeqCst);
            }
            for &obj in &self.write_marked {
                tags[obj.index()].store(0, Ordering::SeqCst);
            }
        }
    }
}

impl Memory for RawMemory<'_, '_> {
    fn read(&mut self, obj: ObjId) -> Result<i64, Abort> {
        if let Some(tags) = &self.ctx.tags {
            if !self.write_marked.contains(&obj) && !self.read_marked.contains(&obj) {
                let tag = &tags[obj.index()];
                loop {
                    let v = tag.load(Ordering::SeqCst);
                    if v < 0 {
                        self.ctx.flag_violation(obj);
                        break;
                    }
                    if tag
                        .compare_exchange(v, v + 1, Ordering::SeqCst, Ordering::SeqCst)
                        .is_ok()
                    {
                        self.read_marked.push(obj);
                        break;
                    }
                }
            }
        }
        Ok(self.ctx.cells[obj.index()].load(Ordering::SeqCst))
    }

    fn write(&mut self, obj: ObjId, value: i64) -> Result<(), Abort> {
        if let Some(tags) = &self.ctx.tags {
            if !self.write_marked.contains(&obj) {
                let tag = &tags[obj.index()];
                let expected = if let Some(pos) = self.read_marked.iter().position(|&o| o == obj) {
                    self.read_marked.swap_remove(pos);
                    1
                } else {
                    0
                };
                if tag
                    .compare_exchange(expected, -self.unit_tag, Ordering::SeqCst, Ordering::SeqCst)
                    .is_err()
                {
                    self.ctx.flag_violation(obj);
                } else {
                    self.write_marked.push(obj);
                }
            }
        }
        self.ctx.cells[obj.index()].store(value, Ordering::SeqCst);
        Ok(())
    }
}
