//! Offline correctness oracles over recorded histories.
//!
//! Everything here is single-threaded and pure: it looks at a frozen
//! [`History`] (and sometimes a block graph) after the fact.
//!
//! * [`conflict_graph`] / [`is_csr`] — the polynomial conflict-serializability
//!   check: committed transactions conflict when one's commit precedes the
//!   other's commit, read or write on a shared object with a write involved;
//!   the history is CSR iff that graph is acyclic.
//! * [`is_mvsr`] — brute force on small instances: does some permutation of
//!   the committed transactions, replayed serially, give every read the value
//!   it actually returned, while preserving real-time order?
//! * [`is_opaque`] — same search over *all* transactions, with aborted ones
//!   required to have read consistently but contributing no writes.
//! * [`bg_matches_history`] — cross-validation of a block graph against the
//!   history it was built from: every edge joins a genuinely conflicting
//!   committed pair, and every conflicting pair is ordered by a path.
//! * [`observe_graph_ops`] / [`linearizable`] — a brute-force linearizability
//!   check for small concurrent workouts of the graph library.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::block::GraphData;
use crate::graph::{BlockGraph, GraphError, InsertOutcome};
use crate::stm::history::{EventKind, History};
use crate::stm::{ObjId, Ts};

pub const MVSR_CAP: usize = 8;
pub const OPACITY_CAP: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{txns} transactions exceed the brute-force cap of {cap}")]
pub struct CapacityExceeded {
    pub txns: usize,
    pub cap: usize,
}

/// Per-transaction digest of a history. Live transactions are closed as
/// aborted.
#[derive(Clone, Debug)]
pub struct TxnView {
    pub ts: Ts,
    pub committed: bool,
    pub begin_seq: u64,
    pub end_seq: u64,
    pub commit_seq: Option<u64>,
    /// shared reads in program order: (seq, object, value returned)
    pub reads: Vec<(u64, ObjId, i64)>,
    pub write_keys: BTreeSet<ObjId>,
    /// last buffered value per written object — what the commit installed
    pub writes_final: BTreeMap<ObjId, i64>,
}

pub fn txn_views(h: &History) -> Vec<TxnView> {
    let mut map: BTreeMap<Ts, TxnView> = BTreeMap::new();
    for e in &h.events {
        let view = map.entry(e.ts).or_insert_with(|| TxnView {
            ts: e.ts,
            committed: false,
            begin_seq: e.seq,
            end_seq: e.seq,
            commit_seq: None,
            reads: Vec::new(),
            write_keys: BTreeSet::new(),
            writes_final: BTreeMap::new(),
        });
        view.end_seq = e.seq;
        match e.kind {
            EventKind::Begin => view.begin_seq = e.seq,
            EventKind::Read { obj, value } => view.reads.push((e.seq, obj, value)),
            EventKind::Write { obj, value } => {
                view.write_keys.insert(obj);
                view.writes_final.insert(obj, value);
            }
            EventKind::Commit => {
                view.committed = true;
                view.commit_seq = Some(e.seq);
            }
            EventKind::Abort => view.committed = false,
        }
    }
    map.into_values().collect()
}

/// Directed conflict graph over the committed transactions.
#[derive(Clone, Debug, Default)]
pub struct ConflictGraph {
    pub nodes: BTreeSet<Ts>,
    pub edges: BTreeSet<(Ts, Ts)>,
}

impl ConflictGraph {
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<Ts, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        let mut out: BTreeMap<Ts, Vec<Ts>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            *indeg.get_mut(&b).expect("edge endpoint registered") += 1;
            out.entry(a).or_default().push(b);
        }
        let mut queue: Vec<Ts> = indeg
            .iter()
            .filter(|&(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        let mut seen = 0;
        while let Some(n) = queue.pop() {
            seen += 1;
            for &m in out.get(&n).into_iter().flatten() {
                let d = indeg.get_mut(&m).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(m);
                }
            }
        }
        seen == self.nodes.len()
    }
}

/// Build the conflict graph by a per-object sweep over commits and reads.
/// An edge `k -> m` exists when `k` and `m` committed and
///   (1) `k` committed before `m` and both wrote a common object, or
///   (2) `k` committed before a read of `m` on an object `k` wrote, or
///   (3) a read of `k` preceded the commit of `m` on an object `m` wrote.
pub fn conflict_graph(h: &History) -> ConflictGraph {
    let views = txn_views(h);
    let committed: Vec<&TxnView> = views.iter().filter(|v| v.committed).collect();
    let mut g = ConflictGraph {
        nodes: committed.iter().map(|v| v.ts).collect(),
        edges: BTreeSet::new(),
    };
    // per-object writer commit positions and read positions
    let mut writers: HashMap<ObjId, Vec<(u64, Ts)>> = HashMap::new();
    let mut readers: HashMap<ObjId, Vec<(u64, Ts)>> = HashMap::new();
    for v in &committed {
        let commit = v.commit_seq.expect("committed view has a commit");
        for &obj in &v.write_keys {
            writers.entry(obj).or_default().push((commit, v.ts));
        }
        for &(seq, obj, _) in &v.reads {
            readers.entry(obj).or_default().push((seq, v.ts));
        }
    }
    for (obj, ws) in &writers {
        let mut ws = ws.clone();
        ws.sort_unstable();
        for i in 0..ws.len() {
            for j in (i + 1)..ws.len() {
                if ws[i].1 != ws[j].1 {
                    g.edges.insert((ws[i].1, ws[j].1));
                }
            }
        }
        if let Some(rs) = readers.get(obj) {
            for &(commit, wts) in &ws {
                for &(rseq, rts) in rs {
                    if wts == rts {
                        continue;
                    }
                    if commit < rseq {
                        g.edges.insert((wts, rts));
                    } else {
                        g.edges.insert((rts, wts));
                    }
                }
            }
        }
    }
    g
}

/// Conflict-serializability: acyclic conflict graph.
pub fn is_csr(h: &History) -> bool {
    conflict_graph(h).is_acyclic()
}

/// Backtracking search for a serial order of `views` in which every listed
/// transaction's reads see exactly the values it returned in the history.
/// Real-time order (complete-before-begin) is preserved; writes of aborted
/// transactions never apply.
fn exists_legal_serialization(views: &[TxnView]) -> bool {
    let n = views.len();
    if n == 0 {
        return true;
    }
    // rt_pred[i] = bitmask of views that must precede i
    let mut rt_pred = vec![0u32; n];
    for (i, a) in views.iter().enumerate() {
        for (j, b) in views.iter().enumerate() {
            if i != j && b.end_seq < a.begin_seq {
                rt_pred[i] |= 1 << j;
            }
        }
    }
    let mut state: HashMap<ObjId, i64> = HashMap::new();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    fn recurse(
        views: &[TxnView],
        rt_pred: &[u32],
        placed: u32,
        state: &mut HashMap<ObjId, i64>,
        order: &mut Vec<usize>,
    ) -> bool {
        let n = views.len();
        if order.len() == n {
            return true;
        }
        for i in 0..n {
            if placed & (1 << i) != 0 || rt_pred[i] & !placed != 0 {
                continue;
            }
            let v = &views[i];
            if v.reads
                .iter()
                .all(|&(_, obj, val)| *state.get(&obj).unwrap_or(&0) == val)
            {
                let mut saved = Vec::new();
                if v.committed {
                    for (&obj, &val) in &v.writes_final {
                        saved.push((obj, state.insert(obj, val)));
                    }
                }
                order.push(i);
                if recurse(views, rt_pred, placed | (1 << i), state, order) {
                    return true;
                }
                order.pop();
                for (obj, old) in saved.into_iter().rev() {
                    match old {
                        Some(val) => state.insert(obj, val),
                        None => state.remove(&obj),
                    };
                }
            }
        }
        false
    }
    recurse(views, &rt_pred, 0, &mut state, &mut order)
}

/// Multi-version view-serializability on a small instance: some real-time-
/// respecting permutation of the committed transactions replays every read
/// to the value it returned.
pub fn is_mvsr(h: &History, cap: usize) -> Result<bool, CapacityExceeded> {
    let views: Vec<TxnView> = txn_views(h).into_iter().filter(|v| v.committed).collect();
    if views.len() > cap {
        return Err(CapacityExceeded {
            txns: views.len(),
            cap,
        });
    }
    Ok(exists_legal_serialization(&views))
}

/// Opacity on a small instance: as [`is_mvsr`], but over all transactions —
/// aborted (and live-closed) ones must also have read a consistent snapshot,
/// while their writes never land.
pub fn is_opaque(h: &History, cap: usize) -> Result<bool, CapacityExceeded> {
    let views = txn_views(h);
    if views.len() > cap {
        return Err(CapacityExceeded {
            txns: views.len(),
            cap,
        });
    }
    Ok(exists_legal_serialization(&views))
}

/// Cross-validate a block graph against the history it was built from:
/// vertex set = committed transactions; every edge goes low-to-high and joins
/// a conflicting pair; every conflicting pair is connected by a directed
/// path. (The multi-version commit rules record a conflict against the
/// shadowed version's readers rather than every transitively ordered writer,
/// so ordering — a path — is the guarantee, not a direct edge.)
pub fn bg_matches_history(graph: &GraphData, h: &History) -> bool {
    let committed: BTreeSet<Ts> = txn_views(h)
        .into_iter()
        .filter(|v| v.committed)
        .map(|v| v.ts)
        .collect();
    let vertex_set: BTreeSet<Ts> = graph.vertices.iter().map(|&(ts, _)| ts).collect();
    if vertex_set != committed {
        return false;
    }
    let cg = conflict_graph(h);
    let conflict_pairs: BTreeSet<(Ts, Ts)> = cg
        .edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    for &(f, t) in &graph.edges {
        if f >= t || !conflict_pairs.contains(&(f, t)) {
            return false;
        }
    }
    // reachability over the DAG, vertices indexed in ascending ts order
    let index: BTreeMap<Ts, usize> = vertex_set.iter().copied().enumerate().map(|(i, ts)| (ts, i)).collect();
    let n = index.len();
    let mut reach: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(f, t) in &graph.edges {
        succ[index[&f]].push(index[&t]);
    }
    // edges only point up in ts order, so a reverse sweep closes the relation
    for i in (0..n).rev() {
        let mut r = BTreeSet::new();
        for &s in &succ[i] {
            r.insert(s);
            r.extend(reach[s].iter().copied());
        }
        reach[i] = r;
    }
    conflict_pairs
        .iter()
        .all(|&(a, b)| reach[index[&a]].contains(&index[&b]))
}

// ---------------------------------------------------------------------------
// brute-force linearizability check for the graph library
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GraphOp {
    AddVert(Ts),
    AddEdge(Ts, Ts),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GraphOpResult {
    Inserted,
    Present,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct GraphObservation {
    pub per_thread_ops: Vec<Vec<GraphOp>>,
    pub per_thread_results: Vec<Vec<GraphOpResult>>,
    pub final_vertices: BTreeSet<Ts>,
    pub final_edges: BTreeSet<(Ts, Ts)>,
}

/// Run the per-thread op sequences concurrently against a real graph and
/// record per-op results plus the final structure.
pub fn observe_graph_ops(per_thread_ops: Vec<Vec<GraphOp>>) -> GraphObservation {
    let g = BlockGraph::new();
    let barrier = std::sync::Barrier::new(per_thread_ops.len());
    let results: Vec<Vec<GraphOpResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = per_thread_ops
            .iter()
            .map(|ops| {
                let g = &g;
                let barrier = &barrier;
                scope.spawn(move || {
                    barrier.wait();
                    ops.iter()
                        .map(|op| match *op {
                            GraphOp::AddVert(ts) => match g.add_vert(ts, Some(ts)) {
                                InsertOutcome::Added => GraphOpResult::Inserted,
                                InsertOutcome::AlreadyPresent => GraphOpResult::Present,
                            },
                            GraphOp::AddEdge(f, t) => match g.add_edge(f, t) {
                                Ok(InsertOutcome::Added) => GraphOpResult::Inserted,
                                Ok(InsertOutcome::AlreadyPresent) => GraphOpResult::Present,
                                Err(GraphError::MissingVertex(_))
                                | Err(GraphError::DirectionViolation { .. }) => {
                                    GraphOpResult::Rejected
                                }
                                Err(e) => panic!("unexpected graph error: {e}"),
                            },
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    GraphObservation {
        per_thread_ops,
        per_thread_results: results,
        final_vertices: g.vertices().iter().map(|&(ts, _)| ts).collect(),
        final_edges: g.edges().iter().copied().collect(),
    }
}

/// Does some interleaving of the per-thread op sequences, applied to a
/// sequential model graph, reproduce both the observed per-op results and
/// the observed final structure?
pub fn linearizable(obs: &GraphObservation) -> bool {
    #[derive(Clone, Default)]
    struct Model {
        vertices: BTreeSet<Ts>,
        edges: BTreeSet<(Ts, Ts)>,
    }
    impl Model {
        fn apply(&mut self, op: GraphOp) -> GraphOpResult {
            match op {
                GraphOp::AddVert(ts) => {
                    if self.vertices.insert(ts) {
                        GraphOpResult::Inserted
                    } else {
                        GraphOpResult::Present
                    }
                }
                GraphOp::AddEdge(f, t) => {
                    if f >= t || !self.vertices.contains(&f) || !self.vertices.contains(&t) {
                        GraphOpResult::Rejected
                    } else if self.edges.insert((f, t)) {
                        GraphOpResult::Inserted
                    } else {
                        GraphOpResult::Present
                    }
                }
            }
        }
    }

    fn recurse(obs: &GraphObservation, cursors: &mut Vec<usize>, model: &Model) -> bool {
        let done = cursors
            .iter()
            .enumerate()
            .all(|(t, &c)| c == obs.per_thread_ops[t].len());
        if done {
            return model.vertices == obs.final_vertices && model.edges == obs.final_edges;
        }
        for t in 0..cursors.len() {
            let c = cursors[t];
            if c == obs.per_thread_ops[t].len() {
                continue;
            }
            let mut next = model.clone();
            let res = next.apply(obs.per_thread_ops[t][c]);
            if res != obs.per_thread_results[t][c] {
                continue;
            }
            cursors[t] += 1;
            if recurse(obs, cursors, &next) {
                cursors[t] -= 1;
                return true;
            }
            cursors[t] -= 1;
        }
        false
    }

    let mut cursors = vec![0; obs.per_thread_ops.len()];
    recurse(obs, &mut cursors, &Model::default())
}

#[cfg(test)]
mod tests;
