//! Lock-free block graph: an adjacency-list DAG over committed transactions.
//!
//! Vertices live in a singly linked list sorted by ascending timestamp
//! between two sentinels; each vertex owns an edge list, also sorted and
//! sentinel-bounded, holding its outgoing conflict edges. Every edge points
//! from the lower to the higher timestamp, so the graph is acyclic by
//! construction. Insertion never latches anything: both lists are grown with
//! a compare-and-swap on the predecessor link, retrying from the predecessor
//! on failure. Nodes are never unlinked during a run, which is what makes
//! concurrent traversal safe without a reclamation scheme.
//!
//! Miner threads only insert ([`BlockGraph::add_vert`],
//! [`BlockGraph::add_edge`], [`BlockGraph::build_from_conflicts`]); validator
//! threads only claim and drain ([`BlockGraph::search_local`],
//! [`BlockGraph::search_global`], [`BlockGraph::dec_in_count`]). The two
//! phases never overlap on one graph instance: a validator rebuilds the graph
//! from its serialized form.
//!
//! A vertex is claimed by swinging its indegree counter from 0 to -1; the
//! counter can only be decremented while it is positive, so every vertex is
//! claimed exactly once per validation pass.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ptr;
use std::sync::atomic::{AtomicI64, AtomicPtr, AtomicU64, Ordering};

use thiserror::Error;

use crate::stm::Ts;

/// Unit id of a vertex created on behalf of a conflicting transaction whose
/// own worker has not registered it yet. Replaced when the owner arrives;
/// none may remain once mining is done.
pub const PLACEHOLDER_AU: u64 = u64::MAX;

const HEAD_TS: Ts = Ts::MIN;
const TAIL_TS: Ts = Ts::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InsertOutcome {
    Added,
    AlreadyPresent,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {0} is not in the graph")]
    MissingVertex(Ts),
    #[error("edge {from} -> {to} violates the low-to-high timestamp rule")]
    DirectionViolation { from: Ts, to: Ts },
    #[error("malformed graph text: {0}")]
    Parse(String),
    #[error("graph integrity: {0}")]
    Integrity(String),
}

pub struct VertexNode {
    ts: Ts,
    au_id: AtomicU64,
    in_cnt: AtomicI64,
    v_next: AtomicPtr<VertexNode>,
    e_head: *mut EdgeNode,
    e_tail: *mut EdgeNode,
}

struct EdgeNode {
    ts: Ts,
    vref: *const VertexNode,
    e_next: AtomicPtr<EdgeNode>,
}

impl VertexNode {
    fn alloc(ts: Ts, au_id: u64) -> *mut VertexNode {
        let e_tail = Box::into_raw(Box::new(EdgeNode {
            ts: TAIL_TS,
            vref: ptr::null(),
            e_next: AtomicPtr::new(ptr::null_mut()),
        }));
        let e_head = Box::into_raw(Box::new(EdgeNode {
            ts: HEAD_TS,
            vref: ptr::null(),
            e_next: AtomicPtr::new(e_tail),
        }));
        Box::into_raw(Box::new(VertexNode {
            ts,
            au_id: AtomicU64::new(au_id),
            in_cnt: AtomicI64::new(0),
            v_next: AtomicPtr::new(ptr::null_mut()),
            e_head,
            e_tail,
        }))
    }
}

/// Borrow of a live vertex. Valid for the lifetime of the graph; fine to copy
/// into thread-local cache lists or send to worker threads.
#[derive(Clone, Copy)]
pub struct NodeHandle<'g> {
    node: &'g VertexNode,
}

unsafe impl Send for NodeHandle<'_> {}

impl NodeHandle<'_> {
    pub fn ts(&self) -> Ts {
        self.node.ts
    }

    pub fn au_id(&self) -> u64 {
        self.node.au_id.load(Ordering::Acquire)
    }

    pub fn in_cnt(&self) -> i64 {
        self.node.in_cnt.load(Ordering::Acquire)
    }
}

impl std::fmt::Debug for NodeHandle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeHandle")
            .field("ts", &self.ts())
            .field("au_id", &self.au_id())
            .field("in_cnt", &self.in_cnt())
            .finish()
    }
}

pub struct BlockGraph {
    head: *mut VertexNode,
    tail: *mut VertexNode,
    vertex_count: AtomicU64,
    edge_count: AtomicU64,
    /// Number of vertices claimed by a validator pass so far.
    completed: AtomicU64,
}

unsafe impl Send for BlockGraph {}
unsafe impl Sync for BlockGraph {}

impl Default for BlockGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockGraph {
    pub fn new() -> Self {
        let tail = VertexNode::alloc(TAIL_TS, PLACEHOLDER_AU);
        let head = VertexNode::alloc(HEAD_TS, PLACEHOLDER_AU);
        unsafe {
            (*head).v_next.store(tail, Ordering::Relaxed);
        }
        BlockGraph {
            head,
            tail,
            vertex_count: AtomicU64::new(0),
            edge_count: AtomicU64::new(0),
            completed: AtomicU64::new(0),
        }
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertex_count.load(Ordering::Acquire)
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count.load(Ordering::Acquire)
    }

    pub fn completed(&self) -> u64 {
        self.completed.load(Ordering::Acquire)
    }

    /// (pred, curr) with pred.ts < ts <= curr.ts, starting from `start`.
    /// `start.ts` must be below `ts`; the head sentinel always qualifies.
    fn locate_vertex(
        &self,
        start: *const VertexNode,
        ts: Ts,
    ) -> (*const VertexNode, *const VertexNode) {
        unsafe {
            let mut pred = start;
            let mut curr = (*pred).v_next.load(Ordering::Acquire) as *const VertexNode;
            while (*curr).ts < ts {
                pred = curr;
                curr = (*curr).v_next.load(Ordering::Acquire);
            }
            (pred, curr)
        }
    }

    fn find_vertex(&self, ts: Ts) -> Option<*const VertexNode> {
        let (_, curr) = self.locate_vertex(self.head, ts);
        unsafe {
            if (*curr).ts == ts {
                Some(curr)
            } else {
                None
            }
        }
    }

    /// Insert a vertex at its sorted position via CAS on the predecessor
    /// link, retrying from the predecessor on contention. Idempotent: a
    /// second insertion of the same timestamp reports `AlreadyPresent` and,
    /// when a real unit id is supplied, fills in a placeholder left by a
    /// conflicting transaction's worker.
    pub fn add_vert(&self, ts: Ts, au_id: Option<u64>) -> InsertOutcome {
        assert!(
            ts > HEAD_TS && ts < TAIL_TS,
            "vertex timestamp out of domain: {ts}"
        );
        let mut new_node: *mut VertexNode = ptr::null_mut();
        let (mut pred, mut curr) = self.locate_vertex(self.head, ts);
        loop {
            unsafe {
                if (*curr).ts == ts {
                    if let Some(id) = au_id {
                        let _ = (*curr).au_id.compare_exchange(
                            PLACEHOLDER_AU,
                            id,
                            Ordering::AcqRel,
                            Ordering::Relaxed,
                        );
                    }
                    if !new_node.is_null() {
                        free_vertex(new_node);
                    }
                    return InsertOutcome::AlreadyPresent;
                }
                if new_node.is_null() {
                    new_node = VertexNode::alloc(ts, au_id.unwrap_or(PLACEHOLDER_AU));
                }
                (*new_node).v_next.store(curr as *mut _, Ordering::Relaxed);
                match (*pred).v_next.compare_exchange(
                    curr as *mut _,
                    new_node,
                    Ordering::Release,
                    Ordering::Acquire,
                ) {
                    Ok(_) => {
                        self.vertex_count.fetch_add(1, Ordering::AcqRel);
                        return InsertOutcome::Added;
                    }
                    Err(_) => {
                        let (p, c) = self.locate_vertex(pred, ts);
                        pred = p;
                        curr = c;
                    }
                }
            }
        }
    }

    /// Insert the edge `from -> to` into `from`'s sorted edge list. The first
    /// physical insertion atomically increments the target's indegree, so
    /// duplicate conflict reports are harmless. Both endpoints must already
    /// be vertices and the edge must go from lower to higher timestamp.
    pub fn add_edge(&self, from: Ts, to: Ts) -> Result<InsertOutcome, GraphError> {
        if from >= to {
            return Err(GraphError::DirectionViolation { from, to });
        }
        let from_node = self
            .find_vertex(from)
            .ok_or(GraphError::MissingVertex(from))?;
        let to_node = self.find_vertex(to).ok_or(GraphError::MissingVertex(to))?;
        unsafe {
            let mut new_edge: *mut EdgeNode = ptr::null_mut();
            let (mut pred, mut curr) = locate_edge((*from_node).e_head, to);
            loop {
                if (*curr).ts == to {
                    if !new_edge.is_null() {
                        drop(Box::from_raw(new_edge));
                    }
                    return Ok(InsertOutcome::AlreadyPresent);
                }
                if new_edge.is_null() {
                    new_edge = Box::into_raw(Box::new(EdgeNode {
                        ts: to,
                        vref: to_node,
                        e_next: AtomicPtr::new(ptr::null_mut()),
                    }));
                }
                (*new_edge).e_next.store(curr as *mut _, Ordering::Relaxed);
                match (*pred).e_next.compare_exchange(
                    curr as *mut _,
                    new_edge,
                    Ordering::Release,
                    Ordering::Acquire,
                ) {
                    Ok(_) => {
                        (*to_node).in_cnt.fetch_add(1, Ordering::AcqRel);
                        self.edge_count.fetch_add(1, Ordering::AcqRel);
                        return Ok(InsertOutcome::Added);
                    }
                    Err(_) => {
                        let (p, c) = locate_edge(pred as *mut _, to);
                        pred = p;
                        curr = c;
                    }
                }
            }
        }
    }

    /// Register a committed transaction and one edge per conflicting
    /// transaction, oriented low-to-high. Conflicting vertices that are not
    /// registered yet are created with a placeholder unit id; their own
    /// workers fill it in.
    pub fn build_from_conflicts(&self, ts: Ts, au_id: u64, conflicts: impl IntoIterator<Item = Ts>) {
        self.add_vert(ts, Some(au_id));
        for j in conflicts {
            debug_assert_ne!(j, ts, "transaction conflicting with itself");
            self.add_vert(j, None);
            let (from, to) = if j < ts { (j, ts) } else { (ts, j) };
            self.add_edge(from, to)
                .expect("conflict edge endpoints were just inserted");
        }
    }

    /// Try to claim a node from the caller's cache list: CAS its indegree
    /// from 0 to -1. On success the caller owns the node and the completion
    /// counter is bumped.
    pub fn search_local<'g>(&'g self, node: NodeHandle<'g>) -> Option<NodeHandle<'g>> {
        if node
            .node
            .in_cnt
            .compare_exchange(0, -1, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
        {
            self.completed.fetch_add(1, Ordering::AcqRel);
            Some(node)
        } else {
            None
        }
    }

    /// Scan the vertex list from the head and claim the first source node
    /// (indegree 0). `None` when no node is currently claimable.
    pub fn search_global(&self) -> Option<NodeHandle<'_>> {
        unsafe {
            let mut node = (*self.head).v_next.load(Ordering::Acquire) as *const VertexNode;
            while !std::ptr::eq(node, self.tail) {
                if (*node)
                    .in_cnt
                    .compare_exchange(0, -1, Ordering::AcqRel, Ordering::Relaxed)
                    .is_ok()
                {
                    self.completed.fetch_add(1, Ordering::AcqRel);
                    return Some(NodeHandle { node: &*node });
                }
                node = (*node).v_next.load(Ordering::Acquire);
            }
            None
        }
    }

    /// Walk the outgoing edges of a node the caller owns, atomically
    /// decrementing each target's indegree. Targets that reach zero are
    /// appended to the caller's cache list. A decrement must always hit a
    /// positive counter: all incoming edges are drained before a node can be
    /// claimed, so decrementing a claimed (-1) node would be a graph bug.
    pub fn dec_in_count<'g>(&'g self, node: NodeHandle<'g>, cache: &mut Vec<NodeHandle<'g>>) {
        unsafe {
            let mut e = (*node.node.e_head).e_next.load(Ordering::Acquire) as *const EdgeNode;
            while !std::ptr::eq(e, node.node.e_tail) {
                let target = (*e).vref;
                let old = (*target).in_cnt.fetch_sub(1, Ordering::AcqRel);
                assert!(
                    old >= 1,
                    "indegree of vertex {} went below zero or was claimed",
                    (*target).ts
                );
                if old == 1 {
                    cache.push(NodeHandle { node: &*target });
                }
                e = (*e).e_next.load(Ordering::Acquire);
            }
        }
    }

    /// Handles to all current vertices in ascending timestamp order.
    pub fn vertices_handles(&self) -> Vec<NodeHandle<'_>> {
        let mut out = Vec::new();
        unsafe {
            let mut v = (*self.head).v_next.load(Ordering::Acquire) as *const VertexNode;
            while !std::ptr::eq(v, self.tail) {
                out.push(NodeHandle { node: &*v });
                v = (*v).v_next.load(Ordering::Acquire);
            }
        }
        out
    }

    /// Quiescent snapshot of `(ts, au_id)` pairs in ascending timestamp order.
    pub fn vertices(&self) -> Vec<(Ts, u64)> {
        let mut out = Vec::new();
        unsafe {
            let mut v = (*self.head).v_next.load(Ordering::Acquire) as *const VertexNode;
            while !std::ptr::eq(v, self.tail) {
                out.push(((*v).ts, (*v).au_id.load(Ordering::Acquire)));
                v = (*v).v_next.load(Ordering::Acquire);
            }
        }
        out
    }

    /// Quiescent snapshot of edges in ascending `(from, to)` order.
    pub fn edges(&self) -> Vec<(Ts, Ts)> {
        let mut out = Vec::new();
        unsafe {
            let mut v = (*self.head).v_next.load(Ordering::Acquire) as *const VertexNode;
            while !std::ptr::eq(v, self.tail) {
                let mut e = (*(*v).e_head).e_next.load(Ordering::Acquire) as *const EdgeNode;
                while !std::ptr::eq(e, (*v).e_tail) {
                    out.push(((*v).ts, (*e).ts));
                    e = (*e).e_next.load(Ordering::Acquire);
                }
                v = (*v).v_next.load(Ordering::Acquire);
            }
        }
        out
    }

    /// Quiescent snapshot of `(ts, indegree)` pairs, ascending by timestamp.
    pub fn in_degrees(&self) -> Vec<(Ts, i64)> {
        let mut out = Vec::new();
        unsafe {
            let mut v = (*self.head).v_next.load(Ordering::Acquire) as *const VertexNode;
            while !std::ptr::eq(v, self.tail) {
                out.push(((*v).ts, (*v).in_cnt.load(Ordering::Acquire)));
                v = (*v).v_next.load(Ordering::Acquire);
            }
        }
        out
    }

    /// Canonical text form: a header with the counts, one `V` line per vertex
    /// in ascending timestamp order, one `E` line per edge in ascending
    /// `(from, to)` order. Asserts sortedness, edge direction and that no
    /// placeholder unit ids remain.
    pub fn serialize(&self) -> String {
        let verts = self.vertices();
        let edges = self.edges();
        assert!(
            verts.windows(2).all(|w| w[0].0 < w[1].0),
            "vertex list not strictly ascending"
        );
        assert!(
            edges.iter().all(|&(f, t)| f < t),
            "edge violating low-to-high rule"
        );
        assert!(
            verts.iter().all(|&(_, au)| au != PLACEHOLDER_AU),
            "placeholder unit id survived mining"
        );
        let mut out = String::new();
        writeln!(out, "BG v1 {} {}", verts.len(), edges.len()).unwrap();
        for (ts, au) in &verts {
            writeln!(out, "V {ts} {au}").unwrap();
        }
        for (f, t) in &edges {
            writeln!(out, "E {f} {t}").unwrap();
        }
        out
    }

    /// Rebuild a graph from its canonical text form, re-verifying counts,
    /// ordering, edge direction (which is what rules out cycles) and endpoint
    /// existence.
    pub fn deserialize(text: &str) -> Result<BlockGraph, GraphError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse("empty graph text".into()))?;
        let mut f = header.split_whitespace();
        if f.next() != Some("BG") || f.next() != Some("v1") {
            return Err(GraphError::Parse(format!("bad graph header `{header}`")));
        }
        let nverts: u64 = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GraphError::Parse("bad vertex count".into()))?;
        let nedges: u64 = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GraphError::Parse("bad edge count".into()))?;
        let g = BlockGraph::new();
        let mut last_ts = HEAD_TS;
        let mut last_edge: Option<(Ts, Ts)> = None;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            match f.next() {
                Some("V") => {
                    let ts: Ts = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GraphError::Parse(format!("bad vertex line `{line}`")))?;
                    let au: u64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GraphError::Parse(format!("bad vertex line `{line}`")))?;
                    if ts <= last_ts {
                        return Err(GraphError::Integrity(format!("vertex {ts} out of order")));
                    }
                    last_ts = ts;
                    g.add_vert(ts, Some(au));
                }
                Some("E") => {
                    let from: Ts = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GraphError::Parse(format!("bad edge line `{line}`")))?;
                    let to: Ts = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GraphError::Parse(format!("bad edge line `{line}`")))?;
                    let edge = (from, to);
                    if let Some(prev) = last_edge {
                        if edge <= prev {
                            return Err(GraphError::Integrity(format!(
                                "edge {from} -> {to} out of canonical order"
                            )));
                        }
                    }
                    last_edge = Some(edge);
                    match g.add_edge(from, to) {
                        Ok(InsertOutcome::Added) => {}
                        Ok(InsertOutcome::AlreadyPresent) => {
                            return Err(GraphError::Integrity(format!(
                                "duplicate edge {from} -> {to}"
                            )))
                        }
                        Err(GraphError::DirectionViolation { from, to }) => {
                            return Err(GraphError::Integrity(format!(
                                "edge {from} -> {to} would close a cycle"
                            )))
                        }
                        Err(e) => return Err(e),
                    }
                }
                Some(other) => return Err(GraphError::Parse(format!("unknown line tag `{other}`"))),
                None => {}
            }
        }
        if g.vertex_count() != nverts || g.edge_count() != nedges {
            return Err(GraphError::Integrity(format!(
                "counts do not match header: {} vertices, {} edges",
                g.vertex_count(),
                g.edge_count()
            )));
        }
        Ok(g)
    }

    #[cfg(test)]
    pub(crate) fn force_in_cnt(&self, ts: Ts, value: i64) {
        let v = self.find_vertex(ts).expect("vertex present");
        unsafe {
            (*v).in_cnt.store(value, Ordering::SeqCst);
        }
    }
}

/// (pred, curr) within an edge list with pred.ts < ts <= curr.ts.
unsafe fn locate_edge(start: *mut EdgeNode, ts: Ts) -> (*const EdgeNode, *const EdgeNode) {
    let mut pred = start as *const EdgeNode;
    let mut curr = (*pred).e_next.load(Ordering::Acquire) as *const EdgeNode;
    while (*curr).ts < ts {
        pred = curr;
        curr = (*curr).e_next.load(Ordering::Acquire);
    }
    (pred, curr)
}

unsafe fn free_vertex(v: *mut VertexNode) {
    let mut e = (*v).e_head;
    while !e.is_null() {
        let next = (*e).e_next.load(Ordering::Relaxed);
        drop(Box::from_raw(e));
        e = next;
    }
    drop(Box::from_raw(v));
}

impl Drop for BlockGraph {
    fn drop(&mut self) {
        unsafe {
            let mut v = self.head;
            while !v.is_null() {
                let next = (*v).v_next.load(Ordering::Relaxed);
                free_vertex(v);
                v = next;
            }
        }
    }
}

/// Timestamps of current source nodes (indegree zero, unclaimed).
pub fn source_timestamps(g: &BlockGraph) -> BTreeSet<Ts> {
    g.in_degrees()
        .into_iter()
        .filter(|&(_, d)| d == 0)
        .map(|(ts, _)| ts)
        .collect()
}

#[cfg(test)]
mod tests;
