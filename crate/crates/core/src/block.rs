//! Canonical block format and hashing.
//!
//! A block is line-oriented text: header, previous-block hash, the atomic
//! units in their original list order (each with its recomputed outcome), the
//! embedded block-graph section, the final state of every shared object in
//! key order, and a SHA-256 digest over everything above the `HASH` line.
//! The rendering is byte-exact canonical, so equal blocks hash equally on any
//! platform.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contracts::{AtomicUnit, AuOp, AuOutcome, KeyTable};
use crate::graph::{BlockGraph, GraphError};
use crate::stm::Ts;

pub const GENESIS_HASH: [u8; 32] = [0; 32];

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("malformed block: {0}")]
    Parse(String),
    #[error("block hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One unit as shipped in the block: the call plus the outcome the miner
/// observed for it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockAu {
    pub unit: AtomicUnit,
    pub outcome: AuOutcome,
}

/// Vertex and edge lists of a block graph in canonical order.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GraphData {
    pub vertices: Vec<(Ts, u64)>,
    pub edges: Vec<(Ts, Ts)>,
}

impl GraphData {
    pub fn from_graph(g: &BlockGraph) -> Self {
        // serialize() asserts sortedness, edge direction and complete unit ids
        let text = g.serialize();
        Self::parse_lines(text.lines()).expect("canonical graph text")
    }

    fn parse_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Self, BlockError> {
        let mut data = GraphData::default();
        let mut expect = (0usize, 0usize);
        for (i, line) in lines.enumerate() {
            let mut f = line.split_whitespace();
            match f.next() {
                Some("BG") if i == 0 => {
                    let _v1 = f.next();
                    expect.0 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse("bad BG vertex count".into()))?;
                    expect.1 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse("bad BG edge count".into()))?;
                }
                Some("V") => {
                    let ts = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse(format!("bad V line `{line}`")))?;
                    let au = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse(format!("bad V line `{line}`")))?;
                    data.vertices.push((ts, au));
                }
                Some("E") => {
                    let from = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse(format!("bad E line `{line}`")))?;
                    let to = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse(format!("bad E line `{line}`")))?;
                    data.edges.push((from, to));
                }
                _ => return Err(BlockError::Parse(format!("unexpected BG line `{line}`"))),
            }
        }
        if data.vertices.len() != expect.0 || data.edges.len() != expect.1 {
            return Err(BlockError::Parse("BG counts do not match header".into()));
        }
        Ok(data)
    }

    /// The embedded `BG` section, identical to [`BlockGraph::serialize`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "BG v1 {} {}", self.vertices.len(), self.edges.len()).unwrap();
        for (ts, au) in &self.vertices {
            writeln!(out, "V {ts} {au}").unwrap();
        }
        for (f, t) in &self.edges {
            writeln!(out, "E {f} {t}").unwrap();
        }
        out
    }

    /// Rebuild a claimable graph, re-verifying order, direction and counts.
    pub fn build(&self) -> Result<BlockGraph, GraphError> {
        BlockGraph::deserialize(&self.render())
    }
}

/// A proposed block: unit list, dependency graph, final state, hash chain.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub prev_hash: [u8; 32],
    pub aus: Vec<BlockAu>,
    pub graph: GraphData,
    pub final_state: BTreeMap<String, i64>,
    pub hash: [u8; 32],
}

impl Block {
    /// Build a block and seal it with the digest of its canonical body.
    pub fn assemble(
        prev_hash: [u8; 32],
        aus: Vec<BlockAu>,
        graph: GraphData,
        final_state: BTreeMap<String, i64>,
    ) -> Block {
        let mut b = Block {
            prev_hash,
            aus,
            graph,
            final_state,
            hash: [0; 32],
        };
        b.hash = compute_hash(&b.body());
        b
    }

    fn body(&self) -> String {
        let mut out = String::new();
        out.push_str("BLOCK v1\n");
        writeln!(out, "PREV {}", hex(&self.prev_hash)).unwrap();
        writeln!(out, "NAUS {}", self.aus.len()).unwrap();
        for bau in &self.aus {
            let u = &bau.unit;
            write!(out, "AU {} {} {} {}", u.id, u.op.contract_tag(), u.op.method(), u.burn).unwrap();
            for p in u.op.params() {
                write!(out, " {p}").unwrap();
            }
            writeln!(out, " {}", bau.outcome).unwrap();
        }
        out.push_str(&self.graph.render());
        for (k, v) in &self.final_state {
            writeln!(out, "STATE {k} {v}").unwrap();
        }
        out
    }

    /// Full canonical text including the sealing `HASH` line.
    pub fn to_text(&self) -> String {
        let mut out = self.body();
        writeln!(out, "HASH {}", hex(&self.hash)).unwrap();
        out
    }

    /// Parse and verify: the stored hash must match the recomputed digest and
    /// the embedded graph must pass integrity checks.
    pub fn from_text(text: &str) -> Result<Block, BlockError> {
        let mut prev_hash = None;
        let mut naus: Option<usize> = None;
        let mut aus = Vec::new();
        let mut bg_lines: Vec<&str> = Vec::new();
        let mut final_state = BTreeMap::new();
        let mut stored_hash = None;
        let mut saw_header = false;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            match f.next() {
                Some("BLOCK") => {
                    if f.next() != Some("v1") {
                        return Err(BlockError::Parse("unsupported block version".into()));
                    }
                    saw_header = true;
                }
                Some("PREV") => {
                    let h = f.next().ok_or_else(|| BlockError::Parse("bad PREV".into()))?;
                    prev_hash = Some(unhex(h).ok_or_else(|| BlockError::Parse("bad PREV hex".into()))?);
                }
                Some("NAUS") => {
                    naus = Some(
                        f.next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| BlockError::Parse("bad NAUS".into()))?,
                    );
                }
                Some("AU") => {
                    let toks: Vec<&str> = f.collect();
                    if toks.len() < 5 {
                        return Err(BlockError::Parse(format!("short AU line `{line}`")));
                    }
                    let id: u64 = toks[0]
                        .parse()
                        .map_err(|_| BlockError::Parse(format!("bad AU id in `{line}`")))?;
                    let contract = toks[1];
                    let method = toks[2];
                    let burn: u32 = toks[3]
                        .parse()
                        .map_err(|_| BlockError::Parse(format!("bad AU burn in `{line}`")))?;
                    let outcome: AuOutcome = toks[toks.len() - 1]
                        .parse()
                        .map_err(BlockError::Parse)?;
                    let params: Vec<i64> = toks[4..toks.len() - 1]
                        .iter()
                        .map(|t| t.parse::<i64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| BlockError::Parse(format!("bad AU params in `{line}`")))?;
                    let op = AuOp::from_parts(contract, method, &params).map_err(BlockError::Parse)?;
                    aus.push(BlockAu {
                        unit: AtomicUnit { id, op, burn },
                        outcome,
                    });
                }
                Some("BG") | Some("V") | Some("E") => bg_lines.push(line),
                Some("STATE") => {
                    let k = f
                        .next()
                        .ok_or_else(|| BlockError::Parse("bad STATE line".into()))?;
                    let v: i64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| BlockError::Parse(format!("bad STATE line `{line}`")))?;
                    final_state.insert(k.to_string(), v);
                }
                Some("HASH") => {
                    let h = f.next().ok_or_else(|| BlockError::Parse("bad HASH".into()))?;
                    stored_hash =
                        Some(unhex(h).ok_or_else(|| BlockError::Parse("bad HASH hex".into()))?);
                }
                Some(other) => return Err(BlockError::Parse(format!("unknown line tag `{other}`"))),
                None => {}
            }
        }
        if !saw_header {
            return Err(BlockError::Parse("missing BLOCK header".into()));
        }
        let prev_hash = prev_hash.ok_or_else(|| BlockError::Parse("missing PREV".into()))?;
        let naus = naus.ok_or_else(|| BlockError::Parse("missing NAUS".into()))?;
        if aus.len() != naus {
            return Err(BlockError::Parse(format!(
                "NAUS {naus} but {} AU lines",
                aus.len()
            )));
        }
        let graph = GraphData::parse_lines(bg_lines.into_iter())?;
        let stored = stored_hash.ok_or_else(|| BlockError::Parse("missing HASH".into()))?;
        let block = Block {
            prev_hash,
            aus,
            graph,
            final_state,
            hash: stored,
        };
        let computed = compute_hash(&block.body());
        if computed != stored {
            return Err(BlockError::HashMismatch {
                stored: hex(&stored),
                computed: hex(&computed),
            });
        }
        block.graph.build()?; // integrity: order, direction, counts
        Ok(block)
    }

    /// Key table reconstructed from the block's own state section.
    pub fn key_table(&self) -> KeyTable {
        KeyTable::new(self.final_state.keys().cloned().collect())
    }

    pub fn unit_by_id(&self, id: u64) -> Option<&BlockAu> {
        self.aus.iter().find(|b| b.unit.id == id)
    }
}

pub fn compute_hash(body: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    hasher.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}
