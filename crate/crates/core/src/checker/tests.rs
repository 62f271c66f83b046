use std::collections::BTreeSet;

use super::*;
use crate::block::GENESIS_HASH;
use crate::contracts::{generate, ContractKind, WorkloadSpec};
use crate::miner::{mine_concurrent, mine_serial, MinerConfig};
use crate::stm::history::{Event, EventKind, History};
use crate::stm::{Protocol, Stm};

fn x() -> ObjId {
    ObjId(0)
}
fn y() -> ObjId {
    ObjId(1)
}

fn hist(events: Vec<(Ts, EventKind)>) -> History {
    let events = events
        .into_iter()
        .enumerate()
        .map(|(i, (ts, kind))| Event {
            seq: i as u64,
            thread: 0,
            ts,
            kind,
        })
        .collect();
    History::new(events, vec!["k0".into(), "k1".into()])
}

fn b(ts: Ts) -> (Ts, EventKind) {
    (ts, EventKind::Begin)
}
fn r(ts: Ts, obj: ObjId, value: i64) -> (Ts, EventKind) {
    (ts, EventKind::Read { obj, value })
}
fn w(ts: Ts, obj: ObjId, value: i64) -> (Ts, EventKind) {
    (ts, EventKind::Write { obj, value })
}
fn c(ts: Ts) -> (Ts, EventKind) {
    (ts, EventKind::Commit)
}
fn a(ts: Ts) -> (Ts, EventKind) {
    (ts, EventKind::Abort)
}

/// Independent oracle: O(n^2 * ops) scan over all ordered committed pairs.
fn brute_force_conflict_edges(h: &History) -> BTreeSet<(Ts, Ts)> {
    let views: Vec<TxnView> = txn_views(h).into_iter().filter(|v| v.committed).collect();
    let mut edges = BTreeSet::new();
    for p in &views {
        for q in &views {
            if p.ts == q.ts {
                continue;
            }
            let pc = p.commit_seq.unwrap();
            let qc = q.commit_seq.unwrap();
            let ww = pc < qc && p.write_keys.intersection(&q.write_keys).next().is_some();
            let wr = q
                .reads
                .iter()
                .any(|&(seq, obj, _)| p.write_keys.contains(&obj) && pc < seq);
            let rw = p
                .reads
                .iter()
                .any(|&(seq, obj, _)| q.write_keys.contains(&obj) && seq < qc);
            if ww || wr || rw {
                edges.insert((p.ts, q.ts));
            }
        }
    }
    edges
}

#[test]
fn disjoint_transactions_have_no_edges() {
    let h = hist(vec![
        b(1),
        r(1, x(), 0),
        w(1, x(), 5),
        c(1),
        b(2),
        r(2, y(), 0),
        w(2, y(), 7),
        c(2),
    ]);
    assert!(conflict_graph(&h).edges.is_empty());
}

#[test]
fn committed_write_then_read_makes_an_edge() {
    let h = hist(vec![b(1), w(1, x(), 5), c(1), b(2), r(2, x(), 5), c(2)]);
    let g = conflict_graph(&h);
    assert_eq!(g.edges, BTreeSet::from([(1, 2)]));
}

#[test]
fn sweep_matches_brute_force_on_recorded_histories() {
    for seed in 0..12 {
        let workload = generate(&WorkloadSpec {
            contract: ContractKind::Mixed,
            n_aus: 20,
            n_objects: 5,
            seed,
            burn: 0,
        });
        let mined = mine_concurrent(
            &MinerConfig::new(4, Protocol::Bto).recording(),
            &workload.aus,
            &workload.keys,
            GENESIS_HASH,
        )
        .unwrap();
        let h = mined.history.unwrap();
        assert_eq!(
            conflict_graph(&h).edges,
            brute_force_conflict_edges(&h),
            "seed {seed}"
        );
    }
}

#[test]
fn serial_history_is_csr() {
    let w = generate(&WorkloadSpec {
        contract: ContractKind::Coin,
        n_aus: 30,
        n_objects: 5,
        seed: 1,
        burn: 0,
    });
    let (_, h) = mine_serial(&w.aus, &w.keys, GENESIS_HASH);
    assert!(is_csr(&h));
}

#[test]
fn lost_update_interleaving_is_not_csr() {
    // both read x, then both commit writes to x: a cycle
    let h = hist(vec![
        b(1),
        b(2),
        r(1, x(), 0),
        r(2, x(), 0),
        w(1, x(), 1),
        w(2, x(), 2),
        c(1),
        c(2),
    ]);
    assert!(!is_csr(&h));
}

#[test]
fn serial_history_is_mvsr_with_its_own_order() {
    let h = hist(vec![
        b(1),
        w(1, x(), 5),
        c(1),
        b(2),
        r(2, x(), 5),
        w(2, y(), 1),
        c(2),
    ]);
    assert_eq!(is_mvsr(&h, MVSR_CAP), Ok(true));
}

#[test]
fn recorded_mvto_histories_are_mvsr() {
    for seed in 0..10 {
        let w = generate(&WorkloadSpec {
            contract: ContractKind::Coin,
            n_aus: 7,
            n_objects: 2,
            seed,
            burn: 0,
        });
        let mined = mine_concurrent(
            &MinerConfig::new(3, Protocol::Mvto).recording(),
            &w.aus,
            &w.keys,
            GENESIS_HASH,
        )
        .unwrap();
        assert_eq!(is_mvsr(&mined.history.unwrap(), MVSR_CAP), Ok(true), "seed {seed}");
    }
}

#[test]
fn mutually_unsatisfiable_reads_are_not_mvsr() {
    // T1 reads y from T2's write; T2 reads x from T1's write — no serial
    // order satisfies both (the exhaustive 2-permutation check fails).
    let h = hist(vec![
        b(1),
        b(2),
        r(1, y(), 7),
        r(2, x(), 5),
        w(1, x(), 5),
        w(2, y(), 7),
        c(1),
        c(2),
    ]);
    assert_eq!(is_mvsr(&h, MVSR_CAP), Ok(false));
}

#[test]
fn mvsr_capacity_is_enforced() {
    let mut events = Vec::new();
    for ts in 1..=9 {
        events.push(b(ts));
        events.push(c(ts));
    }
    let h = hist(events);
    assert_eq!(
        is_mvsr(&h, MVSR_CAP),
        Err(CapacityExceeded { txns: 9, cap: 8 })
    );
}

#[test]
fn single_committed_transaction_is_opaque() {
    let h = hist(vec![b(1), r(1, x(), 0), w(1, x(), 3), c(1)]);
    assert_eq!(is_opaque(&h, OPACITY_CAP), Ok(true));
}

#[test]
fn aborted_reader_with_consistent_snapshot_is_opaque() {
    // a real BTO run: the aborted transaction read only committed state
    let stm = Stm::init(["x", "y"], Protocol::Bto).unwrap().with_recorder();
    let xo = stm.object_id("x").unwrap();
    let mut t1 = stm.begin();
    let mut t2 = stm.begin();
    stm.write(&mut t2, xo, 7);
    stm.try_commit(&mut t2).unwrap();
    assert!(stm.read(&mut t1, xo).is_err()); // forced abort
    let mut t3 = stm.begin();
    stm.read(&mut t3, xo).unwrap();
    stm.try_commit(&mut t3).unwrap();
    let h = stm.history().unwrap();
    assert_eq!(is_opaque(&h, OPACITY_CAP), Ok(true));
}

#[test]
fn aborted_reader_with_inconsistent_snapshot_is_not_opaque() {
    // T3 saw x from T1 but y from T2: no serial point observes that mix
    let h = hist(vec![
        b(1),
        w(1, x(), 1),
        w(1, y(), 1),
        c(1),
        b(2),
        w(2, x(), 2),
        w(2, y(), 2),
        c(2),
        b(3),
        r(3, x(), 1),
        r(3, y(), 2),
        a(3),
    ]);
    assert_eq!(is_opaque(&h, OPACITY_CAP), Ok(false));
}

#[test]
fn live_transaction_is_closed_as_aborted() {
    let h = hist(vec![b(1), w(1, x(), 5), c(1), b(2), r(2, x(), 5)]);
    let views = txn_views(&h);
    assert_eq!(views.len(), 2);
    assert!(!views[1].committed);
    assert_eq!(is_opaque(&h, OPACITY_CAP), Ok(true));
}

#[test]
fn csr_implies_mvsr_on_small_instances() {
    for seed in 20..28 {
        let w = generate(&WorkloadSpec {
            contract: ContractKind::Mixed,
            n_aus: 6,
            n_objects: 3,
            seed,
            burn: 0,
        });
        let mined = mine_concurrent(
            &MinerConfig::new(3, Protocol::Bto).recording(),
            &w.aus,
            &w.keys,
            GENESIS_HASH,
        )
        .unwrap();
        let h = mined.history.unwrap();
        if is_csr(&h) {
            assert_eq!(is_mvsr(&h, MVSR_CAP), Ok(true), "seed {seed}");
        }
    }
}

#[test]
fn opaque_implies_committed_projection_mvsr() {
    for seed in 40..46 {
        let w = generate(&WorkloadSpec {
            contract: ContractKind::Coin,
            n_aus: 4,
            n_objects: 1,
            seed,
            burn: 0,
        });
        let mined = mine_concurrent(
            &MinerConfig::new(2, Protocol::Bto).recording(),
            &w.aus,
            &w.keys,
            GENESIS_HASH,
        )
        .unwrap();
        let h = mined.history.unwrap();
        if txn_views(&h).len() <= OPACITY_CAP && is_opaque(&h, OPACITY_CAP) == Ok(true) {
            assert_eq!(is_mvsr(&h, MVSR_CAP), Ok(true), "seed {seed}");
        }
    }
}

#[test]
fn empty_history_matches_empty_graph() {
    let h = History::new(Vec::new(), Vec::new());
    assert!(bg_matches_history(&GraphData::default(), &h));
}

#[test]
fn single_conflicting_pair_requires_exactly_one_edge() {
    let h = hist(vec![b(1), w(1, x(), 5), c(1), b(2), r(2, x(), 5), c(2)]);
    let with_edge = GraphData {
        vertices: vec![(1, 0), (2, 1)],
        edges: vec![(1, 2)],
    };
    assert!(bg_matches_history(&with_edge, &h));
    let missing_edge = GraphData {
        vertices: vec![(1, 0), (2, 1)],
        edges: vec![],
    };
    assert!(!bg_matches_history(&missing_edge, &h));
    let spurious_vertex = GraphData {
        vertices: vec![(1, 0), (2, 1), (3, 2)],
        edges: vec![(1, 2)],
    };
    assert!(!bg_matches_history(&spurious_vertex, &h));
}

#[test]
fn spurious_edge_between_nonconflicting_pair_is_rejected() {
    let h = hist(vec![
        b(1),
        w(1, x(), 5),
        c(1),
        b(2),
        w(2, y(), 7),
        c(2),
    ]);
    let g = GraphData {
        vertices: vec![(1, 0), (2, 1)],
        edges: vec![(1, 2)],
    };
    assert!(!bg_matches_history(&g, &h));
}

#[test]
fn mined_graphs_match_their_histories() {
    for (protocol, seed) in [(Protocol::Bto, 7), (Protocol::Mvto, 7), (Protocol::Bto, 8), (Protocol::Mvto, 8)] {
        let w = generate(&WorkloadSpec {
            contract: ContractKind::Mixed,
            n_aus: 30,
            n_objects: 6,
            seed,
            burn: 0,
        });
        let mined = mine_concurrent(
            &MinerConfig::new(4, protocol).recording(),
            &w.aus,
            &w.keys,
            GENESIS_HASH,
        )
        .unwrap();
        assert!(
            bg_matches_history(&mined.block.graph, &mined.history.unwrap()),
            "{protocol} seed {seed}"
        );
    }
}

#[test]
fn concurrent_vertex_race_linearizes() {
    for _ in 0..50 {
        let obs = observe_graph_ops(vec![
            vec![GraphOp::AddVert(5), GraphOp::AddVert(2)],
            vec![GraphOp::AddVert(5), GraphOp::AddEdge(2, 5)],
        ]);
        assert!(linearizable(&obs), "observation not linearizable: {obs:?}");
    }
}

#[test]
fn forged_observation_is_rejected() {
    // both threads claiming to have inserted the same vertex first
    let obs = GraphObservation {
        per_thread_ops: vec![vec![GraphOp::AddVert(5)], vec![GraphOp::AddVert(5)]],
        per_thread_results: vec![vec![GraphOpResult::Inserted], vec![GraphOpResult::Inserted]],
        final_vertices: BTreeSet::from([5]),
        final_edges: BTreeSet::new(),
    };
    assert!(!linearizable(&obs));
}
