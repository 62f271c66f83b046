use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use super::*;

#[test]
fn insert_into_empty_list() {
    let g = BlockGraph::new();
    assert_eq!(g.add_vert(5, Some(0)), InsertOutcome::Added);
    assert_eq!(g.vertices(), vec![(5, 0)]);
}

#[test]
fn duplicate_vertex_reports_already_present() {
    let g = BlockGraph::new();
    assert_eq!(g.add_vert(5, Some(0)), InsertOutcome::Added);
    assert_eq!(g.add_vert(5, Some(0)), InsertOutcome::AlreadyPresent);
    assert_eq!(g.vertices(), vec![(5, 0)]);
}

#[test]
fn placeholder_unit_id_filled_by_owner() {
    let g = BlockGraph::new();
    g.add_vert(3, None);
    assert_eq!(g.vertices(), vec![(3, PLACEHOLDER_AU)]);
    assert_eq!(g.add_vert(3, Some(11)), InsertOutcome::AlreadyPresent);
    assert_eq!(g.vertices(), vec![(3, 11)]);
    // a later placeholder insert must not clobber the real id
    g.add_vert(3, None);
    assert_eq!(g.vertices(), vec![(3, 11)]);
}

#[test]
fn concurrent_vertex_inserts_match_sequential_oracle() {
    let g = BlockGraph::new();
    std::thread::scope(|s| {
        for t in 0..8u64 {
            let g = &g;
            s.spawn(move || {
                for i in 0..8u64 {
                    let ts = t * 8 + i + 1;
                    g.add_vert(ts, Some(ts));
                }
            });
        }
    });
    let expected: Vec<(Ts, u64)> = (1..=64).map(|ts| (ts, ts)).collect();
    assert_eq!(g.vertices(), expected);
    assert_eq!(g.vertex_count(), 64);
}

#[test]
fn fresh_edge_increments_indegree() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    g.add_vert(5, Some(1));
    assert_eq!(g.add_edge(1, 5), Ok(InsertOutcome::Added));
    assert_eq!(g.in_degrees(), vec![(1, 0), (5, 1)]);
}

#[test]
fn repeated_edge_is_idempotent() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    g.add_vert(5, Some(1));
    assert_eq!(g.add_edge(1, 5), Ok(InsertOutcome::Added));
    assert_eq!(g.add_edge(1, 5), Ok(InsertOutcome::AlreadyPresent));
    assert_eq!(g.in_degrees(), vec![(1, 0), (5, 1)]);
    assert_eq!(g.edge_count(), 1);
}

#[test]
fn edge_errors() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    assert_eq!(g.add_edge(1, 9), Err(GraphError::MissingVertex(9)));
    assert_eq!(
        g.add_edge(5, 1),
        Err(GraphError::DirectionViolation { from: 5, to: 1 })
    );
}

#[test]
fn concurrent_star_insertion() {
    let g = BlockGraph::new();
    for ts in 1..=9 {
        g.add_vert(ts, Some(ts));
    }
    std::thread::scope(|s| {
        for k in 2..=9u64 {
            let g = &g;
            s.spawn(move || {
                g.add_edge(1, k).unwrap();
            });
        }
    });
    let degs = g.in_degrees();
    assert_eq!(degs[0], (1, 0));
    for &(ts, d) in &degs[1..] {
        assert_eq!(d, 1, "vertex {ts}");
    }
    assert_eq!(g.edges().len(), 8);
    assert_eq!(g.edges().iter().filter(|&&(f, _)| f == 1).count(), 8);
}

#[test]
fn build_from_conflicts_isolated_vertex() {
    let g = BlockGraph::new();
    g.build_from_conflicts(4, 7, []);
    assert_eq!(g.vertices(), vec![(4, 7)]);
    assert!(g.edges().is_empty());
}

#[test]
fn build_from_conflicts_orients_edges() {
    let g = BlockGraph::new();
    g.build_from_conflicts(7, 1, [3, 9]);
    let mut vs: Vec<Ts> = g.vertices().iter().map(|&(ts, _)| ts).collect();
    vs.sort_unstable();
    assert_eq!(vs, vec![3, 7, 9]);
    assert_eq!(g.edges(), vec![(3, 7), (7, 9)]);
}

#[test]
fn search_local_claims_source() {
    let g = BlockGraph::new();
    g.add_vert(2, Some(0));
    let h = g.vertices_handles()[0];
    let claimed = g.search_local(h).expect("claimable");
    assert_eq!(claimed.ts(), 2);
    assert_eq!(claimed.in_cnt(), -1);
    assert_eq!(g.completed(), 1);
}

#[test]
fn search_local_rejects_unready_node() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    g.add_vert(2, Some(1));
    g.add_vert(3, Some(2));
    g.add_edge(1, 3).unwrap();
    g.add_edge(2, 3).unwrap();
    let h3 = g.vertices_handles()[2];
    assert_eq!(h3.in_cnt(), 2);
    assert!(g.search_local(h3).is_none());
    assert_eq!(g.completed(), 0);
}

#[test]
fn racing_claims_have_one_winner() {
    for _ in 0..200 {
        let g = BlockGraph::new();
        g.add_vert(1, Some(0));
        let h = g.vertices_handles()[0];
        let wins = AtomicU64::new(0);
        std::thread::scope(|s| {
            for _ in 0..2 {
                let g = &g;
                let wins = &wins;
                s.spawn(move || {
                    if g.search_local(h).is_some() {
                        wins.fetch_add(1, Ordering::SeqCst);
                    }
                });
            }
        });
        assert_eq!(wins.load(Ordering::SeqCst), 1);
        assert_eq!(g.completed(), 1);
    }
}

#[test]
fn search_global_returns_first_source() {
    let g = BlockGraph::new();
    for ts in 1..=3 {
        g.add_vert(ts, Some(ts));
    }
    g.add_edge(1, 2).unwrap();
    g.add_edge(2, 3).unwrap();
    let n = g.search_global().expect("vertex 1 is the only source");
    assert_eq!(n.ts(), 1);
    assert!(g.search_global().is_none());
}

#[test]
fn search_global_exhausted_returns_none() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    g.add_vert(2, Some(1));
    assert!(g.search_global().is_some());
    assert!(g.search_global().is_some());
    assert!(g.search_global().is_none());
    assert_eq!(g.completed(), 2);
}

#[test]
fn dec_in_count_forced_arithmetic() {
    let g = BlockGraph::new();
    for ts in [2, 5, 9] {
        g.add_vert(ts, Some(ts));
    }
    g.add_edge(2, 5).unwrap();
    g.add_edge(2, 9).unwrap();
    let n = g.search_global().unwrap();
    assert_eq!(n.ts(), 2);
    let mut cache = Vec::new();
    g.dec_in_count(n, &mut cache);
    let freed: BTreeSet<Ts> = cache.iter().map(|h| h.ts()).collect();
    assert_eq!(freed, BTreeSet::from([5, 9]));
    assert_eq!(g.in_degrees(), vec![(2, -1), (5, 0), (9, 0)]);
}

#[test]
fn dec_in_count_diamond() {
    // 1 -> {2,3} -> 4: finishing 1 then draining 2 leaves 4 still blocked
    let g = BlockGraph::new();
    for ts in 1..=4 {
        g.add_vert(ts, Some(ts));
    }
    for (f, t) in [(1, 2), (1, 3), (2, 4), (3, 4)] {
        g.add_edge(f, t).unwrap();
    }
    let n1 = g.search_global().unwrap();
    let mut cache = Vec::new();
    g.dec_in_count(n1, &mut cache);
    assert_eq!(cache.len(), 2);
    let n2 = g.search_local(cache[0]).unwrap();
    assert_eq!(n2.ts(), 2);
    let mut cache2 = Vec::new();
    g.dec_in_count(n2, &mut cache2);
    assert!(cache2.is_empty());
    let deg4 = g.in_degrees().iter().find(|&&(ts, _)| ts == 4).unwrap().1;
    assert_eq!(deg4, 1);
}

#[test]
fn dec_in_count_without_edges_is_a_noop() {
    let g = BlockGraph::new();
    g.add_vert(1, Some(0));
    let n = g.search_global().unwrap();
    let mut cache = Vec::new();
    g.dec_in_count(n, &mut cache);
    assert!(cache.is_empty());
}

#[test]
fn serialize_empty_graph_round_trips() {
    let g = BlockGraph::new();
    let text = g.serialize();
    assert_eq!(text, "BG v1 0 0\n");
    let g2 = BlockGraph::deserialize(&text).unwrap();
    assert!(g2.vertices().is_empty());
    assert!(g2.edges().is_empty());
}

#[test]
fn serialize_chain_round_trips() {
    let g = BlockGraph::new();
    for ts in 1..=3 {
        g.add_vert(ts, Some(ts * 10));
    }
    g.add_edge(1, 2).unwrap();
    g.add_edge(2, 3).unwrap();
    let text = g.serialize();
    let g2 = BlockGraph::deserialize(&text).unwrap();
    assert_eq!(g2.vertices(), g.vertices());
    assert_eq!(g2.edges(), g.edges());
    assert_eq!(g2.serialize(), text);
}

#[test]
fn deserialize_rejects_malformed_and_cyclic_input() {
    assert!(matches!(
        BlockGraph::deserialize("nonsense"),
        Err(GraphError::Parse(_))
    ));
    assert!(matches!(
        BlockGraph::deserialize("BG v1 2 1\nV 1 0\nV 2 1\nE 2 1\n"),
        Err(GraphError::Integrity(_))
    ));
    assert!(matches!(
        BlockGraph::deserialize("BG v1 2 9\nV 1 0\nV 2 1\nE 1 2\n"),
        Err(GraphError::Integrity(_))
    ));
}

#[test]
fn claim_multiset_over_random_dag() {
    // every vertex claimed exactly once across 8 threads
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let g = BlockGraph::new();
    let n = 50u64;
    for ts in 1..=n {
        g.add_vert(ts, Some(ts));
    }
    for from in 1..n {
        for to in (from + 1)..=n {
            if rng.gen_bool(0.08) {
                g.add_edge(from, to).unwrap();
            }
        }
    }
    let claims = parking_lot::Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..8 {
            let g = &g;
            let claims = &claims;
            s.spawn(move || {
                let mut local: Vec<NodeHandle> = Vec::new();
                let mut got = Vec::new();
                while g.completed() < n {
                    let claimed = match local.pop() {
                        Some(h) => g.search_local(h),
                        None => g.search_global(),
                    };
                    if let Some(node) = claimed {
                        got.push(node.ts());
                        g.dec_in_count(node, &mut local);
                    } else if local.is_empty() {
                        std::hint::spin_loop();
                    }
                }
                claims.lock().extend(got);
            });
        }
    });
    let mut all = claims.into_inner();
    all.sort_unstable();
    let expected: Vec<Ts> = (1..=n).collect();
    assert_eq!(all, expected, "each vertex claimed exactly once");
    assert_eq!(g.completed(), n);
}
