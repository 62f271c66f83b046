//! Seeded workload generation: a batch of atomic units over a declared
//! object universe. The same spec and seed always produce the same unit
//! list, byte for byte.
//!
//! Setup units come first — coin accounts are minted and ballot voters
//! granted their right — and count toward `n_aus`. The mixed workload splits
//! the object budget three ways and draws each remaining unit's contract
//! uniformly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{auction, ballot, coin, AtomicUnit, AuOp, ContractKind, KeyTable};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct WorkloadSpec {
    pub contract: ContractKind,
    pub n_aus: usize,
    pub n_objects: usize,
    pub seed: u64,
    /// Local-compute weight per unit; 0 for oracle campaigns, larger for
    /// timing runs.
    pub burn: u32,
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub spec: WorkloadSpec,
    pub aus: Vec<AtomicUnit>,
    pub keys: KeyTable,
}

struct Universe {
    coin_accounts: u32,
    voters: u32,
    proposals: u32,
    bidders: u32,
    auction_end: u32,
}

fn split_mixed(n: usize) -> (u32, u32, u32) {
    let coin = (n / 3).max(1) as u32;
    let ballot = (n / 3).max(1) as u32;
    let auction = (n.saturating_sub((coin + ballot) as usize)).max(1) as u32;
    (coin, ballot, auction)
}

fn ballot_split(n: usize) -> (u32, u32) {
    let voters = ((n * 2) / 3).max(1) as u32;
    let proposals = (n.saturating_sub(voters as usize)).max(1) as u32;
    (voters, proposals)
}

pub fn generate(spec: &WorkloadSpec) -> Workload {
    assert!(spec.n_aus >= 1, "workload needs at least one atomic unit");
    assert!(spec.n_objects >= 1, "workload needs at least one shared object");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let end = ((spec.n_aus * 9) / 10).max(1) as u32;

    let (universe, key_names) = match spec.contract {
        ContractKind::Coin => {
            let accounts = spec.n_objects as u32;
            (
                Universe {
                    coin_accounts: accounts,
                    voters: 0,
                    proposals: 0,
                    bidders: 0,
                    auction_end: end,
                },
                coin::coin_keys(accounts),
            )
        }
        ContractKind::Ballot => {
            let (voters, proposals) = ballot_split(spec.n_objects);
            (
                Universe {
                    coin_accounts: 0,
                    voters,
                    proposals,
                    bidders: 0,
                    auction_end: end,
                },
                ballot::ballot_keys(voters, proposals),
            )
        }
        ContractKind::SimpleAuction => {
            let bidders = spec.n_objects as u32;
            (
                Universe {
                    coin_accounts: 0,
                    voters: 0,
                    proposals: 0,
                    bidders,
                    auction_end: end,
                },
                auction::auction_keys(bidders),
            )
        }
        ContractKind::Mixed => {
            let (accounts, ballot_objs, bidders) = split_mixed(spec.n_objects);
            let (voters, proposals) = ballot_split(ballot_objs as usize);
            let mut keys = coin::coin_keys(accounts);
            keys.extend(ballot::ballot_keys(voters, proposals));
            keys.extend(auction::auction_keys(bidders));
            (
                Universe {
                    coin_accounts: accounts,
                    voters,
                    proposals,
                    bidders,
                    auction_end: end,
                },
                keys,
            )
        }
    };

    let mut aus = Vec::with_capacity(spec.n_aus);
    // setup prefix: mint every account, grant every voter, capped by n_aus
    for a in 0..universe.coin_accounts {
        if aus.len() == spec.n_aus {
            break;
        }
        aus.push(AuOp::CoinMint {
            account: a,
            amount: rng.gen_range(100..=1000),
        });
    }
    for v in 0..universe.voters {
        if aus.len() == spec.n_aus {
            break;
        }
        aus.push(AuOp::BallotGiveRight { voter: v });
    }
    while aus.len() < spec.n_aus {
        let op = match spec.contract {
            ContractKind::Coin => coin_activity(&mut rng, &universe),
            ContractKind::Ballot => ballot_activity(&mut rng, &universe),
            ContractKind::SimpleAuction => auction_activity(&mut rng, &universe, aus.len()),
            ContractKind::Mixed => match rng.gen_range(0..3u32) {
                0 => coin_activity(&mut rng, &universe),
                1 => ballot_activity(&mut rng, &universe),
                _ => auction_activity(&mut rng, &universe, aus.len()),
            },
        };
        aus.push(op);
    }

    let aus = aus
        .into_iter()
        .enumerate()
        .map(|(i, op)| AtomicUnit {
            id: i as u64,
            op,
            burn: spec.burn,
        })
        .collect();
    Workload {
        spec: *spec,
        aus,
        keys: KeyTable::new(key_names),
    }
}

fn coin_activity(rng: &mut ChaCha8Rng, u: &Universe) -> AuOp {
    let n = u.coin_accounts;
    if rng.gen_bool(0.4) && n >= 2 {
        let from = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..n);
        while to == from {
            to = rng.gen_range(0..n);
        }
        AuOp::CoinSend {
            from,
            to,
            amount: rng.gen_range(1..=300),
        }
    } else {
        AuOp::CoinGetBalance {
            account: rng.gen_range(0..n),
        }
    }
}

fn ballot_activity(rng: &mut ChaCha8Rng, u: &Universe) -> AuOp {
    let roll: f64 = rng.gen();
    if roll < 0.60 {
        AuOp::BallotVote {
            voter: rng.gen_range(0..u.voters),
            proposal: rng.gen_range(0..u.proposals),
        }
    } else if roll < 0.85 && u.voters >= 2 {
        let from = rng.gen_range(0..u.voters);
        let mut to = rng.gen_range(0..u.voters);
        while to == from {
            to = rng.gen_range(0..u.voters);
        }
        AuOp::BallotDelegate { from, to }
    } else {
        AuOp::BallotWinner {
            proposals: u.proposals,
        }
    }
}

fn auction_activity(rng: &mut ChaCha8Rng, u: &Universe, position: usize) -> AuOp {
    if rng.gen_bool(0.8) {
        AuOp::AuctionBid {
            bidder: rng.gen_range(0..u.bidders),
            value: rng.gen_range(1..=1000),
            now: position as u32,
            end: u.auction_end,
        }
    } else {
        AuOp::AuctionWithdraw {
            bidder: rng.gen_range(0..u.bidders),
        }
    }
}
