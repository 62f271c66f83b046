//! Benchmark contracts executed natively as atomic-unit step programs.
//!
//! An atomic unit is one contract call: its step sequence (reads, writes,
//! local compute) is produced dynamically while it runs against a [`Memory`],
//! so the same program executes under the STM during mining and against raw
//! shared state during validation. Programs are pure functions of their
//! parameters and the values they read, which is what makes validator replay
//! deterministic.
//!
//! Business-logic failures (insufficient coins, a losing bid, a double vote)
//! do not abort the transaction: the unit commits as a read-validated no-op
//! and carries the [`AuOutcome::Failed`] marker, which the validator must
//! reproduce.

mod auction;
mod ballot;
mod coin;
pub mod workload;

use thiserror::Error;

use crate::stm::{Abort, ObjId, Stm, Txn};

pub use workload::{generate, Workload, WorkloadSpec};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ContractKind {
    Coin,
    Ballot,
    SimpleAuction,
    Mixed,
}

impl std::fmt::Display for ContractKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ContractKind::Coin => "coin",
            ContractKind::Ballot => "ballot",
            ContractKind::SimpleAuction => "auction",
            ContractKind::Mixed => "mixed",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ContractKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coin" => Ok(ContractKind::Coin),
            "ballot" => Ok(ContractKind::Ballot),
            "auction" | "simpleauction" => Ok(ContractKind::SimpleAuction),
            "mixed" => Ok(ContractKind::Mixed),
            other => Err(format!("unknown contract `{other}`")),
        }
    }
}

/// One contract call with its integer arguments.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AuOp {
    CoinMint { account: u32, amount: i64 },
    CoinSend { from: u32, to: u32, amount: i64 },
    CoinGetBalance { account: u32 },
    BallotGiveRight { voter: u32 },
    BallotVote { voter: u32, proposal: u32 },
    BallotDelegate { from: u32, to: u32 },
    BallotWinner { proposals: u32 },
    AuctionBid { bidder: u32, value: i64, now: u32, end: u32 },
    AuctionWithdraw { bidder: u32 },
    /// Raw read-modify-write on a named cell: `cell += delta`.
    CellAdd { cell: u32, delta: i64 },
    /// Raw read-modify-write on a named cell: `cell *= factor`.
    CellScale { cell: u32, factor: i64 },
}

impl AuOp {
    pub fn contract_tag(&self) -> &'static str {
        match self {
            AuOp::CoinMint { .. } | AuOp::CoinSend { .. } | AuOp::CoinGetBalance { .. } => "coin",
            AuOp::BallotGiveRight { .. }
            | AuOp::BallotVote { .. }
            | AuOp::BallotDelegate { .. }
            | AuOp::BallotWinner { .. } => "ballot",
            AuOp::AuctionBid { .. } | AuOp::AuctionWithdraw { .. } => "auction",
            AuOp::CellAdd { .. } | AuOp::CellScale { .. } => "cell",
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            AuOp::CoinMint { .. } => "mint",
            AuOp::CoinSend { .. } => "send",
            AuOp::CoinGetBalance { .. } => "getbalance",
            AuOp::BallotGiveRight { .. } => "giveright",
            AuOp::BallotVote { .. } => "vote",
            AuOp::BallotDelegate { .. } => "delegate",
            AuOp::BallotWinner { .. } => "winner",
            AuOp::AuctionBid { .. } => "bid",
            AuOp::AuctionWithdraw { .. } => "withdraw",
            AuOp::CellAdd { .. } => "add",
            AuOp::CellScale { .. } => "scale",
        }
    }

    pub fn params(&self) -> Vec<i64> {
        match *self {
            AuOp::CoinMint { account, amount } => vec![account as i64, amount],
            AuOp::CoinSend { from, to, amount } => vec![from as i64, to as i64, amount],
            AuOp::CoinGetBalance { account } => vec![account as i64],
            AuOp::BallotGiveRight { voter } => vec![voter as i64],
            AuOp::BallotVote { voter, proposal } => vec![voter as i64, proposal as i64],
            AuOp::BallotDelegate { from, to } => vec![from as i64, to as i64],
            AuOp::BallotWinner { proposals } => vec![proposals as i64],
            AuOp::AuctionBid {
                bidder,
                value,
                now,
                end,
            } => vec![bidder as i64, value, now as i64, end as i64],
            AuOp::AuctionWithdraw { bidder } => vec![bidder as i64],
            AuOp::CellAdd { cell, delta } => vec![cell as i64, delta],
            AuOp::CellScale { cell, factor } => vec![cell as i64, factor],
        }
    }

    pub fn from_parts(contract: &str, method: &str, params: &[i64]) -> Result<AuOp, String> {
        let p = |i: usize| -> Result<i64, String> {
            params
                .get(i)
                .copied()
                .ok_or_else(|| format!("{contract}.{method}: missing parameter {i}"))
        };
        let idx = |i: usize| -> Result<u32, String> {
            u32::try_from(p(i)?).map_err(|_| format!("{contract}.{method}: bad index at {i}"))
        };
        match (contract, method) {
            ("coin", "mint") => Ok(AuOp::CoinMint {
                account: idx(0)?,
                amount: p(1)?,
            }),
            ("coin", "send") => Ok(AuOp::CoinSend {
                from: idx(0)?,
                to: idx(1)?,
                amount: p(2)?,
            }),
            ("coin", "getbalance") => Ok(AuOp::CoinGetBalance { account: idx(0)? }),
            ("ballot", "giveright") => Ok(AuOp::BallotGiveRight { voter: idx(0)? }),
            ("ballot", "vote") => Ok(AuOp::BallotVote {
                voter: idx(0)?,
                proposal: idx(1)?,
            }),
            ("ballot", "delegate") => Ok(AuOp::BallotDelegate {
                from: idx(0)?,
                to: idx(1)?,
            }),
            ("ballot", "winner") => Ok(AuOp::BallotWinner { proposals: idx(0)? }),
            ("auction", "bid") => Ok(AuOp::AuctionBid {
                bidder: idx(0)?,
                value: p(1)?,
                now: idx(2)?,
                end: idx(3)?,
            }),
            ("auction", "withdraw") => Ok(AuOp::AuctionWithdraw { bidder: idx(0)? }),
            ("cell", "add") => Ok(AuOp::CellAdd {
                cell: idx(0)?,
                delta: p(1)?,
            }),
            ("cell", "scale") => Ok(AuOp::CellScale {
                cell: idx(0)?,
                factor: p(1)?,
            }),
            _ => Err(format!("unknown atomic unit `{contract}.{method}`")),
        }
    }
}

/// One smart-contract call plus identity and a local-compute weight in
/// arbitrary units, burned once per execution attempt.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AtomicUnit {
    pub id: u64,
    pub op: AuOp,
    pub burn: u32,
}

/// Business-level result of a unit. A `Failed` unit still commits — it read
/// and validated state, wrote nothing — and its outcome ships in the block.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AuOutcome {
    Ok,
    Failed,
}

impl std::fmt::Display for AuOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuOutcome::Ok => write!(f, "ok"),
            AuOutcome::Failed => write!(f, "failed"),
        }
    }
}

impl std::str::FromStr for AuOutcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(AuOutcome::Ok),
            "failed" => Ok(AuOutcome::Failed),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    /// STM-level abort; retry the unit under a fresh transaction.
    #[error("transaction aborted")]
    Aborted,
    #[error("unknown object key `{0}`")]
    UnknownKey(String),
}

impl From<Abort> for ExecError {
    fn from(_: Abort) -> Self {
        ExecError::Aborted
    }
}

/// Where a unit's reads and writes land: the STM during mining, raw state
/// during validation and serial baselines.
pub trait Memory {
    fn read(&mut self, obj: ObjId) -> Result<i64, Abort>;
    fn write(&mut self, obj: ObjId, value: i64) -> Result<(), Abort>;
}

/// STM-backed memory for one live transaction.
pub struct StmMemory<'a> {
    pub stm: &'a Stm,
    pub txn: &'a mut Txn,
}

impl Memory for StmMemory<'_> {
    fn read(&mut self, obj: ObjId) -> Result<i64, Abort> {
        self.stm.read(self.txn, obj)
    }

    fn write(&mut self, obj: ObjId, value: i64) -> Result<(), Abort> {
        self.stm.write(self.txn, obj, value);
        Ok(())
    }
}

/// Plain single-threaded state vector.
pub struct VecMemory<'a>(pub &'a mut Vec<i64>);

impl Memory for VecMemory<'_> {
    fn read(&mut self, obj: ObjId) -> Result<i64, Abort> {
        Ok(self.0[obj.index()])
    }

    fn write(&mut self, obj: ObjId, value: i64) -> Result<(), Abort> {
        self.0[obj.index()] = value;
        Ok(())
    }
}

/// Sorted object-key table shared by the STM instance, the workload and the
/// block format. Object ids are positions in the sorted list.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KeyTable {
    names: Vec<String>,
}

impl KeyTable {
    pub fn new(mut names: Vec<String>) -> Self {
        names.sort();
        names.dedup();
        KeyTable { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ObjId, ExecError> {
        self.names
            .binary_search_by(|k| k.as_str().cmp(name))
            .map(|i| ObjId(i as u32))
            .map_err(|_| ExecError::UnknownKey(name.to_string()))
    }

    pub fn name(&self, obj: ObjId) -> &str {
        &self.names[obj.index()]
    }
}

/// Deterministic local compute, sized in abstract units. Stands in for the
/// instruction-level work a contract method would do; must not be optimized
/// away, hence the black box.
pub fn compute_burn(units: u32) {
    let mut acc: u64 = 0x9E37_79B9_7F4A_7C15;
    for i in 0..units {
        acc = acc
            .wrapping_mul(6364136223846793005)
            .wrapping_add(u64::from(i))
            .rotate_left(13);
    }
    std::hint::black_box(acc);
}

/// Run one atomic unit against `mem`. Abort propagation unwinds the unit so
/// the caller can retry it whole under a fresh transaction.
pub fn execute_au<M: Memory>(
    au: &AtomicUnit,
    keys: &KeyTable,
    mem: &mut M,
) -> Result<AuOutcome, ExecError> {
    match &au.op {
        AuOp::CoinMint { .. } | AuOp::CoinSend { .. } | AuOp::CoinGetBalance { .. } => {
            coin::run(&au.op, au.burn, keys, mem)
        }
        AuOp::BallotGiveRight { .. }
        | AuOp::BallotVote { .. }
        | AuOp::BallotDelegate { .. }
        | AuOp::BallotWinner { .. } => ballot::run(&au.op, au.burn, keys, mem),
        AuOp::AuctionBid { .. } | AuOp::AuctionWithdraw { .. } => {
            auction::run(&au.op, au.burn, keys, mem)
        }
        AuOp::CellAdd { cell, delta } => {
            let obj = keys.id(&cell_key(*cell))?;
            let v = mem.read(obj)?;
            compute_burn(au.burn);
            mem.write(obj, v + delta)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::CellScale { cell, factor } => {
            let obj = keys.id(&cell_key(*cell))?;
            let v = mem.read(obj)?;
            compute_burn(au.burn);
            mem.write(obj, v * factor)?;
            Ok(AuOutcome::Ok)
        }
    }
}

pub fn cell_key(i: u32) -> String {
    format!("cell.{i}")
}

pub use auction::{auction_keys, bal_key, highest_bid_key, highest_bidder_key, pending_key};
pub use ballot::{ballot_keys, prop_count_key, voter_choice_key, voter_voted_key, voter_weight_key, winner_of};
pub use coin::{acct_key, coin_keys};

#[cfg(test)]
mod tests;
