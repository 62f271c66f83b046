//! Simple auction. Shared objects: the highest bid, the highest bidder
//! (stored as bidder index + 1; 0 while nobody has bid), one pending-return
//! slot and one balance per bidder.
//!
//! A bid fails when the auction has logically ended (`now >= end`, both
//! carried in the unit for replay determinism) or when it does not beat the
//! current highest bid; otherwise the previous highest bid moves into the
//! outbid bidder's pending returns. Withdraw zeroes the caller's pending
//! returns and credits their balance.

use super::{compute_burn, AuOp, AuOutcome, ExecError, KeyTable, Memory};

pub fn highest_bid_key() -> String {
    "auction.highest_bid".to_string()
}

pub fn highest_bidder_key() -> String {
    "auction.highest_bidder".to_string()
}

pub fn pending_key(b: u32) -> String {
    format!("auction.pending.{b}")
}

pub fn bal_key(b: u32) -> String {
    format!("auction.bal.{b}")
}

pub fn auction_keys(bidders: u32) -> Vec<String> {
    let mut keys = vec![highest_bid_key(), highest_bidder_key()];
    for b in 0..bidders {
        keys.push(pending_key(b));
        keys.push(bal_key(b));
    }
    keys
}

pub(super) fn run<M: Memory>(
    op: &AuOp,
    burn: u32,
    keys: &KeyTable,
    mem: &mut M,
) -> Result<AuOutcome, ExecError> {
    match *op {
        AuOp::AuctionBid {
            bidder,
            value,
            now,
            end,
        } => {
            compute_burn(burn);
            if now >= end {
                return Ok(AuOutcome::Failed);
            }
            let hb_obj = keys.id(&highest_bid_key())?;
            let hb = mem.read(hb_obj)?;
            if value <= hb {
                return Ok(AuOutcome::Failed);
            }
            let hbr_obj = keys.id(&highest_bidder_key())?;
            let hbr = mem.read(hbr_obj)?;
            if hbr > 0 {
                let pending = keys.id(&pending_key((hbr - 1) as u32))?;
                let p = mem.read(pending)?;
                mem.write(pending, p + hb)?;
            }
            mem.write(hbr_obj, i64::from(bidder) + 1)?;
            mem.write(hb_obj, value)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::AuctionWithdraw { bidder } => {
            let pending = keys.id(&pending_key(bidder))?;
            let bal = keys.id(&bal_key(bidder))?;
            let p = mem.read(pending)?;
            let b = mem.read(bal)?;
            compute_burn(burn);
            mem.write(pending, 0)?;
            mem.write(bal, b + p)?;
            Ok(AuOutcome::Ok)
        }
        _ => unreachable!("not an auction op"),
    }
}
