//! Ballot: electronic voting. Per voter: a weight (0 until granted), a
//! voted flag and the chosen proposal (stored as index+1; 0 while unvoted or
//! after delegating). Per proposal: a vote count.
//!
//! A voter votes or delegates at most once. Voting moves the voter's whole
//! current weight into the proposal count; delegating moves it to the
//! delegate, or straight into the delegate's chosen proposal when the
//! delegate has already voted. Delegation is one hop. The conservation
//! invariant is that proposal counts plus parked weights always sum to the
//! total weight granted.

use super::{compute_burn, AuOp, AuOutcome, ExecError, KeyTable, Memory};

pub fn voter_weight_key(v: u32) -> String {
    format!("ballot.voter.{v}.weight")
}

pub fn voter_voted_key(v: u32) -> String {
    format!("ballot.voter.{v}.voted")
}

pub fn voter_choice_key(v: u32) -> String {
    format!("ballot.voter.{v}.choice")
}

pub fn prop_count_key(p: u32) -> String {
    format!("ballot.prop.{p}.count")
}

pub fn ballot_keys(voters: u32, proposals: u32) -> Vec<String> {
    let mut keys = Vec::with_capacity(voters as usize * 3 + proposals as usize);
    for v in 0..voters {
        keys.push(voter_weight_key(v));
        keys.push(voter_voted_key(v));
        keys.push(voter_choice_key(v));
    }
    for p in 0..proposals {
        keys.push(prop_count_key(p));
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
        AuOp::BallotGiveRight { voter } => {
            let weight = keys.id(&voter_weight_key(voter))?;
            let voted = keys.id(&voter_voted_key(voter))?;
            let w = mem.read(weight)?;
            let v = mem.read(voted)?;
            compute_burn(burn);
            if w != 0 || v != 0 {
                return Ok(AuOutcome::Failed);
            }
            mem.write(weight, 1)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::BallotVote { voter, proposal } => {
            let weight = keys.id(&voter_weight_key(voter))?;
            let voted = keys.id(&voter_voted_key(voter))?;
            let count = keys.id(&prop_count_key(proposal))?;
            let w = mem.read(weight)?;
            let v = mem.read(voted)?;
            compute_burn(burn);
            if w <= 0 || v != 0 {
                return Ok(AuOutcome::Failed);
            }
            let c = mem.read(count)?;
            mem.write(count, c + w)?;
            mem.write(weight, 0)?;
            mem.write(voted, 1)?;
            mem.write(keys.id(&voter_choice_key(voter))?, i64::from(proposal) + 1)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::BallotDelegate { from, to } => {
            let from_weight = keys.id(&voter_weight_key(from))?;
            let from_voted = keys.id(&voter_voted_key(from))?;
            let w = mem.read(from_weight)?;
            let v = mem.read(from_voted)?;
            compute_burn(burn);
            if w <= 0 || v != 0 || from == to {
                return Ok(AuOutcome::Failed);
            }
            let to_voted = mem.read(keys.id(&voter_voted_key(to))?)?;
            let to_choice = mem.read(keys.id(&voter_choice_key(to))?)?;
            if to_voted != 0 && to_choice > 0 {
                // delegate already voted: weight goes straight to their proposal
                let count = keys.id(&prop_count_key((to_choice - 1) as u32))?;
                let c = mem.read(count)?;
                mem.write(count, c + w)?;
            } else {
                // parked on the delegate; stays unexercised if they already delegated
                let to_weight = keys.id(&voter_weight_key(to))?;
                let tw = mem.read(to_weight)?;
                mem.write(to_weight, tw + w)?;
            }
            mem.write(from_weight, 0)?;
            mem.write(from_voted, 1)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::BallotWinner { proposals } => {
            let mut best: Option<(u32, i64)> = None;
            for p in 0..proposals {
                let c = mem.read(keys.id(&prop_count_key(p))?)?;
                // ties resolve to the lowest proposal index
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((p, c));
                }
            }
            compute_burn(burn);
            Ok(AuOutcome::Ok)
        }
        _ => unreachable!("not a ballot op"),
    }
}

/// Winner computation over a plain state snapshot: highest count, ties to
/// the lowest proposal index.
pub fn winner_of(counts: &[i64]) -> Option<u32> {
    let mut best: Option<(u32, i64)> = None;
    for (p, &c) in counts.iter().enumerate() {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((p as u32, c));
        }
    }
    best.map(|(p, _)| p)
}
