//! Coin: the simplest form of a cryptocurrency. One shared object per
//! account balance. `mint` seeds balances during workload setup; `send`
//! moves coins when the sender has enough, otherwise the unit fails without
//! writing; `getbalance` is a single conflicting read.

use super::{compute_burn, AuOp, AuOutcome, ExecError, KeyTable, Memory};

pub fn acct_key(i: u32) -> String {
    format!("coin.acct.{i}")
}

pub fn coin_keys(accounts: u32) -> Vec<String> {
    (0..accounts).map(acct_key).collect()
}

pub(super) fn run<M: Memory>(
    op: &AuOp,
    burn: u32,
    keys: &KeyTable,
    mem: &mut M,
) -> Result<AuOutcome, ExecError> {
    match *op {
        AuOp::CoinMint { account, amount } => {
            let acct = keys.id(&acct_key(account))?;
            compute_burn(burn);
            mem.write(acct, amount)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::CoinSend { from, to, amount } => {
            let from_obj = keys.id(&acct_key(from))?;
            let to_obj = keys.id(&acct_key(to))?;
            let from_bal = mem.read(from_obj)?;
            let to_bal = mem.read(to_obj)?;
            compute_burn(burn);
            if from == to || from_bal < amount {
                return Ok(AuOutcome::Failed);
            }
            mem.write(from_obj, from_bal - amount)?;
            mem.write(to_obj, to_bal + amount)?;
            Ok(AuOutcome::Ok)
        }
        AuOp::CoinGetBalance { account } => {
            let acct = keys.id(&acct_key(account))?;
            mem.read(acct)?;
            compute_burn(burn);
            Ok(AuOutcome::Ok)
        }
        _ => unreachable!("not a coin op"),
    }
}
