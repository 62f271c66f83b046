//! Workload grids, timing, result rows and emitters.
//!
//! A benchmark run doubles as a correctness campaign: every concurrent block
//! is validated in every requested mode and any reject aborts the run with a
//! dump of the offending block.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use serde::Serialize;

use parablock_core::block::GENESIS_HASH;
use parablock_core::checker::{bg_matches_history, is_csr};
use parablock_core::contracts::{generate, ContractKind, WorkloadSpec};
use parablock_core::miner::{mine_concurrent, mine_serial, MinerConfig};
use parablock_core::validator::{
    validate_decentralized, validate_fork_join, validate_serial, ValidatorConfig, Verdict,
};
use parablock_core::Protocol;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Grid {
    W1,
    W2,
    W3,
    Custom,
}

impl std::str::FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w1" | "W1" => Ok(Grid::W1),
            "w2" | "W2" => Ok(Grid::W2),
            "w3" | "W3" => Ok(Grid::W3),
            "custom" => Ok(Grid::Custom),
            other => Err(format!("unknown workload grid `{other}`")),
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grid::W1 => write!(f, "w1"),
            Grid::W2 => write!(f, "w2"),
            Grid::W3 => write!(f, "w3"),
            Grid::Custom => write!(f, "custom"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValidatorMode {
    Decentralized,
    ForkJoin,
}

impl ValidatorMode {
    pub fn label(self) -> &'static str {
        match self {
            ValidatorMode::Decentralized => "decentralized",
            ValidatorMode::ForkJoin => "forkjoin",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchParams {
    pub grid: Grid,
    pub contract: ContractKind,
    pub protocols: Vec<Protocol>,
    pub validators: Vec<ValidatorMode>,
    pub reps: usize,
    pub seed: u64,
    /// Overrides the grid's fixed thread count (W1/W3/custom points).
    pub threads: Option<usize>,
    /// Unit count for the custom grid.
    pub aus: usize,
    /// Object count for the custom grid.
    pub objects: usize,
    pub burn: u32,
    /// Where to dump the offending block when a validation rejects.
    pub dump_dir: Option<PathBuf>,
}

/// One measurement row. Column order is fixed: contract, workload, protocol,
/// role, mode, threads, aus, objects, meanTimeMs, speedup, aborts.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub contract: String,
    pub workload: String,
    pub protocol: String,
    pub role: String,
    pub mode: String,
    pub threads: usize,
    pub aus: usize,
    pub objects: usize,
    #[serde(rename = "meanTimeMs")]
    pub mean_time_ms: f64,
    pub speedup: f64,
    pub aborts: u64,
}

/// Grid points as (aus, objects, threads).
pub fn grid_points(params: &BenchParams) -> Vec<(usize, usize, usize)> {
    let fixed_threads = params.threads.unwrap_or(50);
    match params.grid {
        Grid::W1 => (1..=8).map(|i| (i * 50, 40, fixed_threads)).collect(),
        Grid::W2 => (1..=6).map(|i| (400, 40, i * 10)).collect(),
        Grid::W3 => (1..=6).map(|i| (400, i * 10, fixed_threads)).collect(),
        Grid::Custom => vec![(params.aus, params.objects, params.threads.unwrap_or(4))],
    }
}

fn mean_ms(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

fn check_accept(
    verdict: &Verdict,
    what: &str,
    block_text: &str,
    dump_dir: &Option<PathBuf>,
) -> Result<()> {
    if verdict.is_accept() {
        return Ok(());
    }
    let mut dumped = String::new();
    if let Some(dir) = dump_dir {
        let path = dir.join(format!("reject-{}.block.txt", what.replace([' ', '/'], "-")));
        if std::fs::write(&path, block_text).is_ok() {
            dumped = format!(" (block dumped to {})", path.display());
        }
    }
    bail!("validation rejected for {what}: {verdict:?}{dumped}");
}

/// Run the whole grid. For every point: time the serial miner, then per
/// protocol the concurrent miner and all validators against the concurrent
/// block, asserting Accept everywhere.
pub fn run_benchmark(params: &BenchParams) -> Result<Vec<ResultRow>> {
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut rows = Vec::new();
    let vcfg = ValidatorConfig::default();
    for (point, &(aus, objects, threads)) in grid_points(params).iter().enumerate() {
        if threads > hw {
            eprintln!(
                "warning: point {point} runs {threads} threads on {hw} hardware threads (oversubscribed)"
            );
        }
        let w = generate(&WorkloadSpec {
            contract: params.contract,
            n_aus: aus,
            n_objects: objects,
            seed: params.seed + point as u64,
            burn: params.burn,
        });
        let row = |protocol: &str, role: &str, mode: &str, mean: f64, speedup: f64, aborts: u64| ResultRow {
            contract: params.contract.to_string(),
            workload: params.grid.to_string(),
            protocol: protocol.to_string(),
            role: role.to_string(),
            mode: mode.to_string(),
            threads,
            aus,
            objects,
            mean_time_ms: mean,
            speedup,
            aborts,
        };

        let mut serial_mine_ms = Vec::with_capacity(params.reps);
        for _ in 0..params.reps {
            let t = Instant::now();
            let (block, _) = mine_serial(&w.aus, &w.keys, GENESIS_HASH);
            serial_mine_ms.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(block);
        }
        let serial_mine = mean_ms(&serial_mine_ms);
        rows.push(row("-", "miner", "serial", serial_mine, 1.0, 0));

        for &protocol in &params.protocols {
            let proto = protocol.to_string();
            let cfg = MinerConfig::new(threads, protocol);
            let mut conc_ms = Vec::with_capacity(params.reps);
            let mut serial_val_ms = Vec::with_capacity(params.reps);
            let mut dec_ms = Vec::new();
            let mut fj_ms = Vec::new();
            let mut aborts = 0u64;
            for _ in 0..params.reps {
                let t = Instant::now();
                let mined = mine_concurrent(&cfg, &w.aus, &w.keys, GENESIS_HASH)?;
                conc_ms.push(t.elapsed().as_secs_f64() * 1e3);
                aborts += mined.stats.aborts;
                let block = &mined.block;
                let text = block.to_text();
                let what = |v: &str| format!("{} {proto} {v} point{point}", params.contract);

                let t = Instant::now();
                let verdict = validate_serial(block);
                serial_val_ms.push(t.elapsed().as_secs_f64() * 1e3);
                check_accept(&verdict, &what("serial"), &text, &params.dump_dir)?;

                for &mode in &params.validators {
                    let t = Instant::now();
                    let verdict = match mode {
                        ValidatorMode::Decentralized => validate_decentralized(block, threads, &vcfg),
                        ValidatorMode::ForkJoin => validate_fork_join(block, threads, &vcfg),
                    };
                    let ms = t.elapsed().as_secs_f64() * 1e3;
                    match mode {
                        ValidatorMode::Decentralized => dec_ms.push(ms),
                        ValidatorMode::ForkJoin => fj_ms.push(ms),
                    }
                    check_accept(&verdict, &what(mode.label()), &text, &params.dump_dir)?;
                }
            }
            // every run doubles as a correctness campaign: a small recorded
            // instance per point goes through the offline oracles
            let sample = generate(&WorkloadSpec {
                contract: params.contract,
                n_aus: 12,
                n_objects: objects.min(4),
                seed: params.seed + point as u64 + 7919,
                burn: 0,
            });
            let mined = mine_concurrent(
                &MinerConfig::new(threads.min(8), protocol).recording(),
                &sample.aus,
                &sample.keys,
                GENESIS_HASH,
            )?;
            let h = mined.history.expect("recorded");
            if !is_csr(&h) && protocol == Protocol::Bto {
                bail!("oracle failure: non-CSR history at point {point} ({proto})");
            }
            if !bg_matches_history(&mined.block.graph, &h) {
                bail!("oracle failure: graph does not match history at point {point} ({proto})");
            }

            let conc = mean_ms(&conc_ms);
            rows.push(row(&proto, "miner", "concurrent", conc, serial_mine / conc, aborts));
            let serial_val = mean_ms(&serial_val_ms);
            rows.push(row(&proto, "validator", "serial", serial_val, 1.0, 0));
            if !dec_ms.is_empty() {
                let m = mean_ms(&dec_ms);
                rows.push(row(&proto, "validator", "decentralized", m, serial_val / m, 0));
            }
            if !fj_ms.is_empty() {
                let m = mean_ms(&fj_ms);
                rows.push(row(&proto, "validator", "forkjoin", m, serial_val / m, 0));
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "contract,workload,protocol,role,mode,threads,aus,objects,meanTimeMs,speedup,aborts";

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.3},{:.3},{}",
            r.contract,
            r.workload,
            r.protocol,
            r.role,
            r.mode,
            r.threads,
            r.aus,
            r.objects,
            r.mean_time_ms,
            r.speedup,
            r.aborts
        )
        .unwrap();
    }
    out
}

pub fn to_json(rows: &[ResultRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

/// Mean speedup per (protocol, role/mode) across grid points, one column per
/// (contract, workload) pair present in the rows. Serial rows are baselines
/// and not shown.
pub fn speedup_table(rows: &[ResultRow]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut labels: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        if r.mode == "serial" || r.protocol == "-" {
            continue;
        }
        let col = (r.contract.clone(), r.workload.clone());
        if !columns.contains(&col) {
            columns.push(col);
        }
        let label = (r.protocol.clone(), r.role.clone(), r.mode.clone());
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    let pretty = |l: &(String, String, String)| -> String {
        let proto = l.0.to_uppercase();
        match l.2.as_str() {
            "concurrent" => format!("{proto} Miner"),
            "decentralized" => format!("{proto} Decentralized Validator"),
            "forkjoin" => format!("{proto} Fork-join Validator"),
            other => format!("{proto} {other}"),
        }
    };
    let width = labels.iter().map(|l| pretty(l).len()).max().unwrap_or(8).max(8);
    let col_name = |c: &(String, String)| format!("{} {}", c.0, c.1);
    let mut out = String::new();
    write!(out, "{:width$}", "speedup", width = width).unwrap();
    for col in &columns {
        let name = col_name(col);
        write!(out, " | {:>w$}", name, w = name.len().max(8)).unwrap();
    }
    out.push('\n');
    for label in &labels {
        write!(out, "{:width$}", pretty(label), width = width).unwrap();
        for col in &columns {
            let w = col_name(col).len().max(8);
            let matching: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    (&r.contract, &r.workload) == (&col.0, &col.1)
                        && (&r.protocol, &r.role, &r.mode) == (&label.0, &label.1, &label.2)
                })
                .map(|r| r.speedup)
                .collect();
            if matching.is_empty() {
                write!(out, " | {:>w$}", "-", w = w).unwrap();
            } else {
                let mean = matching.iter().sum::<f64>() / matching.len() as f64;
                write!(out, " | {:>w$.2}", mean, w = w).unwrap();
            }
        }
        out.push('\n');
    }
    out
}
