//! Command-line entry points: run scenarios, compare throughput across
//! configs, audit exported chains, and benchmark the contract suite.
//!
//! Exit codes: 0 on success, 2 for an invalid config or unreadable chain,
//! 3 when an audit convicts a shard (the verdict names it).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::audit::{cross_audit, full_audit, read_chain, AuditVerdict, ChainHeader, ChainRecord};
use crate::contracts::cscoin::{self, Account, Move};
use crate::contracts::manage_shards::{self, NodeDescriptor};
use crate::contracts::{self, manage_contracts, smet, svote};
use crate::crypto::elgamal::ElgamalKeypair;
use crate::crypto::pedersen::{commit, random_blinding};
use crate::crypto::sig::SigningKey;
use crate::encoding::Encode;
use crate::model::{genesis_object, net_outputs, ActiveSet, Object, Trace, Transaction, TypeTag};
use crate::shard::ShardId;
use crate::sim::{self, trend, workload, Config};
use crate::validity::{check_trace, CheckerRegistry};

#[derive(Parser)]
#[command(
    name = "shardledger",
    version,
    about = "Deterministic sharded-ledger scenario runner and auditor",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario config; write metrics, summary, and chain files.
    Run {
        /// Scenario config file (`key = value` lines, `#` comments).
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every config file in a directory; print a throughput table.
    Trend {
        /// Directory of scenario configs, compared in file-name order.
        dir: PathBuf,
    },
    /// Replay and check every chain a run exported; cross-check shards.
    Audit {
        /// A run's output directory, or its chains/ subdirectory.
        dir: PathBuf,
    },
    /// Compare two shards' chains and convict provable double-dealing.
    CrossAudit { a: PathBuf, b: PathBuf },
    /// Build and check one trace per contract procedure; print sizes and times.
    BenchContracts,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let is_error = e.use_stderr();
            let _ = e.print();
            return if is_error { 2 } else { 0 };
        }
    };
    match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, &out),
        Cmd::Trend { dir } => cmd_trend(&dir),
        Cmd::Audit { dir } => cmd_audit(&dir),
        Cmd::CrossAudit { a, b } => cmd_cross_audit(&a, &b),
        Cmd::BenchContracts => cmd_bench(),
    }
}

fn cmd_run(config: &Path, out_dir: &Path) -> i32 {
    let cfg = match Config::load(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return 2;
        }
    };
    let output = sim::run(&cfg);
    if let Err(e) = output.write(out_dir) {
        eprintln!("cannot write {}: {e}", out_dir.display());
        return 2;
    }
    print!("{}", output.summary.render());
    0
}

fn cmd_trend(dir: &Path) -> i32 {
    let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect(),
        Err(e) => {
            eprintln!("cannot read {}: {e}", dir.display());
            return 2;
        }
    };
    files.sort();
    if files.is_empty() {
        eprintln!("no config files in {}", dir.display());
        return 2;
    }
    let mut points = Vec::new();
    for path in &files {
        let cfg = match Config::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("invalid config {}: {e}", path.display());
                return 2;
            }
        };
        let out = sim::run(&cfg);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        points.push(trend::point_of(&name, &out));
    }
    print!("{}", trend::render(&points));
    0
}

fn chain_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let chains_dir = if dir.join("chains").is_dir() {
        dir.join("chains")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(chains_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "chain"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_chain(path: &Path) -> Result<(ChainHeader, Vec<ChainRecord>), i32> {
    read_chain(path).map_err(|e| {
        eprintln!("unreadable chain {}: {e}", path.display());
        2
    })
}

fn cmd_audit(dir: &Path) -> i32 {
    let files = match chain_files(dir) {
        Ok(files) if !files.is_empty() => files,
        Ok(_) => {
            eprintln!("no .chain files under {}", dir.display());
            return 2;
        }
        Err(e) => {
            eprintln!("cannot read {}: {e}", dir.display());
            return 2;
        }
    };
    let mut loaded = Vec::new();
    for path in &files {
        match load_chain(path) {
            Ok((header, records)) => loaded.push((path.clone(), header, records)),
            Err(code) => return code,
        }
    }

    let reg = workload::sim_registry();
    let mut out = String::new();
    for (path, header, records) in &loaded {
        let report = full_audit(header, records, &reg);
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        writeln!(
            out,
            "chain\t{name}\tshard {}\tcheckpoints {}\t{}",
            report.shard,
            report.checkpoints,
            if report.is_clean() { "clean" } else { "findings" }
        )
        .expect("string write");
        out.push_str(&report.render());
    }

    // Cross-check one representative (first non-empty) chain per shard.
    let mut reps: BTreeMap<ShardId, usize> = BTreeMap::new();
    for (i, (_, header, records)) in loaded.iter().enumerate() {
        if !records.is_empty() {
            reps.entry(header.shard).or_insert(i);
        }
    }
    let reps: Vec<usize> = reps.into_values().collect();
    let mut guilty = false;
    for (n, i) in reps.iter().enumerate() {
        for j in &reps[n + 1..] {
            let (_, ha, ra) = &loaded[*i];
            let (_, hb, rb) = &loaded[*j];
            let cross = cross_audit((ha, ra), (hb, rb), &reg);
            writeln!(out, "cross-audit\tshard {}\tshard {}", ha.shard, hb.shard)
                .expect("string write");
            out.push_str(&cross.render());
            guilty |= matches!(cross.verdict, AuditVerdict::Guilty(_));
        }
    }
    print!("{out}");
    if guilty {
        3
    } else {
        0
    }
}

fn cmd_cross_audit(a: &Path, b: &Path) -> i32 {
    let (ha, ra) = match load_chain(a) {
        Ok(chain) => chain,
        Err(code) => return code,
    };
    let (hb, rb) = match load_chain(b) {
        Ok(chain) => chain,
        Err(code) => return code,
    };
    let reg = workload::sim_registry();
    let report = cross_audit((&ha, &ra), (&hb, &rb), &reg);
    print!("{}", report.render());
    match report.verdict {
        AuditVerdict::Ok => 0,
        AuditVerdict::Guilty(_) => 3,
    }
}

// ---------------------------------------------------------------------------
// bench-contracts
// ---------------------------------------------------------------------------

struct BenchRow {
    contract: &'static str,
    procedure: &'static str,
    trace_bytes: usize,
    build_us: u128,
    check_us: u128,
}

fn bench_one(
    contract: &'static str,
    procedure: &'static str,
    reg: &CheckerRegistry,
    alpha: &ActiveSet,
    iterations: u32,
    mut build: impl FnMut() -> Trace,
) -> BenchRow {
    let started = Instant::now();
    let mut trace = build();
    for _ in 1..iterations {
        trace = build();
    }
    let build_us = started.elapsed().as_micros() / iterations as u128;

    let started = Instant::now();
    for _ in 0..iterations {
        check_trace(&trace, alpha, reg).expect("honest trace checks");
    }
    let check_us = started.elapsed().as_micros() / iterations as u128;

    BenchRow {
        contract,
        procedure,
        trace_bytes: trace.encode().len(),
        build_us,
        check_us,
    }
}

fn cmd_bench() -> i32 {
    let reg = contracts::standard_registry();
    let mut rng = crate::sim::stream(0, b"bench");
    let seed = 0u64;
    let tokens = contracts::genesis_tokens(seed);
    let token = |name: &str| -> Object {
        let tag = contracts::token_type(name);
        tokens
            .iter()
            .find(|o| o.type_tag == tag)
            .expect("genesis token")
            .clone()
    };
    let single = |o: &Object| ActiveSet::from_objects([o.clone()]);
    let iters = 10;
    let mut rows = Vec::new();

    // manage-shards: create a roster.
    let ms_token = token(contracts::MANAGE_SHARDS);
    let roster: Vec<NodeDescriptor> = (0..4)
        .map(|i| NodeDescriptor {
            name: format!("node-{i}"),
            address: format!("sim://node/{i}"),
            key: SigningKey::generate(&mut rng).verify_key(),
        })
        .collect();
    rows.push(bench_one(
        "manage-shards",
        "create",
        &reg,
        &single(&ms_token),
        iters,
        || manage_shards::create(&ms_token, roster.clone()),
    ));

    // cscoin: initial issuance and a two-party transfer.
    let coin_token = token(contracts::CSCOIN);
    let holders: Vec<SigningKey> = (0..2).map(|_| SigningKey::generate(&mut rng)).collect();
    rows.push(bench_one(
        "cscoin",
        "init",
        &reg,
        &single(&coin_token),
        iters,
        || {
            cscoin::init(
                &coin_token,
                &[
                    (holders[0].verify_key(), 600),
                    (holders[1].verify_key(), 400),
                ],
            )
        },
    ));
    let account_tag = TypeTag::new(contracts::contract_id(contracts::CSCOIN), "Account");
    let from = genesis_object(
        seed,
        7_000,
        account_tag.clone(),
        Account {
            owner: holders[0].verify_key(),
            balance: 600,
        }
        .encode(),
    );
    let to = genesis_object(
        seed,
        7_001,
        account_tag,
        Account {
            owner: holders[1].verify_key(),
            balance: 400,
        }
        .encode(),
    );
    let transfer_alpha = ActiveSet::from_objects([from.clone(), to.clone()]);
    rows.push(bench_one(
        "cscoin",
        "transfer",
        &reg,
        &transfer_alpha,
        iters,
        || {
            cscoin::transfer(
                &[&from, &to],
                &[Move {
                    from: 0,
                    to: 1,
                    amount: 150,
                }],
                0,
                0,
                &[&holders[0]],
            )
            .expect("funded transfer")
        },
    ));

    // manage-contracts: register a checker.
    let mc_token = token(contracts::MANAGE_CONTRACTS);
    rows.push(bench_one(
        "manage-contracts",
        "register",
        &reg,
        &single(&mc_token),
        iters,
        || manage_contracts::registration(&mc_token, contracts::CSCOIN),
    ));

    // smet: meter lifecycle.
    let smet_token = token(contracts::SMET);
    let meter_key = SigningKey::generate(&mut rng);
    rows.push(bench_one(
        "smet",
        "create",
        &reg,
        &single(&smet_token),
        iters,
        || smet::create_meter(&smet_token, meter_key.verify_key()),
    ));
    let meter = net_outputs(&Transaction::new(vec![smet::create_meter(
        &smet_token,
        meter_key.verify_key(),
    )]))
    .into_iter()
    .find(|o| o.type_tag != contracts::token_type(contracts::SMET))
    .expect("meter object");
    let values = [13u64, 27u64];
    let blindings = [random_blinding(&mut rng), random_blinding(&mut rng)];
    let commitments: Vec<_> = values
        .iter()
        .zip(&blindings)
        .map(|(v, r)| commit(*v, r))
        .collect();
    rows.push(bench_one(
        "smet",
        "reading",
        &reg,
        &single(&meter),
        iters,
        || {
            smet::add_reading(&meter, 1, commitments.clone(), &meter_key)
                .expect("fresh period reading")
        },
    ));
    let meter2 = net_outputs(&Transaction::new(vec![smet::add_reading(
        &meter,
        1,
        commitments.clone(),
        &meter_key,
    )
    .expect("fresh period reading")]))
    .into_iter()
    .next()
    .expect("meter successor");
    let tariffs = [2u64, 3u64];
    let openings: Vec<(u64, _)> = values
        .iter()
        .copied()
        .zip(blindings.iter().copied())
        .collect();
    rows.push(bench_one(
        "smet",
        "bill",
        &reg,
        &single(&meter2),
        iters,
        || smet::compute_bill(&meter2, 1, &tariffs, &openings).expect("opened bill"),
    ));

    // svote: election lifecycle (ballots carry the zero-knowledge proofs).
    let svote_token = token(contracts::SVOTE);
    let authority = SigningKey::generate(&mut rng);
    let voters: Vec<SigningKey> = (0..2).map(|_| SigningKey::generate(&mut rng)).collect();
    let voter_keys: Vec<_> = voters.iter().map(|k| k.verify_key()).collect();
    let tally_kp = ElgamalKeypair::generate(&mut rng);
    let options = ["yes".to_string(), "no".to_string()];
    rows.push(bench_one(
        "svote",
        "create",
        &reg,
        &single(&svote_token),
        iters,
        || {
            svote::create_election(
                &svote_token,
                &authority,
                &options,
                &voter_keys,
                tally_kp.public(),
                &mut rng,
            )
        },
    ));
    let election = net_outputs(&Transaction::new(vec![svote::create_election(
        &svote_token,
        &authority,
        &options,
        &voter_keys,
        tally_kp.public(),
        &mut crate::sim::stream(1, b"bench-election"),
    )]))
    .into_iter()
    .find(|o| o.type_tag != contracts::token_type(contracts::SVOTE))
    .expect("election object");
    rows.push(bench_one(
        "svote",
        "vote",
        &reg,
        &single(&election),
        iters,
        || svote::add_vote(&election, &voters[0], 0, &mut rng).expect("rolled voter"),
    ));
    let election2 = net_outputs(&Transaction::new(vec![svote::add_vote(
        &election,
        &voters[0],
        0,
        &mut crate::sim::stream(2, b"bench-ballot"),
    )
    .expect("rolled voter")]))
    .into_iter()
    .next()
    .expect("election successor");
    rows.push(bench_one(
        "svote",
        "tally",
        &reg,
        &single(&election2),
        iters,
        || svote::tally(&election2, tally_kp.secret()).expect("authority tally"),
    ));

    let mut out = String::new();
    writeln!(
        out,
        "{:<18} {:<10} {:>11} {:>9} {:>9}",
        "contract", "procedure", "trace-bytes", "build-us", "check-us"
    )
    .expect("string write");
    for r in &rows {
        writeln!(
            out,
            "{:<18} {:<10} {:>11} {:>9} {:>9}",
            r.contract, r.procedure, r.trace_bytes, r.build_us, r.check_us
        )
        .expect("string write");
    }
    print!("{out}");
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orderer::FaultBehavior;

    fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, body).expect("write config");
        path
    }

    fn tmp(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).expect("mkdir");
        dir
    }

    #[test]
    fn run_rejects_bad_configs() {
        let dir = tmp("badcfg");
        let cfg = write_cfg(&dir, "bad.cfg", "no_such_key = 1\n");
        assert_eq!(cmd_run(&cfg, &dir.join("out")), 2);
        std::fs::remove_dir_all(&dir).expect("cleanup");
    }

    #[test]
    fn run_then_audit_honest_scenario_is_clean() {
        let dir = tmp("honest");
        let cfg = write_cfg(
            &dir,
            "honest.cfg",
            "seed = 3\ntx_count = 6\nrounds = 40\nrate = 2\n",
        );
        let out = dir.join("out");
        assert_eq!(cmd_run(&cfg, &out), 0);
        assert_eq!(cmd_audit(&out), 0);
        assert_eq!(cmd_audit(&out.join("chains")), 0);
        std::fs::remove_dir_all(&dir).expect("cleanup");
    }

    #[test]
    fn cross_audit_convicts_the_dishonest_shard() {
        let mut cfg = Config::default();
        cfg.workload = sim::WorkloadKind::DoubleSpend;
        cfg.tx_count = 3;
        cfg.rounds = 96;
        for i in 1..=3 {
            cfg.faults.insert((1, i), FaultBehavior::Liar);
        }
        let dir = tmp("ds");
        let out = sim::run(&cfg);
        out.write(&dir).expect("write run");
        let a = dir.join("chains/shard-0-node-0.chain");
        let b = dir.join("chains/shard-1-node-0.chain");
        assert_eq!(cmd_cross_audit(&a, &b), 3);
        assert_eq!(cmd_audit(&dir), 3);
        std::fs::remove_dir_all(&dir).expect("cleanup");
    }

    #[test]
    fn cross_audit_rejects_truncated_files() {
        let dir = tmp("trunc");
        let cfg = write_cfg(&dir, "s.cfg", "tx_count = 4\nrounds = 40\n");
        let out = dir.join("out");
        assert_eq!(cmd_run(&cfg, &out), 0);
        let chain = out.join("chains/shard-0-node-0.chain");
        let bytes = std::fs::read(&chain).expect("chain bytes");
        let cut = dir.join("cut.chain");
        std::fs::write(&cut, &bytes[..bytes.len() - 3]).expect("write cut");
        assert_eq!(
            cmd_cross_audit(&cut, &out.join("chains/shard-1-node-0.chain")),
            2
        );
        std::fs::remove_dir_all(&dir).expect("cleanup");
    }

    #[test]
    fn trend_runs_every_config_in_name_order() {
        let dir = tmp("trend");
        write_cfg(
            &dir,
            "a-k1.cfg",
            "shards = 1\ntx_count = 6\nrounds = 60\nrate = 4\ncapacity = 2\n",
        );
        write_cfg(
            &dir,
            "b-k2.cfg",
            "shards = 2\ntx_count = 6\nrounds = 60\nrate = 4\ncapacity = 2\n",
        );
        assert_eq!(cmd_trend(&dir), 0);
        std::fs::remove_dir_all(&dir).expect("cleanup");
    }
}
