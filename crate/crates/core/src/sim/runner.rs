//! The single-threaded event loop: a round-based network with seeded delays
//! and drops, one ordering pipeline per shard, and the full node protocol in
//! between. Every source of nondeterminism is a labelled substream of the
//! scenario seed, so a run is a pure function of its configuration.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand_chacha::rand_core::RngCore;

use crate::audit::{write_chain, ChainHeader, ChainRecord};
use crate::contracts::cscoin;
use crate::crypto::hash::Digest;
use crate::crypto::sig::SigningKey;
use crate::model::{ActiveSet, TxEnvelope};
use crate::node::{Dest, Node, NodeAddr, WireMsg};
use crate::orderer::{FaultBehavior, Orderer, Sequenced};
use crate::sbac::SbacMessage;
use crate::shard::{concerned_shards, Decision, ShardId};
use crate::validity::CheckerRegistry;

use super::config::Config;
use super::metrics::{reason_class, render_csv, MetricsRow, Summary};
use super::stream;
use super::workload::{sim_registry, TxKind, Workload};

/// What became of one submitted transaction.
#[derive(Debug, Clone)]
pub struct TxRecord {
    pub kind: TxKind,
    pub submit_round: u64,
    /// First honest observation: (round, decision).
    pub resolved: Option<(u64, Decision)>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: Config,
    pub workload: Workload,
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub txs: BTreeMap<Digest, TxRecord>,
    /// Committed digests ordered by (resolution round, digest).
    pub commit_order: Vec<Digest>,
    /// Every node's exported chain.
    pub chains: Vec<(NodeAddr, ChainHeader, Vec<ChainRecord>)>,
    /// Each shard's final active set, seen by its lowest honest member.
    pub shard_active: Vec<ActiveSet>,
}

impl RunOutput {
    /// The union of the per-shard active sets: the system's final state.
    pub fn union_active(&self) -> ActiveSet {
        ActiveSet::from_objects(
            self.shard_active
                .iter()
                .flat_map(|s| s.iter().cloned())
                .collect::<Vec<_>>(),
        )
    }

    pub fn envelope(&self, txd: &Digest) -> Option<&TxEnvelope> {
        self.workload
            .schedule
            .iter()
            .map(|p| &p.envelope)
            .find(|e| e.digest() == *txd)
    }

    pub fn chain_of(&self, shard: ShardId, node: usize) -> (&ChainHeader, &[ChainRecord]) {
        let (_, header, records) = self
            .chains
            .iter()
            .find(|(a, _, _)| a.shard == shard && a.index == node)
            .expect("addressed node exists");
        (header, records)
    }

    /// Write the on-disk form: metrics, summary, config echo, and one chain
    /// file per node.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), render_csv(&self.rows))?;
        std::fs::write(dir.join("summary.txt"), self.summary.render())?;
        std::fs::write(dir.join("config.txt"), self.config.render())?;
        let chains = dir.join("chains");
        std::fs::create_dir_all(&chains)?;
        for (addr, header, records) in &self.chains {
            let name = format!("shard-{}-node-{}.chain", addr.shard, addr.index);
            write_chain(&chains.join(name), header, records)
                .map_err(|e| io::Error::other(e.to_string()))?;
        }
        Ok(())
    }
}

struct Client {
    envelope: TxEnvelope,
    kind: TxKind,
    submit_round: u64,
    shards: Vec<ShardId>,
    noticed: bool,
}

#[derive(Debug)]
struct Network {
    queue: BTreeMap<u64, Vec<(u64, Dest, WireMsg)>>,
    next_seq: u64,
    sent: u64,
    delivered: u64,
    dropped: u64,
    min_delay: u64,
    max_delay: u64,
    /// Drop probability as a numerator over 2^53.
    drop_threshold: u64,
}

impl Network {
    fn new(cfg: &Config) -> Network {
        Network {
            queue: BTreeMap::new(),
            next_seq: 0,
            sent: 0,
            delivered: 0,
            dropped: 0,
            min_delay: cfg.min_delay,
            max_delay: cfg.max_delay,
            drop_threshold: (cfg.drop * (1u64 << 53) as f64) as u64,
        }
    }

    fn send(&mut self, rng: &mut impl RngCore, round: u64, to: Dest, msg: WireMsg) {
        self.sent += 1;
        let roll = rng.next_u64() >> 11;
        let span = self.max_delay - self.min_delay + 1;
        let delay = self.min_delay + rng.next_u64() % span;
        if roll < self.drop_threshold {
            self.dropped += 1;
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.entry(round + delay).or_default().push((seq, to, msg));
    }

    fn due(&mut self, round: u64) -> Vec<(Dest, WireMsg)> {
        let mut batch = self.queue.remove(&round).unwrap_or_default();
        batch.sort_by_key(|(seq, _, _)| *seq);
        self.delivered += batch.len() as u64;
        batch.into_iter().map(|(_, to, msg)| (to, msg)).collect()
    }

    fn pending(&self) -> u64 {
        self.queue.values().map(|v| v.len() as u64).sum()
    }
}

/// Execute one scenario start to finish.
pub fn run(cfg: &Config) -> RunOutput {
    cfg.validate().expect("validated configuration");
    let registry = sim_registry();
    let workload = Workload::build(cfg);
    run_prepared(cfg, workload, &registry)
}

/// Like [`run`], but with the workload already built (so callers can inspect
/// the schedule, or stretch `rounds` to fit it, before running).
pub fn run_prepared(cfg: &Config, workload: Workload, registry: &CheckerRegistry) -> RunOutput {
    let params = cfg.params();
    let mut rng_keys = stream(cfg.seed, b"keys");
    let mut rng_net = stream(cfg.seed, b"net");

    let keys: Vec<Vec<SigningKey>> = (0..cfg.shards)
        .map(|_| {
            (0..cfg.nodes_per_shard)
                .map(|_| SigningKey::generate(&mut rng_keys))
                .collect()
        })
        .collect();
    let directory: Vec<Vec<_>> = keys
        .iter()
        .map(|shard| shard.iter().map(|k| k.verify_key()).collect())
        .collect();

    let mut nodes: Vec<Vec<Node>> = (0..cfg.shards)
        .map(|s| {
            (0..cfg.nodes_per_shard)
                .map(|i| {
                    Node::new(
                        NodeAddr { shard: s, index: i },
                        cfg.behavior(s, i),
                        keys[s as usize][i].clone(),
                        directory.clone(),
                        params.clone(),
                        &workload.genesis,
                    )
                })
                .collect()
        })
        .collect();

    let mut orderers: Vec<Orderer<SbacMessage>> = (0..cfg.shards)
        .map(|s| {
            let silent = (0..cfg.nodes_per_shard)
                .filter(|i| cfg.behavior(s, *i) == FaultBehavior::Silent)
                .count();
            Orderer::new(cfg.nodes_per_shard, silent, cfg.latency).with_capacity(cfg.capacity)
        })
        .collect();

    let mut clients: Vec<Client> = workload
        .schedule
        .iter()
        .map(|p| Client {
            envelope: p.envelope.clone(),
            kind: p.kind,
            submit_round: p.submit_round,
            shards: concerned_shards(&p.envelope, cfg.shards)
                .expect("workload transactions touch at least one object")
                .into_iter()
                .collect(),
            noticed: false,
        })
        .collect();
    let client_index: BTreeMap<Digest, usize> = clients
        .iter()
        .enumerate()
        .map(|(i, c)| (c.envelope.digest(), i))
        .collect();

    let mut net = Network::new(cfg);
    let mut txs: BTreeMap<Digest, TxRecord> = BTreeMap::new();
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut aborts_by_reason: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut submitted = 0u64;
    let mut committed = 0u64;
    let mut aborted = 0u64;

    let grace = 8 + 2 * cfg.max_delay;
    let total_rounds = cfg.rounds + grace;

    for round in 0..total_rounds {
        // 1. Deliver everything due this round.
        for (to, msg) in net.due(round) {
            match to {
                Dest::Node(addr) => {
                    nodes[addr.shard as usize][addr.index].handle_packet(msg, round)
                }
                Dest::Client(txd) => {
                    if let Some(i) = client_index.get(&txd) {
                        clients[*i].noticed = true;
                    }
                }
            }
        }

        // 2. Clients submit and retry. New activity stops once the scenario
        // proper ends; the grace tail only drains what is in flight.
        if round < cfg.rounds {
            for c in clients.iter_mut() {
                if round < c.submit_round || c.noticed {
                    continue;
                }
                if (round - c.submit_round) % cfg.client_retry != 0 {
                    continue;
                }
                if round == c.submit_round {
                    submitted += 1;
                    txs.insert(
                        c.envelope.digest(),
                        TxRecord {
                            kind: c.kind,
                            submit_round: round,
                            resolved: None,
                        },
                    );
                }
                for shard in &c.shards {
                    for index in 0..=cfg.f {
                        net.send(
                            &mut rng_net,
                            round,
                            Dest::Node(NodeAddr {
                                shard: *shard,
                                index,
                            }),
                            WireMsg::Sbac(SbacMessage::Prepare {
                                envelope: c.envelope.clone(),
                            }),
                        );
                    }
                }
            }
        }

        // 3. Protocol timers: relays, accept staging, shipping, sealing.
        for shard in nodes.iter_mut() {
            for node in shard.iter_mut() {
                node.drive(round);
            }
        }

        // 4. Collect sequencing submissions.
        for (s, shard) in nodes.iter_mut().enumerate() {
            for node in shard.iter_mut() {
                for (key, item) in node.take_submissions() {
                    orderers[s].submit(key, item, round);
                }
            }
        }

        // 5. Advance each shard's total order and feed it to the members.
        for (s, orderer) in orderers.iter_mut().enumerate() {
            let batch: Vec<Sequenced<SbacMessage>> = orderer.step(round);
            for item in &batch {
                for node in nodes[s].iter_mut() {
                    node.handle_sequenced(item, registry, round);
                }
            }
        }

        // 6. Record first honest resolutions.
        for shard in nodes.iter_mut() {
            for node in shard.iter_mut() {
                if node.behavior() != FaultBehavior::Honest {
                    node.take_events();
                    continue;
                }
                for ev in node.take_events() {
                    let Some(rec) = txs.get_mut(&ev.txd) else {
                        continue;
                    };
                    if rec.resolved.is_some() {
                        continue;
                    }
                    let decision = node
                        .resolution(&ev.txd)
                        .expect("resolved event implies a decision")
                        .clone();
                    if let Decision::Abort(reason) = &decision {
                        *aborts_by_reason.entry(reason_class(reason)).or_default() += 1;
                        aborted += 1;
                    } else {
                        committed += 1;
                    }
                    rec.resolved = Some((ev.round, decision));
                }
            }
        }

        // 7. Ship outboxes through the lossy network.
        for shard in nodes.iter_mut() {
            for node in shard.iter_mut() {
                for out in node.take_outbox() {
                    net.send(&mut rng_net, round, out.to, out.msg);
                }
            }
        }

        rows.push(MetricsRow {
            round,
            submitted,
            committed,
            aborted,
            inflight: submitted - committed - aborted,
            messages: net.sent,
        });

        // The scenario proper ends with every chain sealed; the grace tail
        // then lets head endorsements gather.
        if round + 1 == cfg.rounds {
            for shard in nodes.iter_mut() {
                for node in shard.iter_mut() {
                    node.seal_final();
                }
            }
        }
    }

    // Message conservation: everything sent was delivered, dropped, or is
    // still queued.
    debug_assert_eq!(net.sent, net.delivered + net.dropped + net.pending());

    let mut latencies: Vec<u64> = txs
        .values()
        .filter_map(|r| r.resolved.as_ref().map(|(round, _)| round - r.submit_round))
        .collect();
    latencies.sort_unstable();
    let latency_mean = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
    };
    let latency_p95 = if latencies.is_empty() {
        0
    } else {
        latencies[(latencies.len() * 95).div_ceil(100).max(1) - 1]
    };

    let mut commit_order: Vec<(u64, Digest)> = txs
        .iter()
        .filter_map(|(txd, rec)| match &rec.resolved {
            Some((round, Decision::Commit)) => Some((*round, *txd)),
            _ => None,
        })
        .collect();
    commit_order.sort();
    let commit_order: Vec<Digest> = commit_order.into_iter().map(|(_, d)| d).collect();

    let shard_active: Vec<ActiveSet> = (0..cfg.shards as usize)
        .map(|s| {
            let node = nodes[s]
                .iter()
                .find(|n| n.behavior() == FaultBehavior::Honest)
                .expect("every shard keeps at least one honest node");
            node.store().active_set()
        })
        .collect();

    let chains: Vec<(NodeAddr, ChainHeader, Vec<ChainRecord>)> = nodes
        .iter()
        .flat_map(|shard| shard.iter())
        .map(|n| {
            let (header, records) = n.export_chain();
            (n.addr(), header, records)
        })
        .collect();

    let supply = (workload.initial_supply > 0).then(|| {
        let union = ActiveSet::from_objects(
            shard_active
                .iter()
                .flat_map(|s| s.iter().cloned())
                .collect::<Vec<_>>(),
        );
        (
            workload.initial_supply,
            cscoin::circulating_supply(union.iter()),
        )
    });

    let summary = Summary {
        seed: cfg.seed,
        rounds: total_rounds,
        submitted,
        committed,
        aborted,
        unresolved: submitted - committed - aborted,
        aborts_by_reason,
        latency_mean,
        latency_p95,
        messages_sent: net.sent,
        messages_delivered: net.delivered,
        messages_dropped: net.dropped,
        messages_pending: net.pending(),
        supply,
    };

    RunOutput {
        config: cfg.clone(),
        workload,
        rows,
        summary,
        txs,
        commit_order,
        chains,
        shard_active,
    }
}
