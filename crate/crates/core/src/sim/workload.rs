//! Deterministic workload generation. Every envelope a scenario will ever
//! submit is built up front: output identifiers are a function of the
//! transaction digest, so even chained transactions (meter readings, ballot
//! sequences) can be prepared before their parents commit. Submission rounds
//! are assigned here too, leaving the runner a pure event loop.

use std::collections::BTreeSet;

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::contracts::cscoin::{self, Account, Move};
use crate::contracts::{self, contract_id, genesis_tokens, smet, standard_registry, svote};
use crate::crypto::elgamal::ElgamalKeypair;
use crate::crypto::hash::Digest;
use crate::crypto::pedersen::{commit, random_blinding};
use crate::crypto::sig::SigningKey;
use crate::encoding::Encode;
use crate::model::{
    genesis_object, net_outputs, ActiveSet, ContractId, Object, ObjectId, OutputSpec, Trace,
    Transaction, TxEnvelope, TypeTag,
};
use crate::shard::{shard_of, ShardId};
use crate::validity::{CheckerContext, CheckerRegistry, ContractChecker};

use super::config::{Config, WorkloadKind};
use super::stream;

/// The stand-in contract used by the plain workload: objects move, nothing
/// else is constrained.
pub const WIDGET: &str = "sim-widget";

pub fn widget_contract() -> ContractId {
    contract_id(WIDGET)
}

pub fn widget_type() -> TypeTag {
    TypeTag::new(widget_contract(), "Widget")
}

fn widget_checker(_: &CheckerContext<'_>) -> bool {
    true
}

/// The standard registry plus the widget contract.
pub fn sim_registry() -> CheckerRegistry {
    let mut reg = standard_registry();
    reg.register(ContractChecker {
        contract: widget_contract(),
        name: WIDGET.into(),
        types: BTreeSet::from(["Widget".to_string()]),
        checker: widget_checker,
    });
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Plain,
    Coin,
    Meter,
    Vote,
    /// One of a same-round pair racing for a shared input.
    Race,
    /// A later transaction re-spending an input the race already settled.
    Reuse,
}

impl TxKind {
    pub fn label(self) -> &'static str {
        match self {
            TxKind::Plain => "plain",
            TxKind::Coin => "coin",
            TxKind::Meter => "meter",
            TxKind::Vote => "vote",
            TxKind::Race => "race",
            TxKind::Reuse => "reuse",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannedTx {
    pub submit_round: u64,
    pub envelope: TxEnvelope,
    pub kind: TxKind,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub genesis: Vec<Object>,
    /// Sorted by submission round.
    pub schedule: Vec<PlannedTx>,
    /// Digest pairs that race for a shared input in the same round.
    pub conflict_pairs: Vec<(Digest, Digest)>,
    /// For the double-spend workload: the contested object and the three
    /// transaction digests aimed at it (two racers, one re-spender).
    pub contested: Vec<(ObjectId, [Digest; 3])>,
    /// Sum of every minted account balance; conserved by valid histories.
    pub initial_supply: u64,
    pub last_submit_round: u64,
}

impl Workload {
    pub fn build(cfg: &Config) -> Workload {
        match cfg.workload {
            WorkloadKind::Plain => build_plain(cfg),
            WorkloadKind::DoubleSpend => build_double_spend(cfg),
        }
    }
}

/// Mints genesis widgets with fresh indices, optionally pinning or avoiding
/// a home shard by rejection sampling the genesis index.
struct Mint {
    seed: u64,
    next_index: u64,
    shard_count: u32,
    genesis: Vec<Object>,
}

impl Mint {
    fn new(seed: u64, shard_count: u32) -> Mint {
        Mint {
            seed,
            // Low indices are reserved for the contract tokens.
            next_index: 100,
            shard_count,
            genesis: genesis_tokens(seed),
        }
    }

    fn widget(&mut self, nonce: u64) -> Object {
        self.place(nonce, |_| true)
    }

    fn widget_on(&mut self, nonce: u64, shard: ShardId) -> Object {
        self.place(nonce, |s| s == shard)
    }

    fn widget_off(&mut self, nonce: u64, shard: ShardId) -> Object {
        if self.shard_count == 1 {
            return self.widget(nonce);
        }
        self.place(nonce, |s| s != shard)
    }

    fn place(&mut self, nonce: u64, ok: impl Fn(ShardId) -> bool) -> Object {
        loop {
            let obj = genesis_object(
                self.seed,
                self.next_index,
                widget_type(),
                nonce.to_be_bytes().to_vec(),
            );
            self.next_index += 1;
            if ok(shard_of(&obj.id, self.shard_count)) {
                self.genesis.push(obj.clone());
                return obj;
            }
        }
    }

    fn account(&mut self, owner: &SigningKey, balance: u64) -> Object {
        let payload = Account {
            owner: owner.verify_key(),
            balance,
        }
        .encode();
        let obj = genesis_object(
            self.seed,
            self.next_index,
            TypeTag::new(contract_id(contracts::CSCOIN), "Account"),
            payload,
        );
        self.next_index += 1;
        self.genesis.push(obj.clone());
        obj
    }

    fn token(&self, name: &str) -> Object {
        let tag = contracts::token_type(name);
        self.genesis
            .iter()
            .find(|o| o.type_tag == tag)
            .expect("genesis token minted")
            .clone()
    }
}

fn envelope(trace: Trace, view: &[&Object]) -> TxEnvelope {
    let set = ActiveSet::from_objects(view.iter().map(|o| (*o).clone()));
    TxEnvelope::package(Transaction::new(vec![trace]), &set)
}

/// An unconstrained widget spend: consume `inputs`, emit `outputs` fresh
/// widgets whose payloads carry `nonce` for uniqueness.
fn spend(inputs: &[&Object], outputs: usize, nonce: u64) -> TxEnvelope {
    spend_envelope(inputs, outputs, nonce)
}

/// A widget spend whose outputs all live on the first input's shard, so a
/// committed transaction costs its shards nothing beyond the two ordered
/// protocol items. Output ids derive from the trace identity, which covers
/// the nonce through `lparams`, so the nonce is redrawn until placement
/// works out.
fn local_spend(
    inputs: &[&Object],
    outputs: usize,
    shard_count: u32,
    next: &mut impl FnMut() -> u64,
) -> TxEnvelope {
    let home = shard_of(&inputs[0].id, shard_count);
    loop {
        let env = spend_envelope(inputs, outputs, next());
        if net_outputs(&env.tx)
            .iter()
            .all(|o| shard_of(&o.id, shard_count) == home)
        {
            return env;
        }
    }
}

fn spend_envelope(inputs: &[&Object], outputs: usize, nonce: u64) -> TxEnvelope {
    let specs = (0..outputs as u64)
        .map(|j| OutputSpec {
            type_tag: widget_type(),
            payload: [nonce.to_be_bytes(), j.to_be_bytes()].concat(),
        })
        .collect();
    let trace = Trace::build(
        widget_contract(),
        "spend",
        inputs.iter().map(|o| o.id).collect(),
        vec![],
        specs,
        nonce.to_be_bytes().to_vec(),
        Vec::new(),
        vec![],
    );
    envelope(trace, inputs)
}

fn draw_kind(rng: &mut ChaCha20Rng, cfg: &Config) -> TxKind {
    let weights = [cfg.mix_plain, cfg.mix_coin, cfg.mix_meter, cfg.mix_vote];
    let kinds = [TxKind::Plain, TxKind::Coin, TxKind::Meter, TxKind::Vote];
    let total: u64 = weights.iter().sum();
    let mut r = rng.next_u64() % total;
    for (w, k) in weights.iter().zip(kinds) {
        if r < *w {
            return k;
        }
        r -= w;
    }
    unreachable!("weights sum checked by validation")
}

/// Rounds to leave between a transaction and one consuming its outputs:
/// worst-case decision time, plus the shipping window and transit, plus
/// a little slack.
fn link_gap(cfg: &Config) -> u64 {
    cfg.decision_bound() + cfg.create_window + 2 * cfg.max_delay + 4
}

fn build_plain(cfg: &Config) -> Workload {
    let mut rng = stream(cfg.seed, b"workload");
    let mut mint = Mint::new(cfg.seed, cfg.shards);
    let mut schedule = Vec::new();
    let mut conflict_pairs = Vec::new();
    let mut initial_supply = 0u64;
    let mut nonce = 0u64;
    let mut next = || {
        nonce += 1;
        nonce
    };

    let mut slot = 0u64;
    let gap = link_gap(cfg);
    // The per-contract token threads: the round after which the re-issued
    // token is safely spendable again.
    let mut meter_token = mint.token(contracts::SMET);
    let mut meter_free = 0u64;
    let mut vote_token = mint.token(contracts::SVOTE);
    let mut vote_free = 0u64;

    let plan = |schedule: &mut Vec<PlannedTx>, round, env: TxEnvelope, kind| {
        schedule.push(PlannedTx {
            submit_round: round,
            envelope: env,
            kind,
        });
    };

    // Input homes rotate with the transaction index, so widening a
    // transaction spreads it over more shards instead of piling onto one.
    let mut turn = 0u32;
    let spot = |turn: u32, j: usize| (turn + j as u32) % cfg.shards;

    // Conflicting pairs first: both members consume the same first widget in
    // the same round, so exactly one can win.
    let pair_count = ((cfg.tx_count as f64) * cfg.conflict_fraction / 2.0).floor() as usize;
    for _ in 0..pair_count {
        let round = slot / cfg.rate;
        slot += 2;
        let shared = mint.widget_on(next(), spot(turn, 0));
        let mut a_inputs = vec![shared.clone()];
        let mut b_inputs = vec![shared];
        for j in 1..cfg.inputs_per_tx {
            a_inputs.push(mint.widget_on(next(), spot(turn, j)));
            b_inputs.push(mint.widget_on(next(), spot(turn, j)));
        }
        turn += 1;
        let a = local_spend(
            &a_inputs.iter().collect::<Vec<_>>(),
            cfg.outputs_per_tx,
            cfg.shards,
            &mut next,
        );
        let b = local_spend(
            &b_inputs.iter().collect::<Vec<_>>(),
            cfg.outputs_per_tx,
            cfg.shards,
            &mut next,
        );
        conflict_pairs.push((a.digest(), b.digest()));
        plan(&mut schedule, round, a, TxKind::Race);
        plan(&mut schedule, round, b, TxKind::Race);
    }

    let mut planned = 2 * pair_count;
    while planned < cfg.tx_count {
        match draw_kind(&mut rng, cfg) {
            TxKind::Plain => {
                let round = slot / cfg.rate;
                slot += 1;
                let inputs: Vec<Object> = (0..cfg.inputs_per_tx)
                    .map(|j| mint.widget_on(next(), spot(turn, j)))
                    .collect();
                turn += 1;
                let env = local_spend(
                    &inputs.iter().collect::<Vec<_>>(),
                    cfg.outputs_per_tx,
                    cfg.shards,
                    &mut next,
                );
                plan(&mut schedule, round, env, TxKind::Plain);
                planned += 1;
            }
            TxKind::Coin => {
                let round = slot / cfg.rate;
                slot += 1;
                let balance = 1_000u64;
                let from_key = SigningKey::generate(&mut rng);
                let to_key = SigningKey::generate(&mut rng);
                let from = mint.account(&from_key, balance);
                let to = mint.account(&to_key, balance);
                initial_supply += 2 * balance;
                let amount = rng.next_u64() % (balance / 2) + 1;
                let trace = cscoin::transfer(
                    &[&from, &to],
                    &[Move {
                        from: 0,
                        to: 1,
                        amount,
                    }],
                    0,
                    0,
                    &[&from_key],
                )
                .expect("funded transfer builds");
                plan(
                    &mut schedule,
                    round,
                    envelope(trace, &[&from, &to]),
                    TxKind::Coin,
                );
                planned += 1;
            }
            TxKind::Meter => {
                let base = (slot / cfg.rate).max(meter_free);
                slot += 1;
                let key = SigningKey::generate(&mut rng);
                let create = envelope(
                    smet::create_meter(&meter_token, key.verify_key()),
                    &[&meter_token],
                );
                let outs = net_outputs(&create.tx);
                let token_tag = contracts::token_type(contracts::SMET);
                meter_token = outs
                    .iter()
                    .find(|o| o.type_tag == token_tag)
                    .expect("token re-issued")
                    .clone();
                meter_free = base + gap;
                let meter = outs
                    .iter()
                    .find(|o| o.type_tag != token_tag)
                    .expect("meter minted")
                    .clone();

                let values = [rng.next_u64() % 50, rng.next_u64() % 50];
                let blindings = [random_blinding(&mut rng), random_blinding(&mut rng)];
                let commitments = values
                    .iter()
                    .zip(&blindings)
                    .map(|(v, r)| commit(*v, r))
                    .collect();
                let reading_trace = smet::add_reading(&meter, 1, commitments, &key)
                    .expect("fresh period reading builds");
                let reading = envelope(reading_trace, &[&meter]);
                let meter2 = net_outputs(&reading.tx)[0].clone();

                let tariffs = [2u64, 3u64];
                let openings: Vec<(u64, _)> =
                    values.iter().copied().zip(blindings.iter().copied()).collect();
                let bill_trace = smet::compute_bill(&meter2, 1, &tariffs, &openings)
                    .expect("opened bill builds");
                let bill = envelope(bill_trace, &[&meter2]);

                plan(&mut schedule, base, create, TxKind::Meter);
                plan(&mut schedule, base + gap, reading, TxKind::Meter);
                plan(&mut schedule, base + 2 * gap, bill, TxKind::Meter);
                planned += 3;
            }
            TxKind::Vote => {
                let base = (slot / cfg.rate).max(vote_free);
                slot += 1;
                let authority = SigningKey::generate(&mut rng);
                let voters: Vec<SigningKey> =
                    (0..2).map(|_| SigningKey::generate(&mut rng)).collect();
                let voter_keys: Vec<_> = voters.iter().map(|k| k.verify_key()).collect();
                let tally_kp = ElgamalKeypair::generate(&mut rng);
                let options = ["yes".to_string(), "no".to_string()];

                let create_trace = svote::create_election(
                    &vote_token,
                    &authority,
                    &options,
                    &voter_keys,
                    tally_kp.public(),
                    &mut rng,
                );
                let create = envelope(create_trace, &[&vote_token]);
                let outs = net_outputs(&create.tx);
                let token_tag = contracts::token_type(contracts::SVOTE);
                vote_token = outs
                    .iter()
                    .find(|o| o.type_tag == token_tag)
                    .expect("token re-issued")
                    .clone();
                vote_free = base + gap;
                let mut election = outs
                    .iter()
                    .find(|o| o.type_tag != token_tag)
                    .expect("election minted")
                    .clone();

                let mut links = vec![(base, create)];
                for (i, voter) in voters.iter().enumerate() {
                    let choice = (rng.next_u64() % 2) as usize;
                    let ballot_trace = svote::add_vote(&election, voter, choice, &mut rng)
                        .expect("rolled voter ballot builds");
                    let ballot = envelope(ballot_trace, &[&election]);
                    election = net_outputs(&ballot.tx)[0].clone();
                    links.push((base + (i as u64 + 1) * gap, ballot));
                }
                let tally_trace =
                    svote::tally(&election, tally_kp.secret()).expect("tally builds");
                links.push((base + 3 * gap, envelope(tally_trace, &[&election])));

                planned += links.len();
                for (round, env) in links {
                    plan(&mut schedule, round, env, TxKind::Vote);
                }
            }
            TxKind::Race | TxKind::Reuse => unreachable!("not drawn from the mix"),
        }
    }

    finish(mint, schedule, conflict_pairs, Vec::new(), initial_supply)
}

fn build_double_spend(cfg: &Config) -> Workload {
    let bad = cfg
        .dishonest_shard()
        .expect("validation requires a liar-majority shard");
    let mut mint = Mint::new(cfg.seed, cfg.shards);
    let mut schedule = Vec::new();
    let mut conflict_pairs = Vec::new();
    let mut contested = Vec::new();
    let mut nonce = 0u64;
    let mut next = || {
        nonce += 1;
        nonce
    };

    let triples = (cfg.tx_count / 3).max(1);
    let reuse_gap = cfg.decision_bound() + 6;
    let mut slot = 0u64;
    for _ in 0..triples {
        let round = slot / cfg.rate;
        slot += 2;
        // The contested object lives on the dishonest shard; the private
        // inputs live elsewhere so an honest shard witnesses every decision.
        let b = mint.widget_on(next(), bad);
        let a0 = mint.widget_off(next(), bad);
        let a1 = mint.widget_off(next(), bad);
        let a2 = mint.widget_off(next(), bad);

        let tx1 = spend(&[&a0, &b], 1, next());
        let tx2 = spend(&[&a1, &b], 1, next());
        let tx3 = spend(&[&a2, &b], 1, next());
        conflict_pairs.push((tx1.digest(), tx2.digest()));
        contested.push((b.id, [tx1.digest(), tx2.digest(), tx3.digest()]));
        schedule.push(PlannedTx {
            submit_round: round,
            envelope: tx1,
            kind: TxKind::Race,
        });
        schedule.push(PlannedTx {
            submit_round: round,
            envelope: tx2,
            kind: TxKind::Race,
        });
        schedule.push(PlannedTx {
            submit_round: round + reuse_gap,
            envelope: tx3,
            kind: TxKind::Reuse,
        });
    }

    finish(mint, schedule, conflict_pairs, contested, 0)
}

fn finish(
    mint: Mint,
    mut schedule: Vec<PlannedTx>,
    conflict_pairs: Vec<(Digest, Digest)>,
    contested: Vec<(ObjectId, [Digest; 3])>,
    initial_supply: u64,
) -> Workload {
    schedule.sort_by_key(|p| p.submit_round);
    let last_submit_round = schedule.iter().map(|p| p.submit_round).max().unwrap_or(0);
    Workload {
        genesis: mint.genesis,
        schedule,
        conflict_pairs,
        contested,
        initial_supply,
        last_submit_round,
    }
}
