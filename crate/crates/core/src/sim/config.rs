//! Scenario configuration: a plain-text `key = value` format with `#`
//! comments. Unknown keys are errors — a typo must never silently run a
//! different experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::node::Params;
use crate::orderer::FaultBehavior;
use crate::shard::ShardId;

/// What the scenario's clients submit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    /// Independent and (optionally) conflicting object transfers, plus the
    /// configured contract mix.
    Plain,
    /// Racing pairs aimed at a dishonest shard, each followed by a
    /// transaction reusing the contested object — the double-spend bait.
    DoubleSpend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub shards: u32,
    pub nodes_per_shard: usize,
    pub f: usize,
    pub min_delay: u64,
    pub max_delay: u64,
    pub drop: f64,
    pub rounds: u64,
    pub epoch: u64,
    pub delta1: u64,
    pub delta2: u64,
    pub latency: u64,
    /// Sequencing slots per shard per round; 0 = unbounded.
    pub capacity: usize,
    pub tx_count: usize,
    pub inputs_per_tx: usize,
    pub outputs_per_tx: usize,
    /// Fraction of transactions that arrive as same-round pairs sharing an
    /// input.
    pub conflict_fraction: f64,
    /// Client submissions started per round.
    pub rate: u64,
    /// Rounds between a client's resubmissions while it has no verdict.
    pub client_retry: u64,
    pub create_window: u64,
    pub workload: WorkloadKind,
    /// Relative weights of transaction kinds in the plain workload.
    pub mix_plain: u64,
    pub mix_coin: u64,
    pub mix_meter: u64,
    pub mix_vote: u64,
    pub faults: BTreeMap<(ShardId, usize), FaultBehavior>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            shards: 2,
            nodes_per_shard: 4,
            f: 1,
            min_delay: 1,
            max_delay: 2,
            drop: 0.0,
            rounds: 64,
            epoch: 16,
            delta1: 4,
            delta2: 8,
            latency: 2,
            capacity: 0,
            tx_count: 16,
            inputs_per_tx: 1,
            outputs_per_tx: 1,
            conflict_fraction: 0.0,
            rate: 4,
            client_retry: 2,
            create_window: 8,
            workload: WorkloadKind::Plain,
            mix_plain: 1,
            mix_coin: 0,
            mix_meter: 0,
            mix_vote: 0,
            faults: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {}: {}", n, self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        reason: reason.into(),
    }
}

fn verr(reason: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        reason: reason.into(),
    }
}

impl Config {
    /// Parse the text form. Every line is `key = value`, blank, or a `#`
    /// comment; the result is validated before it is returned.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(line_no, format!("expected `key = value`, got {line:?}")));
            };
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|reason| err(line_no, reason))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| verr(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value for {key}: {value:?}"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "shards" => self.shards = num(key, value)?,
            "nodes_per_shard" => self.nodes_per_shard = num(key, value)?,
            "f" => self.f = num(key, value)?,
            "min_delay" => self.min_delay = num(key, value)?,
            "max_delay" => self.max_delay = num(key, value)?,
            "drop" => self.drop = num(key, value)?,
            "rounds" => self.rounds = num(key, value)?,
            "epoch" => self.epoch = num(key, value)?,
            "delta1" => self.delta1 = num(key, value)?,
            "delta2" => self.delta2 = num(key, value)?,
            "latency" => self.latency = num(key, value)?,
            "capacity" => self.capacity = num(key, value)?,
            "tx_count" => self.tx_count = num(key, value)?,
            "inputs_per_tx" => self.inputs_per_tx = num(key, value)?,
            "outputs_per_tx" => self.outputs_per_tx = num(key, value)?,
            "conflict_fraction" => self.conflict_fraction = num(key, value)?,
            "rate" => self.rate = num(key, value)?,
            "client_retry" => self.client_retry = num(key, value)?,
            "create_window" => self.create_window = num(key, value)?,
            "workload" => {
                self.workload = match value {
                    "plain" => WorkloadKind::Plain,
                    "double-spend" => WorkloadKind::DoubleSpend,
                    other => return Err(format!("unknown workload {other:?}")),
                }
            }
            "mix_plain" => self.mix_plain = num(key, value)?,
            "mix_coin" => self.mix_coin = num(key, value)?,
            "mix_meter" => self.mix_meter = num(key, value)?,
            "mix_vote" => self.mix_vote = num(key, value)?,
            _ => {
                if let Some(rest) = key.strip_prefix("fault.") {
                    let Some((shard, node)) = rest.split_once('.') else {
                        return Err(format!("fault key must be fault.<shard>.<node>, got {key:?}"));
                    };
                    let shard: ShardId = shard
                        .parse()
                        .map_err(|_| format!("bad shard in {key:?}"))?;
                    let node: usize = node.parse().map_err(|_| format!("bad node in {key:?}"))?;
                    let behavior = match value {
                        "silent" => FaultBehavior::Silent,
                        "equivocator" => FaultBehavior::Equivocator,
                        "liar" => FaultBehavior::Liar,
                        "honest" => FaultBehavior::Honest,
                        other => return Err(format!("unknown fault behavior {other:?}")),
                    };
                    self.faults.insert((shard, node), behavior);
                } else {
                    return Err(format!("unknown key {key:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.shards == 0 {
            return Err(verr("shards must be at least 1"));
        }
        if self.nodes_per_shard < 3 * self.f + 1 {
            return Err(verr(format!(
                "nodes_per_shard must be at least 3f+1 (n={}, f={})",
                self.nodes_per_shard, self.f
            )));
        }
        if self.min_delay < 1 {
            return Err(verr("min_delay must be at least 1 round"));
        }
        if self.max_delay < self.min_delay {
            return Err(verr("max_delay must be at least min_delay"));
        }
        if !(0.0..1.0).contains(&self.drop) {
            return Err(verr("drop must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.conflict_fraction) {
            return Err(verr("conflict_fraction must be in [0, 1]"));
        }
        if self.delta2 <= self.delta1 {
            return Err(verr("delta2 must exceed delta1"));
        }
        if self.epoch == 0 {
            return Err(verr("epoch must be at least 1"));
        }
        if self.rate == 0 {
            return Err(verr("rate must be at least 1"));
        }
        if self.client_retry == 0 {
            return Err(verr("client_retry must be at least 1"));
        }
        if self.inputs_per_tx == 0 {
            return Err(verr("inputs_per_tx must be at least 1"));
        }
        if self.outputs_per_tx == 0 {
            return Err(verr("outputs_per_tx must be at least 1"));
        }
        if self.mix_plain + self.mix_coin + self.mix_meter + self.mix_vote == 0 {
            return Err(verr("at least one mix weight must be positive"));
        }
        for (shard, node) in self.faults.keys() {
            if *shard >= self.shards || *node >= self.nodes_per_shard {
                return Err(verr(format!(
                    "fault placement {shard}.{node} outside the network"
                )));
            }
        }
        if self.workload == WorkloadKind::DoubleSpend && self.dishonest_shard().is_none() {
            return Err(verr(
                "double-spend workload needs a shard with more than f liars",
            ));
        }
        Ok(())
    }

    /// The shard holding a liar majority, if the fault placements create one.
    pub fn dishonest_shard(&self) -> Option<ShardId> {
        (0..self.shards).find(|s| {
            let liars = self
                .faults
                .iter()
                .filter(|((fs, _), b)| fs == s && **b == FaultBehavior::Liar)
                .count();
            liars > self.f
        })
    }

    pub fn behavior(&self, shard: ShardId, node: usize) -> FaultBehavior {
        self.faults
            .get(&(shard, node))
            .copied()
            .unwrap_or(FaultBehavior::Honest)
    }

    pub fn params(&self) -> Params {
        Params {
            shard_count: self.shards,
            nodes_per_shard: self.nodes_per_shard,
            f: self.f,
            latency: self.latency,
            delta1: self.delta1,
            delta2: self.delta2,
            create_window: self.create_window,
            epoch: self.epoch,
        }
    }

    /// The round budget a transaction has to reach a terminal decision.
    pub fn decision_bound(&self) -> u64 {
        4 * self.latency + self.delta1 + self.delta2 + self.max_delay
    }

    /// Render in the same format `parse` reads, for config echo in outputs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("shards", self.shards.to_string());
        kv("nodes_per_shard", self.nodes_per_shard.to_string());
        kv("f", self.f.to_string());
        kv("min_delay", self.min_delay.to_string());
        kv("max_delay", self.max_delay.to_string());
        kv("drop", format!("{:.3}", self.drop));
        kv("rounds", self.rounds.to_string());
        kv("epoch", self.epoch.to_string());
        kv("delta1", self.delta1.to_string());
        kv("delta2", self.delta2.to_string());
        kv("latency", self.latency.to_string());
        kv("capacity", self.capacity.to_string());
        kv("tx_count", self.tx_count.to_string());
        kv("inputs_per_tx", self.inputs_per_tx.to_string());
        kv("outputs_per_tx", self.outputs_per_tx.to_string());
        kv("conflict_fraction", format!("{:.3}", self.conflict_fraction));
        kv("rate", self.rate.to_string());
        kv("client_retry", self.client_retry.to_string());
        kv("create_window", self.create_window.to_string());
        kv(
            "workload",
            match self.workload {
                WorkloadKind::Plain => "plain".to_string(),
                WorkloadKind::DoubleSpend => "double-spend".to_string(),
            },
        );
        kv("mix_plain", self.mix_plain.to_string());
        kv("mix_coin", self.mix_coin.to_string());
        kv("mix_meter", self.mix_meter.to_string());
        kv("mix_vote", self.mix_vote.to_string());
        for ((shard, node), behavior) in &self.faults {
            let b = match behavior {
                FaultBehavior::Honest => "honest",
                FaultBehavior::Silent => "silent",
                FaultBehavior::Equivocator => "equivocator",
                FaultBehavior::Liar => "liar",
            };
            kv(&format!("fault.{shard}.{node}"), b.to_string());
        }
        out
    }
}
