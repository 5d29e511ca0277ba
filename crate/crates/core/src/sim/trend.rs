//! Throughput comparison across scenarios: how commit rate moves with the
//! shard count and with transaction width.

use std::fmt::Write as _;

use crate::shard::Decision;

use super::runner::RunOutput;

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub name: String,
    pub shards: u32,
    pub inputs_per_tx: usize,
    pub committed: u64,
    /// Rounds from the first commit to the last, inclusive: the window over
    /// which the system was actually producing commits.
    pub window_rounds: u64,
    /// Commits per round over that window.
    pub per_round: f64,
}

pub fn point_of(name: &str, out: &RunOutput) -> TrendPoint {
    let commit_rounds = out.txs.values().filter_map(|r| match &r.resolved {
        Some((round, Decision::Commit)) => Some(*round),
        _ => None,
    });
    let (mut first, mut last) = (u64::MAX, 0u64);
    for round in commit_rounds {
        first = first.min(round);
        last = last.max(round);
    }
    let window_rounds = if first == u64::MAX {
        out.summary.rounds
    } else {
        last - first + 1
    };
    TrendPoint {
        name: name.to_string(),
        shards: out.config.shards,
        inputs_per_tx: out.config.inputs_per_tx,
        committed: out.summary.committed,
        window_rounds,
        per_round: out.summary.committed as f64 / window_rounds as f64,
    }
}

/// A fixed-width table, with each point's rate relative to the first.
pub fn render(points: &[TrendPoint]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<24} {:>6} {:>6} {:>9} {:>13} {:>9} {:>8}",
        "scenario", "shards", "inputs", "committed", "commit-window", "per-round", "vs-first"
    )
    .expect("string write");
    let base = points.first().map(|p| p.per_round).unwrap_or(1.0);
    for p in points {
        let ratio = if base > 0.0 { p.per_round / base } else { 0.0 };
        writeln!(
            out,
            "{:<24} {:>6} {:>6} {:>9} {:>13} {:>9.3} {:>8.2}",
            p.name, p.shards, p.inputs_per_tx, p.committed, p.window_rounds, p.per_round, ratio
        )
        .expect("string write");
    }
    out
}
