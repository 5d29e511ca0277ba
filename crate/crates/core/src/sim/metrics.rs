//! Per-round counters and the end-of-run summary. Counters are cumulative,
//! so every row dominates the previous one and the final row equals the
//! summary totals.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::validity::AbortReason;

pub const CSV_HEADER: &str = "round,submitted,committed,aborted,inflight,messages";

/// One scenario round. All counts except `inflight` are cumulative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsRow {
    pub round: u64,
    pub submitted: u64,
    pub committed: u64,
    pub aborted: u64,
    /// Transactions submitted but not yet decided, as of this round.
    pub inflight: u64,
    /// Messages handed to the network so far.
    pub messages: u64,
}

pub fn render_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round, r.submitted, r.committed, r.aborted, r.inflight, r.messages
        )
        .expect("string write");
    }
    out
}

/// A short, id-free class label, so per-reason counts aggregate.
pub fn reason_class(reason: &AbortReason) -> &'static str {
    match reason {
        AbortReason::InactiveInput(_) => "inactive-input",
        AbortReason::InactiveReference(_) => "inactive-reference",
        AbortReason::CheckerRejected { .. } => "checker-rejected",
        AbortReason::OutputsWithoutInputs => "outputs-without-inputs",
        AbortReason::ForeignType(_) => "foreign-type",
        AbortReason::LockedObject(_) => "locked-object",
        AbortReason::UnknownContract(_) => "unknown-contract",
        AbortReason::MalformedOutput => "malformed-output",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seed: u64,
    pub rounds: u64,
    pub submitted: u64,
    pub committed: u64,
    pub aborted: u64,
    pub unresolved: u64,
    pub aborts_by_reason: BTreeMap<&'static str, u64>,
    /// Rounds from first submission to resolution, over decided transactions.
    pub latency_mean: f64,
    pub latency_p95: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    /// Still queued when the run ended.
    pub messages_pending: u64,
    /// Minted and final account totals, when the scenario moves coins.
    pub supply: Option<(u64, u64)>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = String::from("scenario-summary\n");
        let mut kv = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("string write");
        };
        kv("seed", self.seed.to_string());
        kv("rounds", self.rounds.to_string());
        kv("submitted", self.submitted.to_string());
        kv("committed", self.committed.to_string());
        kv("aborted", self.aborted.to_string());
        kv("unresolved", self.unresolved.to_string());
        for (reason, count) in &self.aborts_by_reason {
            kv(&format!("abort[{reason}]"), count.to_string());
        }
        kv("latency-mean", format!("{:.2}", self.latency_mean));
        kv("latency-p95", self.latency_p95.to_string());
        kv("messages-sent", self.messages_sent.to_string());
        kv("messages-delivered", self.messages_delivered.to_string());
        kv("messages-dropped", self.messages_dropped.to_string());
        kv("messages-pending", self.messages_pending.to_string());
        if let Some((initial, fin)) = self.supply {
            kv("supply-initial", initial.to_string());
            kv("supply-final", fin.to_string());
        }
        out
    }
}
