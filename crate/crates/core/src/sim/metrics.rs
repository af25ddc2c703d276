//! Run metrics: per-message counters, request completion timestamps,
//! per-replica decision timestamps, and lifecycle checkpoints. All maps are
//! ordered so CSV output is byte-stable for a given trace.

use std::collections::BTreeMap;

use crate::types::{ClientId, MessageKind, ReplicaId, Round};

#[derive(Debug, Clone, Copy)]
pub struct Completion {
    pub client: ClientId,
    pub seq: u64,
    pub issued_us: u64,
    pub completed_us: u64,
    /// Number of distinct replicas tried (1 = no fallback).
    pub attempts: u32,
}

#[derive(Debug, Default)]
pub struct Metrics {
    pub sends_by_kind: BTreeMap<&'static str, u64>,
    pub vertex_sends_by_round: BTreeMap<Round, u64>,
    pub deliveries: u64,
    pub lost_to_crash: u64,
    pub omitted: u64,
    pub completions: Vec<Completion>,
    /// Direct-commit decision timestamps per replica.
    pub decisions: BTreeMap<ReplicaId, Vec<u64>>,
    pub setup_ready_at: BTreeMap<ReplicaId, u64>,
    pub setup_aborts: BTreeMap<ReplicaId, String>,
    /// (observer, recoverer) -> committed history digest (hex).
    pub recovery_digests: BTreeMap<(ReplicaId, ReplicaId), String>,
    pub recovery_completed_at: BTreeMap<(ReplicaId, ReplicaId), u64>,
    /// Issue ticks skipped because no client was idle.
    pub skipped_issues: u64,
    pub issued: u64,
    pub equivocations_injected: u64,
    pub crashes: u64,
    pub recoveries_started: u64,
}

impl Metrics {
    pub fn record_send(&mut self, kind: MessageKind, vertex_round: Option<Round>) {
        *self.sends_by_kind.entry(kind.name()).or_insert(0) += 1;
        if kind == MessageKind::Vertex {
            if let Some(r) = vertex_round {
                *self.vertex_sends_by_round.entry(r).or_insert(0) += 1;
            }
        }
    }

    pub fn sends_of(&self, kind: MessageKind) -> u64 {
        self.sends_by_kind.get(kind.name()).copied().unwrap_or(0)
    }

    pub fn record_decision(&mut self, replica: ReplicaId, at_us: u64) {
        self.decisions.entry(replica).or_default().push(at_us);
    }

    /// Completions inside the measurement window.
    pub fn completions_in(&self, from_us: u64, to_us: u64) -> impl Iterator<Item = &Completion> {
        self.completions
            .iter()
            .filter(move |c| c.completed_us >= from_us && c.completed_us < to_us)
    }

    pub fn throughput_per_s(&self, from_us: u64, to_us: u64) -> f64 {
        let n = self.completions_in(from_us, to_us).count();
        let span_s = (to_us.saturating_sub(from_us)) as f64 / 1e6;
        if span_s <= 0.0 {
            return 0.0;
        }
        n as f64 / span_s
    }

    pub fn latencies_ms(&self, from_us: u64, to_us: u64) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .completions_in(from_us, to_us)
            .map(|c| (c.completed_us - c.issued_us) as f64 / 1_000.0)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Mean time between consecutive decisions at each replica, pooled, for
    /// decisions inside the window.
    pub fn idt_mean_ms(&self, from_us: u64, to_us: u64) -> Option<f64> {
        let mut gaps = Vec::new();
        for times in self.decisions.values() {
            let inside: Vec<u64> = times
                .iter()
                .copied()
                .filter(|t| *t >= from_us && *t < to_us)
                .collect();
            for pair in inside.windows(2) {
                gaps.push((pair[1] - pair[0]) as f64 / 1_000.0);
            }
        }
        if gaps.is_empty() {
            return None;
        }
        Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
    }
}

pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}
