//! Metrics reporting: CSV emission (byte-stable for determinism checks)
//! and a human-readable summary table.

use std::fmt::Write as _;

use crate::crypto::sha256;
use crate::sim::{percentile, Simulation};
use crate::types::MessageKind;

fn fmt_ms(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.3}")
    }
}

/// One-row run summary. Columns are documented in the README.
pub fn summary_csv(sim: &Simulation) -> String {
    let cfg = &sim.cfg;
    let from = cfg.warmup_us();
    let to = cfg.duration_us();
    let lats = sim.metrics.latencies_ms(from, to);
    let mean = if lats.is_empty() {
        f64::NAN
    } else {
        lats.iter().sum::<f64>() / lats.len() as f64
    };
    let idt = sim.metrics.idt_mean_ms(from, to).unwrap_or(f64::NAN);
    let mut out = String::new();
    out.push_str(
        "n,seed,duration_ms,warmup_ms,rtt_ms,rate_per_s,issued,skipped_issues,completed,throughput_per_s,lat_mean_ms,lat_p50_ms,lat_p95_ms,lat_p99_ms,idt_mean_ms,vertex_msgs,vertex_request_msgs,vertex_reply_msgs,request_msgs,response_msgs,setup_msgs,recovery_msgs,omitted,lost_to_crash,crashes,recoveries_started\n",
    );
    let completed = sim.metrics.completions_in(from, to).count();
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cfg.n,
        cfg.seed,
        cfg.duration_ms,
        cfg.warmup_ms,
        cfg.rtt_ms,
        cfg.clients.rate_per_s,
        sim.metrics.issued,
        sim.metrics.skipped_issues,
        completed,
        sim.metrics.throughput_per_s(from, to),
        fmt_ms(mean),
        fmt_ms(percentile(&lats, 0.50)),
        fmt_ms(percentile(&lats, 0.95)),
        fmt_ms(percentile(&lats, 0.99)),
        fmt_ms(idt),
        sim.metrics.sends_of(MessageKind::Vertex),
        sim.metrics.sends_of(MessageKind::VertexRequest),
        sim.metrics.sends_of(MessageKind::VertexReply),
        sim.metrics.sends_of(MessageKind::Request),
        sim.metrics.sends_of(MessageKind::Response),
        sim.metrics.sends_of(MessageKind::Setup),
        sim.metrics.sends_of(MessageKind::Recovery),
        sim.metrics.omitted,
        sim.metrics.lost_to_crash,
        sim.metrics.crashes,
        sim.metrics.recoveries_started,
    );
    out
}

/// Per-bucket latency series over the whole run (fault-experiment plots).
pub fn latency_buckets_csv(sim: &Simulation, bucket_ms: u64) -> String {
    let mut out = String::from("bucket_start_ms,completions,lat_mean_ms\n");
    let bucket_us = bucket_ms * 1_000;
    let horizon = sim.cfg.duration_us();
    let mut start = 0u64;
    while start < horizon {
        let end = (start + bucket_us).min(horizon);
        let lats = sim.metrics.latencies_ms(start, end);
        let mean = if lats.is_empty() {
            f64::NAN
        } else {
            lats.iter().sum::<f64>() / lats.len() as f64
        };
        let _ = writeln!(out, "{},{},{}", start / 1_000, lats.len(), fmt_ms(mean));
        start = end;
    }
    out
}

/// Vertex transmissions per broadcast round.
pub fn round_messages_csv(sim: &Simulation) -> String {
    let mut out = String::from("round,vertex_msgs\n");
    for (round, count) in &sim.metrics.vertex_sends_by_round {
        let _ = writeln!(out, "{round},{count}");
    }
    out
}

/// Digest over the concatenated CSV reports; byte-identical for identical
/// (config, seed).
pub fn metrics_digest(sim: &Simulation) -> String {
    let combined = format!(
        "{}{}{}",
        summary_csv(sim),
        latency_buckets_csv(sim, 750),
        round_messages_csv(sim)
    );
    hex::encode(sha256(&[combined.as_bytes()]))
}

/// Human-readable summary for the CLI.
pub fn text_summary(sim: &Simulation) -> String {
    let cfg = &sim.cfg;
    let from = cfg.warmup_us();
    let to = cfg.duration_us();
    let lats = sim.metrics.latencies_ms(from, to);
    let mean = if lats.is_empty() {
        f64::NAN
    } else {
        lats.iter().sum::<f64>() / lats.len() as f64
    };
    let mut out = String::new();
    let _ = writeln!(out, "run: n={} seed={} duration={}ms rtt={}ms clients={} rate={}/s", cfg.n, cfg.seed, cfg.duration_ms, cfg.rtt_ms, cfg.clients.count, cfg.clients.rate_per_s);
    let _ = writeln!(out, "  completed:   {} requests ({:.1}/s in measurement window)", sim.metrics.completions_in(from, to).count(), sim.metrics.throughput_per_s(from, to));
    let _ = writeln!(out, "  latency:     mean {} ms, p50 {} ms, p95 {} ms, p99 {} ms", fmt_ms(mean), fmt_ms(percentile(&lats, 0.5)), fmt_ms(percentile(&lats, 0.95)), fmt_ms(percentile(&lats, 0.99)));
    let _ = writeln!(out, "  idt:         mean {} ms", fmt_ms(sim.metrics.idt_mean_ms(from, to).unwrap_or(f64::NAN)));
    let _ = writeln!(out, "  messages:    vertex={} request={} reply={} client={} response={} setup={} recovery={}",
        sim.metrics.sends_of(MessageKind::Vertex),
        sim.metrics.sends_of(MessageKind::VertexRequest),
        sim.metrics.sends_of(MessageKind::VertexReply),
        sim.metrics.sends_of(MessageKind::Request),
        sim.metrics.sends_of(MessageKind::Response),
        sim.metrics.sends_of(MessageKind::Setup),
        sim.metrics.sends_of(MessageKind::Recovery));
    let _ = writeln!(out, "  faults:      crashes={} recoveries={} omitted_msgs={} lost_to_crash={}", sim.metrics.crashes, sim.metrics.recoveries_started, sim.metrics.omitted, sim.metrics.lost_to_crash);
    let _ = writeln!(out, "  metrics digest: {}", metrics_digest(sim));
    out
}
