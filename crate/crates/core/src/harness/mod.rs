//! Experiment harness: presets mirroring the evaluation shapes at desk
//! scale, the sweep runner with conservative rate acceptance, invariant
//! auditors, and the common-core checker.

pub mod audit;
pub mod getcore;
pub mod report;

use crate::sim::{SimConfig, Simulation};

pub use audit::{audit_simulation, audit_trace, AuditReport};
pub use getcore::{three_round_counterexample, CoreDag, CoreError, CoreReport};

/// Named experiment presets. Shapes follow the evaluation setup scaled to
/// desk size: n in {3,5,7,10}, round trips {0,5,35,150} ms, payloads
/// {0,256} B, batching 100 requests / 0.1 s.
pub fn preset(name: &str) -> Option<SimConfig> {
    let mut cfg = SimConfig::default();
    match name {
        "smoke-n3" => {
            cfg.n = 3;
            cfg.duration_ms = 3_000;
            cfg.rtt_ms = 5.0;
            cfg.batch_min = 10;
            cfg.clients.rate_per_s = 400.0;
            cfg.clients.count = 200;
        }
        "base-n5" => {
            cfg.n = 5;
            cfg.duration_ms = 5_000;
            cfg.rtt_ms = 5.0;
            cfg.batch_min = 100;
            cfg.clients.rate_per_s = 2_000.0;
            cfg.clients.count = 2_000;
        }
        "wan-n5" => {
            cfg.n = 5;
            cfg.duration_ms = 20_000;
            cfg.rtt_ms = 150.0;
            cfg.batch_min = 100;
            cfg.clients.rate_per_s = 1_000.0;
            cfg.clients.count = 2_000;
            cfg.clients.payload_bytes = 256;
        }
        "idt-n5-l5" | "idt-n5-l35" | "idt-n5-l150" => {
            let rtt = match name {
                "idt-n5-l5" => 5.0,
                "idt-n5-l35" => 35.0,
                _ => 150.0,
            };
            return Some(idt_config(5, rtt, 1));
        }
        "faults-n10" => {
            return Some(fault_trend_config(1, 3));
        }
        _ => return None,
    }
    Some(cfg)
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "smoke-n3",
        "base-n5",
        "wan-n5",
        "idt-n5-l5",
        "idt-n5-l35",
        "idt-n5-l150",
        "faults-n10",
    ]
}

/// Decision-time measurement config: fixed latency (no jitter, as in the
/// latency-emulation setup), saturating but stable load so every round
/// proposes immediately.
pub fn idt_config(n: usize, rtt_ms: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.n = n;
    cfg.seed = seed;
    cfg.rtt_ms = rtt_ms;
    cfg.jitter_frac = 0.0;
    // At least ~30 waves inside the window.
    cfg.duration_ms = (rtt_ms as u64).max(1) * 2 * 40 + 2_000;
    cfg.warmup_ms = (rtt_ms as u64).max(1) * 2 * 8 + 500;
    cfg.batch_min = 1;
    cfg.batch_timer_ms = 2_000.0;
    // Enough arrivals that every round entry finds a pending request.
    cfg.clients.rate_per_s = (n as f64) * 2_500.0 / rtt_ms.max(1.0);
    cfg.clients.count = 4_000;
    cfg
}

/// Staggered-crash fault experiment: n=10, fixed rate, crashes at one
/// minute intervals scaled down to desk time.
pub fn fault_trend_config(seed: u64, crashes: usize) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.n = 10;
    cfg.seed = seed;
    cfg.rtt_ms = 1.0;
    cfg.duration_ms = 40_000;
    cfg.warmup_ms = 2_000;
    cfg.batch_min = 10;
    cfg.batch_timer_ms = 50.0;
    cfg.clients.rate_per_s = 1_000.0;
    cfg.clients.count = 3_000;
    cfg.clients.fallback_timeout_ms = 1_000.0;
    let crash_at = [6_000u64, 14_000, 22_000];
    let victims = [0u32, 3, 9];
    for i in 0..crashes.min(3) {
        cfg.faults.push(crate::sim::FaultEvent {
            at_ms: crash_at[i],
            replica: victims[i],
            action: crate::sim::FaultAction::Crash,
        });
    }
    cfg
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub rate_per_s: f64,
    pub throughput_per_s: f64,
    pub accepted: bool,
}

/// Rate search with the conservative rejection rule: a rate is sustained
/// only if measured throughput matches it (within 5%) and no issue ticks
/// were skipped for lack of idle clients (backlog signal).
pub fn sweep(base: &SimConfig, rates: &[f64]) -> Vec<SweepPoint> {
    let mut out = Vec::with_capacity(rates.len());
    for rate in rates {
        let mut cfg = base.clone();
        cfg.clients.rate_per_s = *rate;
        let mut sim = Simulation::new(cfg);
        sim.run();
        let from = sim.cfg.warmup_us();
        let to = sim.cfg.duration_us();
        let throughput = sim.metrics.throughput_per_s(from, to);
        let matched = throughput >= 0.95 * rate;
        let backlog = sim.metrics.skipped_issues as f64 > 0.01 * sim.metrics.issued.max(1) as f64;
        out.push(SweepPoint {
            rate_per_s: *rate,
            throughput_per_s: throughput,
            accepted: matched && !backlog,
        });
    }
    out
}

/// Highest accepted rate of a sweep, if any.
pub fn max_sustained(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.accepted)
        .map(|p| p.rate_per_s)
        .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
}
