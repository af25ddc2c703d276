//! Fault-injection integration tests: crashes, omission, equivocation,
//! muted participants, and the full crash-recovery cycle.

use nxbft_core::harness::audit_simulation;
use nxbft_core::sim::{FaultAction, FaultEvent, SimConfig, Simulation};

fn base_config(n: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.n = n;
    cfg.seed = seed;
    cfg.duration_ms = 4_000;
    cfg.warmup_ms = 300;
    cfg.rtt_ms = 5.0;
    cfg.batch_min = 5;
    cfg.batch_timer_ms = 50.0;
    cfg.clients.rate_per_s = 300.0;
    cfg.clients.count = 100;
    cfg.clients.fallback_timeout_ms = 500.0;
    cfg
}

#[test]
fn crash_below_quorum_keeps_progress() {
    let mut cfg = base_config(5, 11);
    cfg.faults.push(FaultEvent {
        at_ms: 1_000,
        replica: 1,
        action: FaultAction::Crash,
    });
    cfg.faults.push(FaultEvent {
        at_ms: 1_500,
        replica: 4,
        action: FaultAction::Crash,
    });
    let mut sim = Simulation::new(cfg);
    sim.run();

    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
    for id in [0u32, 2, 3] {
        let log_len = sim.replica(id).unwrap().waves().delivery_log().len();
        assert!(log_len > 20, "replica {id} delivered {log_len}");
    }
}

#[test]
fn omission_faulty_sender_repaired_by_backfilling() {
    let mut cfg = base_config(5, 23);
    // Replica 2 omits its vertex broadcasts to 0 and 1 for two seconds.
    cfg.faults.push(FaultEvent {
        at_ms: 800,
        replica: 2,
        action: FaultAction::Omit {
            targets: vec![0, 1],
            until_ms: 2_800,
        },
    });
    let mut sim = Simulation::new(cfg);
    sim.run();
    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
    assert!(sim.metrics.omitted > 0, "omission fault never dropped anything");
    // Backfilling kicked in.
    assert!(
        sim.metrics.sends_of(nxbft_core::types::MessageKind::VertexRequest) > 0,
        "no backfill requests despite omissions"
    );
    // Victims still admit the omitter's vertices via backfilling.
    let victim = sim.replica(0).unwrap();
    let omitted_seen = victim
        .dag()
        .iter()
        .filter(|v| v.source == 2 && v.round > 10)
        .count();
    assert!(omitted_seen > 0, "victim never admitted omitter vertices");
}

#[test]
fn equivocation_attempt_rejected_consistently() {
    let mut cfg = base_config(3, 31);
    cfg.faults.push(FaultEvent {
        at_ms: 1_000,
        replica: 1,
        action: FaultAction::Equivocate,
    });
    let mut sim = Simulation::new(cfg);
    sim.run();
    assert_eq!(sim.metrics.equivocations_injected, 1);
    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
}

#[test]
fn crash_and_recover_rejoins_and_agrees() {
    let mut cfg = base_config(3, 47);
    cfg.duration_ms = 8_000;
    cfg.faults.push(FaultEvent {
        at_ms: 1_500,
        replica: 2,
        action: FaultAction::Crash,
    });
    cfg.faults.push(FaultEvent {
        at_ms: 2_500,
        replica: 2,
        action: FaultAction::Recover,
    });
    let mut sim = Simulation::new(cfg);
    sim.run();

    // Recovery completed at every replica with one agreed digest.
    for id in 0..3u32 {
        assert!(
            sim.metrics.recovery_completed_at.contains_key(&(id, 2)),
            "replica {id} never completed the recovery of 2"
        );
    }
    let digests: std::collections::BTreeSet<&String> =
        sim.metrics.recovery_digests.values().collect();
    assert_eq!(digests.len(), 1, "divergent recovery digests");

    // The recovered replica proposes again and its vertices are accepted.
    let recovered_round = sim.replica(2).unwrap().current_round();
    for id in 0..3u32 {
        let seen: Vec<u64> = sim
            .replica(id)
            .unwrap()
            .dag()
            .iter()
            .filter(|v| v.source == 2)
            .map(|v| v.round)
            .collect();
        let max_seen = seen.iter().max().copied().unwrap_or(0);
        assert!(
            max_seen + 8 >= recovered_round.saturating_sub(1),
            "replica {id} saw recoverer vertices only up to round {max_seen} (recoverer at {recovered_round})"
        );
    }

    // Replay let the recoverer rebuild the same delivery log.
    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
    let logs: Vec<usize> = (0..3)
        .map(|id| sim.replica(id).unwrap().waves().delivery_log().len())
        .collect();
    assert!(
        logs[2] > 20,
        "recoverer delivered only {} entries (others: {:?})",
        logs[2],
        logs
    );

    // Coin stream equality: the recoverer's decided coins match the others'.
    let reference = sim.replica(0).unwrap().waves().decided_coins().clone();
    for (wave, value) in sim.replica(2).unwrap().waves().decided_coins() {
        if let Some(expected) = reference.get(wave) {
            assert_eq!(expected, value, "coin mismatch at wave {wave}");
        }
    }
}

#[test]
fn muted_replica_stalls_nothing_critical() {
    // With n=5 and one fully silent replica from the start the others
    // still finish setup? No: setup needs all n. This documents the all-n
    // setup requirement instead.
    let mut cfg = base_config(5, 59);
    cfg.setup_timeout_ms = 800.0;
    cfg.faults.push(FaultEvent {
        at_ms: 0,
        replica: 3,
        action: FaultAction::Mute { until_ms: 60_000 },
    });
    let mut sim = Simulation::new(cfg);
    sim.run();
    for id in [0u32, 1, 2, 4] {
        assert!(
            sim.metrics.setup_aborts.contains_key(&id),
            "replica {id} did not abort setup with a silent participant"
        );
    }
}
