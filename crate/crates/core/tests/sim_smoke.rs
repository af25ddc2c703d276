//! End-to-end smoke tests of the simulated federation: setup completes,
//! waves commit, requests execute, and the auditors stay quiet.

use nxbft_core::harness::{audit_simulation, report};
use nxbft_core::sim::{SimConfig, Simulation};

fn smoke_config(n: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.n = n;
    cfg.seed = seed;
    cfg.duration_ms = 3_000;
    cfg.warmup_ms = 300;
    cfg.rtt_ms = 5.0;
    cfg.batch_min = 5;
    cfg.batch_timer_ms = 50.0;
    cfg.clients.rate_per_s = 300.0;
    cfg.clients.count = 100;
    cfg
}

#[test]
fn fault_free_n3_commits_and_responds() {
    let mut sim = Simulation::new(smoke_config(3, 42));
    sim.run();

    for id in 0..3 {
        let r = sim.replica(id).unwrap();
        assert!(r.setup_ready(), "replica {id} not ready");
        assert!(
            r.waves().delivery_log().len() > 10,
            "replica {id} delivered only {} vertices",
            r.waves().delivery_log().len()
        );
        assert!(r.current_round() > 8, "replica {id} stuck at round {}", r.current_round());
    }
    let completed = sim.metrics.completions.len();
    assert!(completed > 50, "only {completed} requests completed");

    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
}

#[test]
fn fault_free_n5_all_logs_agree() {
    let mut sim = Simulation::new(smoke_config(5, 7));
    sim.run();
    let audit = audit_simulation(&sim);
    assert!(audit.ok(), "audit violations: {:?}", audit.violations);
    let logs: Vec<usize> = (0..5)
        .map(|id| sim.replica(id).unwrap().waves().delivery_log().len())
        .collect();
    assert!(logs.iter().all(|l| *l > 0), "empty logs: {logs:?}");
}

#[test]
fn identical_seed_identical_metrics_digest() {
    let mut a = Simulation::new(smoke_config(4, 99));
    a.run();
    let mut b = Simulation::new(smoke_config(4, 99));
    b.run();
    assert_eq!(report::metrics_digest(&a), report::metrics_digest(&b));

    let mut c = Simulation::new(smoke_config(4, 100));
    c.run();
    assert_ne!(report::metrics_digest(&a), report::metrics_digest(&c));
}
