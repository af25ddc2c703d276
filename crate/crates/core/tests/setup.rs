//! Setup protocol tests: fault-free federations reach Ready with one seed;
//! any single silent or equivocating participant aborts everywhere.

use nxbft_core::sim::{FaultAction, FaultEvent, SimConfig, Simulation};

fn setup_config(n: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.n = n;
    cfg.seed = seed;
    cfg.duration_ms = 2_000;
    cfg.rtt_ms = 5.0;
    cfg.setup_timeout_ms = 600.0;
    cfg.clients.rate_per_s = 50.0;
    cfg.clients.count = 10;
    cfg
}

#[test]
fn fault_free_setup_identical_seeds() {
    for n in [3usize, 5, 10] {
        let mut sim = Simulation::new(setup_config(n, 17 + n as u64));
        sim.run();
        let mut fingerprints = std::collections::BTreeSet::new();
        for id in 0..n as u32 {
            let r = sim.replica(id).unwrap();
            assert!(r.setup_ready(), "n={n}: replica {id} not ready");
            fingerprints.insert(r.seed_fingerprint());
        }
        assert_eq!(fingerprints.len(), 1, "n={n}: seeds diverge");
    }
}

#[test]
fn silent_participant_aborts_everyone() {
    for seed in 0..5u64 {
        let n = 4usize;
        let mut cfg = setup_config(n, 300 + seed);
        let silent = (seed % n as u64) as u32;
        cfg.faults.push(FaultEvent {
            at_ms: 0,
            replica: silent,
            action: FaultAction::Mute { until_ms: 10_000 },
        });
        let mut sim = Simulation::new(cfg);
        sim.run();
        for id in (0..n as u32).filter(|id| *id != silent) {
            assert!(
                sim.metrics.setup_aborts.contains_key(&id),
                "seed {seed}: replica {id} did not abort (aborts: {:?})",
                sim.metrics.setup_aborts
            );
        }
    }
}

#[test]
fn equivocating_participant_aborts_everyone() {
    for n in [3usize, 4] {
        for seed in 0..5u64 {
            let mut cfg = setup_config(n, 900 + seed);
            let faulty = (seed % n as u64) as u32;
            cfg.faults.push(FaultEvent {
                at_ms: 0,
                replica: faulty,
                action: FaultAction::Equivocate,
            });
            let mut sim = Simulation::new(cfg);
            sim.run();
            assert_eq!(sim.metrics.equivocations_injected, 1, "n={n} seed={seed}");
            for id in (0..n as u32).filter(|id| *id != faulty) {
                assert!(
                    sim.metrics.setup_aborts.contains_key(&id),
                    "n={n} seed={seed}: replica {id} accepted an equivocating certificate"
                );
            }
        }
    }
}
