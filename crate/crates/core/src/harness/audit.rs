//! Mechanical invariant auditors. After every run: cross-replica prefix
//! agreement of delivery logs, exactly-once execution, state equality, DAG
//! ancestry closure, per-counter-slot agreement and seed agreement. Any
//! violation fails the run.

use std::collections::BTreeMap;

use crate::sim::{Simulation, TraceLog, TraceRecord};
use crate::types::ReplicaId;

#[derive(Debug, Default)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn fail(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

/// Full in-memory audit of a finished simulation.
pub fn audit_simulation(sim: &Simulation) -> AuditReport {
    let mut report = AuditReport::default();
    let n = sim.cfg.n as ReplicaId;

    let live: Vec<(ReplicaId, &crate::replica::Replica<crate::smr::EchoApp>)> = (0..n)
        .filter_map(|id| sim.replica(id).map(|r| (id, r)))
        .collect();

    // Delivery-log prefix agreement, pairwise over every present replica
    // (crashed replicas are absent; their final logs were prefixes when
    // they died, which the pre-crash pairwise checks already covered).
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            let (ia, a) = live[i];
            let (ib, b) = live[j];
            let la = a.waves().delivery_log();
            let lb = b.waves().delivery_log();
            let common = la.len().min(lb.len());
            if la[..common] != lb[..common] {
                let pos = (0..common).find(|k| la[*k] != lb[*k]).unwrap();
                report.fail(format!(
                    "delivery logs of replicas {ia} and {ib} diverge at position {pos}: {:?} vs {:?}",
                    la[pos], lb[pos]
                ));
            }
        }
    }

    // Exactly-once execution per replica.
    for (id, r) in &live {
        let mut seen = BTreeMap::new();
        for (client, seq) in r.smr().executed_log() {
            if let Some(prev) = seen.insert((*client, *seq), ()) {
                let _ = prev;
                report.fail(format!(
                    "replica {id} executed (client {client}, seq {seq}) more than once"
                ));
            }
        }
    }

    // State equality for replicas that delivered the same log.
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            let (ia, a) = live[i];
            let (ib, b) = live[j];
            if a.waves().delivery_log() == b.waves().delivery_log() {
                if a.smr().table_digest() != b.smr().table_digest() {
                    report.fail(format!(
                        "replicas {ia} and {ib} share a delivery log but differ in client tables"
                    ));
                }
                use crate::smr::Application;
                if a.app().state_digest() != b.app().state_digest() {
                    report.fail(format!(
                        "replicas {ia} and {ib} share a delivery log but differ in app state"
                    ));
                }
            }
        }
    }

    // DAG ancestry closure.
    for (id, r) in &live {
        if let Err(e) = r.dag().check_closure() {
            report.fail(format!("replica {id} dag closure violated: {e}"));
        }
    }

    // Non-equivocation: for each (source, epoch, counter) slot, accepted
    // digests agree across replicas.
    let mut slots: BTreeMap<(ReplicaId, u64, u64), (ReplicaId, crate::crypto::Digest)> =
        BTreeMap::new();
    for (id, r) in &live {
        for (slot, digest) in r.broadcast_state().slot_digests() {
            match slots.get(slot) {
                None => {
                    slots.insert(*slot, (*id, *digest));
                }
                Some((first_id, first_digest)) if first_digest != digest => {
                    report.fail(format!(
                        "slot {slot:?} accepted as {} by replica {first_id} but {} by replica {id}",
                        hex::encode(&first_digest[..6]),
                        hex::encode(&digest[..6])
                    ));
                }
                _ => {}
            }
        }
    }

    // Seed agreement among replicas that finished setup.
    let fingerprints: Vec<(ReplicaId, [u8; 32])> = live
        .iter()
        .filter(|(_, r)| r.setup_ready() || r.mode() == crate::replica::Mode::Running)
        .map(|(id, r)| (*id, r.seed_fingerprint()))
        .collect();
    if let Some((first_id, first)) = fingerprints.first() {
        for (id, fp) in &fingerprints[1..] {
            if fp != first {
                report.fail(format!(
                    "seed fingerprints differ between replicas {first_id} and {id}"
                ));
            }
        }
    }

    // Recovery agreement: per recoverer, every observer committed the same
    // history digest.
    let mut per_recoverer: BTreeMap<ReplicaId, BTreeMap<&str, Vec<ReplicaId>>> = BTreeMap::new();
    for ((observer, recoverer), digest) in &sim.metrics.recovery_digests {
        per_recoverer
            .entry(*recoverer)
            .or_default()
            .entry(digest.as_str())
            .or_default()
            .push(*observer);
    }
    for (recoverer, digests) in per_recoverer {
        if digests.len() > 1 {
            report.fail(format!(
                "recovery of replica {recoverer} committed {} different history digests",
                digests.len()
            ));
        }
    }

    report
}

/// Offline audit of a binary trace: prefix agreement per incarnation,
/// exactly-once execution, recovery digest consistency.
pub fn audit_trace(log: &TraceLog) -> AuditReport {
    let mut report = AuditReport::default();

    // Segment per-replica histories by crash records.
    let mut incarnation: BTreeMap<ReplicaId, u32> = BTreeMap::new();
    let mut logs: BTreeMap<(ReplicaId, u32), Vec<[u8; 32]>> = BTreeMap::new();
    let mut executed: BTreeMap<(ReplicaId, u32), BTreeMap<(u64, u64), u32>> = BTreeMap::new();
    let mut recovery: BTreeMap<ReplicaId, BTreeMap<ReplicaId, [u8; 32]>> = BTreeMap::new();

    for rec in &log.records {
        match rec {
            TraceRecord::Crash { replica, .. } => {
                *incarnation.entry(*replica).or_insert(0) += 1;
            }
            TraceRecord::Delivered {
                replica,
                position,
                digest,
                ..
            } => {
                let inc = incarnation.get(replica).copied().unwrap_or(0);
                let entry = logs.entry((*replica, inc)).or_default();
                if *position as usize != entry.len() {
                    report.fail(format!(
                        "replica {replica} delivery positions not consecutive: got {position}, expected {}",
                        entry.len()
                    ));
                }
                entry.push(*digest);
            }
            TraceRecord::Executed {
                replica, client, seq, ..
            } => {
                let inc = incarnation.get(replica).copied().unwrap_or(0);
                let count = executed
                    .entry((*replica, inc))
                    .or_default()
                    .entry((*client, *seq))
                    .or_insert(0);
                *count += 1;
                if *count > 1 {
                    report.fail(format!(
                        "replica {replica} executed (client {client}, seq {seq}) {count} times"
                    ));
                }
            }
            TraceRecord::RecoveryComplete {
                observer,
                recoverer,
                digest,
                ..
            } => {
                let per = recovery.entry(*recoverer).or_default();
                per.insert(*observer, *digest);
            }
            _ => {}
        }
    }

    let all: Vec<(&(ReplicaId, u32), &Vec<[u8; 32]>)> = logs.iter().collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (ka, la) = all[i];
            let (kb, lb) = all[j];
            let common = la.len().min(lb.len());
            if la[..common] != lb[..common] {
                report.fail(format!(
                    "delivery logs {ka:?} and {kb:?} are not prefix-compatible"
                ));
            }
        }
    }

    for (recoverer, per) in recovery {
        let digests: std::collections::BTreeSet<&[u8; 32]> = per.values().collect();
        if digests.len() > 1 {
            report.fail(format!(
                "recovery of replica {recoverer} committed {} different digests",
                digests.len()
            ));
        }
    }

    report
}
