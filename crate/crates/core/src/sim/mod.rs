//! Deterministic discrete-event simulation of point-to-point links with
//! configurable latency, reordering, bounded-delay synchronous phases, and
//! fault injection (crash, recover, omission, muting, equivocation).
//!
//! Virtual time, not wall clock: every timer is a simulation event.
//! Identical (config, seed) yields a byte-identical trace and metrics.

pub mod clients;
pub mod config;
pub mod metrics;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::broadcast::BroadcastConfig;
use crate::crypto::{sha256, SigningKey};
use crate::enclave::{EnclavePlatform, ReplicaKeyRegistry};
use crate::replica::{client_node, Action, Mode, Replica, ReplicaConfig, TimerKind};
use crate::smr::{EchoApp, RespondPolicy};
use crate::types::{
    AttestationCertificate, ClientRequest, Message, MessageKind, NodeId, ReplicaId, Vertex,
};

pub use clients::{ClientModel, ClientState, ClientStep};
pub use config::{ClientConfig, FaultAction, FaultEvent, SimConfig};
pub use metrics::{percentile, Completion, Metrics};
pub use trace::{TraceLog, TraceRecord};

// ---------------------------------------------------------------------------
// Platform emulation
// ---------------------------------------------------------------------------

/// Per-replica "hardware": an entropy stream and a sealing key that both
/// survive crashes of the enclave running on it.
pub struct SimPlatform {
    entropy: ChaCha20Rng,
    sealing_key: [u8; 32],
}

impl SimPlatform {
    pub fn new(master_seed: u64, replica: ReplicaId) -> Self {
        let e = sha256(&[b"platform-entropy", &master_seed.to_le_bytes(), &replica.to_le_bytes()]);
        let s = sha256(&[b"platform-seal", &master_seed.to_le_bytes(), &replica.to_le_bytes()]);
        SimPlatform {
            entropy: ChaCha20Rng::from_seed(e),
            sealing_key: s,
        }
    }
}

impl EnclavePlatform for SimPlatform {
    fn fill_entropy(&mut self, buf: &mut [u8]) {
        self.entropy.fill_bytes(buf);
    }
    fn sealing_key(&self) -> [u8; 32] {
        self.sealing_key
    }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum EventKind {
    Start,
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: Message,
    },
    ReplicaTimer {
        replica: ReplicaId,
        incarnation: u32,
        kind: TimerKind,
    },
    ClientFallback {
        client: u32,
        generation: u64,
    },
    /// Self-rescheduling constant-rate request tick.
    Issue {
        index: u64,
    },
    Fault {
        index: usize,
    },
}

struct Event {
    at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

// ---------------------------------------------------------------------------
// Replica slots
// ---------------------------------------------------------------------------

struct ReplicaSlot {
    replica: Option<Replica<EchoApp>>,
    platform: SimPlatform,
    signing_key: SigningKey,
    /// Latest operator backup: the sealed enclave blob.
    backup: Option<Vec<u8>>,
    crashed: bool,
    incarnation: u32,
    equivocate_pending: bool,
    omit_windows: Vec<(BTreeSet<ReplicaId>, u64)>,
    mute_until: u64,
    delivered_seen: usize,
    executed_seen: usize,
}

pub struct Simulation {
    pub cfg: SimConfig,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Event>>,
    slots: Vec<ReplicaSlot>,
    clients: Vec<ClientState>,
    idle_clients: BTreeSet<u32>,
    registry: ReplicaKeyRegistry,
    latency_rng: ChaCha20Rng,
    pub metrics: Metrics,
    trace: Option<TraceLog>,
    horizon_us: u64,
    /// recoverer -> observers that completed the instance.
    recoveries_active: BTreeMap<ReplicaId, BTreeSet<ReplicaId>>,
    setup_settled: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Self {
        Self::with_trace(cfg, false)
    }

    pub fn with_trace(cfg: SimConfig, want_trace: bool) -> Self {
        cfg.validate().expect("valid config");
        let n = cfg.n;
        let mut key_rng = ChaCha20Rng::from_seed(sha256(&[b"replica-keys", &cfg.seed.to_le_bytes()]));
        let signing_keys: Vec<SigningKey> =
            (0..n).map(|_| SigningKey::generate(&mut key_rng)).collect();
        let registry = ReplicaKeyRegistry {
            keys: signing_keys.iter().map(|k| k.public()).collect(),
        };
        let horizon_us = cfg.duration_us();
        let mut slots = Vec::with_capacity(n);
        for id in 0..n as ReplicaId {
            let mut platform = SimPlatform::new(cfg.seed, id);
            let rcfg = Self::replica_config(&cfg, id);
            let replica = Replica::new(
                rcfg,
                signing_keys[id as usize].clone(),
                registry.clone(),
                &mut platform,
                EchoApp::default(),
            );
            slots.push(ReplicaSlot {
                replica: Some(replica),
                platform,
                signing_key: signing_keys[id as usize].clone(),
                backup: None,
                crashed: false,
                incarnation: 0,
                equivocate_pending: false,
                omit_windows: Vec::new(),
                mute_until: 0,
                delivered_seen: 0,
                executed_seen: 0,
            });
        }
        let model = match cfg.clients.model.as_str() {
            "bft" => ClientModel::Bft,
            _ => ClientModel::Nxb,
        };
        let clients: Vec<ClientState> = (0..cfg.clients.count as u32)
            .map(|c| {
                let seed = sha256(&[b"client", &cfg.seed.to_le_bytes(), &c.to_le_bytes()]);
                ClientState::new(c as u64, model, n, cfg.clients.payload_bytes, seed)
            })
            .collect();
        let idle_clients = (0..cfg.clients.count as u32).collect();
        let latency_rng =
            ChaCha20Rng::from_seed(sha256(&[b"latency", &cfg.seed.to_le_bytes()]));
        let mut sim = Simulation {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            slots,
            clients,
            idle_clients,
            registry,
            latency_rng,
            metrics: Metrics::default(),
            trace: want_trace.then(TraceLog::default),
            horizon_us,
            recoveries_active: BTreeMap::new(),
            setup_settled: false,
            cfg,
        };
        // Faults scheduled first: a time-zero fault (e.g. setup
        // equivocation) must take effect before the Start event fires.
        let fault_times: Vec<(u64, usize)> = sim
            .cfg
            .faults
            .iter()
            .enumerate()
            .map(|(i, f)| (f.at_ms * 1_000, i))
            .collect();
        for (at, index) in fault_times {
            sim.schedule(at, EventKind::Fault { index });
        }
        sim.schedule(0, EventKind::Start);
        sim.schedule(sim.issue_time(0), EventKind::Issue { index: 0 });
        sim
    }

    fn replica_config(cfg: &SimConfig, id: ReplicaId) -> ReplicaConfig {
        ReplicaConfig {
            own_id: id,
            n: cfg.n,
            build_id: "nxbft-enclave-v1".to_string(),
            broadcast: BroadcastConfig {
                batch_min: cfg.batch_min,
                batch_max: cfg.batch_max,
                batch_timer_us: (cfg.batch_timer_ms * 1_000.0).round() as u64,
                holdback_cap: 4096,
                rounds_ahead_cap: 16,
            },
            respond_policy: match cfg.respond.as_str() {
                "origin" => RespondPolicy::Origin,
                _ => RespondPolicy::All,
            },
            setup_timeout_us: (cfg.setup_timeout_ms * 1_000.0).round() as u64,
            unverified_stash_cap: 64,
        }
    }

    // -- accessors ---------------------------------------------------------------

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn replica(&self, id: ReplicaId) -> Option<&Replica<EchoApp>> {
        self.slots.get(id as usize).and_then(|s| s.replica.as_ref())
    }

    pub fn is_crashed(&self, id: ReplicaId) -> bool {
        self.slots[id as usize].crashed
    }

    pub fn live_replicas(&self) -> impl Iterator<Item = &Replica<EchoApp>> {
        self.slots.iter().filter_map(|s| s.replica.as_ref())
    }

    pub fn take_trace(&mut self) -> Option<TraceLog> {
        self.trace.take()
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    // -- scheduling ----------------------------------------------------------------

    fn schedule(&mut self, at: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Event { at, seq, kind }));
    }

    fn issue_time(&self, index: u64) -> u64 {
        (((index + 1) as f64) * 1e6 / self.cfg.clients.rate_per_s).round() as u64
    }

    fn sync_phase_active(&self) -> bool {
        if !self.setup_settled {
            return true;
        }
        !self.recoveries_active.is_empty()
    }

    fn latency_us(&mut self, from: NodeId, to: NodeId) -> u64 {
        if from == to {
            return 1;
        }
        let base = self.cfg.half_rtt_us() as f64;
        let jitter = if self.cfg.jitter_frac > 0.0 {
            let j = self
                .latency_rng
                .gen_range(-self.cfg.jitter_frac..=self.cfg.jitter_frac);
            base * j
        } else {
            0.0
        };
        let mut delay = base + jitter;
        if self.cfg.adversarial {
            // Seeded hostility: a quarter of messages straggle by 2-8x, a
            // twentieth by 20x. Order-of-arrival assumptions die here.
            let roll: f64 = self.latency_rng.gen();
            if roll < 0.05 {
                delay *= 20.0;
            } else if roll < 0.30 {
                delay *= 2.0 + 6.0 * self.latency_rng.gen::<f64>();
            }
        }
        let mut out = delay.max(0.0).round() as u64;
        if self.sync_phase_active() {
            out = out.min(self.cfg.sync_bound_us());
        }
        out.max(1)
    }

    fn send_message(&mut self, from: NodeId, to: NodeId, msg: Message) {
        if let NodeId::Replica(s) = from {
            let slot = &self.slots[s as usize];
            if self.now < slot.mute_until {
                self.metrics.omitted += 1;
                return;
            }
            let kind = msg.kind();
            if matches!(kind, MessageKind::Vertex | MessageKind::VertexReply) {
                let omitted = slot
                    .omit_windows
                    .iter()
                    .any(|(targets, until)| self.now < *until && matches!(to, NodeId::Replica(t) if targets.contains(&t)));
                if omitted {
                    self.metrics.omitted += 1;
                    return;
                }
            }
        }
        let round = match &msg {
            Message::Vertex(v) => Some(v.round),
            _ => None,
        };
        self.metrics.record_send(msg.kind(), round);
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceRecord::Send {
                t: self.now,
                from,
                to,
                kind: msg.kind(),
                round: round.unwrap_or(0),
            });
        }
        let delay = self.latency_us(from, to);
        self.schedule(self.now + delay, EventKind::Deliver { from, to, msg });
    }

    // -- fault machinery -------------------------------------------------------------

    fn apply_fault(&mut self, index: usize) {
        let fault = self.cfg.faults[index].clone();
        let id = fault.replica;
        match fault.action {
            FaultAction::Crash => {
                let slot = &mut self.slots[id as usize];
                slot.crashed = true;
                slot.replica = None;
                slot.incarnation += 1;
                slot.delivered_seen = 0;
                slot.executed_seen = 0;
                self.metrics.crashes += 1;
                if let Some(tr) = self.trace.as_mut() {
                    tr.push(TraceRecord::Crash { t: self.now, replica: id });
                }
            }
            FaultAction::Recover => {
                let slot = &mut self.slots[id as usize];
                if !slot.crashed {
                    return;
                }
                let Some(backup) = slot.backup.clone() else {
                    panic!("recover injected before any backup existed for replica {id}");
                };
                slot.crashed = false;
                slot.incarnation += 1;
                let rcfg = Self::replica_config(&self.cfg, id);
                let key = slot.signing_key.clone();
                let registry = self.registry.clone();
                let (replica, actions) = Replica::new_recovering(
                    rcfg,
                    key,
                    registry,
                    &mut slot.platform,
                    &backup,
                    EchoApp::default(),
                )
                .expect("backup unseals");
                slot.replica = Some(replica);
                self.metrics.recoveries_started += 1;
                self.recoveries_active.entry(id).or_default();
                if let Some(tr) = self.trace.as_mut() {
                    tr.push(TraceRecord::RecoverStart { t: self.now, replica: id });
                }
                self.process_replica_actions(id, actions);
            }
            FaultAction::Omit { targets, until_ms } => {
                self.slots[id as usize]
                    .omit_windows
                    .push((targets.into_iter().collect(), until_ms * 1_000));
            }
            FaultAction::Mute { until_ms } => {
                let slot = &mut self.slots[id as usize];
                slot.mute_until = slot.mute_until.max(until_ms * 1_000);
            }
            FaultAction::Equivocate => {
                self.slots[id as usize].equivocate_pending = true;
            }
        }
    }

    /// Builds the equivocating twin for a vertex: same claimed counter, a
    /// different payload, and therefore a signature that cannot verify.
    /// A real enclave signs each counter once, so this is the strongest
    /// equivocation an operator can attempt.
    fn forge_vertex_twin(v: &Vertex) -> Message {
        let mut twin = v.clone();
        twin.payload.push(ClientRequest {
            client: u64::MAX,
            seq: u64::MAX,
            command: b"equivocation".to_vec(),
        });
        Message::Vertex(std::sync::Arc::new(twin))
    }

    /// Builds a conflicting attestation certificate: the operator signs a
    /// second, fabricated enclave key with its genuine replica key.
    fn forge_cert_twin(&mut self, id: ReplicaId, cert: &AttestationCertificate) -> Message {
        let mut fake = [0u8; 64];
        self.latency_rng.fill_bytes(&mut fake);
        let fake_key = crate::types::EnclavePublicKey {
            sign: crate::crypto::PublicKey(fake[..32].try_into().unwrap()),
            encrypt: crate::crypto::BoxPublicKey(fake[32..].try_into().unwrap()),
        };
        let digest = AttestationCertificate::signed_digest(id, &fake_key, &cert.code_measurement);
        let sig = self.slots[id as usize].signing_key.sign(&digest);
        Message::SetupCert(AttestationCertificate {
            replica_id: id,
            public_enclave_key: fake_key,
            code_measurement: cert.code_measurement,
            replica_signature: sig,
        })
    }

    // -- action processing -------------------------------------------------------------

    fn process_replica_actions(&mut self, id: ReplicaId, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { to, msg } => self.send_message(NodeId::Replica(id), to, msg),
                Action::BroadcastReplicas(msg) => {
                    let equivocate = self.slots[id as usize].equivocate_pending
                        && matches!(msg, Message::Vertex(_) | Message::SetupCert(_));
                    if equivocate {
                        self.slots[id as usize].equivocate_pending = false;
                        self.metrics.equivocations_injected += 1;
                        let twin = match &msg {
                            Message::Vertex(v) => Self::forge_vertex_twin(v),
                            Message::SetupCert(c) => {
                                let c = *c;
                                self.forge_cert_twin(id, &c)
                            }
                            _ => unreachable!(),
                        };
                        for dest in 0..self.cfg.n as ReplicaId {
                            let to = NodeId::Replica(dest);
                            if dest % 2 == 0 {
                                self.send_message(NodeId::Replica(id), to, twin.clone());
                                self.send_message(NodeId::Replica(id), to, msg.clone());
                            } else {
                                self.send_message(NodeId::Replica(id), to, msg.clone());
                                self.send_message(NodeId::Replica(id), to, twin.clone());
                            }
                        }
                    } else {
                        for dest in 0..self.cfg.n as ReplicaId {
                            self.send_message(NodeId::Replica(id), NodeId::Replica(dest), msg.clone());
                        }
                    }
                }
                Action::SetTimer { kind, delay_us } => {
                    let incarnation = self.slots[id as usize].incarnation;
                    self.schedule(
                        self.now + delay_us,
                        EventKind::ReplicaTimer {
                            replica: id,
                            incarnation,
                            kind,
                        },
                    );
                }
                Action::Decision => {
                    self.metrics.record_decision(id, self.now);
                    if let Some(tr) = self.trace.as_mut() {
                        tr.push(TraceRecord::Decision { t: self.now, replica: id });
                    }
                }
                Action::SetupComplete => {
                    self.metrics.setup_ready_at.insert(id, self.now);
                    if let Some(tr) = self.trace.as_mut() {
                        tr.push(TraceRecord::SetupReady { t: self.now, replica: id });
                    }
                    let slot = &mut self.slots[id as usize];
                    slot.backup = slot.replica.as_mut().and_then(|r| r.make_backup());
                    self.update_setup_settled();
                }
                Action::SetupAborted(reason) => {
                    self.metrics.setup_aborts.insert(id, reason.to_string());
                    if let Some(tr) = self.trace.as_mut() {
                        tr.push(TraceRecord::SetupAbort { t: self.now, replica: id });
                    }
                    self.update_setup_settled();
                }
                Action::RecoveryCompleted {
                    recoverer,
                    history_digest,
                } => {
                    self.metrics
                        .recovery_digests
                        .insert((id, recoverer), hex::encode(history_digest));
                    self.metrics
                        .recovery_completed_at
                        .insert((id, recoverer), self.now);
                    if let Some(tr) = self.trace.as_mut() {
                        tr.push(TraceRecord::RecoveryComplete {
                            t: self.now,
                            observer: id,
                            recoverer,
                            digest: history_digest,
                        });
                    }
                    let slot = &mut self.slots[id as usize];
                    slot.backup = slot.replica.as_mut().and_then(|r| r.make_backup());
                    if let Some(done) = self.recoveries_active.get_mut(&recoverer) {
                        done.insert(id);
                        let live = self
                            .slots
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| !s.crashed)
                            .map(|(i, _)| i as ReplicaId)
                            .collect::<BTreeSet<_>>();
                        if live.iter().all(|r| done.contains(r)) {
                            self.recoveries_active.remove(&recoverer);
                        }
                    }
                }
            }
        }
        self.observe_replica(id);
    }

    /// Streams delivery-log and execution growth into the trace.
    fn observe_replica(&mut self, id: ReplicaId) {
        if self.trace.is_none() {
            return;
        }
        let slot = &mut self.slots[id as usize];
        let Some(replica) = slot.replica.as_ref() else {
            return;
        };
        let log = replica.waves().delivery_log();
        let mut records = Vec::new();
        for (pos, r) in log.iter().enumerate().skip(slot.delivered_seen) {
            records.push(TraceRecord::Delivered {
                t: self.now,
                replica: id,
                position: pos as u64,
                digest: r.digest,
                round: r.round,
                source: r.source,
            });
        }
        slot.delivered_seen = log.len();
        let executed = replica.smr().executed_log();
        for (client, seq) in executed.iter().skip(slot.executed_seen) {
            records.push(TraceRecord::Executed {
                t: self.now,
                replica: id,
                client: *client,
                seq: *seq,
            });
        }
        slot.executed_seen = executed.len();
        let tr = self.trace.as_mut().unwrap();
        for r in records {
            tr.push(r);
        }
    }

    fn update_setup_settled(&mut self) {
        let n = self.cfg.n;
        let settled = (0..n as ReplicaId).all(|id| {
            self.metrics.setup_ready_at.contains_key(&id)
                || self.metrics.setup_aborts.contains_key(&id)
                || self.slots[id as usize].crashed
        });
        self.setup_settled = settled;
    }

    // -- event loop -------------------------------------------------------------------

    pub fn run(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.at > self.horizon_us {
                // Past the horizon: the run is over.
                self.queue.push(Reverse(ev));
                break;
            }
            self.now = ev.at;
            self.process(ev.kind);
        }
        self.now = self.horizon_us;
    }

    fn process(&mut self, kind: EventKind) {
        match kind {
            EventKind::Start => {
                for id in 0..self.cfg.n as ReplicaId {
                    let actions = self.slots[id as usize]
                        .replica
                        .as_mut()
                        .expect("fresh replica")
                        .start();
                    self.process_replica_actions(id, actions);
                }
            }
            EventKind::Deliver { from, to, msg } => {
                match to {
                    NodeId::Replica(r) => {
                        let slot = &mut self.slots[r as usize];
                        if slot.crashed || slot.replica.is_none() {
                            self.metrics.lost_to_crash += 1;
                            return;
                        }
                        self.metrics.deliveries += 1;
                        if let Some(tr) = self.trace.as_mut() {
                            tr.push(TraceRecord::Deliver {
                                t: self.now,
                                from,
                                to,
                                kind: msg.kind(),
                            });
                        }
                        let actions = slot.replica.as_mut().unwrap().on_message(from, msg);
                        self.process_replica_actions(r, actions);
                    }
                    NodeId::Client(c) => {
                        self.metrics.deliveries += 1;
                        if let (Message::Response(resp), NodeId::Replica(src)) = (&msg, from) {
                            let step =
                                self.clients[c as usize].on_response(resp, src, self.now);
                            self.handle_client_step(c, step);
                        }
                    }
                }
            }
            EventKind::ReplicaTimer {
                replica,
                incarnation,
                kind,
            } => {
                let slot = &mut self.slots[replica as usize];
                if slot.crashed || slot.incarnation != incarnation {
                    return;
                }
                if let Some(r) = slot.replica.as_mut() {
                    let actions = r.on_timer(kind);
                    self.process_replica_actions(replica, actions);
                }
            }
            EventKind::ClientFallback { client, generation } => {
                let step = self.clients[client as usize].on_fallback(generation);
                self.handle_client_step(client, step);
            }
            EventKind::Issue { index } => {
                if let Some(idle) = self.idle_clients.iter().next().copied() {
                    self.idle_clients.remove(&idle);
                    self.metrics.issued += 1;
                    let step = self.clients[idle as usize].issue(self.now);
                    self.handle_client_step(idle, step);
                } else {
                    self.metrics.skipped_issues += 1;
                }
                self.schedule(self.issue_time(index + 1), EventKind::Issue { index: index + 1 });
            }
            EventKind::Fault { index } => self.apply_fault(index),
        }
    }

    fn handle_client_step(&mut self, client: u32, step: ClientStep) {
        match step {
            ClientStep::Send {
                to,
                request,
                arm_timer,
            } => {
                for target in to {
                    self.send_message(
                        NodeId::Client(client),
                        NodeId::Replica(target),
                        Message::Request(request.clone()),
                    );
                }
                if let Some(generation) = arm_timer {
                    let delay = (self.cfg.clients.fallback_timeout_ms * 1_000.0).round() as u64;
                    self.schedule(
                        self.now + delay,
                        EventKind::ClientFallback { client, generation },
                    );
                }
            }
            ClientStep::Completed {
                seq,
                issued_us,
                attempts,
            } => {
                self.metrics.completions.push(Completion {
                    client: client as u64,
                    seq,
                    issued_us,
                    completed_us: self.now,
                    attempts,
                });
                self.idle_clients.insert(client);
            }
            ClientStep::Idle => {}
        }
    }
}

/// Convenience: run a config to completion and return the simulation.
pub fn run_config(cfg: SimConfig) -> Simulation {
    let mut sim = Simulation::new(cfg);
    sim.run();
    sim
}

// The client node id must round-trip through the message addressing.
const _: fn(crate::types::ClientId) -> NodeId = client_node;

#[allow(unused)]
fn mode_is_running(r: &Replica<EchoApp>) -> bool {
    r.mode() == Mode::Running
}
