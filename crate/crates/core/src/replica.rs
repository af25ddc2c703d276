//! Replica composition: one event-driven state machine wiring the trusted
//! subsystem, broadcast, consensus, SMR and lifecycle together.
//!
//! The replica consumes an ordered stream of events (message arrivals and
//! timer expiries) and emits actions (sends, timer requests, lifecycle
//! notifications). It is strictly deterministic given the event order.

use std::collections::BTreeMap;

use crate::broadcast::{BroadcastConfig, BroadcastState, ProposeOutcome, ReceiveOutcome};
use crate::consensus::{wave_last_round, WaveState};
use crate::crypto::{Digest, SigningKey};
use crate::dag::DagStore;
use crate::enclave::{verify_counter_signature, Enclave, EnclavePlatform, ReplicaKeyRegistry};
use crate::lifecycle::{
    toss_count_for_history, RecoveryInstance, SetupAbort, SetupAction, SetupState,
};
use crate::smr::{Application, RespondPolicy, SmrState, SubmitOutcome};
use crate::types::{
    quorum, AttestationCertificate, ClientId, EnclavePublicKey, Message, NodeId,
    RecoveryRequestMsg, ReplicaId, Round, Vertex, VertexArc, Wave,
};

pub fn client_node(client: ClientId) -> NodeId {
    NodeId::Client(client as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    Batch { generation: u64 },
    SetupDeadline { origin: ReplicaId },
}

#[derive(Debug)]
pub enum Action {
    Send { to: NodeId, msg: Message },
    /// Send to every replica, including the sender itself.
    BroadcastReplicas(Message),
    SetTimer { kind: TimerKind, delay_us: u64 },
    /// One direct-commit decision (for decision-time metrics).
    Decision,
    /// Setup finished; the harness snapshots a backup now.
    SetupComplete,
    SetupAborted(SetupAbort),
    /// A recovery instance completed locally; harness snapshots a backup.
    RecoveryCompleted {
        recoverer: ReplicaId,
        history_digest: Digest,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Setup,
    Running,
    /// This replica is the one recovering; consensus and proposing are
    /// paused until the recovery commit quorum completes.
    Recovering,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub own_id: ReplicaId,
    pub n: usize,
    pub build_id: String,
    pub broadcast: BroadcastConfig,
    pub respond_policy: RespondPolicy,
    /// Per-handshake setup deadline (virtual microseconds).
    pub setup_timeout_us: u64,
    /// Cap on stashed vertices awaiting a possible key rotation, per source.
    pub unverified_stash_cap: usize,
}

impl ReplicaConfig {
    pub fn new(own_id: ReplicaId, n: usize) -> Self {
        ReplicaConfig {
            own_id,
            n,
            build_id: "nxbft-enclave-v1".to_string(),
            broadcast: BroadcastConfig::default(),
            respond_policy: RespondPolicy::All,
            setup_timeout_us: 2_000_000,
            unverified_stash_cap: 64,
        }
    }
}

pub struct Replica<A: Application> {
    cfg: ReplicaConfig,
    mode: Mode,
    enclave: Enclave,
    replica_key: SigningKey,
    registry: ReplicaKeyRegistry,
    /// Untrusted mirror of the currently trusted peer enclave keys.
    peer_keys: BTreeMap<ReplicaId, EnclavePublicKey>,
    setup: SetupState,
    bcast: BroadcastState,
    dag: DagStore,
    waves: WaveState,
    smr: SmrState,
    app: A,
    recoveries: BTreeMap<ReplicaId, RecoveryInstance>,
    batch_generation: u64,
    /// Protocol traffic that arrived before setup finished.
    pre_ready_queue: Vec<(NodeId, Message)>,
    /// Vertices whose signature verifies under no current key, kept in case
    /// an in-flight recovery rotates the source's key. Bounded per source.
    unverified_stash: BTreeMap<ReplicaId, Vec<VertexArc>>,
}

impl<A: Application> Replica<A> {
    pub fn new<P: EnclavePlatform>(
        cfg: ReplicaConfig,
        replica_key: SigningKey,
        registry: ReplicaKeyRegistry,
        platform: &mut P,
        app: A,
    ) -> Self {
        let enclave = Enclave::init(cfg.own_id, cfg.n, &cfg.build_id, platform);
        let setup = SetupState::new(cfg.own_id, cfg.n);
        let bcast = BroadcastState::new(cfg.own_id, cfg.n, cfg.broadcast.clone());
        let waves = WaveState::new(cfg.own_id, cfg.n);
        let smr = SmrState::new(cfg.respond_policy);
        Replica {
            mode: Mode::Setup,
            enclave,
            replica_key,
            registry,
            peer_keys: BTreeMap::new(),
            setup,
            bcast,
            dag: DagStore::new(),
            waves,
            smr,
            app,
            recoveries: BTreeMap::new(),
            batch_generation: 0,
            pre_ready_queue: Vec::new(),
            unverified_stash: BTreeMap::new(),
            cfg,
        }
    }

    /// Constructs a post-crash incarnation from the sealed backup and
    /// announces the recovery. The replica state restarts from the backup
    /// discipline's contents (post-setup, i.e. empty protocol state).
    pub fn new_recovering<P: EnclavePlatform>(
        cfg: ReplicaConfig,
        replica_key: SigningKey,
        registry: ReplicaKeyRegistry,
        platform: &mut P,
        sealed_blob: &[u8],
        app: A,
    ) -> Result<(Self, Vec<Action>), crate::enclave::EnclaveError> {
        let enclave = Enclave::unseal(sealed_blob, platform)?;
        let peer_keys = enclave.peer_keys();
        let bcast = BroadcastState::new(cfg.own_id, cfg.n, cfg.broadcast.clone());
        let waves = WaveState::new(cfg.own_id, cfg.n);
        let smr = SmrState::new(cfg.respond_policy);
        let cert = enclave.make_attestation(&replica_key);
        let own_id = cfg.own_id;
        let mut replica = Replica {
            mode: Mode::Recovering,
            enclave,
            replica_key,
            registry,
            peer_keys,
            setup: SetupState::new(cfg.own_id, cfg.n),
            bcast,
            dag: DagStore::new(),
            waves,
            smr,
            app,
            recoveries: BTreeMap::new(),
            batch_generation: 0,
            pre_ready_queue: Vec::new(),
            unverified_stash: BTreeMap::new(),
            cfg,
        };
        let request = RecoveryRequestMsg {
            recoverer: own_id,
            new_cert: cert,
        };
        let mut actions = vec![Action::BroadcastReplicas(Message::RecoveryRequest(
            request.clone(),
        ))];
        replica.ensure_recovery_instance(&request, &mut actions);
        Ok((replica, actions))
    }

    // -- accessors for the harness and auditors --------------------------------

    pub fn id(&self) -> ReplicaId {
        self.cfg.own_id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dag(&self) -> &DagStore {
        &self.dag
    }

    pub fn waves(&self) -> &WaveState {
        &self.waves
    }

    pub fn smr(&self) -> &SmrState {
        &self.smr
    }

    pub fn app(&self) -> &A {
        &self.app
    }

    pub fn broadcast_state(&self) -> &BroadcastState {
        &self.bcast
    }

    pub fn current_round(&self) -> Round {
        self.bcast.current_round
    }

    pub fn seed_fingerprint(&self) -> Digest {
        self.enclave.seed_fingerprint()
    }

    pub fn setup_ready(&self) -> bool {
        self.setup.is_ready()
    }

    pub fn completed_recovery_digest(&self, recoverer: ReplicaId) -> Option<Digest> {
        self.recoveries
            .get(&recoverer)
            .and_then(|i| i.chosen_digest)
    }

    /// Seals the enclave for the operator's backup.
    pub fn make_backup(&mut self) -> Option<Vec<u8>> {
        self.enclave.seal_state().ok()
    }

    // -- event entry points ------------------------------------------------------

    /// Kick off the setup protocol: broadcast the own attestation and start
    /// one deadline timer per handshake.
    pub fn start(&mut self) -> Vec<Action> {
        let mut actions = Vec::new();
        let cert = self.enclave.make_attestation(&self.replica_key);
        actions.push(Action::BroadcastReplicas(Message::SetupCert(cert)));
        for origin in 0..self.cfg.n as ReplicaId {
            actions.push(Action::SetTimer {
                kind: TimerKind::SetupDeadline { origin },
                delay_us: self.cfg.setup_timeout_us,
            });
        }
        actions
    }

    pub fn on_timer(&mut self, kind: TimerKind) -> Vec<Action> {
        let mut actions = Vec::new();
        match kind {
            TimerKind::Batch { generation } => {
                if self.mode == Mode::Running && generation == self.batch_generation {
                    self.bcast.on_batch_timer();
                    self.drive(&mut actions);
                }
            }
            TimerKind::SetupDeadline { origin } => {
                if self.mode == Mode::Setup {
                    let setup_actions = self.setup.on_deadline(origin);
                    self.apply_setup_actions(setup_actions, &mut actions);
                }
            }
        }
        actions
    }

    pub fn on_message(&mut self, from: NodeId, msg: Message) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.mode == Mode::Aborted {
            return actions;
        }
        if self.mode == Mode::Setup {
            match msg {
                Message::SetupCert(cert) => {
                    let sa = self.setup.on_cert(
                        cert,
                        &mut self.enclave,
                        &self.registry,
                        &self.replica_key,
                    );
                    self.apply_setup_actions(sa, &mut actions);
                }
                Message::SetupEcho(echo) => {
                    let sa = self.setup.on_echo(
                        echo,
                        &mut self.enclave,
                        &self.registry,
                        &self.replica_key,
                    );
                    self.apply_setup_actions(sa, &mut actions);
                }
                Message::SetupShare(share) => {
                    let sa = self.setup.on_share(share, &mut self.enclave);
                    self.apply_setup_actions(sa, &mut actions);
                }
                Message::SetupReady(_) => {}
                other => self.pre_ready_queue.push((from, other)),
            }
            return actions;
        }
        self.dispatch(from, msg, &mut actions);
        actions
    }

    fn dispatch(&mut self, from: NodeId, msg: Message, actions: &mut Vec<Action>) {
        match msg {
            Message::Vertex(v) => {
                let source = v.source;
                let outcome = self.bcast.on_receive_vertex(v.clone(), &self.peer_keys);
                if let ReceiveOutcome::Dropped(crate::broadcast::DropReason::BadSignature) = outcome
                {
                    self.stash_unverified(source, v);
                }
                self.drive(actions);
            }
            Message::VertexRequest(r) => {
                if let NodeId::Replica(requester) = from {
                    if let Some(v) = self.bcast.on_vertex_request(&self.dag, r, requester) {
                        actions.push(Action::Send {
                            to: NodeId::Replica(requester),
                            msg: Message::VertexReply(v),
                        });
                    }
                }
            }
            Message::VertexReply(v) => {
                self.bcast.on_vertex_reply(v, &self.peer_keys, &self.dag);
                self.drive(actions);
            }
            Message::Request(req) => {
                if self.smr.submit(&req) == SubmitOutcome::Ack {
                    self.bcast.enqueue_request(req);
                    self.drive(actions);
                }
            }
            Message::Response(_) => {}
            Message::SetupCert(_) | Message::SetupEcho(_) | Message::SetupShare(_) => {}
            Message::SetupReady(_) => {}
            Message::RecoveryRequest(req) => {
                self.on_recovery_request(req, actions);
            }
            Message::RecoveryProposal(p) => {
                self.on_recovery_proposal(p, actions);
            }
            Message::RecoveryCommit(c) => {
                self.on_recovery_commit(c, actions);
            }
        }
    }

    // -- setup -------------------------------------------------------------------

    fn apply_setup_actions(&mut self, setup_actions: Vec<SetupAction>, out: &mut Vec<Action>) {
        for action in setup_actions {
            match action {
                SetupAction::BroadcastEcho(echo) => {
                    out.push(Action::BroadcastReplicas(Message::SetupEcho(echo)));
                }
                SetupAction::SendShare { to, ciphertext } => {
                    out.push(Action::Send {
                        to: NodeId::Replica(to),
                        msg: Message::SetupShare(crate::types::SetupShareMsg {
                            from: self.cfg.own_id,
                            ciphertext,
                        }),
                    });
                }
                SetupAction::Ready => {
                    self.enclave
                        .finalize_setup()
                        .expect("all shares and keys present at ready");
                    self.peer_keys = self.enclave.peer_keys();
                    self.mode = Mode::Running;
                    out.push(Action::BroadcastReplicas(Message::SetupReady(
                        self.cfg.own_id,
                    )));
                    out.push(Action::SetupComplete);
                    self.restart_batch_timer(out);
                    let queued = std::mem::take(&mut self.pre_ready_queue);
                    for (from, msg) in queued {
                        self.dispatch(from, msg, out);
                    }
                    self.drive(out);
                }
                SetupAction::Abort(reason) => {
                    self.mode = Mode::Aborted;
                    out.push(Action::SetupAborted(reason));
                }
            }
        }
    }

    // -- recovery ------------------------------------------------------------------

    fn verify_recovery_cert(&self, cert: &AttestationCertificate, recoverer: ReplicaId) -> bool {
        cert.replica_id == recoverer
            && cert.code_measurement == self.enclave.code_measurement()
            && self
                .registry
                .key_of(recoverer)
                .is_some_and(|k| cert.verify(k))
    }

    /// Creates (or restarts) the recovery instance for a recoverer. On first
    /// creation this replica freezes the source, captures its local history
    /// and broadcasts its proposal.
    fn ensure_recovery_instance(
        &mut self,
        request: &RecoveryRequestMsg,
        actions: &mut Vec<Action>,
    ) -> bool {
        if !self.verify_recovery_cert(&request.new_cert, request.recoverer) {
            return false;
        }
        let fresh = match self.recoveries.get(&request.recoverer) {
            Some(instance) => instance.new_cert.digest() != request.new_cert.digest(),
            None => true,
        };
        if !fresh {
            return true;
        }
        // A second request from the same replica mid-recovery restarts the
        // instance and discards the stale one.
        let instance = RecoveryInstance::new(self.cfg.n, request);
        self.recoveries.insert(request.recoverer, instance);

        // Capture the recoverer's local history (admitted plus buffered,
        // counter-ascending) before dropping the buffered copies.
        let mut history: Vec<VertexArc> = self
            .dag
            .iter()
            .filter(|v| v.source == request.recoverer)
            .cloned()
            .collect();
        history.extend(
            self.bcast
                .buffered()
                .filter(|v| v.source == request.recoverer)
                .cloned(),
        );
        history.sort_by_key(|v| v.counter_sig.counter);
        history.dedup_by_key(|v| v.counter_sig.counter);
        self.bcast.freeze_source(request.recoverer);

        let instance = &self.recoveries[&request.recoverer];
        let proposal = instance.make_proposal(self.cfg.own_id, history, &self.replica_key);
        actions.push(Action::BroadcastReplicas(Message::RecoveryProposal(
            proposal,
        )));
        true
    }

    fn on_recovery_request(&mut self, req: RecoveryRequestMsg, actions: &mut Vec<Action>) {
        self.ensure_recovery_instance(&req, actions);
    }

    fn on_recovery_proposal(
        &mut self,
        p: crate::types::RecoveryProposalMsg,
        actions: &mut Vec<Action>,
    ) {
        let request = RecoveryRequestMsg {
            recoverer: p.recoverer,
            new_cert: p.new_cert,
        };
        if !self.ensure_recovery_instance(&request, actions) {
            return;
        }
        let old_key = if p.recoverer == self.cfg.own_id {
            self.enclave.pre_crash_own_key().copied()
        } else {
            self.peer_keys.get(&p.recoverer).copied()
        };
        let own_id = self.cfg.own_id;
        let registry = self.registry.clone();
        let replica_key = self.replica_key.clone();
        let instance = self.recoveries.get_mut(&p.recoverer).expect("ensured");
        let step = instance.on_proposal(p, own_id, &registry, old_key.as_ref(), &replica_key);
        if let Some(commit) = step.commit {
            actions.push(Action::BroadcastReplicas(Message::RecoveryCommit(commit)));
        }
    }

    fn on_recovery_commit(&mut self, c: crate::types::RecoveryCommitMsg, actions: &mut Vec<Action>) {
        let request = RecoveryRequestMsg {
            recoverer: c.recoverer,
            new_cert: c.new_cert,
        };
        if !self.ensure_recovery_instance(&request, actions) {
            return;
        }
        let registry = self.registry.clone();
        let recoverer = c.recoverer;
        let instance = self.recoveries.get_mut(&recoverer).expect("ensured");
        let step = instance.on_commit(c, &registry);
        if step.completed {
            self.complete_recovery(recoverer, actions);
        }
    }

    /// Applies a completed recovery instance: adopt the committed history,
    /// pin the old epoch, swap the enclave key and (if we are the recoverer)
    /// cut over to the restart round with the replayed coin stream.
    fn complete_recovery(&mut self, recoverer: ReplicaId, actions: &mut Vec<Action>) {
        let instance = &self.recoveries[&recoverer];
        let history = instance.chosen_history.clone().expect("completed");
        let digest = instance.chosen_digest.expect("completed");
        let new_key = instance.new_cert.public_enclave_key;

        // Adopt committed vertices under the old epoch, then rotate.
        let pins: Vec<(u64, Digest)> = history
            .iter()
            .map(|v| (v.counter_sig.counter, v.digest()))
            .collect();
        for v in &history {
            self.bcast.adopt_committed_vertex(v.clone());
        }
        let highest_round = history.iter().map(|v| v.round).max();

        if recoverer == self.cfg.own_id {
            // Recoverer cutover: position the coin stream, seed replayed
            // values, restart the broadcast layer one past the history.
            let toss_count = toss_count_for_history(highest_round);
            let replayed = self
                .enclave
                .coin_fast_forward(toss_count)
                .expect("fast-forward after unseal");
            self.waves.seed_replayed_coins(&replayed);
            self.bcast.rekey_source(recoverer, &pins);
            self.bcast
                .restart_at_round(highest_round.unwrap_or(0) + 1);
            self.peer_keys = self.enclave.peer_keys();
            self.mode = Mode::Running;
            self.restart_batch_timer(actions);
        } else {
            let instance = &self.recoveries[&recoverer];
            instance
                .apply_key_replacement(&mut self.enclave, &self.registry)
                .expect("commit quorum verified");
            self.bcast.rekey_source(recoverer, &pins);
            self.peer_keys.insert(recoverer, new_key);
        }

        // Revalidate stashed vertices under the rotated key through the
        // normal FIFO path.
        if let Some(stash) = self.unverified_stash.remove(&recoverer) {
            for v in stash {
                self.bcast.on_receive_vertex(v, &self.peer_keys);
            }
        }
        actions.push(Action::RecoveryCompleted {
            recoverer,
            history_digest: digest,
        });
        self.drive(actions);
    }

    fn stash_unverified(&mut self, source: ReplicaId, v: VertexArc) {
        let stash = self.unverified_stash.entry(source).or_default();
        if stash.len() < self.cfg.unverified_stash_cap {
            stash.push(v);
        }
    }

    // -- the drive loop -------------------------------------------------------------

    fn restart_batch_timer(&mut self, out: &mut Vec<Action>) {
        self.batch_generation += 1;
        out.push(Action::SetTimer {
            kind: TimerKind::Batch {
                generation: self.batch_generation,
            },
            delay_us: self.cfg.broadcast.batch_timer_us,
        });
    }

    /// Runs integration, consensus, proposing and round advancement to a
    /// fixpoint after any event that may have changed graph state.
    fn drive(&mut self, out: &mut Vec<Action>) {
        loop {
            let mut progress = false;

            let integ = self.bcast.integrate(&mut self.dag);
            if !integ.admitted.is_empty() {
                progress = true;
            }
            for (requester, v) in integ.replies {
                let to = NodeId::Replica(requester);
                out.push(Action::Send {
                    to,
                    msg: Message::VertexReply(v),
                });
            }
            for r in integ.to_request {
                out.push(Action::BroadcastReplicas(Message::VertexRequest(r)));
            }

            if self.mode == Mode::Running {
                progress |= self.pump_consensus(out);

                match self.bcast.propose_vertex(&self.dag, &mut self.enclave) {
                    ProposeOutcome::Proposed(v) => {
                        self.dag.add(v.clone()).expect("own vertex edges admitted");
                        out.push(Action::BroadcastReplicas(Message::Vertex(v)));
                        progress = true;
                    }
                    ProposeOutcome::NotReady => {}
                }
                if self.bcast.try_advance_round(&self.dag).is_some() {
                    self.restart_batch_timer(out);
                    progress = true;
                }
            }

            if !progress {
                break;
            }
        }
    }

    /// Pumps decidable waves; delivers committed batches to the state
    /// machine and routes responses.
    fn pump_consensus(&mut self, out: &mut Vec<Action>) -> bool {
        let n = self.cfg.n;
        let enclave = &mut self.enclave;
        let keys = &self.peer_keys;
        let mut coin = |w: Wave, dag: &DagStore| -> Option<u32> {
            let round = wave_last_round(w);
            let mut evidence: Vec<&Vertex> = Vec::new();
            let mut sources = std::collections::BTreeSet::new();
            for v in dag.round_vertices(round) {
                if !sources.insert(v.source) {
                    continue;
                }
                if let Some(key) = keys.get(&v.source) {
                    if verify_counter_signature(
                        key,
                        &v.digest(),
                        v.counter_sig.counter,
                        &v.counter_sig.signature,
                    ) {
                        evidence.push(v);
                    }
                }
            }
            if evidence.len() < quorum(n) {
                return None;
            }
            match enclave.toss_coin(&evidence) {
                Ok(value) => Some(value),
                Err(e) => panic!("coin refused with assembled evidence: {e}"),
            }
        };
        let pump = self.waves.pump(&mut self.dag, &mut coin);
        let mut progress = false;
        for batch in &pump.batches {
            let responses = self.smr.on_delivery(&batch.vertices, &mut self.app);
            for r in responses {
                out.push(Action::Send {
                    to: client_node(r.client),
                    msg: Message::Response(r),
                });
            }
            progress = true;
        }
        for _ in 0..pump.decisions {
            out.push(Action::Decision);
        }
        progress
    }
}
