//! Synchronous setup protocol (attestation exchange, seed-share
//! distribution, ready barrier, abort-on-timeout) and the all-n recovery
//! protocol (RecoveryRequest / RecoveryProposal / RecoveryCommit).
//!
//! Setup tolerates zero faults by design: any silent or equivocating
//! participant aborts the whole procedure at every correct replica.
//! Recovery is Byzantine safe under asynchrony but live only when all
//! replicas participate.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{self, Digest, SigningKey};
use crate::enclave::{Enclave, EnclaveError, ReplicaKeyRegistry};
use crate::types::{
    history_digest, quorum, recovery_commit_digest, AttestationCertificate, RecoveryCommitMsg,
    RecoveryProposalMsg, RecoveryRequestMsg, ReplicaId, SetupEchoMsg, SetupShareMsg, VertexArc,
};

// ---------------------------------------------------------------------------
// Setup
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetupAbort {
    Timeout { origin: ReplicaId },
    ConflictingCertificates { origin: ReplicaId },
    InvalidCertificate { origin: ReplicaId },
    InvalidEcho { origin: ReplicaId, echoer: ReplicaId },
    InvalidShare { from: ReplicaId },
}

impl std::fmt::Display for SetupAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetupAbort::Timeout { origin } => write!(f, "timeout waiting on handshake {origin}"),
            SetupAbort::ConflictingCertificates { origin } => {
                write!(f, "conflicting certificates for origin {origin}")
            }
            SetupAbort::InvalidCertificate { origin } => {
                write!(f, "invalid certificate from origin {origin}")
            }
            SetupAbort::InvalidEcho { origin, echoer } => {
                write!(f, "invalid echo for origin {origin} from {echoer}")
            }
            SetupAbort::InvalidShare { from } => write!(f, "invalid seed share from {from}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakePhase {
    AwaitEcho,
    AwaitShare,
    Done,
}

/// Actions the setup state machine asks the replica to perform.
#[derive(Debug)]
pub enum SetupAction {
    BroadcastEcho(SetupEchoMsg),
    SendShare { to: ReplicaId, ciphertext: Vec<u8> },
    /// All handshakes complete and all shares absorbed.
    Ready,
    Abort(SetupAbort),
}

/// Per-replica setup driver. One synchronous authenticated single-echo
/// reliable broadcast instance per origin; a handshake with origin `i`
/// completes when n validly signed, mutually consistent echoes of i's
/// certificate are held.
#[derive(Debug)]
pub struct SetupState {
    own_id: ReplicaId,
    n: usize,
    /// Accepted certificate per origin (from the origin's own broadcast or
    /// the first valid echo carrying it).
    certs: BTreeMap<ReplicaId, AttestationCertificate>,
    /// Echoers seen per origin, with the digest of the certificate they
    /// echoed; any mismatch is equivocation and aborts.
    echoes: BTreeMap<ReplicaId, BTreeMap<ReplicaId, Digest>>,
    phase: BTreeMap<ReplicaId, HandshakePhase>,
    shares_absorbed: BTreeSet<ReplicaId>,
    echoed: BTreeSet<ReplicaId>,
    aborted: bool,
    ready: bool,
}

impl SetupState {
    pub fn new(own_id: ReplicaId, n: usize) -> Self {
        let mut phase = BTreeMap::new();
        for i in 0..n as ReplicaId {
            phase.insert(i, HandshakePhase::AwaitEcho);
        }
        SetupState {
            own_id,
            n,
            certs: BTreeMap::new(),
            echoes: BTreeMap::new(),
            phase,
            shares_absorbed: BTreeSet::new(),
            echoed: BTreeSet::new(),
            aborted: false,
            ready: false,
        }
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    pub fn cert_of(&self, origin: ReplicaId) -> Option<&AttestationCertificate> {
        self.certs.get(&origin)
    }

    fn abort(&mut self, reason: SetupAbort) -> Vec<SetupAction> {
        self.aborted = true;
        vec![SetupAction::Abort(reason)]
    }

    /// Handles the origin's certificate broadcast. Every receiver echoes the
    /// certificate (signed) to all replicas, including itself.
    pub fn on_cert(
        &mut self,
        cert: AttestationCertificate,
        enclave: &mut Enclave,
        registry: &ReplicaKeyRegistry,
        replica_key: &SigningKey,
    ) -> Vec<SetupAction> {
        if self.aborted || self.ready {
            return vec![];
        }
        let origin = cert.replica_id;
        if (origin as usize) >= self.n {
            return vec![];
        }
        match registry.key_of(origin) {
            Some(k) if cert.verify(k) && cert.code_measurement == enclave.code_measurement() => {}
            _ => return self.abort(SetupAbort::InvalidCertificate { origin }),
        }
        if let Some(existing) = self.certs.get(&origin) {
            if existing.digest() != cert.digest() {
                return self.abort(SetupAbort::ConflictingCertificates { origin });
            }
        } else {
            self.certs.insert(origin, cert);
        }
        if !self.echoed.insert(origin) {
            return vec![];
        }
        let digest = SetupEchoMsg::signed_digest(origin, self.own_id, &cert);
        vec![SetupAction::BroadcastEcho(SetupEchoMsg {
            origin,
            echoer: self.own_id,
            cert,
            signature: replica_key.sign(&digest),
        })]
    }

    /// Collects echoes. The handshake with `origin` completes when all n
    /// replicas echoed the identical certificate.
    pub fn on_echo(
        &mut self,
        echo: SetupEchoMsg,
        enclave: &mut Enclave,
        registry: &ReplicaKeyRegistry,
        replica_key: &SigningKey,
    ) -> Vec<SetupAction> {
        if self.aborted || self.ready {
            return vec![];
        }
        let origin = echo.origin;
        if (origin as usize) >= self.n || (echo.echoer as usize) >= self.n {
            return vec![];
        }
        let expected = SetupEchoMsg::signed_digest(origin, echo.echoer, &echo.cert);
        let valid = registry
            .key_of(echo.echoer)
            .is_some_and(|k| crypto::verify(k, &expected, &echo.signature));
        if !valid {
            return self.abort(SetupAbort::InvalidEcho {
                origin,
                echoer: echo.echoer,
            });
        }
        if !echo.cert.code_measurement.eq(&enclave.code_measurement())
            || echo.cert.replica_id != origin
            || registry.key_of(origin).map_or(true, |k| !echo.cert.verify(k))
        {
            return self.abort(SetupAbort::InvalidCertificate { origin });
        }
        let cert_digest = echo.cert.digest();
        // First sight of the certificate may come through an echo.
        let mut actions = self.on_cert(echo.cert, enclave, registry, replica_key);
        if self.aborted {
            return actions;
        }
        let per_origin = self.echoes.entry(origin).or_default();
        if let Some(prev) = per_origin.get(&echo.echoer) {
            if *prev != cert_digest {
                return self.abort(SetupAbort::ConflictingCertificates { origin });
            }
        }
        if per_origin.values().any(|d| *d != cert_digest) {
            return self.abort(SetupAbort::ConflictingCertificates { origin });
        }
        per_origin.insert(echo.echoer, cert_digest);
        if per_origin.len() == self.n && self.phase[&origin] == HandshakePhase::AwaitEcho {
            // Handshake complete: trust the certificate, install the key and
            // hand the origin our encrypted seed share (self keeps its own).
            let cert = self.certs[&origin];
            if enclave.install_peer(&cert, registry).is_err() {
                return self.abort(SetupAbort::InvalidCertificate { origin });
            }
            if origin == self.own_id {
                self.phase.insert(origin, HandshakePhase::Done);
                self.shares_absorbed.insert(origin);
            } else {
                self.phase.insert(origin, HandshakePhase::AwaitShare);
                match enclave.export_share_for(origin) {
                    Ok(ciphertext) => actions.push(SetupAction::SendShare {
                        to: origin,
                        ciphertext,
                    }),
                    Err(_) => return self.abort(SetupAbort::InvalidCertificate { origin }),
                }
            }
            actions.extend(self.maybe_ready());
        }
        actions
    }

    /// Absorbs a peer's encrypted seed share into the enclave.
    pub fn on_share(&mut self, share: SetupShareMsg, enclave: &mut Enclave) -> Vec<SetupAction> {
        if self.aborted || self.ready {
            return vec![];
        }
        let from = share.from;
        if (from as usize) >= self.n || from == self.own_id {
            return vec![];
        }
        if !self.shares_absorbed.insert(from) {
            return vec![];
        }
        if enclave.absorb_seed_share(&share.ciphertext).is_err() {
            return self.abort(SetupAbort::InvalidShare { from });
        }
        self.maybe_ready()
    }

    /// Deadline for one handshake expired.
    pub fn on_deadline(&mut self, origin: ReplicaId) -> Vec<SetupAction> {
        if self.aborted || self.ready {
            return vec![];
        }
        if self.phase[&origin] != HandshakePhase::Done {
            return self.abort(SetupAbort::Timeout { origin });
        }
        vec![]
    }

    fn maybe_ready(&mut self) -> Vec<SetupAction> {
        // Share phases complete implicitly once the peer's share arrived.
        for i in 0..self.n as ReplicaId {
            if self.phase[&i] == HandshakePhase::AwaitShare && self.shares_absorbed.contains(&i) {
                self.phase.insert(i, HandshakePhase::Done);
            }
        }
        let all_done = (0..self.n as ReplicaId).all(|i| self.phase[&i] == HandshakePhase::Done);
        if all_done && self.shares_absorbed.len() == self.n && !self.ready {
            self.ready = true;
            return vec![SetupAction::Ready];
        }
        vec![]
    }
}

// ---------------------------------------------------------------------------
// Recovery
// ---------------------------------------------------------------------------

/// Validates a proposed history as a chain: counters contiguous from 0,
/// signatures valid under the recoverer's pre-crash enclave key, structure
/// sound. Returns the length of the longest valid prefix.
pub fn valid_chain_len(
    history: &[VertexArc],
    old_key: &crate::types::EnclavePublicKey,
) -> usize {
    let mut len = 0;
    for (i, v) in history.iter().enumerate() {
        if v.counter_sig.counter != i as u64 {
            break;
        }
        if !crate::enclave::verify_counter_signature(
            old_key,
            &v.digest(),
            v.counter_sig.counter,
            &v.counter_sig.signature,
        ) {
            break;
        }
        len = i + 1;
    }
    len
}

/// Per-recoverer recovery instance driven by a non-recovering replica
/// (the recoverer itself runs one too; its own proposal is empty).
#[derive(Debug)]
pub struct RecoveryInstance {
    pub recoverer: ReplicaId,
    pub new_cert: AttestationCertificate,
    n: usize,
    proposals: BTreeMap<ReplicaId, RecoveryProposalMsg>,
    commits: BTreeMap<ReplicaId, RecoveryCommitMsg>,
    commit_sent: bool,
    pub completed: bool,
    /// Digest and content of the adopted history once completed.
    pub chosen_digest: Option<Digest>,
    pub chosen_history: Option<Vec<VertexArc>>,
}

#[derive(Debug, Default)]
pub struct RecoveryStep {
    pub proposal: Option<RecoveryProposalMsg>,
    pub commit: Option<RecoveryCommitMsg>,
    /// Set when a quorum of consistent commits completed the instance.
    pub completed: bool,
}

impl RecoveryInstance {
    /// Starts an instance from a verified RecoveryRequest.
    pub fn new(n: usize, request: &RecoveryRequestMsg) -> Self {
        RecoveryInstance {
            recoverer: request.recoverer,
            new_cert: request.new_cert,
            n,
            proposals: BTreeMap::new(),
            commits: BTreeMap::new(),
            commit_sent: false,
            completed: false,
            chosen_digest: None,
            chosen_history: None,
        }
    }

    /// Builds this replica's own proposal carrying the recoverer's complete
    /// local history, counter-ascending.
    pub fn make_proposal(
        &self,
        proposer: ReplicaId,
        history: Vec<VertexArc>,
        replica_key: &SigningKey,
    ) -> RecoveryProposalMsg {
        let digest =
            RecoveryProposalMsg::signed_digest(proposer, self.recoverer, &self.new_cert, &history);
        RecoveryProposalMsg {
            proposer,
            recoverer: self.recoverer,
            new_cert: self.new_cert,
            history,
            signature: replica_key.sign(&digest),
        }
    }

    /// Accepts a proposal; once all n are in, picks the longest valid chain
    /// and emits this replica's commit.
    pub fn on_proposal(
        &mut self,
        msg: RecoveryProposalMsg,
        own_id: ReplicaId,
        registry: &ReplicaKeyRegistry,
        old_key: Option<&crate::types::EnclavePublicKey>,
        replica_key: &SigningKey,
    ) -> RecoveryStep {
        let mut step = RecoveryStep::default();
        if self.completed || self.commit_sent {
            return step;
        }
        if msg.recoverer != self.recoverer || msg.new_cert.digest() != self.new_cert.digest() {
            // Mismatched certificate: ignore; the protocol stalls rather
            // than guessing (all-n liveness only).
            return step;
        }
        let expected = RecoveryProposalMsg::signed_digest(
            msg.proposer,
            msg.recoverer,
            &msg.new_cert,
            &msg.history,
        );
        let valid = registry
            .key_of(msg.proposer)
            .is_some_and(|k| crypto::verify(k, &expected, &msg.signature));
        if !valid {
            return step;
        }
        self.proposals.entry(msg.proposer).or_insert(msg);
        if self.proposals.len() < self.n {
            return step;
        }
        // All n proposals in: select the longest valid chain; ties broken
        // by lowest proposer id (equal-length valid chains are identical
        // under non-equivocation, so this is only a determinism guard).
        let mut best: Option<(usize, ReplicaId, Vec<VertexArc>)> = None;
        for (proposer, proposal) in &self.proposals {
            let len = match old_key {
                Some(k) => valid_chain_len(&proposal.history, k),
                None => 0,
            };
            let chain: Vec<VertexArc> = proposal.history[..len].to_vec();
            let better = match &best {
                None => true,
                Some((blen, bid, _)) => len > *blen || (len == *blen && proposer < bid),
            };
            if better {
                best = Some((len, *proposer, chain));
            }
        }
        let (_, _, chain) = best.expect("n proposals processed");
        let digest = history_digest(&chain);
        let commit_digest = recovery_commit_digest(self.recoverer, &self.new_cert, &digest);
        let commit = RecoveryCommitMsg {
            committer: own_id,
            recoverer: self.recoverer,
            new_cert: self.new_cert,
            chosen_history_digest: digest,
            signature: replica_key.sign(&commit_digest),
        };
        self.commit_sent = true;
        step.commit = Some(commit);
        step
    }

    /// Accepts a commit; completes once floor(n/2)+1 consistent commits
    /// from distinct replicas are held.
    pub fn on_commit(&mut self, msg: RecoveryCommitMsg, registry: &ReplicaKeyRegistry) -> RecoveryStep {
        let mut step = RecoveryStep::default();
        if self.completed {
            return step;
        }
        if msg.recoverer != self.recoverer || msg.new_cert.digest() != self.new_cert.digest() {
            return step;
        }
        let digest = recovery_commit_digest(
            self.recoverer,
            &msg.new_cert,
            &msg.chosen_history_digest,
        );
        let valid = registry
            .key_of(msg.committer)
            .is_some_and(|k| crypto::verify(k, &digest, &msg.signature));
        if !valid {
            return step;
        }
        self.commits.entry(msg.committer).or_insert(msg);
        // Consistent = identical (recoverer, cert, history digest).
        let mut by_digest: BTreeMap<Digest, Vec<ReplicaId>> = BTreeMap::new();
        for (id, c) in &self.commits {
            by_digest.entry(c.chosen_history_digest).or_default().push(*id);
        }
        let need = quorum(self.n);
        for (digest, committers) in by_digest {
            if committers.len() >= need {
                // Locate the history content among the proposals.
                let content = self.proposals.values().find_map(|p| {
                    for len in (0..=p.history.len()).rev() {
                        if history_digest(&p.history[..len]) == digest {
                            return Some(p.history[..len].to_vec());
                        }
                    }
                    None
                });
                let Some(history) = content else {
                    // We never saw matching content; cannot complete.
                    return step;
                };
                self.completed = true;
                self.chosen_digest = Some(digest);
                self.chosen_history = Some(history);
                step.completed = true;
                return step;
            }
        }
        step
    }

    /// Signatures of the consistent commit set, for the enclave key swap.
    pub fn commit_signatures(&self) -> Vec<(ReplicaId, crate::crypto::Signature)> {
        let Some(digest) = self.chosen_digest else {
            return vec![];
        };
        self.commits
            .iter()
            .filter(|(_, c)| c.chosen_history_digest == digest)
            .map(|(id, c)| (*id, c.signature))
            .collect()
    }

    /// Applies the committed history to the enclave: replaces the
    /// recoverer's enclave key after verifying the commit quorum.
    pub fn apply_key_replacement(
        &self,
        enclave: &mut Enclave,
        registry: &ReplicaKeyRegistry,
    ) -> Result<(), EnclaveError> {
        let digest = self.chosen_digest.expect("completed instance");
        enclave.replace_peer_key(
            self.recoverer,
            &self.new_cert,
            &digest,
            &self.commit_signatures(),
            registry,
        )
    }
}

/// Number of coin values the pre-crash incarnation can have revealed, given
/// the highest round in its committed history: proposing round h implies
/// rounds up to h−1 were completed, hence floor((h−1)/4) waves were tossed.
/// (Counting floor(h/4) would replay one coin the incarnation may never
/// have revealed when h is a wave boundary — a premature reveal.)
pub fn toss_count_for_history(highest_round: Option<crate::types::Round>) -> u64 {
    match highest_round {
        Some(h) if h >= 1 => (h - 1) / 4,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::EnclavePlatform;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    pub(crate) struct TestPlatform {
        rng: ChaCha20Rng,
        seal: [u8; 32],
    }

    impl TestPlatform {
        pub fn new(seed: u64) -> Self {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut seal = [0u8; 32];
            rng.fill_bytes(&mut seal);
            TestPlatform { rng, seal }
        }
    }

    impl EnclavePlatform for TestPlatform {
        fn fill_entropy(&mut self, buf: &mut [u8]) {
            self.rng.fill_bytes(buf);
        }
        fn sealing_key(&self) -> [u8; 32] {
            self.seal
        }
    }

    fn signed_vertex(enclave: &mut Enclave, round: u64) -> VertexArc {
        let mut v = crate::types::Vertex {
            round,
            source: enclave.own_id(),
            payload: vec![],
            edges: vec![],
            counter_sig: crate::types::CounterSignature {
                counter: 0,
                signature: crate::crypto::Signature([0u8; 64]),
            },
        };
        let d = v.digest();
        v.counter_sig = enclave.sign(&d);
        Arc::new(v)
    }

    #[test]
    fn chain_validation_stops_at_gap_and_bad_signature() {
        let mut platform = TestPlatform::new(11);
        let mut enclave = Enclave::init(0, 3, "build", &mut platform);
        let key = enclave.public_key();
        let mut history: Vec<VertexArc> = (1..=12).map(|r| signed_vertex(&mut enclave, r)).collect();
        assert_eq!(valid_chain_len(&history, &key), 12);

        // Tamper the signature at position 8: valid chain is length 8.
        let mut broken = (*history[8]).clone();
        broken.counter_sig.signature.0[0] ^= 1;
        history[8] = Arc::new(broken);
        assert_eq!(valid_chain_len(&history, &key), 8);

        // Counter gap ends the chain too.
        let mut gapped = history[..8].to_vec();
        let mut v = (*gapped[7]).clone();
        v.counter_sig.counter = 9;
        gapped[7] = Arc::new(v);
        assert_eq!(valid_chain_len(&gapped, &key), 7);
    }

    #[test]
    fn instance_picks_longest_valid_chain() {
        let n = 3usize;
        let (mut enclaves, keys, registry) = crate::testutil::test_federation(n, 555);
        // Recoverer = replica 2. Its new incarnation:
        let fresh = Enclave::init(2, 3, "build", &mut crate::testutil::TestPlatform::new(556));
        let new_cert = fresh.make_attestation(&keys[2]);
        let old_key = enclaves[2].public_key();

        // Replica 2's signed history, 12 vertices.
        let full: Vec<VertexArc> = (1..=12).map(|r| signed_vertex(&mut enclaves[2], r)).collect();

        let request = crate::types::RecoveryRequestMsg {
            recoverer: 2,
            new_cert,
        };
        let mut instance = RecoveryInstance::new(n, &request);
        // Proposer 0 saw only 10 vertices; proposer 1 saw all 12 but one
        // signature is broken at position 8; proposer 2 (the recoverer)
        // proposes empty.
        let p0 = instance.make_proposal(0, full[..10].to_vec(), &keys[0]);
        let mut damaged = full.clone();
        let mut broken = (*damaged[8]).clone();
        broken.counter_sig.signature.0[0] ^= 1;
        damaged[8] = Arc::new(broken);
        let p1 = instance.make_proposal(1, damaged, &keys[1]);
        let p2 = instance.make_proposal(2, vec![], &keys[2]);

        let s0 = instance.on_proposal(p0, 0, &registry, Some(&old_key), &keys[0]);
        assert!(s0.commit.is_none());
        let s1 = instance.on_proposal(p1, 0, &registry, Some(&old_key), &keys[0]);
        assert!(s1.commit.is_none());
        let s2 = instance.on_proposal(p2, 0, &registry, Some(&old_key), &keys[0]);
        // All three proposals in: proposer 1's valid chain is only length 8
        // (broken signature), so the length-10 proposal wins.
        let commit = s2.commit.expect("commit after n proposals");
        assert_eq!(
            commit.chosen_history_digest,
            history_digest(&full[..10])
        );
    }

    #[test]
    fn identical_proposals_commit_directly() {
        let n = 3usize;
        let (mut enclaves, keys, registry) = crate::testutil::test_federation(n, 777);
        let fresh = Enclave::init(1, 3, "build", &mut crate::testutil::TestPlatform::new(778));
        let new_cert = fresh.make_attestation(&keys[1]);
        let old_key = enclaves[1].public_key();
        let history: Vec<VertexArc> = (1..=5).map(|r| signed_vertex(&mut enclaves[1], r)).collect();
        let request = crate::types::RecoveryRequestMsg {
            recoverer: 1,
            new_cert,
        };
        let mut instance = RecoveryInstance::new(n, &request);
        let mut commit = None;
        for proposer in 0..3u32 {
            let p = instance.make_proposal(proposer, history.clone(), &keys[proposer as usize]);
            let step = instance.on_proposal(p, 0, &registry, Some(&old_key), &keys[0]);
            if let Some(c) = step.commit {
                commit = Some(c);
            }
        }
        let commit = commit.expect("commit");
        assert_eq!(commit.chosen_history_digest, history_digest(&history));

        // Quorum of consistent commits completes the instance with content.
        let c0 = RecoveryCommitMsg {
            committer: 0,
            signature: keys[0].sign(&recovery_commit_digest(
                1,
                &instance.new_cert,
                &commit.chosen_history_digest,
            )),
            ..commit.clone()
        };
        let step = instance.on_commit(c0, &registry);
        assert!(!step.completed);
        let c1 = RecoveryCommitMsg {
            committer: 1,
            signature: keys[1].sign(&recovery_commit_digest(
                1,
                &instance.new_cert,
                &commit.chosen_history_digest,
            )),
            ..commit
        };
        let step = instance.on_commit(c1, &registry);
        assert!(step.completed);
        assert_eq!(
            instance.chosen_history.as_ref().map(|h| h.len()),
            Some(history.len())
        );
    }

    #[test]
    fn toss_count_derivation() {
        assert_eq!(toss_count_for_history(None), 0);
        assert_eq!(toss_count_for_history(Some(1)), 0);
        assert_eq!(toss_count_for_history(Some(4)), 0);
        assert_eq!(toss_count_for_history(Some(5)), 1);
        assert_eq!(toss_count_for_history(Some(8)), 1);
        assert_eq!(toss_count_for_history(Some(9)), 2);
        assert_eq!(toss_count_for_history(Some(12)), 2);
        assert_eq!(toss_count_for_history(Some(13)), 3);
    }
}
