//! Shared domain types: client requests, DAG vertices and references,
//! attestation material, and the setup/recovery message bodies.
//!
//! Identity of a vertex is its canonical content digest over
//! (round, source, payload, edges) — the counter signature is excluded so
//! the digest can be computed before signing and re-checked by receivers.

use std::sync::Arc;

use crate::crypto::{sha256, Digest, PublicKey, Signature};
use crate::wire;

pub type ReplicaId = u32;
pub type ClientId = u64;
pub type Round = u64;
pub type Wave = u64;

/// Quorum size used throughout: floor(n/2) + 1.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

/// Endpoint address inside the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Replica(ReplicaId),
    Client(u32),
}

// ---------------------------------------------------------------------------
// Client requests and responses
// ---------------------------------------------------------------------------

/// The unit of ordering and deduplication: (client, sequence number) names
/// the request; the command is the opaque application payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRequest {
    pub client: ClientId,
    pub seq: u64,
    pub command: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub client: ClientId,
    pub seq: u64,
    pub result: Vec<u8>,
}

// ---------------------------------------------------------------------------
// Vertices
// ---------------------------------------------------------------------------

/// Content-addressed reference to a vertex of a specific round and source.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexRef {
    pub digest: Digest,
    pub round: Round,
    pub source: ReplicaId,
}

impl std::fmt::Debug for VertexRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "VertexRef(r{} s{} {})",
            self.round,
            self.source,
            hex::encode(&self.digest[..4])
        )
    }
}

/// Counter-accompanied signature produced by the trusted signature service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterSignature {
    pub counter: u64,
    pub signature: Signature,
}

/// One round's signed proposal of a replica: client requests plus edges to
/// a quorum of previous-round vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub round: Round,
    pub source: ReplicaId,
    pub payload: Vec<ClientRequest>,
    pub edges: Vec<VertexRef>,
    pub counter_sig: CounterSignature,
}

impl Vertex {
    /// Canonical content digest; binds (round, source, payload, edges).
    pub fn digest(&self) -> Digest {
        wire::vertex_content_digest(self)
    }

    pub fn reference(&self) -> VertexRef {
        VertexRef {
            digest: self.digest(),
            round: self.round,
            source: self.source,
        }
    }
}

pub type VertexArc = Arc<Vertex>;

// ---------------------------------------------------------------------------
// Attestation
// ---------------------------------------------------------------------------

/// Composite public enclave key: signing half for the signature service,
/// box half for receiving encrypted seed shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnclavePublicKey {
    pub sign: PublicKey,
    pub encrypt: crate::crypto::BoxPublicKey,
}

impl EnclavePublicKey {
    pub fn digest_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.sign.0);
        out[32..].copy_from_slice(&self.encrypt.0);
        out
    }
}

/// Binding between a replica's long-living key and a fresh enclave key,
/// plus the measurement of the enclave build it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttestationCertificate {
    pub replica_id: ReplicaId,
    pub public_enclave_key: EnclavePublicKey,
    pub code_measurement: Digest,
    pub replica_signature: Signature,
}

impl AttestationCertificate {
    /// The digest the replica key signs.
    pub fn signed_digest(
        replica_id: ReplicaId,
        key: &EnclavePublicKey,
        measurement: &Digest,
    ) -> Digest {
        sha256(&[
            b"NXATT1",
            &replica_id.to_le_bytes(),
            &key.digest_bytes(),
            measurement,
        ])
    }

    pub fn verify(&self, replica_public: &PublicKey) -> bool {
        let digest = Self::signed_digest(
            self.replica_id,
            &self.public_enclave_key,
            &self.code_measurement,
        );
        crate::crypto::verify(replica_public, &digest, &self.replica_signature)
    }

    /// Stable identity of the certificate content (including the signature).
    pub fn digest(&self) -> Digest {
        sha256(&[
            b"NXATTD",
            &self.replica_id.to_le_bytes(),
            &self.public_enclave_key.digest_bytes(),
            &self.code_measurement,
            &self.replica_signature.0,
        ])
    }
}

// ---------------------------------------------------------------------------
// Setup messages
// ---------------------------------------------------------------------------

/// Echo of an origin's certificate, signed by the echoing replica.
#[derive(Debug, Clone)]
pub struct SetupEchoMsg {
    pub origin: ReplicaId,
    pub echoer: ReplicaId,
    pub cert: AttestationCertificate,
    pub signature: Signature,
}

impl SetupEchoMsg {
    pub fn signed_digest(origin: ReplicaId, echoer: ReplicaId, cert: &AttestationCertificate) -> Digest {
        sha256(&[
            b"NXECHO1",
            &origin.to_le_bytes(),
            &echoer.to_le_bytes(),
            &cert.digest(),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct SetupShareMsg {
    pub from: ReplicaId,
    pub ciphertext: Vec<u8>,
}

// ---------------------------------------------------------------------------
// Recovery messages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RecoveryRequestMsg {
    pub recoverer: ReplicaId,
    pub new_cert: AttestationCertificate,
}

/// A replica's view of the recoverer's message history, counter-ascending.
#[derive(Debug, Clone)]
pub struct RecoveryProposalMsg {
    pub proposer: ReplicaId,
    pub recoverer: ReplicaId,
    pub new_cert: AttestationCertificate,
    pub history: Vec<VertexArc>,
    pub signature: Signature,
}

impl RecoveryProposalMsg {
    pub fn signed_digest(
        proposer: ReplicaId,
        recoverer: ReplicaId,
        cert: &AttestationCertificate,
        history: &[VertexArc],
    ) -> Digest {
        sha256(&[
            b"NXRPRO1",
            &proposer.to_le_bytes(),
            &recoverer.to_le_bytes(),
            &cert.digest(),
            &history_digest(history),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryCommitMsg {
    pub committer: ReplicaId,
    pub recoverer: ReplicaId,
    pub new_cert: AttestationCertificate,
    pub chosen_history_digest: Digest,
    pub signature: Signature,
}

/// Digest every committer signs; embeds the new certificate so the enclave
/// key replacement can verify agreement on it.
pub fn recovery_commit_digest(
    recoverer: ReplicaId,
    cert: &AttestationCertificate,
    chosen_history_digest: &Digest,
) -> Digest {
    sha256(&[
        b"NXRCOM1",
        &recoverer.to_le_bytes(),
        &cert.digest(),
        chosen_history_digest,
    ])
}

/// Digest of an ordered vertex history (digests and counters, in order).
pub fn history_digest(history: &[VertexArc]) -> Digest {
    let mut parts: Vec<u8> = Vec::with_capacity(8 + history.len() * 40);
    parts.extend_from_slice(&(history.len() as u64).to_le_bytes());
    for v in history {
        parts.extend_from_slice(&v.digest());
        parts.extend_from_slice(&v.counter_sig.counter.to_le_bytes());
    }
    sha256(&[b"NXHIST1", &parts])
}

// ---------------------------------------------------------------------------
// Wire message enum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Message {
    Vertex(VertexArc),
    VertexRequest(VertexRef),
    VertexReply(VertexArc),
    Request(ClientRequest),
    Response(Response),
    SetupCert(AttestationCertificate),
    SetupEcho(SetupEchoMsg),
    SetupShare(SetupShareMsg),
    SetupReady(ReplicaId),
    RecoveryRequest(RecoveryRequestMsg),
    RecoveryProposal(RecoveryProposalMsg),
    RecoveryCommit(RecoveryCommitMsg),
}

/// Message families for metrics accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Vertex,
    VertexRequest,
    VertexReply,
    Request,
    Response,
    Setup,
    Recovery,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Vertex(_) => MessageKind::Vertex,
            Message::VertexRequest(_) => MessageKind::VertexRequest,
            Message::VertexReply(_) => MessageKind::VertexReply,
            Message::Request(_) => MessageKind::Request,
            Message::Response(_) => MessageKind::Response,
            Message::SetupCert(_) | Message::SetupEcho(_) | Message::SetupShare(_) | Message::SetupReady(_) => MessageKind::Setup,
            Message::RecoveryRequest(_) | Message::RecoveryProposal(_) | Message::RecoveryCommit(_) => {
                MessageKind::Recovery
            }
        }
    }
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::Vertex => "vertex",
            MessageKind::VertexRequest => "vertex_request",
            MessageKind::VertexReply => "vertex_reply",
            MessageKind::Request => "request",
            MessageKind::Response => "response",
            MessageKind::Setup => "setup",
            MessageKind::Recovery => "recovery",
        }
    }

    pub fn all() -> &'static [MessageKind] {
        &[
            MessageKind::Vertex,
            MessageKind::VertexRequest,
            MessageKind::VertexReply,
            MessageKind::Request,
            MessageKind::Response,
            MessageKind::Setup,
            MessageKind::Recovery,
        ]
    }
}
