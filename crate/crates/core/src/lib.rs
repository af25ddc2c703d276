//! TEE-assisted, DAG-based state machine replication over a deterministic
//! simulated network.
//!
//! The protocol stack has three layers plus a trusted subsystem:
//!
//! * [`broadcast`] — FIFO non-equivocating best-effort broadcast of round
//!   vertices, upgraded to reliable broadcast by backfilling.
//! * [`consensus`] — wave bookkeeping, coin-based root selection, direct and
//!   retrospective commits, deterministic ordering traversal.
//! * [`smr`] — client request intake, deduplication, execution, responses.
//! * [`enclave`] — emulated trusted subsystem: counter signature service,
//!   PRNG common coin, sealing; the non-equivocation anchor.
//!
//! [`lifecycle`] runs the synchronous setup and all-n recovery protocols,
//! [`replica`] composes the layers into one event-driven state machine, and
//! [`sim`] drives any number of replicas plus emulated clients through a
//! deterministic discrete-event network with fault injection. [`harness`]
//! adds experiment orchestration, invariant auditing and reporting.

pub mod broadcast;
pub mod consensus;
pub mod crypto;
pub mod dag;
pub mod enclave;
pub mod harness;
pub mod lifecycle;
pub mod replica;
pub mod sim;
pub mod smr;
pub mod types;
pub mod wire;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::crypto::{Signature, SigningKey};
    use crate::enclave::{Enclave, EnclavePlatform, ReplicaKeyRegistry};
    use crate::types::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    pub struct TestPlatform {
        rng: ChaCha20Rng,
        seal: [u8; 32],
    }

    impl TestPlatform {
        pub fn new(seed: u64) -> Self {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
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

    /// A fully set-up federation: every enclave holds every peer key and
    /// the XOR of all n shares.
    pub fn test_federation(
        n: usize,
        seed: u64,
    ) -> (Vec<Enclave>, Vec<SigningKey>, ReplicaKeyRegistry) {
        let mut keys = Vec::new();
        let mut key_rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..n {
            keys.push(SigningKey::generate(&mut key_rng));
        }
        let registry = ReplicaKeyRegistry {
            keys: keys.iter().map(|k| k.public()).collect(),
        };
        let mut enclaves: Vec<Enclave> = (0..n)
            .map(|i| {
                let mut p = TestPlatform::new(seed * 100 + i as u64);
                Enclave::init(i as ReplicaId, n, "build", &mut p)
            })
            .collect();
        let certs: Vec<AttestationCertificate> = enclaves
            .iter()
            .enumerate()
            .map(|(i, e)| e.make_attestation(&keys[i]))
            .collect();
        for e in enclaves.iter_mut() {
            for c in &certs {
                e.install_peer(c, &registry).unwrap();
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let ct = enclaves[i].export_share_for(j as ReplicaId).unwrap();
                enclaves[j].absorb_seed_share(&ct).unwrap();
            }
        }
        for e in enclaves.iter_mut() {
            e.finalize_setup().unwrap();
        }
        (enclaves, keys, registry)
    }

    /// Signs a vertex through an enclave, consuming one counter.
    pub fn sign_vertex(
        enclave: &mut Enclave,
        round: Round,
        payload: Vec<ClientRequest>,
        edges: Vec<VertexRef>,
    ) -> VertexArc {
        let mut v = Vertex {
            round,
            source: enclave.own_id(),
            payload,
            edges,
            counter_sig: CounterSignature {
                counter: 0,
                signature: Signature([0u8; 64]),
            },
        };
        let d = v.digest();
        v.counter_sig = enclave.sign(&d);
        Arc::new(v)
    }

    /// Vertex without a meaningful signature, for graph-level tests. The
    /// counter mirrors the round so FIFO-free paths stay distinguishable.
    pub fn bare_vertex(round: Round, source: ReplicaId, edges: Vec<VertexRef>) -> VertexArc {
        vertex_with_payload_edges(round, source, vec![], edges)
    }

    pub fn vertex_with_payload(
        round: Round,
        source: ReplicaId,
        payload: Vec<ClientRequest>,
    ) -> VertexArc {
        vertex_with_payload_edges(round, source, payload, vec![])
    }

    pub fn vertex_with_payload_edges(
        round: Round,
        source: ReplicaId,
        payload: Vec<ClientRequest>,
        edges: Vec<VertexRef>,
    ) -> VertexArc {
        Arc::new(Vertex {
            round,
            source,
            payload,
            edges,
            counter_sig: CounterSignature {
                counter: round.saturating_sub(1),
                signature: Signature([0u8; 64]),
            },
        })
    }
}

pub use types::{
    ClientId, ClientRequest, Message, NodeId, ReplicaId, Response, Round, Vertex, VertexRef, Wave,
};
