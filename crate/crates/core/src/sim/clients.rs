//! Emulated clients. A correct client has at most one open request; under
//! the relaxed model it unicasts to a random replica, falls back to another
//! on timeout and completes on the first answer. Under the BFT model it
//! broadcasts and waits for a quorum of matching answers.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::types::{quorum, ClientId, ClientRequest, ReplicaId, Response};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientModel {
    Nxb,
    Bft,
}

#[derive(Debug)]
pub struct OpenRequest {
    pub seq: u64,
    pub command: Vec<u8>,
    pub issued_us: u64,
    pub target: ReplicaId,
    pub attempts: u32,
    pub timer_generation: u64,
    /// BFT: responses by result payload, counting distinct replicas.
    pub matching: Vec<(Vec<u8>, BTreeSet<ReplicaId>)>,
}

#[derive(Debug)]
pub enum ClientStep {
    /// Send the request to these replicas and (for the relaxed model) arm
    /// the fallback timer with the given generation.
    Send {
        to: Vec<ReplicaId>,
        request: ClientRequest,
        arm_timer: Option<u64>,
    },
    Completed {
        seq: u64,
        issued_us: u64,
        attempts: u32,
    },
    Idle,
}

#[derive(Debug)]
pub struct ClientState {
    pub id: ClientId,
    model: ClientModel,
    n: usize,
    payload_bytes: usize,
    next_seq: u64,
    pub open: Option<OpenRequest>,
    /// Replicas this client has observed to time out.
    suspected: BTreeSet<ReplicaId>,
    rng: ChaCha20Rng,
}

impl ClientState {
    pub fn new(id: ClientId, model: ClientModel, n: usize, payload_bytes: usize, seed: [u8; 32]) -> Self {
        ClientState {
            id,
            model,
            n,
            payload_bytes,
            next_seq: 1,
            open: None,
            suspected: BTreeSet::new(),
            rng: ChaCha20Rng::from_seed(seed),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.open.is_none()
    }

    fn pick_replica(&mut self, exclude: Option<ReplicaId>) -> ReplicaId {
        // Uniform over replicas not yet suspected; if that leaves nothing,
        // fall back to uniform over all (suspicion may be stale).
        let candidates: Vec<ReplicaId> = (0..self.n as ReplicaId)
            .filter(|r| !self.suspected.contains(r) && Some(*r) != exclude)
            .collect();
        let pool: Vec<ReplicaId> = if candidates.is_empty() {
            (0..self.n as ReplicaId).filter(|r| Some(*r) != exclude).collect()
        } else {
            candidates
        };
        pool[self.rng.gen_range(0..pool.len())]
    }

    /// Issues a fresh request if idle.
    pub fn issue(&mut self, now_us: u64) -> ClientStep {
        if self.open.is_some() {
            return ClientStep::Idle;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let mut command = vec![0u8; self.payload_bytes];
        self.rng.fill_bytes(&mut command);
        let (targets, target) = match self.model {
            ClientModel::Nxb => {
                let t = self.pick_replica(None);
                (vec![t], t)
            }
            ClientModel::Bft => ((0..self.n as ReplicaId).collect(), 0),
        };
        let generation = seq;
        self.open = Some(OpenRequest {
            seq,
            command: command.clone(),
            issued_us: now_us,
            target,
            attempts: 1,
            timer_generation: generation,
            matching: Vec::new(),
        });
        ClientStep::Send {
            to: targets,
            request: ClientRequest {
                client: self.id,
                seq,
                command,
            },
            arm_timer: (self.model == ClientModel::Nxb).then_some(generation),
        }
    }

    /// Fallback timer fired: suspect the unresponsive replica and re-send
    /// the same request to a different one.
    pub fn on_fallback(&mut self, generation: u64) -> ClientStep {
        if self.model != ClientModel::Nxb {
            return ClientStep::Idle;
        }
        let Some(open) = self.open.as_mut() else {
            return ClientStep::Idle;
        };
        if open.timer_generation != generation {
            return ClientStep::Idle;
        }
        let stale = open.target;
        self.suspected.insert(stale);
        let (seq, command) = (open.seq, open.command.clone());
        let next = self.pick_replica(Some(stale));
        let open = self.open.as_mut().unwrap();
        open.target = next;
        open.attempts += 1;
        open.timer_generation += 1_000_000;
        let generation = open.timer_generation;
        ClientStep::Send {
            to: vec![next],
            request: ClientRequest {
                client: self.id,
                seq,
                command,
            },
            arm_timer: Some(generation),
        }
    }

    pub fn on_response(&mut self, resp: &Response, from: ReplicaId, now_us: u64) -> ClientStep {
        let Some(open) = self.open.as_mut() else {
            return ClientStep::Idle;
        };
        if resp.seq != open.seq {
            return ClientStep::Idle;
        }
        match self.model {
            ClientModel::Nxb => {
                let (issued_us, attempts, seq) = (open.issued_us, open.attempts, open.seq);
                self.open = None;
                ClientStep::Completed {
                    seq,
                    issued_us,
                    attempts,
                }
            }
            ClientModel::Bft => {
                let need = quorum(self.n);
                let entry = open
                    .matching
                    .iter_mut()
                    .find(|(result, _)| *result == resp.result);
                let count = match entry {
                    Some((_, set)) => {
                        set.insert(from);
                        set.len()
                    }
                    None => {
                        let mut set = BTreeSet::new();
                        set.insert(from);
                        open.matching.push((resp.result.clone(), set));
                        1
                    }
                };
                if count >= need {
                    let (issued_us, attempts, seq) = (open.issued_us, open.attempts, open.seq);
                    let _ = now_us;
                    self.open = None;
                    ClientStep::Completed {
                        seq,
                        issued_us,
                        attempts,
                    }
                } else {
                    ClientStep::Idle
                }
            }
        }
    }
}
