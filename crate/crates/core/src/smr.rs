//! Client request intake, deduplication by last-executed sequence number,
//! application execution hook, and response emission.
//!
//! Requests reach the state machine in delivery-log order; the combination
//! of client id and sequence number is executed exactly once per replica no
//! matter how many vertices carry it.

use std::collections::BTreeMap;

use crate::crypto::{sha256, Digest};
use crate::types::{ClientId, ClientRequest, Response, VertexArc};

/// Deterministic application hook: same command stream, same state.
pub trait Application {
    fn execute(&mut self, command: &[u8]) -> Result<Vec<u8>, String>;
    /// Digest of the full application state, for cross-replica comparison.
    fn state_digest(&self) -> Digest;
}

/// Default no-op application: echoes the command and folds it into a
/// running state digest.
#[derive(Debug, Clone)]
pub struct EchoApp {
    state: Digest,
    executed: u64,
}

impl Default for EchoApp {
    fn default() -> Self {
        EchoApp {
            state: sha256(&[b"NXAPP0"]),
            executed: 0,
        }
    }
}

impl Application for EchoApp {
    fn execute(&mut self, command: &[u8]) -> Result<Vec<u8>, String> {
        self.state = sha256(&[b"NXAPP1", &self.state, command]);
        self.executed += 1;
        Ok(command.to_vec())
    }

    fn state_digest(&self) -> Digest {
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Ack,
    /// Stale duplicate: sequence number at or below the last executed one.
    Rejected,
}

/// Response routing policy. Under the relaxed client model a single answer
/// completes a request, and the origin replica may have crashed, so the
/// default is to answer from every replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RespondPolicy {
    #[default]
    All,
    Origin,
}

#[derive(Debug)]
pub struct SmrState {
    /// Highest executed sequence number per client.
    last_executed: BTreeMap<ClientId, u64>,
    /// Requests this replica received directly (for origin-only responses).
    origin_of: BTreeMap<(ClientId, u64), ()>,
    policy: RespondPolicy,
    executions: u64,
    /// Executed (client, seq) pairs in execution order, for the auditors.
    executed_log: Vec<(ClientId, u64)>,
}

impl SmrState {
    pub fn new(policy: RespondPolicy) -> Self {
        SmrState {
            last_executed: BTreeMap::new(),
            origin_of: BTreeMap::new(),
            policy,
            executions: 0,
            executed_log: Vec::new(),
        }
    }

    pub fn executed_log(&self) -> &[(ClientId, u64)] {
        &self.executed_log
    }

    pub fn executions(&self) -> u64 {
        self.executions
    }

    pub fn last_executed(&self, client: ClientId) -> Option<u64> {
        self.last_executed.get(&client).copied()
    }

    /// Digest of the deduplication table, for cross-replica comparison.
    pub fn table_digest(&self) -> Digest {
        let mut buf = Vec::with_capacity(self.last_executed.len() * 16);
        for (c, s) in &self.last_executed {
            buf.extend_from_slice(&c.to_le_bytes());
            buf.extend_from_slice(&s.to_le_bytes());
        }
        sha256(&[b"NXTBL1", &buf])
    }

    /// Intake check for a request received from a client. The broadcast
    /// layer buffers accepted requests; stale duplicates are short-circuited.
    pub fn submit(&mut self, req: &ClientRequest) -> SubmitOutcome {
        if let Some(last) = self.last_executed.get(&req.client) {
            if req.seq <= *last {
                return SubmitOutcome::Rejected;
            }
        }
        self.origin_of.insert((req.client, req.seq), ());
        SubmitOutcome::Ack
    }

    /// Executes a delivered batch in payload order, deduplicating by
    /// sequence number. Returns the responses this replica should send.
    pub fn on_delivery<A: Application>(
        &mut self,
        batch: &[VertexArc],
        app: &mut A,
    ) -> Vec<Response> {
        let mut responses = Vec::new();
        for vertex in batch {
            for req in &vertex.payload {
                let last = self.last_executed.get(&req.client).copied();
                if last.is_some_and(|l| req.seq <= l) {
                    continue;
                }
                let result = match app.execute(&req.command) {
                    Ok(bytes) => bytes,
                    Err(e) => {
                        let mut r = b"ERR:".to_vec();
                        r.extend_from_slice(e.as_bytes());
                        r
                    }
                };
                self.last_executed.insert(req.client, req.seq);
                self.executions += 1;
                self.executed_log.push((req.client, req.seq));
                let respond = match self.policy {
                    RespondPolicy::All => true,
                    RespondPolicy::Origin => self.origin_of.contains_key(&(req.client, req.seq)),
                };
                if respond {
                    responses.push(Response {
                        client: req.client,
                        seq: req.seq,
                        result,
                    });
                }
            }
        }
        responses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::vertex_with_payload;

    fn req(client: ClientId, seq: u64, cmd: &[u8]) -> ClientRequest {
        ClientRequest {
            client,
            seq,
            command: cmd.to_vec(),
        }
    }

    #[test]
    fn duplicate_in_two_vertices_executes_once() {
        let mut smr = SmrState::new(RespondPolicy::All);
        let mut app = EchoApp::default();
        let v1 = vertex_with_payload(1, 0, vec![req(7, 1, b"a")]);
        let v2 = vertex_with_payload(1, 1, vec![req(7, 1, b"a")]);
        let responses = smr.on_delivery(&[v1, v2], &mut app);
        assert_eq!(responses.len(), 1);
        assert_eq!(smr.executions(), 1);
        assert_eq!(smr.last_executed(7), Some(1));
    }

    #[test]
    fn stale_sequence_skipped_silently() {
        let mut smr = SmrState::new(RespondPolicy::All);
        let mut app = EchoApp::default();
        let v1 = vertex_with_payload(1, 0, vec![req(3, 5, b"x")]);
        smr.on_delivery(&[v1], &mut app);
        let v2 = vertex_with_payload(2, 0, vec![req(3, 5, b"x"), req(3, 4, b"y")]);
        let responses = smr.on_delivery(&[v2], &mut app);
        assert!(responses.is_empty());
        assert_eq!(smr.executions(), 1);
    }

    #[test]
    fn equivocating_client_first_in_order_wins() {
        let mut a = SmrState::new(RespondPolicy::All);
        let mut b = SmrState::new(RespondPolicy::All);
        let mut app_a = EchoApp::default();
        let mut app_b = EchoApp::default();
        // Same sequence number, two different commands, same total order at
        // both replicas: both execute the first and skip the second.
        let v1 = vertex_with_payload(1, 0, vec![req(9, 7, b"cmd-one")]);
        let v2 = vertex_with_payload(1, 1, vec![req(9, 7, b"cmd-two")]);
        let ra = a.on_delivery(&[v1.clone(), v2.clone()], &mut app_a);
        let rb = b.on_delivery(&[v1, v2], &mut app_b);
        assert_eq!(ra, rb);
        assert_eq!(ra.len(), 1);
        assert_eq!(ra[0].result, b"cmd-one");
        assert_eq!(app_a.state_digest(), app_b.state_digest());
    }

    #[test]
    fn submit_rejects_only_stale() {
        let mut smr = SmrState::new(RespondPolicy::All);
        let mut app = EchoApp::default();
        assert_eq!(smr.submit(&req(1, 1, b"a")), SubmitOutcome::Ack);
        let v = vertex_with_payload(1, 0, vec![req(1, 1, b"a")]);
        smr.on_delivery(&[v], &mut app);
        assert_eq!(smr.submit(&req(1, 1, b"a")), SubmitOutcome::Rejected);
        assert_eq!(smr.submit(&req(1, 2, b"b")), SubmitOutcome::Ack);
    }

    #[test]
    fn origin_policy_responds_only_for_own_intake() {
        let mut smr = SmrState::new(RespondPolicy::Origin);
        let mut app = EchoApp::default();
        smr.submit(&req(1, 1, b"mine"));
        let v = vertex_with_payload(1, 0, vec![req(1, 1, b"mine"), req(2, 1, b"other")]);
        let responses = smr.on_delivery(&[v], &mut app);
        assert_eq!(responses.len(), 1);
        assert_eq!(responses[0].client, 1);
    }
}
