//! Canonical binary wire format: length-prefixed, field-ordered,
//! little-endian. Vertex digests are computed over this encoding, so it
//! must stay byte-stable across versions that share a magic tag.

use std::sync::Arc;

use crate::crypto::{sha256, Digest, Signature};
use crate::types::*;

pub const WIRE_MAGIC: &[u8; 4] = b"NXW1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated message")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("length field out of bounds")]
    BadLength,
}

// ---------------------------------------------------------------------------
// Primitive writers / readers
// ---------------------------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, WireError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn signature(&mut self) -> Result<Signature, WireError> {
        Ok(Signature(self.take(64)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u32()? as usize;
        if len > self.buf.len() {
            return Err(WireError::BadLength);
        }
        Ok(self.take(len)?.to_vec())
    }

    fn count(&mut self) -> Result<usize, WireError> {
        let c = self.u32()? as usize;
        // Each element takes at least one byte; rejects absurd counts early.
        if c > self.buf.len() {
            return Err(WireError::BadLength);
        }
        Ok(c)
    }

    fn done(&self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::BadLength)
        }
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

// ---------------------------------------------------------------------------
// Component encodings
// ---------------------------------------------------------------------------

fn put_request(out: &mut Vec<u8>, r: &ClientRequest) {
    out.extend_from_slice(&r.client.to_le_bytes());
    out.extend_from_slice(&r.seq.to_le_bytes());
    put_bytes(out, &r.command);
}

fn read_request(rd: &mut Reader) -> Result<ClientRequest, WireError> {
    Ok(ClientRequest {
        client: rd.u64()?,
        seq: rd.u64()?,
        command: rd.bytes()?,
    })
}

fn put_ref(out: &mut Vec<u8>, r: &VertexRef) {
    out.extend_from_slice(&r.digest);
    out.extend_from_slice(&r.round.to_le_bytes());
    out.extend_from_slice(&r.source.to_le_bytes());
}

fn read_ref(rd: &mut Reader) -> Result<VertexRef, WireError> {
    Ok(VertexRef {
        digest: rd.digest()?,
        round: rd.u64()?,
        source: rd.u32()?,
    })
}

/// Encodes the digest-covered part of a vertex: (round, source, payload, edges).
fn put_vertex_content(out: &mut Vec<u8>, v: &Vertex) {
    out.extend_from_slice(&v.round.to_le_bytes());
    out.extend_from_slice(&v.source.to_le_bytes());
    out.extend_from_slice(&(v.payload.len() as u32).to_le_bytes());
    for r in &v.payload {
        put_request(out, r);
    }
    out.extend_from_slice(&(v.edges.len() as u32).to_le_bytes());
    for e in &v.edges {
        put_ref(out, e);
    }
}

pub fn vertex_content_digest(v: &Vertex) -> Digest {
    let mut buf = Vec::with_capacity(64 + v.payload.len() * 32 + v.edges.len() * 44);
    put_vertex_content(&mut buf, v);
    sha256(&[b"NXVTX1", &buf])
}

fn put_vertex(out: &mut Vec<u8>, v: &Vertex) {
    put_vertex_content(out, v);
    out.extend_from_slice(&v.counter_sig.counter.to_le_bytes());
    out.extend_from_slice(&v.counter_sig.signature.0);
}

fn read_vertex(rd: &mut Reader) -> Result<Vertex, WireError> {
    let round = rd.u64()?;
    let source = rd.u32()?;
    let n_payload = rd.count()?;
    let mut payload = Vec::with_capacity(n_payload);
    for _ in 0..n_payload {
        payload.push(read_request(rd)?);
    }
    let n_edges = rd.count()?;
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        edges.push(read_ref(rd)?);
    }
    let counter = rd.u64()?;
    let signature = rd.signature()?;
    Ok(Vertex {
        round,
        source,
        payload,
        edges,
        counter_sig: CounterSignature { counter, signature },
    })
}

fn put_cert(out: &mut Vec<u8>, c: &AttestationCertificate) {
    out.extend_from_slice(&c.replica_id.to_le_bytes());
    out.extend_from_slice(&c.public_enclave_key.sign.0);
    out.extend_from_slice(&c.public_enclave_key.encrypt.0);
    out.extend_from_slice(&c.code_measurement);
    out.extend_from_slice(&c.replica_signature.0);
}

fn read_cert(rd: &mut Reader) -> Result<AttestationCertificate, WireError> {
    Ok(AttestationCertificate {
        replica_id: rd.u32()?,
        public_enclave_key: EnclavePublicKey {
            sign: crate::crypto::PublicKey(rd.take(32)?.try_into().unwrap()),
            encrypt: crate::crypto::BoxPublicKey(rd.take(32)?.try_into().unwrap()),
        },
        code_measurement: rd.digest()?,
        replica_signature: rd.signature()?,
    })
}

// ---------------------------------------------------------------------------
// Message envelope
// ---------------------------------------------------------------------------

const TAG_VERTEX: u8 = 1;
const TAG_VERTEX_REQUEST: u8 = 2;
const TAG_VERTEX_REPLY: u8 = 3;
const TAG_REQUEST: u8 = 4;
const TAG_RESPONSE: u8 = 5;
const TAG_SETUP_CERT: u8 = 6;
const TAG_SETUP_ECHO: u8 = 7;
const TAG_SETUP_SHARE: u8 = 8;
const TAG_SETUP_READY: u8 = 9;
const TAG_RECOVERY_REQUEST: u8 = 10;
const TAG_RECOVERY_PROPOSAL: u8 = 11;
const TAG_RECOVERY_COMMIT: u8 = 12;

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(WIRE_MAGIC);
    match msg {
        Message::Vertex(v) => {
            out.push(TAG_VERTEX);
            put_vertex(&mut out, v);
        }
        Message::VertexRequest(r) => {
            out.push(TAG_VERTEX_REQUEST);
            put_ref(&mut out, r);
        }
        Message::VertexReply(v) => {
            out.push(TAG_VERTEX_REPLY);
            put_vertex(&mut out, v);
        }
        Message::Request(r) => {
            out.push(TAG_REQUEST);
            put_request(&mut out, r);
        }
        Message::Response(r) => {
            out.push(TAG_RESPONSE);
            out.extend_from_slice(&r.client.to_le_bytes());
            out.extend_from_slice(&r.seq.to_le_bytes());
            put_bytes(&mut out, &r.result);
        }
        Message::SetupCert(c) => {
            out.push(TAG_SETUP_CERT);
            put_cert(&mut out, c);
        }
        Message::SetupEcho(e) => {
            out.push(TAG_SETUP_ECHO);
            out.extend_from_slice(&e.origin.to_le_bytes());
            out.extend_from_slice(&e.echoer.to_le_bytes());
            put_cert(&mut out, &e.cert);
            out.extend_from_slice(&e.signature.0);
        }
        Message::SetupShare(s) => {
            out.push(TAG_SETUP_SHARE);
            out.extend_from_slice(&s.from.to_le_bytes());
            put_bytes(&mut out, &s.ciphertext);
        }
        Message::SetupReady(r) => {
            out.push(TAG_SETUP_READY);
            out.extend_from_slice(&r.to_le_bytes());
        }
        Message::RecoveryRequest(r) => {
            out.push(TAG_RECOVERY_REQUEST);
            out.extend_from_slice(&r.recoverer.to_le_bytes());
            put_cert(&mut out, &r.new_cert);
        }
        Message::RecoveryProposal(p) => {
            out.push(TAG_RECOVERY_PROPOSAL);
            out.extend_from_slice(&p.proposer.to_le_bytes());
            out.extend_from_slice(&p.recoverer.to_le_bytes());
            put_cert(&mut out, &p.new_cert);
            out.extend_from_slice(&(p.history.len() as u32).to_le_bytes());
            for v in &p.history {
                put_vertex(&mut out, v);
            }
            out.extend_from_slice(&p.signature.0);
        }
        Message::RecoveryCommit(c) => {
            out.push(TAG_RECOVERY_COMMIT);
            out.extend_from_slice(&c.committer.to_le_bytes());
            out.extend_from_slice(&c.recoverer.to_le_bytes());
            put_cert(&mut out, &c.new_cert);
            out.extend_from_slice(&c.chosen_history_digest);
            out.extend_from_slice(&c.signature.0);
        }
    }
    out
}

pub fn decode_message(buf: &[u8]) -> Result<Message, WireError> {
    let mut rd = Reader::new(buf);
    if rd.take(4)? != WIRE_MAGIC {
        return Err(WireError::BadMagic);
    }
    let tag = rd.u8()?;
    let msg = match tag {
        TAG_VERTEX => Message::Vertex(Arc::new(read_vertex(&mut rd)?)),
        TAG_VERTEX_REQUEST => Message::VertexRequest(read_ref(&mut rd)?),
        TAG_VERTEX_REPLY => Message::VertexReply(Arc::new(read_vertex(&mut rd)?)),
        TAG_REQUEST => Message::Request(read_request(&mut rd)?),
        TAG_RESPONSE => Message::Response(Response {
            client: rd.u64()?,
            seq: rd.u64()?,
            result: rd.bytes()?,
        }),
        TAG_SETUP_CERT => Message::SetupCert(read_cert(&mut rd)?),
        TAG_SETUP_ECHO => Message::SetupEcho(SetupEchoMsg {
            origin: rd.u32()?,
            echoer: rd.u32()?,
            cert: read_cert(&mut rd)?,
            signature: rd.signature()?,
        }),
        TAG_SETUP_SHARE => Message::SetupShare(SetupShareMsg {
            from: rd.u32()?,
            ciphertext: rd.bytes()?,
        }),
        TAG_SETUP_READY => Message::SetupReady(rd.u32()?),
        TAG_RECOVERY_REQUEST => Message::RecoveryRequest(RecoveryRequestMsg {
            recoverer: rd.u32()?,
            new_cert: read_cert(&mut rd)?,
        }),
        TAG_RECOVERY_PROPOSAL => {
            let proposer = rd.u32()?;
            let recoverer = rd.u32()?;
            let new_cert = read_cert(&mut rd)?;
            let count = rd.count()?;
            let mut history = Vec::with_capacity(count);
            for _ in 0..count {
                history.push(Arc::new(read_vertex(&mut rd)?));
            }
            Message::RecoveryProposal(RecoveryProposalMsg {
                proposer,
                recoverer,
                new_cert,
                history,
                signature: rd.signature()?,
            })
        }
        TAG_RECOVERY_COMMIT => Message::RecoveryCommit(RecoveryCommitMsg {
            committer: rd.u32()?,
            recoverer: rd.u32()?,
            new_cert: read_cert(&mut rd)?,
            chosen_history_digest: rd.digest()?,
            signature: rd.signature()?,
        }),
        other => return Err(WireError::UnknownTag(other)),
    };
    rd.done()?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Signature;

    fn sample_vertex() -> Vertex {
        Vertex {
            round: 3,
            source: 1,
            payload: vec![ClientRequest {
                client: 9,
                seq: 4,
                command: vec![1, 2, 3],
            }],
            edges: vec![VertexRef {
                digest: [7u8; 32],
                round: 2,
                source: 0,
            }],
            counter_sig: CounterSignature {
                counter: 2,
                signature: Signature([5u8; 64]),
            },
        }
    }

    #[test]
    fn vertex_round_trip() {
        let v = sample_vertex();
        let enc = encode_message(&Message::Vertex(Arc::new(v.clone())));
        match decode_message(&enc).unwrap() {
            Message::Vertex(d) => assert_eq!(*d, v),
            other => panic!("wrong variant {other:?}"),
        }
    }

    #[test]
    fn digest_ignores_counter_signature() {
        let v = sample_vertex();
        let mut w = v.clone();
        w.counter_sig.counter = 99;
        assert_eq!(v.digest(), w.digest());
        let mut u = v.clone();
        u.round = 4;
        assert_ne!(v.digest(), u.digest());
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(decode_message(b"xx").unwrap_err(), WireError::Truncated);
        assert_eq!(
            decode_message(b"BAD!aaaaaaaaaaaa").unwrap_err(),
            WireError::BadMagic
        );
        let mut enc = encode_message(&Message::SetupReady(2));
        enc.truncate(enc.len() - 1);
        assert_eq!(decode_message(&enc).unwrap_err(), WireError::Truncated);
    }
}
