//! Optional binary event log. One record per protocol-relevant event; the
//! `audit` CLI subcommand replays a log and re-checks the cross-replica
//! invariants without access to the live simulation.

use crate::crypto::Digest;
use crate::types::{ClientId, MessageKind, NodeId, ReplicaId, Round};

pub const TRACE_MAGIC: &[u8; 6] = b"NXTRC1";

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Send {
        t: u64,
        from: NodeId,
        to: NodeId,
        kind: MessageKind,
        round: Round,
    },
    Deliver {
        t: u64,
        from: NodeId,
        to: NodeId,
        kind: MessageKind,
    },
    Decision {
        t: u64,
        replica: ReplicaId,
    },
    Delivered {
        t: u64,
        replica: ReplicaId,
        position: u64,
        digest: Digest,
        round: Round,
        source: ReplicaId,
    },
    Executed {
        t: u64,
        replica: ReplicaId,
        client: ClientId,
        seq: u64,
    },
    Crash {
        t: u64,
        replica: ReplicaId,
    },
    RecoverStart {
        t: u64,
        replica: ReplicaId,
    },
    SetupReady {
        t: u64,
        replica: ReplicaId,
    },
    SetupAbort {
        t: u64,
        replica: ReplicaId,
    },
    RecoveryComplete {
        t: u64,
        observer: ReplicaId,
        recoverer: ReplicaId,
        digest: Digest,
    },
}

fn put_node(out: &mut Vec<u8>, node: NodeId) {
    match node {
        NodeId::Replica(r) => {
            out.push(0);
            out.extend_from_slice(&r.to_le_bytes());
        }
        NodeId::Client(c) => {
            out.push(1);
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
}

fn kind_tag(kind: MessageKind) -> u8 {
    match kind {
        MessageKind::Vertex => 0,
        MessageKind::VertexRequest => 1,
        MessageKind::VertexReply => 2,
        MessageKind::Request => 3,
        MessageKind::Response => 4,
        MessageKind::Setup => 5,
        MessageKind::Recovery => 6,
    }
}

fn kind_from(tag: u8) -> Option<MessageKind> {
    Some(match tag {
        0 => MessageKind::Vertex,
        1 => MessageKind::VertexRequest,
        2 => MessageKind::VertexReply,
        3 => MessageKind::Request,
        4 => MessageKind::Response,
        5 => MessageKind::Setup,
        6 => MessageKind::Recovery,
        _ => return None,
    })
}

#[derive(Debug, Default)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn encode(&self, n: usize, seed: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.records.len() * 32);
        out.extend_from_slice(TRACE_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&seed.to_le_bytes());
        for r in &self.records {
            match r {
                TraceRecord::Send { t, from, to, kind, round } => {
                    out.push(1);
                    out.extend_from_slice(&t.to_le_bytes());
                    put_node(&mut out, *from);
                    put_node(&mut out, *to);
                    out.push(kind_tag(*kind));
                    out.extend_from_slice(&round.to_le_bytes());
                }
                TraceRecord::Deliver { t, from, to, kind } => {
                    out.push(2);
                    out.extend_from_slice(&t.to_le_bytes());
                    put_node(&mut out, *from);
                    put_node(&mut out, *to);
                    out.push(kind_tag(*kind));
                }
                TraceRecord::Decision { t, replica } => {
                    out.push(3);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                }
                TraceRecord::Delivered { t, replica, position, digest, round, source } => {
                    out.push(4);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                    out.extend_from_slice(&position.to_le_bytes());
                    out.extend_from_slice(digest);
                    out.extend_from_slice(&round.to_le_bytes());
                    out.extend_from_slice(&source.to_le_bytes());
                }
                TraceRecord::Executed { t, replica, client, seq } => {
                    out.push(5);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                    out.extend_from_slice(&client.to_le_bytes());
                    out.extend_from_slice(&seq.to_le_bytes());
                }
                TraceRecord::Crash { t, replica } => {
                    out.push(6);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                }
                TraceRecord::RecoverStart { t, replica } => {
                    out.push(7);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                }
                TraceRecord::SetupReady { t, replica } => {
                    out.push(8);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                }
                TraceRecord::SetupAbort { t, replica } => {
                    out.push(9);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&replica.to_le_bytes());
                }
                TraceRecord::RecoveryComplete { t, observer, recoverer, digest } => {
                    out.push(10);
                    out.extend_from_slice(&t.to_le_bytes());
                    out.extend_from_slice(&observer.to_le_bytes());
                    out.extend_from_slice(&recoverer.to_le_bytes());
                    out.extend_from_slice(digest);
                }
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<(usize, u64, TraceLog), String> {
        let mut rd = TraceReader { buf, pos: 0 };
        if rd.take(6)? != TRACE_MAGIC {
            return Err("bad trace magic".into());
        }
        let n = rd.u32()? as usize;
        let seed = rd.u64()?;
        let mut log = TraceLog::default();
        while rd.pos < buf.len() {
            let tag = rd.u8()?;
            let rec = match tag {
                1 => TraceRecord::Send {
                    t: rd.u64()?,
                    from: rd.node()?,
                    to: rd.node()?,
                    kind: kind_from(rd.u8()?).ok_or("bad kind")?,
                    round: rd.u64()?,
                },
                2 => TraceRecord::Deliver {
                    t: rd.u64()?,
                    from: rd.node()?,
                    to: rd.node()?,
                    kind: kind_from(rd.u8()?).ok_or("bad kind")?,
                },
                3 => TraceRecord::Decision {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                },
                4 => TraceRecord::Delivered {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                    position: rd.u64()?,
                    digest: rd.digest()?,
                    round: rd.u64()?,
                    source: rd.u32()?,
                },
                5 => TraceRecord::Executed {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                    client: rd.u64()?,
                    seq: rd.u64()?,
                },
                6 => TraceRecord::Crash {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                },
                7 => TraceRecord::RecoverStart {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                },
                8 => TraceRecord::SetupReady {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                },
                9 => TraceRecord::SetupAbort {
                    t: rd.u64()?,
                    replica: rd.u32()?,
                },
                10 => TraceRecord::RecoveryComplete {
                    t: rd.u64()?,
                    observer: rd.u32()?,
                    recoverer: rd.u32()?,
                    digest: rd.digest()?,
                },
                other => return Err(format!("unknown trace tag {other}")),
            };
            log.push(rec);
        }
        Ok((n, seed, log))
    }
}

struct TraceReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> TraceReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err("truncated trace".into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn digest(&mut self) -> Result<Digest, String> {
        Ok(self.take(32)?.try_into().unwrap())
    }
    fn node(&mut self) -> Result<NodeId, String> {
        let tag = self.u8()?;
        let id = self.u32()?;
        match tag {
            0 => Ok(NodeId::Replica(id)),
            1 => Ok(NodeId::Client(id)),
            _ => Err("bad node tag".into()),
        }
    }
}
