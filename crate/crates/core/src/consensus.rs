//! Wave bookkeeping, coin-based root selection, direct and retrospective
//! commits, and the deterministic ordering traversal emitting a total order.
//!
//! Waves are processed strictly in ascending order through a cursor. A wave
//! is ready once the own fourth-round vertex is admitted, a quorum of
//! fourth-round vertices is present, and a coin value is obtainable — either
//! freshly tossed or replayed from a recovery. Commit decisions then depend
//! only on the immutable graph below the wave, which is what makes them
//! consistent across replicas regardless of schedule.

use std::collections::BTreeMap;

use crate::dag::DagStore;
use crate::types::{quorum, ReplicaId, Round, VertexArc, VertexRef, Wave};

/// Wave of a round: ceil(round / 4).
pub fn wave_of(round: Round) -> Wave {
    assert!(round >= 1);
    round.div_ceil(4)
}

pub fn wave_first_round(wave: Wave) -> Round {
    4 * wave - 3
}

pub fn wave_last_round(wave: Wave) -> Round {
    4 * wave
}

/// One committed wave's newly ordered vertices, in delivery order.
#[derive(Debug, Clone)]
pub struct DeliveredBatch {
    pub wave: Wave,
    pub root: VertexRef,
    pub vertices: Vec<VertexArc>,
}

#[derive(Debug, Default)]
pub struct PumpOutput {
    pub batches: Vec<DeliveredBatch>,
    /// Direct-commit decision events this pump (for decision-time metrics).
    pub decisions: u32,
}

/// Supplies the coin value for a wave. Returns `None` when the value is not
/// yet obtainable (e.g. not enough currently-verifiable evidence); the wave
/// is retried on a later pump.
pub trait CoinSource {
    fn coin_for(&mut self, wave: Wave, dag: &DagStore) -> Option<u32>;
}

impl<F: FnMut(Wave, &DagStore) -> Option<u32>> CoinSource for F {
    fn coin_for(&mut self, wave: Wave, dag: &DagStore) -> Option<u32> {
        self(wave, dag)
    }
}

#[derive(Debug)]
pub struct WaveState {
    n: usize,
    own_id: ReplicaId,
    /// Tossed or replayed coin values, one per processed wave.
    decided_coin: BTreeMap<Wave, u32>,
    committed_root: BTreeMap<Wave, VertexRef>,
    last_direct_wave: Wave,
    /// Next wave the cursor will examine.
    next_wave: Wave,
    delivery_log: Vec<VertexRef>,
}

impl WaveState {
    pub fn new(own_id: ReplicaId, n: usize) -> Self {
        WaveState {
            n,
            own_id,
            decided_coin: BTreeMap::new(),
            committed_root: BTreeMap::new(),
            last_direct_wave: 0,
            next_wave: 1,
            delivery_log: Vec::new(),
        }
    }

    pub fn delivery_log(&self) -> &[VertexRef] {
        &self.delivery_log
    }

    pub fn decided_coins(&self) -> &BTreeMap<Wave, u32> {
        &self.decided_coin
    }

    pub fn committed_roots(&self) -> &BTreeMap<Wave, VertexRef> {
        &self.committed_root
    }

    pub fn next_wave(&self) -> Wave {
        self.next_wave
    }

    /// Installs coin values a recovering enclave replayed during its
    /// fast-forward, letting the replica re-derive historical commits.
    pub fn seed_replayed_coins(&mut self, values: &[u32]) {
        for (i, v) in values.iter().enumerate() {
            self.decided_coin.insert(i as Wave + 1, *v);
        }
    }

    /// Processes every wave that has become decidable, in order. Returns the
    /// delivered batches; each direct commit is one decision event.
    pub fn pump<C: CoinSource>(&mut self, dag: &mut DagStore, coin: &mut C) -> PumpOutput {
        let mut out = PumpOutput::default();
        loop {
            let w = self.next_wave;
            let last_round = wave_last_round(w);
            if dag.vertex_at(last_round, self.own_id).is_none() {
                break;
            }
            if dag.round_source_count(last_round) < quorum(self.n) {
                break;
            }
            let coin_value = match self.decided_coin.get(&w) {
                Some(v) => *v,
                None => match coin.coin_for(w, dag) {
                    Some(v) => {
                        self.decided_coin.insert(w, v);
                        v
                    }
                    None => break,
                },
            };
            self.process_wave(w, coin_value, dag, &mut out);
            self.next_wave += 1;
        }
        out
    }

    fn process_wave(&mut self, w: Wave, coin_value: u32, dag: &mut DagStore, out: &mut PumpOutput) {
        let root_source = coin_value as ReplicaId;
        let Some(root) = dag.vertex_at(wave_first_round(w), root_source).map(|v| v.reference())
        else {
            // Root not present: no commit now; a future direct commit may
            // still reach it retrospectively.
            return;
        };
        let supporters = dag.supporters_of(&root, wave_last_round(w));
        if supporters.len() < quorum(self.n) {
            return;
        }

        // Direct commit. Walk intermediate waves newest to oldest,
        // retrospectively committing every root the chain head reaches.
        let mut chain = vec![(w, root)];
        let mut chain_head = root;
        let mut u = w;
        while u > self.last_direct_wave + 1 {
            u -= 1;
            let coin_u = *self.decided_coin.get(&u).expect("cursor processed wave");
            let Some(candidate) = dag
                .vertex_at(wave_first_round(u), coin_u as ReplicaId)
                .map(|v| v.reference())
            else {
                continue;
            };
            if self.committed_root.contains_key(&u) {
                continue;
            }
            if dag.exists_path(&chain_head, &candidate) {
                chain.push((u, candidate));
                chain_head = candidate;
            }
        }

        // Deliver oldest first.
        for (wave, wave_root) in chain.into_iter().rev() {
            self.committed_root.insert(wave, wave_root);
            let vertices = self.order_from_root(dag, &wave_root);
            out.batches.push(DeliveredBatch {
                wave,
                root: wave_root,
                vertices,
            });
        }
        self.last_direct_wave = w;
        out.decisions += 1;
    }

    /// Orders every not-yet-ordered vertex in the root's causal history by
    /// (round, source), appends them to the delivery log and marks them.
    fn order_from_root(&mut self, dag: &mut DagStore, root: &VertexRef) -> Vec<VertexArc> {
        let mut fresh: Vec<VertexRef> = dag
            .causal_history(root)
            .into_iter()
            .filter(|r| !dag.is_ordered(r))
            .collect();
        fresh.sort_by_key(|r| (r.round, r.source));
        let mut batch = Vec::with_capacity(fresh.len());
        for r in fresh {
            dag.mark_ordered(r);
            self.delivery_log.push(r);
            batch.push(dag.get(&r).expect("history vertex stored").clone());
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::bare_vertex;

    #[test]
    fn wave_of_formula() {
        assert_eq!(wave_of(1), 1);
        assert_eq!(wave_of(4), 1);
        assert_eq!(wave_of(5), 2);
        assert_eq!(wave_of(400), 100);
        assert_eq!(wave_first_round(2), 5);
        assert_eq!(wave_last_round(2), 8);
    }

    /// Builds a fully connected DAG for `rounds` rounds and n sources:
    /// every vertex links to all previous-round vertices.
    fn full_dag(n: u32, rounds: Round) -> DagStore {
        let mut dag = DagStore::new();
        let mut prev: Vec<VertexRef> = Vec::new();
        for round in 1..=rounds {
            let mut cur = Vec::new();
            for source in 0..n {
                let v = bare_vertex(round, source, prev.clone());
                cur.push(v.reference());
                dag.add(v).unwrap();
            }
            prev = cur;
        }
        dag
    }

    #[test]
    fn direct_commit_on_full_wave() {
        let mut dag = full_dag(3, 4);
        let mut ws = WaveState::new(0, 3);
        let mut coin = |_w: Wave, _d: &DagStore| Some(1u32);
        let out = ws.pump(&mut dag, &mut coin);
        assert_eq!(out.decisions, 1);
        assert_eq!(out.batches.len(), 1);
        let batch = &out.batches[0];
        assert_eq!(batch.wave, 1);
        assert_eq!(batch.root.source, 1);
        assert_eq!(batch.root.round, 1);
        // Root history in a fully connected graph: all of round 1 is below
        // the root? No — the root IS a round-1 vertex; only itself.
        assert_eq!(batch.vertices.len(), 1);
        assert_eq!(ws.delivery_log().len(), 1);
    }

    #[test]
    fn ordering_is_round_then_source() {
        let mut dag = full_dag(3, 8);
        let mut ws = WaveState::new(0, 3);
        let mut coin = |_w: Wave, _d: &DagStore| Some(0u32);
        let out = ws.pump(&mut dag, &mut coin);
        assert_eq!(out.decisions, 2);
        // Wave 2 root is at round 5; its history covers rounds 1..=5 fully
        // minus what wave 1 already ordered (the single round-1 root).
        let wave2 = &out.batches[1];
        assert_eq!(wave2.wave, 2);
        let mut expected_rounds: Vec<Round> = Vec::new();
        for round in 1..=4 {
            for _ in 0..3 {
                expected_rounds.push(round);
            }
        }
        expected_rounds.push(5); // root itself
        expected_rounds.remove(0); // round-1 root ordered by wave 1
        let got: Vec<Round> = wave2.vertices.iter().map(|v| v.round).collect();
        assert_eq!(got, expected_rounds);
        let mut sorted = wave2.vertices.clone();
        sorted.sort_by_key(|v| (v.round, v.source));
        assert_eq!(
            wave2.vertices.iter().map(|v| v.reference()).collect::<Vec<_>>(),
            sorted.iter().map(|v| v.reference()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn second_commit_emits_only_difference() {
        let mut dag = full_dag(3, 8);
        let mut ws = WaveState::new(0, 3);
        let mut coin = |_w: Wave, _d: &DagStore| Some(2u32);
        let out = ws.pump(&mut dag, &mut coin);
        let total: usize = out.batches.iter().map(|b| b.vertices.len()).sum();
        let mut seen = std::collections::BTreeSet::new();
        for b in &out.batches {
            for v in &b.vertices {
                assert!(seen.insert(v.reference()), "vertex delivered twice");
            }
        }
        assert_eq!(total, seen.len());
    }

    #[test]
    fn missing_root_then_retrospective_commit() {
        // Build rounds 1..8 fully connected, but withhold the wave-1 root
        // (round 1, source 1) from this replica's DAG... impossible since
        // edges must resolve. Instead: commit rule fails by supporters.
        // Simulate NoCommit by choosing a coin whose root has too few
        // supporters: craft a wave where only the root's own chain reaches it.
        let n = 5u32;
        let q = quorum(n as usize);
        let mut dag = DagStore::new();
        // Round 1: all five vertices.
        let r1: Vec<VertexRef> = (0..n)
            .map(|s| {
                let v = bare_vertex(1, s, vec![]);
                let r = v.reference();
                dag.add(v).unwrap();
                r
            })
            .collect();
        // Rounds 2..4: every vertex links to a quorum that EXCLUDES source 4,
        // except source 4's own vertices which link to themselves plus others.
        let mut prev = r1.clone();
        for round in 2..=4 {
            let mut cur = Vec::new();
            for s in 0..n {
                let mut edges: Vec<VertexRef> = prev
                    .iter()
                    .filter(|e| e.source != 4)
                    .take(q)
                    .copied()
                    .collect();
                if s == 4 {
                    // Keep own-chain rule: replace one edge with own vertex.
                    edges[0] = *prev.iter().find(|e| e.source == 4).unwrap();
                }
                let v = bare_vertex(round, s, edges);
                cur.push(v.reference());
                dag.add(v).unwrap();
            }
            prev = cur;
        }
        let mut ws = WaveState::new(0, n as usize);
        // Coin selects source 4 whose root only its own chain supports.
        let mut coin = |w: Wave, _d: &DagStore| Some(if w == 1 { 4u32 } else { 0u32 });
        let out = ws.pump(&mut dag, &mut coin);
        assert_eq!(out.decisions, 0, "supporters below quorum must not commit");
        assert!(ws.committed_roots().is_empty());
        assert_eq!(ws.next_wave(), 2);

        // Extend with a fully connected wave 2; its direct commit walks back
        // and retrospectively commits wave 1 (single path suffices).
        for round in 5..=8 {
            let mut cur = Vec::new();
            for s in 0..n {
                let v = bare_vertex(round, s, prev.clone());
                cur.push(v.reference());
                dag.add(v).unwrap();
            }
            prev = cur;
        }
        let out2 = ws.pump(&mut dag, &mut coin);
        assert_eq!(out2.decisions, 1);
        assert_eq!(out2.batches.len(), 2, "retro wave 1 then wave 2");
        assert_eq!(out2.batches[0].wave, 1);
        assert_eq!(out2.batches[0].root.source, 4);
        assert_eq!(out2.batches[1].wave, 2);
    }

    #[test]
    fn exact_quorum_minus_one_supporters_no_commit() {
        // n=5: root reached by exactly two round-4 vertices -> NoCommit.
        let n = 5u32;
        let mut dag = DagStore::new();
        let r1: Vec<VertexRef> = (0..n)
            .map(|s| {
                let v = bare_vertex(1, s, vec![]);
                let r = v.reference();
                dag.add(v).unwrap();
                r
            })
            .collect();
        // Root is source 0's round-1 vertex. Sources 0,1 build chains through
        // it; sources 2,3,4 avoid it entirely.
        let with_root: Vec<VertexRef> = r1.clone();
        let without_root: Vec<VertexRef> = r1.iter().filter(|e| e.source != 0).copied().collect();
        let mut prev_with = with_root;
        let mut prev_without = without_root;
        for round in 2..=4 {
            let mut nw = Vec::new();
            let mut nwo = Vec::new();
            for s in 0..n {
                let (edges, bucket) = if s <= 1 {
                    (prev_with.iter().take(3).copied().collect::<Vec<_>>(), true)
                } else {
                    (prev_without.iter().take(3).copied().collect::<Vec<_>>(), false)
                };
                let v = bare_vertex(round, s, edges);
                let r = v.reference();
                dag.add(v).unwrap();
                if bucket {
                    nw.push(r);
                } else {
                    nwo.push(r);
                }
            }
            // "with" chains may also be referenced by future "with" vertices.
            prev_with = nw;
            prev_without = nwo;
        }
        let supporters = dag.supporters_of(&r1[0], 4);
        assert_eq!(supporters.len(), 2);
        let mut ws = WaveState::new(0, n as usize);
        let mut coin = |_w: Wave, _d: &DagStore| Some(0u32);
        let out = ws.pump(&mut dag, &mut coin);
        assert_eq!(out.decisions, 0);
    }
}
