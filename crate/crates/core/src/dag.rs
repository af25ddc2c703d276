//! Round-indexed storage of admitted vertices with the reachability queries
//! used by the commit rules and the ordering traversal.
//!
//! Invariants maintained here: at most one vertex per (round, source), and
//! every edge of every stored vertex resolves within the store — ancestry
//! closure is a structural guarantee, not a runtime hope.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::types::{ReplicaId, Round, VertexArc, VertexRef};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DagError {
    #[error("slot (round {round}, replica {replica}) already occupied")]
    DuplicateSlot { round: Round, replica: ReplicaId },
    #[error("edge {0:?} does not resolve")]
    DanglingEdge(VertexRef),
}

/// Per-replica DAG of admitted vertices.
#[derive(Debug, Default)]
pub struct DagStore {
    by_round: BTreeMap<Round, BTreeMap<ReplicaId, VertexArc>>,
    by_ref: HashMap<VertexRef, VertexArc>,
    /// Vertices already emitted by the ordering traversal.
    ordered_mark: BTreeSet<VertexRef>,
}

impl DagStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a vertex whose full ancestry is already present.
    pub fn add(&mut self, v: VertexArc) -> Result<(), DagError> {
        for e in &v.edges {
            if !self.by_ref.contains_key(e) {
                return Err(DagError::DanglingEdge(*e));
            }
        }
        let slot = self.by_round.entry(v.round).or_default();
        if slot.contains_key(&v.source) {
            return Err(DagError::DuplicateSlot {
                round: v.round,
                replica: v.source,
            });
        }
        let r = v.reference();
        slot.insert(v.source, v.clone());
        self.by_ref.insert(r, v);
        Ok(())
    }

    pub fn contains(&self, r: &VertexRef) -> bool {
        self.by_ref.contains_key(r)
    }

    pub fn get(&self, r: &VertexRef) -> Option<&VertexArc> {
        self.by_ref.get(r)
    }

    pub fn vertex_at(&self, round: Round, source: ReplicaId) -> Option<&VertexArc> {
        self.by_round.get(&round).and_then(|m| m.get(&source))
    }

    /// All vertices stored for a round, keyed by source.
    pub fn round_vertices(&self, round: Round) -> impl Iterator<Item = &VertexArc> {
        self.by_round.get(&round).into_iter().flat_map(|m| m.values())
    }

    pub fn round_source_count(&self, round: Round) -> usize {
        self.by_round.get(&round).map_or(0, |m| m.len())
    }

    pub fn highest_round(&self) -> Option<Round> {
        self.by_round.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.by_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ref.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &VertexArc> {
        self.by_round.values().flat_map(|m| m.values())
    }

    // -- ordering marks -------------------------------------------------------

    pub fn is_ordered(&self, r: &VertexRef) -> bool {
        self.ordered_mark.contains(r)
    }

    pub fn mark_ordered(&mut self, r: VertexRef) {
        self.ordered_mark.insert(r);
    }

    // -- reachability ---------------------------------------------------------

    /// True iff a directed edge path leads from `from` down to `to`
    /// (inclusive: a vertex has a path to itself).
    pub fn exists_path(&self, from: &VertexRef, to: &VertexRef) -> bool {
        if from == to {
            return true;
        }
        if from.round <= to.round {
            return false;
        }
        let mut queue = VecDeque::from([*from]);
        let mut seen = BTreeSet::new();
        while let Some(cur) = queue.pop_front() {
            let Some(v) = self.by_ref.get(&cur) else { continue };
            for e in &v.edges {
                if e == to {
                    return true;
                }
                if e.round > to.round && seen.insert(*e) {
                    queue.push_back(*e);
                }
            }
        }
        false
    }

    /// Sources of stored `round` vertices that have a path to `root`.
    pub fn supporters_of(&self, root: &VertexRef, round: Round) -> BTreeSet<ReplicaId> {
        let mut out = BTreeSet::new();
        for v in self.round_vertices(round) {
            let r = v.reference();
            if self.exists_path(&r, root) {
                out.insert(v.source);
            }
        }
        out
    }

    /// `root` plus everything reachable from it via edges.
    pub fn causal_history(&self, root: &VertexRef) -> BTreeSet<VertexRef> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([*root]);
        out.insert(*root);
        while let Some(cur) = queue.pop_front() {
            let Some(v) = self.by_ref.get(&cur) else { continue };
            for e in &v.edges {
                if out.insert(*e) {
                    queue.push_back(*e);
                }
            }
        }
        out
    }

    /// Ancestry-closure scan: every edge of every stored vertex resolves.
    /// `add` enforces this; the scan backs the auditors.
    pub fn check_closure(&self) -> Result<(), DagError> {
        for v in self.by_ref.values() {
            for e in &v.edges {
                if !self.by_ref.contains_key(e) {
                    return Err(DagError::DanglingEdge(*e));
                }
            }
        }
        Ok(())
    }

    /// DOT-format dump for trace inspection.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("digraph dag {\n  rankdir=RL;\n");
        for v in self.iter() {
            let r = v.reference();
            let _ = writeln!(
                out,
                "  \"r{}s{}\" [label=\"r{} s{}\\n{}\"];",
                v.round,
                v.source,
                v.round,
                v.source,
                hex::encode(&r.digest[..4])
            );
            for e in &v.edges {
                let _ = writeln!(
                    out,
                    "  \"r{}s{}\" -> \"r{}s{}\";",
                    v.round, v.source, e.round, e.source
                );
            }
        }
        out.push_str("}\n");
        out
    }
}


#[cfg(test)]
mod figure_tests {
    use super::*;
    use crate::testutil::bare_vertex;

    /// The 15-vertex, n=5, three-round sample graph whose common core is
    /// only two vertices. Ids: 0-4 round 1, 5-9 round 2, 10-14 round 3;
    /// source = id mod 5.
    pub(crate) fn three_round_graph() -> (DagStore, Vec<VertexRef>) {
        let edges_of: [(u32, [u32; 3]); 10] = [
            (5, [2, 1, 0]),
            (6, [4, 1, 0]),
            (7, [2, 1, 0]),
            (8, [3, 1, 0]),
            (9, [4, 3, 0]),
            (10, [7, 6, 5]),
            (11, [7, 6, 5]),
            (12, [7, 6, 5]),
            (13, [8, 7, 5]),
            (14, [9, 8, 6]),
        ];
        let mut dag = DagStore::new();
        let mut refs: Vec<VertexRef> = Vec::new();
        for id in 0..5u32 {
            let v = bare_vertex(1, id, vec![]);
            refs.push(v.reference());
            dag.add(v).unwrap();
        }
        for (id, targets) in edges_of {
            let round = (id / 5 + 1) as Round;
            let source = id % 5;
            let edges: Vec<VertexRef> = targets.iter().map(|t| refs[*t as usize]).collect();
            let v = bare_vertex(round, source, edges);
            refs.push(v.reference());
            dag.add(v).unwrap();
        }
        (dag, refs)
    }

    #[test]
    fn figure_paths() {
        let (dag, refs) = three_round_graph();
        // Vertex 14 reaches 0 (via 9) but never 2.
        assert!(dag.exists_path(&refs[14], &refs[0]));
        assert!(!dag.exists_path(&refs[14], &refs[2]));
        assert!(dag.exists_path(&refs[13], &refs[2]));
    }

    #[test]
    fn figure_supporters_match_bruteforce() {
        let (dag, refs) = three_round_graph();
        // Brute force: which round-3 vertices reach vertex 2?
        let mut expected = std::collections::BTreeSet::new();
        for id in 10..15u32 {
            if dag.exists_path(&refs[id as usize], &refs[2]) {
                expected.insert(id % 5);
            }
        }
        let supporters = dag.supporters_of(&refs[2], 3);
        assert_eq!(supporters, expected);
        // Vertex 14 (source 4) avoids vertex 2; every other final vertex
        // reaches it through 7 or 5.
        assert_eq!(
            supporters.into_iter().collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        // A root queried at its own round supports itself.
        assert_eq!(
            dag.supporters_of(&refs[2], 1).into_iter().collect::<Vec<_>>(),
            vec![2]
        );
    }
}
