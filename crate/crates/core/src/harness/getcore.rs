//! Common-core property checker: the largest set of first-round vertices
//! that every final-round vertex of a wave window can reach. The wave
//! construction needs this set to contain a quorum; the checker both
//! verifies simulator-built graphs and analyzes explicit counterexamples.

use std::collections::{BTreeMap, BTreeSet};

use crate::dag::DagStore;
use crate::types::{quorum, ReplicaId, Round};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("malformed dag: {0}")]
    MalformedDag(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Explicit vertex/edge-list DAG, rounds 1..=rounds.
#[derive(Debug, Clone)]
pub struct CoreDag {
    pub n: usize,
    pub rounds: usize,
    pub min_links: usize,
    /// id -> (round, source)
    pub vertices: BTreeMap<u32, (Round, ReplicaId)>,
    /// id -> referenced previous-round ids
    pub edges: BTreeMap<u32, Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct CoreReport {
    pub n: usize,
    pub rounds: usize,
    pub min_links: usize,
    pub quorum: usize,
    pub max_common_core_size: usize,
    /// The common core itself: ids of round-1 vertices every final-round
    /// vertex reaches.
    pub witness: Vec<u32>,
    pub holds: bool,
}

impl CoreDag {
    /// Parses the documented text format:
    /// ```text
    /// # comment
    /// n=5
    /// rounds=3
    /// min_links=3
    /// v <id> <round> <source>
    /// e <from-id> <to-id>
    /// ```
    pub fn parse(text: &str) -> Result<CoreDag, CoreError> {
        let mut n = None;
        let mut rounds = None;
        let mut min_links = None;
        let mut vertices = BTreeMap::new();
        let mut edges: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |reason: &str| CoreError::Parse {
                line,
                reason: reason.to_string(),
            };
            if let Some(rest) = t.strip_prefix("n=") {
                n = Some(rest.trim().parse::<usize>().map_err(|_| err("bad n"))?);
            } else if let Some(rest) = t.strip_prefix("rounds=") {
                rounds = Some(rest.trim().parse::<usize>().map_err(|_| err("bad rounds"))?);
            } else if let Some(rest) = t.strip_prefix("min_links=") {
                min_links = Some(rest.trim().parse::<usize>().map_err(|_| err("bad min_links"))?);
            } else if let Some(rest) = t.strip_prefix("v ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(err("expected: v <id> <round> <source>"));
                }
                let id = parts[0].parse().map_err(|_| err("bad id"))?;
                let round = parts[1].parse().map_err(|_| err("bad round"))?;
                let source = parts[2].parse().map_err(|_| err("bad source"))?;
                vertices.insert(id, (round, source));
            } else if let Some(rest) = t.strip_prefix("e ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected: e <from> <to>"));
                }
                let from = parts[0].parse().map_err(|_| err("bad from"))?;
                let to = parts[1].parse().map_err(|_| err("bad to"))?;
                edges.entry(from).or_default().push(to);
            } else {
                return Err(err("unrecognized line"));
            }
        }
        let dag = CoreDag {
            n: n.ok_or(CoreError::Parse {
                line: 0,
                reason: "missing n=".into(),
            })?,
            rounds: rounds.ok_or(CoreError::Parse {
                line: 0,
                reason: "missing rounds=".into(),
            })?,
            min_links: min_links.unwrap_or(0),
            vertices,
            edges,
        };
        Ok(dag)
    }

    /// Extracts a wave window (rounds `start..start+len`) from a live DAG,
    /// keeping only vertices whose edges stay inside the window.
    pub fn from_dag_window(dag: &DagStore, n: usize, start: Round, len: usize, min_links: usize) -> CoreDag {
        let mut ids = BTreeMap::new();
        let mut vertices = BTreeMap::new();
        let mut edges: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut next = 0u32;
        for offset in 0..len as Round {
            let round = start + offset;
            for v in dag.round_vertices(round) {
                let id = next;
                next += 1;
                ids.insert(v.reference(), id);
                vertices.insert(id, (offset + 1, v.source));
                if offset > 0 {
                    let list: Vec<u32> = v
                        .edges
                        .iter()
                        .filter_map(|e| ids.get(e).copied())
                        .collect();
                    edges.insert(id, list);
                }
            }
        }
        CoreDag {
            n,
            rounds: len,
            min_links,
            vertices,
            edges,
        }
    }

    fn validate(&self) -> Result<(), CoreError> {
        if self.rounds < 2 {
            return Err(CoreError::MalformedDag("need at least two rounds".into()));
        }
        for (id, (round, _)) in &self.vertices {
            if *round < 1 || *round > self.rounds as Round {
                return Err(CoreError::MalformedDag(format!(
                    "vertex {id} has round {round} outside 1..={}",
                    self.rounds
                )));
            }
            let empty = Vec::new();
            let out = self.edges.get(id).unwrap_or(&empty);
            if *round == 1 {
                if !out.is_empty() {
                    return Err(CoreError::MalformedDag(format!(
                        "round-1 vertex {id} has edges"
                    )));
                }
                continue;
            }
            if out.len() < self.min_links {
                return Err(CoreError::MalformedDag(format!(
                    "vertex {id} links to {} vertices, needs {}",
                    out.len(),
                    self.min_links
                )));
            }
            for target in out {
                let Some((tr, _)) = self.vertices.get(target) else {
                    return Err(CoreError::MalformedDag(format!(
                        "vertex {id} references unknown vertex {target}"
                    )));
                };
                if *tr != round - 1 {
                    return Err(CoreError::MalformedDag(format!(
                        "vertex {id} (round {round}) references vertex {target} of round {tr}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn reach_round1(&self, from: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur) {
                continue;
            }
            let (round, _) = self.vertices[&cur];
            if round == 1 {
                out.insert(cur);
                continue;
            }
            if let Some(targets) = self.edges.get(&cur) {
                stack.extend(targets.iter().copied());
            }
        }
        out
    }

    /// Computes the maximum common core: the intersection over all
    /// final-round vertices of their round-1 ancestor sets.
    pub fn check(&self) -> Result<CoreReport, CoreError> {
        self.validate()?;
        let final_round = self.rounds as Round;
        let finals: Vec<u32> = self
            .vertices
            .iter()
            .filter(|(_, (r, _))| *r == final_round)
            .map(|(id, _)| *id)
            .collect();
        if finals.is_empty() {
            return Err(CoreError::MalformedDag("no final-round vertices".into()));
        }
        let mut core: Option<BTreeSet<u32>> = None;
        for f in finals {
            let reach = self.reach_round1(f);
            core = Some(match core {
                None => reach,
                Some(acc) => acc.intersection(&reach).copied().collect(),
            });
        }
        let witness: Vec<u32> = core.unwrap_or_default().into_iter().collect();
        let q = quorum(self.n);
        Ok(CoreReport {
            n: self.n,
            rounds: self.rounds,
            min_links: self.min_links,
            quorum: q,
            max_common_core_size: witness.len(),
            holds: witness.len() >= q,
            witness,
        })
    }
}

/// The 15-vertex, n=5, three-round graph on which the common core shrinks
/// to two: the canonical witness that three-round waves cannot guarantee a
/// quorum-sized core at this fault tolerance.
pub fn three_round_counterexample() -> &'static str {
    "\
# Three-round wave, n=5: the common core has size 2 (< quorum 3).
n=5
rounds=3
min_links=3
v 0 1 0
v 1 1 1
v 2 1 2
v 3 1 3
v 4 1 4
v 5 2 0
v 6 2 1
v 7 2 2
v 8 2 3
v 9 2 4
v 10 3 0
v 11 3 1
v 12 3 2
v 13 3 3
v 14 3 4
e 9 4
e 9 3
e 9 0
e 8 3
e 8 1
e 8 0
e 7 2
e 7 1
e 7 0
e 6 4
e 6 1
e 6 0
e 5 2
e 5 1
e 5 0
e 14 9
e 14 8
e 14 6
e 13 8
e 13 7
e 13 5
e 12 7
e 12 6
e 12 5
e 11 7
e 11 6
e 11 5
e 10 7
e 10 6
e 10 5
"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_core_is_two() {
        let dag = CoreDag::parse(three_round_counterexample()).unwrap();
        let report = dag.check().unwrap();
        assert_eq!(report.max_common_core_size, 2);
        assert_eq!(report.witness, vec![0, 1]);
        assert!(!report.holds);
    }

    #[test]
    fn fully_connected_three_rounds_core_is_n() {
        let mut text = String::from("n=5\nrounds=3\nmin_links=3\n");
        for id in 0..15u32 {
            let round = id / 5 + 1;
            let source = id % 5;
            text.push_str(&format!("v {id} {round} {source}\n"));
        }
        for id in 5..15u32 {
            let prev_base = (id / 5 - 1) * 5;
            for t in prev_base..prev_base + 5 {
                text.push_str(&format!("e {id} {t}\n"));
            }
        }
        let report = CoreDag::parse(&text).unwrap().check().unwrap();
        assert_eq!(report.max_common_core_size, 5);
        assert!(report.holds);
    }

    #[test]
    fn under_linked_dag_rejected() {
        let text = "n=3\nrounds=2\nmin_links=2\nv 0 1 0\nv 1 1 1\nv 2 2 0\ne 2 0\n";
        let err = CoreDag::parse(text).unwrap().check().unwrap_err();
        assert!(matches!(err, CoreError::MalformedDag(_)));
    }
}
