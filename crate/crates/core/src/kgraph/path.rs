use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::{GraphError, KnowledgeGraph, NodeId, Relation, Result};

/// A walk over `TRANSITIONS_TO` edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub total_weight: f64,
}

/// Frontier entry ordered by (weight, node-id sequence), smallest first.
struct Frontier {
    weight: f64,
    nodes: Vec<NodeId>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.nodes.cmp(&self.nodes))
    }
}

/// Dijkstra over `TRANSITIONS_TO` edges where each frontier entry carries its
/// full node sequence. Popping in (weight, sequence) order makes the first
/// settlement of every node its minimum-weight, lexicographically smallest
/// simple path; extending a path never lowers its key because weights are
/// non-negative and a sequence sorts before its own extensions.
pub(super) fn shortest(graph: &KnowledgeGraph, src: &str, dst: &str) -> Result<Path> {
    let (_, s) = graph.require(src)?;
    let (_, d) = graph.require(dst)?;
    let mut settled: HashSet<&NodeId> = HashSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Frontier {
        weight: 0.0,
        nodes: vec![s.id.clone()],
    });
    while let Some(Frontier { weight, nodes }) = heap.pop() {
        let last = nodes.last().expect("non-empty path");
        let Some(last_node) = graph.node(last.as_str()) else {
            continue;
        };
        if !settled.insert(&last_node.id) {
            continue;
        }
        if last_node.id == d.id {
            return Ok(Path {
                nodes,
                total_weight: weight,
            });
        }
        for edge in graph.out_edges(last.as_str(), Relation::TransitionsTo) {
            if settled.contains(&edge.dst) || nodes.contains(&edge.dst) {
                continue;
            }
            let mut next = nodes.clone();
            next.push(edge.dst.clone());
            heap.push(Frontier {
                weight: weight + edge.weight,
                nodes: next,
            });
        }
    }
    Err(GraphError::NoPath {
        src: s.id.clone(),
        dst: d.id.clone(),
    })
}
