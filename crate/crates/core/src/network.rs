//! Coupled transportation / electric topology and shortest-path trip chains.
//!
//! The transportation graph is undirected with node ids running contiguously
//! from 1. Arc distances are kept in the document's own "units" and only
//! converted to miles at the boundary, so integer inputs stay exact (every
//! path length is a sum of small integers, which `f64` represents exactly).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transportation node id (1-based, contiguous).
pub type NodeId = u32;

/// Electric-network node id.
pub type ElectricNodeId = u32;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read network document {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("network has no nodes")]
    Empty,
    #[error("nodes[{position}]: expected node id {expected}, found {found} (ids must be unique and contiguous from 1)")]
    NonContiguousNodes {
        position: usize,
        expected: NodeId,
        found: NodeId,
    },
    #[error("arcs[{index}]: self-loop on node {node}")]
    SelfLoop { index: usize, node: NodeId },
    #[error("arcs[{index}]: unknown node {node}")]
    UnknownArcNode { index: usize, node: NodeId },
    #[error("arcs[{index}]: duplicate arc ({u}, {v})")]
    DuplicateArc { index: usize, u: NodeId, v: NodeId },
    #[error("arcs[{index}]: distance must be finite and > 0, got {distance}")]
    BadDistance { index: usize, distance: f64 },
    #[error("distance_unit_miles must be finite and > 0, got {0}")]
    BadUnit(f64),
    #[error("graph is disconnected: node {node} unreachable from node 1")]
    Disconnected { node: NodeId },
    #[error("electric_map: key {key:?} is not a node id")]
    MappingKey { key: String },
    #[error("electric_map: node {node} is not in the graph")]
    MappingUnknownNode { node: NodeId },
    #[error("electric_map is not total: node {node} has no electric node")]
    MappingNotTotal { node: NodeId },
    #[error("electric_map is not injective: nodes {first} and {second} both map to electric node {electric}")]
    MappingNotInjective {
        electric: ElectricNodeId,
        first: NodeId,
        second: NodeId,
    },
    #[error("candidates[{index}]: node {node} not in graph")]
    CandidateUnknown { index: usize, node: NodeId },
    #[error("candidates[{index}]: duplicate candidate {node}")]
    DuplicateCandidate { index: usize, node: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {destination} unreachable from node {origin}")]
    Unreachable { origin: NodeId, destination: NodeId },
}

/// On-disk network description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeId>,
    pub arcs: Vec<(NodeId, NodeId, f64)>,
    pub distance_unit_miles: f64,
    pub electric_map: BTreeMap<String, ElectricNodeId>,
    pub candidates: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub u: NodeId,
    pub v: NodeId,
    /// Length in network units.
    pub distance: f64,
}

/// Undirected, connected road graph.
#[derive(Debug, Clone)]
pub struct TransportGraph {
    arcs: Vec<Arc>,
    distance_unit_miles: f64,
    // adjacency[id - 1] = sorted (neighbour, distance)
    adjacency: Vec<Vec<(NodeId, f64)>>,
}

impl TransportGraph {
    /// Builds and validates a graph on nodes `1..=node_count`.
    pub fn new(
        node_count: usize,
        arcs: &[(NodeId, NodeId, f64)],
        distance_unit_miles: f64,
    ) -> Result<Self, NetworkError> {
        if node_count == 0 {
            return Err(NetworkError::Empty);
        }
        if !(distance_unit_miles.is_finite() && distance_unit_miles > 0.0) {
            return Err(NetworkError::BadUnit(distance_unit_miles));
        }
        let mut adjacency: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); node_count];
        let mut seen = BTreeSet::new();
        let mut stored = Vec::with_capacity(arcs.len());
        for (index, &(u, v, distance)) in arcs.iter().enumerate() {
            for node in [u, v] {
                if node == 0 || node as usize > node_count {
                    return Err(NetworkError::UnknownArcNode { index, node });
                }
            }
            if u == v {
                return Err(NetworkError::SelfLoop { index, node: u });
            }
            if !(distance.is_finite() && distance > 0.0) {
                return Err(NetworkError::BadDistance { index, distance });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(NetworkError::DuplicateArc { index, u, v });
            }
            adjacency[u as usize - 1].push((v, distance));
            adjacency[v as usize - 1].push((u, distance));
            stored.push(Arc { u, v, distance });
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        let graph = Self {
            arcs: stored,
            distance_unit_miles,
            adjacency,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<(), NetworkError> {
        let mut visited = vec![false; self.node_count()];
        let mut stack = vec![1 as NodeId];
        visited[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in self.neighbours(u) {
                if !visited[v as usize - 1] {
                    visited[v as usize - 1] = true;
                    stack.push(v);
                }
            }
        }
        match visited.iter().position(|&seen| !seen) {
            Some(i) => Err(NetworkError::Disconnected {
                node: i as NodeId + 1,
            }),
            None => Ok(()),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        1..=self.node_count() as NodeId
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node >= 1 && node as usize <= self.node_count()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn distance_unit_miles(&self) -> f64 {
        self.distance_unit_miles
    }

    /// Neighbours of `node` sorted by id.
    pub fn neighbours(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node as usize - 1]
    }

    pub fn arc_distance(&self, u: NodeId, v: NodeId) -> Option<f64> {
        if !self.contains(u) {
            return None;
        }
        self.neighbours(u)
            .iter()
            .find(|&&(n, _)| n == v)
            .map(|&(_, d)| d)
    }

    /// Single-source distances (units) from `source` to every node; index = id - 1.
    pub fn distances_from(&self, source: NodeId) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source as usize - 1] = 0.0;
        heap.push(HeapEntry {
            distance: 0.0,
            node: source,
        });
        while let Some(HeapEntry { distance, node }) = heap.pop() {
            if distance > dist[node as usize - 1] {
                continue;
            }
            for &(next, w) in self.neighbours(node) {
                let candidate = distance + w;
                if candidate < dist[next as usize - 1] {
                    dist[next as usize - 1] = candidate;
                    heap.push(HeapEntry {
                        distance: candidate,
                        node: next,
                    });
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    distance: f64,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .distance
            .total_cmp(&self.distance)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// A routed origin-destination trip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripChain {
    pub origin: NodeId,
    pub destination: NodeId,
    pub path: Vec<NodeId>,
    /// Total length in network units.
    pub length: f64,
    /// Distance from the origin to each path node, in network units.
    pub cumulative: Vec<f64>,
}

impl TripChain {
    /// Dash-joined node sequence, e.g. `1-2-7`.
    pub fn signature(&self) -> String {
        join_path(&self.path)
    }
}

pub(crate) fn join_path(path: &[NodeId]) -> String {
    path.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

/// Road graph plus its electric coupling and the candidate station set.
#[derive(Debug, Clone)]
pub struct CoupledNetwork {
    transport: TransportGraph,
    electric_node_of: BTreeMap<NodeId, ElectricNodeId>,
    candidates: Vec<NodeId>,
    // candidate_position[id - 1] = index into `candidates`
    candidate_position: Vec<Option<usize>>,
}

impl CoupledNetwork {
    pub fn new(
        transport: TransportGraph,
        electric_node_of: BTreeMap<NodeId, ElectricNodeId>,
        candidates: Vec<NodeId>,
    ) -> Result<Self, NetworkError> {
        for &node in electric_node_of.keys() {
            if !transport.contains(node) {
                return Err(NetworkError::MappingUnknownNode { node });
            }
        }
        if let Some(node) = transport
            .nodes()
            .find(|n| !electric_node_of.contains_key(n))
        {
            return Err(NetworkError::MappingNotTotal { node });
        }
        let mut owners: BTreeMap<ElectricNodeId, NodeId> = BTreeMap::new();
        for (&node, &electric) in &electric_node_of {
            if let Some(&first) = owners.get(&electric) {
                return Err(NetworkError::MappingNotInjective {
                    electric,
                    first,
                    second: node,
                });
            }
            owners.insert(electric, node);
        }
        let mut candidate_position = vec![None; transport.node_count()];
        for (index, &node) in candidates.iter().enumerate() {
            if !transport.contains(node) {
                return Err(NetworkError::CandidateUnknown { index, node });
            }
            let slot = &mut candidate_position[node as usize - 1];
            if slot.is_some() {
                return Err(NetworkError::DuplicateCandidate { index, node });
            }
            *slot = Some(index);
        }
        Ok(Self {
            transport,
            electric_node_of,
            candidates,
            candidate_position,
        })
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self, NetworkError> {
        if doc.nodes.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (position, &found) in doc.nodes.iter().enumerate() {
            let expected = position as NodeId + 1;
            if found != expected {
                return Err(NetworkError::NonContiguousNodes {
                    position,
                    expected,
                    found,
                });
            }
        }
        let transport = TransportGraph::new(doc.nodes.len(), &doc.arcs, doc.distance_unit_miles)?;
        let mut map = BTreeMap::new();
        for (key, &electric) in &doc.electric_map {
            let node: NodeId = key
                .trim()
                .parse()
                .map_err(|_| NetworkError::MappingKey { key: key.clone() })?;
            map.insert(node, electric);
        }
        Self::new(transport, map, doc.candidates.clone())
    }

    pub fn transport(&self) -> &TransportGraph {
        &self.transport
    }

    pub fn electric_node_of(&self, node: NodeId) -> Option<ElectricNodeId> {
        self.electric_node_of.get(&node).copied()
    }

    /// Ordered candidate set K.
    pub fn candidates(&self) -> &[NodeId] {
        &self.candidates
    }

    /// Position of `node` within the candidate set, if it is a candidate.
    pub fn candidate_index(&self, node: NodeId) -> Option<usize> {
        if !self.transport.contains(node) {
            return None;
        }
        self.candidate_position[node as usize - 1]
    }

    /// Same network with the candidate set replaced.
    pub fn with_candidates(&self, candidates: Vec<NodeId>) -> Result<Self, NetworkError> {
        Self::new(
            self.transport.clone(),
            self.electric_node_of.clone(),
            candidates,
        )
    }

    /// Minimum-distance path; among equal-length paths the lexicographically
    /// smallest node sequence wins.
    pub fn shortest_path(
        &self,
        origin: NodeId,
        destination: NodeId,
    ) -> Result<TripChain, NetworkError> {
        let graph = &self.transport;
        for node in [origin, destination] {
            if !graph.contains(node) {
                return Err(NetworkError::UnknownNode(node));
            }
        }
        let to_dest = graph.distances_from(destination);
        if !to_dest[origin as usize - 1].is_finite() {
            return Err(NetworkError::Unreachable {
                origin,
                destination,
            });
        }
        let mut path = vec![origin];
        let mut cumulative = vec![0.0];
        let mut current = origin;
        while current != destination {
            let remaining = to_dest[current as usize - 1];
            // neighbours are sorted by id, so the first tight arc is the
            // lexicographically smallest continuation
            let (next, w) = graph
                .neighbours(current)
                .iter()
                .copied()
                .find(|&(n, w)| tight(remaining, w + to_dest[n as usize - 1]))
                .ok_or(NetworkError::Unreachable {
                    origin,
                    destination,
                })?;
            cumulative.push(cumulative.last().unwrap() + w);
            path.push(next);
            current = next;
        }
        Ok(TripChain {
            origin,
            destination,
            length: *cumulative.last().unwrap(),
            path,
            cumulative,
        })
    }

    pub fn path_distance_miles(&self, chain: &TripChain) -> f64 {
        chain.length * self.transport.distance_unit_miles
    }
}

fn tight(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

pub fn load_network_str(document: &str) -> Result<CoupledNetwork, NetworkError> {
    let doc: NetworkDocument = serde_json::from_str(document)?;
    CoupledNetwork::from_document(&doc)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<CoupledNetwork, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_network_str(&text)
}
