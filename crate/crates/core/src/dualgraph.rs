//! Dual graph networks `(G, G')` and the network constructions used by the
//! experiments.
//!
//! A [`DualGraph`] stores the potential edge set `E'` once, sorted, and marks
//! each edge as reliable (member of `E`) or unreliable. The classical radio
//! model is the special case where every potential edge is reliable.
//!
//! Process ids are 1-based and dense in `[1, n]`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("network must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside [1, {2}]")]
    OutOfRange(u32, u32, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("reliable edge ({0}, {1}) is not a potential edge")]
    NotContained(u32, u32),
    #[error("role vector has length {0}, expected {1}")]
    RoleLength(usize, usize),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input network is not bipartite: {0}")]
    NotBipartite(String),
    #[error("input network is not classical (E != E')")]
    NotClassical,
    #[error("disjoint union of an empty list")]
    EmptyUnion,
    #[error("component containing node {0} has {1} reliable edges, expected exactly one")]
    ReliableEdgeCount(u32, usize),
    #[error("malformed graph file: {0}")]
    Format(String),
}

/// Process identifier in `[1, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    /// Builds an id from a 0-based node index.
    pub fn from_index(index: usize) -> Self {
        ProcessId(index as u32 + 1)
    }

    /// 0-based position of this process in per-node tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected edge, stored with the smaller endpoint first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(ProcessId, ProcessId);

impl Edge {
    pub fn new(a: ProcessId, b: ProcessId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn from_ids(a: u32, b: u32) -> Self {
        Edge::new(ProcessId(a), ProcessId(b))
    }

    pub fn endpoints(self) -> (ProcessId, ProcessId) {
        (self.0, self.1)
    }

    pub fn other(self, p: ProcessId) -> ProcessId {
        if self.0 == p {
            self.1
        } else {
            self.0
        }
    }

    pub fn as_pair(self) -> [u32; 2] {
        [self.0 .0, self.1 .0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
    Untagged,
}

/// One entry of a node's `G'` adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacent {
    pub neighbor: ProcessId,
    /// Index of the connecting edge in [`DualGraph::potential_edges`].
    pub edge: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    /// Maximum `G`-degree over receivers (all nodes when untagged); the `Δ` proxy.
    pub max_receiver_degree_g: usize,
    /// Maximum `G'`-degree over receivers; the `Δ'` proxy.
    pub max_receiver_degree_g_prime: usize,
    /// Connected components of `G'`, isolated nodes included.
    pub component_count: usize,
}

/// A network `(G, G')` over processes `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGraph {
    n: usize,
    edges: Vec<Edge>,
    reliable: Vec<bool>,
    roles: Option<Vec<Role>>,
    components: Vec<Vec<ProcessId>>,
    adjacency: Vec<Vec<Adjacent>>,
}

impl DualGraph {
    /// Validates and builds a dual graph from explicit edge sets.
    ///
    /// Duplicate edges are merged. `roles`, when present, is indexed by
    /// 0-based node position.
    pub fn new(
        n: usize,
        reliable_edges: impl IntoIterator<Item = (u32, u32)>,
        potential_edges: impl IntoIterator<Item = (u32, u32)>,
        roles: Option<Vec<Role>>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let check = |(a, b): (u32, u32)| -> Result<Edge, GraphError> {
            if a == 0 || b == 0 || a as usize > n || b as usize > n {
                return Err(GraphError::OutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            Ok(Edge::from_ids(a, b))
        };
        let reliable: BTreeSet<Edge> = reliable_edges.into_iter().map(check).collect::<Result<_, _>>()?;
        let potential: BTreeSet<Edge> = potential_edges.into_iter().map(check).collect::<Result<_, _>>()?;
        if let Some(e) = reliable.difference(&potential).next() {
            let [a, b] = e.as_pair();
            return Err(GraphError::NotContained(a, b));
        }
        if let Some(r) = &roles {
            if r.len() != n {
                return Err(GraphError::RoleLength(r.len(), n));
            }
        }
        let edges: Vec<Edge> = potential.into_iter().collect();
        let flags = edges.iter().map(|e| reliable.contains(e)).collect();
        let all: Vec<ProcessId> = (0..n).map(ProcessId::from_index).collect();
        Ok(Self::assemble(n, edges, flags, roles, vec![all]))
    }

    fn assemble(
        n: usize,
        edges: Vec<Edge>,
        reliable: Vec<bool>,
        roles: Option<Vec<Role>>,
        components: Vec<Vec<ProcessId>>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (i, (e, &rel)) in edges.iter().zip(&reliable).enumerate() {
            let (a, b) = e.endpoints();
            adjacency[a.index()].push(Adjacent { neighbor: b, edge: i, reliable: rel });
            adjacency[b.index()].push(Adjacent { neighbor: a, edge: i, reliable: rel });
        }
        for list in &mut adjacency {
            list.sort_by_key(|a| a.neighbor);
        }
        DualGraph { n, edges, reliable, roles, components, adjacency }
    }

    /// Classical network: `E = E'`.
    pub fn classical(n: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        DualGraph::new(n, edges.iter().copied(), edges.iter().copied(), None)
    }

    /// Classical bipartite network with `eta` senders (ids `1..=eta`) and `m`
    /// receivers (ids `eta+1..=eta+m`), each pair joined independently with
    /// probability `edge_prob`.
    pub fn random_bipartite(eta: usize, m: usize, edge_prob: f64, seed: u64) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&edge_prob) || edge_prob.is_nan() {
            return Err(GraphError::InvalidProbability(edge_prob));
        }
        if eta == 0 || m == 0 {
            return Err(GraphError::InvalidParameter(format!(
                "random bipartite needs eta >= 1 and m >= 1, got eta={eta} m={m}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for s in 1..=eta as u32 {
            for r in 1..=m as u32 {
                if rng.gen_bool(edge_prob) {
                    edges.push((s, eta as u32 + r));
                }
            }
        }
        let roles = bipartite_roles(eta, m);
        DualGraph::new(eta + m, edges.iter().copied(), edges.iter().copied(), Some(roles))
    }

    /// Complete bipartite classical network `K_{eta,m}` with the same id
    /// layout as [`DualGraph::random_bipartite`].
    pub fn complete_bipartite(eta: usize, m: usize) -> Result<Self, GraphError> {
        DualGraph::random_bipartite(eta, m, 1.0, 0)
    }

    /// Clique on `1..n-1` plus the edge `(n, 1)` in `G`; `G'` complete.
    pub fn lollipop(n: usize) -> Result<Self, GraphError> {
        if n <= 2 {
            return Err(GraphError::InvalidParameter(format!("lollipop needs n > 2, got {n}")));
        }
        let n32 = n as u32;
        let mut reliable: Vec<(u32, u32)> = complete_pairs(1, n32 - 1);
        reliable.push((1, n32));
        DualGraph::new(n, reliable, complete_pairs(1, n32), None)
    }

    /// Broadcasters `b_i = i` and receivers `r_i = n/2 + i`. `G` has
    /// `(b_i, r_i)` for every `i` and `(b_1, r_j)` for every `j`; `G'` is
    /// complete. Roles are tagged.
    pub fn spread(n: usize) -> Result<Self, GraphError> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(GraphError::InvalidParameter(format!("spread needs an even n >= 2, got {n}")));
        }
        let half = (n / 2) as u32;
        let mut reliable = Vec::new();
        for i in 1..=half {
            reliable.push((i, half + i));
            reliable.push((1, half + i));
        }
        let roles = bipartite_roles(n / 2, n / 2);
        DualGraph::new(n, reliable, complete_pairs(1, n as u32), Some(roles))
    }

    /// Concatenates networks, shifting ids so that each part occupies a
    /// contiguous block. Component metadata records the blocks.
    pub fn disjoint_union(parts: &[DualGraph]) -> Result<Self, GraphError> {
        if parts.is_empty() {
            return Err(GraphError::EmptyUnion);
        }
        let n: usize = parts.iter().map(|g| g.n).sum();
        let tagged = parts.iter().any(|g| g.roles.is_some());
        let mut edges = Vec::new();
        let mut reliable = Vec::new();
        let mut roles = Vec::with_capacity(n);
        let mut components = Vec::new();
        let mut offset = 0u32;
        for g in parts {
            for (e, &rel) in g.edges.iter().zip(&g.reliable) {
                let [a, b] = e.as_pair();
                edges.push(Edge::from_ids(a + offset, b + offset));
                reliable.push(rel);
            }
            for i in 0..g.n {
                roles.push(g.role(ProcessId::from_index(i)));
            }
            for comp in &g.components {
                components.push(comp.iter().map(|p| ProcessId(p.0 + offset)).collect());
            }
            offset += g.n as u32;
        }
        // Blocks are disjoint and each part's edge list is sorted, so the
        // concatenation is already sorted.
        Ok(Self::assemble(n, edges, reliable, tagged.then_some(roles), components))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = ProcessId> {
        (0..self.n).map(ProcessId::from_index)
    }

    /// `E'` in sorted order; reach sets index into this list.
    pub fn potential_edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_reliable_edge(&self, index: usize) -> bool {
        self.reliable[index]
    }

    pub fn reliable_flags(&self) -> &[bool] {
        &self.reliable
    }

    pub fn reliable_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().zip(&self.reliable).filter(|(_, &r)| r).map(|(e, _)| *e)
    }

    pub fn reliable_edge_count(&self) -> usize {
        self.reliable.iter().filter(|&&r| r).count()
    }

    pub fn potential_edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, e: Edge) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }

    pub fn is_classical(&self) -> bool {
        self.reliable.iter().all(|&r| r)
    }

    /// Full `G'` adjacency of `p`, sorted by neighbor id.
    pub fn adjacency(&self, p: ProcessId) -> &[Adjacent] {
        &self.adjacency[p.index()]
    }

    pub fn g_neighbors(&self, p: ProcessId) -> impl Iterator<Item = ProcessId> + '_ {
        self.adjacency(p).iter().filter(|a| a.reliable).map(|a| a.neighbor)
    }

    pub fn g_prime_neighbors(&self, p: ProcessId) -> impl Iterator<Item = ProcessId> + '_ {
        self.adjacency(p).iter().map(|a| a.neighbor)
    }

    pub fn g_degree(&self, p: ProcessId) -> usize {
        self.adjacency(p).iter().filter(|a| a.reliable).count()
    }

    pub fn g_prime_degree(&self, p: ProcessId) -> usize {
        self.adjacency(p).len()
    }

    pub fn roles(&self) -> Option<&[Role]> {
        self.roles.as_deref()
    }

    pub fn is_tagged(&self) -> bool {
        self.roles.is_some()
    }

    pub fn role(&self, p: ProcessId) -> Role {
        self.roles.as_ref().map_or(Role::Untagged, |r| r[p.index()])
    }

    pub fn senders(&self) -> Vec<ProcessId> {
        self.nodes().filter(|&p| self.role(p) == Role::Sender).collect()
    }

    pub fn receivers(&self) -> Vec<ProcessId> {
        self.nodes().filter(|&p| self.role(p) == Role::Receiver).collect()
    }

    /// Receivers when roles are tagged, every node otherwise.
    pub fn receiver_like(&self) -> Vec<ProcessId> {
        if self.is_tagged() {
            self.receivers()
        } else {
            self.nodes().collect()
        }
    }

    /// True when roles are tagged and every potential edge joins a sender
    /// and a receiver.
    pub fn is_bipartite(&self) -> bool {
        self.bipartite_violation().is_none()
    }

    fn bipartite_violation(&self) -> Option<String> {
        if !self.is_tagged() {
            return Some("roles are not tagged".into());
        }
        self.edges.iter().find_map(|e| {
            let (a, b) = e.endpoints();
            let ok =
                matches!((self.role(a), self.role(b)), (Role::Sender, Role::Receiver) | (Role::Receiver, Role::Sender));
            (!ok).then(|| format!("edge ({a}, {b}) does not join a sender and a receiver"))
        })
    }

    /// Component blocks recorded at construction (one block unless built by
    /// [`DualGraph::disjoint_union`]).
    pub fn component_blocks(&self) -> &[Vec<ProcessId>] {
        &self.components
    }

    /// Connected components of `G'`, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<ProcessId>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![ProcessId::from_index(start)];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for a in &self.adjacency[u] {
                    let v = a.neighbor.index();
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(a.neighbor);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    pub fn stats(&self) -> NetworkStats {
        let pool = self.receiver_like();
        let max_g = pool.iter().map(|&p| self.g_degree(p)).max().unwrap_or(0);
        let max_gp = pool.iter().map(|&p| self.g_prime_degree(p)).max().unwrap_or(0);
        NetworkStats {
            max_receiver_degree_g: max_g,
            max_receiver_degree_g_prime: max_gp,
            component_count: self.connected_components().len(),
        }
    }

    /// The single reliable edge of every `G'` component that has edges.
    ///
    /// Isolated nodes are skipped. Any component with zero or several
    /// reliable edges is an error.
    pub fn single_reliable_edges(&self) -> Result<Vec<Edge>, GraphError> {
        let mut out = Vec::new();
        for comp in self.connected_components() {
            if comp.len() == 1 {
                continue;
            }
            let reliable: Vec<Edge> = comp
                .iter()
                .flat_map(|&p| self.adjacency(p).iter().filter(|a| a.reliable).map(move |a| Edge::new(p, a.neighbor)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if reliable.len() != 1 {
                return Err(GraphError::ReliableEdgeCount(comp[0].0, reliable.len()));
            }
            out.push(reliable[0]);
        }
        Ok(out)
    }

    /// Keeps only the smallest reliable edge of each `G'` component and
    /// downgrades the rest to unreliable edges. `G'` is unchanged.
    pub fn downgrade_to_single_reliable(&self) -> DualGraph {
        let mut keep = vec![false; self.edges.len()];
        for comp in self.connected_components() {
            let best = comp.iter().flat_map(|&p| self.adjacency(p).iter().filter(|a| a.reliable).map(|a| a.edge)).min();
            if let Some(i) = best {
                keep[i] = true;
            }
        }
        let mut g = self.clone();
        g.reliable = keep;
        Self::assemble(g.n, g.edges, g.reliable, g.roles, g.components)
    }

    pub fn to_file(&self) -> GraphFile {
        let roles = self.roles.as_ref().map(|_| RoleSets {
            senders: self.senders().iter().map(|p| p.0).collect(),
            receivers: self.receivers().iter().map(|p| p.0).collect(),
        });
        GraphFile {
            n: self.n,
            reliable_edges: self.reliable_edges().map(Edge::as_pair).collect(),
            potential_edges: self.edges.iter().map(|e| e.as_pair()).collect(),
            roles,
            components: self.components.iter().map(|c| c.iter().map(|p| p.0).collect()).collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GraphError> {
        let roles = match &file.roles {
            None => None,
            Some(sets) => {
                let mut roles = vec![Role::Untagged; file.n];
                for (ids, role) in [(&sets.senders, Role::Sender), (&sets.receivers, Role::Receiver)] {
                    for &id in ids {
                        if id == 0 || id as usize > file.n {
                            return Err(GraphError::Format(format!("role id {id} out of range")));
                        }
                        roles[id as usize - 1] = role;
                    }
                }
                Some(roles)
            }
        };
        let mut g = DualGraph::new(
            file.n,
            file.reliable_edges.iter().map(|&[a, b]| (a, b)),
            file.potential_edges.iter().map(|&[a, b]| (a, b)),
            roles,
        )?;
        if !file.components.is_empty() {
            let mut seen = vec![false; file.n];
            let mut blocks = Vec::new();
            for block in &file.components {
                let mut ids = Vec::new();
                for &id in block {
                    if id == 0 || id as usize > file.n || std::mem::replace(&mut seen[id as usize - 1], true) {
                        return Err(GraphError::Format(format!("bad component member {id}")));
                    }
                    ids.push(ProcessId(id));
                }
                blocks.push(ids);
            }
            if seen.iter().any(|s| !s) {
                return Err(GraphError::Format("components do not cover every node".into()));
            }
            g.components = blocks;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(s).map_err(|e| GraphError::Format(e.to_string()))?;
        DualGraph::from_file(&file)
    }
}

/// On-disk graph format. Ids are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub reliable_edges: Vec<[u32; 2]>,
    pub potential_edges: Vec<[u32; 2]>,
    #[serde(default)]
    pub roles: Option<RoleSets>,
    #[serde(default)]
    pub components: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSets {
    pub senders: Vec<u32>,
    pub receivers: Vec<u32>,
}

/// One proxy receiver created by [`dual_transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proxy {
    pub id: ProcessId,
    /// Receiver of the input network this proxy replaces.
    pub original: ProcessId,
    /// Sender the proxy is matched to in `G`.
    pub associate: ProcessId,
}

#[derive(Debug, Clone)]
pub struct DualTransform {
    pub graph: DualGraph,
    pub proxies: Vec<Proxy>,
    /// Maps input sender ids to output ids.
    pub sender_map: BTreeMap<ProcessId, ProcessId>,
    /// Degree-0 receivers of the input, which have no proxies.
    pub dropped_receivers: Vec<ProcessId>,
}

impl DualTransform {
    pub fn has_warnings(&self) -> bool {
        !self.dropped_receivers.is_empty()
    }
}

/// Replaces each receiver `u` of a classical bipartite network by `deg(u)`
/// proxies. In `G` each proxy is matched to one associate (a neighbor of
/// `u`); in `G'` every proxy of `u` is joined to every associate of `u`.
///
/// Senders keep their relative order and come first; proxies follow in
/// ascending (receiver id, associate id) order.
pub fn dual_transform(h: &DualGraph) -> Result<DualTransform, GraphError> {
    if let Some(why) = h.bipartite_violation() {
        return Err(GraphError::NotBipartite(why));
    }
    if !h.is_classical() {
        return Err(GraphError::NotClassical);
    }
    let senders = h.senders();
    let sender_map: BTreeMap<ProcessId, ProcessId> =
        senders.iter().enumerate().map(|(i, &s)| (s, ProcessId::from_index(i))).collect();
    let mut next = senders.len() as u32;
    let mut reliable = Vec::new();
    let mut potential = Vec::new();
    let mut proxies = Vec::new();
    let mut dropped = Vec::new();
    for u in h.receivers() {
        let associates: Vec<ProcessId> = h.g_neighbors(u).map(|s| sender_map[&s]).collect();
        if associates.is_empty() {
            dropped.push(u);
            continue;
        }
        let first = next + 1;
        for (k, &a) in associates.iter().enumerate() {
            let proxy = ProcessId(first + k as u32);
            reliable.push((proxy.0, a.0));
            proxies.push(Proxy { id: proxy, original: u, associate: a });
            for &b in &associates {
                potential.push((proxy.0, b.0));
            }
        }
        next += associates.len() as u32;
    }
    let n = next as usize;
    let roles = bipartite_roles(senders.len(), n - senders.len());
    let graph = DualGraph::new(n, reliable, potential, Some(roles))?;
    Ok(DualTransform { graph, proxies, sender_map, dropped_receivers: dropped })
}

fn bipartite_roles(senders: usize, receivers: usize) -> Vec<Role> {
    let mut roles = vec![Role::Sender; senders];
    roles.extend(std::iter::repeat_n(Role::Receiver, receivers));
    roles
}

fn complete_pairs(lo: u32, hi: u32) -> Vec<(u32, u32)> {
    (lo..=hi).flat_map(|a| (a + 1..=hi).map(move |b| (a, b))).collect()
}
