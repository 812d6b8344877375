//! Static directed topologies with per-node out-port ordering.
//!
//! Node labels are 1-based. Each node owns a bijection from its out-neighbors
//! onto ports `1..=out_degree`; the default assigns ports in ascending order
//! of destination index. Self-loops are never stored: a node retains its own
//! mass locally, so there is no channel to model.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Zero-based position, for indexing per-node arrays.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        NodeId(index + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a digraph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("edge ({src}, {dst}) has an endpoint outside 1..={n}")]
    OutOfRange { src: usize, dst: usize, n: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("port order for node {node} is not a permutation of its out-neighbors")]
    BadPortOrder { node: usize },
    #[error("digraph is not strongly connected")]
    NotStronglyConnected,
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    // out[j] is listed by port: out[j][0] has port 1.
    out: Vec<Vec<NodeId>>,
    // in_[j] is ascending by source index.
    in_: Vec<Vec<NodeId>>,
}

impl Digraph {
    /// Builds a digraph with the default (ascending destination) port order.
    pub fn build(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut seen = BTreeSet::new();
        let mut out = vec![Vec::new(); n];
        let mut in_ = vec![Vec::new(); n];
        for &(src, dst) in edges {
            if src.0 == 0 || dst.0 == 0 || src.0 > n || dst.0 > n {
                return Err(GraphError::OutOfRange {
                    src: src.0,
                    dst: dst.0,
                    n,
                });
            }
            if src == dst {
                return Err(GraphError::SelfLoop(src.0));
            }
            if !seen.insert((src, dst)) {
                return Err(GraphError::DuplicateEdge {
                    src: src.0,
                    dst: dst.0,
                });
            }
            out[src.index()].push(dst);
            in_[dst.index()].push(src);
        }
        for list in out.iter_mut().chain(in_.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Digraph { n, out, in_ })
    }

    /// Replaces the port order of `node`; `order[0]` gets port 1.
    pub fn set_port_order(&mut self, node: NodeId, order: &[NodeId]) -> Result<(), GraphError> {
        if node.0 == 0 || node.0 > self.n {
            return Err(GraphError::BadPortOrder { node: node.0 });
        }
        let current = &self.out[node.index()];
        let mut a: Vec<NodeId> = current.clone();
        let mut b: Vec<NodeId> = order.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if a != b || b.windows(2).any(|w| w[0] == w[1]) {
            return Err(GraphError::BadPortOrder { node: node.0 });
        }
        self.out[node.index()] = order.to_vec();
        Ok(())
    }

    pub fn with_port_order(mut self, node: NodeId, order: &[NodeId]) -> Result<Self, GraphError> {
        self.set_port_order(node, order)?;
        Ok(self)
    }

    /// The four-node digraph of the worked example: `1->2`, `2->3`, `3->1`,
    /// `3->2`, `3->4`, `4->1`, with default port order.
    pub fn example1() -> Self {
        let edges =
            [(1, 2), (2, 3), (3, 1), (3, 2), (3, 4), (4, 1)].map(|(s, d)| (NodeId(s), NodeId(d)));
        Digraph::build(4, &edges).expect("example digraph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (1..=self.n).map(NodeId)
    }

    /// All edges in ascending (src, dst) order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut edges: Vec<_> = self
            .nodes()
            .flat_map(|s| self.out[s.index()].iter().map(move |&d| (s, d)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn contains_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.contains(src) && self.out[src.index()].contains(&dst)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 >= 1 && node.0 <= self.n
    }

    /// Out-neighbors listed by port number.
    pub fn out_neighbors(&self, j: NodeId) -> &[NodeId] {
        &self.out[j.index()]
    }

    /// In-neighbors in ascending index order.
    pub fn in_neighbors(&self, j: NodeId) -> &[NodeId] {
        &self.in_[j.index()]
    }

    pub fn out_degree(&self, j: NodeId) -> usize {
        self.out[j.index()].len()
    }

    /// 1-based port of the link `j -> l`, if that link exists.
    pub fn port(&self, j: NodeId, l: NodeId) -> Option<usize> {
        self.out[j.index()]
            .iter()
            .position(|&x| x == l)
            .map(|p| p + 1)
    }

    /// Whether the port order of `j` differs from the ascending default.
    fn has_custom_ports(&self, j: NodeId) -> bool {
        self.out[j.index()].windows(2).any(|w| w[0] > w[1])
    }

    fn bfs_distances(&self, from: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[from.index()] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.index()].unwrap_or(0);
            for &v in &self.out[u.index()] {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_strongly_connected(&self) -> bool {
        // Reaching everything from node 1 forward and backward suffices.
        let forward = self.bfs_distances(NodeId(1)).iter().all(Option::is_some);
        if !forward {
            return false;
        }
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut queue = VecDeque::from([NodeId(1)]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.in_[u.index()] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Longest shortest directed path over all ordered node pairs.
    pub fn diameter(&self) -> Result<usize, GraphError> {
        let mut best = 0;
        for s in self.nodes() {
            for d in self.bfs_distances(s) {
                best = best.max(d.ok_or(GraphError::NotStronglyConnected)?);
            }
        }
        Ok(best)
    }

    /// A random Hamiltonian cycle over a shuffled node order, plus every other
    /// ordered pair independently with probability `extra_edge_prob`.
    pub fn random_strongly_connected<R: Rng + ?Sized>(
        n: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        if !(0.0..=1.0).contains(&extra_edge_prob) {
            return Err(GraphError::BadProbability(extra_edge_prob));
        }
        let mut perm: Vec<NodeId> = (1..=n).map(NodeId).collect();
        perm.shuffle(rng);
        let mut edges = BTreeSet::new();
        for i in 0..n {
            edges.insert((perm[i], perm[(i + 1) % n]));
        }
        for s in 1..=n {
            for d in 1..=n {
                let e = (NodeId(s), NodeId(d));
                if s != d && !edges.contains(&e) && rng.random_bool(extra_edge_prob) {
                    edges.insert(e);
                }
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        Digraph::build(n, &edges)
    }

    /// Serializes to the plain-text graph format accepted by [`FromStr`].
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (src, dst) in self.edges() {
            s.push_str(&format!("{} {}\n", src.0, dst.0));
        }
        for j in self.nodes() {
            if self.has_custom_ports(j) {
                let order: Vec<String> = self
                    .out_neighbors(j)
                    .iter()
                    .map(|l| l.0.to_string())
                    .collect();
                s.push_str(&format!("port {}: {}\n", j.0, order.join(" ")));
            }
        }
        s
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("expected a non-negative integer, found {tok:?}"),
    })
}

impl FromStr for Digraph {
    type Err = GraphError;

    /// First non-comment line is `n`; then `src dst` pairs; optional
    /// `port j: l1 l2 ...` lines override node `j`'s port order.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut n = None;
        let mut edges = Vec::new();
        let mut ports = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if n.is_none() {
                n = Some(parse_usize(line, line_no)?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("port") {
                let (node, order) = rest.split_once(':').ok_or_else(|| GraphError::Parse {
                    line: line_no,
                    msg: "port line must look like `port j: l1 l2 ...`".into(),
                })?;
                let node = NodeId(parse_usize(node.trim(), line_no)?);
                let order = order
                    .split_whitespace()
                    .map(|t| parse_usize(t, line_no).map(NodeId))
                    .collect::<Result<Vec<_>, _>>()?;
                ports.push((node, order));
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: format!("expected `src dst`, found {line:?}"),
                });
            }
            edges.push((
                NodeId(parse_usize(toks[0], line_no)?),
                NodeId(parse_usize(toks[1], line_no)?),
            ));
        }
        let n = n.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing node count".into(),
        })?;
        let mut g = Digraph::build(n, &edges)?;
        for (node, order) in ports {
            g.set_port_order(node, &order)?;
        }
        Ok(g)
    }
}
