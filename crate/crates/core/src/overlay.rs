//! Overlay topology: uniform-attachment construction and churn.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Node identifier. Ids are handed out by a monotone counter and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyParams {
    pub nodes: usize,
    pub initial_clique: usize,
    pub links_per_node: usize,
}

impl TopologyParams {
    pub fn new(nodes: usize, initial_clique: usize, links_per_node: usize) -> Result<Self> {
        let p = Self { nodes, initial_clique, links_per_node };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_clique < 2 {
            return Err(invalid("initial clique must have at least 2 nodes"));
        }
        if self.nodes < self.initial_clique {
            return Err(invalid(format!(
                "node count {} smaller than initial clique {}",
                self.nodes, self.initial_clique
            )));
        }
        if self.links_per_node < 1 || self.links_per_node > self.initial_clique {
            return Err(invalid(format!(
                "links per node m={} must lie in [1, {}]",
                self.links_per_node, self.initial_clique
            )));
        }
        Ok(())
    }
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self { nodes: 10_000, initial_clique: 5, links_per_node: 3 }
    }
}

/// Undirected overlay with symmetric adjacency sets.
#[derive(Debug, Clone, Default)]
pub struct OverlayGraph {
    adjacency: Vec<Option<BTreeSet<NodeId>>>,
    alive: Vec<NodeId>,
    // Position of each id in `alive`, `usize::MAX` once departed.
    slot: Vec<usize>,
}

impl OverlayGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an `initial_clique`-clique, then attaches every further node to
    /// `links_per_node` distinct existing nodes chosen uniformly.
    pub fn generate<R: Rng + ?Sized>(params: &TopologyParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let mut g = Self::new();
        for _ in 0..params.initial_clique {
            g.add_node();
        }
        for a in 0..params.initial_clique {
            for b in (a + 1)..params.initial_clique {
                g.connect(NodeId(a), NodeId(b));
            }
        }
        for _ in params.initial_clique..params.nodes {
            g.join(params.links_per_node, rng)?;
        }
        Ok(g)
    }

    /// Graph on ids `0..nodes` with exactly the given undirected edges.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new();
        for _ in 0..nodes {
            g.add_node();
        }
        for &(a, b) in edges {
            if a >= nodes || b >= nodes {
                return Err(Error::UnknownNode(a.max(b)));
            }
            if a == b {
                return Err(invalid(format!("self-loop at {a}")));
            }
            g.connect(NodeId(a), NodeId(b));
        }
        Ok(g)
    }

    fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.adjacency.len());
        self.adjacency.push(Some(BTreeSet::new()));
        self.slot.push(self.alive.len());
        self.alive.push(id);
        id
    }

    fn connect(&mut self, a: NodeId, b: NodeId) {
        debug_assert_ne!(a, b);
        self.adjacency[a.0].as_mut().expect("alive").insert(b);
        self.adjacency[b.0].as_mut().expect("alive").insert(a);
    }

    /// Adds a fresh node linked to `m` distinct alive nodes chosen uniformly.
    pub fn join<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> Result<NodeId> {
        let available = self.alive.len();
        if available < m {
            return Err(Error::NotEnoughNodes { needed: m, available });
        }
        let targets: Vec<NodeId> = index::sample(rng, available, m).iter().map(|i| self.alive[i]).collect();
        let id = self.add_node();
        for t in targets {
            self.connect(id, t);
        }
        Ok(id)
    }

    /// Removes `id` with all incident edges and returns its former neighbours.
    /// No repair links are added.
    pub fn leave(&mut self, id: NodeId) -> Result<Vec<NodeId>> {
        let neighbors = self
            .adjacency
            .get_mut(id.0)
            .and_then(Option::take)
            .ok_or(Error::UnknownNode(id.0))?;
        for &nb in &neighbors {
            if let Some(set) = self.adjacency[nb.0].as_mut() {
                set.remove(&id);
            }
        }
        let pos = self.slot[id.0];
        self.alive.swap_remove(pos);
        if let Some(&moved) = self.alive.get(pos) {
            self.slot[moved.0] = pos;
        }
        self.slot[id.0] = usize::MAX;
        Ok(neighbors.into_iter().collect())
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        matches!(self.adjacency.get(id.0), Some(Some(_)))
    }

    pub fn neighbors(&self, id: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.adjacency.get(id.0).and_then(Option::as_ref)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.neighbors(id).map_or(0, BTreeSet::len)
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    /// Alive ids in an arbitrary but deterministic order.
    pub fn alive(&self) -> &[NodeId] {
        &self.alive
    }

    /// Upper bound (exclusive) on every id issued so far.
    pub fn id_bound(&self) -> usize {
        self.adjacency.len()
    }

    pub fn random_alive<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<NodeId> {
        if self.alive.is_empty() {
            None
        } else {
            Some(self.alive[rng.random_range(0..self.alive.len())])
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.alive.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.alive.len() as f64
    }

    /// `hist[k]` = number of alive nodes with degree `k`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let mut hist = Vec::new();
        for set in self.adjacency.iter().flatten() {
            let k = set.len();
            if hist.len() <= k {
                hist.resize(k + 1, 0);
            }
            hist[k] += 1;
        }
        hist
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.alive.first() else {
            return true;
        };
        let mut seen = vec![false; self.adjacency.len()];
        let mut stack = vec![start];
        seen[start.0] = true;
        let mut reached = 1;
        while let Some(v) = stack.pop() {
            for &nb in self.neighbors(v).into_iter().flatten() {
                if !seen[nb.0] {
                    seen[nb.0] = true;
                    reached += 1;
                    stack.push(nb);
                }
            }
        }
        reached == self.alive.len()
    }

    /// Checks symmetry, absence of self-loops and that every endpoint is alive.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (a, set) in self.adjacency.iter().enumerate() {
            let Some(set) = set else { continue };
            for &b in set {
                if b.0 == a {
                    return Err(format!("self-loop at {a}"));
                }
                match self.neighbors(b) {
                    None => return Err(format!("edge {a}-{b} to departed node")),
                    Some(back) if !back.contains(&NodeId(a)) => {
                        return Err(format!("asymmetric edge {a}-{b}"));
                    }
                    _ => {}
                }
            }
        }
        for (pos, id) in self.alive.iter().enumerate() {
            if self.slot[id.0] != pos || !self.is_alive(*id) {
                return Err(format!("alive index corrupt at {id}"));
            }
        }
        Ok(())
    }

    /// Writes one `a,b` line per edge, `a < b`, in ascending order.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, set) in self.adjacency.iter().enumerate() {
            for b in set.iter().flatten().filter(|b| b.0 > a) {
                writeln!(out, "{a},{b}")?;
            }
        }
        Ok(())
    }
}

/// Exponential degree law `P(k) = (1 - e^{-1/m}) e^{1 - k/m}` for `k >= m`.
pub fn exponential_degree_pmf(k: usize, m: usize) -> f64 {
    if k < m {
        return 0.0;
    }
    let m = m as f64;
    (1.0 - (-1.0 / m).exp()) * (1.0 - k as f64 / m).exp()
}

/// Closed form `e^{1 - 1/m} / (1 - e^{-1/m})` quoted alongside the
/// exponential law (about 6.871 for `m = 3`).
pub fn exponential_expected_degree(m: usize) -> f64 {
    let m = m as f64;
    (1.0 - 1.0 / m).exp() / (1.0 - (-1.0 / m).exp())
}
