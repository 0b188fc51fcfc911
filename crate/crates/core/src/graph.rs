//! Undirected connected topologies with unique identifiers.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

pub type NodeId = usize;

/// Attempts allowed before Erdős–Rényi generation gives up on connectivity.
pub const ER_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    ids: Vec<u64>,
}

impl Graph {
    /// Builds a graph from an edge list, validating every invariant.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)], ids: Vec<u64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        if ids.len() != n {
            return Err(Error::InvalidParameter(format!(
                "expected {n} identifiers, got {}",
                ids.len()
            )));
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!("edge {u}-{v} out of range")));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop at {u}")));
            }
            adjacency[u].insert(v);
            adjacency[v].insert(u);
        }
        let distinct: BTreeSet<u64> = ids.iter().copied().collect();
        if distinct.len() != n {
            return Err(Error::InvalidParameter("identifiers must be distinct".into()));
        }
        let g = Graph {
            adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
            ids,
        };
        if !g.is_connected() {
            return Err(Error::InvalidParameter("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Same as [`Graph::from_edges`] with identifiers `1..=n` in index order.
    pub fn with_sequential_ids(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        Self::from_edges(n, edges, (1..=n as u64).collect())
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::with_sequential_ids(n, &edges).expect("path is valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs three nodes");
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Self::with_sequential_ids(n, &edges).expect("cycle is valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Self::with_sequential_ids(n, &edges).expect("complete graph is valid")
    }

    /// Star with node 0 as center.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
        Self::with_sequential_ids(leaves + 1, &edges).expect("star is valid")
    }

    pub fn with_ids(&self, ids: Vec<u64>) -> Result<Self> {
        Self::from_edges(self.n(), &self.edges(), ids)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn id(&self, v: NodeId) -> u64 {
        self.ids[v]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, adj) in self.adjacency.iter().enumerate() {
            for &v in adj {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Breadth-first distances from `source`; `usize::MAX` marks unreachable nodes.
    pub fn distances_from(&self, source: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(|&d| d != usize::MAX)
    }

    pub fn diameter(&self) -> usize {
        (0..self.n())
            .map(|v| self.distances_from(v).into_iter().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Nodes within `k` hops of `v`, with the nodes at exactly `k` hops as boundary.
    pub fn locality(&self, v: NodeId, k: usize) -> Locality {
        let mut dist: Vec<(NodeId, usize)> = vec![(v, 0)];
        let mut seen = vec![false; self.n()];
        seen[v] = true;
        let mut frontier = vec![v];
        for d in 1..=k {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                        dist.push((w, d));
                    }
                }
            }
            frontier = next;
        }
        dist.sort_unstable();
        let members: Vec<NodeId> = dist.iter().map(|&(u, _)| u).collect();
        let distances: Vec<usize> = dist.iter().map(|&(_, d)| d).collect();
        let boundary = dist
            .iter()
            .filter(|&&(_, d)| d == k)
            .map(|&(u, _)| u)
            .collect();
        let mut induced_edges = Vec::new();
        for &u in &members {
            for &w in &self.adjacency[u] {
                if u < w && seen[w] {
                    induced_edges.push((u, w));
                }
            }
        }
        Locality {
            focal: v,
            radius: k,
            members,
            distances,
            boundary,
            induced_edges,
        }
    }

    /// Text form: `n <count>`, one `u v` line per edge, then `ids` and the identifiers.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out.push_str("ids\n");
        let ids: Vec<String> = self.ids.iter().map(u64::to_string).collect();
        out.push_str(&ids.join(" "));
        out.push('\n');
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (first_no, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty edge list".into(),
        })?;
        let n = first
            .strip_prefix("n ")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                line: first_no,
                message: format!("expected `n <count>`, found `{first}`"),
            })?;
        let mut edges = Vec::new();
        let mut ids = Vec::new();
        let mut in_ids = false;
        for (no, line) in lines {
            if in_ids {
                for tok in line.split_whitespace() {
                    ids.push(tok.parse::<u64>().map_err(|_| Error::Parse {
                        line: no,
                        message: format!("bad identifier `{tok}`"),
                    })?);
                }
                continue;
            }
            if line == "ids" {
                in_ids = true;
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
                _ => None,
            };
            let edge = parsed.ok_or_else(|| Error::Parse {
                line: no,
                message: format!("expected `u v`, found `{line}`"),
            })?;
            edges.push(edge);
        }
        if !in_ids {
            ids = (1..=n as u64).collect();
        }
        Self::from_edges(n, &edges, ids)
    }
}

/// The `k`-hop neighborhood of a focal node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locality {
    pub focal: NodeId,
    pub radius: usize,
    /// Sorted node indices within `radius` hops.
    pub members: Vec<NodeId>,
    /// Hop distance of each entry of `members`.
    pub distances: Vec<usize>,
    /// Sorted node indices at exactly `radius` hops.
    pub boundary: Vec<NodeId>,
    pub induced_edges: Vec<(NodeId, NodeId)>,
}

impl Locality {
    pub fn contains(&self, v: NodeId) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn position(&self, v: NodeId) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }

    pub fn distance(&self, v: NodeId) -> Option<usize> {
        self.position(v).map(|i| self.distances[i])
    }
}

fn random_ids(n: usize, rng: &mut impl Rng) -> Vec<u64> {
    let mut ids: Vec<u64> = (1..=n as u64).collect();
    ids.shuffle(rng);
    ids
}

/// Preferential attachment grown from a complete graph on `m + 1` nodes.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m < 1 || n < m + 1 {
        return Err(Error::InvalidParameter(format!(
            "preferential attachment needs m >= 1 and n >= m + 1 (n={n}, m={m})"
        )));
    }
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    // Each node appears once per incident edge, so uniform picks are degree-weighted.
    let mut endpoints: Vec<NodeId> = Vec::new();
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for new in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(endpoints[rng.gen_range(0..endpoints.len())]);
        }
        for t in targets {
            edges.push((t, new));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    let ids = random_ids(n, &mut rng);
    Graph::from_edges(n, &edges, ids)
}

/// Maps a target average degree onto the attachment count, `m = d / 2` (at least 1).
pub fn ba_attachment_for_degree(avg_degree: f64) -> usize {
    ((avg_degree / 2.0).round() as usize).max(1)
}

/// Erdős–Rényi `G(n, p)`, regenerated with derived seeds until connected.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 || !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "G(n, p) needs n >= 2 and 0 < p <= 1 (n={n}, p={p})"
        )));
    }
    for attempt in 0..ER_MAX_ATTEMPTS {
        let mut rng = seeded(derive_seed(seed, &[attempt as u64]));
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let ids = random_ids(n, &mut rng);
        if let Ok(g) = Graph::from_edges(n, &edges, ids) {
            return Ok(g);
        }
    }
    Err(Error::Generation {
        attempts: ER_MAX_ATTEMPTS,
        reason: format!("no connected G({n}, {p}) found"),
    })
}

/// `ln n / ln ln n`, the usual diameter estimate for scale-free graphs.
pub fn estimate_diameter(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "diameter estimate needs n >= 3, got {n}"
        )));
    }
    let ln = (n as f64).ln();
    Ok(ln / ln.ln())
}

/// All connected graphs on `n` nodes up to isomorphism, identifiers `1..=n`.
///
/// Brute force over edge subsets with a canonical form by permutation, so
/// keep `n <= 6`.
pub fn connected_catalog(n: usize) -> Vec<Graph> {
    assert!((1..=6).contains(&n), "catalog supports 1..=6 nodes");
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    let perms = permutations(n);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<_> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        if edges.len() + 1 < n {
            continue;
        }
        let Ok(g) = Graph::with_sequential_ids(n, &edges) else {
            continue;
        };
        let canon = perms
            .iter()
            .map(|p| {
                let mut bits = 0u64;
                for &(u, v) in &edges {
                    let (a, b) = (p[u].min(p[v]), p[u].max(p[v]));
                    bits |= 1 << (a * n + b);
                }
                bits
            })
            .min()
            .unwrap_or(0);
        if seen.insert(canon) {
            out.push(g);
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ba_with_one_attachment_is_a_tree() {
        for seed in 0..20 {
            let g = generate_ba(3, 1, seed).unwrap();
            assert_eq!(g.n(), 3);
            assert_eq!(g.edge_count(), 2);
        }
    }

    #[test]
    fn ba_rejects_bad_parameters() {
        assert!(generate_ba(3, 0, 1).is_err());
        assert!(generate_ba(3, 3, 1).is_err());
        assert!(generate_ba(4, 3, 1).is_ok());
    }

    #[test]
    fn ba_is_deterministic() {
        assert_eq!(generate_ba(50, 2, 9).unwrap(), generate_ba(50, 2, 9).unwrap());
        assert_ne!(generate_ba(50, 2, 9).unwrap(), generate_ba(50, 2, 10).unwrap());
    }

    #[test]
    fn ba_mean_degree_tracks_twice_attachment() {
        let total: f64 = (0..100).map(|s| generate_ba(100, 4, s).unwrap().mean_degree()).sum();
        assert!((total / 100.0 - 8.0).abs() <= 0.5);
    }

    #[test]
    fn er_forced_cases() {
        let g = generate_er(2, 1.0, 3).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        let k5 = generate_er(5, 1.0, 3).unwrap();
        assert_eq!(k5.edge_count(), 10);
        assert_eq!(generate_er(30, 0.2, 5).unwrap(), generate_er(30, 0.2, 5).unwrap());
    }

    #[test]
    fn er_gives_up_when_connectivity_is_hopeless() {
        let err = generate_er(60, 1e-6, 1).unwrap_err();
        assert!(matches!(err, Error::Generation { attempts: ER_MAX_ATTEMPTS, .. }));
        assert!(generate_er(1, 0.5, 1).is_err());
        assert!(generate_er(4, 0.0, 1).is_err());
    }

    #[test]
    fn locality_on_paths_and_stars() {
        let p3 = Graph::path(3);
        let l = p3.locality(1, 1);
        assert_eq!(l.members, vec![0, 1, 2]);
        assert_eq!(l.boundary, vec![0, 2]);

        let p5 = Graph::path(5);
        let l = p5.locality(2, 2);
        assert_eq!(l.members, vec![0, 1, 2, 3, 4]);
        assert_eq!(l.boundary, vec![0, 4]);
        assert_eq!(l.induced_edges.len(), 4);

        let star = Graph::star(4);
        let l = star.locality(1, 2);
        assert_eq!(l.boundary, vec![2, 3, 4]);
        assert_eq!(l.distance(0), Some(1));
    }

    #[test]
    fn diameter_estimates() {
        assert!((estimate_diameter(15).unwrap() - 2.72).abs() < 0.01);
        assert!((estimate_diameter(100).unwrap() - 3.015).abs() < 0.01);
        assert!((estimate_diameter(3).unwrap() - 11.69).abs() < 0.02);
        assert!(estimate_diameter(2).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_ba(20, 2, 4).unwrap();
        let back = Graph::from_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn edge_list_errors_name_the_line() {
        let err = Graph::from_edge_list("n 3\n0 1\n1 x\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 3, message: "expected `u v`, found `1 x`".into() });
    }

    #[test]
    fn catalog_counts_match_known_sequence() {
        let counts: Vec<usize> = (1..=5).map(|n| connected_catalog(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 6, 21]);
    }
}
