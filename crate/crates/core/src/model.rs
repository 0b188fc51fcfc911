//! Agent states, configurations, the MIS predicates and the gain function.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    In,
    Out,
}

impl Status {
    pub fn flipped(self) -> Status {
        match self {
            Status::In => Status::Out,
            Status::Out => Status::In,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Status::In => 'I',
            Status::Out => 'O',
        }
    }
}

/// Variables an algorithm may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    State,
    Parent,
    Parents,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::State => "state",
            Var::Parent => "parent",
            Var::Parents => "parents",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub state: Status,
    /// Single cluster-head pointer; `None` is the undefined value.
    pub parent: Option<NodeId>,
    /// Sorted, duplicate-free set of cluster-head pointers.
    pub parents: Vec<NodeId>,
}

impl AgentState {
    pub fn new(state: Status) -> Self {
        AgentState {
            state,
            parent: None,
            parents: Vec::new(),
        }
    }

    pub fn is_in(&self) -> bool {
        self.state == Status::In
    }

    pub fn has_parent(&self, w: NodeId) -> bool {
        self.parents.binary_search(&w).is_ok()
    }

    pub fn insert_parent(&mut self, w: NodeId) {
        if let Err(pos) = self.parents.binary_search(&w) {
            self.parents.insert(pos, w);
        }
    }

    pub fn remove_parent(&mut self, w: NodeId) {
        if let Ok(pos) = self.parents.binary_search(&w) {
            self.parents.remove(pos);
        }
    }

    /// Whether `self` and `other` agree on every variable in `vars`.
    pub fn agrees(&self, other: &AgentState, vars: &[Var]) -> bool {
        vars.iter().all(|v| match v {
            Var::State => self.state == other.state,
            Var::Parent => self.parent == other.parent,
            Var::Parents => self.parents == other.parents,
        })
    }

    /// Variables in `vars` on which `self` and `other` differ.
    pub fn changed_vars(&self, other: &AgentState, vars: &[Var]) -> Vec<Var> {
        vars.iter()
            .copied()
            .filter(|&v| !self.agrees(other, &[v]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub states: Vec<AgentState>,
}

impl Configuration {
    pub fn uniform(n: usize, state: Status) -> Self {
        Configuration {
            states: vec![AgentState::new(state); n],
        }
    }

    pub fn all_out(n: usize) -> Self {
        Self::uniform(n, Status::Out)
    }

    pub fn from_in_set(n: usize, heads: &[NodeId]) -> Self {
        let mut c = Self::all_out(n);
        for &h in heads {
            c.states[h].state = Status::In;
        }
        c
    }

    /// Parses a state pattern such as `"IOI"`.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let states = pattern
            .chars()
            .map(|ch| match ch {
                'I' => Ok(AgentState::new(Status::In)),
                'O' => Ok(AgentState::new(Status::Out)),
                other => Err(Error::InvalidParameter(format!("bad state symbol `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration { states })
    }

    /// State-only configuration whose IN-set is the set bits of `mask`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Configuration {
            states: (0..n)
                .map(|v| {
                    AgentState::new(if mask >> v & 1 == 1 {
                        Status::In
                    } else {
                        Status::Out
                    })
                })
                .collect(),
        }
    }

    /// IN-set as a bit mask; only meaningful for `n <= 64`.
    pub fn in_mask(&self) -> u64 {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_in())
            .fold(0, |m, (v, _)| m | 1 << v)
    }

    /// Arbitrary initial configuration: states, parent pointers and parent
    /// sets drawn uniformly, pointers restricted to neighbors.
    pub fn random(g: &Graph, rng: &mut impl Rng) -> Self {
        let states = (0..g.n())
            .map(|v| {
                let state = if rng.gen_bool(0.5) { Status::In } else { Status::Out };
                let nbrs = g.neighbors(v);
                let parent = if nbrs.is_empty() || rng.gen_bool(0.5) {
                    None
                } else {
                    Some(nbrs[rng.gen_range(0..nbrs.len())])
                };
                let parents = nbrs.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
                AgentState {
                    state,
                    parent,
                    parents,
                }
            })
            .collect();
        Configuration { states }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn is_in(&self, v: NodeId) -> bool {
        self.states[v].is_in()
    }

    pub fn status(&self, v: NodeId) -> Status {
        self.states[v].state
    }

    pub fn in_set(&self) -> Vec<NodeId> {
        (0..self.n()).filter(|&v| self.is_in(v)).collect()
    }

    /// One `I`/`O` per node, then `|parent` and/or `|parents` sections for the
    /// declared secondary variables. `_` marks an undefined pointer or empty set.
    pub fn serialize(&self, vars: &[Var]) -> String {
        let mut out: String = self.states.iter().map(|s| s.state.symbol()).collect();
        if vars.contains(&Var::Parent) {
            let parts: Vec<String> = self
                .states
                .iter()
                .map(|s| s.parent.map_or("_".to_string(), |p| p.to_string()))
                .collect();
            let _ = write!(out, "|{}", parts.join(","));
        }
        if vars.contains(&Var::Parents) {
            let parts: Vec<String> = self
                .states
                .iter()
                .map(|s| {
                    if s.parents.is_empty() {
                        "_".to_string()
                    } else {
                        s.parents
                            .iter()
                            .map(usize::to_string)
                            .collect::<Vec<_>>()
                            .join("+")
                    }
                })
                .collect();
            let _ = write!(out, "|{}", parts.join(","));
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Configuration::serialize`].
    pub fn digest(&self, vars: &[Var]) -> String {
        let hash = Sha256::digest(self.serialize(vars).as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn agrees(&self, other: &Configuration, vars: &[Var]) -> bool {
        self.n() == other.n()
            && self
                .states
                .iter()
                .zip(&other.states)
                .all(|(a, b)| a.agrees(b, vars))
    }

    /// Copy that keeps only the declared variables; the rest are reset.
    pub fn projected(&self, vars: &[Var]) -> Configuration {
        let states = self
            .states
            .iter()
            .map(|s| AgentState {
                state: s.state,
                parent: if vars.contains(&Var::Parent) { s.parent } else { None },
                parents: if vars.contains(&Var::Parents) {
                    s.parents.clone()
                } else {
                    Vec::new()
                },
            })
            .collect();
        Configuration { states }
    }
}

/// Reward for being clustered and cost of being a cluster-head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub theta: f64,
    pub zeta: f64,
}

impl GainParams {
    pub fn new(theta: f64, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < theta) {
            return Err(Error::InvalidParameter(format!(
                "gain needs 0 < zeta < theta (theta={theta}, zeta={zeta})"
            )));
        }
        Ok(GainParams { theta, zeta })
    }

    /// Gain for an agent given its own status and whether any neighbor is IN.
    pub fn value(&self, state: Status, covered: bool) -> f64 {
        match (state, covered) {
            (Status::In, _) => self.theta - self.zeta,
            (Status::Out, true) => self.theta,
            (Status::Out, false) => 0.0,
        }
    }
}

impl Default for GainParams {
    fn default() -> Self {
        GainParams {
            theta: 10.0,
            zeta: 1.0,
        }
    }
}

pub fn has_in_neighbor(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    g.neighbors(v).iter().any(|&w| c.is_in(w))
}

pub fn pending(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v) && !has_in_neighbor(g, c, v)
}

pub fn conflict(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v) && has_in_neighbor(g, c, v)
}

pub fn is_independent(g: &Graph, c: &Configuration) -> bool {
    (0..g.n()).all(|v| !conflict(g, c, v))
}

pub fn is_mis(g: &Graph, c: &Configuration) -> bool {
    is_independent(g, c) && (0..g.n()).all(|v| c.is_in(v) || has_in_neighbor(g, c, v))
}

/// No conflict and no pending agent anywhere.
pub fn system_property(g: &Graph, c: &Configuration) -> bool {
    (0..g.n()).all(|v| !conflict(g, c, v) && !pending(g, c, v))
}

pub fn gain(g: &Graph, c: &Configuration, v: NodeId, params: &GainParams) -> f64 {
    params.value(c.status(v), has_in_neighbor(g, c, v))
}

pub fn gains(g: &Graph, c: &Configuration, params: &GainParams) -> Vec<f64> {
    (0..g.n()).map(|v| gain(g, c, v, params)).collect()
}

/// Every maximal independent set of a small graph, as IN-set masks.
pub fn all_mis_masks(g: &Graph) -> Vec<u64> {
    assert!(g.n() <= 20, "exhaustive MIS enumeration is for small graphs");
    (0u64..1 << g.n())
        .filter(|&m| is_mis(g, &Configuration::from_mask(g.n(), m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3(pattern: &str) -> (Graph, Configuration) {
        (Graph::path(3), Configuration::from_pattern(pattern).unwrap())
    }

    #[test]
    fn pending_examples() {
        let (g, c) = p3("OOO");
        assert!(pending(&g, &c, 1));
        let (g, c) = p3("IOO");
        assert!(!pending(&g, &c, 1));
        let k3 = Graph::complete(3);
        let c = Configuration::from_pattern("IOO").unwrap();
        assert!((0..3).all(|v| !pending(&k3, &c, v)));
    }

    #[test]
    fn conflict_examples() {
        let g = Graph::path(2);
        let c = Configuration::from_pattern("II").unwrap();
        assert!(conflict(&g, &c, 0) && conflict(&g, &c, 1));
        let (g, c) = p3("IOI");
        assert!(!conflict(&g, &c, 0));
        let (g, c) = p3("OOO");
        assert!((0..3).all(|v| !conflict(&g, &c, v)));
    }

    #[test]
    fn mis_examples() {
        assert!(is_mis(&p3("IOI").0, &p3("IOI").1));
        assert!(is_mis(&p3("OIO").0, &p3("OIO").1));
        assert!(!is_mis(&p3("IOO").0, &p3("IOO").1));
    }

    #[test]
    fn gain_examples() {
        let params = GainParams::default();
        let (g, c) = p3("IOO");
        assert_eq!(gain(&g, &c, 1, &params), 10.0);
        assert_eq!(gain(&g, &c, 0, &params), 9.0);
        assert_eq!(gain(&g, &c, 2, &params), 0.0);
        assert!(GainParams::new(1.0, 1.0).is_err());
        assert!(GainParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn system_property_examples() {
        let (g, c) = p3("IOI");
        assert!(system_property(&g, &c));
        let (g, c) = p3("OOO");
        assert!(!system_property(&g, &c));
        let (g, c) = p3("IIO");
        assert!(!system_property(&g, &c));
    }

    #[test]
    fn serialization_covers_declared_variables_only() {
        let mut c = Configuration::from_pattern("IOO").unwrap();
        c.states[1].parent = Some(0);
        c.states[2].parents = vec![0, 1];
        assert_eq!(c.serialize(&[Var::State]), "IOO");
        assert_eq!(c.serialize(&[Var::State, Var::Parent]), "IOO|_,0,_");
        assert_eq!(c.serialize(&[Var::State, Var::Parents]), "IOO|_,_,0+1");
        let plain = Configuration::from_pattern("IOO").unwrap();
        assert_eq!(c.digest(&[Var::State]), plain.digest(&[Var::State]));
        assert_ne!(
            c.digest(&[Var::State, Var::Parent]),
            plain.digest(&[Var::State, Var::Parent])
        );
    }
}
