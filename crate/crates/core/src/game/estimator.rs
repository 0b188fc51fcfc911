//! Estimates how a boundary agent's type evolves between stages by running
//! one randomized round on a regular surrogate network.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TypeBelief;
use crate::error::{Error, Result};
use crate::graph::{Graph, Locality, NodeId};
use crate::model::{Configuration, Status};
use crate::rng::{derive_seed, seeded};

/// Surrogates up to this size are enumerated exactly.
pub const EXACT_LIMIT: usize = 12;
/// Largest surrogate used for sampling, unless the degree needs more nodes.
pub const SAMPLED_LIMIT: usize = 24;

/// Row-stochastic matrix over types; index 0 is IN, 1 is OUT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeTransition {
    pub rows: [[f64; 2]; 2],
}

impl TypeTransition {
    pub fn identity() -> Self {
        TypeTransition {
            rows: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn prob(&self, from: Status, to: Status) -> f64 {
        self.rows[index(from)][index(to)]
    }

    /// Probability mass that keeps its type under `belief`.
    pub fn stay_score(&self, belief: &TypeBelief) -> f64 {
        self.rows[0][0] * belief.p_in + self.rows[1][1] * belief.p_out
    }
}

fn index(s: Status) -> usize {
    match s {
        Status::In => 0,
        Status::Out => 1,
    }
}

/// How surrogate agents act in the one simulated round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyOracle {
    /// Pending agents always try to enter.
    Myopic,
    /// Pending agents try to enter with the given probability.
    FixedP(f64),
}

impl PolicyOracle {
    fn entry(self) -> f64 {
        match self {
            PolicyOracle::Myopic => 1.0,
            PolicyOracle::FixedP(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    /// Indexed by the agent's own state before and after the round.
    pub table: [[TypeTransition; 2]; 2],
    pub nodes: usize,
    pub degree: usize,
    /// Set when the requested degree had no regular graph of that size.
    pub degree_fallback: bool,
    pub exact: bool,
}

impl TransitionEstimate {
    pub fn for_states(&self, before: Status, after: Status) -> &TypeTransition {
        &self.table[index(before)][index(after)]
    }
}

/// Circulant `degree`-regular graph on `nodes` vertices.
pub fn circulant(nodes: usize, degree: usize) -> Result<Graph> {
    if nodes == 0 || degree >= nodes || (nodes * degree) % 2 == 1 {
        return Err(Error::InvalidParameter(format!(
            "no {degree}-regular graph on {nodes} nodes"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..nodes {
        for k in 1..=degree / 2 {
            let j = (i + k) % nodes;
            edges.push((i.min(j), i.max(j)));
        }
        if degree % 2 == 1 && i < nodes / 2 {
            edges.push((i, i + nodes / 2));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let g = Graph::with_sequential_ids(nodes, &edges)?;
    debug_assert!((0..nodes).all(|v| g.degree(v) == degree));
    Ok(g)
}

/// Estimator inputs extracted from a locality.
fn surrogate_shape(g: &Graph, locality: &Locality, c: &Configuration) -> (usize, usize, f64) {
    let size = locality.members.len();
    let degree_sum: usize = locality.members.iter().map(|&w| g.degree(w)).sum();
    let d_bar = (degree_sum as f64 / size as f64).ceil() as usize;
    let outs = locality.members.iter().filter(|&&w| !c.is_in(w)).count();
    (size, d_bar, outs as f64 / size as f64)
}

/// Picks a feasible surrogate size and degree for `size` members of mean degree `d_bar`.
fn feasible(size: usize, d_bar: usize) -> (usize, usize, bool) {
    if size <= EXACT_LIMIT {
        let mut d = d_bar.min(size.saturating_sub(1));
        if (size * d) % 2 == 1 {
            d -= 1;
        }
        (size, d, d != d_bar)
    } else {
        let mut nodes = size.min(SAMPLED_LIMIT).max(d_bar + 1);
        if (nodes * d_bar) % 2 == 1 {
            nodes += 1;
        }
        (nodes, d_bar, false)
    }
}

/// Type transitions of a boundary agent of `locality`, estimated on a
/// regular surrogate; exact when the locality is small, else sampled.
pub fn type_transition_estimate(
    g: &Graph,
    locality: &Locality,
    c: &Configuration,
    policy: PolicyOracle,
    p_s: f64,
    samples: usize,
    seed: u64,
) -> Result<TransitionEstimate> {
    let (size, d_bar, p0) = surrogate_shape(g, locality, c);
    let (nodes, degree, fallback) = feasible(size, d_bar);
    let sampled = (size > EXACT_LIMIT).then_some(samples);
    let mut est = surrogate_estimate(nodes, degree, p0, policy, p_s, sampled, seed)?;
    est.degree_fallback = fallback;
    Ok(est)
}

/// The estimator on an explicit surrogate; `samples = None` enumerates
/// every initial configuration.
pub fn surrogate_estimate(
    nodes: usize,
    degree: usize,
    p0: f64,
    policy: PolicyOracle,
    p_s: f64,
    samples: Option<usize>,
    seed: u64,
) -> Result<TransitionEstimate> {
    let g = circulant(nodes, degree)?;
    // [st0][st1][tp0][tp1]
    let mut mass = [[[[0.0f64; 2]; 2]; 2]; 2];
    let mut states = vec![Status::Out; nodes];
    let exact = samples.is_none();
    match samples {
        None => {
            if nodes > EXACT_LIMIT {
                return Err(Error::BoundExceeded {
                    what: "surrogate nodes for enumeration",
                    limit: EXACT_LIMIT,
                    got: nodes,
                });
            }
            for mask in 0u32..1 << nodes {
                let mut weight = 1.0;
                for (v, s) in states.iter_mut().enumerate() {
                    *s = if mask >> v & 1 == 1 { Status::In } else { Status::Out };
                    weight *= if *s == Status::In { 1.0 - p0 } else { p0 };
                }
                if weight > 0.0 {
                    accumulate(&g, &states, weight, policy, p_s, &mut mass);
                }
            }
        }
        Some(count) => {
            if count == 0 {
                return Err(Error::InvalidParameter("estimator needs at least one sample".into()));
            }
            let mut rng = seeded(seed);
            let weight = 1.0 / count as f64;
            for _ in 0..count {
                for s in states.iter_mut() {
                    *s = if rng.gen::<f64>() < 1.0 - p0 { Status::In } else { Status::Out };
                }
                accumulate(&g, &states, weight, policy, p_s, &mut mass);
            }
        }
    }
    let mut table = [[TypeTransition::identity(); 2]; 2];
    for st0 in 0..2 {
        for st1 in 0..2 {
            for tp0 in 0..2 {
                let row = mass[st0][st1][tp0];
                let total = row[0] + row[1];
                if total > 0.0 {
                    table[st0][st1].rows[tp0] = [row[0] / total, row[1] / total];
                }
            }
        }
    }
    Ok(TransitionEstimate {
        table,
        nodes,
        degree,
        degree_fallback: false,
        exact,
    })
}

/// Adds the one-round outcome distribution seen by vertex 0. The surrogate
/// is vertex-transitive and the draw is iid, so every vertex contributes the
/// same ratio.
fn accumulate(
    g: &Graph,
    states: &[Status],
    weight: f64,
    policy: PolicyOracle,
    p_s: f64,
    mass: &mut [[[[f64; 2]; 2]; 2]; 2],
) {
    let has_in = |v: NodeId| g.neighbors(v).iter().any(|&w| states[w] == Status::In);
    let flip = |v: NodeId| match states[v] {
        Status::Out if !has_in(v) => p_s * policy.entry(),
        Status::In if has_in(v) => p_s,
        _ => 0.0,
    };
    let v = 0;
    let st0 = index(states[v]);
    let tp0 = if has_in(v) { 0 } else { 1 };
    let f = flip(v);
    let all_out: f64 = g
        .neighbors(v)
        .iter()
        .map(|&w| {
            let fw = flip(w);
            if states[w] == Status::In {
                fw
            } else {
                1.0 - fw
            }
        })
        .product();
    for (st1, p_st) in [(st0, 1.0 - f), (1 - st0, f)] {
        mass[st0][st1][tp0][0] += weight * p_st * (1.0 - all_out);
        mass[st0][st1][tp0][1] += weight * p_st * all_out;
    }
}

/// Memoizes estimates by surrogate shape and quantized OUT share.
#[derive(Debug, Clone)]
pub struct TransitionCache {
    pub policy: PolicyOracle,
    pub p_s: f64,
    pub samples: usize,
    pub seed: u64,
    entries: HashMap<(usize, usize, u64), TransitionEstimate>,
}

/// OUT shares are rounded to this many steps before lookup.
const SHARE_STEPS: f64 = 40.0;

impl TransitionCache {
    pub fn new(policy: PolicyOracle, p_s: f64, samples: usize, seed: u64) -> Self {
        TransitionCache {
            policy,
            p_s,
            samples,
            seed,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&mut self, g: &Graph, locality: &Locality, c: &Configuration) -> Result<&TransitionEstimate> {
        let (size, d_bar, p0) = surrogate_shape(g, locality, c);
        let (nodes, degree, fallback) = feasible(size, d_bar);
        let exact = size <= EXACT_LIMIT;
        let share = if exact {
            p0
        } else {
            (p0 * SHARE_STEPS).round() / SHARE_STEPS
        };
        let key = (nodes, degree, (share * 1e9).round() as u64 + if exact { 0 } else { 1 << 62 });
        if !self.entries.contains_key(&key) {
            let seed = derive_seed(self.seed, &[nodes as u64, degree as u64, key.2]);
            let samples = (!exact).then_some(self.samples);
            let mut est = surrogate_estimate(nodes, degree, share, self.policy, self.p_s, samples, seed)?;
            est.degree_fallback = fallback;
            self.entries.insert(key, est);
        }
        Ok(&self.entries[&key])
    }
}
