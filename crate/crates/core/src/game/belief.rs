use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Action, JointType, TypeTransition};
use crate::error::{Error, Result};
use crate::graph::{Graph, Locality, NodeId};
use crate::model::{Configuration, Status};

/// Distribution over one boundary agent's type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeBelief {
    pub p_in: f64,
    pub p_out: f64,
    /// Set once the stabilization gate stops pushing this belief forward.
    pub stabilized: bool,
}

impl TypeBelief {
    pub fn from_out(p_out: f64) -> Self {
        let p_out = p_out.clamp(0.0, 1.0);
        TypeBelief {
            p_in: 1.0 - p_out,
            p_out,
            stabilized: false,
        }
    }

    pub fn prob(&self, s: Status) -> f64 {
        match s {
            Status::In => self.p_in,
            Status::Out => self.p_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefState {
    entries: BTreeMap<NodeId, TypeBelief>,
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, u: NodeId, belief: TypeBelief) {
        self.entries.insert(u, belief);
    }

    pub fn get(&self, u: NodeId) -> Option<&TypeBelief> {
        self.entries.get(&u)
    }

    pub fn agents(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    /// Probability of type `s` for `u`; agents without a belief are uniform.
    pub fn prob(&self, u: NodeId, s: Status) -> f64 {
        self.entries.get(&u).map_or(0.5, |b| b.prob(s))
    }

    /// Bayes update of `u` after observing `observed`, where `model(θ, a)`
    /// is the probability of action `a` for type `θ`.
    pub fn posterior(&self, u: NodeId, observed: Action, model: impl Fn(Status, Action) -> f64) -> Result<BeliefState> {
        let prior = self.entries.get(&u).copied().unwrap_or_else(|| TypeBelief::from_out(0.5));
        let w_in = prior.p_in * model(Status::In, observed);
        let w_out = prior.p_out * model(Status::Out, observed);
        let total = w_in + w_out;
        if !(total > 0.0) {
            return Err(Error::BeliefContradiction { agent: u });
        }
        let mut next = self.clone();
        next.entries.insert(
            u,
            TypeBelief {
                p_in: w_in / total,
                p_out: w_out / total,
                stabilized: prior.stabilized,
            },
        );
        Ok(next)
    }

    /// One Markov step of `u`'s belief through `transition`, ungated.
    pub fn push_forward(&self, u: NodeId, transition: &TypeTransition) -> BeliefState {
        let prior = self.entries.get(&u).copied().unwrap_or_else(|| TypeBelief::from_out(0.5));
        let p_in = prior.p_in * transition.rows[0][0] + prior.p_out * transition.rows[1][0];
        let p_out = prior.p_in * transition.rows[0][1] + prior.p_out * transition.rows[1][1];
        let total = p_in + p_out;
        let mut next = self.clone();
        next.entries.insert(
            u,
            TypeBelief {
                p_in: p_in / total,
                p_out: p_out / total,
                stabilized: prior.stabilized,
            },
        );
        next
    }

    /// Pushes `u` forward only while its chance of keeping its type is below
    /// one half; otherwise marks it stabilized and leaves it unchanged.
    pub fn predict(&self, u: NodeId, transition: &TypeTransition) -> BeliefState {
        let prior = self.entries.get(&u).copied().unwrap_or_else(|| TypeBelief::from_out(0.5));
        if transition.stay_score(&prior) < 0.5 {
            self.push_forward(u, transition)
        } else {
            let mut next = self.clone();
            next.entries.insert(
                u,
                TypeBelief {
                    stabilized: true,
                    ..prior
                },
            );
            next
        }
    }
}

/// Prior over the types of `locality`'s boundary from the share of OUT
/// members and how many of each boundary agent's neighbors are in view.
pub fn initial_type_belief(g: &Graph, locality: &Locality, c: &Configuration) -> BeliefState {
    let size = locality.members.len() as f64;
    let outs = locality.members.iter().filter(|&&w| !c.is_in(w)).count() as f64;
    let p0 = outs / size;
    let degree_sum: usize = locality.members.iter().map(|&w| g.degree(w)).sum();
    let d_bar = (degree_sum as f64 / size).ceil() as i64;
    let mut belief = BeliefState::new();
    for &u in &locality.boundary {
        let shared = g
            .neighbors(u)
            .iter()
            .filter(|&&w| locality.distance(w).is_some_and(|d| d <= 1))
            .count() as i64;
        let exponent = (d_bar - shared).max(0);
        belief.set(u, TypeBelief::from_out(p0.powi(exponent as i32)));
    }
    belief
}

/// Product of the per-agent marginals.
pub fn joint_type_prob(belief: &BeliefState, theta: &JointType) -> f64 {
    theta
        .agents
        .iter()
        .zip(&theta.types)
        .map(|(&u, &s)| belief.prob(u, s))
        .product()
}
