//! Selfish deviations: skipped entries, faults in legitimate
//! configurations, and unauthorized exits of cluster-heads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgorithmDescriptor, ProbSource, Rule, RuleKind};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{conflict, has_in_neighbor, Configuration, Status, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviationKind {
    None,
    Violation,
    Perturbation,
    Deflection,
}

impl FromStr for DeviationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(DeviationKind::None),
            "violation" => Ok(DeviationKind::Violation),
            "perturbation" => Ok(DeviationKind::Perturbation),
            "deflection" => Ok(DeviationKind::Deflection),
            other => Err(Error::InvalidParameter(format!("unknown deviation kind `{other}`"))),
        }
    }
}

impl fmt::Display for DeviationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeviationKind::None => "none",
            DeviationKind::Violation => "violation",
            DeviationKind::Perturbation => "perturbation",
            DeviationKind::Deflection => "deflection",
        };
        f.write_str(s)
    }
}

/// When a selfish agent takes a deviation open to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeviationPolicy {
    Always,
    Probability(f64),
    /// Only when a local look-ahead says the agent ends up a covered member.
    Utility,
}

impl FromStr for DeviationPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "always" => Ok(DeviationPolicy::Always),
            "probability" => Ok(DeviationPolicy::Probability(0.5)),
            "utility" => Ok(DeviationPolicy::Utility),
            other => Err(Error::InvalidParameter(format!("unknown deviation policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationModel {
    pub kind: DeviationKind,
    pub policy: DeviationPolicy,
}

impl Default for DeviationModel {
    fn default() -> Self {
        DeviationModel::none()
    }
}

impl DeviationModel {
    pub fn none() -> Self {
        DeviationModel {
            kind: DeviationKind::None,
            policy: DeviationPolicy::Utility,
        }
    }

    pub fn new(kind: DeviationKind, policy: DeviationPolicy) -> Result<Self> {
        if let DeviationPolicy::Probability(w) = policy {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!("deviation.w must lie in [0, 1], got {w}")));
            }
        }
        Ok(DeviationModel { kind, policy })
    }

    pub fn skips_entries(&self) -> bool {
        matches!(self.kind, DeviationKind::Violation | DeviationKind::Deflection)
    }

    pub fn exits_without_rule(&self) -> bool {
        self.kind == DeviationKind::Deflection
    }

    pub fn perturbs(&self) -> bool {
        self.kind == DeviationKind::Perturbation
    }
}

/// A single-variable fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub agent: NodeId,
    pub variable: Var,
    pub before: String,
    pub after: String,
    pub round: u64,
}

impl FaultEvent {
    pub fn csv_header() -> &'static str {
        "round,agent,variable,before,after"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.round,
            self.agent,
            self.variable.name(),
            self.before,
            self.after
        )
    }
}

/// Entry rules whose probability is not a behavior strategy can be skipped.
pub fn violation_prone(rule: &Rule) -> bool {
    rule.kind == RuleKind::Enter && !matches!(rule.prob, ProbSource::Game { .. })
}

/// Whether `v` executes an enabled entry rule. `draw` is uniform in [0, 1);
/// `rational` is consulted only by the utility policy.
pub fn apply_violation(policy: DeviationPolicy, draw: f64, rational: impl FnOnce() -> bool) -> bool {
    match policy {
        DeviationPolicy::Always => false,
        DeviationPolicy::Probability(w) => draw >= w,
        DeviationPolicy::Utility => !rational(),
    }
}

/// Whether any rule (of any probability) is enabled at some agent.
pub fn quiescent(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration) -> bool {
    (0..g.n()).all(|v| {
        alg.rules
            .iter()
            .all(|r| r.kind == RuleKind::Withdraw || !(r.guard)(g, c, v))
    })
}

/// Flips IN agent `v` to OUT in a legitimate configuration.
pub fn inject_perturbation(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    v: NodeId,
    round: u64,
) -> Result<(Configuration, FaultEvent)> {
    if v >= g.n() || !c.is_in(v) {
        return Err(Error::Injection(format!("agent {v} is not IN")));
    }
    if !crate::model::is_mis(g, c) || !quiescent(alg, g, c) {
        return Err(Error::Injection("configuration is not legitimate".into()));
    }
    let mut next = c.clone();
    next.states[v].state = Status::Out;
    let event = FaultEvent {
        agent: v,
        variable: Var::State,
        before: Status::In.symbol().to_string(),
        after: Status::Out.symbol().to_string(),
        round,
    };
    Ok((next, event))
}

/// Head `v` has a neighbor covered by `v` alone.
pub fn deflection_condition(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    if !c.is_in(v) || conflict(g, c, v) {
        return false;
    }
    g.neighbors(v)
        .iter()
        .any(|&w| !c.is_in(w) && g.neighbors(w).iter().all(|&x| x == v || !c.is_in(x)))
}

fn enabled(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, v: NodeId) -> bool {
    alg.rules.iter().any(|r| (r.guard)(g, c, v))
}

/// `v` is enabled and none of its neighbors is.
pub fn detect_dead_end(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, v: NodeId) -> bool {
    enabled(alg, g, c, v) && g.neighbors(v).iter().all(|&w| !enabled(alg, g, c, w))
}

/// Local look-ahead of a selfish agent: `v` refuses every entry rule (after
/// leaving first if `exit_first`), its 1-hop neighbors run honestly one at a
/// time in identifier order, the rest of the network stays frozen. True when
/// `v` ends OUT with an IN neighbor.
pub fn rational_refusal(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, v: NodeId, exit_first: bool) -> bool {
    let locality = g.locality(v, 1);
    let mut actors = locality.members.clone();
    actors.sort_by_key(|&u| g.id(u));
    let mut cfg = c.clone();
    if exit_first {
        cfg.states[v].state = Status::Out;
    }
    let cap = 8 * actors.len() * alg.rules.len() + 8;
    for _ in 0..cap {
        let next = actors.iter().copied().find_map(|u| {
            alg.rules
                .iter()
                .find(|r| {
                    r.kind != RuleKind::Withdraw && !(u == v && r.kind == RuleKind::Enter) && (r.guard)(g, &cfg, u)
                })
                .map(|r| (u, r))
        });
        let Some((u, rule)) = next else {
            break;
        };
        let state = (rule.action)(g, &cfg, u);
        cfg.states[u] = state;
    }
    !cfg.is_in(v) && has_in_neighbor(g, &cfg, v)
}
