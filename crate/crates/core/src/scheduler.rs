//! Schedulers choosing which enabled agents act in a round.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::Configuration;
use crate::rng::{uniform, Purpose};

/// Cap on rejected empty draws; reaching it forces a single uniform pick.
const MAX_REDRAWS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerKind {
    Central,
    Synchronous,
    DistributedRandomized,
    Unfair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adversary {
    /// The single enabled agent with the largest identifier.
    MaxIdFirst,
    /// Every agent whose move would create a conflict, else as `MaxIdFirst`.
    MinProgress,
    /// The single enabled agent with the smallest identifier, one per round.
    WorstChain,
}

impl FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" => Ok(SchedulerKind::Central),
            "synchronous" | "sync" => Ok(SchedulerKind::Synchronous),
            "distributed" | "randomized" | "distributed_randomized" => {
                Ok(SchedulerKind::DistributedRandomized)
            }
            "unfair" => Ok(SchedulerKind::Unfair),
            other => Err(Error::InvalidParameter(format!("unknown scheduler kind `{other}`"))),
        }
    }
}

impl FromStr for Adversary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max-id-first" => Ok(Adversary::MaxIdFirst),
            "min-progress" => Ok(Adversary::MinProgress),
            "worst-chain" => Ok(Adversary::WorstChain),
            other => Err(Error::InvalidParameter(format!("unknown adversary `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    pub kind: SchedulerKind,
    pub p_s: f64,
    pub adversary: Adversary,
}

impl SchedulerPolicy {
    pub fn central() -> Self {
        Self::new(SchedulerKind::Central, 1.0, Adversary::MaxIdFirst).expect("valid")
    }

    pub fn synchronous() -> Self {
        Self::new(SchedulerKind::Synchronous, 1.0, Adversary::MaxIdFirst).expect("valid")
    }

    pub fn randomized(p_s: f64) -> Result<Self> {
        Self::new(SchedulerKind::DistributedRandomized, p_s, Adversary::MaxIdFirst)
    }

    pub fn unfair(adversary: Adversary) -> Self {
        Self::new(SchedulerKind::Unfair, 1.0, adversary).expect("valid")
    }

    pub fn new(kind: SchedulerKind, p_s: f64, adversary: Adversary) -> Result<Self> {
        if kind == SchedulerKind::DistributedRandomized && !(p_s > 0.0 && p_s <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scheduler.p_s must lie in (0, 1], got {p_s}"
            )));
        }
        Ok(SchedulerPolicy {
            kind,
            p_s,
            adversary,
        })
    }

    /// The per-agent selection probability the policy realizes.
    pub fn synchrony(&self) -> f64 {
        match self.kind {
            SchedulerKind::DistributedRandomized => self.p_s,
            _ => 1.0,
        }
    }
}

/// What an unfair adversary may inspect.
#[derive(Debug, Clone, Copy)]
pub struct AdversaryView<'a> {
    pub graph: &'a Graph,
    pub config: &'a Configuration,
    /// Whether each agent's priority rule would set it IN.
    pub entering: &'a [bool],
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub agents: Vec<NodeId>,
    /// Empty draws rejected before `agents` was drawn; each is an idle round.
    pub idle_rounds: u64,
}

/// Picks the acting agents among `enabled` (sorted, duplicate-free).
pub fn select(
    policy: &SchedulerPolicy,
    enabled: &[NodeId],
    round: u64,
    master: u64,
    view: Option<AdversaryView<'_>>,
) -> Selection {
    if enabled.is_empty() {
        return Selection::default();
    }
    match policy.kind {
        SchedulerKind::Synchronous => Selection {
            agents: enabled.to_vec(),
            idle_rounds: 0,
        },
        SchedulerKind::Central => {
            let u = uniform(master, Purpose::Scheduler, round, u64::MAX, 0);
            let pick = ((u * enabled.len() as f64) as usize).min(enabled.len() - 1);
            Selection {
                agents: vec![enabled[pick]],
                idle_rounds: 0,
            }
        }
        SchedulerKind::DistributedRandomized => {
            for attempt in 0..MAX_REDRAWS {
                let agents: Vec<NodeId> = enabled
                    .iter()
                    .copied()
                    .filter(|&v| {
                        uniform(master, Purpose::Scheduler, round, v as u64, attempt) < policy.p_s
                    })
                    .collect();
                if !agents.is_empty() {
                    return Selection {
                        agents,
                        idle_rounds: attempt,
                    };
                }
            }
            let u = uniform(master, Purpose::Scheduler, round, u64::MAX, MAX_REDRAWS);
            let pick = ((u * enabled.len() as f64) as usize).min(enabled.len() - 1);
            Selection {
                agents: vec![enabled[pick]],
                idle_rounds: MAX_REDRAWS,
            }
        }
        SchedulerKind::Unfair => Selection {
            agents: adversarial(policy.adversary, enabled, view),
            idle_rounds: 0,
        },
    }
}

fn adversarial(adversary: Adversary, enabled: &[NodeId], view: Option<AdversaryView<'_>>) -> Vec<NodeId> {
    let by_id = |pick_max: bool| -> Vec<NodeId> {
        let key = |&v: &NodeId| view.map_or(v as u64, |vw| vw.graph.id(v));
        let chosen = if pick_max {
            enabled.iter().copied().max_by_key(key)
        } else {
            enabled.iter().copied().min_by_key(key)
        };
        chosen.into_iter().collect()
    };
    match adversary {
        Adversary::MaxIdFirst => by_id(true),
        Adversary::WorstChain => by_id(false),
        Adversary::MinProgress => {
            let Some(vw) = view else {
                return by_id(true);
            };
            let clashing: Vec<NodeId> = enabled
                .iter()
                .copied()
                .filter(|&v| {
                    vw.entering[v]
                        && vw.graph.neighbors(v).iter().any(|&w| {
                            vw.config.is_in(w) || (vw.entering[w] && enabled.binary_search(&w).is_ok())
                        })
                })
                .collect();
            if clashing.is_empty() {
                by_id(true)
            } else {
                clashing
            }
        }
    }
}
