//! The six MIS rule sets as data, plus the identifier-peeling reference MIS.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{conflict, pending, AgentState, Configuration, Status, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmName {
    #[serde(rename = "bMIS")]
    BMis,
    #[serde(rename = "vtMIS")]
    VtMis,
    #[serde(rename = "pfMIS")]
    PfMis,
    #[serde(rename = "dtMIS")]
    DtMis,
    #[serde(rename = "vpMIS")]
    VpMis,
    #[serde(rename = "dpMIS")]
    DpMis,
}

impl AlgorithmName {
    pub const ALL: [AlgorithmName; 6] = [
        AlgorithmName::BMis,
        AlgorithmName::VtMis,
        AlgorithmName::PfMis,
        AlgorithmName::DtMis,
        AlgorithmName::VpMis,
        AlgorithmName::DpMis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::BMis => "bMIS",
            AlgorithmName::VtMis => "vtMIS",
            AlgorithmName::PfMis => "pfMIS",
            AlgorithmName::DtMis => "dtMIS",
            AlgorithmName::VpMis => "vpMIS",
            AlgorithmName::DpMis => "dpMIS",
        }
    }

    /// Whether the algorithm compares identifiers or degrees to break symmetry.
    pub fn uses_ids(self) -> bool {
        matches!(self, AlgorithmName::VpMis | AlgorithmName::DpMis)
    }
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmName::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownAlgorithm(s.trim().to_string()))
    }
}

/// Which parameter stands in for a strategic probability when no game is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedParam {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbSource {
    Always,
    ParamP,
    ParamQ,
    ParamPc,
    /// Behavior strategy from the local game; `fixed` is used in fixed mode.
    Game { fixed: FixedParam },
}

/// What a rule does to the clustering, used by the deviation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// Writes `state := IN`.
    Enter,
    /// Writes `state := OUT` to resolve a conflict.
    Resolve,
    /// Writes `state := OUT` without a conflict.
    Withdraw,
    /// Writes only secondary variables.
    Bookkeeping,
}

impl RuleKind {
    pub fn writes_state(self) -> bool {
        !matches!(self, RuleKind::Bookkeeping)
    }
}

pub type Guard = fn(&Graph, &Configuration, NodeId) -> bool;
pub type Action = fn(&Graph, &Configuration, NodeId) -> AgentState;

#[derive(Clone, Copy)]
pub struct Rule {
    /// 1-based position in the listing.
    pub index: usize,
    pub guard: Guard,
    pub action: Action,
    pub prob: ProbSource,
    pub touches: &'static [Var],
    pub kind: RuleKind,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule")
            .field("index", &self.index)
            .field("prob", &self.prob)
            .field("touches", &self.touches)
            .field("kind", &self.kind)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerClass {
    Central,
    DistributedFair,
    DistributedUnfair,
}

#[derive(Debug, Clone)]
pub struct AlgorithmDescriptor {
    pub name: AlgorithmName,
    pub rules: Vec<Rule>,
    pub declared_vars: &'static [Var],
    pub required_scheduler: SchedulerClass,
}

impl AlgorithmDescriptor {
    pub fn rule(&self, index: usize) -> Option<&Rule> {
        index.checked_sub(1).and_then(|i| self.rules.get(i))
    }

    pub fn has_withdraw_rule(&self) -> bool {
        self.rules.iter().any(|r| r.kind == RuleKind::Withdraw)
    }
}

const STATE: &[Var] = &[Var::State];
const STATE_PARENT: &[Var] = &[Var::State, Var::Parent];
const STATE_PARENTS: &[Var] = &[Var::State, Var::Parents];
const PARENT: &[Var] = &[Var::Parent];
const PARENTS: &[Var] = &[Var::Parents];

fn set_state(c: &Configuration, v: NodeId, s: Status) -> AgentState {
    let mut next = c.states[v].clone();
    next.state = s;
    next
}

fn enter(_: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    set_state(c, v, Status::In)
}

fn leave(_: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    set_state(c, v, Status::Out)
}

fn g_pending(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    pending(g, c, v)
}

fn g_conflict(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    conflict(g, c, v)
}

fn in_neighbors<'a>(g: &'a Graph, c: &'a Configuration, v: NodeId) -> impl Iterator<Item = NodeId> + 'a {
    g.neighbors(v).iter().copied().filter(move |&w| c.is_in(w))
}

/// Pointer-based hesitation of the perturbation-proof algorithm.
pub fn hesitate_pf(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    let Some(w) = c.states[v].parent else {
        return false;
    };
    if !g.has_edge(v, w) {
        return false;
    }
    let s = &c.states;
    g.neighbors(v)
        .iter()
        .all(|&z| z == w || s[z].parent != Some(v))
        && g.neighbors(w).iter().all(|&u| {
            u == v || (!s[u].is_in() && (s[u].parent == Some(w) || s[u].parent.is_none()))
        })
        && (s[w].parent.is_none()
            || s[w].parent != Some(v)
            || g.id(w) < g.id(v)
            || g.neighbors(w)
                .iter()
                .any(|&y| y != v && s[y].parent == Some(w)))
}

/// Parent-set hesitation of the deflection-tolerant algorithm.
pub fn hesitate_dt(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    let s = &c.states;
    if s[v].parents.is_empty() {
        return false;
    }
    g.neighbors(v).iter().any(|&w| {
        s[v].has_parent(w)
            && g.neighbors(v)
                .iter()
                .all(|&z| z == w || !s[z].has_parent(v))
            && g.neighbors(w)
                .iter()
                .all(|&z| z == v || (!s[z].is_in() && s[z].has_parent(w)))
            && (!s[w].has_parent(v)
                || g.id(w) < g.id(v)
                || g.neighbors(w)
                    .iter()
                    .any(|&z| z != v && s[z].has_parent(w)))
    })
}

/// Degree-then-identifier priority of `v` over `w`.
pub fn cmp_priority(g: &Graph, v: NodeId, w: NodeId) -> bool {
    let (dv, dw) = (g.degree(v), g.degree(w));
    dv > dw || (dv == dw && g.id(v) < g.id(w))
}

pub fn conflict_star(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v)
        && g.neighbors(v)
            .iter()
            .any(|&w| c.is_in(w) && !cmp_priority(g, v, w))
}

pub fn liberated(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    g.neighbors(v)
        .iter()
        .any(|&w| c.is_in(w) && g.id(w) < g.id(v))
}

fn pf_r1(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    pending(g, c, v) && !hesitate_pf(g, c, v)
}

/// The unique IN neighbor of `v`, if exactly one exists.
fn sole_head(g: &Graph, c: &Configuration, v: NodeId) -> Option<NodeId> {
    let mut heads = in_neighbors(g, c, v);
    let first = heads.next()?;
    heads.next().is_none().then_some(first)
}

fn pf_r3(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v)
        && !g.neighbors(v).iter().any(|&u| pending(g, c, u))
        && sole_head(g, c, v).is_some_and(|w| c.states[v].parent != Some(w))
}

fn pf_r3_act(g: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    next.parent = sole_head(g, c, v);
    next
}

fn pf_r4(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v) && in_neighbors(g, c, v).nth(1).is_some() && c.states[v].parent.is_some()
}

fn pf_r5(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v) && !conflict(g, c, v) && c.states[v].parent.is_some()
}

fn clear_parent(_: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    next.parent = None;
    next
}

fn dt_r1(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    pending(g, c, v) && !hesitate_dt(g, c, v)
}

fn dt_stale_parent(g: &Graph, c: &Configuration, v: NodeId) -> Option<NodeId> {
    c.states[v]
        .parents
        .iter()
        .copied()
        .find(|&w| g.has_edge(v, w) && !c.is_in(w) && !pending(g, c, w))
}

fn dt_r3(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v) && dt_stale_parent(g, c, v).is_some()
}

fn dt_r3_act(g: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    if let Some(w) = dt_stale_parent(g, c, v) {
        next.remove_parent(w);
    }
    next
}

fn dt_missing_head(g: &Graph, c: &Configuration, v: NodeId) -> Option<NodeId> {
    in_neighbors(g, c, v).find(|&w| !c.states[v].has_parent(w))
}

fn dt_r4(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v) && dt_missing_head(g, c, v).is_some()
}

fn dt_r4_act(g: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    if let Some(w) = dt_missing_head(g, c, v) {
        next.insert_parent(w);
    }
    next
}

fn dt_r5(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v) && !conflict(g, c, v) && !c.states[v].parents.is_empty()
}

fn clear_parents(_: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    next.parents.clear();
    next
}

fn dt_r6(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.states[v].parents.iter().any(|&w| !g.has_edge(v, w))
}

fn dt_r6_act(g: &Graph, c: &Configuration, v: NodeId) -> AgentState {
    let mut next = c.states[v].clone();
    next.parents.retain(|&w| g.has_edge(v, w));
    next
}

fn dt_r7(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v) && !conflict(g, c, v)
}

fn vp_r1(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    pending(g, c, v)
        && g.neighbors(v)
            .iter()
            .all(|&w| !pending(g, c, w) || cmp_priority(g, v, w))
}

fn vp_r2(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    conflict_star(g, c, v)
}

fn dp_r1(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    !c.is_in(v)
        && g.neighbors(v)
            .iter()
            .all(|&w| g.id(v) < g.id(w) || liberated(g, c, w))
}

fn dp_r2(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    c.is_in(v) && g.neighbors(v).iter().any(|&w| !liberated(g, c, w))
}

fn rule(index: usize, guard: Guard, action: Action, prob: ProbSource, touches: &'static [Var], kind: RuleKind) -> Rule {
    Rule {
        index,
        guard,
        action,
        prob,
        touches,
        kind,
    }
}

pub fn build(name: AlgorithmName) -> AlgorithmDescriptor {
    use ProbSource::*;
    use RuleKind::*;
    let strategic_p = Game { fixed: FixedParam::P };
    let (rules, declared_vars, required_scheduler) = match name {
        AlgorithmName::BMis => (
            vec![
                rule(1, g_pending, enter, Always, STATE, Enter),
                rule(2, g_conflict, leave, Always, STATE, Resolve),
            ],
            STATE,
            SchedulerClass::Central,
        ),
        AlgorithmName::VtMis => (
            vec![
                rule(1, g_pending, enter, strategic_p, STATE, Enter),
                rule(2, g_conflict, leave, Always, STATE, Resolve),
            ],
            STATE,
            SchedulerClass::DistributedFair,
        ),
        AlgorithmName::PfMis => (
            vec![
                rule(1, pf_r1, enter, Always, STATE, Enter),
                rule(2, g_conflict, leave, Always, STATE, Resolve),
                rule(3, pf_r3, pf_r3_act, Always, PARENT, Bookkeeping),
                rule(4, pf_r4, clear_parent, Always, PARENT, Bookkeeping),
                rule(5, pf_r5, clear_parent, Always, PARENT, Bookkeeping),
            ],
            STATE_PARENT,
            SchedulerClass::Central,
        ),
        AlgorithmName::DtMis => (
            vec![
                rule(1, dt_r1, enter, strategic_p, STATE, Enter),
                rule(2, g_conflict, leave, Always, STATE, Resolve),
                rule(3, dt_r3, dt_r3_act, Always, PARENTS, Bookkeeping),
                rule(4, dt_r4, dt_r4_act, Always, PARENTS, Bookkeeping),
                rule(5, dt_r5, clear_parents, Always, PARENTS, Bookkeeping),
                rule(6, dt_r6, dt_r6_act, Always, PARENTS, Bookkeeping),
                rule(7, dt_r7, leave, Game { fixed: FixedParam::Q }, STATE, Withdraw),
            ],
            STATE_PARENTS,
            SchedulerClass::DistributedFair,
        ),
        AlgorithmName::VpMis => (
            vec![
                rule(1, vp_r1, enter, ParamPc, STATE, Enter),
                rule(2, vp_r2, leave, Always, STATE, Resolve),
            ],
            STATE,
            SchedulerClass::DistributedUnfair,
        ),
        AlgorithmName::DpMis => (
            vec![
                rule(1, dp_r1, enter, Always, STATE, Enter),
                rule(2, dp_r2, leave, Always, STATE, Resolve),
            ],
            STATE,
            SchedulerClass::DistributedUnfair,
        ),
    };
    AlgorithmDescriptor {
        name,
        rules,
        declared_vars,
        required_scheduler,
    }
}

pub fn build_named(name: &str) -> Result<AlgorithmDescriptor> {
    Ok(build(name.parse()?))
}

/// 1-based indices of the rules whose guards hold at `v`.
pub fn enabled_rules(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, v: NodeId) -> Vec<usize> {
    alg.rules
        .iter()
        .filter(|r| (r.guard)(g, c, v))
        .map(|r| r.index)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameMode {
    Game,
    Fixed,
}

/// Parameters that resolve every probability source except a live game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbContext {
    pub mode: GameMode,
    /// Entry probability of strategic entry rules in fixed mode.
    pub p: f64,
    /// Overrides `epsilon` as the withdrawal probability in fixed mode.
    pub q: Option<f64>,
    pub epsilon: f64,
    pub p_c: f64,
    /// Game-derived probability for the rule being executed, when in game mode.
    pub game: Option<f64>,
}

impl Default for ProbContext {
    fn default() -> Self {
        ProbContext {
            mode: GameMode::Fixed,
            p: 1.0,
            q: None,
            epsilon: 0.1,
            p_c: 1.0,
            game: None,
        }
    }
}

impl ProbContext {
    pub fn with_game(self, p: f64) -> Self {
        ProbContext {
            game: Some(p),
            ..self
        }
    }

    /// Withdrawal probability of a cluster-head when no game is solved:
    /// positive only if leaving would leave some neighbor pending without
    /// hesitation.
    pub fn withdraw_probability(&self, g: &Graph, c: &Configuration, v: NodeId) -> f64 {
        let q = self.q.unwrap_or(self.epsilon);
        if q > 0.0 && withdrawal_exposes_neighbor(g, c, v) {
            q
        } else {
            0.0
        }
    }

    /// Probability for rules that do not need a game solve, `None` otherwise.
    pub fn static_probability(&self, rule: &Rule, g: &Graph, c: &Configuration, v: NodeId) -> Option<f64> {
        match rule.prob {
            ProbSource::Always => Some(1.0),
            ProbSource::ParamP => Some(self.p),
            ProbSource::ParamQ => Some(self.withdraw_probability(g, c, v)),
            ProbSource::ParamPc => Some(self.p_c),
            ProbSource::Game { fixed } => match (self.mode, fixed) {
                (GameMode::Game, _) => self.game,
                (GameMode::Fixed, FixedParam::P) => Some(self.p),
                (GameMode::Fixed, FixedParam::Q) => Some(self.withdraw_probability(g, c, v)),
            },
        }
    }

    pub fn probability(&self, rule: &Rule, g: &Graph, c: &Configuration, v: NodeId) -> Result<f64> {
        self.static_probability(rule, g, c, v).ok_or_else(|| {
            Error::Contract(format!(
                "rule R{} at agent {v} needs a game-derived probability",
                rule.index
            ))
        })
    }
}

/// Whether `rule`, enabled at `v`, can fire. In game mode entries always can
/// and a strategic withdrawal can only while it would expose a neighbor.
pub fn positive_probability(rule: &Rule, g: &Graph, c: &Configuration, v: NodeId, ctx: &ProbContext) -> bool {
    match (rule.prob, ctx.mode) {
        (ProbSource::Game { .. }, GameMode::Game) => match rule.kind {
            RuleKind::Withdraw => withdrawal_exposes_neighbor(g, c, v),
            _ => true,
        },
        _ => ctx.static_probability(rule, g, c, v).unwrap_or(0.0) > 0.0,
    }
}

/// Whether some neighbor of head `v` would be pending and not hesitating if
/// `v` left the independent set.
pub fn withdrawal_exposes_neighbor(g: &Graph, c: &Configuration, v: NodeId) -> bool {
    let exposed: Vec<NodeId> = g
        .neighbors(v)
        .iter()
        .copied()
        .filter(|&w| !c.is_in(w) && g.neighbors(w).iter().all(|&x| x == v || !c.is_in(x)))
        .collect();
    if exposed.is_empty() {
        return false;
    }
    let mut hypo = c.clone();
    hypo.states[v].state = Status::Out;
    exposed.into_iter().any(|w| !hesitate_dt(g, &hypo, w))
}

/// Runs one enabled rule: draws against its probability and, on success,
/// returns the rewritten state of `v`.
pub fn execute(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    v: NodeId,
    rule_index: usize,
    ctx: &ProbContext,
    rng: &mut impl Rng,
) -> Result<(AgentState, bool)> {
    let rule = alg
        .rule(rule_index)
        .ok_or_else(|| Error::Contract(format!("{} has no rule R{rule_index}", alg.name)))?;
    if !(rule.guard)(g, c, v) {
        return Err(Error::Contract(format!(
            "rule R{rule_index} is not enabled at agent {v}"
        )));
    }
    let p = ctx.probability(rule, g, c, v)?;
    let fire = p >= 1.0 || (p > 0.0 && rng.gen::<f64>() < p);
    if fire {
        Ok(((rule.action)(g, c, v), true))
    } else {
        Ok((c.states[v].clone(), false))
    }
}

/// Repeatedly takes every node whose identifier is smaller than all its
/// remaining neighbors', then drops them and their neighbors.
pub fn reference_unique_mis(g: &Graph) -> Vec<NodeId> {
    let n = g.n();
    let mut alive = vec![true; n];
    let mut chosen = Vec::new();
    while alive.iter().any(|&a| a) {
        let picks: Vec<NodeId> = (0..n)
            .filter(|&v| {
                alive[v]
                    && g.neighbors(v)
                        .iter()
                        .all(|&w| !alive[w] || g.id(v) < g.id(w))
            })
            .collect();
        for &v in &picks {
            alive[v] = false;
            for &w in g.neighbors(v) {
                alive[w] = false;
            }
        }
        chosen.extend(picks);
    }
    chosen.sort_unstable();
    chosen
}
