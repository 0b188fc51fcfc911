//! The local stochastic Bayesian game an agent solves over its 2-hop
//! neighborhood to pick the probabilities of its strategic rules.
//!
//! Members of the locality are addressed by their position in
//! [`Locality::members`]. Boundary members (distance 2) carry a hidden type:
//! whether some neighbor of theirs outside the 1-hop ball is IN.

mod belief;
mod estimator;
mod solve;

pub use belief::{initial_type_belief, joint_type_prob, BeliefState, TypeBelief};
pub use estimator::{
    circulant, type_transition_estimate, PolicyOracle, TransitionCache, TransitionEstimate, TypeTransition,
};
pub use solve::{hba_expected_payoff, rule_probability, solve_stage_bne, SolveMethod, SolveOutput, StrategyProfile};

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmName;
use crate::error::{Error, Result};
use crate::graph::{Graph, Locality, NodeId};
use crate::model::{Configuration, GainParams, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Switch,
    Preserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSet {
    Preserve,
    Switch,
    Both,
}

impl ActionSet {
    pub fn contains(self, a: Action) -> bool {
        matches!(
            (self, a),
            (ActionSet::Both, _) | (ActionSet::Switch, Action::Switch) | (ActionSet::Preserve, Action::Preserve)
        )
    }

    pub fn actions(self) -> &'static [Action] {
        match self {
            ActionSet::Preserve => &[Action::Preserve],
            ActionSet::Switch => &[Action::Switch],
            ActionSet::Both => &[Action::Switch, Action::Preserve],
        }
    }

    pub fn is_singleton(self) -> bool {
        self != ActionSet::Both
    }

    /// Switch probability of the uniform strategy over the set.
    pub fn uniform_switch(self) -> f64 {
        match self {
            ActionSet::Preserve => 0.0,
            ActionSet::Switch => 1.0,
            ActionSet::Both => 0.5,
        }
    }
}

/// Which action table the game uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameRules {
    /// Pending agents may enter; conflicting agents must leave.
    Entry,
    /// As `Entry`, and heads without conflict may also leave.
    EntryWithdraw,
}

impl GameRules {
    pub fn for_algorithm(name: AlgorithmName) -> Option<GameRules> {
        match name {
            AlgorithmName::VtMis => Some(GameRules::Entry),
            AlgorithmName::DtMis => Some(GameRules::EntryWithdraw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub delta: f64,
    pub horizon: usize,
    /// Members beyond this many (nearest first) are frozen.
    pub max_players: usize,
    /// Lower bound on game-derived entry probabilities.
    pub p_floor: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            delta: 0.88,
            horizon: 3,
            max_players: 5,
            p_floor: 0.01,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("game.delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.max_players == 0 || self.max_players > 12 {
            return Err(Error::InvalidParameter(format!(
                "game.max_players must lie in 1..=12, got {}",
                self.max_players
            )));
        }
        if !(0.0..=1.0).contains(&self.p_floor) {
            return Err(Error::InvalidParameter(format!("game.p_floor must lie in [0, 1], got {}", self.p_floor)));
        }
        Ok(())
    }
}

/// Types of boundary members, parallel to `agents`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointType {
    pub agents: Vec<NodeId>,
    pub types: Vec<Status>,
}

impl JointType {
    pub fn new(agents: Vec<NodeId>, types: Vec<Status>) -> Self {
        assert_eq!(agents.len(), types.len());
        JointType { agents, types }
    }

    pub fn get(&self, u: NodeId) -> Option<Status> {
        self.agents.iter().position(|&a| a == u).map(|i| self.types[i])
    }

    /// Every assignment over `agents`; bit `i` of the index set means IN.
    pub fn enumerate(agents: &[NodeId]) -> Result<Vec<JointType>> {
        if agents.len() > 20 {
            return Err(Error::BoundExceeded {
                what: "typed agents",
                limit: 20,
                got: agents.len(),
            });
        }
        Ok((0..1u32 << agents.len())
            .map(|bits| JointType {
                agents: agents.to_vec(),
                types: (0..agents.len())
                    .map(|i| if bits >> i & 1 == 1 { Status::In } else { Status::Out })
                    .collect(),
            })
            .collect())
    }
}

/// Actual type of boundary member `u`: IN iff a neighbor outside the focal
/// agent's 1-hop ball is IN.
pub fn true_type(g: &Graph, c: &Configuration, locality: &Locality, u: NodeId) -> Status {
    let inner = |w: NodeId| locality.distance(w).is_some_and(|d| d <= 1);
    if g.neighbors(u).iter().any(|&w| !inner(w) && c.is_in(w)) {
        Status::In
    } else {
        Status::Out
    }
}

/// The stage game seen by one agent.
#[derive(Debug, Clone)]
pub struct LocalGame {
    pub rules: GameRules,
    pub locality: Locality,
    /// States of members, by position.
    pub lambda: Vec<Status>,
    /// Members whose entry is suppressed (hesitating), by position.
    pub blocked: Vec<bool>,
    /// Positions of the members that act, focal first.
    pub players: Vec<usize>,
    pub gain_params: GainParams,
    pub p_s: f64,
    pub delta: f64,
    pub horizon: usize,
    /// Neighbors each member can see: all induced neighbors for inner
    /// members, only 1-hop members for boundary ones.
    view: Vec<Vec<usize>>,
}

impl LocalGame {
    /// Builds the game of `focal`; `blocked(v)` reports hesitation of `v`.
    pub fn build(
        g: &Graph,
        c: &Configuration,
        focal: NodeId,
        rules: GameRules,
        blocked: impl Fn(NodeId) -> bool,
        gain_params: GainParams,
        p_s: f64,
        cfg: &GameConfig,
    ) -> Result<LocalGame> {
        let locality = g.locality(focal, 2);
        let lambda = locality.members.iter().map(|&v| c.status(v)).collect();
        let blocked = locality.members.iter().map(|&v| blocked(v)).collect();
        let mut game = LocalGame::assemble(rules, locality, lambda, blocked, gain_params, p_s, cfg, g)?;
        game.players = game.default_players(cfg.max_players);
        Ok(game)
    }

    /// Builds a game whose players are given explicitly (as nodes).
    #[allow(clippy::too_many_arguments)]
    pub fn with_players(
        g: &Graph,
        c: &Configuration,
        focal: NodeId,
        rules: GameRules,
        players: &[NodeId],
        gain_params: GainParams,
        p_s: f64,
        cfg: &GameConfig,
    ) -> Result<LocalGame> {
        let locality = g.locality(focal, 2);
        let lambda = locality.members.iter().map(|&v| c.status(v)).collect();
        let blocked = vec![false; locality.members.len()];
        let mut game = LocalGame::assemble(rules, locality, lambda, blocked, gain_params, p_s, cfg, g)?;
        let mut positions = Vec::with_capacity(players.len());
        for &v in players {
            let pos = game
                .locality
                .position(v)
                .ok_or_else(|| Error::InvalidParameter(format!("player {v} is outside the locality")))?;
            positions.push(pos);
        }
        game.players = positions;
        Ok(game)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        rules: GameRules,
        locality: Locality,
        lambda: Vec<Status>,
        blocked: Vec<bool>,
        gain_params: GainParams,
        p_s: f64,
        cfg: &GameConfig,
        g: &Graph,
    ) -> Result<LocalGame> {
        cfg.validate()?;
        if !(p_s > 0.0 && p_s <= 1.0) {
            return Err(Error::InvalidParameter(format!("p_s must lie in (0, 1], got {p_s}")));
        }
        let view = locality
            .members
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let boundary = locality.distances[i] == locality.radius;
                g.neighbors(v)
                    .iter()
                    .filter_map(|&w| locality.position(w))
                    .filter(|&j| !boundary || locality.distances[j] < locality.radius)
                    .collect()
            })
            .collect();
        Ok(LocalGame {
            rules,
            locality,
            lambda,
            blocked,
            players: Vec::new(),
            gain_params,
            p_s,
            delta: cfg.delta,
            horizon: cfg.horizon,
            view,
        })
    }

    fn default_players(&self, cap: usize) -> Vec<usize> {
        let focal = self.focal_pos();
        let mut candidates: Vec<usize> = (0..self.n())
            .filter(|&i| i != focal && self.may_act(i))
            .collect();
        candidates.sort_by_key(|&i| (self.locality.distances[i], self.locality.members[i]));
        let mut players = vec![focal];
        players.extend(candidates.into_iter().take(cap.saturating_sub(1)));
        players
    }

    /// Whether some type assignment gives member `i` a non-Preserve action.
    fn may_act(&self, i: usize) -> bool {
        let visible_in = self.visible_in(&self.lambda, i);
        match self.lambda[i] {
            Status::In => self.rules == GameRules::EntryWithdraw || visible_in || self.is_boundary(i),
            Status::Out => !visible_in && !self.blocked[i],
        }
    }

    pub fn n(&self) -> usize {
        self.locality.members.len()
    }

    pub fn focal_pos(&self) -> usize {
        self.locality.position(self.locality.focal).expect("focal is a member")
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.locality.distances[i] == self.locality.radius
    }

    pub fn is_player(&self, i: usize) -> bool {
        self.players.contains(&i)
    }

    /// Boundary members that are players; only their types affect payoffs.
    pub fn typed_players(&self) -> Vec<NodeId> {
        let mut typed: Vec<NodeId> = self
            .players
            .iter()
            .filter(|&&i| self.is_boundary(i))
            .map(|&i| self.locality.members[i])
            .collect();
        typed.sort_unstable();
        typed
    }

    pub(crate) fn view(&self, i: usize) -> &[usize] {
        &self.view[i]
    }

    fn visible_in(&self, lambda: &[Status], i: usize) -> bool {
        self.view[i].iter().any(|&j| lambda[j] == Status::In)
    }

    fn pos(&self, v: NodeId) -> usize {
        self.locality
            .position(v)
            .unwrap_or_else(|| panic!("agent {v} is not a member of the locality"))
    }

    fn hidden_in(&self, theta: &JointType, i: usize) -> bool {
        self.is_boundary(i) && theta.get(self.locality.members[i]) == Some(Status::In)
    }

    /// Whether member `v` has an IN neighbor, counting its type when on the boundary.
    pub fn covered(&self, lambda: &[Status], theta: &JointType, v: NodeId) -> bool {
        let i = self.pos(v);
        self.visible_in(lambda, i) || self.hidden_in(theta, i)
    }

    pub fn available_actions(&self, lambda: &[Status], theta: &JointType, v: NodeId) -> ActionSet {
        let i = self.pos(v);
        let covered = self.covered(lambda, theta, v);
        match lambda[i] {
            Status::Out if !covered && !self.blocked[i] => ActionSet::Both,
            Status::Out => ActionSet::Preserve,
            Status::In if covered => ActionSet::Switch,
            Status::In if self.rules == GameRules::EntryWithdraw => ActionSet::Both,
            Status::In => ActionSet::Preserve,
        }
    }

    /// Action set used in the dynamics: non-players are frozen.
    pub fn acting_set(&self, lambda: &[Status], theta: &JointType, i: usize) -> ActionSet {
        if self.is_player(i) {
            self.available_actions(lambda, theta, self.locality.members[i])
        } else {
            ActionSet::Preserve
        }
    }

    pub fn local_gain(&self, lambda: &[Status], theta: &JointType, v: NodeId) -> f64 {
        let i = self.pos(v);
        self.gain_params.value(lambda[i], self.covered(lambda, theta, v))
    }

    pub fn payoff(&self, lambda: &[Status], lambda_next: &[Status], theta: &JointType, v: NodeId) -> f64 {
        self.local_gain(lambda_next, theta, v) - self.local_gain(lambda, theta, v)
    }
}

/// Probability that the randomized scheduler turns `lambda` into
/// `lambda_next` under `joint_action` (one action per member).
pub fn transition_prob(lambda: &[Status], joint_action: &[Action], lambda_next: &[Status], p_s: f64) -> f64 {
    let mut writable = 0i32;
    let mut changed = 0i32;
    for ((&s, &a), &s2) in lambda.iter().zip(joint_action).zip(lambda_next) {
        if a == Action::Switch {
            writable += 1;
        }
        if s != s2 {
            if a != Action::Switch {
                return 0.0;
            }
            changed += 1;
        }
    }
    p_s.powi(changed) * (1.0 - p_s).powi(writable - changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game_on(g: &Graph, pattern: &str, focal: NodeId, rules: GameRules) -> LocalGame {
        let c = Configuration::from_pattern(pattern).unwrap();
        LocalGame::build(g, &c, focal, rules, |_| false, GainParams::default(), 0.8, &GameConfig::default()).unwrap()
    }

    #[test]
    fn action_table_examples() {
        let g = Graph::path(5);
        let game = game_on(&g, "OOOOO", 2, GameRules::Entry);
        let theta = JointType::new(vec![0, 4], vec![Status::Out, Status::Out]);
        assert_eq!(game.available_actions(&game.lambda, &theta, 2), ActionSet::Both);
        let conflict = game_on(&g, "OIIOO", 2, GameRules::Entry);
        assert_eq!(conflict.available_actions(&conflict.lambda, &theta, 2), ActionSet::Switch);
        let head = game_on(&g, "OOIOO", 2, GameRules::EntryWithdraw);
        assert_eq!(head.available_actions(&head.lambda, &theta, 2), ActionSet::Both);
        let vt_head = game_on(&g, "OOIOO", 2, GameRules::Entry);
        assert_eq!(vt_head.available_actions(&vt_head.lambda, &theta, 2), ActionSet::Preserve);
    }

    #[test]
    fn boundary_type_substitutes_for_hidden_neighbors() {
        // Path 0-1-2-3-4 focused at 2: boundary {0, 4}; node 0's neighbor 1 is visible.
        let g = Graph::path(6);
        let game = game_on(&g, "OOOOOO", 2, GameRules::Entry);
        let covered = JointType::new(vec![0, 4], vec![Status::Out, Status::In]);
        let open = JointType::new(vec![0, 4], vec![Status::Out, Status::Out]);
        assert_eq!(game.local_gain(&game.lambda, &covered, 4), 10.0);
        assert_eq!(game.local_gain(&game.lambda, &open, 4), 0.0);
        assert_eq!(game.available_actions(&game.lambda, &covered, 4), ActionSet::Preserve);
        let with_head = game_on(&g, "OOIOOO", 2, GameRules::Entry);
        assert_eq!(with_head.local_gain(&with_head.lambda, &covered, 2), 9.0);
        assert_eq!(with_head.local_gain(&with_head.lambda, &open, 2), 9.0);
    }

    #[test]
    fn payoff_examples() {
        let g = Graph::path(3);
        let game = game_on(&g, "OOO", 1, GameRules::Entry);
        let theta = JointType::new(vec![], vec![]);
        let lambda = vec![Status::Out; 3];
        let mut head = lambda.clone();
        head[1] = Status::In;
        assert_eq!(game.payoff(&lambda, &head, &theta, 1), 9.0);
        assert_eq!(game.payoff(&lambda, &lambda, &theta, 1), 0.0);
        let covered = vec![Status::In, Status::Out, Status::Out];
        assert_eq!(game.payoff(&covered, &lambda, &theta, 1), -10.0);
    }

    #[test]
    fn transition_examples() {
        use Action::*;
        use Status::*;
        assert!((transition_prob(&[Out], &[Switch], &[In], 0.8) - 0.8).abs() < 1e-12);
        assert!((transition_prob(&[Out, In], &[Switch, Switch], &[Out, In], 0.8) - 0.04).abs() < 1e-12);
        assert_eq!(transition_prob(&[Out, Out], &[Switch, Preserve], &[Out, In], 0.8), 0.0);
    }

    #[test]
    fn players_are_nearest_potential_movers() {
        let g = Graph::star(6);
        let game = game_on(&g, "OOOOOOO", 0, GameRules::Entry);
        assert_eq!(game.players.len(), 5);
        assert_eq!(game.players[0], game.focal_pos());
        let joint = JointType::enumerate(&[3, 5]).unwrap();
        assert_eq!(joint.len(), 4);
        assert!(joint.iter().all(|t| t.agents == vec![3, 5]));
    }
}
