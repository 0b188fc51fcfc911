//! The round engine: plans, scheduling, decisions and simultaneous writes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    hesitate_dt, positive_probability, withdrawal_exposes_neighbor, AlgorithmDescriptor, AlgorithmName, GameMode, ProbContext, ProbSource,
    Rule, RuleKind,
};
use crate::error::{Error, Result};
use crate::game::{
    initial_type_belief, rule_probability, solve_stage_bne, Action, BeliefState, GameConfig, GameRules, JointType,
    LocalGame, PolicyOracle, SolveMethod, TransitionCache,
};
use crate::graph::{Graph, NodeId};
use crate::model::{gain, pending, Configuration, GainParams, Status, Var};
use crate::rng::{uniform, Purpose};
use crate::scheduler::{select, AdversaryView, SchedulerPolicy};
use crate::selfish::{
    apply_violation, deflection_condition, inject_perturbation, rational_refusal, violation_prone, DeviationModel,
    DeviationPolicy, FaultEvent,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub policy: PolicyOracle,
    pub samples: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            policy: PolicyOracle::Myopic,
            samples: 2000,
        }
    }
}

/// Everything the engine needs besides the graph and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub scheduler: SchedulerPolicy,
    pub gain: GainParams,
    pub prob: ProbContext,
    pub game: GameConfig,
    pub estimator: EstimatorConfig,
    pub deviation: DeviationModel,
    /// Deviations per run kept for counterfactual success checks.
    pub success_probes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            scheduler: SchedulerPolicy::central(),
            gain: GainParams::default(),
            prob: ProbContext::default(),
            game: GameConfig::default(),
            estimator: EstimatorConfig::default(),
            deviation: DeviationModel::none(),
            success_probes: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub rounds: u64,
    pub moves: u64,
    pub state_transitions: u64,
    pub deviations: u64,
    pub game_solves: u64,
    /// Solves that fell back to averaged best responses.
    pub unsettled_solves: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Rule(usize),
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Converged,
    Progress,
}

/// What an agent saw of its boundary at its last solve.
#[derive(Debug, Clone)]
struct AgentBelief {
    belief: BeliefState,
    /// Boundary member, its state then, and its switch chance per type.
    observed: Vec<(NodeId, Status, [f64; 2])>,
}

#[derive(Debug, Clone)]
struct Probe<'g> {
    agent: NodeId,
    snapshot: Box<Simulation<'g>>,
}

pub type SharedCache = Arc<Mutex<TransitionCache>>;

pub fn shared_cache(cfg: &EngineConfig, seed: u64) -> SharedCache {
    Arc::new(Mutex::new(TransitionCache::new(
        cfg.estimator.policy,
        cfg.scheduler.synchrony(),
        cfg.estimator.samples,
        seed,
    )))
}

#[derive(Debug, Clone)]
pub struct Simulation<'g> {
    graph: &'g Graph,
    alg: AlgorithmDescriptor,
    cfg: EngineConfig,
    master: u64,
    config: Configuration,
    step: u64,
    counters: Counters,
    cumulative: Vec<f64>,
    availability: Vec<f64>,
    acted: Vec<bool>,
    beliefs: HashMap<NodeId, AgentBelief>,
    cache: SharedCache,
    honest: Option<NodeId>,
    probes: Vec<Probe<'g>>,
    faults: Vec<FaultEvent>,
}

impl<'g> Simulation<'g> {
    pub fn new(
        graph: &'g Graph,
        alg: AlgorithmDescriptor,
        cfg: EngineConfig,
        initial: Configuration,
        master: u64,
        cache: SharedCache,
    ) -> Result<Self> {
        if initial.n() != graph.n() {
            return Err(Error::InvalidParameter(format!(
                "configuration has {} agents, graph has {}",
                initial.n(),
                graph.n()
            )));
        }
        cfg.game.validate()?;
        let n = graph.n();
        Ok(Simulation {
            graph,
            alg,
            cfg,
            master,
            config: initial,
            step: 0,
            counters: Counters::default(),
            cumulative: vec![0.0; n],
            availability: Vec::new(),
            acted: vec![false; n],
            beliefs: HashMap::new(),
            cache,
            honest: None,
            probes: Vec::new(),
            faults: Vec::new(),
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn engine_config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> &AlgorithmDescriptor {
        &self.alg
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn cumulative_gains(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn availability_trace(&self) -> &[f64] {
        &self.availability
    }

    pub fn faults(&self) -> &[FaultEvent] {
        &self.faults
    }

    /// Agents that executed a rule since the last reset.
    pub fn actors(&self) -> Vec<NodeId> {
        (0..self.graph.n()).filter(|&v| self.acted[v]).collect()
    }

    /// Clears counters, traces and the actor record, keeping state and beliefs.
    pub fn reset_measurements(&mut self) {
        self.counters = Counters::default();
        self.cumulative.iter_mut().for_each(|x| *x = 0.0);
        self.availability.clear();
        self.acted.iter_mut().for_each(|a| *a = false);
        self.probes.clear();
        self.faults.clear();
    }

    pub fn set_scheduler(&mut self, policy: SchedulerPolicy) {
        self.cfg.scheduler = policy;
    }

    pub fn set_mode(&mut self, mode: GameMode) {
        self.cfg.prob.mode = mode;
    }

    /// Applies an external fault; it is not counted as a move.
    pub fn inject(&mut self, v: NodeId) -> Result<FaultEvent> {
        let (next, event) = inject_perturbation(&self.alg, self.graph, &self.config, v, self.counters.rounds)?;
        self.config = next;
        self.faults.push(event.clone());
        Ok(event)
    }

    /// Runs until convergence or until `limit` rounds have elapsed.
    pub fn run_until(&mut self, limit: u64) -> Result<bool> {
        while self.counters.rounds < limit {
            if self.step()? == StepOutcome::Converged {
                return Ok(true);
            }
        }
        Ok(self.enabled_agents().is_empty() && !self.cfg.deviation.perturbs())
    }

    pub fn enabled_agents(&self) -> Vec<NodeId> {
        (0..self.graph.n()).filter(|&v| self.plan(v).is_some()).collect()
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let g = self.graph;
        let n = g.n();
        let plans: Vec<Option<Plan>> = (0..n).map(|v| self.plan(v)).collect();
        let enabled: Vec<NodeId> = (0..n).filter(|&v| plans[v].is_some()).collect();
        if enabled.is_empty() {
            if self.cfg.deviation.perturbs() && self.perturb()? {
                return Ok(StepOutcome::Progress);
            }
            return Ok(StepOutcome::Converged);
        }
        let entering: Vec<bool> = plans
            .iter()
            .map(|p| matches!(p, Some(Plan::Rule(i)) if self.alg.rules[i - 1].kind == RuleKind::Enter))
            .collect();
        let view = AdversaryView {
            graph: g,
            config: &self.config,
            entering: &entering,
        };
        let selection = select(&self.cfg.scheduler, &enabled, self.step, self.master, Some(view));
        let snapshot = self.probing().then(|| self.snapshot());

        let mut writes = Vec::with_capacity(selection.agents.len());
        let mut deviators = Vec::new();
        for &v in &selection.agents {
            match plans[v].expect("selected agents are enabled") {
                Plan::Exit => {
                    let mut next = self.config.states[v].clone();
                    next.state = Status::Out;
                    writes.push((v, next));
                    self.counters.moves += 1;
                    self.counters.deviations += 1;
                    deviators.push(v);
                }
                Plan::Rule(index) => {
                    let rule = self.alg.rules[index - 1];
                    if self.violates(v, &rule) {
                        self.counters.deviations += 1;
                        deviators.push(v);
                        continue;
                    }
                    let p = self.rule_probability(v, &rule)?;
                    let fire = p >= 1.0 || (p > 0.0 && uniform(self.master, Purpose::Rule, self.step, v as u64, 0) < p);
                    if fire {
                        writes.push((v, (rule.action)(g, &self.config, v)));
                        self.counters.moves += 1;
                    }
                }
            }
        }
        if let Some(snap) = snapshot {
            for v in deviators {
                if self.probes.len() < self.cfg.success_probes {
                    self.probes.push(Probe {
                        agent: v,
                        snapshot: Box::new(snap.clone()),
                    });
                }
            }
        }
        for (v, next) in writes {
            if next.state != self.config.states[v].state {
                self.counters.state_transitions += 1;
            }
            self.acted[v] = true;
            self.config.states[v] = next;
        }
        let span = 1 + selection.idle_rounds;
        self.counters.rounds += span;
        self.step += 1;
        for v in 0..n {
            self.cumulative[v] += span as f64 * gain(g, &self.config, v, &self.cfg.gain);
        }
        self.availability.push(super::metrics::availability(g, &self.config));
        Ok(StepOutcome::Progress)
    }

    /// Counterfactual check of every recorded deviation: it succeeded when
    /// the deviator ends OUT here but IN had it stayed honest from then on.
    /// Returns (deviations checked, successes).
    pub fn probe_success(&self, limit: u64) -> Result<(u64, u64)> {
        let mut successes = 0;
        for probe in &self.probes {
            if self.config.is_in(probe.agent) {
                continue;
            }
            let mut alt = (*probe.snapshot).clone();
            alt.honest = Some(probe.agent);
            alt.cfg.success_probes = 0;
            let budget = alt.counters.rounds + limit;
            if alt.run_until(budget)? && alt.config.is_in(probe.agent) {
                successes += 1;
            }
        }
        Ok((self.probes.len() as u64, successes))
    }

    fn probing(&self) -> bool {
        self.cfg.deviation.kind != crate::selfish::DeviationKind::None && self.probes.len() < self.cfg.success_probes
    }

    fn snapshot(&self) -> Simulation<'g> {
        let mut snap = self.clone();
        snap.probes.clear();
        snap
    }

    /// Lowest-index rule with a true guard and positive probability, else
    /// an unauthorized exit when the deviation model allows one.
    fn plan(&self, v: NodeId) -> Option<Plan> {
        let g = self.graph;
        let c = &self.config;
        if let Some(rule) = self.alg.rules.iter().find(|r| (r.guard)(g, c, v) && self.positive(r, v)) {
            return Some(Plan::Rule(rule.index));
        }
        let exits = self.cfg.deviation.exits_without_rule()
            && !self.alg.has_withdraw_rule()
            && self.honest != Some(v)
            && deflection_condition(g, c, v)
            && self.takes_deviation(v, 1, || rational_refusal(&self.alg, g, c, v, true));
        exits.then_some(Plan::Exit)
    }

    fn positive(&self, rule: &Rule, v: NodeId) -> bool {
        positive_probability(rule, self.graph, &self.config, v, &self.cfg.prob)
    }

    fn takes_deviation(&self, v: NodeId, salt: u64, rational: impl FnOnce() -> bool) -> bool {
        match self.cfg.deviation.policy {
            DeviationPolicy::Always => true,
            DeviationPolicy::Probability(w) => uniform(self.master, Purpose::Deviation, self.step, v as u64, salt) < w,
            DeviationPolicy::Utility => rational(),
        }
    }

    fn violates(&self, v: NodeId, rule: &Rule) -> bool {
        if !self.cfg.deviation.skips_entries() || self.honest == Some(v) || !violation_prone(rule) {
            return false;
        }
        let draw = uniform(self.master, Purpose::Deviation, self.step, v as u64, 2);
        let (g, c, alg) = (self.graph, &self.config, &self.alg);
        !apply_violation(self.cfg.deviation.policy, draw, || rational_refusal(alg, g, c, v, false))
    }

    /// Flips a willing head to OUT in a converged configuration.
    fn perturb(&mut self) -> Result<bool> {
        let g = self.graph;
        let c = &self.config;
        let candidates: Vec<NodeId> = (0..g.n())
            .filter(|&v| c.is_in(v) && self.honest != Some(v))
            .filter(|&v| self.takes_deviation(v, 3, || rational_refusal(&self.alg, g, c, v, true)))
            .collect();
        if candidates.is_empty() {
            return Ok(false);
        }
        let u = uniform(self.master, Purpose::Deviation, self.step, u64::MAX, 4);
        let v = candidates[((u * candidates.len() as f64) as usize).min(candidates.len() - 1)];
        if self.probing() {
            let snap = self.snapshot();
            self.probes.push(Probe {
                agent: v,
                snapshot: Box::new(snap),
            });
        }
        let event = match inject_perturbation(&self.alg, g, &self.config, v, self.counters.rounds) {
            Ok((next, event)) => {
                self.config = next;
                event
            }
            Err(_) => {
                self.config.states[v].state = Status::Out;
                FaultEvent {
                    agent: v,
                    variable: Var::State,
                    before: Status::In.symbol().to_string(),
                    after: Status::Out.symbol().to_string(),
                    round: self.counters.rounds,
                }
            }
        };
        self.faults.push(event);
        self.counters.deviations += 1;
        Ok(true)
    }

    fn rule_probability(&mut self, v: NodeId, rule: &Rule) -> Result<f64> {
        let live_game = matches!(rule.prob, ProbSource::Game { .. }) && self.cfg.prob.mode == GameMode::Game;
        if !live_game {
            return self.cfg.prob.probability(rule, self.graph, &self.config, v);
        }
        let g = self.graph;
        if rule.kind == RuleKind::Withdraw && !withdrawal_exposes_neighbor(g, &self.config, v) {
            return Ok(0.0);
        }
        let rules = GameRules::for_algorithm(self.alg.name)
            .ok_or_else(|| Error::Contract(format!("{} has no local game", self.alg.name)))?;
        let dt = self.alg.name == AlgorithmName::DtMis;
        let game = {
            let c = &self.config;
            LocalGame::build(
                g,
                c,
                v,
                rules,
                |u| dt && pending(g, c, u) && hesitate_dt(g, c, u),
                self.cfg.gain,
                self.cfg.scheduler.synchrony(),
                &self.cfg.game,
            )?
        };
        let belief = self.current_belief(v, &game)?;
        let out = solve_stage_bne(&game, &belief)?;
        self.counters.game_solves += 1;
        if out.method == SolveMethod::DampedAverage {
            self.counters.unsettled_solves += 1;
        }
        let observed = game
            .locality
            .boundary
            .iter()
            .map(|&u| {
                let pos = game.locality.position(u).expect("boundary member");
                let per_type = |t: Status| {
                    if game.is_player(pos) {
                        out.profile.switch_prob(pos, Some(t))
                    } else {
                        let theta = JointType::new(vec![u], vec![t]);
                        game.available_actions(&game.lambda, &theta, u).uniform_switch()
                    }
                };
                (u, self.config.status(u), [per_type(Status::In), per_type(Status::Out)])
            })
            .collect();
        let p = rule_probability(&self.alg, rule.index, &out, &game, v)?;
        self.beliefs.insert(v, AgentBelief { belief, observed });
        Ok(if rule.kind == RuleKind::Enter {
            p.max(self.cfg.game.p_floor)
        } else {
            p
        })
    }

    /// Prior on first use; afterwards Bayes on the boundary actions seen
    /// since the last solve, then one prediction step.
    fn current_belief(&mut self, v: NodeId, game: &LocalGame) -> Result<BeliefState> {
        let g = self.graph;
        let c = &self.config;
        let Some(prev) = self.beliefs.get(&v) else {
            return Ok(initial_type_belief(g, &game.locality, c));
        };
        let p_s = self.cfg.scheduler.synchrony();
        let estimate = {
            let mut cache = self.cache.lock().expect("transition cache lock");
            cache.get(g, &game.locality, c)?.clone()
        };
        let mut belief = prev.belief.clone();
        for &(u, before, pi) in &prev.observed {
            let now = c.status(u);
            let seen = if now == before { Action::Preserve } else { Action::Switch };
            let model = |t: Status, a: Action| {
                let s = p_s * pi[usize::from(t == Status::Out)];
                if a == Action::Switch {
                    s
                } else {
                    1.0 - s
                }
            };
            if let Ok(post) = belief.posterior(u, seen, model) {
                belief = post;
            }
            belief = belief.predict(u, estimate.for_states(before, now));
        }
        Ok(belief)
    }
}
