//! Expected payoffs over predicted trajectories and the stage equilibrium.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{transition_prob, Action, ActionSet, BeliefState, JointType, LocalGame};
use crate::algorithms::{AlgorithmDescriptor, ProbSource};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::model::Status;

/// Switch probabilities per member position, for own type IN and OUT.
/// Members without a type carry the same value twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub switch: Vec<[f64; 2]>,
}

impl StrategyProfile {
    pub fn uniform(members: usize) -> Self {
        StrategyProfile {
            switch: vec![[0.5, 0.5]; members],
        }
    }

    pub fn switch_prob(&self, pos: usize, own: Option<Status>) -> f64 {
        match own {
            Some(Status::In) => self.switch[pos][0],
            _ => self.switch[pos][1],
        }
    }

    pub fn prob(&self, pos: usize, own: Option<Status>, a: Action) -> f64 {
        let s = self.switch_prob(pos, own);
        match a {
            Action::Switch => s,
            Action::Preserve => 1.0 - s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    /// No member had a choice.
    Trivial,
    BestResponse,
    SupportEnumeration,
    /// Averaged best-response iterates; not guaranteed to be an equilibrium.
    DampedAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub profile: StrategyProfile,
    pub method: SolveMethod,
    pub iterations: usize,
    /// Largest gain any decision node could get by a pure deviation.
    pub max_regret: f64,
}

impl SolveOutput {
    pub fn is_equilibrium(&self, eps: f64) -> bool {
        self.max_regret <= eps
    }
}

const TIE: f64 = 1e-9;
const BR_ITERATIONS: usize = 200;
const SUPPORT_LIMIT: usize = 8;

/// Probability a strategic rule fires for `v`: its switch mass in the profile.
pub fn rule_probability(alg: &AlgorithmDescriptor, rule_index: usize, out: &SolveOutput, game: &LocalGame, v: NodeId) -> Result<f64> {
    let rule = alg
        .rule(rule_index)
        .ok_or_else(|| Error::Contract(format!("{} has no rule R{rule_index}", alg.name)))?;
    if !matches!(rule.prob, ProbSource::Game { .. }) {
        return Err(Error::Contract(format!("rule R{rule_index} of {} is not strategic", alg.name)));
    }
    let pos = game
        .locality
        .position(v)
        .ok_or_else(|| Error::Contract(format!("agent {v} is outside the solved locality")))?;
    Ok(out.profile.switch_prob(pos, None).clamp(0.0, 1.0))
}

/// The game restricted to its players, with states as bitmasks.
struct Compiled {
    k: usize,
    pos: Vec<usize>,
    nbr: Vec<u32>,
    fixed_in: Vec<bool>,
    blocked: Vec<bool>,
    /// Index into `typed` for boundary players.
    slot: Vec<Option<usize>>,
    typed: Vec<NodeId>,
    start: u32,
    withdraw: bool,
    head: f64,
    member: f64,
    p_s: f64,
    delta: f64,
    horizon: usize,
}

impl Compiled {
    fn new(game: &LocalGame) -> Result<Self> {
        let k = game.players.len();
        if k > 16 {
            return Err(Error::BoundExceeded {
                what: "players",
                limit: 16,
                got: k,
            });
        }
        let typed = game.typed_players();
        let mut nbr = vec![0u32; k];
        let mut fixed_in = vec![false; k];
        let mut slot = vec![None; k];
        let mut start = 0u32;
        for (i, &p) in game.players.iter().enumerate() {
            for &q in game.view(p) {
                match game.players.iter().position(|&x| x == q) {
                    Some(j) => nbr[i] |= 1 << j,
                    None => fixed_in[i] |= game.lambda[q] == Status::In,
                }
            }
            if game.is_boundary(p) {
                slot[i] = typed.binary_search(&game.locality.members[p]).ok();
            }
            if game.lambda[p] == Status::In {
                start |= 1 << i;
            }
        }
        Ok(Compiled {
            k,
            pos: game.players.clone(),
            nbr,
            fixed_in,
            blocked: game.players.iter().map(|&p| game.blocked[p]).collect(),
            slot,
            typed,
            start,
            withdraw: game.rules == super::GameRules::EntryWithdraw,
            head: game.gain_params.theta - game.gain_params.zeta,
            member: game.gain_params.theta,
            p_s: game.p_s,
            delta: game.delta,
            horizon: game.horizon,
        })
    }

    fn own_type(&self, i: usize, t: u32) -> Option<Status> {
        self.slot[i].map(|b| if t >> b & 1 == 1 { Status::In } else { Status::Out })
    }

    fn covered(&self, i: usize, s: u32, t: u32) -> bool {
        self.fixed_in[i] || s & self.nbr[i] != 0 || self.own_type(i, t) == Some(Status::In)
    }

    fn set(&self, i: usize, s: u32, t: u32) -> ActionSet {
        let covered = self.covered(i, s, t);
        match (s >> i & 1 == 1, covered) {
            (false, false) if !self.blocked[i] => ActionSet::Both,
            (false, _) => ActionSet::Preserve,
            (true, true) => ActionSet::Switch,
            (true, false) if self.withdraw => ActionSet::Both,
            (true, false) => ActionSet::Preserve,
        }
    }

    fn gain(&self, i: usize, s: u32, t: u32) -> f64 {
        if s >> i & 1 == 1 {
            self.head
        } else if self.covered(i, s, t) {
            self.member
        } else {
            0.0
        }
    }

    fn type_weight(&self, belief: &BeliefState, t: u32, skip: Option<usize>) -> f64 {
        self.typed
            .iter()
            .enumerate()
            .filter(|&(b, _)| Some(b) != skip)
            .map(|(b, &u)| belief.prob(u, if t >> b & 1 == 1 { Status::In } else { Status::Out }))
            .product()
    }
}

/// Memoized continuation values where every other player mixes uniformly.
struct Evaluator<'a> {
    c: &'a Compiled,
    /// Per `z << typed | t`, values at `s * (horizon + 1) + depth`; NaN when unset.
    memo: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(c: &'a Compiled) -> Self {
        Evaluator {
            c,
            memo: vec![Vec::new(); c.k << c.typed.len()],
        }
    }

    fn term(&mut self, z: usize, t: u32, next: u32, depth: usize, base: f64) -> f64 {
        let mut term = self.c.gain(z, next, t) - base;
        if depth > 0 {
            term += self.c.delta * self.value(z, t, next, depth - 1);
        }
        term
    }

    /// Depth-first over the flip outcomes of `movers`; accumulates the
    /// expected term with `z` keeping its state and, if `both`, flipping it.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        z: usize,
        t: u32,
        depth: usize,
        base: f64,
        movers: &[usize],
        flip: &[f64],
        next: u32,
        prob: f64,
        both: bool,
        acc: &mut [f64; 2],
    ) {
        match movers.split_first() {
            None => {
                acc[0] += prob * self.term(z, t, next, depth, base);
                if both {
                    acc[1] += prob * self.term(z, t, next ^ 1 << z, depth, base);
                }
            }
            Some((&i, rest)) => {
                let f = flip[i];
                if f < 1.0 {
                    self.walk(z, t, depth, base, rest, flip, next, prob * (1.0 - f), both, acc);
                }
                self.walk(z, t, depth, base, rest, flip, next ^ 1 << i, prob * f, both, acc);
            }
        }
    }

    fn value(&mut self, z: usize, t: u32, s: u32, depth: usize) -> f64 {
        let c = self.c;
        let slot = (z << c.typed.len()) | t as usize;
        let idx = s as usize * (c.horizon + 1) + depth;
        if self.memo[slot].is_empty() {
            self.memo[slot] = vec![f64::NAN; (1 << c.k) * (c.horizon + 1)];
        }
        let known = self.memo[slot][idx];
        if !known.is_nan() {
            return known;
        }
        let mut flip = [0.0f64; 16];
        let mut movers = [0usize; 16];
        let mut m = 0;
        for i in 0..c.k {
            flip[i] = c.set(i, s, t).uniform_switch() * c.p_s;
            if i != z && flip[i] > 0.0 {
                movers[m] = i;
                m += 1;
            }
        }
        let own = c.set(z, s, t);
        let switches = own != ActionSet::Preserve;
        let mut acc = [0.0; 2];
        let base = c.gain(z, s, t);
        self.walk(z, t, depth, base, &movers[..m], &flip, s, 1.0, switches, &mut acc);
        // Switching moves z with probability p_s.
        let switch = (1.0 - c.p_s) * acc[0] + c.p_s * acc[1];
        let best = match own {
            ActionSet::Preserve => acc[0],
            ActionSet::Switch => switch,
            ActionSet::Both => acc[0].max(switch),
        };
        self.memo[slot][idx] = best;
        best
    }

    /// Root successor terms of `z` under types `t`, indexed by next state;
    /// unreachable states are NaN.
    fn root_terms(&mut self, z: usize, t: u32) -> Vec<f64> {
        let c = self.c;
        let movable = (0..c.k)
            .filter(|&i| c.set(i, c.start, t) != ActionSet::Preserve)
            .fold(0u32, |m, i| m | 1 << i);
        let base = c.gain(z, c.start, t);
        let mut terms = vec![f64::NAN; 1 << c.k];
        let mut sub = movable;
        loop {
            let next = c.start ^ sub;
            let mut term = c.gain(z, next, t) - base;
            if c.horizon > 0 {
                term += c.delta * self.value(z, t, next, c.horizon - 1);
            }
            terms[next as usize] = term;
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & movable;
        }
        terms
    }
}

/// Σ over flip outcomes of the movers of probability × term.
fn multilinear(terms: &[f64], start: u32, flip: &[f64]) -> f64 {
    let movers: Vec<usize> = (0..flip.len()).filter(|&i| flip[i] > 0.0).collect();
    let mut total = 0.0;
    for subset in 0u32..1 << movers.len() {
        let mut prob = 1.0;
        let mut next = start;
        for (b, &i) in movers.iter().enumerate() {
            if subset >> b & 1 == 1 {
                prob *= flip[i];
                next ^= 1 << i;
            } else {
                prob *= 1.0 - flip[i];
            }
        }
        if prob != 0.0 {
            total += prob * terms[next as usize];
        }
    }
    total
}

/// A player's choice at the root: player index and own type when typed.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    player: usize,
    own: Option<Status>,
}

struct Stage<'a> {
    c: &'a Compiled,
    nodes: Vec<Node>,
    eval: Evaluator<'a>,
    /// Joint type weights, per typed slot left out (last row: none).
    weights: Vec<Vec<f64>>,
    /// Root terms by `z << typed + t`.
    terms: Vec<Option<Vec<f64>>>,
}

impl<'a> Stage<'a> {
    fn new(c: &'a Compiled, belief: &'a BeliefState) -> Self {
        let mut nodes = Vec::new();
        for i in 0..c.k {
            match c.slot[i] {
                None => {
                    if c.set(i, c.start, 0) == ActionSet::Both {
                        nodes.push(Node { player: i, own: None });
                    }
                }
                Some(b) => {
                    for (bit, own) in [(1u32, Status::In), (0u32, Status::Out)] {
                        if c.set(i, c.start, bit << b) == ActionSet::Both {
                            nodes.push(Node { player: i, own: Some(own) });
                        }
                    }
                }
            }
        }
        let typed = c.typed.len();
        let weights = (0..=typed)
            .map(|skip| {
                (0u32..1 << typed)
                    .map(|t| c.type_weight(belief, t, (skip < typed).then_some(skip)))
                    .collect()
            })
            .collect();
        Stage {
            c,
            nodes,
            eval: Evaluator::new(c),
            weights,
            terms: vec![None; c.k << typed],
        }
    }

    fn node_of(&self, i: usize, t: u32) -> Option<usize> {
        let own = self.c.own_type(i, t);
        self.nodes.iter().position(|n| n.player == i && n.own == own)
    }

    /// Root switch probability of player `i` under types `t`.
    fn root_switch(&self, i: usize, t: u32, x: &[f64]) -> f64 {
        match self.c.set(i, self.c.start, t) {
            ActionSet::Both => x[self.node_of(i, t).expect("choice node")],
            set => set.uniform_switch(),
        }
    }

    fn payoff(&mut self, node: usize, a: Action, x: &[f64]) -> f64 {
        let Node { player: z, own } = self.nodes[node];
        let c = self.c;
        let mut total = 0.0;
        for t in 0u32..1 << c.typed.len() {
            if c.own_type(z, t) != own {
                continue;
            }
            let w = self.weights[c.slot[z].unwrap_or(c.typed.len())][t as usize];
            if w == 0.0 {
                continue;
            }
            let mut flip: Vec<f64> = (0..c.k).map(|i| self.root_switch(i, t, x) * c.p_s).collect();
            flip[z] = if a == Action::Switch { c.p_s } else { 0.0 };
            let key = (z << c.typed.len()) | t as usize;
            if self.terms[key].is_none() {
                self.terms[key] = Some(self.eval.root_terms(z, t));
            }
            let terms = self.terms[key].as_deref().expect("filled above");
            total += w * multilinear(terms, c.start, &flip);
        }
        total
    }

    fn advantage(&mut self, node: usize, x: &[f64]) -> f64 {
        self.payoff(node, Action::Switch, x) - self.payoff(node, Action::Preserve, x)
    }

    fn regret(&mut self, x: &[f64]) -> f64 {
        (0..self.nodes.len())
            .map(|d| {
                let adv = self.advantage(d, x);
                adv.max(0.0) - x[d] * adv
            })
            .fold(0.0, f64::max)
    }

    fn best_response(&mut self, x: &[f64]) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|d| {
                let adv = self.advantage(d, x);
                if adv > TIE {
                    1.0
                } else if adv < -TIE {
                    0.0
                } else {
                    0.5
                }
            })
            .collect()
    }

    /// Newton on the indifference conditions of `mixers`, others fixed in `x`.
    fn indifference(&mut self, mixers: &[usize], x: &mut [f64]) -> bool {
        for m in mixers {
            x[*m] = 0.5;
        }
        for _ in 0..60 {
            let f: Vec<f64> = mixers.iter().map(|&d| self.advantage(d, x)).collect();
            if f.iter().all(|v| v.abs() < 1e-12) {
                return true;
            }
            let r = mixers.len();
            let mut jac = vec![vec![0.0; r]; r];
            for (col, &j) in mixers.iter().enumerate() {
                let keep = x[j];
                x[j] = 1.0;
                let hi: Vec<f64> = mixers.iter().map(|&d| self.advantage(d, x)).collect();
                x[j] = 0.0;
                let lo: Vec<f64> = mixers.iter().map(|&d| self.advantage(d, x)).collect();
                x[j] = keep;
                for row in 0..r {
                    jac[row][col] = hi[row] - lo[row];
                }
            }
            let Some(step) = solve_linear(jac, f.iter().map(|v| -v).collect()) else {
                return false;
            };
            for (k, &m) in mixers.iter().enumerate() {
                x[m] += step[k];
            }
            if mixers.iter().any(|&m| !x[m].is_finite() || x[m] < -0.5 || x[m] > 1.5) {
                return false;
            }
        }
        mixers.iter().all(|&d| self.advantage(d, x).abs() < 1e-9)
    }

    fn support_enumeration(&mut self) -> Option<Vec<f64>> {
        let m = self.nodes.len();
        if m > SUPPORT_LIMIT {
            return None;
        }
        let mut supports: Vec<Vec<u8>> = (0..3usize.pow(m as u32))
            .map(|code| (0..m).map(|d| (code / 3usize.pow(d as u32) % 3) as u8).collect())
            .collect();
        // 2 marks a mixing node; try the most mixed supports first.
        supports.sort_by_key(|s| std::cmp::Reverse(s.iter().filter(|&&v| v == 2).count()));
        for support in supports {
            let mixers: Vec<usize> = (0..m).filter(|&d| support[d] == 2).collect();
            let mut x: Vec<f64> = support.iter().map(|&v| if v == 1 { 1.0 } else { 0.0 }).collect();
            if !mixers.is_empty() && !self.indifference(&mixers, &mut x) {
                continue;
            }
            if mixers.iter().any(|&d| x[d] < -1e-9 || x[d] > 1.0 + 1e-9) {
                continue;
            }
            for &d in &mixers {
                x[d] = x[d].clamp(0.0, 1.0);
            }
            if self.regret(&x) <= 1e-9 {
                return Some(x);
            }
        }
        None
    }

    fn profile(&self, x: &[f64], members: usize) -> StrategyProfile {
        let c = self.c;
        let mut switch = vec![[0.0, 0.0]; members];
        for i in 0..c.k {
            let entry = match c.slot[i] {
                None => {
                    let s = self.root_switch(i, 0, x);
                    [s, s]
                }
                Some(b) => [self.root_switch(i, 1 << b, x), self.root_switch(i, 0, x)],
            };
            switch[c.pos[i]] = entry;
        }
        StrategyProfile { switch }
    }
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Stage equilibrium of `game` under `belief`: simultaneous best responses
/// first, then an indifference search over supports, then the averaged
/// iterates as a flagged fallback.
pub fn solve_stage_bne(game: &LocalGame, belief: &BeliefState) -> Result<SolveOutput> {
    let compiled = Compiled::new(game)?;
    let mut stage = Stage::new(&compiled, belief);
    let members = game.n();
    if stage.nodes.is_empty() {
        return Ok(SolveOutput {
            profile: stage.profile(&[], members),
            method: SolveMethod::Trivial,
            iterations: 0,
            max_regret: 0.0,
        });
    }
    let mut x = vec![0.5; stage.nodes.len()];
    let mut seen = vec![x.clone()];
    for iteration in 1..=BR_ITERATIONS {
        let next = stage.best_response(&x);
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < 1e-6 {
            let max_regret = stage.regret(&next);
            return Ok(SolveOutput {
                profile: stage.profile(&next, members),
                method: SolveMethod::BestResponse,
                iterations: iteration,
                max_regret,
            });
        }
        if seen.contains(&next) {
            break;
        }
        seen.push(next.clone());
        x = next;
    }
    if let Some(eq) = stage.support_enumeration() {
        let max_regret = stage.regret(&eq);
        return Ok(SolveOutput {
            profile: stage.profile(&eq, members),
            method: SolveMethod::SupportEnumeration,
            iterations: seen.len(),
            max_regret,
        });
    }
    let mut avg = vec![0.5; stage.nodes.len()];
    for t in 1..=BR_ITERATIONS {
        let br = stage.best_response(&avg);
        for (a, b) in avg.iter_mut().zip(&br) {
            *a += (b - *a) / (t as f64 + 1.0);
        }
    }
    let max_regret = stage.regret(&avg);
    Ok(SolveOutput {
        profile: stage.profile(&avg, members),
        method: SolveMethod::DampedAverage,
        iterations: BR_ITERATIONS,
        max_regret,
    })
}

/// Expected payoff of `z` choosing `a_z`, computed by summing explicitly
/// over joint types, joint actions and successor local states. Players other
/// than `z` follow `strategies` now and mix uniformly afterwards.
pub fn hba_expected_payoff(
    game: &LocalGame,
    z: NodeId,
    a_z: Action,
    belief: &BeliefState,
    strategies: &StrategyProfile,
    depth: usize,
) -> Result<f64> {
    let zpos = game
        .locality
        .position(z)
        .ok_or_else(|| Error::Contract(format!("agent {z} is outside the locality")))?;
    let typed = game.typed_players();
    let mut literal = Literal {
        game,
        zpos,
        memo: HashMap::new(),
    };
    let mut total = 0.0;
    for theta in JointType::enumerate(&typed)? {
        let mu = super::joint_type_prob(belief, &theta);
        if mu == 0.0 {
            continue;
        }
        total += mu * literal.expected(&game.lambda, &theta, a_z, Some(strategies), depth);
    }
    Ok(total)
}

struct Literal<'a> {
    game: &'a LocalGame,
    zpos: usize,
    memo: HashMap<(Vec<Status>, Vec<Status>, Action, usize), f64>,
}

impl Literal<'_> {
    fn expected(
        &mut self,
        lambda: &[Status],
        theta: &JointType,
        a_z: Action,
        strategies: Option<&StrategyProfile>,
        depth: usize,
    ) -> f64 {
        let key = (lambda.to_vec(), theta.types.clone(), a_z, depth);
        if strategies.is_none() {
            if let Some(&v) = self.memo.get(&key) {
                return v;
            }
        }
        let game = self.game;
        let n = game.n();
        let sets: Vec<ActionSet> = (0..n).map(|i| game.acting_set(lambda, theta, i)).collect();
        let mut choices: Vec<&[Action]> = sets.iter().map(|s| s.actions()).collect();
        choices[self.zpos] = std::slice::from_ref(match a_z {
            Action::Switch => &Action::Switch,
            Action::Preserve => &Action::Preserve,
        });
        let mut total = 0.0;
        let mut joint = vec![Action::Preserve; n];
        let mut idx = vec![0usize; n];
        loop {
            for i in 0..n {
                joint[i] = choices[i][idx[i]];
            }
            let mut weight = 1.0;
            for i in 0..n {
                if i == self.zpos || sets[i].is_singleton() {
                    continue;
                }
                let own = theta.get(game.locality.members[i]);
                weight *= match strategies {
                    Some(s) => s.prob(i, own, joint[i]),
                    None => 0.5,
                };
            }
            if weight > 0.0 {
                total += weight * self.q(lambda, theta, &joint, depth);
            }
            let mut i = 0;
            while i < n {
                idx[i] += 1;
                if idx[i] < choices[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        if strategies.is_none() {
            self.memo.insert(key, total);
        }
        total
    }

    fn q(&mut self, lambda: &[Status], theta: &JointType, joint: &[Action], depth: usize) -> f64 {
        let game = self.game;
        let z = game.locality.members[self.zpos];
        let writers: Vec<usize> = (0..joint.len()).filter(|&i| joint[i] == Action::Switch).collect();
        let mut total = 0.0;
        for subset in 0u32..1 << writers.len() {
            let mut next = lambda.to_vec();
            for (b, &i) in writers.iter().enumerate() {
                if subset >> b & 1 == 1 {
                    next[i] = next[i].flipped();
                }
            }
            let p = transition_prob(lambda, joint, &next, game.p_s);
            if p == 0.0 {
                continue;
            }
            let mut term = game.payoff(lambda, &next, theta, z);
            if depth > 0 {
                let set = game.acting_set(&next, theta, self.zpos);
                let best = set
                    .actions()
                    .iter()
                    .map(|&a| self.expected(&next, theta, a, None, depth - 1))
                    .fold(f64::NEG_INFINITY, f64::max);
                term += game.delta * best;
            }
            total += p * term;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameConfig, GameRules, TypeBelief};
    use crate::graph::Graph;
    use crate::model::{Configuration, GainParams};

    fn cfg(delta: f64, horizon: usize) -> GameConfig {
        GameConfig {
            delta,
            horizon,
            ..GameConfig::default()
        }
    }

    #[test]
    fn lone_pending_agent_switch_is_worth_seven_point_two() {
        let g = Graph::path(1);
        let c = Configuration::all_out(1);
        let game = LocalGame::build(&g, &c, 0, GameRules::Entry, |_| false, GainParams::default(), 0.8, &cfg(0.88, 0))
            .unwrap();
        let b = BeliefState::new();
        let s = StrategyProfile::uniform(1);
        let e = hba_expected_payoff(&game, 0, Action::Switch, &b, &s, 0).unwrap();
        assert!((e - 7.2).abs() < 1e-12);
        let out = solve_stage_bne(&game, &b).unwrap();
        assert_eq!(out.profile.switch_prob(0, None), 1.0);
        let alg = crate::algorithms::build(crate::algorithms::AlgorithmName::VtMis);
        assert_eq!(rule_probability(&alg, 1, &out, &game, 0).unwrap(), 1.0);
        let deep = LocalGame { horizon: 3, ..game.clone() };
        assert_eq!(solve_stage_bne(&deep, &b).unwrap().profile.switch_prob(0, None), 1.0);
    }

    #[test]
    fn zero_discount_equals_depth_zero() {
        let g = Graph::path(4);
        let c = Configuration::all_out(4);
        let game =
            LocalGame::build(&g, &c, 1, GameRules::Entry, |_| false, GainParams::default(), 0.8, &cfg(1e-300, 3)).unwrap();
        let b = initial_type_belief_for(&g, &game, &c);
        let s = StrategyProfile::uniform(game.n());
        for a in [Action::Switch, Action::Preserve] {
            let deep = hba_expected_payoff(&game, 1, a, &b, &s, 3).unwrap();
            let shallow = hba_expected_payoff(&game, 1, a, &b, &s, 0).unwrap();
            assert!((deep - shallow).abs() < 1e-9);
        }
    }

    fn initial_type_belief_for(g: &Graph, game: &LocalGame, c: &Configuration) -> BeliefState {
        crate::game::initial_type_belief(g, &game.locality, c)
    }

    #[test]
    fn symmetric_pending_pair_mixes_identically() {
        let g = Graph::path(2);
        let c = Configuration::all_out(2);
        for horizon in [0, 1, 3] {
            let game = LocalGame::build(&g, &c, 0, GameRules::Entry, |_| false, GainParams::default(), 0.8, &cfg(0.88, horizon))
                .unwrap();
            let out = solve_stage_bne(&game, &BeliefState::new()).unwrap();
            let (a, b) = (out.profile.switch_prob(0, None), out.profile.switch_prob(1, None));
            assert!((a - b).abs() < 1e-9, "horizon {horizon}: {a} vs {b}");
            assert!(out.is_equilibrium(1e-9));
            // Relabelled instance gives the same profile.
            let swapped = g.with_ids(vec![2, 1]).unwrap();
            let game2 =
                LocalGame::build(&swapped, &c, 1, GameRules::Entry, |_| false, GainParams::default(), 0.8, &cfg(0.88, horizon))
                    .unwrap();
            let out2 = solve_stage_bne(&game2, &BeliefState::new()).unwrap();
            assert!((out2.profile.switch_prob(1, None) - a).abs() < 1e-9);
        }
    }

    #[test]
    fn covered_head_never_withdraws() {
        // Path 0-1-2-3-4 with heads {0,2,4}: every neighbor of 2 has a second head.
        let g = Graph::path(5);
        let c = Configuration::from_pattern("IOIOI").unwrap();
        let game =
            LocalGame::build(&g, &c, 2, GameRules::EntryWithdraw, |_| false, GainParams::default(), 0.8, &cfg(0.88, 3))
                .unwrap();
        let mut b = BeliefState::new();
        for &u in &game.locality.boundary {
            b.set(u, TypeBelief::from_out(1.0));
        }
        let out = solve_stage_bne(&game, &b).unwrap();
        assert_eq!(out.profile.switch_prob(game.focal_pos(), None), 0.0);
    }

    fn random_game(seed: u64, players: usize, horizon: usize) -> (LocalGame, BeliefState) {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let g = loop {
            let n = rng.gen_range(2..7);
            if let Ok(g) = crate::graph::generate_er(n, 0.5, rng.gen()) {
                break g;
            }
        };
        let mut c = Configuration::all_out(g.n());
        for v in 0..g.n() {
            if rng.gen::<f64>() < 0.4 {
                c.states[v].state = Status::In;
            }
        }
        let rules = if rng.gen() { GameRules::Entry } else { GameRules::EntryWithdraw };
        let focal = rng.gen_range(0..g.n());
        let cfg = GameConfig {
            delta: 0.88,
            horizon,
            max_players: players,
            p_floor: 0.01,
        };
        let game = LocalGame::build(&g, &c, focal, rules, |_| false, GainParams::default(), 0.8, &cfg).unwrap();
        let mut b = BeliefState::new();
        for &u in &game.locality.boundary {
            b.set(u, TypeBelief::from_out(rng.gen()));
        }
        (game, b)
    }

    #[test]
    fn fast_and_literal_payoffs_agree() {
        use rand::Rng;
        for seed in 0..60 {
            let (game, belief) = random_game(seed, 4, (seed % 3) as usize);
            let compiled = Compiled::new(&game).unwrap();
            let mut stage = Stage::new(&compiled, &belief);
            let mut rng = crate::rng::seeded(seed + 1000);
            let x: Vec<f64> = (0..stage.nodes.len()).map(|_| rng.gen()).collect();
            let profile = stage.profile(&x, game.n());
            for d in 0..stage.nodes.len() {
                let node = stage.nodes[d];
                let z = game.locality.members[compiled.pos[node.player]];
                for a in [Action::Switch, Action::Preserve] {
                    let fast = stage.payoff(d, a, &x);
                    let literal = literal_conditional(&game, z, node.own, a, &belief, &profile);
                    assert!((fast - literal).abs() < 1e-9, "seed {seed}: {fast} vs {literal}");
                }
            }
        }
    }

    /// Literal payoff of `z` given its own type, by conditioning the belief.
    fn literal_conditional(
        game: &LocalGame,
        z: NodeId,
        own: Option<Status>,
        a: Action,
        belief: &BeliefState,
        profile: &StrategyProfile,
    ) -> f64 {
        let mut b = belief.clone();
        if let Some(t) = own {
            b.set(z, TypeBelief::from_out(if t == Status::Out { 1.0 } else { 0.0 }));
        }
        hba_expected_payoff(game, z, a, &b, profile, game.horizon).unwrap()
    }

    #[test]
    fn solver_returns_mutual_best_responses() {
        for seed in 0..100 {
            let (game, belief) = random_game(seed, 5, 3);
            let out = solve_stage_bne(&game, &belief).unwrap();
            assert!(out.is_equilibrium(1e-6), "seed {seed}: {:?}", out);
        }
    }

    #[test]
    fn linear_solver() {
        let x = solve_linear(vec![vec![0.0, 2.0], vec![3.0, 0.0]], vec![4.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert!(solve_linear(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0]).is_none());
    }
}
