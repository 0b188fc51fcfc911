//! Brute-force oracles over small instances: legitimate configurations,
//! bounded Nash search, single-fault audits and weak stabilization.
//!
//! All of them share one nondeterministic step relation: any non-empty set of
//! agents whose first enabled, positive-probability rule can fire executes it
//! simultaneously on the pre-step configuration.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{positive_probability, AlgorithmDescriptor, GameMode, ProbContext, RuleKind};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{gain, is_mis, Configuration, GainParams, Status, Var};
use crate::rng::{derive_seed, seeded};
use crate::sim::detect_converged;

pub const MAX_LEGITIMATE_N: usize = 12;
pub const MAX_NASH_N: usize = 6;
pub const MAX_NASH_DEPTH: usize = 8;
pub const MAX_AUDIT_N: usize = 10;
pub const MAX_WEAK_N: usize = 6;
/// Cap on the configurations a weak-stabilization check may enumerate.
pub const MAX_WEAK_CONFIGS: usize = 1 << 20;

fn bound(what: &'static str, limit: usize, got: usize) -> Result<()> {
    if got > limit {
        return Err(Error::BoundExceeded { what, limit, got });
    }
    Ok(())
}

/// Game-derived rules are treated as possibly firing, the rest by `ctx`.
fn oracle_context(ctx: &ProbContext) -> ProbContext {
    ProbContext {
        mode: GameMode::Game,
        ..*ctx
    }
}

/// The rule `v` would execute if selected, with its successor state.
fn planned(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    v: NodeId,
    ctx: &ProbContext,
) -> Option<crate::model::AgentState> {
    alg.rules
        .iter()
        .find(|r| (r.guard)(g, c, v) && positive_probability(r, g, c, v, ctx))
        .map(|r| (r.action)(g, c, v))
}

/// Every configuration one step away from `c`.
pub fn successors(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, ctx: &ProbContext) -> Vec<Configuration> {
    let moves: Vec<(NodeId, crate::model::AgentState)> = (0..g.n())
        .filter_map(|v| planned(alg, g, c, v, ctx).map(|s| (v, s)))
        .collect();
    assert!(moves.len() < 32, "successor enumeration is for small graphs");
    (1u32..1 << moves.len())
        .map(|mask| {
            let mut next = c.clone();
            for (i, (v, s)) in moves.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    next.states[*v] = s.clone();
                }
            }
            next
        })
        .collect()
}

/// Quiescent under `ctx` and an MIS.
pub fn is_legitimate(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, ctx: &ProbContext) -> bool {
    is_mis(g, c) && detect_converged(alg, g, c, ctx)
}

/// Runs the bookkeeping rules, one agent at a time, until none is enabled.
fn settle_bookkeeping(alg: &AlgorithmDescriptor, g: &Graph, c: &mut Configuration) {
    let cap = 4 * g.n() * g.n() * alg.rules.len() + 4;
    for _ in 0..cap {
        let next = (0..g.n()).find_map(|v| {
            alg.rules
                .iter()
                .find(|r| r.kind == RuleKind::Bookkeeping && (r.guard)(g, c, v))
                .map(|r| (v, (r.action)(g, c, v)))
        });
        match next {
            Some((v, s)) => c.states[v] = s,
            None => return,
        }
    }
}

fn legitimate_configurations(alg: &AlgorithmDescriptor, g: &Graph) -> Result<Vec<Configuration>> {
    bound("legitimate enumeration size", MAX_LEGITIMATE_N, g.n())?;
    let ctx = ProbContext::default();
    let mut out = Vec::new();
    for mask in 0u64..1 << g.n() {
        let mut c = Configuration::from_mask(g.n(), mask);
        settle_bookkeeping(alg, g, &mut c);
        if detect_converged(alg, g, &c, &ctx) {
            if !is_mis(g, &c) {
                return Err(Error::Contract(format!(
                    "{} is quiescent outside an MIS at {}",
                    alg.name,
                    c.serialize(&[Var::State])
                )));
            }
            out.push(c);
        }
    }
    Ok(out)
}

/// Digests of all quiescent configurations.
pub fn enumerate_legitimate(alg: &AlgorithmDescriptor, g: &Graph) -> Result<BTreeSet<String>> {
    Ok(legitimate_configurations(alg, g)?
        .iter()
        .map(|c| c.digest(alg.declared_vars))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashVerdict {
    /// No improving unilateral action was found within `depth_bound` steps.
    /// A bounded search can only under-approximate the unbounded notion.
    pub is_nash: bool,
    pub depth_bound: usize,
    /// Agent, its deviated configuration, and the first configuration found
    /// where the agent gains more.
    pub witness: Option<(NodeId, String, String)>,
}

/// Searches for an agent that flips its state and, after at most
/// `depth_bound` honest steps along some schedule, gains more than in `c`.
pub fn nash_check(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    params: &GainParams,
    ctx: &ProbContext,
    depth_bound: usize,
) -> Result<NashVerdict> {
    bound("nash graph size", MAX_NASH_N, g.n())?;
    bound("nash depth", MAX_NASH_DEPTH, depth_bound)?;
    let ctx = oracle_context(ctx);
    // Iterative deepening, so a shallow improvement by any agent is found
    // before a deep search for another.
    let mut seen: Vec<HashMap<Configuration, usize>> = vec![HashMap::new(); g.n()];
    for depth in 0..=depth_bound {
        for v in 0..g.n() {
            let before = gain(g, c, v, params);
            let mut deviated = c.clone();
            deviated.states[v].state = c.status(v).flipped();
            seen[v].clear();
            if let Some(found) = improves(alg, g, &deviated, v, before, params, &ctx, depth, &mut seen[v]) {
                let vars = alg.declared_vars;
                return Ok(NashVerdict {
                    is_nash: false,
                    depth_bound,
                    witness: Some((v, deviated.serialize(vars), found.serialize(vars))),
                });
            }
        }
    }
    Ok(NashVerdict {
        is_nash: true,
        depth_bound,
        witness: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn improves(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    v: NodeId,
    before: f64,
    params: &GainParams,
    ctx: &ProbContext,
    remaining: usize,
    seen: &mut HashMap<Configuration, usize>,
) -> Option<Configuration> {
    if gain(g, c, v, params) > before {
        return Some(c.clone());
    }
    if remaining == 0 || seen.get(c).is_some_and(|&r| r >= remaining) {
        return None;
    }
    seen.insert(c.clone(), remaining);
    successors(alg, g, c, ctx)
        .into_iter()
        .find_map(|next| improves(alg, g, &next, v, before, params, ctx, remaining - 1, seen))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultAuditReport {
    pub legitimate: usize,
    /// (legitimate configuration, faulty agent) pairs.
    pub cases: usize,
    pub samples_per_case: usize,
    pub max_depth: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Sampled recoveries that ended in the pre-fault IN-set.
    pub restored: usize,
    pub unrecovered: usize,
    pub step_limit: usize,
}

impl FaultAuditReport {
    pub fn restored_share(&self) -> f64 {
        let runs = self.cases * self.samples_per_case;
        if runs == 0 {
            return 1.0;
        }
        self.restored as f64 / runs as f64
    }
}

/// Every IN agent of every legitimate configuration is turned OUT; each case
/// is recovered along `samples` random schedules in which every enabled agent
/// is selected with probability 1/2 and rules fire with their `ctx`
/// probabilities.
pub fn fault_containment_audit(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    ctx: &ProbContext,
    samples: usize,
    seed: u64,
) -> Result<FaultAuditReport> {
    bound("fault audit size", MAX_AUDIT_N, g.n())?;
    let legit = legitimate_configurations(alg, g)?;
    let step_limit = 200 * g.n().max(1);
    let mut report = FaultAuditReport {
        legitimate: legit.len(),
        cases: 0,
        samples_per_case: samples,
        max_depth: 0,
        depth_histogram: BTreeMap::new(),
        restored: 0,
        unrecovered: 0,
        step_limit,
    };
    for (k, start) in legit.iter().enumerate() {
        for v in start.in_set() {
            report.cases += 1;
            let dist = g.distances_from(v);
            for s in 0..samples {
                let mut rng = seeded(derive_seed(seed, &[k as u64, v as u64, s as u64]));
                let mut c = start.clone();
                c.states[v].state = Status::Out;
                let mut depth = 0;
                let mut recovered = false;
                for _ in 0..step_limit {
                    if is_legitimate(alg, g, &c, ctx) {
                        recovered = true;
                        break;
                    }
                    let next = sampled_step(alg, g, &c, ctx, &mut rng)?;
                    for u in 0..g.n() {
                        if next.states[u] != c.states[u] {
                            depth = depth.max(dist[u]);
                        }
                    }
                    c = next;
                }
                recovered = recovered || is_legitimate(alg, g, &c, ctx);
                if !recovered {
                    report.unrecovered += 1;
                    continue;
                }
                report.max_depth = report.max_depth.max(depth);
                *report.depth_histogram.entry(depth).or_insert(0) += 1;
                if c.in_set() == start.in_set() {
                    report.restored += 1;
                }
            }
        }
    }
    Ok(report)
}

fn sampled_step(
    alg: &AlgorithmDescriptor,
    g: &Graph,
    c: &Configuration,
    ctx: &ProbContext,
    rng: &mut impl Rng,
) -> Result<Configuration> {
    let enabled: Vec<(NodeId, &crate::algorithms::Rule)> = (0..g.n())
        .filter_map(|v| {
            alg.rules
                .iter()
                .find(|r| (r.guard)(g, c, v) && positive_probability(r, g, c, v, ctx))
                .map(|r| (v, r))
        })
        .collect();
    if enabled.is_empty() {
        return Ok(c.clone());
    }
    let selected: Vec<_> = loop {
        let pick: Vec<_> = enabled.iter().filter(|_| rng.gen_bool(0.5)).collect();
        if !pick.is_empty() {
            break pick;
        }
    };
    let mut next = c.clone();
    for &&(v, rule) in &selected {
        let p = ctx.probability(rule, g, c, v)?;
        if p >= 1.0 || rng.gen::<f64>() < p {
            next.states[v] = (rule.action)(g, c, v);
        }
    }
    Ok(next)
}

/// Every configuration over the algorithm's variables, restricted to parent
/// values among the agent's neighbors.
fn all_configurations(alg: &AlgorithmDescriptor, g: &Graph) -> Result<Vec<Configuration>> {
    let n = g.n();
    let options: Vec<Vec<crate::model::AgentState>> = (0..n)
        .map(|v| {
            let mut opts = Vec::new();
            for state in [Status::Out, Status::In] {
                let base = crate::model::AgentState::new(state);
                if alg.declared_vars.contains(&Var::Parent) {
                    opts.push(base.clone());
                    for &w in g.neighbors(v) {
                        let mut s = base.clone();
                        s.parent = Some(w);
                        opts.push(s);
                    }
                } else if alg.declared_vars.contains(&Var::Parents) {
                    let nb = g.neighbors(v);
                    for m in 0u32..1 << nb.len() {
                        let mut s = base.clone();
                        for (i, &w) in nb.iter().enumerate() {
                            if m >> i & 1 == 1 {
                                s.insert_parent(w);
                            }
                        }
                        opts.push(s);
                    }
                } else {
                    opts.push(base);
                }
            }
            opts
        })
        .collect();
    let total = options.iter().fold(1usize, |acc, o| acc.saturating_mul(o.len()));
    bound("weak-stabilization configurations", MAX_WEAK_CONFIGS, total)?;
    let mut out = vec![Configuration::all_out(0)];
    for opts in &options {
        out = out
            .into_iter()
            .flat_map(|c| {
                opts.iter().map(move |s| {
                    let mut next = c.clone();
                    next.states.push(s.clone());
                    next
                })
            })
            .collect();
    }
    Ok(out)
}

/// From every configuration some schedule of positive-probability steps
/// reaches a legitimate configuration.
pub fn weak_stabilization_check(alg: &AlgorithmDescriptor, g: &Graph, ctx: &ProbContext) -> Result<bool> {
    bound("weak-stabilization size", MAX_WEAK_N, g.n())?;
    let ctx = oracle_context(ctx);
    let starts = all_configurations(alg, g)?;
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    let mut nodes: Vec<Configuration> = Vec::new();
    let mut reverse: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for c in starts.iter() {
        if !index.contains_key(c) {
            index.insert(c.clone(), nodes.len());
            nodes.push(c.clone());
            reverse.push(Vec::new());
            queue.push_back(nodes.len() - 1);
        }
    }
    while let Some(i) = queue.pop_front() {
        let c = nodes[i].clone();
        for next in successors(alg, g, &c, &ctx) {
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    index.insert(next.clone(), nodes.len());
                    nodes.push(next);
                    reverse.push(Vec::new());
                    queue.push_back(nodes.len() - 1);
                    nodes.len() - 1
                }
            };
            reverse[j].push(i);
        }
    }
    let mut good = vec![false; nodes.len()];
    let mut frontier: VecDeque<usize> = (0..nodes.len())
        .filter(|&i| is_legitimate(alg, g, &nodes[i], &ctx))
        .collect();
    for &i in &frontier {
        good[i] = true;
    }
    while let Some(j) = frontier.pop_front() {
        for &i in &reverse[j] {
            if !good[i] {
                good[i] = true;
                frontier.push_back(i);
            }
        }
    }
    Ok(starts.iter().all(|c| good[index[c]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// A size or depth bound stopped the check.
    Skipped,
}

/// One oracle run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub algorithm: String,
    pub instance: String,
    pub verdict: Verdict,
    pub bounds: BTreeMap<String, usize>,
    pub measures: BTreeMap<String, f64>,
    pub note: Option<String>,
}
