//! Experiment drivers: single faults, deviations, fairness, outcomes and
//! scaling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{shared_cache, EngineConfig, SharedCache, Simulation};
use super::metrics::{contamination_depth, fault_success, jain_index, mean, reliability, stderr};
use crate::algorithms::{build, AlgorithmName, GameMode};
use crate::error::{Error, Result};
use crate::graph::{ba_attachment_for_degree, generate_ba, Graph};
use crate::model::{Configuration, Var};
use crate::rng::{derive_seed, seeded, uniform, Purpose};
use crate::scheduler::SchedulerPolicy;
use crate::selfish::DeviationModel;

/// Network size, mean degree and scheduler synchrony.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub avg_degree: f64,
    pub synchrony: f64,
}

impl Scenario {
    pub fn new(n: usize, avg_degree: f64, synchrony: f64) -> Self {
        Scenario {
            n,
            avg_degree,
            synchrony,
        }
    }

    pub fn graph(&self, seed: u64) -> Result<Graph> {
        generate_ba(
            self.n,
            ba_attachment_for_degree(self.avg_degree),
            derive_seed(seed, &[Purpose::Graph as u64]),
        )
    }

    pub fn round_limit(&self) -> u64 {
        50 * self.n as u64
    }
}

/// Honest engine settings: randomized scheduler at the scenario's
/// synchrony, live games for strategic rules, and p_c equal to synchrony.
pub fn engine_for(scenario: &Scenario) -> Result<EngineConfig> {
    let mut cfg = EngineConfig {
        scheduler: SchedulerPolicy::randomized(scenario.synchrony)?,
        ..EngineConfig::default()
    };
    cfg.prob.mode = GameMode::Game;
    cfg.prob.p_c = scenario.synchrony;
    Ok(cfg)
}

fn random_start(g: &Graph, seed: u64) -> Configuration {
    Configuration::random(g, &mut seeded(derive_seed(seed, &[Purpose::Initial as u64])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultTrial {
    pub moves: u64,
    pub rounds: u64,
    pub state_transitions: u64,
    pub converged: bool,
    pub success: bool,
    pub depth: usize,
    /// The IN-set after recovery equals the one before the fault.
    pub restored: bool,
}

/// Converges from a random start with fixed strategic probabilities, turns
/// one uniformly chosen head OUT and measures the recovery under `engine`.
/// `None` if the first convergence timed out.
pub fn fault_trial(
    alg: AlgorithmName,
    scenario: &Scenario,
    engine: &EngineConfig,
    seed: u64,
    cache: &SharedCache,
) -> Result<Option<FaultTrial>> {
    let g = scenario.graph(seed)?;
    let limit = scenario.round_limit();
    let mut settle = engine.clone();
    settle.prob.mode = GameMode::Fixed;
    let mut sim = Simulation::new(&g, build(alg), settle, random_start(&g, seed), seed, cache.clone())?;
    if !sim.run_until(limit)? {
        return Ok(None);
    }
    sim.set_mode(engine.prob.mode);
    let before = sim.config().in_set();
    let pick = uniform(seed, Purpose::Injection, 0, 0, 0);
    let v = before[((pick * before.len() as f64) as usize).min(before.len() - 1)];
    sim.reset_measurements();
    let event = sim.inject(v)?;
    let converged = sim.run_until(sim.counters().rounds + limit)?;
    let counters = sim.counters().clone();
    Ok(Some(FaultTrial {
        moves: counters.moves,
        rounds: counters.rounds,
        state_transitions: counters.state_transitions,
        converged,
        success: converged && fault_success(&event, sim.config()),
        depth: contamination_depth(&g, &event, &sim.actors()),
        restored: sim.config().in_set() == before,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSummary {
    pub algorithm: AlgorithmName,
    pub trials: usize,
    /// Trials whose first convergence timed out; excluded from the rest.
    pub skipped: usize,
    pub avg_moves: f64,
    pub avg_rounds: f64,
    pub avg_state_transitions: f64,
    pub success_rate: f64,
    pub single_move_share: f64,
    pub restored_share: f64,
    pub unconverged: usize,
    pub max_depth: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
}

pub fn fault_study(alg: AlgorithmName, scenario: &Scenario, trials: usize, seed: u64) -> Result<FaultSummary> {
    summarize_faults(alg, &fault_trials(alg, scenario, trials, seed)?)
}

/// Independent trials, each on its own graph; `None` marks a trial whose
/// first convergence timed out.
pub fn fault_trials(alg: AlgorithmName, scenario: &Scenario, trials: usize, seed: u64) -> Result<Vec<Option<FaultTrial>>> {
    let engine = engine_for(scenario)?;
    let cache = shared_cache(&engine, seed);
    (0..trials)
        .into_par_iter()
        .map(|i| fault_trial(alg, scenario, &engine, derive_seed(seed, &[Purpose::Repetition as u64, i as u64]), &cache))
        .collect()
}

pub fn summarize_faults(alg: AlgorithmName, outcomes: &[Option<FaultTrial>]) -> Result<FaultSummary> {
    let trials = outcomes.len();
    let done: Vec<FaultTrial> = outcomes.iter().flatten().copied().collect();
    if done.is_empty() {
        return Err(Error::Undefined("no fault trial reached a legitimate configuration".into()));
    }
    let share = |f: &dyn Fn(&FaultTrial) -> bool| done.iter().filter(|t| f(t)).count() as f64 / done.len() as f64;
    let avg = |f: &dyn Fn(&FaultTrial) -> u64| mean(&done.iter().map(|t| f(t) as f64).collect::<Vec<_>>());
    let mut depth_histogram = BTreeMap::new();
    for t in &done {
        *depth_histogram.entry(t.depth).or_insert(0) += 1;
    }
    Ok(FaultSummary {
        algorithm: alg,
        trials: done.len(),
        skipped: trials - done.len(),
        avg_moves: avg(&|t| t.moves),
        avg_rounds: avg(&|t| t.rounds),
        avg_state_transitions: avg(&|t| t.state_transitions),
        success_rate: share(&|t| t.success),
        single_move_share: share(&|t| t.moves == 1),
        restored_share: share(&|t| t.restored),
        unconverged: done.iter().filter(|t| !t.converged).count(),
        max_depth: done.iter().map(|t| t.depth).max().unwrap_or(0),
        depth_histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub algorithm: AlgorithmName,
    pub model: DeviationModel,
    pub runs: usize,
    /// Mean rounds of the same runs without deviations.
    pub baseline_rounds: f64,
    pub reliability: f64,
    pub avg_deviations: f64,
    /// Deviations whose outcome was checked against an honest rerun.
    pub checked: u64,
    pub successes: u64,
    /// Successes over checked deviations; 0 when nothing was checked.
    pub success_rate: f64,
    pub availability: f64,
}

/// Each run gets its own graph and start; the honest pass fixes the
/// baseline, the selfish pass is cut at ten times the baseline.
pub fn deviation_study(
    alg: AlgorithmName,
    scenario: &Scenario,
    model: DeviationModel,
    runs: usize,
    seed: u64,
) -> Result<DeviationSummary> {
    let honest = engine_for(scenario)?;
    let selfish = EngineConfig {
        deviation: model,
        ..honest.clone()
    };
    let cache = shared_cache(&honest, seed);
    let seeds: Vec<u64> = (0..runs)
        .map(|i| derive_seed(seed, &[Purpose::Repetition as u64, i as u64]))
        .collect();
    let baseline: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let g = scenario.graph(s)?;
            let mut sim = Simulation::new(&g, build(alg), honest.clone(), random_start(&g, s), s, cache.clone())?;
            sim.run_until(scenario.round_limit())?;
            Ok(sim.counters().rounds as f64)
        })
        .collect::<Result<_>>()?;
    let baseline_rounds = mean(&baseline);
    let limit = (10.0 * baseline_rounds).ceil().max(1.0) as u64;
    let outcomes: Vec<(bool, u64, u64, u64, u64, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let g = scenario.graph(s)?;
            let mut sim = Simulation::new(&g, build(alg), selfish.clone(), random_start(&g, s), s, cache.clone())?;
            let converged = sim.run_until(limit)?;
            let (checked, successes) = if converged { sim.probe_success(limit)? } else { (0, 0) };
            let c = sim.counters();
            Ok((
                converged,
                c.rounds,
                c.deviations,
                checked,
                successes,
                mean(sim.availability_trace()),
            ))
        })
        .collect::<Result<_>>()?;
    let checked: u64 = outcomes.iter().map(|o| o.3).sum();
    let successes: u64 = outcomes.iter().map(|o| o.4).sum();
    let within: Vec<(bool, u64)> = outcomes.iter().map(|o| (o.0, o.1)).collect();
    Ok(DeviationSummary {
        algorithm: alg,
        model,
        runs,
        baseline_rounds,
        reliability: reliability(&within, baseline_rounds),
        avg_deviations: mean(&outcomes.iter().map(|o| o.2 as f64).collect::<Vec<_>>()),
        checked,
        successes,
        success_rate: if checked == 0 {
            0.0
        } else {
            successes as f64 / checked as f64
        },
        availability: mean(&outcomes.iter().map(|o| o.5).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub algorithm: AlgorithmName,
    pub graphs: usize,
    pub runs_per_graph: usize,
    /// Mean over graphs of Jain's index of per-agent gains summed over every
    /// round of every run on that graph.
    pub jain: f64,
    pub jain_per_graph: Vec<f64>,
    /// Same, with final gains only.
    pub jain_final: f64,
    pub unconverged: usize,
}

/// Runs from the all-OUT configuration on `graphs` graphs, `runs` runs each.
pub fn fairness_study(
    alg: AlgorithmName,
    scenario: &Scenario,
    graphs: usize,
    runs: usize,
    seed: u64,
) -> Result<FairnessSummary> {
    if graphs == 0 || runs == 0 {
        return Err(Error::InvalidParameter("fairness study needs at least one graph and one run".into()));
    }
    let engine = engine_for(scenario)?;
    let cache = shared_cache(&engine, seed);
    let mut jain_per_graph = Vec::with_capacity(graphs);
    let mut finals = Vec::with_capacity(graphs);
    let mut unconverged = 0;
    for k in 0..graphs {
        let graph_seed = derive_seed(seed, &[Purpose::Graph as u64, k as u64]);
        let g = scenario.graph(graph_seed)?;
        let per_run: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..runs)
            .into_par_iter()
            .map(|i| {
                let s = derive_seed(graph_seed, &[Purpose::Repetition as u64, i as u64]);
                let mut sim = Simulation::new(&g, build(alg), engine.clone(), Configuration::all_out(g.n()), s, cache.clone())?;
                let converged = sim.run_until(scenario.round_limit())?;
                let r = super::collect(&sim, i, s, converged);
                Ok((r.cumulative_profits, r.profits, converged))
            })
            .collect::<Result<_>>()?;
        let mut total = vec![0.0; g.n()];
        let mut total_final = vec![0.0; g.n()];
        for (cum, fin, converged) in &per_run {
            for v in 0..g.n() {
                total[v] += cum[v];
                total_final[v] += fin[v];
            }
            unconverged += usize::from(!converged);
        }
        jain_per_graph.push(jain_index(&total)?);
        finals.push(jain_index(&total_final)?);
    }
    Ok(FairnessSummary {
        algorithm: alg,
        graphs,
        runs_per_graph: runs,
        jain: mean(&jain_per_graph),
        jain_per_graph,
        jain_final: mean(&finals),
        unconverged,
    })
}

/// Final IN-sets (as state digests) reached from random starts on one graph.
pub fn outcome_census(
    alg: AlgorithmName,
    g: &Graph,
    engine: &EngineConfig,
    runs: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>> {
    let cache = shared_cache(engine, seed);
    let limit = 50 * g.n() as u64;
    let digests: Vec<Option<String>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, &[Purpose::Repetition as u64, i as u64]);
            let mut sim = Simulation::new(g, build(alg), engine.clone(), random_start(g, s), s, cache.clone())?;
            let converged = sim.run_until(limit)?;
            Ok(converged.then(|| sim.config().digest(&[Var::State])))
        })
        .collect::<Result<_>>()?;
    let mut census = BTreeMap::new();
    for d in digests {
        let key = d.unwrap_or_else(|| "unconverged".to_string());
        *census.entry(key).or_insert(0) += 1;
    }
    Ok(census)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub runs: usize,
    pub mean_rounds: f64,
    pub stderr_rounds: f64,
    pub mean_moves: f64,
    pub stderr_moves: f64,
    pub converged: usize,
}

/// Rounds and moves from random starts on fresh graphs of size `n`.
pub fn scaling_point(
    alg: AlgorithmName,
    n: usize,
    avg_degree: f64,
    engine: &EngineConfig,
    runs: usize,
    seed: u64,
) -> Result<ScalingPoint> {
    let scenario = Scenario::new(n, avg_degree, engine.scheduler.synchrony());
    let cache = shared_cache(engine, seed);
    let rows: Vec<(f64, f64, bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, &[Purpose::Repetition as u64, n as u64, i as u64]);
            let g = scenario.graph(s)?;
            let mut sim = Simulation::new(&g, build(alg), engine.clone(), random_start(&g, s), s, cache.clone())?;
            let converged = sim.run_until(scenario.round_limit())?;
            Ok((sim.counters().rounds as f64, sim.counters().moves as f64, converged))
        })
        .collect::<Result<_>>()?;
    let rounds: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let moves: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ScalingPoint {
        n,
        runs,
        mean_rounds: mean(&rounds),
        stderr_rounds: stderr(&rounds),
        mean_moves: mean(&moves),
        stderr_moves: stderr(&moves),
        converged: rows.iter().filter(|r| r.2).count(),
    })
}
