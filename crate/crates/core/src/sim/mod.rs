//! Experiment runs: graph and initial-state setup around the round engine,
//! per-run results and their CSV form.

mod engine;
pub mod experiments;
mod metrics;

pub use engine::{shared_cache, Counters, EngineConfig, EstimatorConfig, SharedCache, Simulation, StepOutcome};
pub use metrics::{
    availability, contamination_depth, detect_converged, fault_success, jain_index, mean, reliability, stderr,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{build, AlgorithmName};
use crate::error::{Error, Result};
use crate::graph::{ba_attachment_for_degree, generate_ba, generate_er, Graph};
use crate::model::{gains, Configuration};
use crate::rng::{derive_seed, seeded, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphSpec {
    BarabasiAlbert { n: usize, avg_degree: f64 },
    ErdosRenyi { n: usize, avg_degree: f64 },
    Path { n: usize },
    Cycle { n: usize },
    Complete { n: usize },
    Star { leaves: usize },
    /// Edge-list text, as read from a file.
    EdgeList { text: String },
}

impl GraphSpec {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self {
            GraphSpec::BarabasiAlbert { n, avg_degree } => generate_ba(*n, ba_attachment_for_degree(*avg_degree), seed),
            GraphSpec::ErdosRenyi { n, avg_degree } => {
                if *n < 2 {
                    return Err(Error::InvalidParameter("graph.n must be at least 2".into()));
                }
                generate_er(*n, avg_degree / (*n - 1) as f64, seed)
            }
            GraphSpec::Path { n } => Ok(Graph::path(*n)),
            GraphSpec::Cycle { n } => Ok(Graph::cycle(*n)),
            GraphSpec::Complete { n } => Ok(Graph::complete(*n)),
            GraphSpec::Star { leaves } => Ok(Graph::star(*leaves)),
            GraphSpec::EdgeList { text } => Graph::from_edge_list(text),
        }
    }

    /// Whether repeated builds can differ by seed.
    pub fn is_random(&self) -> bool {
        matches!(self, GraphSpec::BarabasiAlbert { .. } | GraphSpec::ErdosRenyi { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitSpec {
    Random,
    AllOut,
    AllIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmName,
    pub graph: GraphSpec,
    pub engine: EngineConfig,
    pub repetitions: usize,
    /// Defaults to 50·n.
    pub round_limit: Option<u64>,
    pub seed: u64,
    pub init: InitSpec,
    /// Use one graph (from the master seed) for every repetition.
    pub fixed_graph: bool,
}

impl ExperimentConfig {
    pub fn new(algorithm: AlgorithmName, graph: GraphSpec) -> Self {
        ExperimentConfig {
            algorithm,
            graph,
            engine: EngineConfig::default(),
            repetitions: 1,
            round_limit: None,
            seed: 0,
            init: InitSpec::Random,
            fixed_graph: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be positive".into()));
        }
        if self.round_limit == Some(0) {
            return Err(Error::InvalidParameter("round_limit must be positive".into()));
        }
        self.engine.game.validate()
    }

    pub fn round_limit_for(&self, n: usize) -> u64 {
        self.round_limit.unwrap_or(50 * n.max(1) as u64)
    }

    /// Seed of repetition `rep`.
    pub fn run_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, &[Purpose::Repetition as u64, rep as u64])
    }

    pub fn graph_for(&self, run_seed: u64) -> Result<Graph> {
        let base = if self.fixed_graph { self.seed } else { run_seed };
        self.graph.build(derive_seed(base, &[Purpose::Graph as u64]))
    }

    pub fn initial_for(&self, g: &Graph, run_seed: u64) -> Configuration {
        match self.init {
            InitSpec::Random => {
                let mut rng = seeded(derive_seed(run_seed, &[Purpose::Initial as u64]));
                Configuration::random(g, &mut rng)
            }
            InitSpec::AllOut => Configuration::all_out(g.n()),
            InitSpec::AllIn => Configuration::uniform(g.n(), crate::model::Status::In),
        }
    }
}

/// Column order of the per-run CSV.
pub const RESULT_COLUMNS: [&str; 15] = [
    "run_id",
    "algorithm",
    "n",
    "avg_degree",
    "synchrony",
    "seed",
    "rounds",
    "moves",
    "state_transitions",
    "converged",
    "deviations",
    "jain_index",
    "availability_mean",
    "cluster_count",
    "final_digest",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub algorithm: AlgorithmName,
    pub n: usize,
    pub avg_degree: f64,
    pub synchrony: f64,
    pub seed: u64,
    pub rounds: u64,
    pub moves: u64,
    pub state_transitions: u64,
    pub converged: bool,
    pub final_digest: String,
    /// Gain of each agent in the final configuration.
    pub profits: Vec<f64>,
    /// Gain of each agent summed over the rounds of the run.
    pub cumulative_profits: Vec<f64>,
    pub deviations: u64,
    pub availability_trace: Vec<f64>,
    pub cluster_count: usize,
    pub game_solves: u64,
    pub unsettled_solves: u64,
}

impl RunResult {
    pub fn availability_mean(&self) -> f64 {
        mean(&self.availability_trace)
    }

    pub fn jain(&self) -> Option<f64> {
        jain_index(&self.profits).ok()
    }

    pub fn csv_header() -> String {
        RESULT_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let jain = self.jain().map_or_else(|| "nan".to_string(), |j| format!("{j:.6}"));
        format!(
            "{},{},{},{:.4},{},{},{},{},{},{},{},{},{:.6},{},{}",
            self.run_id,
            self.algorithm,
            self.n,
            self.avg_degree,
            self.synchrony,
            self.seed,
            self.rounds,
            self.moves,
            self.state_transitions,
            self.converged,
            self.deviations,
            jain,
            self.availability_mean(),
            self.cluster_count,
            self.final_digest
        )
    }
}

/// Runs `sim` to convergence and collects its result.
pub fn finish(sim: &mut Simulation<'_>, run_id: usize, seed: u64, limit: u64) -> Result<RunResult> {
    let converged = sim.run_until(limit)?;
    Ok(collect(sim, run_id, seed, converged))
}

pub fn collect(sim: &Simulation<'_>, run_id: usize, seed: u64, converged: bool) -> RunResult {
    let g = sim.graph();
    let alg = sim.algorithm();
    let counters = sim.counters();
    let c = sim.config();
    RunResult {
        run_id,
        algorithm: alg.name,
        n: g.n(),
        avg_degree: g.mean_degree(),
        synchrony: 0.0,
        seed,
        rounds: counters.rounds,
        moves: counters.moves,
        state_transitions: counters.state_transitions,
        converged,
        final_digest: c.digest(alg.declared_vars),
        profits: gains(g, c, &sim_gain(sim)),
        cumulative_profits: sim.cumulative_gains().to_vec(),
        deviations: counters.deviations,
        availability_trace: sim.availability_trace().to_vec(),
        cluster_count: c.in_set().len(),
        game_solves: counters.game_solves,
        unsettled_solves: counters.unsettled_solves,
    }
}

fn sim_gain(sim: &Simulation<'_>) -> crate::model::GainParams {
    sim.engine_config().gain
}

/// One repetition of `config` with run seed `seed`.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    run_indexed(config, 0, seed, &shared_cache(&config.engine, config.seed))
}

fn run_indexed(config: &ExperimentConfig, run_id: usize, seed: u64, cache: &SharedCache) -> Result<RunResult> {
    config.validate()?;
    let g = config.graph_for(seed)?;
    let initial = config.initial_for(&g, seed);
    let mut sim = Simulation::new(&g, build(config.algorithm), config.engine.clone(), initial, seed, cache.clone())?;
    let mut result = finish(&mut sim, run_id, seed, config.round_limit_for(g.n()))?;
    result.synchrony = config.engine.scheduler.synchrony();
    Ok(result)
}

/// All repetitions, in repetition order.
pub fn run_batch(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let cache = shared_cache(&config.engine, config.seed);
    (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_indexed(config, rep, config.run_seed(rep), &cache))
        .collect()
}
