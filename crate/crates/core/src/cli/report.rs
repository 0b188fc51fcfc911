//! Aggregates and file writers.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::sim::experiments::FaultTrial;
use crate::sim::{mean, stderr, RunResult};

/// Summary of a batch of repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAggregate {
    pub algorithm: String,
    pub runs: usize,
    pub converged: usize,
    pub avg_rounds: f64,
    pub stderr_rounds: f64,
    pub avg_moves: f64,
    pub stderr_moves: f64,
    pub avg_state_transitions: f64,
    pub avg_deviations: f64,
    /// Mean of the defined per-run indices; `None` if none is defined.
    pub jain_index: Option<f64>,
    pub availability: f64,
    pub avg_cluster_count: f64,
}

impl RunAggregate {
    pub fn from_results(results: &[RunResult]) -> Self {
        let col = |f: &dyn Fn(&RunResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
        let rounds = col(&|r| r.rounds as f64);
        let moves = col(&|r| r.moves as f64);
        let jains: Vec<f64> = results.iter().filter_map(|r| r.jain()).collect();
        RunAggregate {
            algorithm: results.first().map_or_else(String::new, |r| r.algorithm.to_string()),
            runs: results.len(),
            converged: results.iter().filter(|r| r.converged).count(),
            avg_rounds: mean(&rounds),
            stderr_rounds: stderr(&rounds),
            avg_moves: mean(&moves),
            stderr_moves: stderr(&moves),
            avg_state_transitions: mean(&col(&|r| r.state_transitions as f64)),
            avg_deviations: mean(&col(&|r| r.deviations as f64)),
            jain_index: (!jains.is_empty()).then(|| mean(&jains)),
            availability: mean(&col(&|r| r.availability_mean())),
            avg_cluster_count: mean(&col(&|r| r.cluster_count as f64)),
        }
    }

    pub fn table(&self) -> String {
        let jain = self.jain_index.map_or_else(|| "undefined".to_string(), |j| format!("{j:.4}"));
        format!(
            "algorithm     {}\nruns          {} ({} converged)\nrounds        {:.3} ± {:.3}\nmoves         {:.3} ± {:.3}\nfairness      {}\navailability  {:.4}\n",
            self.algorithm,
            self.runs,
            self.converged,
            self.avg_rounds,
            self.stderr_rounds,
            self.avg_moves,
            self.stderr_moves,
            jain,
            self.availability
        )
    }
}

pub fn results_csv(results: &[RunResult]) -> String {
    let mut out = RunResult::csv_header();
    out.push('\n');
    for r in results {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn fault_csv(trials: &[Option<FaultTrial>]) -> String {
    let mut out = String::from("trial,settled,moves,rounds,state_transitions,converged,success,depth,restored\n");
    for (i, t) in trials.iter().enumerate() {
        match t {
            Some(t) => out.push_str(&format!(
                "{i},true,{},{},{},{},{},{},{}\n",
                t.moves, t.rounds, t.state_transitions, t.converged, t.success, t.depth, t.restored
            )),
            None => out.push_str(&format!("{i},false,,,,,,,\n")),
        }
    }
    out
}

/// One row per sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    #[serde(flatten)]
    pub aggregate: RunAggregate,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,runs,converged,avg_rounds,stderr_rounds,avg_moves,stderr_moves,jain_index,availability\n");
    for r in rows {
        let a = &r.aggregate;
        let jain = a.jain_index.map_or_else(|| "nan".to_string(), |j| format!("{j:.6}"));
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            r.axis, r.value, a.runs, a.converged, a.avg_rounds, a.stderr_rounds, a.avg_moves, a.stderr_moves, jain, a.availability
        ));
    }
    out
}

/// Whitespace-separated `x mean stderr` lines for plotting.
pub fn plot_data(points: &[(f64, f64, f64)]) -> String {
    points.iter().map(|(x, m, s)| format!("{x} {m:.6} {s:.6}\n")).collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}
