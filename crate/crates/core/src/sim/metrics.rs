//! Scalar metrics over configurations and runs.

use crate::algorithms::{positive_probability, AlgorithmDescriptor, ProbContext};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{conflict, Configuration};
use crate::selfish::FaultEvent;

/// No rule with positive probability is enabled anywhere. In game mode a
/// strategic withdrawal counts only while it would expose a neighbor.
pub fn detect_converged(alg: &AlgorithmDescriptor, g: &Graph, c: &Configuration, ctx: &ProbContext) -> bool {
    (0..g.n()).all(|v| {
        alg.rules
            .iter()
            .all(|r| !(r.guard)(g, c, v) || !positive_probability(r, g, c, v, ctx))
    })
}

/// (Σx)² / (n·Σx²).
pub fn jain_index(profits: &[f64]) -> Result<f64> {
    if profits.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter("profits must be non-negative".into()));
    }
    let sum: f64 = profits.iter().sum();
    let squares: f64 = profits.iter().map(|x| x * x).sum();
    if squares == 0.0 {
        return Err(Error::Undefined("Jain's index of an all-zero allocation".into()));
    }
    Ok(sum * sum / (profits.len() as f64 * squares))
}

/// Share of agents that are IN or next to an IN agent, counting only heads
/// without a conflict.
pub fn availability(g: &Graph, c: &Configuration) -> f64 {
    let n = g.n();
    if n == 0 {
        return 0.0;
    }
    let stable_head = |w: NodeId| c.is_in(w) && !conflict(g, c, w);
    let served = (0..n)
        .filter(|&v| stable_head(v) || g.neighbors(v).iter().any(|&w| stable_head(w)))
        .count();
    served as f64 / n as f64
}

/// Share of runs that converged within ten times the baseline mean rounds.
/// Each entry is (converged, rounds).
pub fn reliability(results: &[(bool, u64)], baseline_rounds: f64) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let limit = 10.0 * baseline_rounds;
    let ok = results
        .iter()
        .filter(|&&(converged, rounds)| converged && rounds as f64 <= limit)
        .count();
    ok as f64 / results.len() as f64
}

/// Largest distance from the faulty agent to any agent that acted.
pub fn contamination_depth(g: &Graph, fault: &FaultEvent, actors: &[NodeId]) -> usize {
    let dist = g.distances_from(fault.agent);
    actors
        .iter()
        .map(|&v| dist[v])
        .filter(|&d| d != usize::MAX)
        .max()
        .unwrap_or(0)
}

/// The faulty agent stayed OUT after re-convergence.
pub fn fault_success(fault: &FaultEvent, final_config: &Configuration) -> bool {
    !final_config.is_in(fault.agent)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{build, AlgorithmName, GameMode};
    use crate::model::{Status, Var};

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert!((jain_index(&[10.0, 10.0, 9.0]).unwrap() - 841.0 / 843.0).abs() < 1e-15);
        assert!((jain_index(&[1.0, 0.0, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(jain_index(&[0.0, 0.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn availability_examples() {
        let g = Graph::path(3);
        assert_eq!(availability(&g, &Configuration::from_pattern("IOI").unwrap()), 1.0);
        assert_eq!(availability(&g, &Configuration::all_out(3)), 0.0);
        assert!((availability(&g, &Configuration::from_pattern("IOO").unwrap()) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(availability(&g, &Configuration::from_pattern("IIO").unwrap()), 0.0);
    }

    #[test]
    fn reliability_examples() {
        assert_eq!(reliability(&[(true, 1), (true, 2)], 1.5), 1.0);
        assert_eq!(reliability(&[(true, 1), (false, 100)], 1.5), 0.5);
        assert_eq!(reliability(&[(true, 20)], 1.5), 0.0);
    }

    #[test]
    fn convergence_examples() {
        let g = Graph::path(3);
        let mis = Configuration::from_pattern("IOI").unwrap();
        let ctx = ProbContext::default();
        assert!(detect_converged(&build(AlgorithmName::VtMis), &g, &mis, &ctx));
        assert!(!detect_converged(
            &build(AlgorithmName::BMis),
            &g,
            &Configuration::from_pattern("IIO").unwrap(),
            &ctx
        ));
        // Settle the parents bookkeeping, then the withdrawal guard holds with q = 0.
        let dt = build(AlgorithmName::DtMis);
        let mut c = mis.clone();
        c.states[1].insert_parent(0);
        c.states[1].insert_parent(2);
        let game = ProbContext {
            mode: GameMode::Game,
            ..ProbContext::default()
        };
        assert!((dt.rules[6].guard)(&g, &c, 0));
        assert!(detect_converged(&dt, &g, &c, &game));
    }

    #[test]
    fn contamination_examples() {
        let g = Graph::path(4);
        let fault = FaultEvent {
            agent: 0,
            variable: Var::State,
            before: Status::In.symbol().to_string(),
            after: Status::Out.symbol().to_string(),
            round: 0,
        };
        assert_eq!(contamination_depth(&g, &fault, &[]), 0);
        assert_eq!(contamination_depth(&g, &fault, &[0]), 0);
        assert_eq!(contamination_depth(&g, &fault, &[0, 2]), 2);
        assert!(fault_success(&fault, &Configuration::from_pattern("OIOI").unwrap()));
        assert!(!fault_success(&fault, &Configuration::from_pattern("IOIO").unwrap()));
    }
}
