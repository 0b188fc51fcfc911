//! Flat `key = value` experiment files with dotted keys.
//!
//! ```text
//! # comments and blank lines are ignored
//! algorithm = bMIS
//! graph.kind = path
//! graph.n = 3
//! scheduler.kind = synchronous
//! repetitions = 5
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::algorithms::{AlgorithmName, GameMode};
use crate::error::{Error, Result};
use crate::game::PolicyOracle;
use crate::model::GainParams;
use crate::scheduler::{Adversary, SchedulerKind, SchedulerPolicy};
use crate::selfish::{DeviationKind, DeviationModel, DeviationPolicy};
use crate::sim::experiments::Scenario;
use crate::sim::{ExperimentConfig, GraphSpec, InitSpec};

const KEYS: &[&str] = &[
    "algorithm",
    "experiment",
    "repetitions",
    "round_limit",
    "seed",
    "init",
    "graph.kind",
    "graph.n",
    "graph.avg_degree",
    "graph.leaves",
    "graph.file",
    "graph.fixed",
    "scheduler.kind",
    "scheduler.synchrony",
    "scheduler.adversary",
    "gain.theta",
    "gain.zeta",
    "game.delta",
    "game.horizon",
    "game.max_players",
    "game.p_floor",
    "prob.mode",
    "prob.p",
    "prob.q",
    "prob.epsilon",
    "prob.p_c",
    "estimator.policy",
    "estimator.p",
    "estimator.samples",
    "deviation.kind",
    "deviation.policy",
    "deviation.w",
    "fairness.graphs",
    "sweep.axis",
    "sweep.values",
];

/// What `run` does with the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Independent repetitions, one CSV row each.
    Runs,
    /// Single IN→OUT faults injected into legitimate configurations.
    Fault,
    /// Honest baseline against the configured deviation model.
    Deviation,
    /// Cumulative-gain fairness from the all-OUT configuration.
    Fairness,
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "run" | "runs" => Ok(ExperimentKind::Runs),
            "fault" => Ok(ExperimentKind::Fault),
            "deviation" => Ok(ExperimentKind::Deviation),
            "fairness" => Ok(ExperimentKind::Fairness),
            other => Err(Error::InvalidParameter(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    Synchrony,
    AvgDegree,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Synchrony => "synchrony",
            SweepAxis::AvgDegree => "avg_degree",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" => Ok(SweepAxis::N),
            "synchrony" => Ok(SweepAxis::Synchrony),
            "avg_degree" | "degree" => Ok(SweepAxis::AvgDegree),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub experiment: ExperimentConfig,
    pub kind: ExperimentKind,
    pub fairness_graphs: usize,
    pub sweep: Option<Sweep>,
}

impl FileConfig {
    /// The BA scenario the study drivers run on.
    pub fn scenario(&self) -> Result<Scenario> {
        match self.experiment.graph {
            GraphSpec::BarabasiAlbert { n, avg_degree } => {
                Ok(Scenario::new(n, avg_degree, self.experiment.engine.scheduler.synchrony()))
            }
            _ => Err(Error::InvalidParameter(
                "fault, deviation and fairness experiments need graph.kind = ba".into(),
            )),
        }
    }

    /// Copy of the experiment with the sweep axis set to `x`.
    pub fn at(&self, axis: SweepAxis, x: f64) -> Result<ExperimentConfig> {
        let mut cfg = self.experiment.clone();
        match axis {
            SweepAxis::N => {
                let n = x as usize;
                if n as f64 != x || n == 0 {
                    return Err(Error::InvalidParameter(format!("sweep value {x} is not a positive size")));
                }
                cfg.graph = match cfg.graph {
                    GraphSpec::BarabasiAlbert { avg_degree, .. } => GraphSpec::BarabasiAlbert { n, avg_degree },
                    GraphSpec::ErdosRenyi { avg_degree, .. } => GraphSpec::ErdosRenyi { n, avg_degree },
                    GraphSpec::Path { .. } => GraphSpec::Path { n },
                    GraphSpec::Cycle { .. } => GraphSpec::Cycle { n },
                    GraphSpec::Complete { .. } => GraphSpec::Complete { n },
                    GraphSpec::Star { .. } => GraphSpec::Star { leaves: n.saturating_sub(1) },
                    GraphSpec::EdgeList { .. } => {
                        return Err(Error::InvalidParameter("cannot resize a graph read from a file".into()))
                    }
                };
            }
            SweepAxis::Synchrony => {
                cfg.engine.scheduler = SchedulerPolicy::new(
                    SchedulerKind::DistributedRandomized,
                    x,
                    cfg.engine.scheduler.adversary,
                )?;
            }
            SweepAxis::AvgDegree => {
                cfg.graph = match cfg.graph {
                    GraphSpec::BarabasiAlbert { n, .. } => GraphSpec::BarabasiAlbert { n, avg_degree: x },
                    GraphSpec::ErdosRenyi { n, .. } => GraphSpec::ErdosRenyi { n, avg_degree: x },
                    _ => return Err(Error::InvalidParameter("avg_degree sweeps need a ba or er graph".into())),
                };
            }
        }
        Ok(cfg)
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line,
                message: format!("invalid value `{raw}` for `{key}`"),
            }),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str, context: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| Error::Parse {
            line: self.get(context).map_or(0, |(l, _)| l),
            message: format!("missing `{key}`"),
        })
    }

    /// Re-anchors a semantic error at the line of `key`.
    fn at<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Parse { .. } | Error::UnknownAlgorithm(_) => e,
            other => Error::Parse {
                line: self.get(key).map_or(0, |(l, _)| l),
                message: other.to_string(),
            },
        })
    }
}

fn split_lines(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some((first, _)) = map.insert(key.to_string(), (line, value.trim().to_string())) {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` already set on line {first}"),
            });
        }
    }
    Ok(Entries { map })
}

/// Parses a configuration. `graph.file` paths are read relative to `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<FileConfig> {
    let e = split_lines(text)?;
    let algorithm: AlgorithmName = match e.get("algorithm") {
        None => {
            return Err(Error::Parse {
                line: 0,
                message: "missing `algorithm`".into(),
            })
        }
        Some((_, raw)) => raw.parse()?,
    };

    let kind_name: String = e.or("graph.kind", "path".to_string())?;
    let graph = e.at("graph.kind", graph_spec(&e, &kind_name, base))?;

    let sched_kind: SchedulerKind = e.at("scheduler.kind", e.or("scheduler.kind", "central".to_string())?.parse())?;
    let synchrony: f64 = e.or("scheduler.synchrony", 1.0)?;
    let adversary: Adversary = e.at(
        "scheduler.adversary",
        e.or("scheduler.adversary", "max-id-first".to_string())?.parse(),
    )?;
    let scheduler = e.at("scheduler.synchrony", SchedulerPolicy::new(sched_kind, synchrony, adversary))?;

    let mut cfg = ExperimentConfig::new(algorithm, graph);
    cfg.engine.scheduler = scheduler;
    cfg.engine.gain = e.at(
        "gain.zeta",
        GainParams::new(e.or("gain.theta", 10.0)?, e.or("gain.zeta", 1.0)?),
    )?;

    let game = &mut cfg.engine.game;
    game.delta = e.or("game.delta", game.delta)?;
    game.horizon = e.or("game.horizon", game.horizon)?;
    game.max_players = e.or("game.max_players", game.max_players)?;
    game.p_floor = e.or("game.p_floor", game.p_floor)?;
    let game_check = game.validate();
    e.at("game.delta", game_check)?;

    let prob = &mut cfg.engine.prob;
    prob.mode = match e.or("prob.mode", "fixed".to_string())?.to_ascii_lowercase().as_str() {
        "fixed" => GameMode::Fixed,
        "game" => GameMode::Game,
        other => {
            return e.at(
                "prob.mode",
                Err(Error::InvalidParameter(format!("unknown probability mode `{other}`"))),
            )
        }
    };
    prob.p = e.or("prob.p", prob.p)?;
    prob.q = e.parse("prob.q")?;
    prob.epsilon = e.or("prob.epsilon", prob.epsilon)?;
    prob.p_c = e.or("prob.p_c", prob.p_c)?;
    for (key, value) in [("prob.p", Some(prob.p)), ("prob.q", prob.q), ("prob.epsilon", Some(prob.epsilon)), ("prob.p_c", Some(prob.p_c))] {
        if value.is_some_and(|x| !(0.0..=1.0).contains(&x)) {
            return e.at(key, Err(Error::InvalidParameter(format!("`{key}` must lie in [0, 1]"))));
        }
    }

    cfg.engine.estimator.policy = match e.or("estimator.policy", "myopic".to_string())?.to_ascii_lowercase().as_str() {
        "myopic" => PolicyOracle::Myopic,
        "fixed" => PolicyOracle::FixedP(e.required("estimator.p", "estimator.policy")?),
        other => {
            return e.at(
                "estimator.policy",
                Err(Error::InvalidParameter(format!("unknown estimator policy `{other}`"))),
            )
        }
    };
    cfg.engine.estimator.samples = e.or("estimator.samples", cfg.engine.estimator.samples)?;

    let dev_kind: DeviationKind = e.at("deviation.kind", e.or("deviation.kind", "none".to_string())?.parse())?;
    let mut dev_policy: DeviationPolicy =
        e.at("deviation.policy", e.or("deviation.policy", "utility".to_string())?.parse())?;
    if let Some(w) = e.parse::<f64>("deviation.w")? {
        dev_policy = DeviationPolicy::Probability(w);
    }
    cfg.engine.deviation = e.at("deviation.w", DeviationModel::new(dev_kind, dev_policy))?;

    cfg.repetitions = e.or("repetitions", 1)?;
    cfg.round_limit = e.parse("round_limit")?;
    cfg.seed = e.or("seed", 0)?;
    cfg.init = match e.or("init", "random".to_string())?.to_ascii_lowercase().as_str() {
        "random" => InitSpec::Random,
        "all_out" => InitSpec::AllOut,
        "all_in" => InitSpec::AllIn,
        other => return e.at("init", Err(Error::InvalidParameter(format!("unknown init `{other}`")))),
    };
    cfg.fixed_graph = e.or("graph.fixed", false)?;
    e.at("repetitions", cfg.validate())?;

    let kind: ExperimentKind = e.at("experiment", e.or("experiment", "run".to_string())?.parse())?;
    let fairness_graphs: usize = e.or("fairness.graphs", 10)?;

    let sweep = match e.get("sweep.axis") {
        None => None,
        Some(_) => {
            let axis: SweepAxis = e.at("sweep.axis", e.required::<String>("sweep.axis", "sweep.axis")?.parse())?;
            let (line, raw) = e.get("sweep.values").ok_or_else(|| Error::Parse {
                line: e.get("sweep.axis").map_or(0, |(l, _)| l),
                message: "missing `sweep.values`".into(),
            })?;
            let values = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid sweep value `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty sweep axis".into(),
                });
            }
            Some(Sweep { axis, values })
        }
    };

    let out = FileConfig {
        experiment: cfg,
        kind,
        fairness_graphs,
        sweep,
    };
    if kind != ExperimentKind::Runs {
        e.at("graph.kind", out.scenario())?;
    }
    Ok(out)
}

fn graph_spec(e: &Entries, kind: &str, base: Option<&Path>) -> Result<GraphSpec> {
    let n = || e.required::<usize>("graph.n", "graph.kind");
    let degree = || e.required::<f64>("graph.avg_degree", "graph.kind");
    Ok(match kind.to_ascii_lowercase().as_str() {
        "ba" => GraphSpec::BarabasiAlbert {
            n: n()?,
            avg_degree: degree()?,
        },
        "er" => GraphSpec::ErdosRenyi {
            n: n()?,
            avg_degree: degree()?,
        },
        "path" => GraphSpec::Path { n: n()? },
        "cycle" => GraphSpec::Cycle { n: n()? },
        "complete" => GraphSpec::Complete { n: n()? },
        "star" => GraphSpec::Star {
            leaves: e.required("graph.leaves", "graph.kind")?,
        },
        "file" => {
            let (line, name) = e.get("graph.file").ok_or_else(|| Error::Parse {
                line: e.get("graph.kind").map_or(0, |(l, _)| l),
                message: "missing `graph.file`".into(),
            })?;
            let path = base.map_or_else(|| Path::new(name).to_path_buf(), |b| b.join(name));
            let text = std::fs::read_to_string(&path).map_err(|err| Error::Parse {
                line,
                message: format!("cannot read {}: {err}", path.display()),
            })?;
            GraphSpec::EdgeList { text }
        }
        other => return Err(Error::InvalidParameter(format!("unknown graph kind `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = parse_config("algorithm = bMIS\ngraph.kind = path\ngraph.n = 3\nscheduler.kind = synchronous\n", None).unwrap();
        assert_eq!(c.experiment.algorithm, AlgorithmName::BMis);
        assert_eq!(c.experiment.graph, GraphSpec::Path { n: 3 });
        assert_eq!(c.kind, ExperimentKind::Runs);
        assert_eq!(c.experiment.repetitions, 1);
    }

    #[test]
    fn errors_are_line_anchored() {
        let err = parse_config("algorithm = bMIS\n\ngraph.n = three\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_config("algorithm = bMIS\nbogus = 1\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_config("algorithm = bMIS\ngraph.n = 3\nscheduler.kind = distributed\nscheduler.synchrony = 1.5\n", None)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_config("algorithm = zMIS\n", None).unwrap_err();
        assert!(err.to_string().contains("field `algorithm`"));
    }

    #[test]
    fn sweep_values() {
        let text = "algorithm = vtMIS\ngraph.kind = ba\ngraph.n = 10\ngraph.avg_degree = 4\nsweep.axis = n\nsweep.values = 10, 50,100\n";
        let c = parse_config(text, None).unwrap();
        let sweep = c.sweep.clone().unwrap();
        assert_eq!(sweep.values, vec![10.0, 50.0, 100.0]);
        assert_eq!(c.at(sweep.axis, 50.0).unwrap().graph, GraphSpec::BarabasiAlbert { n: 50, avg_degree: 4.0 });
        let empty = parse_config("algorithm = vtMIS\ngraph.n = 3\nsweep.axis = n\nsweep.values = \n", None).unwrap_err();
        assert!(matches!(empty, Error::Parse { line: 4, .. }));
    }
}
