//! Command-line front end: `run`, `sweep` and `verify`.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{build, reference_unique_mis, AlgorithmName, ProbContext};
use crate::error::{Error, Result};
use crate::graph::{connected_catalog, Graph};
use crate::model::{is_mis, Configuration, GainParams, Var};
use crate::sim::experiments::{deviation_study, fairness_study, fault_trials, summarize_faults};
use crate::sim::run_batch;
use crate::verify::{
    enumerate_legitimate, fault_containment_audit, nash_check, weak_stabilization_check, CheckRecord, Verdict,
    MAX_NASH_DEPTH,
};

use config::{parse_config, ExperimentKind, FileConfig};
use report::{fault_csv, plot_data, results_csv, sweep_csv, to_json, write, RunAggregate, SweepRow};

pub const SEED_ENV: &str = "SELFSTAB_SEED";

/// Exit status for malformed configurations and arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while running, including failed verdicts.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "selfstab", version, about = "Self-stabilizing MIS clustering among selfish agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Overrides the configuration seed and SELFSTAB_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for repetitions.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Summary printed to stdout; a plain table when absent.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs the experiment described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Repeats the experiment for every value of the sweep axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a brute-force oracle suite over small graphs.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Largest graph size checked.
        #[arg(long, default_value_t = 5)]
        size: usize,
        /// Every algorithm when absent.
        #[arg(long)]
        algorithm: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Legitimacy,
    Nash,
    Containment,
    Weakstab,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Legitimacy => "legitimacy",
            Suite::Nash => "nash",
            Suite::Containment => "containment",
            Suite::Weakstab => "weakstab",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Config(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn execute(cli: Cli) -> std::result::Result<i32, Failure> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            cmd_run(&cfg, &common)?;
            Ok(0)
        }
        Command::Sweep { config, common } => {
            let cfg = load(&config, &common)?;
            cmd_sweep(&cfg, &common)?;
            Ok(0)
        }
        Command::Verify {
            suite,
            size,
            algorithm,
            common,
        } => {
            let algorithms = match algorithm {
                Some(name) => vec![name.parse::<AlgorithmName>().map_err(Failure::Config)?],
                None => AlgorithmName::ALL.to_vec(),
            };
            init_workers(common.workers);
            let seed = resolve_seed(common.seed, 0).map_err(Failure::Config)?;
            let report = cmd_verify(suite, size, &algorithms, seed)?;
            write(&common.out, &format!("verify_{}.json", suite.name()), &to_json(&report))?;
            match common.format {
                Some(Format::Json) => print!("{}", to_json(&report)),
                Some(Format::Csv) => print!("{}", verify_csv(&report)),
                None => println!(
                    "{} (size ≤ {}): {:?}, {} checked, {} failed, {} skipped",
                    report.suite, report.size_bound, report.verdict, report.checked, report.failed, report.skipped
                ),
            }
            Ok(if report.verdict == Verdict::Fail { EXIT_FAILURE } else { 0 })
        }
    }
}

fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        // The global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Flag, then environment, then configuration.
fn resolve_seed(flag: Option<u64>, configured: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV} is not an unsigned integer: `{raw}`"))),
        Err(_) => Ok(configured),
    }
}

fn load(path: &Path, common: &Common) -> std::result::Result<FileConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(Error::Io(format!("cannot read {}: {e}", path.display()))))?;
    let mut cfg = parse_config(&text, path.parent()).map_err(|e| Failure::Config(anchor(path, e)))?;
    cfg.experiment.seed = resolve_seed(common.seed, cfg.experiment.seed).map_err(Failure::Config)?;
    init_workers(common.workers);
    Ok(cfg)
}

fn anchor(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

pub fn cmd_run(cfg: &FileConfig, common: &Common) -> Result<()> {
    let exp = &cfg.experiment;
    let out = &common.out;
    match cfg.kind {
        ExperimentKind::Runs => {
            let results = run_batch(exp)?;
            let aggregate = RunAggregate::from_results(&results);
            let csv = results_csv(&results);
            write(out, "results.csv", &csv)?;
            write(out, "aggregate.json", &to_json(&aggregate))?;
            emit(common.format, &csv, &to_json(&aggregate), &aggregate.table());
        }
        ExperimentKind::Fault => {
            let trials = fault_trials(exp.algorithm, &cfg.scenario()?, exp.repetitions, exp.seed)?;
            let summary = summarize_faults(exp.algorithm, &trials)?;
            let csv = fault_csv(&trials);
            write(out, "results.csv", &csv)?;
            write(out, "aggregate.json", &to_json(&summary))?;
            let table = format!(
                "algorithm     {}\ntrials        {}\nmoves         {:.4}\nrounds        {:.4}\nsuccess rate  {:.4}\nmax depth     {}\n",
                summary.algorithm, summary.trials, summary.avg_moves, summary.avg_rounds, summary.success_rate, summary.max_depth
            );
            emit(common.format, &csv, &to_json(&summary), &table);
        }
        ExperimentKind::Deviation => {
            let summary = deviation_study(
                exp.algorithm,
                &cfg.scenario()?,
                exp.engine.deviation,
                exp.repetitions,
                exp.seed,
            )?;
            let csv = format!(
                "algorithm,kind,runs,baseline_rounds,reliability,avg_deviations,checked,successes,success_rate,availability\n{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.6}\n",
                summary.algorithm,
                summary.model.kind,
                summary.runs,
                summary.baseline_rounds,
                summary.reliability,
                summary.avg_deviations,
                summary.checked,
                summary.successes,
                summary.success_rate,
                summary.availability
            );
            write(out, "results.csv", &csv)?;
            write(out, "aggregate.json", &to_json(&summary))?;
            let table = format!(
                "algorithm     {}\ndeviation     {}\nreliability   {:.4}\ndeviations    {:.4}\nsuccess rate  {:.4}\navailability  {:.4}\n",
                summary.algorithm,
                summary.model.kind,
                summary.reliability,
                summary.avg_deviations,
                summary.success_rate,
                summary.availability
            );
            emit(common.format, &csv, &to_json(&summary), &table);
        }
        ExperimentKind::Fairness => {
            let summary = fairness_study(
                exp.algorithm,
                &cfg.scenario()?,
                cfg.fairness_graphs,
                exp.repetitions,
                exp.seed,
            )?;
            let mut csv = String::from("graph,jain_index\n");
            for (k, j) in summary.jain_per_graph.iter().enumerate() {
                csv.push_str(&format!("{k},{j:.6}\n"));
            }
            write(out, "results.csv", &csv)?;
            write(out, "aggregate.json", &to_json(&summary))?;
            let table = format!(
                "algorithm     {}\ngraphs        {} × {} runs\nfairness      {:.4}\n",
                summary.algorithm, summary.graphs, summary.runs_per_graph, summary.jain
            );
            emit(common.format, &csv, &to_json(&summary), &table);
        }
    }
    Ok(())
}

fn emit(format: Option<Format>, csv: &str, json: &str, table: &str) {
    match format {
        Some(Format::Csv) => print!("{csv}"),
        Some(Format::Json) => print!("{json}"),
        None => print!("{table}"),
    }
}

pub fn cmd_sweep(cfg: &FileConfig, common: &Common) -> Result<()> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sweep needs `sweep.axis` and `sweep.values`".into()))?;
    if sweep.values.is_empty() {
        return Err(Error::InvalidParameter("empty sweep axis".into()));
    }
    let mut rows = Vec::with_capacity(sweep.values.len());
    for &x in &sweep.values {
        let exp = cfg.at(sweep.axis, x)?;
        let results = run_batch(&exp)?;
        rows.push(SweepRow {
            axis: sweep.axis.name().to_string(),
            value: x,
            aggregate: RunAggregate::from_results(&results),
        });
    }
    let csv = sweep_csv(&rows);
    let rounds: Vec<_> = rows.iter().map(|r| (r.value, r.aggregate.avg_rounds, r.aggregate.stderr_rounds)).collect();
    let moves: Vec<_> = rows.iter().map(|r| (r.value, r.aggregate.avg_moves, r.aggregate.stderr_moves)).collect();
    write(&common.out, "sweep.csv", &csv)?;
    write(&common.out, "sweep.json", &to_json(&rows))?;
    write(&common.out, "rounds.dat", &plot_data(&rounds))?;
    write(&common.out, "moves.dat", &plot_data(&moves))?;
    match common.format {
        Some(Format::Json) => print!("{}", to_json(&rows)),
        _ => print!("{csv}"),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub size_bound: usize,
    pub verdict: Verdict,
    pub checked: usize,
    pub failed: usize,
    pub skipped: usize,
    pub records: Vec<CheckRecord>,
}

/// Catalog graphs up to six nodes, then paths, cycles and stars.
pub fn suite_graphs(size: usize) -> Vec<Graph> {
    let mut graphs: Vec<Graph> = (1..=size.min(6)).flat_map(connected_catalog).collect();
    for n in 7..=size {
        graphs.push(Graph::path(n));
        graphs.push(Graph::cycle(n));
        graphs.push(Graph::star(n - 1));
    }
    graphs
}

fn instance(g: &Graph) -> String {
    format!("n={} edges={}", g.n(), g.to_edge_list().trim().replace('\n', ";"))
}

pub fn cmd_verify(suite: Suite, size: usize, algorithms: &[AlgorithmName], seed: u64) -> Result<VerifyReport> {
    let graphs = suite_graphs(size);
    let jobs: Vec<(AlgorithmName, &Graph)> = algorithms
        .iter()
        .flat_map(|&a| graphs.iter().map(move |g| (a, g)))
        .collect();
    let records: Vec<CheckRecord> = jobs
        .par_iter()
        .map(|&(a, g)| check_one(suite, a, g, seed))
        .collect::<Result<_>>()?;
    let count = |v: Verdict| records.iter().filter(|r| r.verdict == v).count();
    let failed = count(Verdict::Fail);
    let skipped = count(Verdict::Skipped);
    Ok(VerifyReport {
        suite: suite.name().to_string(),
        size_bound: size,
        verdict: if failed > 0 { Verdict::Fail } else { Verdict::Pass },
        checked: records.len() - skipped,
        failed,
        skipped,
        records,
    })
}

fn record(suite: Suite, alg: AlgorithmName, g: &Graph) -> CheckRecord {
    CheckRecord {
        check: suite.name().to_string(),
        algorithm: alg.to_string(),
        instance: instance(g),
        verdict: Verdict::Pass,
        bounds: BTreeMap::from([("n".to_string(), g.n())]),
        measures: BTreeMap::new(),
        note: None,
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn check_one(suite: Suite, alg: AlgorithmName, g: &Graph, seed: u64) -> Result<CheckRecord> {
    let desc = build(alg);
    let ctx = ProbContext::default();
    let mut rec = record(suite, alg, g);
    let outcome: Result<()> = (|| {
        match suite {
            Suite::Legitimacy => {
                let set = enumerate_legitimate(&desc, g)?;
                rec.measures.insert("count".into(), set.len() as f64);
                rec.verdict = if alg == AlgorithmName::DpMis {
                    let unique = Configuration::from_in_set(g.n(), &reference_unique_mis(g)).digest(&[Var::State]);
                    pass_if(set.len() == 1 && set.contains(&unique))
                } else {
                    pass_if(!set.is_empty())
                };
            }
            Suite::Nash => {
                // Every non-MIS state assignment must admit an improving move.
                let params = GainParams::default();
                let mut counterexamples = 0usize;
                let mut total = 0usize;
                for mask in 0u64..1 << g.n() {
                    let c = Configuration::from_mask(g.n(), mask);
                    if is_mis(g, &c) {
                        continue;
                    }
                    total += 1;
                    if nash_check(&desc, g, &c, &params, &ctx, MAX_NASH_DEPTH)?.is_nash {
                        counterexamples += 1;
                        rec.note.get_or_insert_with(|| format!("no improving move at {}", c.serialize(&[Var::State])));
                    }
                }
                rec.bounds.insert("depth".into(), MAX_NASH_DEPTH);
                rec.measures.insert("non_mis".into(), total as f64);
                rec.measures.insert("counterexamples".into(), counterexamples as f64);
                rec.verdict = pass_if(counterexamples == 0);
            }
            Suite::Containment => {
                let r = fault_containment_audit(&desc, g, &ctx, 10, seed)?;
                let zero = r.depth_histogram.get(&0).copied().unwrap_or(0);
                let recovered: usize = r.depth_histogram.values().sum();
                rec.bounds.insert("samples".into(), r.samples_per_case);
                rec.bounds.insert("step_limit".into(), r.step_limit);
                rec.measures.insert("cases".into(), r.cases as f64);
                rec.measures.insert("max_depth".into(), r.max_depth as f64);
                rec.measures.insert(
                    "depth0_share".into(),
                    if recovered == 0 { 1.0 } else { zero as f64 / recovered as f64 },
                );
                rec.measures.insert("restored_share".into(), r.restored_share());
                rec.measures.insert("unrecovered".into(), r.unrecovered as f64);
                rec.verdict = pass_if(r.unrecovered == 0);
            }
            Suite::Weakstab => {
                rec.verdict = pass_if(weak_stabilization_check(&desc, g, &ctx)?);
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(rec),
        Err(Error::BoundExceeded { what, limit, got }) => {
            rec.verdict = Verdict::Skipped;
            rec.note = Some(format!("{what} bound exceeded: {got} > {limit}"));
            Ok(rec)
        }
        Err(Error::Contract(msg)) => {
            rec.verdict = Verdict::Fail;
            rec.note = Some(msg);
            Ok(rec)
        }
        Err(e) => Err(e),
    }
}

fn verify_csv(report: &VerifyReport) -> String {
    let mut out = String::from("check,algorithm,instance,verdict\n");
    for r in &report.records {
        out.push_str(&format!("{},{},\"{}\",{:?}\n", r.check, r.algorithm, r.instance, r.verdict));
    }
    out
}
