//! Acceptance run: every criterion at its stated tolerance, one line each.
//!
//! Built without the libtest harness so the lines always reach stdout;
//! the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;

use selfstab::algorithms::{build, reference_unique_mis, AlgorithmName, GameMode, ProbContext};
use selfstab::game::{
    hba_expected_payoff, solve_stage_bne, transition_prob, Action, ActionSet, BeliefState, GameConfig, GameRules,
    JointType, LocalGame, TypeBelief,
};
use selfstab::graph::{connected_catalog, generate_ba, generate_er, Graph};
use selfstab::model::{is_mis, Configuration, GainParams, Status, Var};
use selfstab::rng::seeded;
use selfstab::scheduler::SchedulerPolicy;
use selfstab::selfish::{DeviationKind, DeviationModel, DeviationPolicy};
use selfstab::sim::experiments::{
    deviation_study, engine_for, fairness_study, fault_study, outcome_census, scaling_point, Scenario,
};
use selfstab::sim::{jain_index, EngineConfig};
use selfstab::verify::nash_check;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

const FAULT_TRIALS: usize = 10_000;

fn fault_scenario() -> Scenario {
    Scenario::new(40, 6.0, 0.8)
}

fn c1_pf_fault() -> Outcome {
    let s = fault_study(AlgorithmName::PfMis, &fault_scenario(), FAULT_TRIALS, 101).unwrap();
    let pass = s.skipped == 0
        && s.unconverged == 0
        && s.single_move_share == 1.0
        && s.avg_moves == 1.0
        && s.success_rate == 0.0
        && within(s.avg_rounds, 1.25, 0.10);
    outcome(
        pass,
        format!(
            "trials {} moves {:.4} one-move share {:.4} success {:.4} rounds {:.4} max depth {}",
            s.trials, s.avg_moves, s.single_move_share, s.success_rate, s.avg_rounds, s.max_depth
        ),
    )
}

fn c2_dt_fault() -> Outcome {
    let s = fault_study(AlgorithmName::DtMis, &fault_scenario(), FAULT_TRIALS, 102).unwrap();
    let pass = s.skipped == 0 && s.unconverged == 0 && s.avg_moves == 1.0 && s.success_rate == 0.0;
    outcome(
        pass,
        format!(
            "trials {} moves {:.4} success {:.4} rounds {:.4}",
            s.trials, s.avg_moves, s.success_rate, s.avg_rounds
        ),
    )
}

fn c3_b_fault() -> Outcome {
    let s = fault_study(AlgorithmName::BMis, &fault_scenario(), FAULT_TRIALS, 103).unwrap();
    let pass = s.skipped == 0 && within(s.success_rate, 0.20, 0.05) && within(s.avg_moves, 2.93, 0.3);
    outcome(
        pass,
        format!(
            "trials {} success {:.4} moves {:.4} rounds {:.4}",
            s.trials, s.success_rate, s.avg_moves, s.avg_rounds
        ),
    )
}

fn c4_dp_unique() -> Outcome {
    let scenario = Scenario::new(40, 6.0, 0.8);
    let g = scenario.graph(104).unwrap();
    let census = outcome_census(AlgorithmName::DpMis, &g, &engine_for(&scenario).unwrap(), 1000, 104).unwrap();
    let reference = Configuration::from_in_set(g.n(), &reference_unique_mis(&g)).digest(&[Var::State]);
    let pass = census.len() == 1 && census.get(&reference) == Some(&1000);
    outcome(pass, format!("distinct finals {} reference count {:?}", census.len(), census.get(&reference)))
}

fn c5_dp_immunity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, degree) in [("sparse", 4.0), ("dense", 20.0)] {
        let scenario = Scenario::new(100, degree, 0.8);
        for kind in [DeviationKind::Violation, DeviationKind::Deflection] {
            let model = DeviationModel::new(kind, DeviationPolicy::Utility).unwrap();
            let s = deviation_study(AlgorithmName::DpMis, &scenario, model, 100, 105).unwrap();
            pass &= s.success_rate == 0.0 && s.successes == 0 && s.reliability == 1.0;
            parts.push(format!(
                "{label}/{kind}: success {:.2} ({} of {} checked) reliability {:.2}",
                s.success_rate, s.successes, s.checked, s.reliability
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c6_nash_oracle() -> Outcome {
    let params = GainParams::default();
    let ctx = ProbContext::default();
    let mut checked = 0usize;
    let mut counterexamples = 0usize;
    let mut graphs = 0usize;
    for n in 1..=5 {
        for g in connected_catalog(n) {
            graphs += 1;
            for alg in AlgorithmName::ALL {
                let desc = build(alg);
                for mask in 0u64..1 << n {
                    let c = Configuration::from_mask(n, mask);
                    if is_mis(&g, &c) {
                        continue;
                    }
                    checked += 1;
                    if nash_check(&desc, &g, &c, &params, &ctx, 8).unwrap().is_nash {
                        counterexamples += 1;
                    }
                }
            }
        }
    }
    outcome(
        counterexamples == 0 && checked > 0,
        format!("{graphs} graphs, {checked} non-MIS (algorithm, configuration) pairs, {counterexamples} counterexamples"),
    )
}

fn c7_scaling() -> Outcome {
    let mut engine = EngineConfig {
        scheduler: SchedulerPolicy::synchronous(),
        ..EngineConfig::default()
    };
    engine.prob.mode = GameMode::Fixed;
    engine.prob.p = 0.3;
    let points: Vec<_> = [50, 100, 200]
        .into_iter()
        .map(|n| scaling_point(AlgorithmName::VtMis, n, 6.0, &engine, 200, 107).unwrap())
        .collect();
    let ratio = points[2].mean_rounds / points[0].mean_rounds;
    let per_n: Vec<f64> = points.iter().map(|p| p.mean_moves / p.n as f64).collect();
    let avg = per_n.iter().sum::<f64>() / per_n.len() as f64;
    let stable = per_n.iter().all(|&x| (x - avg).abs() <= 0.3 * avg);
    let all_converged = points.iter().all(|p| p.converged == p.runs);
    outcome(
        ratio <= 2.5 && stable && all_converged,
        format!(
            "rounds {:.2}/{:.2}/{:.2} ratio {:.3}, moves/n {:.3}/{:.3}/{:.3}",
            points[0].mean_rounds, points[1].mean_rounds, points[2].mean_rounds, ratio, per_n[0], per_n[1], per_n[2]
        ),
    )
}

/// Posterior of one agent from the full joint, by explicit numerator and
/// denominator sums.
fn brute_force_posterior(priors: &[f64], u: usize, likelihood: [f64; 2]) -> Vec<f64> {
    let k = priors.len();
    let mut numer = vec![0.0; k];
    let mut denom = 0.0;
    for bits in 0u32..1 << k {
        let mut joint = 1.0;
        for (i, &p_in) in priors.iter().enumerate() {
            joint *= if bits >> i & 1 == 1 { p_in } else { 1.0 - p_in };
        }
        let own_in = bits >> u & 1 == 1;
        let w = joint * if own_in { likelihood[0] } else { likelihood[1] };
        denom += w;
        for (i, slot) in numer.iter_mut().enumerate() {
            if bits >> i & 1 == 1 {
                *slot += w;
            }
        }
    }
    numer.iter().map(|x| x / denom).collect()
}

fn random_game(rng: &mut impl Rng) -> (LocalGame, BeliefState) {
    let g = loop {
        let n = rng.gen_range(2..8);
        if let Ok(g) = generate_er(n, 0.5, rng.gen()) {
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
    let cfg = GameConfig::default();
    let game = LocalGame::build(&g, &c, focal, rules, |_| false, GainParams::default(), 0.8, &cfg).unwrap();
    let mut b = BeliefState::new();
    for &u in &game.locality.boundary {
        b.set(u, TypeBelief::from_out(rng.gen()));
    }
    (game, b)
}

/// Largest gain any player type gets by a pure deviation, computed with the
/// literal payoff sum.
fn literal_regret(game: &LocalGame, belief: &BeliefState, out: &selfstab::game::SolveOutput) -> f64 {
    let typed = game.typed_players();
    let mut worst: f64 = 0.0;
    for &pos in &game.players {
        let z = game.locality.members[pos];
        let owns: Vec<Option<Status>> = if typed.contains(&z) {
            vec![Some(Status::In), Some(Status::Out)]
        } else {
            vec![None]
        };
        for own in owns {
            let theta = match own {
                Some(t) => JointType::new(vec![z], vec![t]),
                None => JointType::new(vec![], vec![]),
            };
            if game.available_actions(&game.lambda, &theta, z) != ActionSet::Both {
                continue;
            }
            let mut b = belief.clone();
            if let Some(t) = own {
                b.set(z, TypeBelief::from_out(if t == Status::Out { 1.0 } else { 0.0 }));
            }
            let switch = hba_expected_payoff(game, z, Action::Switch, &b, &out.profile, game.horizon).unwrap();
            let keep = hba_expected_payoff(game, z, Action::Preserve, &b, &out.profile, game.horizon).unwrap();
            let x = out.profile.switch_prob(pos, own);
            let mixed = x * switch + (1.0 - x) * keep;
            worst = worst.max(switch.max(keep) - mixed);
        }
    }
    worst
}

fn c8_game_oracles() -> Outcome {
    let mut rng = seeded(108);
    // Posteriors.
    let mut max_err: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.gen_range(1..6);
        let priors: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.99)).collect();
        let mut belief = BeliefState::new();
        for (i, &p) in priors.iter().enumerate() {
            belief.set(i, TypeBelief::from_out(1.0 - p));
        }
        let u = rng.gen_range(0..k);
        let likelihood = [rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0)];
        let observed = if rng.gen() { Action::Switch } else { Action::Preserve };
        let post = belief
            .posterior(u, observed, |t, _| if t == Status::In { likelihood[0] } else { likelihood[1] })
            .unwrap();
        let oracle = brute_force_posterior(&priors, u, likelihood);
        for (i, &p) in oracle.iter().enumerate() {
            max_err = max_err.max((post.prob(i, Status::In) - p).abs());
            max_err = max_err.max((post.prob(i, Status::Out) - (1.0 - p)).abs());
        }
    }
    let posteriors_ok = max_err <= 1e-12;

    // Transition rows over every locality with at most 12 boundary members.
    let mut rows = 0usize;
    let mut row_err: f64 = 0.0;
    let mut graphs: Vec<Graph> = (1..=5).flat_map(connected_catalog).collect();
    for seed in 0..4 {
        graphs.push(generate_ba(60, 3, seed).unwrap());
    }
    for g in &graphs {
        for v in 0..g.n() {
            let loc = g.locality(v, 2);
            if loc.boundary.len() > 12 {
                continue;
            }
            let m = loc.members.len();
            let lambda: Vec<Status> = (0..m).map(|_| if rng.gen() { Status::In } else { Status::Out }).collect();
            let actions: Vec<Action> = (0..m)
                .map(|_| if rng.gen::<f64>() < 0.5 { Action::Switch } else { Action::Preserve })
                .collect();
            let switchers: Vec<usize> = (0..m).filter(|&i| actions[i] == Action::Switch).take(16).collect();
            let mut actions = actions;
            for (i, a) in actions.iter_mut().enumerate() {
                if !switchers.contains(&i) {
                    *a = Action::Preserve;
                }
            }
            let p_s = rng.gen_range(0.05..1.0);
            let mut total = 0.0;
            for bits in 0u32..1 << switchers.len() {
                let mut next = lambda.clone();
                for (j, &i) in switchers.iter().enumerate() {
                    if bits >> j & 1 == 1 {
                        next[i] = lambda[i].flipped();
                    }
                }
                total += transition_prob(&lambda, &actions, &next, p_s);
            }
            row_err = row_err.max((total - 1.0).abs());
            rows += 1;
        }
    }
    let rows_ok = row_err <= 1e-12;

    // Equilibria.
    let mut worst_regret: f64 = 0.0;
    for _ in 0..100 {
        let (game, belief) = random_game(&mut rng);
        let out = solve_stage_bne(&game, &belief).unwrap();
        worst_regret = worst_regret.max(literal_regret(&game, &belief, &out));
    }
    let bne_ok = worst_regret <= 1e-6;
    outcome(
        posteriors_ok && rows_ok && bne_ok,
        format!(
            "posterior error {max_err:.2e} over 10^4; {rows} transition rows, error {row_err:.2e}; worst BNE regret {worst_regret:.2e} over 100 games"
        ),
    )
}

fn c9_fairness() -> Outcome {
    let exact = jain_index(&[7.0; 12]).unwrap() == 1.0;
    let mut pass = exact;
    let mut parts = Vec::new();
    let id_free = [AlgorithmName::BMis, AlgorithmName::VtMis, AlgorithmName::PfMis, AlgorithmName::DtMis];
    for (label, scenario, graphs, runs) in [
        ("sparse", Scenario::new(50, 4.0, 0.7), 10, 30),
        ("medium", Scenario::new(50, 6.0, 0.7), 10, 30),
        ("dense", Scenario::new(500, 24.0, 0.7), 3, 3),
    ] {
        let jain: BTreeMap<AlgorithmName, f64> = AlgorithmName::ALL
            .into_iter()
            .map(|a| (a, fairness_study(a, &scenario, graphs, runs, 109).unwrap().jain))
            .collect();
        let vp = jain[&AlgorithmName::VpMis];
        let dp = jain[&AlgorithmName::DpMis];
        let floor = id_free.iter().map(|a| jain[a]).fold(f64::INFINITY, f64::min);
        let ok = vp < dp && dp <= floor;
        pass &= ok;
        parts.push(format!(
            "{label}: vp {vp:.4} < dp {dp:.4} <= id-free min {floor:.4} {}",
            if ok { "holds" } else { "violated" }
        ));
    }
    outcome(pass, format!("equal profits give exactly 1: {exact}; {}", parts.join("; ")))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        (
            "runs",
            "algorithm = vtMIS\ngraph.kind = ba\ngraph.n = 30\ngraph.avg_degree = 4\nscheduler.kind = distributed\nscheduler.synchrony = 0.7\nprob.mode = game\nrepetitions = 4\nseed = 11\n",
        ),
        (
            "fault",
            "algorithm = bMIS\nexperiment = fault\ngraph.kind = ba\ngraph.n = 40\ngraph.avg_degree = 6\nscheduler.kind = distributed\nscheduler.synchrony = 0.8\nrepetitions = 50\nseed = 12\n",
        ),
    ];
    let mut identical = true;
    let mut files = 0;
    for (name, text) in configs {
        let path = dir.path().join(format!("{name}.cfg"));
        std::fs::write(&path, text).unwrap();
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = dir.path().join(format!("{name}-{attempt}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_selfstab"))
                .args(["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .env_remove("SELFSTAB_SEED")
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "{name} run failed");
            let csv = std::fs::read(out.join("results.csv")).unwrap();
            let json = std::fs::read(out.join("aggregate.json")).unwrap();
            outputs.push((csv, json));
        }
        identical &= outputs[0] == outputs[1];
        files += 2;
    }
    outcome(identical, format!("{files} file pairs compared byte for byte"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("1 pfMIS single-fault recovery", Duration::from_secs(60), c1_pf_fault),
        ("2 dtMIS single-fault recovery", Duration::from_secs(60), c2_dt_fault),
        ("3 bMIS single-fault success and moves", Duration::from_secs(120), c3_b_fault),
        ("4 dpMIS unique outcome", Duration::from_secs(60), c4_dp_unique),
        ("5 dpMIS deviation immunity", Duration::from_secs(300), c5_dp_immunity),
        ("6 non-MIS configurations are not Nash", Duration::from_secs(300), c6_nash_oracle),
        ("7 vtMIS scaling", Duration::from_secs(180), c7_scaling),
        ("8 game-math oracles", Duration::from_secs(120), c8_game_oracles),
        ("9 fairness ordering", Duration::from_secs(180), c9_fairness),
        ("10 byte-identical reruns", Duration::from_secs(60), c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({}; {:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
