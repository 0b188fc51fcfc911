use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use selfstab::algorithms::{build, enabled_rules, reference_unique_mis, AlgorithmName, GameMode, ProbContext, RuleKind};
use selfstab::game::{
    hba_expected_payoff, Action, BeliefState, GameConfig, GameRules, LocalGame, StrategyProfile, TypeBelief,
};
use selfstab::graph::{connected_catalog, generate_ba, generate_er, Graph};
use selfstab::model::{all_mis_masks, gain, has_in_neighbor, is_mis, pending, system_property, Configuration, GainParams, Status};
use selfstab::rng::seeded;
use selfstab::scheduler::{select, Adversary, SchedulerKind, SchedulerPolicy};
use selfstab::selfish::{detect_dead_end, inject_perturbation, DeviationKind, DeviationModel, DeviationPolicy};
use selfstab::sim::{detect_converged, shared_cache, EngineConfig, Simulation, StepOutcome};
use selfstab::verify::{nash_check, successors};

fn small_graph() -> impl Strategy<Value = Graph> {
    (2usize..9, 0.2f64..0.9, any::<u64>()).prop_filter_map("disconnected", |(n, p, seed)| generate_er(n, p, seed).ok())
}

fn ba_graph() -> impl Strategy<Value = Graph> {
    (4usize..60, 1usize..4, any::<u64>()).prop_filter_map("too small", |(n, m, seed)| generate_ba(n, m, seed).ok())
}

fn check_graph(g: &Graph) -> Result<(), TestCaseError> {
    for v in 0..g.n() {
        prop_assert!(!g.has_edge(v, v));
        for &w in g.neighbors(v) {
            prop_assert!(g.neighbors(w).contains(&v));
        }
    }
    prop_assert!(g.is_connected());
    let ids: BTreeSet<u64> = g.ids().iter().copied().collect();
    prop_assert_eq!(ids.len(), g.n());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_are_simple_connected_and_uniquely_labelled(g in ba_graph(), h in small_graph()) {
        check_graph(&g)?;
        check_graph(&h)?;
    }

    #[test]
    fn localities_match_hop_distances(g in ba_graph(), k in 1usize..4) {
        for v in 0..g.n() {
            let dist = g.distances_from(v);
            let loc = g.locality(v, k);
            prop_assert!(loc.contains(v));
            let members: Vec<usize> = (0..g.n()).filter(|&u| dist[u] <= k).collect();
            let boundary: Vec<usize> = (0..g.n()).filter(|&u| dist[u] == k).collect();
            prop_assert_eq!(&loc.members, &members);
            prop_assert_eq!(&loc.boundary, &boundary);
            let one = g.locality(v, 1);
            let mut closed: Vec<usize> = g.neighbors(v).to_vec();
            closed.push(v);
            closed.sort_unstable();
            prop_assert_eq!(one.members, closed);
            if k >= 2 {
                let inner = g.locality(v, k - 1);
                prop_assert!(loc.boundary.iter().all(|u| !inner.contains(*u)));
            }
        }
    }

    #[test]
    fn gain_takes_exactly_one_case(g in small_graph(), mask in any::<u64>(), theta in 1.0f64..20.0, frac in 0.01f64..0.99) {
        let params = GainParams::new(theta, theta * frac).unwrap();
        let c = Configuration::from_mask(g.n(), mask & ((1 << g.n()) - 1));
        for v in 0..g.n() {
            let x = gain(&g, &c, v, &params);
            let cases = [params.theta - params.zeta, params.theta, 0.0];
            prop_assert_eq!(cases.iter().filter(|&&y| y == x).count(), 1);
        }
    }

    #[test]
    fn selection_is_a_nonempty_subset_of_enabled(
        n in 1usize..40,
        keep in any::<u64>(),
        round in any::<u64>(),
        master in any::<u64>(),
        kind in 0usize..4,
        p_s in 0.01f64..1.0,
    ) {
        let enabled: Vec<usize> = (0..n).filter(|v| keep >> (v % 64) & 1 == 1).collect();
        let kind = [SchedulerKind::Central, SchedulerKind::Synchronous, SchedulerKind::DistributedRandomized, SchedulerKind::Unfair][kind];
        let policy = SchedulerPolicy::new(kind, p_s, Adversary::MaxIdFirst).unwrap();
        let s = select(&policy, &enabled, round, master, None);
        prop_assert!(s.agents.iter().all(|v| enabled.contains(v)));
        prop_assert_eq!(s.agents.is_empty(), enabled.is_empty());
    }

    #[test]
    fn belief_operations_stay_normalized(priors in prop::collection::vec(0.0f64..=1.0, 1..6), pick in any::<usize>(), l_in in 0.0f64..1.0, l_out in 0.01f64..1.0) {
        let mut b = BeliefState::new();
        for (i, &p) in priors.iter().enumerate() {
            b.set(i, TypeBelief::from_out(p));
        }
        let u = pick % priors.len();
        let likely = |t: Status, _| if t == Status::In { l_in } else { l_out };
        if let Ok(post) = b.posterior(u, Action::Switch, likely) {
            for i in 0..priors.len() {
                let s = post.prob(i, Status::In) + post.prob(i, Status::Out);
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!((0.0..=1.0).contains(&post.prob(i, Status::In)));
            }
        }
    }

    #[test]
    fn perturbation_changes_one_variable(g in ba_graph(), seed in any::<u64>()) {
        let alg = build(AlgorithmName::BMis);
        let heads = reference_unique_mis(&g);
        let c = Configuration::from_in_set(g.n(), &heads);
        let v = heads[(seed as usize) % heads.len()];
        let (next, event) = inject_perturbation(&alg, &g, &c, v, 0).unwrap();
        prop_assert_eq!(event.agent, v);
        let changed = (0..g.n()).filter(|&u| c.status(u) != next.status(u)).count();
        prop_assert_eq!(changed, 1);
        prop_assert_eq!(next.states[v].parent, c.states[v].parent);
        prop_assert_eq!(&next.states[v].parents, &c.states[v].parents);
    }

    #[test]
    fn moves_never_decrease_and_converged_runs_end_in_an_mis(g in ba_graph(), alg_ix in 0usize..6, seed in any::<u64>()) {
        let name = AlgorithmName::ALL[alg_ix];
        let mut cfg = EngineConfig { scheduler: SchedulerPolicy::randomized(0.7).unwrap(), ..EngineConfig::default() };
        cfg.prob.mode = GameMode::Fixed;
        cfg.prob.p = 0.5;
        cfg.prob.p_c = 0.7;
        let initial = Configuration::random(&g, &mut seeded(seed));
        let cache = shared_cache(&cfg, seed);
        let mut sim = Simulation::new(&g, build(name), cfg, initial, seed, cache).unwrap();
        let mut last = 0;
        for _ in 0..50 * g.n() {
            let outcome = sim.step().unwrap();
            prop_assert!(sim.counters().moves >= last);
            prop_assert!(sim.counters().state_transitions <= sim.counters().moves);
            last = sim.counters().moves;
            if outcome == StepOutcome::Converged {
                prop_assert!(is_mis(&g, sim.config()));
                break;
            }
        }
    }

    #[test]
    fn converged_detection_implies_mis_with_any_secondary_variables(g in small_graph(), seed in any::<u64>(), alg_ix in 0usize..6) {
        let alg = build(AlgorithmName::ALL[alg_ix]);
        let mut rng = seeded(seed);
        let ctx = ProbContext { mode: GameMode::Game, ..ProbContext::default() };
        for _ in 0..200 {
            let c = Configuration::random(&g, &mut rng);
            if detect_converged(&alg, &g, &c, &ctx) {
                prop_assert!(is_mis(&g, &c), "{:?} quiescent off an MIS: {}", alg.name, c.serialize(alg.declared_vars));
            }
        }
    }

    #[test]
    fn vp_entry_is_a_dead_end(g in ba_graph(), seed in any::<u64>()) {
        let alg = build(AlgorithmName::VpMis);
        let mut cfg = EngineConfig { scheduler: SchedulerPolicy::randomized(0.5).unwrap(), ..EngineConfig::default() };
        cfg.prob.p = 0.5;
        let initial = Configuration::random(&g, &mut seeded(seed));
        let cache = shared_cache(&cfg, seed);
        let mut sim = Simulation::new(&g, build(AlgorithmName::VpMis), cfg, initial, seed, cache).unwrap();
        for _ in 0..50 * g.n() {
            let c = sim.config().clone();
            for v in 0..g.n() {
                if enabled_rules(&alg, &g, &c, v).contains(&1) {
                    prop_assert!(detect_dead_end(&alg, &g, &c, v), "agent {} in {}", v, c.serialize(alg.declared_vars));
                }
            }
            if sim.step().unwrap() == StepOutcome::Converged {
                break;
            }
        }
    }

    #[test]
    fn hba_value_grows_with_depth_when_payoffs_are_nonnegative(g in small_graph(), mask in any::<u64>(), focal in any::<usize>(), x in 0.0f64..1.0) {
        // With no conflict and no two adjacent pending agents, entries never
        // collide, nobody is ever uncovered and every stage payoff is >= 0.
        let mut c = Configuration::all_out(g.n());
        for v in 0..g.n() {
            if mask >> v & 1 == 1 && !has_in_neighbor(&g, &c, v) {
                c.states[v].state = Status::In;
            }
        }
        let adjacent_pending = (0..g.n()).any(|v| pending(&g, &c, v) && g.neighbors(v).iter().any(|&w| pending(&g, &c, w)));
        prop_assume!(!adjacent_pending);
        let focal = focal % g.n();
        let cfg = GameConfig { delta: 1.0, horizon: 3, ..GameConfig::default() };
        let game = LocalGame::build(&g, &c, focal, GameRules::Entry, |_| false, GainParams::default(), 0.8, &cfg).unwrap();
        let mut b = BeliefState::new();
        for &u in &game.locality.boundary {
            b.set(u, TypeBelief::from_out(x));
        }
        let s = StrategyProfile::uniform(game.n());
        for a in [Action::Switch, Action::Preserve] {
            let mut prev = f64::NEG_INFINITY;
            for depth in 0..=3 {
                let v = hba_expected_payoff(&game, focal, a, &b, &s, depth).unwrap();
                prop_assert!(v >= prev - 1e-9, "depth {}: {} < {}", depth, v, prev);
                prev = v;
            }
        }
    }

    #[test]
    fn dp_ends_at_the_reference_under_deviations(g in ba_graph(), seed in any::<u64>(), deflect in any::<bool>()) {
        let kind = if deflect { DeviationKind::Deflection } else { DeviationKind::Violation };
        let mut cfg = EngineConfig { scheduler: SchedulerPolicy::randomized(0.8).unwrap(), ..EngineConfig::default() };
        cfg.prob.mode = GameMode::Game;
        cfg.deviation = DeviationModel::new(kind, DeviationPolicy::Utility).unwrap();
        let initial = Configuration::random(&g, &mut seeded(seed));
        let cache = shared_cache(&cfg, seed);
        let mut sim = Simulation::new(&g, build(AlgorithmName::DpMis), cfg, initial, seed, cache).unwrap();
        prop_assert!(sim.run_until(50 * g.n() as u64).unwrap());
        let reference = Configuration::from_in_set(g.n(), &reference_unique_mis(&g));
        prop_assert_eq!(sim.config().in_set(), reference.in_set());
    }
}

#[test]
fn system_property_matches_mis_exhaustively() {
    for n in 1..=6 {
        for g in connected_catalog(n) {
            for mask in 0u64..1 << n {
                let c = Configuration::from_mask(n, mask);
                assert_eq!(system_property(&g, &c), is_mis(&g, &c));
            }
        }
    }
    let mut rng = seeded(1);
    for _ in 0..12 {
        let n = rng.gen_range(7..=12);
        let g = generate_ba(n, 2, rng.gen()).unwrap();
        for mask in 0u64..1 << n {
            let c = Configuration::from_mask(n, mask);
            assert_eq!(system_property(&g, &c), is_mis(&g, &c));
        }
    }
}

#[test]
fn every_agent_has_a_legitimate_alternative_at_least_as_good() {
    let params = GainParams::default();
    let mut graphs: Vec<Graph> = (1..=6).flat_map(connected_catalog).collect();
    let mut rng = seeded(2);
    for _ in 0..20 {
        graphs.push(generate_ba(rng.gen_range(7..=8), 2, rng.gen()).unwrap());
    }
    for g in &graphs {
        let n = g.n();
        let mis: Vec<Configuration> = all_mis_masks(g).into_iter().map(|m| Configuration::from_mask(n, m)).collect();
        let best: Vec<f64> = (0..n)
            .map(|v| mis.iter().map(|c| gain(g, c, v, &params)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for mask in 0u64..1 << n {
            let c = Configuration::from_mask(n, mask);
            if is_mis(g, &c) {
                continue;
            }
            for v in 0..n {
                assert!(best[v] >= gain(g, &c, v, &params));
            }
        }
    }
}

#[test]
fn quiescence_means_mis_exhaustively() {
    let ctx = ProbContext { mode: GameMode::Game, ..ProbContext::default() };
    for alg in AlgorithmName::ALL.map(build) {
        for n in 1..=6 {
            for g in connected_catalog(n) {
                for mask in 0u64..1 << n {
                    let c = Configuration::from_mask(n, mask);
                    if successors(&alg, &g, &c, &ctx).is_empty() {
                        assert!(is_mis(&g, &c), "{:?} stuck at {mask:b}", alg.name);
                    }
                }
            }
        }
        let mut rng = seeded(3);
        for _ in 0..4 {
            let g = generate_ba(8, 2, rng.gen()).unwrap();
            for mask in 0u64..1 << 8 {
                let c = Configuration::from_mask(8, mask);
                if successors(&alg, &g, &c, &ctx).is_empty() {
                    assert!(is_mis(&g, &c));
                }
            }
        }
    }
}

/// Runs bookkeeping rules one agent at a time until none is enabled.
fn settle(alg: &selfstab::algorithms::AlgorithmDescriptor, g: &Graph, c: &Configuration) -> Configuration {
    let mut c = c.clone();
    loop {
        let mut changed = false;
        for v in 0..g.n() {
            if let Some(rule) = alg.rules.iter().find(|r| r.kind == RuleKind::Bookkeeping && (r.guard)(g, &c, v)) {
                c.states[v] = (rule.action)(g, &c, v);
                changed = true;
            }
        }
        if !changed {
            return c;
        }
    }
}

#[test]
fn pf_and_dt_are_closed_on_legitimate_configurations() {
    let ctx = ProbContext { mode: GameMode::Game, ..ProbContext::default() };
    for name in [AlgorithmName::PfMis, AlgorithmName::DtMis] {
        let alg = build(name);
        for n in 1..=6 {
            for g in connected_catalog(n) {
                for mask in all_mis_masks(&g) {
                    let c = settle(&alg, &g, &Configuration::from_mask(n, mask));
                    for v in 0..n {
                        for r in enabled_rules(&alg, &g, &c, v) {
                            let rule = alg.rule(r).unwrap();
                            assert!(
                                !rule.kind.writes_state()
                                    || !selfstab::algorithms::positive_probability(rule, &g, &c, v, &ctx),
                                "{name:?} R{r} enabled at {v} in {}",
                                c.serialize(alg.declared_vars)
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn central_scheduler_is_uniform() {
    let enabled: Vec<usize> = (0..10).collect();
    let rounds = 100_000u64;
    let mut counts = [0u64; 10];
    for r in 0..rounds {
        let s = select(&SchedulerPolicy::central(), &enabled, r, 42, None);
        counts[s.agents[0]] += 1;
    }
    let expected = rounds as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&k| (k as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, 0.999 quantile.
    assert!(chi2 < 27.88, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn nash_verdicts_are_monotone_in_depth() {
    let params = GainParams::default();
    let ctx = ProbContext::default();
    for n in 2..=5 {
        for g in connected_catalog(n) {
            for alg in AlgorithmName::ALL.map(build) {
                for mask in 0u64..1 << n {
                    let c = Configuration::from_mask(n, mask);
                    let mut found = false;
                    for depth in 0..=6 {
                        let nash = nash_check(&alg, &g, &c, &params, &ctx, depth).unwrap().is_nash;
                        assert!(!(found && nash), "{:?} improvement lost at depth {depth}", alg.name);
                        found |= !nash;
                    }
                }
            }
        }
    }
}
