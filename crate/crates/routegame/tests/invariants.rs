//! Property checks of the structural guarantees the modules document:
//! simplex preservation, fixed points, market conservation, determinism,
//! and the round-trips between the text formats and their parsers.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use routegame::analysis::{detect_convergence, evaluate_pure_profile, satisfaction_rate};
use routegame::config::GameConfig;
use routegame::engine::{local_update, run_game_on, select_route};
use routegame::market::{
    cascade_round, settle_requests, CapacityInterval, CapacityRequest, RouteOffer,
};
use routegame::strategy::{lri_update, BenefitBounds, StrategyVector};
use routegame::topology::{NodeId, Topology};
use routegame::trace::{parse_csv, CsvRow, PlayerRow, StepReport, CSV_HEADER};

// --- generators ---------------------------------------------------------

fn arb_strategy(max_len: usize) -> impl Strategy<Value = StrategyVector> {
    proptest::collection::vec(1e-6_f64..=1.0, 1..=max_len).prop_map(|mut probs| {
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        StrategyVector::new(probs).expect("normalized input")
    })
}

/// [0,1] with the endpoints over-represented.
fn arb_unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0]
}

fn arb_topology() -> impl Strategy<Value = Topology> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_topology(&mut rng, 8, 6)
    })
}

/// A topology plus an interval per player, with the occasional player
/// sitting the round out.
fn arb_market_instance() -> impl Strategy<Value = (Topology, BTreeMap<NodeId, CapacityInterval>)> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = common::random_topology(&mut rng, 8, 6);
        let mut actions = BTreeMap::new();
        for player in topo.players() {
            if rng.random_range(0..8u32) == 0 {
                continue;
            }
            let lo = rng.random_range(1..=6);
            let hi = rng.random_range(lo..=8);
            actions.insert(player, CapacityInterval::new(lo, hi));
        }
        (topo, actions)
    })
}

fn arb_game_instance() -> impl Strategy<Value = (Topology, GameConfig)> {
    (any::<u64>(), any::<u64>(), 0.0..=1.0, 1u64..=50).prop_map(
        |(topo_seed, game_seed, b, horizon)| {
            let mut rng = ChaCha8Rng::seed_from_u64(topo_seed);
            let topo = common::random_topology(&mut rng, 6, 5);
            (topo, common::inline_config(b, horizon, game_seed))
        },
    )
}

// --- learning -----------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn update_stays_on_the_simplex(
        s in arb_strategy(8),
        choice in any::<prop::sample::Index>(),
        u in arb_unit(),
        b in arb_unit(),
    ) {
        let next = lri_update(&s, choice.index(s.len()), u, b).unwrap();
        for &p in next.probs() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p), "component {p}");
        }
        let sum: f64 = next.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum drifted to {sum}");
    }

    #[test]
    fn positive_reward_moves_mass_toward_the_chosen_action(
        s in arb_strategy(8),
        choice in any::<prop::sample::Index>(),
        u in 0.01..=1.0,
        b in 0.01..=1.0,
    ) {
        let chosen = choice.index(s.len());
        prop_assume!(s.probs()[chosen] < 1.0 - 1e-9);
        let next = lri_update(&s, chosen, u, b).unwrap();
        prop_assert!(next.probs()[chosen] > s.probs()[chosen]);
        for (k, (&before, &after)) in s.probs().iter().zip(next.probs()).enumerate() {
            if k != chosen {
                prop_assert!(after <= before, "losing action {k} grew");
            }
        }
    }

    #[test]
    fn zero_reward_or_rate_is_a_bitwise_fixed_point(
        s in arb_strategy(8),
        choice in any::<prop::sample::Index>(),
        x in arb_unit(),
        zero_rate in any::<bool>(),
    ) {
        let (u, b) = if zero_rate { (x, 0.0) } else { (0.0, x) };
        let next = lri_update(&s, choice.index(s.len()), u, b).unwrap();
        for (have, want) in next.probs().iter().zip(s.probs()) {
            prop_assert_eq!(have.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn absorbed_strategy_is_a_fixed_point(
        len in 1..=8usize,
        hot in any::<prop::sample::Index>(),
        u in arb_unit(),
        b in arb_unit(),
    ) {
        let hot = hot.index(len);
        let mut probs = vec![0.0; len];
        probs[hot] = 1.0;
        let s = StrategyVector::new(probs).unwrap();
        let next = lri_update(&s, hot, u, b).unwrap();
        prop_assert_eq!(next.probs(), s.probs());
    }

    #[test]
    fn zero_components_never_revive(
        s in arb_strategy(8),
        zero_at in any::<prop::sample::Index>(),
        choice in any::<prop::sample::Index>(),
        u in arb_unit(),
        b in arb_unit(),
    ) {
        prop_assume!(s.len() >= 2);
        // Zero one component and hand its mass to a neighbor; the heir
        // takes the complement so the vector stays inside the simplex.
        let mut probs = s.probs().to_vec();
        let dead = zero_at.index(probs.len());
        let heir = (dead + 1) % probs.len();
        probs[dead] = 0.0;
        let others: f64 = probs
            .iter()
            .enumerate()
            .filter_map(|(k, &p)| (k != heir).then_some(p))
            .sum();
        probs[heir] = 1.0 - others;
        let s = StrategyVector::new(probs).unwrap();
        // A zero-probability action is never sampled, so `chosen` must
        // land elsewhere.
        let mut chosen = choice.index(s.len());
        if chosen == dead {
            chosen = heir;
        }
        let next = lri_update(&s, chosen, u, b).unwrap();
        prop_assert_eq!(next.probs()[dead], 0.0);
    }

    #[test]
    fn normalization_maps_the_running_range_onto_the_unit_interval(
        values in proptest::collection::vec(-1e6_f64..=1e6, 1..40),
    ) {
        let mut bounds = BenefitBounds::new();
        for &v in &values {
            bounds.absorb(v);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(bounds.running_min(), lo);
        prop_assert_eq!(bounds.running_max(), hi);
        for &v in &values {
            let u = bounds.normalized_utility(v);
            prop_assert!((0.0..=1.0).contains(&u), "utility {u} for {v}");
        }
        if hi > lo {
            prop_assert_eq!(bounds.normalized_utility(hi), 1.0);
            prop_assert_eq!(bounds.normalized_utility(lo), 0.0);
        } else {
            // Degenerate range: everything seen so far was identical.
            prop_assert_eq!(bounds.normalized_utility(hi), 0.0);
        }
    }
}

/// The per-player learning step is callable through a signature that
/// admits nothing but the player's own state — compile-time evidence
/// that one player's update cannot read another's.
#[test]
fn learning_step_sees_only_local_state() {
    let update: fn(&StrategyVector, &mut BenefitBounds, usize, f64, f64) -> (f64, StrategyVector) =
        local_update;
    let s = StrategyVector::uniform(3);
    let mut bounds = BenefitBounds::new();
    let (u, next) = update(&s, &mut bounds, 1, 2.0, 0.5);
    assert_eq!(u, 0.0, "a first observation carries no signal");
    assert_eq!(next.probs(), s.probs());
    let (u, next) = update(&next, &mut bounds, 1, 4.0, 0.5);
    assert_eq!(u, 1.0, "a fresh running maximum normalizes to 1");
    assert!(next.probs()[1] > 1.0 / 3.0);
}

// --- market -------------------------------------------------------------

fn dummy_offer() -> RouteOffer {
    RouteOffer {
        provider: NodeId::new("p"),
        to: NodeId::new("x"),
        dest: NodeId::new("d"),
        path: vec![NodeId::new("p"), NodeId::new("d")],
        unit_price: 1.0,
        available_capacity: 10,
        delay: 1.0,
        availability: 1.0,
        duration: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn settlement_respects_stock_priority_and_intervals(
        stock in 0u32..=30,
        raw in proptest::collection::vec((0u32..=6, 0u32..=10), 1..=10),
    ) {
        let requests: Vec<CapacityRequest> = raw
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| CapacityRequest {
                buyer: NodeId::new(format!("b{i:02}")),
                interval: CapacityInterval::new(lo, hi),
                offer: dummy_offer(),
            })
            .collect();
        let grants = settle_requests(stock, &requests);
        prop_assert_eq!(grants.len(), requests.len());

        let by_buyer: BTreeMap<&NodeId, &CapacityRequest> =
            requests.iter().map(|r| (&r.buyer, r)).collect();
        let mut remaining = stock;
        let mut previous: Option<(u32, &NodeId)> = None;
        for (buyer, grant) in &grants {
            let request = by_buyer[buyer];
            // Processing order: larger lo first, then smaller buyer id.
            if let Some((prev_lo, prev_buyer)) = previous {
                prop_assert!(
                    request.interval.lo < prev_lo
                        || (request.interval.lo == prev_lo && prev_buyer < buyer)
                );
            }
            previous = Some((request.interval.lo, buyer));
            // All-or-nothing greedy grant against the remaining stock.
            let offered = request.interval.hi.min(remaining);
            let expected = if request.interval.is_valid() && offered >= request.interval.lo {
                offered
            } else {
                0
            };
            prop_assert_eq!(*grant, expected);
            remaining -= grant;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn market_round_is_pure_and_conserves_stock(
        (topo, actions) in arb_market_instance(),
    ) {
        let once = cascade_round(&topo, &actions, select_route);
        let again = cascade_round(&topo, &actions, select_route);
        prop_assert_eq!(&once, &again, "identical inputs disagreed");

        let mut sold: BTreeMap<&NodeId, u32> = BTreeMap::new();
        for contract in &once.contracts {
            prop_assert!(contract.granted_capacity >= 1, "empty contract settled");
            *sold.entry(&contract.seller).or_default() += contract.granted_capacity;
        }
        for (seller, &amount) in &sold {
            let stock = if *seller == topo.destination() {
                topo.dest_params().export_capacity
            } else {
                once.players[*seller].granted
            };
            prop_assert!(amount <= stock, "{seller} resold {amount} of {stock}");
        }
        for (id, outcome) in &once.players {
            prop_assert!(outcome.resold <= outcome.granted);
            let bought: u32 = once
                .contracts
                .iter()
                .filter(|c| c.buyer == *id)
                .map(|c| c.granted_capacity)
                .sum();
            prop_assert_eq!(outcome.granted, bought);
            if outcome.granted == 0 {
                prop_assert_eq!(outcome.benefit, 0.0);
                prop_assert_eq!(outcome.delivered, 0);
            } else {
                let interval = actions[id];
                prop_assert!(interval.lo <= outcome.granted && outcome.granted <= interval.hi);
                let demand = topo.node_params(id).unwrap().own_demand;
                prop_assert_eq!(outcome.delivered, demand.min(outcome.granted - outcome.resold));
            }
        }
    }
}

// --- topology -----------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rendering_round_trips(topo in arb_topology()) {
        let parsed = Topology::parse(&topo.to_text()).unwrap();
        prop_assert_eq!(parsed, topo);
    }

    #[test]
    fn hop_levels_form_a_breadth_first_gradient(topo in arb_topology()) {
        let levels = topo.cascade_levels();
        prop_assert_eq!(levels.get(topo.destination()), Some(&0));
        for (node, &level) in &levels {
            let mut has_parent = level == 0;
            for (neighbor, _) in topo.neighbors(node) {
                let other = levels[neighbor];
                prop_assert!(
                    level.abs_diff(other) <= 1,
                    "edge {node}-{neighbor} jumps {level}->{other}"
                );
                has_parent |= other + 1 == level;
            }
            prop_assert!(has_parent, "{node} at level {level} has no upstream neighbor");
        }
        // Everyone reachable except the destination plays.
        let players = topo.players();
        prop_assert_eq!(players.len(), levels.len() - 1);
        prop_assert!(players.iter().all(|p| levels.contains_key(p) && p != topo.destination()));
    }
}

// --- engine -------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identical_runs_produce_identical_traces((topo, config) in arb_game_instance()) {
        let one = run_game_on(&topo, &config).unwrap();
        let two = run_game_on(&topo, &config).unwrap();
        prop_assert_eq!(&one, &two);
        prop_assert_eq!(one.to_csv_string(), two.to_csv_string());
    }

    #[test]
    fn traces_are_internally_consistent((topo, config) in arb_game_instance()) {
        let trace = run_game_on(&topo, &config).unwrap();

        // Shape: one report per step, one row per player, in id order.
        prop_assert_eq!(trace.steps.len() as u64, config.horizon);
        let ids: Vec<&NodeId> = trace.players.iter().map(|p| &p.id).collect();
        for (index, step) in trace.steps.iter().enumerate() {
            prop_assert_eq!(step.step, index as u64);
            let row_ids: Vec<&NodeId> = step.rows.iter().map(|r| &r.player).collect();
            prop_assert_eq!(&row_ids, &ids);
        }

        // The first market result is everyone's first observation, so no
        // strategy moves on step one.
        let first = &trace.steps[0];
        for (row, player) in first.rows.iter().zip(&trace.players) {
            prop_assert_eq!(row.utility, 0.0);
            prop_assert_eq!(&row.strategy, &player.initial_strategy);
        }

        // Replaying any step's realized actions as a pure profile gives
        // back exactly the benefits the trace reports.
        for step in &trace.steps {
            let actions: BTreeMap<NodeId, CapacityInterval> = step
                .rows
                .iter()
                .map(|r| (r.player.clone(), CapacityInterval::new(r.lo, r.hi)))
                .collect();
            let benefits = evaluate_pure_profile(&topo, &actions);
            for row in &step.rows {
                prop_assert_eq!(benefits[&row.player].to_bits(), row.benefit.to_bits());
            }
            let rate = satisfaction_rate(step);
            prop_assert!((0.0..=1.0).contains(&rate.value()));
            prop_assert_eq!(rate.value() == 1.0, step.rows.iter().all(|r| r.satisfied));
        }

        // The recorded convergence verdict is reproducible from the steps.
        let recomputed = detect_convergence(&trace.steps, config.theta, config.window).unwrap();
        prop_assert_eq!(&trace.convergence, &recomputed);
    }
}

// --- analysis -----------------------------------------------------------

fn synthetic_step(step: u64, max_prob: f64) -> StepReport {
    StepReport {
        step,
        rows: vec![PlayerRow {
            player: NodeId::new("a"),
            action: 0,
            lo: 1,
            hi: 1,
            granted: 0,
            benefit: 0.0,
            utility: 0.0,
            strategy: vec![max_prob, 1.0 - max_prob],
            satisfied: false,
            traversed: false,
        }],
        contracts: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn convergence_triggers_on_the_first_full_window(
        pattern in proptest::collection::vec(any::<bool>(), 1..60),
        window in 1u64..=10,
    ) {
        let steps: Vec<StepReport> = pattern
            .iter()
            .enumerate()
            .map(|(i, &stable)| synthetic_step(i as u64, if stable { 0.95 } else { 0.6 }))
            .collect();
        let report = detect_convergence(&steps, 0.9, window).unwrap();

        // Reference scan: first index opening `window` consecutive stables.
        let w = window as usize;
        let mut run = 0;
        let mut start = None;
        for (i, &stable) in pattern.iter().enumerate() {
            run = if stable { run + 1 } else { 0 };
            if run == w {
                start = Some(i + 1 - w);
                break;
            }
        }
        match start {
            Some(first) => {
                prop_assert!(report.converged);
                prop_assert_eq!(report.step, Some(first as u64));
                let profile = report.profile.unwrap();
                prop_assert_eq!(profile[&NodeId::new("a")], 0);
            }
            None => {
                prop_assert!(!report.converged);
                prop_assert_eq!(report.step, None);
                prop_assert_eq!(report.profile, None);
            }
        }
    }
}

// --- trace --------------------------------------------------------------

/// Finite values only; the engine never emits NaN or infinities.
fn arb_finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(-0.0),
        Just(1.0 / 3.0),
        -1.0..=1.0,
        -1e300..=1e300,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Shortest round-trip float formatting means a written line parses
    /// back to exactly the row it came from.
    #[test]
    fn csv_lines_round_trip(
        step in any::<u64>(),
        pidx in 0..10u32,
        lo in any::<u32>(),
        hi in any::<u32>(),
        granted in any::<u32>(),
        benefit in arb_finite(),
        u in arb_finite(),
        max_prob in arb_finite(),
        satisfied in any::<bool>(),
        traversed in any::<bool>(),
    ) {
        let row = CsvRow {
            step,
            player: format!("p{pidx}"),
            lo,
            hi,
            granted,
            benefit,
            u,
            max_prob,
            satisfied,
            traversed,
        };
        let text = format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{}\n",
            row.step,
            row.player,
            row.lo,
            row.hi,
            row.granted,
            row.benefit,
            row.u,
            row.max_prob,
            row.satisfied,
            row.traversed
        );
        let parsed = parse_csv(&text).unwrap();
        prop_assert_eq!(parsed, vec![row]);
    }
}
