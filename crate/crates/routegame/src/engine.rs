//! The repeated game itself: sample one interval per player, clear the
//! market, feed each player its own benefit, update its strategy.
//!
//! Players only ever see their own data — their offers, their grant,
//! their benefit history. Nothing global leaks into the update path,
//! which is the whole point of the model.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::config::{ConfigError, GameConfig};
use crate::market::{self, CapacityInterval, RouteOffer};
use crate::strategy::{lri_update, ActionSet, BenefitBounds, StrategyError, StrategyVector};
use crate::topology::{NodeId, Topology, TopologyError};
use crate::trace::{GameTrace, PlayerRow, PlayerSpec, StepReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no player can reach the destination")]
    NoPlayers,
}

/// Picks the request to file: among offers that can cover the lower end
/// of the interval, take the one with the largest usable capacity
/// `min(available, hi)`; break ties by lower price, then by smaller
/// provider id. Returns an index into `offers`.
pub fn select_route(offers: &[RouteOffer], interval: CapacityInterval) -> Option<usize> {
    offers
        .iter()
        .enumerate()
        .filter(|(_, offer)| offer.available_capacity >= interval.lo)
        .max_by(|(_, a), (_, b)| {
            let usable_a = a.available_capacity.min(interval.hi);
            let usable_b = b.available_capacity.min(interval.hi);
            usable_a
                .cmp(&usable_b)
                .then_with(|| {
                    b.unit_price
                        .partial_cmp(&a.unit_price)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then_with(|| b.provider.cmp(&a.provider))
        })
        .map(|(index, _)| index)
}

/// One player's live state across the run.
#[derive(Debug, Clone)]
pub struct PlayerState {
    pub id: NodeId,
    pub actions: ActionSet,
    pub strategy: StrategyVector,
    pub bounds: BenefitBounds,
    /// Index of the action sampled in the current step.
    pub last_action: Option<usize>,
    pub satisfied: bool,
    rng: ChaCha8Rng,
}

/// Everything that evolves while the game runs.
#[derive(Debug, Clone)]
pub struct GameState {
    pub topology: Topology,
    /// In id order; every reachable non-destination node.
    pub players: Vec<PlayerState>,
    pub step: u64,
}

impl GameState {
    /// Sets up the players: uniform initial strategies over the interval
    /// menu derived from each node's capacity and the configured
    /// granularity, one decorrelated RNG stream per player.
    pub fn new(topology: &Topology, config: &GameConfig) -> Result<Self, EngineError> {
        let levels = topology.cascade_levels();
        let mut players = Vec::new();
        for id in levels.keys() {
            if id == topology.destination() {
                continue;
            }
            let params = topology
                .node_params(id)
                .expect("reachable nodes are declared");
            let actions = ActionSet::enumerate(params.total_capacity, config.granularity)?;
            let strategy = StrategyVector::uniform(actions.len());
            players.push(PlayerState {
                id: id.clone(),
                rng: ChaCha8Rng::seed_from_u64(substream_seed(config.seed, id)),
                actions,
                strategy,
                bounds: BenefitBounds::new(),
                last_action: None,
                satisfied: false,
            });
        }
        if players.is_empty() {
            return Err(EngineError::NoPlayers);
        }
        Ok(GameState {
            topology: topology.clone(),
            players,
            step: 0,
        })
    }
}

/// A player's entire learning step, in one place: absorb the benefit
/// into the running bounds, normalize, apply reward-inaction. Takes
/// nothing but the player's own state and the global learning rate, and
/// returns the utility used plus the next strategy.
pub fn local_update(
    strategy: &StrategyVector,
    bounds: &mut BenefitBounds,
    chosen: usize,
    benefit: f64,
    learning_rate: f64,
) -> (f64, StrategyVector) {
    bounds.absorb(benefit);
    let utility = bounds.normalized_utility(benefit);
    let next = lri_update(strategy, chosen, utility, learning_rate)
        .expect("utility and rate are in range by construction");
    (utility, next)
}

/// Advances the game by one step and reports what every player saw.
pub fn run_step(state: &mut GameState, config: &GameConfig) -> StepReport {
    // Each player samples an interval from its mixed strategy.
    let mut actions: BTreeMap<NodeId, CapacityInterval> = BTreeMap::new();
    for player in &mut state.players {
        let chosen = player.strategy.sample(&mut player.rng);
        player.last_action = Some(chosen);
        actions.insert(player.id.clone(), player.actions.interval(chosen));
    }

    // The market clears as a whole...
    let outcome = market::cascade_round(&state.topology, &actions, select_route);

    // ...but each player learns from its own slice of it.
    let mut rows = Vec::with_capacity(state.players.len());
    for player in &mut state.players {
        let result = &outcome.players[&player.id];
        let chosen = player.last_action.expect("sampled above");
        let interval = player.actions.interval(chosen);
        player.satisfied = result.granted >= interval.lo;
        let (utility, next) = local_update(
            &player.strategy,
            &mut player.bounds,
            chosen,
            result.benefit,
            config.b,
        );
        player.strategy = next;
        rows.push(PlayerRow {
            player: player.id.clone(),
            action: chosen,
            lo: interval.lo,
            hi: interval.hi,
            granted: result.granted,
            benefit: result.benefit,
            utility,
            strategy: player.strategy.probs().to_vec(),
            satisfied: player.satisfied,
            traversed: result.traversed,
        });
    }

    let report = StepReport {
        step: state.step,
        rows,
        contracts: outcome.contracts,
    };
    state.step += 1;
    report
}

/// Plays the configured number of steps and wraps the run up: every step
/// report, the convergence scan, and — when the run converged — a Nash
/// check of the locked-in profile.
///
/// With `early_stop` the run ends as soon as one full stability window
/// has been observed.
pub fn run_game(config: &GameConfig) -> Result<GameTrace, EngineError> {
    let topology = Topology::from_file(&config.topology)?;
    run_game_on(&topology, config)
}

/// [`run_game`] for an already-loaded topology.
pub fn run_game_on(topology: &Topology, config: &GameConfig) -> Result<GameTrace, EngineError> {
    config.validate()?;
    let mut state = GameState::new(topology, config)?;
    let specs: Vec<PlayerSpec> = state
        .players
        .iter()
        .map(|p| PlayerSpec {
            id: p.id.clone(),
            actions: p.actions.clone(),
            initial_strategy: p.strategy.probs().to_vec(),
        })
        .collect();

    let mut steps = Vec::new();
    let mut stable_run: u64 = 0;
    for _ in 0..config.horizon {
        let report = run_step(&mut state, config);
        if config.early_stop {
            let all_stable = report.rows.iter().all(|r| r.max_prob() >= config.theta);
            stable_run = if all_stable { stable_run + 1 } else { 0 };
        }
        steps.push(report);
        if config.early_stop && stable_run >= config.window {
            break;
        }
    }

    let convergence = analysis::detect_convergence(&steps, config.theta, config.window)?;
    let nash = match &convergence.profile {
        Some(profile) => {
            let sets: BTreeMap<NodeId, ActionSet> = specs
                .iter()
                .map(|s| (s.id.clone(), s.actions.clone()))
                .collect();
            Some(analysis::nash_check(topology, &sets, profile))
        }
        None => None,
    };

    Ok(GameTrace {
        config: config.clone(),
        players: specs,
        steps,
        convergence,
        nash,
    })
}

/// Stable per-player stream seed: hash the id (FNV-1a), mix with the
/// master seed (splitmix64) so neighboring seeds do not produce
/// correlated streams.
fn substream_seed(master: u64, id: &NodeId) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in id.as_str().bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ hash)
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
