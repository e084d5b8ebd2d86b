//! Post-hoc and in-run analyses: convergence of the learning process,
//! player satisfaction, and exhaustive pure-equilibrium checks.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::engine::select_route;
use crate::market::{cascade_round, CapacityInterval};
use crate::strategy::ActionSet;
use crate::topology::{NodeId, Topology};
use crate::trace::StepReport;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("convergence threshold {0} outside (0.5, 1]")]
    ThetaOutOfRange(f64),
    #[error("stability window must be at least 1")]
    WindowTooSmall,
}

/// Result of scanning a run for convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// First step at which every player's top action probability reached
    /// the threshold and then stayed there for the whole window.
    pub step: Option<u64>,
    /// The pure profile locked in at that step: action index per player.
    pub profile: Option<BTreeMap<NodeId, usize>>,
}

impl ConvergenceReport {
    pub fn not_converged() -> Self {
        ConvergenceReport {
            converged: false,
            step: None,
            profile: None,
        }
    }
}

/// Finds the earliest step `t` such that for `window` consecutive steps
/// starting at `t`, every player's largest strategy component is at least
/// `theta`. Thresholds at or below 0.5 would not pin a unique action, so
/// they are rejected.
pub fn detect_convergence(
    steps: &[StepReport],
    theta: f64,
    window: u64,
) -> Result<ConvergenceReport, AnalysisError> {
    if !(theta > 0.5 && theta <= 1.0) {
        return Err(AnalysisError::ThetaOutOfRange(theta));
    }
    if window == 0 {
        return Err(AnalysisError::WindowTooSmall);
    }
    let window = usize::try_from(window).unwrap_or(usize::MAX);
    if steps.len() < window {
        return Ok(ConvergenceReport::not_converged());
    }
    let stable: Vec<bool> = steps
        .iter()
        .map(|s| s.rows.iter().all(|row| row.max_prob() >= theta))
        .collect();
    let mut run = 0usize;
    for (index, &ok) in stable.iter().enumerate() {
        run = if ok { run + 1 } else { 0 };
        if run == window {
            let start = index + 1 - window;
            let report = &steps[start];
            let profile = report
                .rows
                .iter()
                .map(|row| {
                    let best = row
                        .strategy
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                        .map(|(k, _)| k)
                        .unwrap_or(0);
                    (row.player.clone(), best)
                })
                .collect();
            return Ok(ConvergenceReport {
                converged: true,
                step: Some(report.step),
                profile: Some(profile),
            });
        }
    }
    Ok(ConvergenceReport::not_converged())
}

/// Fraction of players whose request was satisfied in one step, kept as
/// an exact ratio.
#[derive(Debug, Clone, Copy, Eq)]
pub struct SatisfactionRate {
    pub satisfied: usize,
    pub total: usize,
}

impl SatisfactionRate {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }
}

impl PartialEq for SatisfactionRate {
    /// Equality of the ratios, not of the raw counts: 1/2 == 2/4.
    fn eq(&self, other: &Self) -> bool {
        if self.total == 0 || other.total == 0 {
            return self.total == other.total;
        }
        self.satisfied * other.total == other.satisfied * self.total
    }
}

impl fmt::Display for SatisfactionRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.satisfied, self.total)
    }
}

pub fn satisfaction_rate(report: &StepReport) -> SatisfactionRate {
    SatisfactionRate {
        satisfied: report.rows.iter().filter(|r| r.satisfied).count(),
        total: report.rows.len(),
    }
}

/// Plays the market once with everyone pinned to a fixed interval and
/// returns each player's benefit. Deterministic; no learning involved.
pub fn evaluate_pure_profile(
    topo: &Topology,
    actions: &BTreeMap<NodeId, CapacityInterval>,
) -> BTreeMap<NodeId, f64> {
    cascade_round(topo, actions, select_route)
        .players
        .into_iter()
        .map(|(id, outcome)| (id, outcome.benefit))
        .collect()
}

/// A profitable unilateral deviation found by [`nash_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub player: NodeId,
    /// Index of the improving action in the player's action set.
    pub action: usize,
    pub interval: CapacityInterval,
    /// Strictly positive benefit gain from switching.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub is_nash: bool,
    pub deviations: Vec<Deviation>,
}

/// Tests a pure profile (action index per player) for Nash stability by
/// trying every unilateral deviation of every player. A profile fails
/// only on a *strict* benefit improvement.
pub fn nash_check(
    topo: &Topology,
    action_sets: &BTreeMap<NodeId, ActionSet>,
    profile: &BTreeMap<NodeId, usize>,
) -> NashReport {
    let base_actions: BTreeMap<NodeId, CapacityInterval> = profile
        .iter()
        .map(|(id, &k)| (id.clone(), action_sets[id].interval(k)))
        .collect();
    let base = evaluate_pure_profile(topo, &base_actions);

    let mut deviations = Vec::new();
    for (player, &chosen) in profile {
        let set = &action_sets[player];
        for action in 0..set.len() {
            if action == chosen {
                continue;
            }
            let interval = set.interval(action);
            let mut trial = base_actions.clone();
            trial.insert(player.clone(), interval);
            let benefits = evaluate_pure_profile(topo, &trial);
            let gain = benefits[player] - base[player];
            if gain > 0.0 {
                deviations.push(Deviation {
                    player: player.clone(),
                    action,
                    interval,
                    gain,
                });
            }
        }
    }
    NashReport {
        is_nash: deviations.is_empty(),
        deviations,
    }
}
