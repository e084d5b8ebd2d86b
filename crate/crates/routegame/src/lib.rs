//! Deterministic simulator of repeated route-capacity trading between
//! interdomain network operators.
//!
//! One node — the destination — exports transit capacity. Offers cascade
//! outward hop by hop: whoever buys capacity resells it, with a markup,
//! to neighbors one hop farther out. Each operator repeatedly requests a
//! capacity interval `[lo, hi]`, learns how profitable the request was,
//! and shifts its mixed strategy toward what worked (a reward-inaction
//! scheme — losses are never punished, wins are reinforced).
//!
//! The crate is organized around that loop:
//!
//! * [`topology`] — the static graph, its parameters, hop levels;
//! * [`market`] — offers, requests, settlement, and benefits for one step;
//! * [`strategy`] — action menus, mixed strategies, the learning rule;
//! * [`engine`] — the repeated game tying the two together;
//! * [`analysis`] — convergence detection, satisfaction, equilibrium checks;
//! * [`config`] / [`trace`] / [`experiment`] — experiment description,
//!   run records with their CSV form, and run/sweep drivers.
//!
//! Everything is deterministic given the configuration: identical runs
//! produce byte-identical traces.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod market;
pub mod strategy;
pub mod topology;
pub mod trace;

pub use config::GameConfig;
pub use engine::{run_game, select_route};
pub use topology::Topology;
