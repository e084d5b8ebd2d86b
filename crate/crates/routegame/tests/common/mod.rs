//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use routegame::config::GameConfig;
use routegame::topology::Topology;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn line_config() -> GameConfig {
    GameConfig::from_file(fixture("line.cfg")).expect("line fixture parses")
}

/// Random well-formed topology, produced as text so the parser sits on
/// the fuzz path too. Node 0 is the destination; a random spanning tree
/// keeps every node reachable, extra edges add crossings.
pub fn random_topology(rng: &mut ChaCha8Rng, max_nodes: usize, max_cap: u32) -> Topology {
    let n = rng.random_range(2..=max_nodes);
    let mut text = String::new();
    for i in 0..n {
        let cap = rng.random_range(1..=max_cap);
        let margin = f64::from(rng.random_range(0..=8u32)) * 0.25;
        let demand = rng.random_range(0..=4u32);
        let value = f64::from(rng.random_range(0..=8u32)) * 0.5;
        let _ = writeln!(
            text,
            "node n{i} cap={cap} margin={margin} demand={demand} value={value}"
        );
    }
    let export = rng.random_range(1..=12u32);
    let price = f64::from(rng.random_range(0..=8u32)) * 0.25;
    let _ = writeln!(text, "dest n0 export={export} price={price}");
    let mut edges: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    for _ in 0..n {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (a, b) in edges {
        let delay = f64::from(rng.random_range(0..=20u32)) * 0.5;
        let _ = writeln!(text, "edge n{a} n{b} delay={delay}");
    }
    Topology::parse(&text).expect("generated topology is well-formed")
}

/// A throwaway config for games driven on an in-memory topology; the
/// `topology` path inside is never read.
pub fn inline_config(b: f64, horizon: u64, seed: u64) -> GameConfig {
    GameConfig {
        topology: PathBuf::from("generated-inline"),
        b,
        horizon,
        seed,
        granularity: 1,
        theta: 0.99,
        window: 50,
        early_stop: false,
        out: PathBuf::from("unused"),
    }
}
