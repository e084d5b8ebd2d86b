//! Experiment drivers on top of the engine: single runs with their
//! artifacts, seed x learning-rate sweeps, and profile checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{satisfaction_rate, NashReport, SatisfactionRate};
use crate::config::{ConfigError, GameConfig};
use crate::engine::{self, EngineError};
use crate::market::CapacityInterval;
use crate::strategy::ActionSet;
use crate::topology::{NodeId, Topology};
use crate::trace::GameTrace;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("seed list is empty")]
    EmptySeeds,
    #[error("bad seed spec `{0}`: expected `a..b` or a comma list")]
    BadSeedSpec(String),
    #[error("bad learning-rate list `{0}`: expected comma-separated values in [0,1]")]
    BadRateList(String),
    #[error("profile line {line}: {message}")]
    Profile { line: usize, message: String },
    #[error("profile names unknown player {0}")]
    UnknownPlayer(NodeId),
    #[error("profile is missing player {0}")]
    MissingPlayer(NodeId),
    #[error("profile action {interval} for {player} is not in its action set")]
    ActionUnavailable {
        player: NodeId,
        interval: CapacityInterval,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The run, reduced to the numbers a sweep aggregates over.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub converged: bool,
    pub convergence_step: Option<u64>,
    /// Satisfaction at the last recorded step.
    pub final_satisfaction: Option<SatisfactionRate>,
    /// Verdict on the locked-in profile; absent without convergence.
    pub nash: Option<bool>,
    /// Locked-in profile as `player:[lo,hi]` pairs, id order.
    pub profile: Option<String>,
    pub steps_played: u64,
}

impl RunSummary {
    pub fn from_trace(trace: &GameTrace) -> Self {
        let convergence = &trace.convergence;
        let final_satisfaction = trace.steps.last().map(satisfaction_rate);
        let profile = convergence.profile.as_ref().map(|profile| {
            let mut parts = Vec::with_capacity(profile.len());
            for (id, &action) in profile {
                let spec = trace
                    .players
                    .iter()
                    .find(|p| &p.id == id)
                    .expect("profile players come from the trace");
                parts.push(format!("{id}:{}", spec.actions.interval(action)));
            }
            parts.join(" ")
        });
        RunSummary {
            converged: convergence.converged,
            convergence_step: convergence.step,
            final_satisfaction,
            nash: trace.nash.as_ref().map(|n| n.is_nash),
            profile,
            steps_played: trace.steps.len() as u64,
        }
    }

    /// `key = value` rendering used for `summary.txt`.
    pub fn to_text(&self) -> String {
        fn opt<T: std::fmt::Display>(value: &Option<T>) -> String {
            value
                .as_ref()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".to_owned())
        }
        let mut text = String::new();
        let _ = writeln!(text, "converged = {}", self.converged);
        let _ = writeln!(text, "convergence_step = {}", opt(&self.convergence_step));
        let _ = writeln!(text, "steps_played = {}", self.steps_played);
        let _ = writeln!(text, "final_satisfaction = {}", opt(&self.final_satisfaction));
        let _ = writeln!(text, "nash = {}", opt(&self.nash));
        let _ = writeln!(text, "profile = {}", opt(&self.profile));
        text
    }
}

fn write_trace_csv(trace: &GameTrace, path: &Path) -> Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut writer = BufWriter::new(file);
    trace.write_csv(&mut writer).map_err(io_error(path))?;
    writer.flush().map_err(io_error(path))
}

/// Plays one configured game and writes `trace.csv` and `summary.txt`
/// into the config's output directory. Nothing is written if the run or
/// the directory fails first.
pub fn run_experiment(config: &GameConfig) -> Result<RunSummary, ExperimentError> {
    let trace = engine::run_game(config)?;
    let summary = RunSummary::from_trace(&trace);
    fs::create_dir_all(&config.out).map_err(io_error(&config.out))?;
    write_trace_csv(&trace, &config.out.join("trace.csv"))?;
    let summary_path = config.out.join("summary.txt");
    fs::write(&summary_path, summary.to_text()).map_err(io_error(&summary_path))?;
    Ok(summary)
}

/// One cell of a sweep. Failures are recorded, not fatal.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub seed: u64,
    pub b: f64,
    pub outcome: Result<RunSummary, String>,
}

/// A sweep plus the aggregates over its completed runs.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub completed: usize,
    pub failed: usize,
    /// Converged / completed (0 when nothing completed).
    pub convergence_fraction: f64,
    pub mean_convergence_step: Option<f64>,
    pub mean_final_satisfaction: Option<f64>,
    /// Equilibrium-certified / converged.
    pub nash_fraction: Option<f64>,
}

impl SweepReport {
    fn from_runs(runs: Vec<SweepRun>) -> Self {
        let summaries: Vec<&RunSummary> =
            runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let completed = summaries.len();
        let failed = runs.len() - completed;
        let converged: Vec<&&RunSummary> = summaries.iter().filter(|s| s.converged).collect();
        let convergence_fraction = if completed == 0 {
            0.0
        } else {
            converged.len() as f64 / completed as f64
        };
        let mean_convergence_step = (!converged.is_empty()).then(|| {
            converged
                .iter()
                .filter_map(|s| s.convergence_step)
                .map(|s| s as f64)
                .sum::<f64>()
                / converged.len() as f64
        });
        let rated: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.final_satisfaction.as_ref())
            .map(SatisfactionRate::value)
            .collect();
        let mean_final_satisfaction =
            (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64);
        let nash_fraction = (!converged.is_empty()).then(|| {
            converged.iter().filter(|s| s.nash == Some(true)).count() as f64
                / converged.len() as f64
        });
        SweepReport {
            runs,
            completed,
            failed,
            convergence_fraction,
            mean_convergence_step,
            mean_final_satisfaction,
            nash_fraction,
        }
    }

    /// `key = value` rendering used for `aggregate.txt`.
    pub fn aggregate_text(&self) -> String {
        fn opt(value: Option<f64>) -> String {
            value.map(|v| v.to_string()).unwrap_or_else(|| "none".to_owned())
        }
        let mut text = String::new();
        let _ = writeln!(text, "runs = {}", self.runs.len());
        let _ = writeln!(text, "completed = {}", self.completed);
        let _ = writeln!(text, "failed = {}", self.failed);
        let _ = writeln!(text, "convergence_fraction = {}", self.convergence_fraction);
        let _ = writeln!(text, "mean_convergence_step = {}", opt(self.mean_convergence_step));
        let _ = writeln!(
            text,
            "mean_final_satisfaction = {}",
            opt(self.mean_final_satisfaction)
        );
        let _ = writeln!(text, "nash_fraction = {}", opt(self.nash_fraction));
        text
    }

    fn runs_csv(&self) -> String {
        let mut text = String::from("seed,b,status,converged,convergence_step,final_satisfaction,nash\n");
        for run in &self.runs {
            match &run.outcome {
                Ok(s) => {
                    let _ = writeln!(
                        text,
                        "{},{},ok,{},{},{},{}",
                        run.seed,
                        run.b,
                        s.converged,
                        s.convergence_step.map(|v| v.to_string()).unwrap_or_default(),
                        s.final_satisfaction.map(|v| v.to_string()).unwrap_or_default(),
                        s.nash.map(|v| v.to_string()).unwrap_or_default(),
                    );
                }
                Err(message) => {
                    let _ = writeln!(
                        text,
                        "{},{},error: {},,,",
                        run.seed,
                        run.b,
                        message.replace(',', ";")
                    );
                }
            }
        }
        text
    }
}

/// Replays `template` for every seed x learning-rate pair, in parallel.
/// Writes one `trace_s<seed>_b<rate>.csv` per run plus `runs.csv` and
/// `aggregate.txt` under `out`.
pub fn run_sweep(
    template: &GameConfig,
    seeds: &[u64],
    rates: &[f64],
    out: &Path,
) -> Result<SweepReport, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::EmptySeeds);
    }
    let rates: Vec<f64> = if rates.is_empty() {
        vec![template.b]
    } else {
        rates.to_vec()
    };
    template.validate()?;
    let topology = Topology::from_file(&template.topology).map_err(EngineError::from)?;
    fs::create_dir_all(out).map_err(io_error(out))?;

    let pairs: Vec<(u64, f64)> = seeds
        .iter()
        .flat_map(|&seed| rates.iter().map(move |&b| (seed, b)))
        .collect();
    let runs: Vec<SweepRun> = pairs
        .par_iter()
        .map(|&(seed, b)| {
            let mut config = template.clone();
            config.seed = seed;
            config.b = b;
            config.out = out.to_path_buf();
            let outcome = engine::run_game_on(&topology, &config)
                .map_err(|e| e.to_string())
                .and_then(|trace| {
                    let path = out.join(format!("trace_s{seed}_b{b}.csv"));
                    write_trace_csv(&trace, &path)
                        .map_err(|e| e.to_string())
                        .map(|()| RunSummary::from_trace(&trace))
                });
            SweepRun { seed, b, outcome }
        })
        .collect();

    let report = SweepReport::from_runs(runs);
    let runs_path = out.join("runs.csv");
    fs::write(&runs_path, report.runs_csv()).map_err(io_error(&runs_path))?;
    let aggregate_path = out.join("aggregate.txt");
    fs::write(&aggregate_path, report.aggregate_text()).map_err(io_error(&aggregate_path))?;
    Ok(report)
}

/// Parses a seed spec: `a..b` (inclusive) or a comma list (`4` counts as
/// a one-element list).
pub fn parse_seed_spec(spec: &str) -> Result<Vec<u64>, ExperimentError> {
    let bad = || ExperimentError::BadSeedSpec(spec.to_owned());
    if let Some((from, to)) = spec.split_once("..") {
        let from: u64 = from.trim().parse().map_err(|_| bad())?;
        let to: u64 = to.trim().parse().map_err(|_| bad())?;
        if from > to {
            return Err(bad());
        }
        return Ok((from..=to).collect());
    }
    let seeds: Vec<u64> = spec
        .split(',')
        .map(|part| part.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(ExperimentError::EmptySeeds);
    }
    Ok(seeds)
}

/// Parses a comma list of learning rates, each within [0, 1].
pub fn parse_rate_list(spec: &str) -> Result<Vec<f64>, ExperimentError> {
    let bad = || ExperimentError::BadRateList(spec.to_owned());
    spec.split(',')
        .map(|part| {
            let rate: f64 = part.trim().parse().map_err(|_| bad())?;
            if (0.0..=1.0).contains(&rate) {
                Ok(rate)
            } else {
                Err(bad())
            }
        })
        .collect()
}

/// Parses a pure-profile file: one `<player> <lo> <hi>` per line, `#`
/// comments allowed.
pub fn load_profile(text: &str) -> Result<BTreeMap<NodeId, CapacityInterval>, ExperimentError> {
    let mut profile = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 3 {
            return Err(ExperimentError::Profile {
                line,
                message: format!("expected `<player> <lo> <hi>`, got `{}`", body.trim()),
            });
        }
        let player = NodeId::new(tokens[0]);
        let parse = |raw: &str| -> Result<u32, ExperimentError> {
            raw.parse().map_err(|_| ExperimentError::Profile {
                line,
                message: format!("invalid capacity `{raw}`"),
            })
        };
        let interval = CapacityInterval::new(parse(tokens[1])?, parse(tokens[2])?);
        if !interval.is_valid() {
            return Err(ExperimentError::Profile {
                line,
                message: format!("invalid interval {interval}"),
            });
        }
        if profile.insert(player.clone(), interval).is_some() {
            return Err(ExperimentError::Profile {
                line,
                message: format!("duplicate player {player}"),
            });
        }
    }
    Ok(profile)
}

/// Resolves a profile against the configured game and checks it for
/// unilateral deviations. The profile must name exactly the players of
/// the game, with intervals from their generated action sets.
pub fn check_profile(
    config: &GameConfig,
    profile: &BTreeMap<NodeId, CapacityInterval>,
) -> Result<NashReport, ExperimentError> {
    config.validate()?;
    let topology = Topology::from_file(&config.topology).map_err(EngineError::from)?;
    let players = topology.players();
    for id in profile.keys() {
        if !players.contains(id) {
            return Err(ExperimentError::UnknownPlayer(id.clone()));
        }
    }
    let mut sets: BTreeMap<NodeId, ActionSet> = BTreeMap::new();
    let mut indices: BTreeMap<NodeId, usize> = BTreeMap::new();
    for id in &players {
        let params = topology.node_params(id).expect("players are nodes");
        let set = ActionSet::enumerate(params.total_capacity, config.granularity)
            .map_err(EngineError::from)?;
        let &interval = profile
            .get(id)
            .ok_or_else(|| ExperimentError::MissingPlayer(id.clone()))?;
        let index = set
            .index_of(interval)
            .ok_or_else(|| ExperimentError::ActionUnavailable {
                player: id.clone(),
                interval,
            })?;
        sets.insert(id.clone(), set);
        indices.insert(id.clone(), index);
    }
    Ok(crate::analysis::nash_check(&topology, &sets, &indices))
}
