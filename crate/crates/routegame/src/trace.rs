//! Step-by-step record of a run and its CSV projection.
//!
//! The CSV schema is fixed and append-only: one row per player per step,
//! columns `step,player,lo,hi,granted,benefit,u,max_prob,satisfied,traversed`,
//! UTF-8, `\n` line endings. Floats are written with Rust's shortest
//! round-trip formatting, so identical runs serialize to identical bytes.

use std::io::{self, Write};

use thiserror::Error;

use crate::analysis::{ConvergenceReport, NashReport};
use crate::config::GameConfig;
use crate::market::Contract;
use crate::strategy::ActionSet;
use crate::topology::NodeId;

pub const CSV_HEADER: &str = "step,player,lo,hi,granted,benefit,u,max_prob,satisfied,traversed";

/// What one player saw and did in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRow {
    pub player: NodeId,
    /// Index of the sampled action in the player's action set.
    pub action: usize,
    pub lo: u32,
    pub hi: u32,
    pub granted: u32,
    pub benefit: f64,
    /// Normalized utility fed to the strategy update.
    pub utility: f64,
    /// Strategy vector *after* this step's update.
    pub strategy: Vec<f64>,
    /// Lower end of the request was met.
    pub satisfied: bool,
    /// Some downstream contract routed through this player.
    pub traversed: bool,
}

impl PlayerRow {
    pub fn max_prob(&self) -> f64 {
        self.strategy.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// All players' rows for one step, plus the contracts settled in it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// One row per player, in player-id order.
    pub rows: Vec<PlayerRow>,
    pub contracts: Vec<Contract>,
}

/// A player's static description within a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    pub id: NodeId,
    pub actions: ActionSet,
    pub initial_strategy: Vec<f64>,
}

/// A complete run: configuration echo, per-player setup, every step, and
/// the post-run analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    pub config: GameConfig,
    pub players: Vec<PlayerSpec>,
    pub steps: Vec<StepReport>,
    pub convergence: ConvergenceReport,
    /// Present only when the run converged.
    pub nash: Option<NashReport>,
}

/// One CSV line, parsed or about to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub step: u64,
    pub player: String,
    pub lo: u32,
    pub hi: u32,
    pub granted: u32,
    pub benefit: f64,
    pub u: f64,
    pub max_prob: f64,
    pub satisfied: bool,
    pub traversed: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad value in column `{column}`: {value}")]
    BadValue {
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("missing header line")]
    MissingHeader,
    #[error("unexpected header `{0}`")]
    BadHeader(String),
}

impl GameTrace {
    /// Flattens the trace into CSV rows, step-major, players in id order
    /// within each step.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.steps
            .iter()
            .flat_map(|step| {
                step.rows.iter().map(|row| CsvRow {
                    step: step.step,
                    player: row.player.as_str().to_owned(),
                    lo: row.lo,
                    hi: row.hi,
                    granted: row.granted,
                    benefit: row.benefit,
                    u: row.utility,
                    max_prob: row.max_prob(),
                    satisfied: row.satisfied,
                    traversed: row.traversed,
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: &mut W) -> io::Result<()> {
        writer.write_all(CSV_HEADER.as_bytes())?;
        writer.write_all(b"\n")?;
        for row in self.csv_rows() {
            writeln!(
                writer,
                "{},{},{},{},{},{},{},{},{},{}",
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
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Parses text produced by [`GameTrace::write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Err(TraceError::MissingHeader),
        Some((_, header)) if header != CSV_HEADER => {
            return Err(TraceError::BadHeader(header.to_owned()))
        }
        Some(_) => {}
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != 10 {
            return Err(TraceError::ColumnCount {
                line,
                expected: 10,
                found: cells.len(),
            });
        }
        fn cell<T: std::str::FromStr>(
            raw: &str,
            line: usize,
            column: &'static str,
        ) -> Result<T, TraceError> {
            raw.parse().map_err(|_| TraceError::BadValue {
                line,
                column,
                value: raw.to_owned(),
            })
        }
        rows.push(CsvRow {
            step: cell(cells[0], line, "step")?,
            player: cells[1].to_owned(),
            lo: cell(cells[2], line, "lo")?,
            hi: cell(cells[3], line, "hi")?,
            granted: cell(cells[4], line, "granted")?,
            benefit: cell(cells[5], line, "benefit")?,
            u: cell(cells[6], line, "u")?,
            max_prob: cell(cells[7], line, "max_prob")?,
            satisfied: cell(cells[8], line, "satisfied")?,
            traversed: cell(cells[9], line, "traversed")?,
        });
    }
    Ok(rows)
}
