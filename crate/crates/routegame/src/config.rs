//! Experiment configuration: a small `key = value` format with strict
//! validation — unknown keys are errors, not typos to silently ignore.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const DEFAULT_GRANULARITY: u32 = 1;
pub const DEFAULT_THETA: f64 = 0.99;
pub const DEFAULT_WINDOW: u64 = 50;
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: &'static str,
        value: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("b out of [0,1]")]
    LearningRateOutOfRange,
    #[error("theta out of (0.5,1]")]
    ThetaOutOfRange,
    #[error("window must be at least 1")]
    WindowTooSmall,
    #[error("granularity must be at least 1")]
    GranularityTooSmall,
    #[error("cannot read topology file {path}: {source}")]
    TopologyUnreadable {
        path: String,
        source: std::io::Error,
    },
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// Path of the topology file.
    pub topology: PathBuf,
    /// Learning rate of the reward-inaction rule, in [0, 1].
    pub b: f64,
    /// Number of steps to play (upper bound under `early_stop`).
    pub horizon: u64,
    /// Master seed; per-player streams are derived from it.
    pub seed: u64,
    /// Interval grid step for the generated action sets.
    pub granularity: u32,
    /// Convergence threshold on the top action probability.
    pub theta: f64,
    /// Steps the threshold must hold to call the run converged.
    pub window: u64,
    /// Stop as soon as one stability window completes.
    pub early_stop: bool,
    /// Output directory for traces and summaries.
    pub out: PathBuf,
}

impl GameConfig {
    /// Parses config text. Relative paths inside are resolved against
    /// `base` (the config file's directory, or the working directory for
    /// literal text).
    pub fn parse_with_base(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut topology: Option<PathBuf> = None;
        let mut b: Option<f64> = None;
        let mut horizon: Option<u64> = None;
        let mut seed: Option<u64> = None;
        let mut granularity = DEFAULT_GRANULARITY;
        let mut theta = DEFAULT_THETA;
        let mut window = DEFAULT_WINDOW;
        let mut early_stop = false;
        let mut out = PathBuf::from(DEFAULT_OUT);

        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: body.to_owned(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_owned()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_owned(),
                });
            }
            match key {
                "topology" => topology = Some(resolve(base, value)),
                "b" => b = Some(parse_value(value, line, "b")?),
                "horizon" => horizon = Some(parse_value(value, line, "horizon")?),
                "seed" => seed = Some(parse_value(value, line, "seed")?),
                "granularity" => granularity = parse_value(value, line, "granularity")?,
                "theta" => theta = parse_value(value, line, "theta")?,
                "window" => window = parse_value(value, line, "window")?,
                "early_stop" => early_stop = parse_value(value, line, "early_stop")?,
                "out" => out = resolve(base, value),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
        }

        let config = GameConfig {
            topology: topology.ok_or(ConfigError::MissingKey("topology"))?,
            b: b.ok_or(ConfigError::MissingKey("b"))?,
            horizon: horizon.ok_or(ConfigError::MissingKey("horizon"))?,
            seed: seed.ok_or(ConfigError::MissingKey("seed"))?,
            granularity,
            theta,
            window,
            early_stop,
            out,
        };
        config.validate()?;
        config.check_topology_readable()?;
        Ok(config)
    }

    /// Parses literal text; relative paths resolve against the working
    /// directory.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_base(text, Path::new(""))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::parse_with_base(&text, base)
    }

    /// Range checks shared by the parser and by configs built in code.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.b) || self.b.is_nan() {
            return Err(ConfigError::LearningRateOutOfRange);
        }
        if !(self.theta > 0.5 && self.theta <= 1.0) {
            return Err(ConfigError::ThetaOutOfRange);
        }
        if self.window == 0 {
            return Err(ConfigError::WindowTooSmall);
        }
        if self.granularity == 0 {
            return Err(ConfigError::GranularityTooSmall);
        }
        Ok(())
    }

    fn check_topology_readable(&self) -> Result<(), ConfigError> {
        std::fs::metadata(&self.topology)
            .map(|_| ())
            .map_err(|source| ConfigError::TopologyUnreadable {
                path: self.topology.display().to_string(),
                source,
            })
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let path = Path::new(value);
    if path.is_absolute() || base.as_os_str().is_empty() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn parse_value<T: std::str::FromStr>(
    value: &str,
    line: usize,
    key: &'static str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key,
        value: value.to_owned(),
    })
}
