//! Experiment configuration: documented defaults, an optional TOML file,
//! and command-line overrides, in that order of precedence.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    /// Fixed rank bounds (requires `ranks`).
    Ihtr,
    /// Rank bounds predicted while iterating.
    Iht,
    /// Run both solvers on every instance.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SvdChoice {
    /// Exact truncated SVD.
    Exact,
    /// Randomized column-sampling SVD.
    Sketch,
}

/// Key-value file schema. Unknown keys are rejected by name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    shape: Option<Vec<usize>>,
    ranks: Option<Vec<usize>>,
    sr: Option<f64>,
    srs: Option<Vec<f64>>,
    sigma: Option<f64>,
    tau: Option<f64>,
    taus: Option<Vec<f64>>,
    tol: Option<f64>,
    xi: Option<f64>,
    max_iter: Option<usize>,
    weights: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    solver: Option<String>,
    svd: Option<String>,
    out: Option<PathBuf>,
    input: Option<PathBuf>,
    sweeps: Option<usize>,
    save_fixtures: Option<bool>,
}

/// Command-line overrides; every file key is addressable.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Mode lengths, comma separated (e.g. 20,30,40)
    #[arg(long, value_delimiter = ',', global = true)]
    pub shape: Option<Vec<usize>>,
    /// Per-mode rank bounds, comma separated
    #[arg(long, value_delimiter = ',', global = true)]
    pub ranks: Option<Vec<usize>>,
    /// Sampling ratio in (0, 1]
    #[arg(long, global = true)]
    pub sr: Option<f64>,
    /// Sampling ratios for the step-size sweep
    #[arg(long, value_delimiter = ',', global = true)]
    pub srs: Option<Vec<f64>>,
    /// Noise level (standard deviation)
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Gradient step size
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Step sizes for the sweep, comma separated
    #[arg(long, value_delimiter = ',', global = true)]
    pub taus: Option<Vec<f64>>,
    /// Relative-change stopping tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Rank-prediction spectrum threshold in (0, 1)
    #[arg(long, global = true)]
    pub xi: Option<f64>,
    /// Iteration cap
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Per-mode combination weights (must sum to 1)
    #[arg(long, value_delimiter = ',', global = true)]
    pub weights: Option<Vec<f64>>,
    /// Independent trials per setting
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Base RNG seed; trial t uses seed + t
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Which solver(s) to run
    #[arg(long, value_enum, global = true)]
    pub solver: Option<SolverChoice>,
    /// SVD backend
    #[arg(long, value_enum, global = true)]
    pub svd: Option<SvdChoice>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Input image (binary P6 pixmap)
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Alternating sweeps for the image rank reduction
    #[arg(long, global = true)]
    pub sweeps: Option<usize>,
    /// Also write tensor/observation-set fixture files
    #[arg(long, global = true)]
    pub save_fixtures: bool,
}

/// Fully resolved settings; every field has a value.
#[derive(Debug, Clone)]
pub struct Settings {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub sr: f64,
    pub srs: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
    pub taus: Vec<f64>,
    pub tol: f64,
    pub xi: Option<f64>,
    pub max_iter: usize,
    pub weights: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub solver: Option<SolverChoice>,
    pub svd: SvdChoice,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub sweeps: usize,
    pub save_fixtures: bool,
}

impl Settings {
    /// Layered resolution: defaults, then the file, then the flags.
    pub fn resolve(config_path: Option<&Path>, cli: &Overrides) -> Result<Settings, ConfigError> {
        let file = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        let solver = match cli.solver {
            Some(s) => Some(s),
            None => match file.solver.as_deref() {
                None => None,
                Some("ihtr") => Some(SolverChoice::Ihtr),
                Some("iht") => Some(SolverChoice::Iht),
                Some("both") => Some(SolverChoice::Both),
                Some(other) => {
                    return Err(ConfigError(format!(
                        "unknown solver `{other}` (expected ihtr, iht or both)"
                    )))
                }
            },
        };
        let svd = match cli.svd {
            Some(s) => s,
            None => match file.svd.as_deref() {
                None => SvdChoice::Exact,
                Some("exact") => SvdChoice::Exact,
                Some("sketch") => SvdChoice::Sketch,
                Some(other) => {
                    return Err(ConfigError(format!(
                        "unknown svd backend `{other}` (expected exact or sketch)"
                    )))
                }
            },
        };

        let settings = Settings {
            shape: cli
                .shape
                .clone()
                .or(file.shape)
                .unwrap_or_else(|| vec![20, 30, 40]),
            ranks: cli
                .ranks
                .clone()
                .or(file.ranks)
                .unwrap_or_else(|| vec![2, 2, 2]),
            sr: cli.sr.or(file.sr).unwrap_or(0.6),
            srs: cli
                .srs
                .clone()
                .or(file.srs)
                .unwrap_or_else(|| vec![0.3, 0.6]),
            sigma: cli.sigma.or(file.sigma).unwrap_or(0.0),
            tau: cli.tau.or(file.tau).unwrap_or(1.4),
            taus: cli
                .taus
                .clone()
                .or(file.taus)
                .unwrap_or_else(|| vec![0.1, 0.4, 0.7, 1.0, 1.4]),
            tol: cli.tol.or(file.tol).unwrap_or(1e-8),
            xi: cli.xi.or(file.xi),
            max_iter: cli.max_iter.or(file.max_iter).unwrap_or(5000),
            weights: cli.weights.clone().or(file.weights),
            trials: cli.trials.or(file.trials).unwrap_or(10),
            seed: cli.seed.or(file.seed).unwrap_or(1),
            solver,
            svd,
            out: cli
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            input: cli.input.clone().or(file.input),
            sweeps: cli.sweeps.or(file.sweeps).unwrap_or(10),
            save_fixtures: cli.save_fixtures || file.save_fixtures.unwrap_or(false),
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(ConfigError(format!("invalid shape {:?}", self.shape)));
        }
        if !(self.sr > 0.0 && self.sr <= 1.0) {
            return Err(ConfigError(format!("sr {} outside (0, 1]", self.sr)));
        }
        for &sr in &self.srs {
            if !(sr > 0.0 && sr <= 1.0) {
                return Err(ConfigError(format!("srs entry {sr} outside (0, 1]")));
            }
        }
        if self.sigma < 0.0 {
            return Err(ConfigError(format!("sigma {} is negative", self.sigma)));
        }
        if !(self.tau > 0.0) {
            return Err(ConfigError(format!("tau {} must be positive", self.tau)));
        }
        if self.taus.is_empty() {
            return Err(ConfigError("taus must not be empty".into()));
        }
        for &tau in &self.taus {
            if !(tau > 0.0 && tau <= 1.5) {
                return Err(ConfigError(format!("taus entry {tau} outside (0, 1.5]")));
            }
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(ConfigError(format!("xi {xi} outside (0, 1)")));
            }
        }
        if self.trials == 0 {
            return Err(ConfigError("trials must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(ConfigError("max_iter must be at least 1".into()));
        }
        if self.sweeps == 0 {
            return Err(ConfigError("sweeps must be at least 1".into()));
        }
        Ok(())
    }

    /// The spectrum threshold with its context-dependent default: images
    /// predict ranks at 1e-4, noisy completion at 0.3, noiseless at 1e-2.
    pub fn xi_for(&self, image_run: bool) -> f64 {
        self.xi.unwrap_or(if image_run {
            1e-4
        } else if self.sigma > 0.0 {
            0.3
        } else {
            1e-2
        })
    }
}
