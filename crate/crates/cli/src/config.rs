use std::path::{Path, PathBuf};

use pnlayer::energy::{EnergyContext, Potential};
use pnlayer::minimize::{MinimizeConfig, SolitaryConfig};
use pnlayer::symbols::{SymbolSpec, TabulatedSymbol};
use pnlayer::{build_grid, Grid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("no command given")]
    MissingCommand,
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<pnlayer::Error> for ConfigError {
    fn from(e: pnlayer::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    VerifyAnalytic,
    Spectrum,
    KernelScan,
    Reconstruct,
    RearrangeTest,
    Solitary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolChoice {
    PnReduced,
    HalfLaplacian,
    /// CSV table of symbol values on the run grid.
    Tabulated(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// The reference profile `η`.
    Reference,
    /// `η + a·sin(2πy₁)·exp(-x²)` (`a·x·exp(-x²)` on a line).
    TransverseBump,
    /// `η` plus seeded random bumps.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub k: usize,
    /// Defaults to `1e-5` times the edge estimate.
    pub tol_zero: Option<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { k: 4, tol_zero: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub d: usize,
    pub half_length: f64,
    pub n_x: usize,
    pub n_y: Vec<usize>,
    pub poisson: f64,
    pub shear_modulus: f64,
    pub potential: Potential,
    pub symbol: SymbolChoice,
    pub initial: InitialKind,
    pub initial_amplitude: f64,
    pub minimize: MinimizeConfig,
    pub spectrum: SpectrumConfig,
    pub solitary: SolitaryConfig,
    pub scan_poissons: Vec<f64>,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            d: 1,
            half_length: 200.0,
            n_x: 8192,
            n_y: Vec::new(),
            poisson: 0.0,
            shear_modulus: 1.0,
            potential: Potential::Cosine,
            symbol: SymbolChoice::PnReduced,
            initial: InitialKind::Reference,
            initial_amplitude: 0.0,
            minimize: MinimizeConfig::default(),
            spectrum: SpectrumConfig::default(),
            solitary: SolitaryConfig::default(),
            scan_poissons: vec![-0.4, 0.0, 0.3, 0.34, 0.45],
            levels: vec![0.5, 1.0, -0.5, -1.0],
            trials: 1000,
            output_dir: PathBuf::from("pnlayer-out"),
            seed: 0,
            threads: 1,
        }
    }
}

/// Top-level scalar keys that may be overridden from the command line.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub half_length: Option<f64>,
    #[arg(long)]
    pub n_x: Option<usize>,
    /// Transverse sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_y: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    pub poisson: Option<f64>,
    #[arg(long)]
    pub shear_modulus: Option<f64>,
    #[arg(long)]
    pub initial_amplitude: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.to_path_buf(), e))?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &o.$f {
                    self.$f = v.clone();
                }
            )*};
        }
        set!(d, half_length, n_x, n_y, poisson, shear_modulus, initial_amplitude, trials, output_dir, seed, threads);
    }
}

/// Validated configuration with the objects every command needs.
pub struct Resolved {
    pub config: RunConfig,
    pub command: Command,
    pub grid: Grid,
    pub ctx: EnergyContext,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

pub fn resolve(config: RunConfig, command: Option<Command>) -> Result<Resolved, ConfigError> {
    let command = command.or(config.command).ok_or(ConfigError::MissingCommand)?;
    if config.threads == 0 {
        return Err(invalid("threads must be at least 1"));
    }
    let grid = build_grid(config.d, config.half_length, config.n_x, &config.n_y)?;
    let symbol = match &config.symbol {
        SymbolChoice::PnReduced => SymbolSpec::pn_reduced(config.poisson, config.d)?,
        SymbolChoice::HalfLaplacian => SymbolSpec::half_laplacian(config.d),
        SymbolChoice::Tabulated(path) => SymbolSpec::tabulated(TabulatedSymbol::from_csv(path, &grid)?),
    };
    let potential = match &config.potential {
        Potential::Polynomial(c) => Potential::polynomial(c.clone())?,
        p => p.clone(),
    };
    config.minimize.validate()?;
    let ctx = EnergyContext::new(&grid, symbol, potential.clone(), config.shear_modulus)?;
    if !(config.initial_amplitude.is_finite()) {
        return Err(invalid("initial_amplitude must be finite"));
    }
    let line_only = |what: &str| -> Result<(), ConfigError> {
        if config.d != 1 {
            return Err(invalid(format!("{what} runs on a line; set d = 1")));
        }
        Ok(())
    };
    match command {
        Command::VerifyAnalytic => {
            line_only("verify-analytic")?;
            if potential != Potential::Cosine {
                return Err(invalid("verify-analytic needs the cosine potential"));
            }
            if matches!(config.symbol, SymbolChoice::Tabulated(_)) {
                return Err(invalid("verify-analytic needs an analytic symbol"));
            }
        }
        Command::Spectrum => {
            if !potential.is_double_well() {
                return Err(invalid("spectrum needs a double-well potential"));
            }
            if config.spectrum.k < 3 || config.spectrum.k > pnlayer::spectrum::MAX_EIGENPAIRS {
                return Err(invalid(format!(
                    "spectrum.k = {} must lie in 3..={}",
                    config.spectrum.k,
                    pnlayer::spectrum::MAX_EIGENPAIRS
                )));
            }
            if let Some(t) = config.spectrum.tol_zero {
                if !(t > 0.0) {
                    return Err(invalid("spectrum.tol_zero must be positive"));
                }
            }
        }
        Command::KernelScan => {
            if config.scan_poissons.is_empty() {
                return Err(invalid("scan_poissons is empty"));
            }
            if let Some(nu) = config.scan_poissons.iter().find(|nu| !(**nu > -1.0 && **nu < 0.5)) {
                return Err(invalid(format!("Poisson ratio {nu} outside (-1, 1/2)")));
            }
        }
        Command::Reconstruct => {
            line_only("reconstruct")?;
            if matches!(config.symbol, SymbolChoice::Tabulated(_)) {
                return Err(invalid("reconstruct needs the analytic symbol"));
            }
            if config.levels.is_empty() || config.levels.iter().any(|y| *y == 0.0 || !y.is_finite()) {
                return Err(invalid("levels must be nonempty, finite and nonzero"));
            }
            pnlayer::elasticity::ElasticParams::new(config.shear_modulus, config.poisson)?;
        }
        Command::RearrangeTest => {
            if config.trials == 0 {
                return Err(invalid("trials must be positive"));
            }
        }
        Command::Solitary => {
            line_only("solitary")?;
            if potential != Potential::BenjaminOnoCubic {
                return Err(invalid("solitary needs the benjamin_ono_cubic potential"));
            }
            if !(config.solitary.tol_residual > 0.0) {
                return Err(invalid("solitary.tol_residual must be positive"));
            }
        }
        Command::Solve => {}
    }
    Ok(Resolved {
        config: RunConfig {
            command: Some(command),
            ..config
        },
        command,
        grid,
        ctx,
    })
}
