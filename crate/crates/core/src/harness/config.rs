use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bar_model::{BarModel, GaussianInitial};
use crate::error::{Error, Result};
use crate::smoothing::{BandwidthSchedule, SmoothingKernel};
use crate::tree_sim::{Scope, MAX_GENERATION};

/// Root law of each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialSpec {
    /// The invariant law `N(0, σ_a²)`.
    Stationary,
    Gaussian(GaussianInitial),
}

impl InitialSpec {
    pub fn resolve(&self, model: &BarModel) -> GaussianInitial {
        match self {
            InitialSpec::Stationary => model.stationary(),
            InitialSpec::Gaussian(g) => *g,
        }
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialSpec::Stationary => f.write_str("stationary"),
            InitialSpec::Gaussian(g) => write!(f, "gaussian({},{})", g.m0, g.rho0),
        }
    }
}

impl FromStr for InitialSpec {
    type Err = Error;

    /// `stationary` or `gaussian(M0,RHO0)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "stationary" {
            return Ok(InitialSpec::Stationary);
        }
        let inner = s
            .strip_prefix("gaussian(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "initial must be `stationary` or `gaussian(m0,rho0)`, got `{s}`"
                ))
            })?;
        let mut parts = inner.split(',').map(|p| p.trim().parse::<f64>());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(m0)), Some(Ok(rho0)), None) => {
                Ok(InitialSpec::Gaussian(GaussianInitial::new(m0, rho0)?))
            }
            _ => Err(Error::InvalidConfig(format!(
                "cannot parse initial law `{s}`"
            ))),
        }
    }
}

impl TryFrom<String> for InitialSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialSpec> for String {
    fn from(spec: InitialSpec) -> String {
        spec.to_string()
    }
}

fn default_sigma() -> f64 {
    1.0
}

fn default_n0() -> usize {
    500
}

fn default_kernel() -> String {
    "gaussian".to_string()
}

fn default_scope() -> Scope {
    Scope::Generation
}

fn default_initial() -> InitialSpec {
    InitialSpec::Stationary
}

/// One CLT experiment. Serialised as a flat key-value document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub a: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub n: u32,
    pub gamma: f64,
    pub x: f64,
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default = "default_scope")]
    pub scope: Scope,
    #[serde(default = "default_kernel")]
    pub kernel_name: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_initial")]
    pub initial: InitialSpec,
    #[serde(default)]
    pub record_previous_generation: bool,
}

/// Largest tree depth the harness will simulate (2^25 states per generation).
pub const MAX_EXPERIMENT_DEPTH: u32 = 25;

/// Validated pieces of a configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub model: BarModel,
    pub schedule: BandwidthSchedule,
    pub kernel: SmoothingKernel,
    pub initial: GaussianInitial,
}

impl ExperimentConfig {
    /// The sub-critical reference setup at `a = 0.5`.
    pub fn reference(master_seed: u64) -> Self {
        ExperimentConfig {
            a: 0.5,
            sigma: 1.0,
            n: 15,
            gamma: 0.201,
            x: -1.3,
            n0: 500,
            scope: Scope::Generation,
            kernel_name: default_kernel(),
            master_seed,
            initial: InitialSpec::Stationary,
            record_previous_generation: false,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let model = BarModel::new(self.a, self.sigma)?;
        let kernel = SmoothingKernel::by_name(&self.kernel_name)?;
        if kernel.dim() != 1 {
            return Err(Error::InvalidConfig(
                "the BAR harness needs a one-dimensional kernel".into(),
            ));
        }
        let schedule = BandwidthSchedule::new(self.gamma, 1)?;
        if self.n > MAX_EXPERIMENT_DEPTH.min(MAX_GENERATION) {
            return Err(Error::InvalidConfig(format!(
                "tree depth {} exceeds the supported maximum {MAX_EXPERIMENT_DEPTH}",
                self.n
            )));
        }
        if self.n0 == 0 {
            return Err(Error::InvalidConfig("n0 must be positive".into()));
        }
        if self.record_previous_generation && self.n == 0 {
            return Err(Error::InvalidConfig(
                "recording generation n-1 needs n >= 1".into(),
            ));
        }
        if !self.x.is_finite() {
            return Err(Error::InvalidConfig("x must be finite".into()));
        }
        let initial = self.initial.resolve(&model);
        Ok(ResolvedConfig {
            model,
            schedule,
            kernel,
            initial,
        })
    }

    /// Reads a TOML document, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::format(path, e))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }
}
