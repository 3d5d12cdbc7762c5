use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::dr_prior::DrConfig;
use crate::error::{CboError, Result};
use crate::parent_posterior::{PosteriorConfig, PosteriorMode};
use crate::scm::{self, ErKind, MechanismKind, Scm};
use crate::surrogate::GpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScmSource {
    Builtin {
        name: String,
    },
    SpecFile {
        path: PathBuf,
    },
    ErdosRenyi {
        nodes: usize,
        mechanism: ErKind,
        /// Seed of the random graph; the run seed when absent, so each
        /// replicate draws its own graph.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        graph_seed: Option<u64>,
    },
}

impl ScmSource {
    pub fn builtin(name: &str) -> Self {
        ScmSource::Builtin {
            name: name.to_string(),
        }
    }

    pub fn load(&self, run_seed: u64) -> Result<Scm> {
        match self {
            ScmSource::Builtin { name } => scm::builtin(name).ok_or_else(|| {
                CboError::MalformedSpec(format!(
                    "unknown builtin SCM `{name}` (expected one of {})",
                    scm::BUILTIN_NAMES.join(", ")
                ))
            }),
            ScmSource::SpecFile { path } => scm::load_scm_spec(path),
            ScmSource::ErdosRenyi {
                nodes,
                mechanism,
                graph_seed,
            } => scm::generate_erdos_renyi(*nodes, *mechanism, graph_seed.unwrap_or(run_seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CboU,
    CboKnown,
    CboWrong,
    Random,
    Bo,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CboU,
        Method::CboKnown,
        Method::CboWrong,
        Method::Random,
        Method::Bo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CboU => "cbo-u",
            Method::CboKnown => "cbo-known",
            Method::CboWrong => "cbo-wrong",
            Method::Random => "random",
            Method::Bo => "bo",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CboError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSetting {
    /// Linear when every mechanism of the SCM is linear.
    #[default]
    Auto,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSettings {
    pub mode: ModeSetting,
    pub noise_variance: f64,
    pub prior_variance: f64,
    pub num_features: usize,
    pub kernel_variance: f64,
    pub lengthscale: f64,
}

impl Default for PosteriorSettings {
    fn default() -> Self {
        let p = PosteriorConfig::default();
        Self {
            mode: ModeSetting::Auto,
            noise_variance: p.noise_variance,
            prior_variance: p.prior_variance,
            num_features: p.num_features,
            kernel_variance: p.kernel_variance,
            lengthscale: p.lengthscale,
        }
    }
}

impl PosteriorSettings {
    pub fn resolve(&self, scm: &Scm, seed: u64) -> PosteriorConfig {
        let mode = match self.mode {
            ModeSetting::Linear => PosteriorMode::Linear,
            ModeSetting::Nonlinear => PosteriorMode::Nonlinear,
            ModeSetting::Auto => {
                let linear = scm
                    .mechanisms()
                    .iter()
                    .all(|m| matches!(m.kind, MechanismKind::Linear { .. }));
                if linear {
                    PosteriorMode::Linear
                } else {
                    PosteriorMode::Nonlinear
                }
            }
        };
        PosteriorConfig {
            mode,
            noise_variance: self.noise_variance,
            prior_variance: self.prior_variance,
            num_features: self.num_features,
            kernel_variance: self.kernel_variance,
            lengthscale: self.lengthscale,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GivenSet {
    pub nodes: Vec<String>,
    pub probability: f64,
}

/// Where the initial parent-set prior of CBO-U comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Bootstrap frequencies of the doubly robust estimate.
    #[default]
    DoublyRobust,
    /// Uniform over every subset of the non-target nodes.
    Exhaustive,
    /// User-supplied sets, bypassing estimation.
    Given { sets: Vec<GivenSet> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scm: ScmSource,
    pub method: Method,
    pub n_obs: usize,
    pub n_int: usize,
    pub trials: usize,
    pub seed: u64,
    pub prior: PriorSpec,
    pub dr: DrConfig,
    pub posterior: PosteriorSettings,
    pub acquisition: AcquisitionConfig,
    pub gp: GpConfig,
    /// Wall-clock times are left at zero unless set, keeping traces
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scm: ScmSource::builtin("toy"),
            method: Method::CboU,
            n_obs: 200,
            n_int: 2,
            trials: 30,
            seed: 0,
            prior: PriorSpec::default(),
            dr: DrConfig::default(),
            posterior: PosteriorSettings::default(),
            acquisition: AcquisitionConfig::default(),
            gp: GpConfig::default(),
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CboError::Config("trials must be >= 1".into()));
        }
        if self.n_obs < 2 {
            return Err(CboError::Config("n_obs must be >= 2".into()));
        }
        if self.acquisition.grid_size == 0 {
            return Err(CboError::Config("grid_size must be >= 1".into()));
        }
        if !(self.acquisition.threshold >= 0.0) {
            return Err(CboError::Config("threshold must be >= 0".into()));
        }
        if self.method == Method::CboU && self.prior == PriorSpec::DoublyRobust {
            self.dr.validate()?;
        }
        Ok(())
    }
}
