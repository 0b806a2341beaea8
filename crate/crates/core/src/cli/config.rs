//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;
use crate::moment::ConventionTable;
use crate::synthesis::{ControlClass, ZetaSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Steer,
    Regularity,
    Riesz,
    ZetaConvergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Steer => "steer",
            Experiment::Regularity => "regularity",
            Experiment::Riesz => "riesz",
            Experiment::ZetaConvergence => "zeta-convergence",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            Experiment::Steer,
            Experiment::Regularity,
            Experiment::Riesz,
            Experiment::ZetaConvergence,
        ]
        .into_iter()
        .find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Zero,
    Constant {
        k0: f64,
    },
    Exponential {
        k0: f64,
        a: f64,
    },
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    /// Two-column `t,K` file, relative paths resolved against the config file.
    Csv {
        path: PathBuf,
    },
}

impl KernelConfig {
    pub fn build(&self, base: &Path) -> Result<MemoryKernel> {
        match self {
            KernelConfig::Zero => Ok(MemoryKernel::zero()),
            KernelConfig::Constant { k0 } => {
                MemoryKernel::from_family(crate::kernels::KernelFamily::Constant { k0: *k0 })
            }
            KernelConfig::Exponential { k0, a } => {
                MemoryKernel::from_family(crate::kernels::KernelFamily::Exponential {
                    k0: *k0,
                    a: *a,
                })
            }
            KernelConfig::Tabulated { times, values } => {
                MemoryKernel::tabulated(times.clone(), values.clone())
            }
            KernelConfig::Csv { path } => MemoryKernel::from_csv(base.join(path)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Steps(usize),
    Keyword(GridKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `ξₙ = xi_scale·n^{−power}`, `ηₙ = eta_scale·n^{−power}`.
    InversePower {
        power: f64,
        #[serde(default = "one")]
        xi_scale: f64,
        #[serde(default)]
        eta_scale: f64,
    },
    /// Uniform on `(−n^{−decay}, n^{−decay})`, drawn from the config seed.
    Random {
        decay: f64,
    },
    Explicit {
        xi: Vec<f64>,
        eta: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// `sin(kπt/T)` with its quadratic part removed.
    ProjectedSine { k: f64 },
    /// `(t(T − t)/T²)^power` times the weight-orthogonal cubic.
    WindowedCubic { power: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    #[serde(default = "one")]
    pub g0: f64,
    pub g1: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieszConfig {
    /// Moment order 0, 1 or 2.
    #[serde(default)]
    pub order: u8,
    /// When set, a mismatch with the computed verdict is a failure.
    #[serde(default)]
    pub expect_riesz: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaConvergenceConfig {
    /// 1-based mode indices.
    pub modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free text, ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub experiment: Experiment,
    #[serde(default)]
    pub b: f64,
    pub kernel: KernelConfig,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_modes: usize,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_class: Option<ControlClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conventions: Option<ConventionTable>,
    #[serde(default)]
    pub zeta_solver: ZetaSolver,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularity: Option<RegularityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riesz: Option<RieszConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_convergence: Option<ZetaConvergenceConfig>,
}

fn field(name: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("config field `{name}`: {message}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| {
            Error::InvalidArgument(format!(
                "config parse error at line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(field(
                "T",
                format!("must be a positive number, got {}", self.horizon),
            ));
        }
        if !self.b.is_finite() {
            return Err(field("b", "must be finite"));
        }
        if self.n_modes == 0 {
            return Err(field("n_modes", "must be at least 1"));
        }
        if let GridConfig::Steps(m) = self.grid {
            if m < 16 {
                return Err(field("grid", format!("needs at least 16 steps, got {m}")));
            }
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(field("ridge", format!("must be >= 0, got {}", self.ridge)));
        }
        if let Some(c) = &self.conventions {
            c.validate().map_err(|e| field("conventions", e))?;
        }
        match self.experiment {
            Experiment::Steer => {
                let class = self
                    .control_class
                    .ok_or_else(|| field("control_class", "required for steer"))?;
                if class == ControlClass::H30 {
                    return Err(field(
                        "control_class",
                        "h30 controls are used by the regularity experiment only",
                    ));
                }
                match &self.target {
                    None => return Err(field("target", "required for steer")),
                    Some(TargetConfig::Explicit { xi, eta }) => {
                        if xi.len() != self.n_modes || eta.len() != self.n_modes {
                            return Err(field(
                                "target",
                                format!("explicit xi/eta need n_modes = {} entries", self.n_modes),
                            ));
                        }
                    }
                    Some(TargetConfig::InversePower {
                        power,
                        xi_scale,
                        eta_scale,
                    }) => {
                        if ![power, xi_scale, eta_scale].iter().all(|v| v.is_finite()) {
                            return Err(field("target", "parameters must be finite"));
                        }
                    }
                    Some(TargetConfig::Random { decay }) => {
                        if !decay.is_finite() {
                            return Err(field("target", "decay must be finite"));
                        }
                    }
                }
            }
            Experiment::Regularity => {
                let r = self
                    .regularity
                    .as_ref()
                    .ok_or_else(|| field("regularity", "required for the regularity experiment"))?;
                if !r.g0.is_finite() || r.g0 == 0.0 {
                    return Err(field("regularity.g0", "must be finite and non-zero"));
                }
                if let GeneratorConfig::WindowedCubic { power } = r.g1 {
                    if power < 0 {
                        return Err(field("regularity.g1.power", "must be >= 0"));
                    }
                }
                if self.n_modes < 8 {
                    return Err(field("n_modes", "tail fits need at least 8 modes"));
                }
            }
            Experiment::Riesz => {
                let order = self.riesz.as_ref().map_or(0, |r| r.order);
                if order > 2 {
                    return Err(field(
                        "riesz.order",
                        format!("must be 0, 1 or 2, got {order}"),
                    ));
                }
                if self.n_modes < 4 {
                    return Err(field("n_modes", "diagnostics need at least 4 modes"));
                }
            }
            Experiment::ZetaConvergence => {
                let z = self
                    .zeta_convergence
                    .as_ref()
                    .ok_or_else(|| field("zeta_convergence", "required for zeta-convergence"))?;
                if z.modes.is_empty() {
                    return Err(field(
                        "zeta_convergence.modes",
                        "must list at least one mode",
                    ));
                }
                if let Some(&bad) = z.modes.iter().find(|&&n| n == 0 || n > self.n_modes) {
                    return Err(field(
                        "zeta_convergence.modes",
                        format!("mode {bad} outside 1..={}", self.n_modes),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Template for `print-default-config`.
    pub fn template(experiment: Experiment) -> Self {
        let base = Self {
            comment: None,
            experiment,
            b: 0.0,
            kernel: KernelConfig::Exponential { k0: 0.5, a: 1.0 },
            horizon: 2.5,
            n_modes: 12,
            grid: GridConfig::Keyword(GridKeyword::Auto),
            control_class: None,
            target: None,
            ridge: 0.0,
            seed: 0,
            output_dir: PathBuf::from(format!("out/{}", experiment.name())),
            conventions: None,
            zeta_solver: ZetaSolver::Timestep,
            regularity: None,
            riesz: None,
            zeta_convergence: None,
        };
        match experiment {
            Experiment::Steer => Self {
                comment: Some(
                    "Steer from rest to the target at time T. control_class: l2 | h10 | h20. \
                     target.generator: inverse_power | random | explicit. grid: \"auto\" or a step count."
                        .into(),
                ),
                control_class: Some(ControlClass::H10),
                target: Some(TargetConfig::InversePower {
                    power: 2.0,
                    xi_scale: 1.0,
                    eta_scale: 0.0,
                }),
                ..base
            },
            Experiment::Regularity => Self {
                comment: Some(
                    "H30 control built from g0*g1; compares weighted tails with and without memory. \
                     g1.generator: projected_sine {k} | windowed_cubic {power}."
                        .into(),
                ),
                kernel: KernelConfig::Exponential { k0: 1.0, a: 1.0 },
                horizon: 5.0,
                n_modes: 48,
                regularity: Some(RegularityConfig {
                    g0: 1.0,
                    g1: GeneratorConfig::ProjectedSine { k: 2.0 },
                }),
                ..base
            },
            Experiment::Riesz => Self {
                comment: Some("Gram spectrum of the realified moment family; riesz.order: 0 | 1 | 2.".into()),
                kernel: KernelConfig::Zero,
                horizon: 2.0,
                n_modes: 16,
                riesz: Some(RieszConfig {
                    order: 0,
                    expect_riesz: None,
                }),
                ..base
            },
            Experiment::ZetaConvergence => Self {
                comment: Some(
                    "Richardson study of both zeta solvers on m, 2m and 4m steps, m being `grid`."
                        .into(),
                ),
                kernel: KernelConfig::Exponential { k0: 1.0, a: 1.0 },
                horizon: 2.0,
                n_modes: 4,
                grid: GridConfig::Steps(256),
                zeta_convergence: Some(ZetaConvergenceConfig { modes: vec![1, 4] }),
                ..base
            },
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
