//! Experiment configuration: one TOML document per experiment.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stablelab::drift::{DriftField, DriftKind, ShellSpec};
use stablelab::params::{check_gr, rho_range};
use stablelab::parametrix::SolverGrid;
use stablelab::rng::derive_seed;
use stablelab::{BesovIndices, Index, LabError, SpectralDensity, StableParams};
use std::path::PathBuf;

/// A configuration problem tied to a key path such as `drift.horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn default_dim() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn infinite() -> Index {
    Index::Infinite
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub alpha: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "isotropic")]
    pub spectral: SpectralDensity,
}

fn isotropic() -> SpectralDensity {
    SpectralDensity::Isotropic
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicesConfig {
    pub beta: f64,
    #[serde(default = "infinite")]
    pub p: Index,
    #[serde(default = "infinite")]
    pub q: Index,
    #[serde(default = "infinite")]
    pub r: Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftChoice {
    Zero,
    Constant,
    Smooth,
    Shells,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub kind: DriftChoice,
    pub horizon: f64,
    /// Value of a constant drift.
    pub value: Option<f64>,
    /// Amplitude and frequency of a smooth drift `a sin(ω y)`.
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    /// Shell field settings.
    #[serde(default)]
    pub shells: ShellConfig,
    /// Run indices that violate the good relation as a negative control.
    #[serde(default)]
    pub negative_control: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellConfig {
    pub count: u32,
    pub modes_per_shell: u32,
    pub scale: f64,
    pub time_slices: usize,
    pub check_regularity: bool,
}

impl Default for ShellConfig {
    fn default() -> Self {
        let s = ShellSpec::default();
        ShellConfig {
            count: s.shells,
            modes_per_shell: s.modes_per_shell,
            scale: s.scale,
            time_slices: s.time_slices,
            check_regularity: s.check_regularity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub times: Vec<f64>,
    /// Half-width of the density grid and of the comparability scan.
    pub radius: f64,
    pub points: usize,
    pub moment_zeta: f64,
    /// Random triples for the convolution estimate.
    pub lemma_draws: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            times: vec![0.1, 1.0],
            radius: 20.0,
            points: 801,
            moment_zeta: 1.0,
            lemma_draws: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BesovConfig {
    /// Random pairs for the duality and product validations.
    pub pairs: usize,
    /// Levels of the mollification report.
    pub levels: Vec<u32>,
    /// Hölder index of the product rule; defaults to `0.1 − β`.
    pub product_rho: Option<f64>,
}

impl Default for BesovConfig {
    fn default() -> Self {
        BesovConfig {
            pairs: 20,
            levels: (1..=8).collect(),
            product_rho: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    pub steps: usize,
    pub bandwidth: Option<f64>,
    /// Also write the terminal samples as a binary dump.
    pub dump: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            paths: 100_000,
            steps: 64,
            bandwidth: None,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Start time `s` and start point `x`.
    pub start: f64,
    pub x0: f64,
    /// Mollification level for `solve` and `simulate`; defaults to the last
    /// verification level.
    pub level: Option<u32>,
    pub grid: SolverGrid,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            start: 0.0,
            x0: 0.0,
            level: None,
            grid: SolverGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub levels: Vec<u32>,
    /// Hölder exponent; defaults to the midpoint of the admissible range.
    pub rho: Option<f64>,
    pub lemma_draws: usize,
    pub zeta: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            levels: vec![2, 4, 6, 8],
            rho: None,
            lemma_draws: 20,
            zeta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub noise: NoiseConfig,
    pub indices: IndicesConfig,
    pub drift: DriftConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub besov: BesovConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Maps a library error raised while validating `section` to a key path.
fn lab(section: &str, e: LabError) -> ConfigError {
    match e {
        LabError::InvalidParameter { name, reason } => ConfigError::new(format!("{section}.{name}"), reason),
        other => ConfigError::new(section, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.message().to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::new(if path == "." { "<document>".into() } else { path }, inner.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stable_params(&self) -> Result<StableParams, ConfigError> {
        StableParams::with_spectral(self.noise.alpha, self.noise.dim, self.noise.spectral.clone())
            .map_err(|e| lab("noise", e))
    }

    pub fn indices(&self) -> Result<BesovIndices, ConfigError> {
        let i = &self.indices;
        BesovIndices::new(i.beta, i.p, i.q, i.r).map_err(|e| lab("indices", e))
    }

    /// Checks everything that can be checked without running an experiment,
    /// including the good relation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::new("name", "must not be empty"));
        }
        let sp = self.stable_params()?;
        let bi = self.indices()?;
        let adm = check_gr(&sp, &bi).map_err(|e| lab("indices", e))?;
        let d = &self.drift;
        if adm.gr && d.negative_control {
            return Err(ConfigError::new("drift.negative_control", "indices satisfy the good relation"));
        }
        if !adm.gr && !d.negative_control {
            return Err(ConfigError::new(
                "indices.beta",
                format!("indices violate the good relation (β must exceed {})", adm.beta_lower_gr),
            ));
        }
        if !(d.horizon > 0.0) {
            return Err(ConfigError::new("drift.horizon", "must be positive"));
        }
        match d.kind {
            DriftChoice::Constant if d.value.is_none() => {
                return Err(ConfigError::new("drift.value", "a constant drift needs a value"))
            }
            DriftChoice::Smooth if d.amplitude.is_none() => {
                return Err(ConfigError::new("drift.amplitude", "a smooth drift needs an amplitude"))
            }
            DriftChoice::Smooth if d.frequency.is_none() => {
                return Err(ConfigError::new("drift.frequency", "a smooth drift needs a frequency"))
            }
            _ => {}
        }
        if d.negative_control && d.kind != DriftChoice::Shells {
            return Err(ConfigError::new("drift.kind", "negative controls use shell fields"));
        }
        if self.density.times.is_empty() || self.density.times.iter().any(|t| !(*t > 0.0)) {
            return Err(ConfigError::new("density.times", "need positive times"));
        }
        if !(self.density.radius > 0.0) || self.density.points < 2 {
            return Err(ConfigError::new("density.radius", "need a positive radius and at least 2 points"));
        }
        if self.simulation.paths < 2 || self.simulation.steps == 0 {
            return Err(ConfigError::new("simulation.paths", "need at least 2 paths and 1 step"));
        }
        self.solver.grid.validate().map_err(|e| lab("solver.grid", e))?;
        if !(self.solver.start >= 0.0 && self.solver.start < d.horizon) {
            return Err(ConfigError::new("solver.start", "must lie in [0, horizon)"));
        }
        let v = &self.verify;
        if v.levels.len() < 3 || v.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::new("verify.levels", "need at least three strictly increasing levels"));
        }
        if d.negative_control && v.rho.is_none() {
            return Err(ConfigError::new("verify.rho", "negative controls need an explicit ρ"));
        }
        if let Some(rho) = v.rho {
            if !d.negative_control {
                let range = rho_range(&bi, &sp).map_err(|e| lab("indices", e))?;
                if !range.contains(rho) {
                    return Err(ConfigError::new(
                        "verify.rho",
                        format!("must lie in ({}, {})", range.lo, range.hi),
                    ));
                }
            }
        }
        if self.besov.levels.is_empty() {
            return Err(ConfigError::new("besov.levels", "need at least one level"));
        }
        Ok(())
    }

    /// Hölder exponent of the verification runs.
    pub fn rho(&self) -> Result<f64, ConfigError> {
        match self.verify.rho {
            Some(r) => Ok(r),
            None => Ok(rho_range(&self.indices()?, &self.stable_params()?)
                .map_err(|e| lab("indices", e))?
                .midpoint()),
        }
    }

    /// Mollification level of single runs.
    pub fn run_level(&self) -> u32 {
        self.solver.level.unwrap_or(*self.verify.levels.last().unwrap())
    }

    /// Builds the drift; its seed is the `drift` substream of the global seed.
    pub fn drift_field(&self) -> Result<DriftField, LabError> {
        let sp = StableParams::with_spectral(self.noise.alpha, self.noise.dim, self.noise.spectral.clone())?;
        let i = &self.indices;
        let bi = BesovIndices::new(i.beta, i.p, i.q, i.r)?;
        let d = &self.drift;
        let kind = match d.kind {
            DriftChoice::Zero => DriftKind::Zero,
            DriftChoice::Constant => DriftKind::Constant { value: d.value.unwrap_or(0.0) },
            DriftChoice::Smooth => DriftKind::Smooth {
                amplitude: d.amplitude.unwrap_or(0.0),
                frequency: d.frequency.unwrap_or(1.0),
            },
            DriftChoice::Shells => {
                let spec = ShellSpec {
                    shells: d.shells.count,
                    modes_per_shell: d.shells.modes_per_shell,
                    scale: d.shells.scale,
                    time_slices: d.shells.time_slices,
                    check_regularity: d.shells.check_regularity,
                };
                let seed = derive_seed(self.seed, "drift");
                return if d.negative_control {
                    DriftField::make_negative_control(&sp, &bi, d.horizon, seed, spec)
                } else {
                    DriftField::make(&sp, &bi, d.horizon, seed, spec)
                };
            }
        };
        Ok(DriftField::builtin(&sp, bi, d.horizon, kind))
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output");
        }
        let digest = Sha256::digest(serde_json::to_vec(&v).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
