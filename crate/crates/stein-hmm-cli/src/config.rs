//! Experiment configuration: parsing, validation, and the run manifest.
//!
//! Configs are JSON with a mandatory seed (no wall-clock defaults). The
//! manifest written next to the results is the fully resolved config (model
//! inlined, defaults materialized) plus the code version; feeding it back to
//! `run` reproduces the output byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use stein_hmm::hmm::{validate_spec, HmmSpec};
use stein_hmm::occupancy::EmissionFamily;
use stein_hmm::voronoi::RegionPredicate;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "clt")]
    Clt,
    #[serde(rename = "stein-bound")]
    SteinBound,
    #[serde(rename = "tail")]
    Tail,
    #[serde(rename = "moments")]
    Moments,
    #[serde(rename = "var-lower")]
    VarLower,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Clt => "clt",
            ExperimentKind::SteinBound => "stein-bound",
            ExperimentKind::Tail => "tail",
            ExperimentKind::Moments => "moments",
            ExperimentKind::VarLower => "var-lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalId {
    #[serde(rename = "additive")]
    Additive,
    #[serde(rename = "occupancy.W")]
    OccupancyW,
    #[serde(rename = "germ_grain.f_V")]
    GermGrainFv,
    #[serde(rename = "germ_grain.f_I")]
    GermGrainFi,
    #[serde(rename = "voronoi.phi")]
    VoronoiPhi,
}

impl FunctionalId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionalId::Additive => "additive",
            FunctionalId::OccupancyW => "occupancy.W",
            FunctionalId::GermGrainFv => "germ_grain.f_V",
            FunctionalId::GermGrainFi => "germ_grain.f_I",
            FunctionalId::VoronoiPhi => "voronoi.phi",
        }
    }

    /// Whether the functional maps observed symbol sequences (and therefore
    /// supports the instruction-stack bound machinery).
    pub fn is_symbol_based(&self) -> bool {
        matches!(self, FunctionalId::Additive | FunctionalId::OccupancyW)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveParams {
    /// Value assigned to each symbol; length must match the model alphabet.
    pub values: Vec<f64>,
}

impl Default for AdditiveParams {
    fn default() -> Self {
        AdditiveParams { values: vec![-1.0, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmissionParams {
    Uniform,
    Blocks { fraction: f64 },
}

impl From<EmissionParams> for EmissionFamily {
    fn from(e: EmissionParams) -> Self {
        match e {
            EmissionParams::Uniform => EmissionFamily::Uniform,
            EmissionParams::Blocks { fraction } => EmissionFamily::Blocks { fraction },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyParams {
    pub alpha: f64,
    pub emissions: EmissionParams,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        OccupancyParams { alpha: 1.0, emissions: EmissionParams::Blocks { fraction: 0.75 } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermGrainParams {
    pub dimension: usize,
    /// Per-state low-cell weights of the germ measures.
    pub state_weights: Vec<f64>,
    pub density_bounds: (f64, f64),
    pub grain_volume_range: (f64, f64),
    /// Coverage point budget per germ: the estimate uses `points_per_germ * n`
    /// uniform points, so sampling noise scales with the signal.
    pub points_per_germ: usize,
}

impl Default for GermGrainParams {
    fn default() -> Self {
        GermGrainParams {
            dimension: 2,
            state_weights: vec![1.3, 0.7],
            density_bounds: (0.7, 1.3),
            grain_volume_range: (0.4, 0.6),
            points_per_germ: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoronoiParams {
    pub dimension: usize,
    pub state_weights: Vec<f64>,
    pub density_bounds: (f64, f64),
    pub region: RegionPredicate,
    pub point_budget: usize,
}

impl Default for VoronoiParams {
    fn default() -> Self {
        VoronoiParams {
            dimension: 2,
            state_weights: vec![1.3, 0.7],
            density_bounds: (0.7, 1.3),
            region: RegionPredicate::ball(2, vec![0.5, 0.5], 0.25),
            point_budget: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinParams {
    /// Outer stacks for the conditional-variance estimators.
    pub outer: usize,
    /// Inner draws per branch of the conditional-variance estimators.
    pub inner: usize,
    /// Draws per instruction index for difference-moment estimation.
    pub moment_samples: usize,
}

impl Default for SteinParams {
    fn default() -> Self {
        SteinParams { outer: 128, inner: 256, moment_samples: 400 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailParams {
    /// Exceedance thresholds run over `t = 1..=t_max` multiples of K.
    pub t_max: usize,
    /// Instruction index whose perturbation is traced.
    pub entry_index: usize,
}

impl Default for TailParams {
    fn default() -> Self {
        TailParams { t_max: 8, entry_index: 0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentParams {
    /// Moment order `r` of `E |D_i h|^r`.
    pub order: f64,
    /// Draws per instruction index.
    pub samples: usize,
}

impl Default for MomentParams {
    fn default() -> Self {
        MomentParams { order: 1.0, samples: 64 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarLowerParams {
    pub outer: usize,
    pub inner: usize,
}

impl Default for VarLowerParams {
    fn default() -> Self {
        VarLowerParams { outer: 64, inner: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub id: String,
    /// Path to a model file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    /// Inline model; manifests always use this form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_inline: Option<HmmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalId>,
    pub grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Output stem; files are written as `<output>.csv`, `<output>.manifest.json`, ...
    pub output: PathBuf,
    #[serde(default)]
    pub additive: AdditiveParams,
    #[serde(default)]
    pub occupancy: OccupancyParams,
    #[serde(default)]
    pub germ_grain: GermGrainParams,
    #[serde(default)]
    pub voronoi: VoronoiParams,
    #[serde(default)]
    pub stein: SteinParams,
    #[serde(default)]
    pub tail: TailParams,
    #[serde(default)]
    pub moments: MomentParams,
    #[serde(default)]
    pub var_lower: VarLowerParams,
    /// Code version; written by the runner, ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

/// A config with its model loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub model: HmmSpec,
    pub output: PathBuf,
}

/// Load a config file, without semantic validation.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
}

/// Load, validate and resolve a config file.
pub fn resolve(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let config = load(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve_config(config, &base_dir)
}

/// Validate a parsed config and resolve its model and output paths against
/// `base_dir` (the config file's directory).
pub fn resolve_config(
    mut config: ExperimentConfig,
    base_dir: &Path,
) -> Result<ResolvedConfig, ConfigError> {
    if config.grid.is_empty() {
        return Err(ConfigError::Invalid("grid must be non-empty".into()));
    }
    if !config.grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(ConfigError::Invalid("grid must be strictly increasing".into()));
    }
    if config.replicates < 2 {
        return Err(ConfigError::Invalid(format!(
            "replicates must be at least 2, got {}",
            config.replicates
        )));
    }

    let model = match (&config.spec, &config.spec_inline) {
        (_, Some(inline)) => inline.clone(),
        (Some(rel), None) => {
            let spec_path = base_dir.join(rel);
            let text = fs::read_to_string(&spec_path)
                .map_err(|source| ConfigError::Io { path: spec_path.clone(), source })?;
            serde_json::from_str(&text)
                .map_err(|source| ConfigError::Parse { path: spec_path, source })?
        }
        (None, None) => {
            return Err(ConfigError::Invalid("either spec or spec_inline is required".into()))
        }
    };
    validate_spec(&model).map_err(|e| ConfigError::Invalid(format!("model: {e}")))?;

    match config.experiment {
        ExperimentKind::Tail => {
            if config.tail.t_max == 0 {
                return Err(ConfigError::Invalid("tail.t_max must be at least 1".into()));
            }
        }
        kind => {
            let Some(functional) = config.functional else {
                return Err(ConfigError::Invalid(format!(
                    "experiment {} requires a functional",
                    kind.as_str()
                )));
            };
            let needs_symbols =
                matches!(kind, ExperimentKind::SteinBound | ExperimentKind::Moments);
            if needs_symbols && !functional.is_symbol_based() {
                return Err(ConfigError::Invalid(format!(
                    "experiment {} supports only symbol-sequence functionals \
                     (additive, occupancy.W), got {}",
                    kind.as_str(),
                    functional.as_str()
                )));
            }
            validate_functional(&config, functional, &model)?;
        }
    }

    // Materialize the resolved model inline so the manifest is self-contained.
    config.spec = None;
    config.spec_inline = Some(model.clone());
    let output =
        if config.output.is_absolute() { config.output.clone() } else { base_dir.join(&config.output) };
    Ok(ResolvedConfig { config, model, output })
}

fn validate_functional(
    config: &ExperimentConfig,
    functional: FunctionalId,
    model: &HmmSpec,
) -> Result<(), ConfigError> {
    match functional {
        FunctionalId::Additive => {
            if config.additive.values.len() != model.num_symbols() {
                return Err(ConfigError::Invalid(format!(
                    "additive.values has {} entries but the model alphabet has {}",
                    config.additive.values.len(),
                    model.num_symbols()
                )));
            }
        }
        FunctionalId::OccupancyW => {
            if config.occupancy.alpha <= 0.0 {
                return Err(ConfigError::Invalid("occupancy.alpha must be positive".into()));
            }
        }
        FunctionalId::GermGrainFv | FunctionalId::GermGrainFi => {
            let p = &config.germ_grain;
            if p.dimension == 0 {
                return Err(ConfigError::Invalid("germ_grain.dimension must be >= 1".into()));
            }
            if p.state_weights.len() != model.num_states() {
                return Err(ConfigError::Invalid(format!(
                    "germ_grain.state_weights has {} entries but the model has {} states",
                    p.state_weights.len(),
                    model.num_states()
                )));
            }
            if p.points_per_germ == 0 {
                return Err(ConfigError::Invalid(
                    "germ_grain.points_per_germ must be >= 1".into(),
                ));
            }
        }
        FunctionalId::VoronoiPhi => {
            let p = &config.voronoi;
            if p.dimension == 0 || p.region.dimension != p.dimension {
                return Err(ConfigError::Invalid(
                    "voronoi region dimension must match voronoi.dimension".into(),
                ));
            }
            if p.state_weights.len() != model.num_states() {
                return Err(ConfigError::Invalid(format!(
                    "voronoi.state_weights has {} entries but the model has {} states",
                    p.state_weights.len(),
                    model.num_states()
                )));
            }
            p.region
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("voronoi region: {e}")))?;
            if p.point_budget == 0 {
                return Err(ConfigError::Invalid("voronoi.point_budget must be >= 1".into()));
            }
        }
    }
    Ok(())
}
