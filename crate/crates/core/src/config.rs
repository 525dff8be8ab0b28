//! Versioned JSON run configuration.
//!
//! Every field has a default, so `{}` is a complete configuration describing
//! the reference setup: unit interval with 128 cells, `c = 2`, sine noise with
//! 16 modes, `s = 2`, amplitude 0.5, `u0 = 0.5 cos(pi x)`, 64 replicates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{BaseRun, EnsembleConfig, InitialCondition, Perturbation};
use crate::grid::{self, Grid};
use crate::noise::NoiseSpec;
use crate::potential::{GaugeOrder, PotentialParams, YosidaLevel};
use crate::stepper::{Forcing, StepperConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Logarithmic,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default = "defaults::potential_kind")]
    pub kind: PotentialKind,
    /// Concavity of the logarithmic well; ignored for the polynomial kind.
    #[serde(default = "defaults::concavity")]
    pub c: f64,
    /// Additive offset; `None` selects the smallest offset making `F >= 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: defaults::potential_kind(),
            c: defaults::concavity(),
            k: None,
        }
    }
}

impl PotentialConfig {
    pub fn params(&self) -> Result<PotentialParams> {
        match (self.kind, self.k) {
            (PotentialKind::Polynomial, _) => Ok(PotentialParams::polynomial()),
            (PotentialKind::Logarithmic, None) => PotentialParams::logarithmic(self.c),
            (PotentialKind::Logarithmic, Some(k)) => {
                PotentialParams::logarithmic(self.c)?;
                PotentialParams::logarithmic_with_offset(self.c, k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "defaults::extent")]
    pub extent: Vec<f64>,
    #[serde(default = "defaults::cells")]
    pub cells: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            extent: defaults::extent(),
            cells: defaults::cells(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::lambda_levels")]
    pub lambda_levels: Vec<f64>,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            replicates: defaults::replicates(),
            seed: defaults::seed(),
            lambda_levels: defaults::lambda_levels(),
        }
    }
}

/// Time-independent forcing `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    Constant { value: f64 },
    /// Field snapshot on the run grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    /// Perturbation sizes applied separately to `u0` and to `g`.
    #[serde(default = "defaults::dependence_sizes")]
    pub dependence_sizes: Vec<f64>,
    #[serde(default = "defaults::gauge_orders")]
    pub gauge_orders: Vec<u32>,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            dependence_sizes: defaults::dependence_sizes(),
            gauge_orders: defaults::gauge_orders(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::version")]
    pub version: u32,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default = "defaults::noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    #[serde(default = "defaults::initial")]
    pub initial: InitialCondition,
    #[serde(default = "defaults::forcing")]
    pub forcing: ForcingConfig,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Snapshot every `n` steps in `simulate`; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub studies: StudySettings,
}

mod defaults {
    use super::*;

    pub fn version() -> u32 {
        SCHEMA_VERSION
    }
    pub fn potential_kind() -> PotentialKind {
        PotentialKind::Logarithmic
    }
    pub fn concavity() -> f64 {
        2.0
    }
    pub fn noise() -> NoiseSpec {
        NoiseSpec::sine(16, 2.0, 0.5).expect("valid default noise")
    }
    pub fn extent() -> Vec<f64> {
        vec![1.0]
    }
    pub fn cells() -> Vec<usize> {
        vec![128]
    }
    pub fn replicates() -> usize {
        64
    }
    pub fn seed() -> u64 {
        20240917
    }
    pub fn lambda_levels() -> Vec<f64> {
        vec![0.2, 0.1, 0.05, 0.025]
    }
    pub fn initial() -> InitialCondition {
        InitialCondition::Cosine {
            amplitude: 0.5,
            mode: 1,
        }
    }
    pub fn forcing() -> ForcingConfig {
        ForcingConfig::Zero
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn dependence_sizes() -> Vec<f64> {
        vec![1e-1, 1e-2, 1e-3]
    }
    pub fn gauge_orders() -> Vec<u32> {
        vec![2, 3]
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        self.potential.params()?;
        self.noise.validate()?;
        self.grid()?;
        self.stepper.validate()?;
        self.initial.validate()?;
        if self.ensemble.replicates < 2 {
            return Err(Error::invalid(
                "ensemble.replicates",
                format!("M >= 2 required, got {}", self.ensemble.replicates),
            ));
        }
        if self.ensemble.lambda_levels.is_empty() {
            return Err(Error::invalid("ensemble.lambda_levels", "at least one level required"));
        }
        for &l in &self.ensemble.lambda_levels {
            YosidaLevel::new(l)
                .map_err(|_| Error::invalid("ensemble.lambda_levels", format!("{l} is not in (0, 1)")))?;
        }
        if self.ensemble.lambda_levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("ensemble.lambda_levels", "levels must be strictly decreasing"));
        }
        if let ForcingConfig::Constant { value } = self.forcing {
            if !value.is_finite() {
                return Err(Error::invalid("forcing.value", "must be finite"));
            }
        }
        for &d in &self.studies.dependence_sizes {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::invalid("studies.dependence_sizes", format!("must be positive, got {d}")));
            }
        }
        for &n in &self.studies.gauge_orders {
            GaugeOrder::new(n).map_err(|_| Error::invalid("studies.gauge_orders", format!("n >= 2 required, got {n}")))?;
        }
        Ok(())
    }

    /// Extra requirement of the derivative study: `||g||_inf <= 1`.
    pub fn validate_for_derivative(&self) -> Result<()> {
        let g = self.forcing()?;
        if g.sup_norm() > 1.0 {
            return Err(Error::invalid(
                "forcing",
                format!("the derivative study needs ||g||_inf <= 1, got {}", g.sup_norm()),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.grid.extent, &self.grid.cells)
    }

    pub fn forcing(&self) -> Result<Forcing> {
        match &self.forcing {
            ForcingConfig::Zero => Ok(Forcing::Zero),
            ForcingConfig::Constant { value } => Ok(Forcing::Constant(*value)),
            ForcingConfig::File { path } => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let (g, f) = grid::read_snapshot(&mut std::io::BufReader::new(file))?;
                if g != self.grid()? {
                    return Err(Error::invalid("forcing.path", "snapshot grid differs from the run grid"));
                }
                Ok(Forcing::Field(f))
            }
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        let cfg = EnsembleConfig {
            replicates: self.ensemble.replicates,
            seed: self.ensemble.seed,
            lambda_levels: self.ensemble.lambda_levels.clone(),
            base: BaseRun {
                grid: self.grid()?,
                params: self.potential.params()?,
                noise: self.noise.clone(),
                stepper: self.stepper.clone(),
                initial: self.initial.clone(),
                forcing: self.forcing()?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn perturbations(&self) -> Vec<Perturbation> {
        let s = &self.studies.dependence_sizes;
        s.iter()
            .map(|&d| Perturbation::Initial(d))
            .chain(s.iter().map(|&d| Perturbation::Forcing(d)))
            .collect()
    }

    pub fn gauge_orders(&self) -> Result<Vec<GaugeOrder>> {
        self.studies.gauge_orders.iter().map(|&n| GaugeOrder::new(n)).collect()
    }

    /// SHA-256 over the canonical JSON of all fields that influence results,
    /// plus the bytes of a forcing file. Output location and snapshot stride
    /// are excluded.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
            map.remove("snapshot_stride");
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&v)?);
        if let ForcingConfig::File { path } = &self.forcing {
            h.update(std::fs::read(path).map_err(|e| Error::io(path, e))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Reads and validates a configuration file. A relative forcing path is
/// resolved against the directory of the configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)?;
    if let ForcingConfig::File { path: p } = &mut cfg.forcing {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
