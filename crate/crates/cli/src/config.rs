//! Run configuration: one JSON file with a forcing section and one optional
//! section per command. Flags override scalar fields; absent fields take
//! defaults.

use std::path::{Path, PathBuf};

use ferulam_core::invariants::BandFamily;
use ferulam_core::{CensusConfig, ForcingSpec, FrequencyVector, TorusPoint};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

/// Forcing given inline, by preset name, or by path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingSource {
    Inline(ForcingSpec),
    Named(String),
}

impl Default for ForcingSource {
    fn default() -> Self {
        ForcingSource::Named("standard-two-mode".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub omega: Vec<f64>,
    pub t0: f64,
    pub e0: f64,
    pub n_max: usize,
    /// `None` selects `1.01 · v*²/2`.
    pub e_floor: Option<f64>,
    pub bands: BandFamily,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            omega: vec![0.0, 0.0],
            t0: 0.0,
            e0: 100.0,
            n_max: 1000,
            e_floor: None,
            bands: BandFamily::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// Energies at which the largest drift is measured for the scaling fit.
    pub energies: Vec<f64>,
    pub n_per_energy: usize,
    /// Samples used to calibrate `Ĉ`.
    pub calibration_samples: usize,
    /// Fresh samples checked against `1.5 Ĉ Δ(E0)`.
    pub check_samples: usize,
    pub e_range: (f64, f64),
    /// Constant `C` inside `Δ(E0) = E0^{-1/2} (1 + C D3)`.
    pub c: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            energies: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            n_per_energy: 2000,
            calibration_samples: 5000,
            check_samples: 100_000,
            e_range: (1e2, 1e6),
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub n: usize,
    /// Explicit rectangles; when empty, `n_random` random ones are drawn.
    pub rectangles: Vec<Vec<(f64, f64)>>,
    pub n_random: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            rectangles: Vec::new(),
            n_random: 20,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub forcing: ForcingSource,
    pub seed: Option<u64>,
    pub simulate: SimulateConfig,
    pub census: CensusConfig,
    pub drift: DriftConfig,
    pub decompose: DecomposeConfig,
}

/// Config after file loading, flag overrides and forcing resolution.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub forcing: ForcingSpec,
    pub seed: u64,
    pub simulate: SimulateConfig,
    pub census: CensusConfig,
    pub drift: DriftConfig,
    pub decompose: DecomposeConfig,
}

fn json_error(origin: &str, e: &serde_json::Error) -> CliError {
    CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), &e))
}

pub fn load(path: Option<&Path>) -> Result<(RunConfig, PathBuf), CliError> {
    match path {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((read_json(p)?, base))
        }
        None => Ok((RunConfig::default(), PathBuf::new())),
    }
}

fn resolve_forcing(src: &ForcingSource, base: &Path) -> Result<ForcingSpec, CliError> {
    match src {
        ForcingSource::Inline(spec) => Ok(spec.clone()),
        ForcingSource::Named(name) => match name.as_str() {
            "standard" => Ok(ForcingSpec::standard()),
            "standard-two-mode" => Ok(ForcingSpec::standard_two_mode()),
            "constant" => {
                let nu = FrequencyVector::new(vec![1.0, std::f64::consts::SQRT_2])?;
                Ok(ForcingSpec::constant(nu, 2.0)?)
            }
            file => {
                let path = base.join(file);
                if !path.is_file() {
                    return Err(CliError::Config(format!(
                        "forcing '{file}' is neither a preset (standard, standard-two-mode, constant) nor an existing file"
                    )));
                }
                read_json(&path)
            }
        },
    }
}

/// Scalar overrides from the command line.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
}

pub fn resolve(cfg: RunConfig, base: &Path, flags: Overrides) -> Result<Resolved, CliError> {
    let forcing = resolve_forcing(&cfg.forcing, base)?;
    let seed = flags.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut simulate = cfg.simulate;
    let mut census = cfg.census;
    census.seed = seed;
    if let Some(n) = flags.n_max {
        simulate.n_max = n;
        census.n_max = n;
    }
    Ok(Resolved {
        forcing,
        seed,
        simulate,
        census,
        drift: cfg.drift,
        decompose: cfg.decompose,
    })
}

impl SimulateConfig {
    pub fn validate(&self, spec: &ForcingSpec) -> Result<TorusPoint, CliError> {
        if self.omega.len() != spec.dim() {
            return Err(CliError::Config(format!(
                "simulate.omega has {} components, forcing has dimension {}",
                self.omega.len(),
                spec.dim()
            )));
        }
        if !(self.t0.is_finite() && self.e0.is_finite() && self.omega.iter().all(|x| x.is_finite())) {
            return Err(CliError::Config("simulate initial state must be finite".into()));
        }
        let floor = self.e_floor.unwrap_or(1.01 * spec.energy_threshold());
        if floor < spec.energy_threshold() || self.e0 <= floor {
            return Err(CliError::Config(format!(
                "simulate needs threshold {} <= e_floor {floor} < e0 {}",
                spec.energy_threshold(),
                self.e0
            )));
        }
        BandFamily::new(self.bands.w0, self.bands.eps0, self.bands.j_max)?;
        Ok(TorusPoint::new(self.omega.clone()))
    }
}

impl DriftConfig {
    pub fn validate(&self, spec: &ForcingSpec) -> Result<(), CliError> {
        let threshold = spec.energy_threshold();
        if self.energies.len() < 2 || self.energies.iter().any(|&e| !(e > threshold && e.is_finite())) {
            return Err(CliError::Config(format!(
                "drift.energies needs at least two finite values above {threshold}"
            )));
        }
        if self.n_per_energy == 0 || self.calibration_samples == 0 || self.check_samples == 0 {
            return Err(CliError::Config("drift sample counts must be positive".into()));
        }
        let (lo, hi) = self.e_range;
        if !(lo > threshold && lo <= hi && hi.is_finite()) {
            return Err(CliError::Config(format!("drift.e_range must lie above {threshold}")));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(CliError::Config("drift.c must be finite and non-negative".into()));
        }
        Ok(())
    }
}

impl DecomposeConfig {
    pub fn validate(&self, spec: &ForcingSpec) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Config("decompose.n must be positive".into()));
        }
        if self.rectangles.is_empty() && self.n_random == 0 {
            return Err(CliError::Config("decompose needs rectangles or n_random > 0".into()));
        }
        if let Some(r) = self.rectangles.iter().find(|r| r.len() != spec.dim()) {
            return Err(CliError::Config(format!(
                "rectangle {r:?} does not have dimension {}",
                spec.dim()
            )));
        }
        Ok(())
    }
}
