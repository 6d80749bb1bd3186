//! Pipeline configuration file (TOML). Every section is optional; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uno3d::geology::GeologyConfig;
use uno3d::operator::UnoSchedule;
use uno3d::training::TrainingConfig;
use uno3d::wavesim::{SimConfig, SourceSpec};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geology: GeologyConfig,
    pub simulation: SimulationSection,
    pub source: SourceSpec,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub record_rate_hz: f64,
    pub record_window_s: [f64; 2],
    /// Lateral grid the sensor records are interpolated to; defaults to the
    /// geology's lateral grid.
    pub interpolate_to: Option<[usize; 2]>,
    /// Explicit solver settings. When absent, spacing and time step follow
    /// from the geology grid and the fastest admissible velocity.
    pub solver: Option<SimConfig>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { record_rate_hz: 20.0, record_window_s: [1.0, 7.4], interpolate_to: None, solver: None }
    }
}

impl SimulationSection {
    pub fn solver_config(&self, geology: &GeologyConfig) -> Result<SimConfig, CliError> {
        if let Some(s) = &self.solver {
            return Ok(s.clone());
        }
        let [nx, ny, nz] = geology.grid;
        let [lx, ly, lz] = geology.domain_size_m;
        if nx != ny || nx != nz || lx != ly || lx != lz {
            return Err(CliError::Usage(
                "non-cubic geology grids need an explicit [simulation.solver] section".into(),
            ));
        }
        let max_vs = geology.clip_high.max(geology.bottom_vs);
        Ok(SimConfig::for_domain(nx, lx, max_vs, self.record_rate_hz, self.record_window_s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `desk`, `full` or `tiny`; ignored when `schedule` is given.
    pub preset: String,
    pub schedule: Option<UnoSchedule>,
    /// Initialization seed; defaults to the training seed.
    pub seed: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { preset: "desk".into(), schedule: None, seed: None }
    }
}

impl ModelSection {
    pub fn schedule(&self) -> Result<UnoSchedule, CliError> {
        if let Some(s) = &self.schedule {
            return Ok(s.clone());
        }
        match self.preset.as_str() {
            "desk" => Ok(UnoSchedule::desk()),
            "full" => Ok(UnoSchedule::full()),
            "tiny" => Ok(UnoSchedule::tiny()),
            other => Err(CliError::Usage(format!("unknown model preset `{other}` (desk, full, tiny)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Upper limit of the goodness-of-fit band, Hz (capped below Nyquist).
    pub validity_hz: f64,
    pub n_freqs: usize,
    /// Sensor whose traces and spectra are exported; defaults to the centre.
    pub sensor: Option<[usize; 2]>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { validity_hz: 5.0, n_freqs: 32, sensor: None }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        // toml errors carry line and column
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |section: &str, e: uno3d::Error| CliError::Usage(format!("[{section}] {e}"));
        self.geology.validate().map_err(|e| wrap("geology", e))?;
        self.source.validate().map_err(|e| wrap("source", e))?;
        self.training.validate().map_err(|e| wrap("training", e))?;
        self.model.schedule()?.validate().map_err(|e| wrap("model", e))?;
        if let Some(s) = &self.simulation.solver {
            s.validate().map_err(|e| wrap("simulation.solver", e))?;
        }
        if !(self.simulation.record_rate_hz > 0.0) {
            return Err(CliError::Usage("[simulation] record_rate_hz must be positive".into()));
        }
        if !(self.evaluation.validity_hz > 0.0) || self.evaluation.n_freqs == 0 {
            return Err(CliError::Usage("[evaluation] validity_hz and n_freqs must be positive".into()));
        }
        Ok(())
    }
}
