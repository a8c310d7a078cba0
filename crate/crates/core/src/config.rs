use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::AcquisitionKind;
use crate::vision::SegOpts;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Acquisition policy as stored in a config file; LCB takes its β from
/// [`ExperimentConfig::lcb_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionChoice {
    Ei,
    Mpi,
    Lcb,
}

impl std::str::FromStr for AcquisitionChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(Self::Ei),
            "mpi" => Ok(Self::Mpi),
            "lcb" => Ok(Self::Lcb),
            other => Err(ConfigError::new(
                "acquisition",
                format!("unknown acquisition `{other}` (expected ei, mpi or lcb)"),
            )),
        }
    }
}

pub const DEFAULT_COUNT_MAX: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub init_count: usize,
    pub batch_size: usize,
    pub num_batches: usize,
    pub acquisition: AcquisitionChoice,
    #[serde(default = "defaults::lcb_beta")]
    pub lcb_beta: f64,
    #[serde(default = "defaults::feasibility_threshold")]
    pub feasibility_threshold: f64,
    /// Droplet count at which the yield count term reaches zero. When
    /// absent the device's own default applies (inkjet 50, microfluidic 30).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_max: Option<u32>,
    #[serde(default = "defaults::penalization_radius")]
    pub penalization_radius: f64,
    #[serde(default = "defaults::candidate_pool_size")]
    pub candidate_pool_size: usize,
    #[serde(default = "defaults::gp_restarts")]
    pub gp_restarts: usize,
    /// Stop once ℓ* improves by less than 0.01 over two consecutive batches.
    #[serde(default)]
    pub early_stop: bool,
    /// Record unreadable device images as skipped samples instead of aborting.
    #[serde(default)]
    pub skip_failed_samples: bool,
    #[serde(default)]
    pub segmentation: SegOpts,
}

mod defaults {
    pub fn lcb_beta() -> f64 {
        2.0
    }
    pub fn feasibility_threshold() -> f64 {
        0.75
    }
    pub fn penalization_radius() -> f64 {
        0.1
    }
    pub fn candidate_pool_size() -> usize {
        4096
    }
    pub fn gp_restarts() -> usize {
        5
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            init_count: 20,
            batch_size: 10,
            num_batches: 4,
            acquisition: AcquisitionChoice::Ei,
            lcb_beta: defaults::lcb_beta(),
            feasibility_threshold: defaults::feasibility_threshold(),
            count_max: None,
            penalization_radius: defaults::penalization_radius(),
            candidate_pool_size: defaults::candidate_pool_size(),
            gp_restarts: defaults::gp_restarts(),
            early_stop: false,
            skip_failed_samples: false,
            segmentation: SegOpts::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.init_count < 2 {
            return Err(ConfigError::new("init_count", "must be at least 2"));
        }
        if self.batch_size < 1 {
            return Err(ConfigError::new("batch_size", "must be at least 1"));
        }
        if !(self.lcb_beta > 0.0 && self.lcb_beta.is_finite()) {
            return Err(ConfigError::new("lcb_beta", "must be positive"));
        }
        if !(self.feasibility_threshold > 0.0 && self.feasibility_threshold < 1.0) {
            return Err(ConfigError::new("feasibility_threshold", "must lie in (0, 1)"));
        }
        if self.count_max == Some(0) {
            return Err(ConfigError::new("count_max", "must be at least 1"));
        }
        if !(self.penalization_radius > 0.0 && self.penalization_radius.is_finite()) {
            return Err(ConfigError::new("penalization_radius", "must be positive"));
        }
        if self.candidate_pool_size < self.batch_size {
            return Err(ConfigError::new(
                "candidate_pool_size",
                "must be at least batch_size",
            ));
        }
        self.segmentation
            .validate()
            .map_err(|reason| ConfigError::new("segmentation", reason))?;
        Ok(())
    }

    pub fn acquisition_kind(&self) -> AcquisitionKind {
        match self.acquisition {
            AcquisitionChoice::Ei => AcquisitionKind::Ei,
            AcquisitionChoice::Mpi => AcquisitionKind::Mpi,
            AcquisitionChoice::Lcb => AcquisitionKind::Lcb { beta: self.lcb_beta },
        }
    }

    /// Yield normalization constant, falling back to `device_default` and then 50.
    pub fn resolved_count_max(&self, device_default: Option<u32>) -> u32 {
        self.count_max.or(device_default).unwrap_or(DEFAULT_COUNT_MAX)
    }

    pub fn total_samples(&self) -> usize {
        self.init_count + self.batch_size * self.num_batches
    }
}
