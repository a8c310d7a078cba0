//! Devices that turn control vectors into droplet images: two simulators,
//! a file-exchange adapter for human-operated hardware, and dimensionless
//! number calculators.

mod files;
mod fluid;
mod inkjet;
mod microfluidic;
mod render;

use rayon::prelude::*;
use thiserror::Error;

use crate::space::{ControlVector, ParameterSpace};
use crate::vision::DropletImage;

pub use self::files::{FileAdapter, FileAdapterOptions, LOCK_FILE};
pub use self::fluid::{dimensionless, Dimensionless, FluidProperties};
pub use self::inkjet::{inkjet_regime, InkjetSimulator, INKJET_COUNT_MAX};
pub use self::microfluidic::{band_position, MicrofluidicSimulator, MICROFLUIDIC_COUNT_MAX};
pub use self::render::Canvas;

/// Seed of the Monte-Carlo draws behind the recorded feasible volumes.
pub const FEASIBLE_VOLUME_SEED: u64 = 2024;

/// Fraction of the inkjet box scoring below 0.75: 10 000 uniform draws at
/// [`FEASIBLE_VOLUME_SEED`].
pub const INKJET_FEASIBLE_VOLUME: f64 = 0.3039;
/// Same estimate for the microfluidic box.
pub const MICROFLUIDIC_FEASIBLE_VOLUME: f64 = 0.3064;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("no images arrived for batch {batch} within {waited_secs} s")]
    Timeout { batch: usize, waited_secs: u64 },
    #[error("batch {batch}: images missing for sample ids {ids:?}")]
    MissingImage { batch: usize, ids: Vec<usize> },
    #[error("unreadable image {path}: {reason}")]
    BadImage { path: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("run directory {path} is locked by another process ({holder})")]
    Locked { path: String, holder: String },
    #[error("unknown device `{0}` (expected inkjet-sim, microfluidic-sim or files:<dir>)")]
    UnknownDevice(String),
    #[error("{0}")]
    Space(String),
    #[error("fluid property `{field}` must be positive, got {value}")]
    NonPositiveInput { field: &'static str, value: f64 },
}

/// One image request: the sample's global index, its control vector and the
/// seed a simulator should render it with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub sample_id: usize,
    pub x: ControlVector,
    pub seed: u64,
}

/// Maps control vectors to droplet images.
///
/// The outer error aborts the batch; inner errors concern single samples and
/// may be skipped by the loop when configured to.
pub trait DeviceAdapter: Send {
    fn name(&self) -> String;

    fn space(&self) -> &ParameterSpace;

    /// Yield normalization constant suited to this device's field of view.
    fn count_max(&self) -> Option<u32> {
        None
    }

    fn run_batch(
        &mut self,
        batch_index: usize,
        requests: &[RunRequest],
    ) -> Result<Vec<Result<DropletImage, DeviceError>>, DeviceError>;
}

/// A pure image generator: identical `(x, seed)` always renders identical pixels.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;
    fn space(&self) -> &ParameterSpace;
    fn count_max(&self) -> u32;
    fn render(&self, x: &ControlVector, seed: u64) -> DropletImage;
}

/// Runs a [`Simulator`] over a batch in parallel; output order follows the requests.
#[derive(Debug, Clone)]
pub struct SimulatedDevice<S> {
    pub simulator: S,
}

impl<S: Simulator> SimulatedDevice<S> {
    pub fn new(simulator: S) -> Self {
        Self { simulator }
    }
}

impl<S: Simulator> DeviceAdapter for SimulatedDevice<S> {
    fn name(&self) -> String {
        self.simulator.name().to_string()
    }

    fn space(&self) -> &ParameterSpace {
        self.simulator.space()
    }

    fn count_max(&self) -> Option<u32> {
        Some(self.simulator.count_max())
    }

    fn run_batch(
        &mut self,
        _batch_index: usize,
        requests: &[RunRequest],
    ) -> Result<Vec<Result<DropletImage, DeviceError>>, DeviceError> {
        let sim = &self.simulator;
        Ok(requests.par_iter().map(|r| Ok(sim.render(&r.x, r.seed))).collect())
    }
}

/// Builds the device named on the command line: `inkjet-sim`,
/// `microfluidic-sim` or `files:<dir>` (which needs an explicit space).
pub fn device_from_spec(
    spec: &str,
    file_space: Option<ParameterSpace>,
    file_opts: FileAdapterOptions,
) -> Result<Box<dyn DeviceAdapter>, DeviceError> {
    match spec {
        "inkjet-sim" => Ok(Box::new(SimulatedDevice::new(InkjetSimulator::new()))),
        "microfluidic-sim" => Ok(Box::new(SimulatedDevice::new(MicrofluidicSimulator::new()))),
        other => match other.strip_prefix("files:") {
            Some(dir) if !dir.is_empty() => {
                let space = file_space.ok_or_else(|| {
                    DeviceError::Space("the files device needs [[parameters]] in the config".into())
                })?;
                Ok(Box::new(FileAdapter::open(dir, space, file_opts)?))
            }
            _ => Err(DeviceError::UnknownDevice(other.to_string())),
        },
    }
}
