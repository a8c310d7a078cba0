//! Experiment history and its on-disk record.
//!
//! The state file is a pretty-printed JSON document carrying an explicit
//! `schema_version`. Every floating point number is written with 17
//! significant digits, which round-trips `f64` exactly, so saving a loaded
//! state reproduces the original bytes.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::space::{ControlVector, ParameterSpace};
use crate::surrogate::GpHyperparams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("state file schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
}

/// A scored control vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: ControlVector,
    pub loss: f64,
    pub geom_loss: f64,
    pub yield_loss: f64,
    /// 0 for the Latin hypercube initialization, k for the k-th acquired batch.
    pub batch_index: usize,
    #[serde(default)]
    pub droplet_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acq_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Sample whose image could not be read; excluded from surrogate training.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

impl Sample {
    pub fn new(x: ControlVector, geom_loss: f64, yield_loss: f64, batch_index: usize) -> Self {
        Self {
            x,
            loss: 0.5 * (geom_loss + yield_loss),
            geom_loss,
            yield_loss,
            batch_index,
            droplet_count: 0,
            acq_value: None,
            image_ref: None,
            skipped: false,
        }
    }

    /// Placeholder for a sample whose device output was unusable: worst loss.
    pub fn skipped(x: ControlVector, batch_index: usize) -> Self {
        Self {
            skipped: true,
            ..Self::new(x, 1.0, 1.0, batch_index)
        }
    }

    fn check(&self) -> Result<(), String> {
        if (self.loss - 0.5 * (self.geom_loss + self.yield_loss)).abs() > 1e-12 {
            return Err(format!(
                "loss {} is not the mean of {} and {}",
                self.loss, self.geom_loss, self.yield_loss
            ));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(format!("loss {} outside [0, 1]", self.loss));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub schema_version: u32,
    pub space: ParameterSpace,
    pub config: ExperimentConfig,
    pub rng_seed: u64,
    pub samples: Vec<Sample>,
    /// Surrogate fitted before each acquired batch, kept for audit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surrogates: Vec<SurrogateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRecord {
    pub batch_index: usize,
    pub hyper: GpHyperparams,
    pub log_marginal_likelihood: f64,
}

impl ExperimentState {
    pub fn new(space: ParameterSpace, config: ExperimentConfig, rng_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            space,
            config,
            rng_seed,
            samples: Vec::new(),
            surrogates: Vec::new(),
        }
    }

    /// Appends a sample; batch indices may never decrease.
    pub fn push(&mut self, sample: Sample) -> Result<(), StateError> {
        let index = self.samples.len();
        self.check_sample(index, &sample)?;
        self.samples.push(sample);
        Ok(())
    }

    fn check_sample(&self, index: usize, sample: &Sample) -> Result<(), StateError> {
        let invalid = |reason: String| StateError::InvalidSample { index, reason };
        sample.check().map_err(invalid)?;
        if sample.x.len() != self.space.len() {
            return Err(invalid(format!(
                "x has {} components, space has {}",
                sample.x.len(),
                self.space.len()
            )));
        }
        if let Some(prev) = index.checked_sub(1).map(|i| &self.samples[i]) {
            if sample.batch_index < prev.batch_index {
                return Err(invalid(format!(
                    "batch index {} follows batch {}",
                    sample.batch_index, prev.batch_index
                )));
            }
        }
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.loss).collect()
    }

    /// Samples usable for surrogate training, i.e. not skipped.
    pub fn training_samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| !s.skipped)
    }

    pub fn batch_samples(&self, batch_index: usize) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .filter(move |s| s.batch_index == batch_index)
    }

    pub fn to_json(&self) -> String {
        to_fixed_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, StateError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| StateError::SchemaMismatch(format!("not a state document: {e}")))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(StateError::SchemaMismatch(format!(
                    "schema_version {v}, expected {SCHEMA_VERSION}"
                )))
            }
            None => {
                return Err(StateError::SchemaMismatch(
                    "missing schema_version".to_string(),
                ))
            }
        }
        let raw: ExperimentState = serde_json::from_value(value)
            .map_err(|e| StateError::SchemaMismatch(e.to_string()))?;
        let mut state = ExperimentState {
            samples: Vec::with_capacity(raw.samples.len()),
            ..raw.clone()
        };
        for sample in raw.samples {
            state.push(sample)?;
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<(), StateError> {
        let io_err = |source| StateError::Io {
            path: path.display().to_string(),
            source,
        };
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, StateError> {
        let text = std::fs::read_to_string(path).map_err(|source| StateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Pretty JSON with every float printed as `d.dddddddddddddddde±x`.
#[derive(Default)]
pub(crate) struct FixedDigits {
    pretty: PrettyFormatter<'static>,
}

pub(crate) fn format_f64_17(value: f64) -> String {
    format!("{value:.16e}")
}

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64_17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Serializes any value with the fixed-digit JSON formatter.
pub(crate) fn to_fixed_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits::default());
    value
        .serialize(&mut ser)
        .expect("serializing an in-memory value cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterDef;
    use rand::{Rng, SeedableRng};

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParameterDef::new("a", 0.0, 1.0, "u"),
            ParameterDef::new("b", -3.0, 7.5, "v"),
        ])
        .unwrap()
    }

    fn sixty_samples() -> ExperimentState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut state = ExperimentState::new(space(), ExperimentConfig::default(), 1234);
        for i in 0..60usize {
            let x = ControlVector::new(vec![rng.random(), rng.random()]).unwrap();
            let mut s = Sample::new(x, rng.random(), rng.random(), i.saturating_sub(10) / 10);
            s.droplet_count = i;
            s.acq_value = (i >= 20).then(|| rng.random::<f64>() * 1e-7);
            state.push(s).unwrap();
        }
        state
    }

    #[test]
    fn empty_state_round_trips() {
        let state = ExperimentState::new(space(), ExperimentConfig::default(), 9);
        assert_eq!(ExperimentState::from_json(&state.to_json()).unwrap(), state);
    }

    #[test]
    fn sixty_sample_state_resaves_identically() {
        let state = sixty_samples();
        let text = state.to_json();
        let back = ExperimentState::from_json(&text).unwrap();
        assert_eq!(back, state);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_f64_17(0.5), "5.0000000000000000e-1");
        assert_eq!(format_f64_17(0.1), "1.0000000000000001e-1");
        let text = sixty_samples().to_json();
        assert!(text.contains("\"lcb_beta\": 2.0000000000000000e0"));
    }

    #[test]
    fn corrupted_file_is_schema_mismatch() {
        let text = sixty_samples().to_json();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            ExperimentState::from_json(truncated),
            Err(StateError::SchemaMismatch(_))
        ));
        let wrong = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(matches!(
            ExperimentState::from_json(&wrong),
            Err(StateError::SchemaMismatch(_))
        ));
        assert!(matches!(
            ExperimentState::from_json("{\"schema_version\": 1}"),
            Err(StateError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        let state = sixty_samples();
        state.save(&path).unwrap();
        assert_eq!(ExperimentState::load(&path).unwrap(), state);
        assert!(matches!(
            ExperimentState::load(&dir.path().join("missing.json")),
            Err(StateError::Io { .. })
        ));
    }

    #[test]
    fn rejects_decreasing_batches_and_bad_loss() {
        let mut state = ExperimentState::new(space(), ExperimentConfig::default(), 0);
        let x = ControlVector::new(vec![0.1, 0.2]).unwrap();
        state.push(Sample::new(x.clone(), 0.2, 0.4, 1)).unwrap();
        assert!(state.push(Sample::new(x.clone(), 0.2, 0.4, 0)).is_err());
        let mut bad = Sample::new(x, 0.2, 0.4, 1);
        bad.loss = 0.5;
        assert!(state.push(bad).is_err());
    }

    #[test]
    fn sample_loss_is_mean() {
        let s = Sample::new(ControlVector::new(vec![0.0, 0.0]).unwrap(), 0.2, 0.4, 0);
        assert!((s.loss - 0.3).abs() < 1e-15);
    }
}
