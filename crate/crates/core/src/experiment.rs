//! The optimization loop: Latin hypercube initialization, then repeated
//! fit → propose → run → score → append rounds over a fixed batch budget.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{propose_batch, AcquisitionError};
use crate::config::{ConfigError, ExperimentConfig};
use crate::devices::{DeviceAdapter, DeviceError, RunRequest};
use crate::rng::{sample_seed, stream_rng, INIT_STREAM};
use crate::sampling::lhs_sample;
use crate::space::ControlVector;
use crate::state::{ExperimentState, Sample, StateError, SurrogateRecord};
use crate::surrogate::{fit, FitOptions, GpError, GpHyperparams};
use crate::vision::{score, ScoreOpts, VisionError};

/// Minimum improvement of ℓ* over two consecutive batches for the optional
/// early-stop rule to keep going.
pub const EARLY_STOP_DELTA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("batch {batch}: device failure: {source}")]
    Device {
        batch: usize,
        #[source]
        source: DeviceError,
    },
    #[error("batch {batch}, sample {sample}: {source}")]
    Sample {
        batch: usize,
        sample: usize,
        #[source]
        source: DeviceError,
    },
    #[error("batch {batch}, sample {sample}: scoring failed: {source}")]
    Vision {
        batch: usize,
        sample: usize,
        #[source]
        source: VisionError,
    },
    #[error("batch {batch}: surrogate fit failed: {source}")]
    Surrogate {
        batch: usize,
        #[source]
        source: GpError,
    },
    #[error("batch {batch}: {source}")]
    Acquisition {
        batch: usize,
        #[source]
        source: AcquisitionError,
    },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("experiment has no samples")]
    EmptyExperiment,
    #[error("device reports {device} dimensions, state has {state}")]
    SpaceMismatch { device: usize, state: usize },
}

/// Seconds spent in each step of one batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub batch_index: usize,
    pub fit_secs: f64,
    pub propose_secs: f64,
    pub device_secs: f64,
    pub score_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_index: usize,
    /// Index of this batch's first sample in the state.
    pub first_sample: usize,
    pub proposals: Vec<ControlVector>,
    pub acq_values: Vec<Option<f64>>,
    pub losses: Vec<f64>,
    /// ℓ* over all samples up to and including this batch.
    pub running_best: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<GpHyperparams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub device: String,
    pub acquisition: String,
    pub seed: u64,
    pub batches: Vec<BatchRecord>,
    pub best_x: ControlVector,
    pub best_physical: Vec<f64>,
    pub best_loss: f64,
    pub best_index: usize,
    /// Set when the run stopped before its batch budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_after: Option<usize>,
    /// Wall-clock measurements; excluded from [`LoopReport::same_outcome`].
    pub timings: Vec<StepTimings>,
}

impl LoopReport {
    /// Equality on everything except wall-clock timings.
    pub fn same_outcome(&self, other: &LoopReport) -> bool {
        let strip = |r: &LoopReport| LoopReport {
            timings: Vec::new(),
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn to_json(&self) -> String {
        crate::state::to_fixed_json(self)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for device runs and scoring; `None` uses all CPUs.
    pub jobs: Option<usize>,
    /// State file rewritten after every batch.
    pub checkpoint: Option<PathBuf>,
    /// Directory receiving `batch_<k>.csv` per-batch sample tables.
    pub out_dir: Option<PathBuf>,
    /// Return after this batch completes, as if the process were stopped.
    pub stop_after_batch: Option<usize>,
    /// Continue from a previously saved state instead of starting fresh.
    pub resume: Option<ExperimentState>,
}

/// Best sample: lowest loss, earliest on ties. Returns `(index, x*, ℓ*)`.
pub fn best(state: &ExperimentState) -> Result<(usize, ControlVector, f64), LoopError> {
    let mut best: Option<(usize, &Sample)> = None;
    for (i, s) in state.samples.iter().enumerate() {
        if best.is_none_or(|(_, b)| s.loss < b.loss) {
            best = Some((i, s));
        }
    }
    best.map(|(i, s)| (i, s.x.clone(), s.loss)).ok_or(LoopError::EmptyExperiment)
}

fn batch_size_of(config: &ExperimentConfig, batch: usize) -> usize {
    if batch == 0 {
        config.init_count
    } else {
        config.batch_size
    }
}

fn fit_seed(seed: u64, batch: usize) -> u64 {
    sample_seed(seed ^ 0x05EE_DF17_u64, batch as u64)
}

/// Checks that `state` holds whole batches 0..k and returns k.
fn completed_batches(state: &ExperimentState) -> Result<usize, LoopError> {
    let mut expected_start = 0;
    let mut batch = 0;
    loop {
        let n = state.batch_samples(batch).count();
        if n == 0 {
            break;
        }
        let want = batch_size_of(&state.config, batch);
        if n != want {
            return Err(LoopError::Resume(format!("batch {batch} has {n} samples, expected {want}")));
        }
        expected_start += n;
        batch += 1;
    }
    if expected_start != state.samples.len() {
        return Err(LoopError::Resume("sample batch indices are not contiguous".into()));
    }
    Ok(batch)
}

fn write_batch_csv(dir: &Path, state: &ExperimentState, batch: usize) -> Result<(), LoopError> {
    let path = dir.join(format!("batch_{batch}.csv"));
    let io = |e: csv::Error| {
        LoopError::State(StateError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(io)?;
    let mut header = vec!["batch".to_string(), "sample_id".to_string()];
    header.extend(state.space.dims().iter().map(|d| d.column_label()));
    header.extend(["geom_loss", "yield_loss", "loss"].map(String::from));
    w.write_record(&header).map_err(io)?;
    for (i, s) in state.samples.iter().enumerate().filter(|(_, s)| s.batch_index == batch) {
        let mut row = vec![batch.to_string(), i.to_string()];
        row.extend(state.space.denormalize(&s.x).iter().map(|v| format!("{v}")));
        row.extend([s.geom_loss, s.yield_loss, s.loss].iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))?;
    Ok(())
}

fn record_for(state: &ExperimentState, batch: usize) -> BatchRecord {
    let first_sample = state.samples.iter().position(|s| s.batch_index == batch).unwrap_or(state.samples.len());
    let members: Vec<&Sample> = state.batch_samples(batch).collect();
    let running_best = state.samples[..first_sample + members.len()]
        .iter()
        .map(|s| s.loss)
        .fold(f64::INFINITY, f64::min);
    BatchRecord {
        batch_index: batch,
        first_sample,
        proposals: members.iter().map(|s| s.x.clone()).collect(),
        acq_values: members.iter().map(|s| s.acq_value).collect(),
        losses: members.iter().map(|s| s.loss).collect(),
        running_best,
        surrogate: state
            .surrogates
            .iter()
            .find(|r| r.batch_index == batch)
            .map(|r| r.hyper.clone()),
    }
}

struct Runner<'a> {
    device: &'a mut dyn DeviceAdapter,
    pool: rayon::ThreadPool,
    score_opts: ScoreOpts,
    seed: u64,
}

impl Runner<'_> {
    /// Runs and scores `points` as batch `batch`, appending them to `state`.
    fn run_points(
        &mut self,
        state: &mut ExperimentState,
        batch: usize,
        points: Vec<ControlVector>,
        acq_values: Option<Vec<f64>>,
        timing: &mut StepTimings,
    ) -> Result<(), LoopError> {
        let first = state.samples.len();
        let requests: Vec<RunRequest> = points
            .iter()
            .enumerate()
            .map(|(i, x)| RunRequest {
                sample_id: first + i,
                x: x.clone(),
                seed: sample_seed(self.seed, (first + i) as u64),
            })
            .collect();
        let t = Instant::now();
        let device = &mut *self.device;
        let images = self
            .pool
            .install(|| device.run_batch(batch, &requests))
            .map_err(|source| LoopError::Device { batch, source })?;
        timing.device_secs = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let opts = &self.score_opts;
        let scored: Vec<Result<Option<crate::vision::Score>, LoopError>> = self.pool.install(|| {
            images
                .par_iter()
                .enumerate()
                .map(|(i, img)| match img {
                    Ok(img) => score(img, opts).map(Some).map_err(|source| LoopError::Vision {
                        batch,
                        sample: first + i,
                        source,
                    }),
                    Err(e) if state.config.skip_failed_samples => {
                        log::warn!("batch {batch}, sample {}: skipped: {e}", first + i);
                        Ok(None)
                    }
                    Err(e) => Err(LoopError::Sample {
                        batch,
                        sample: first + i,
                        source: e.clone(),
                    }),
                })
                .collect()
        });
        timing.score_secs = t.elapsed().as_secs_f64();

        let mut samples = Vec::with_capacity(points.len());
        for (i, (x, s)) in points.into_iter().zip(scored).enumerate() {
            let mut sample = match s? {
                Some(sc) => {
                    let mut sample = Sample::new(x, sc.geom_loss, sc.yield_loss, batch);
                    sample.droplet_count = sc.droplet_count();
                    sample
                }
                None => Sample::skipped(x, batch),
            };
            sample.acq_value = acq_values.as_ref().map(|v| v[i]);
            samples.push(sample);
        }
        for sample in samples {
            state.push(sample)?;
        }
        Ok(())
    }
}

/// Runs the experiment described by `config` against `device`.
///
/// State is checkpointed after every batch, so a failed or stopped run can be
/// continued by passing the saved state as [`RunOptions::resume`]; the result
/// is identical to an uninterrupted run with the same seed.
pub fn run_experiment(
    config: &ExperimentConfig,
    device: &mut dyn DeviceAdapter,
    seed: u64,
    opts: RunOptions,
) -> Result<(ExperimentState, LoopReport), LoopError> {
    config.validate()?;
    let space = device.space().clone();
    let mut resolved = config.clone();
    resolved.count_max = Some(config.resolved_count_max(device.count_max()));

    let mut state = match opts.resume {
        Some(prev) => {
            if prev.rng_seed != seed {
                return Err(LoopError::Resume(format!("state seed {} differs from {seed}", prev.rng_seed)));
            }
            if prev.space != space {
                return Err(LoopError::Resume("state parameter space differs from the device's".into()));
            }
            if prev.config != resolved {
                return Err(LoopError::Resume("state config differs from the requested config".into()));
            }
            prev
        }
        None => ExperimentState::new(space.clone(), resolved.clone(), seed),
    };
    if state.space.len() != device.space().len() {
        return Err(LoopError::SpaceMismatch {
            device: device.space().len(),
            state: state.space.len(),
        });
    }
    let done = completed_batches(&state)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool.build().map_err(|e| LoopError::Resume(format!("cannot start workers: {e}")))?;
    let mut runner = Runner {
        device,
        pool,
        score_opts: ScoreOpts {
            segmentation: resolved.segmentation.clone(),
            count_max: resolved.count_max.expect("resolved above"),
        },
        seed,
    };
    let checkpoint = |state: &ExperimentState, batch: usize| -> Result<(), LoopError> {
        if let Some(path) = &opts.checkpoint {
            state.save(path)?;
        }
        if let Some(dir) = &opts.out_dir {
            write_batch_csv(dir, state, batch)?;
        }
        Ok(())
    };

    let mut timings = Vec::new();
    let mut stopped_after = None;
    let last_batch = resolved.num_batches;
    for batch in 0..=last_batch {
        if batch < done {
            continue;
        }
        if resolved.early_stop && batch >= 3 {
            let best_at = |k: usize| record_for(&state, k).running_best;
            if best_at(batch - 3) - best_at(batch - 1) < EARLY_STOP_DELTA {
                log::info!("early stop before batch {batch}: ℓ* improved by less than {EARLY_STOP_DELTA}");
                stopped_after = Some(batch - 1);
                break;
            }
        }
        let mut timing = StepTimings {
            batch_index: batch,
            ..Default::default()
        };
        if batch == 0 {
            let mut rng = stream_rng(seed, INIT_STREAM);
            let points = lhs_sample(&state.space, resolved.init_count, &mut rng).expect("init_count validated");
            runner.run_points(&mut state, 0, points, None, &mut timing)?;
        } else {
            let t = Instant::now();
            let training: Vec<Sample> = state.training_samples().cloned().collect();
            let fit_opts = FitOptions {
                seed: fit_seed(seed, batch),
                restarts: resolved.gp_restarts,
                ..Default::default()
            };
            let model = fit(&training, &fit_opts).map_err(|source| LoopError::Surrogate { batch, source })?;
            timing.fit_secs = t.elapsed().as_secs_f64();
            state.surrogates.push(SurrogateRecord {
                batch_index: batch,
                hyper: model.hyper().clone(),
                log_marginal_likelihood: model.log_marginal_likelihood(),
            });

            let t = Instant::now();
            let mut rng = stream_rng(seed, batch as u64);
            let kind = resolved.acquisition_kind();
            let proposal = runner
                .pool
                .install(|| {
                    propose_batch(
                        &model,
                        kind,
                        resolved.batch_size,
                        resolved.penalization_radius,
                        resolved.candidate_pool_size,
                        &mut rng,
                    )
                })
                .map_err(|source| LoopError::Acquisition { batch, source })?;
            timing.propose_secs = t.elapsed().as_secs_f64();
            let result = runner.run_points(&mut state, batch, proposal.points, Some(proposal.acq_values), &mut timing);
            if let Err(e) = result {
                state.surrogates.pop();
                return Err(e);
            }
        }
        checkpoint(&state, batch)?;
        log::info!(
            "batch {batch}: {} samples, best loss {:.4}",
            state.samples.len(),
            record_for(&state, batch).running_best
        );
        timings.push(timing);
        if opts.stop_after_batch == Some(batch) && batch < last_batch {
            stopped_after = Some(batch);
            break;
        }
    }

    let batches_present = completed_batches(&state)?;
    let batches = (0..batches_present).map(|k| record_for(&state, k)).collect();
    let (best_index, best_x, best_loss) = best(&state)?;
    let report = LoopReport {
        device: runner.device.name(),
        acquisition: resolved.acquisition_kind().to_string(),
        seed,
        batches,
        best_physical: state.space.denormalize(&best_x),
        best_x,
        best_loss,
        best_index,
        stopped_after,
        timings,
    };
    Ok((state, report))
}
