//! Post-hoc metrics over an experiment and plot-ready CSV output.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::Simulator;
use crate::rng::sample_seed;
use crate::space::ControlVector;
use crate::state::ExperimentState;
use crate::vision::{score, ScoreOpts};

pub const DEFAULT_DENSITY_GRID: usize = 256;
pub const DEFAULT_TOPOLOGY_RESOLUTION: usize = 64;
/// Gaussian interpolation bandwidth in normalized units.
pub const TOPOLOGY_BANDWIDTH: f64 = 0.1;
/// Cells farther than this from every sample carry no value.
pub const TOPOLOGY_REACH: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no samples in scope")]
    EmptyScope,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("all samples share coordinate {value} in dimension {dim}")]
    DegenerateData { dim: usize, value: f64 },
    #[error("dimension {dim} out of range for a {dims}-dimensional space")]
    InvalidDim { dim: usize, dims: usize },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Points chosen by the optimizer (batch index ≥ 1).
    AcquiredOnly,
    All,
}

/// Fraction of in-scope samples with loss below `threshold`.
pub fn feasibility_fraction(state: &ExperimentState, threshold: f64, scope: Scope) -> Result<f64, AnalysisError> {
    let losses: Vec<f64> = state
        .samples
        .iter()
        .filter(|s| scope == Scope::All || s.batch_index > 0)
        .map(|s| s.loss)
        .collect();
    if losses.is_empty() {
        return Err(AnalysisError::EmptyScope);
    }
    Ok(losses.iter().filter(|&&l| l < threshold).count() as f64 / losses.len() as f64)
}

/// `out[i] = min(losses[..=i])`.
pub fn prefix_min(losses: &[f64]) -> Vec<f64> {
    losses
        .iter()
        .scan(f64::INFINITY, |m, &l| {
            *m = m.min(l);
            Some(*m)
        })
        .collect()
}

pub fn running_minimum(state: &ExperimentState) -> Vec<f64> {
    prefix_min(&state.losses())
}

/// Gaussian KDE of one normalized coordinate on `grid_points` evenly spaced
/// points of `[0, 1]`, Scott bandwidth, mass reflected at both ends.
pub fn parameter_density(state: &ExperimentState, dim: usize, grid_points: usize) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if dim >= state.space.len() {
        return Err(AnalysisError::InvalidDim {
            dim,
            dims: state.space.len(),
        });
    }
    let xs: Vec<f64> = state.samples.iter().map(|s| s.x[dim]).collect();
    kde_reflected(&xs, grid_points).map_err(|e| match e {
        AnalysisError::DegenerateData { value, .. } => AnalysisError::DegenerateData { dim, value },
        other => other,
    })
}

pub fn kde_reflected(xs: &[f64], grid_points: usize) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: n });
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return Err(AnalysisError::DegenerateData { dim: 0, value: xs[0] });
    }
    let h = sd * (n as f64).powf(-0.2);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| (-0.5 * u * u).exp();
    let steps = grid_points.max(2) - 1;
    Ok((0..=steps)
        .map(|k| {
            let g = k as f64 / steps as f64;
            let d: f64 = xs
                .iter()
                .map(|&x| kernel((g - x) / h) + kernel((g + x) / h) + kernel((g - (2.0 - x)) / h))
                .sum();
            (g, d * norm)
        })
        .collect())
}

/// Loss interpolated over two dimensions. `values[r * resolution + c]` is
/// the cell at `dims.0 = coords[c]`, `dims.1 = coords[r]`; `None` marks cells
/// out of reach of every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyGrid {
    pub dims: (usize, usize),
    pub resolution: usize,
    pub coords: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl TopologyGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.resolution + col]
    }
}

/// Gaussian-weighted average of observed losses at the centre of each cell
/// of a `resolution × resolution` grid over `dims`. No extrapolation.
pub fn topology_grid(state: &ExperimentState, dims: (usize, usize), resolution: usize) -> Result<TopologyGrid, AnalysisError> {
    let n_dims = state.space.len();
    for d in [dims.0, dims.1] {
        if d >= n_dims {
            return Err(AnalysisError::InvalidDim { dim: d, dims: n_dims });
        }
    }
    if state.samples.is_empty() {
        return Err(AnalysisError::EmptyScope);
    }
    let pts: Vec<(f64, f64, f64)> = state.samples.iter().map(|s| (s.x[dims.0], s.x[dims.1], s.loss)).collect();
    let coords: Vec<f64> = (0..resolution).map(|k| (k as f64 + 0.5) / resolution as f64).collect();
    let two_h2 = 2.0 * TOPOLOGY_BANDWIDTH * TOPOLOGY_BANDWIDTH;
    let reach2 = TOPOLOGY_REACH * TOPOLOGY_REACH;
    let mut values = Vec::with_capacity(resolution * resolution);
    for &b in &coords {
        for &a in &coords {
            let mut near = false;
            let (mut wsum, mut vsum) = (0.0, 0.0);
            for &(pa, pb, l) in &pts {
                let d2 = (a - pa).powi(2) + (b - pb).powi(2);
                near |= d2 <= reach2;
                let w = (-d2 / two_h2).exp();
                wsum += w;
                vsum += w * l;
            }
            values.push((near && wsum > 0.0).then(|| vsum / wsum));
        }
    }
    Ok(TopologyGrid {
        dims,
        resolution,
        coords,
        values,
    })
}

/// Fraction of `n` uniform random control vectors whose rendered image
/// scores below `threshold`. Sample `i` is rendered with seed
/// `sample_seed(seed, i)`.
pub fn monte_carlo_feasible_volume<S: Simulator>(sim: &S, n: usize, seed: u64, threshold: f64) -> f64 {
    let dims = sim.space().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dims).map(|_| rng.random()).collect()).collect();
    let opts = ScoreOpts {
        count_max: sim.count_max(),
        ..Default::default()
    };
    let feasible: usize = xs
        .into_par_iter()
        .enumerate()
        .map(|(i, x)| {
            let x = ControlVector::new(x).expect("uniform draws lie in the unit box");
            let img = sim.render(&x, sample_seed(seed, i as u64));
            let s = score(&img, &opts).expect("simulator count_max is positive");
            usize::from(s.loss < threshold)
        })
        .sum();
    feasible as f64 / n.max(1) as f64
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, AnalysisError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AnalysisError {
    AnalysisError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes every analysis artifact for `state` into `dir` and returns the paths:
///
/// - `feasibility.csv`: `scope,threshold,feasible,total,fraction`
/// - `running_min.csv`: `sample,batch,loss,running_min`
/// - `density_<param>.csv`: `<param>_norm,density`
/// - `topology_<a>__<b>.csv`: `<a>_norm,<b>_norm,loss` (empty loss = no data)
pub fn write_report(state: &ExperimentState, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    if state.samples.is_empty() {
        return Err(AnalysisError::EmptyScope);
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let threshold = state.config.feasibility_threshold;

    let path = dir.join("feasibility.csv");
    let mut rows = Vec::new();
    for (scope, name) in [(Scope::AcquiredOnly, "acquired_only"), (Scope::All, "all")] {
        let total = state.samples.iter().filter(|s| scope == Scope::All || s.batch_index > 0).count();
        let row = match feasibility_fraction(state, threshold, scope) {
            Ok(f) => vec![
                name.to_string(),
                threshold.to_string(),
                ((f * total as f64).round() as usize).to_string(),
                total.to_string(),
                format!("{f}"),
            ],
            Err(_) => vec![name.to_string(), threshold.to_string(), "0".into(), "0".into(), String::new()],
        };
        rows.push(row);
    }
    let header = ["scope", "threshold", "feasible", "total", "fraction"].map(String::from);
    write_rows(&path, &header, rows)?;
    written.push(path);

    let path = dir.join("running_min.csv");
    let trace = running_minimum(state);
    let header = ["sample", "batch", "loss", "running_min"].map(String::from);
    write_rows(
        &path,
        &header,
        state
            .samples
            .iter()
            .zip(&trace)
            .enumerate()
            .map(|(i, (s, m))| vec![i.to_string(), s.batch_index.to_string(), format!("{}", s.loss), format!("{m}")]),
    )?;
    written.push(path);

    let names: Vec<String> = state.space.dims().iter().map(|d| d.name.clone()).collect();
    for (d, name) in names.iter().enumerate() {
        let path = dir.join(format!("density_{name}.csv"));
        let header = [format!("{name}_norm"), "density".to_string()];
        match parameter_density(state, d, DEFAULT_DENSITY_GRID) {
            Ok(curve) => write_rows(&path, &header, curve.into_iter().map(|(g, v)| vec![format!("{g}"), format!("{v}")]))?,
            Err(AnalysisError::DegenerateData { value, .. }) => {
                log::warn!("{name}: every sample at {value}; writing a point mass");
                write_rows(&path, &header, [vec![format!("{value}"), "inf".to_string()]])?
            }
            Err(e) => return Err(e),
        }
        written.push(path);
    }

    if state.samples.len() >= 3 {
        for a in 0..names.len() {
            for b in a + 1..names.len() {
                let grid = topology_grid(state, (a, b), DEFAULT_TOPOLOGY_RESOLUTION)?;
                let path = dir.join(format!("topology_{}__{}.csv", names[a], names[b]));
                let header = [format!("{}_norm", names[a]), format!("{}_norm", names[b]), "loss".to_string()];
                let rows = (0..grid.resolution).flat_map(|r| {
                    let grid = &grid;
                    (0..grid.resolution).map(move |c| {
                        vec![
                            format!("{}", grid.coords[c]),
                            format!("{}", grid.coords[r]),
                            grid.get(r, c).map(|v| format!("{v}")).unwrap_or_default(),
                        ]
                    })
                });
                write_rows(&path, &header, rows)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
