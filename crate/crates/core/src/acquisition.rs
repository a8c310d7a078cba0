//! Acquisition functions and greedy batch selection with local penalization.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

use crate::sampling::lhs_plan;
use crate::space::ControlVector;
use crate::surrogate::GpModel;

/// Standard deviation of the Gaussian perturbations drawn around each
/// training input when building the candidate set.
pub const PERTURBATION_SIGMA: f64 = 0.02;
/// Perturbed candidates per training input.
pub const PERTURBATIONS_PER_POINT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    Mpi,
    Lcb { beta: f64 },
}

impl AcquisitionKind {
    /// Raw acquisition value for a posterior `(μ, s)` given incumbent `best`.
    pub fn value(&self, mu: f64, s: f64, best: f64) -> f64 {
        match *self {
            AcquisitionKind::Ei => acq_ei(mu, s, best),
            AcquisitionKind::Mpi => acq_mpi(mu, s, best),
            AcquisitionKind::Lcb { beta } => acq_lcb(mu, s, beta),
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AcquisitionKind::Ei => write!(f, "EI"),
            AcquisitionKind::Mpi => write!(f, "MPI"),
            AcquisitionKind::Lcb { beta } => write!(f, "LCB(beta={beta})"),
        }
    }
}

fn std_normal() -> StdNormal {
    StdNormal::new(0.0, 1.0).expect("unit normal")
}

/// Expected improvement below `best` for minimization.
pub fn acq_ei(mu: f64, s: f64, best: f64) -> f64 {
    let gap = best - mu;
    if s <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / s;
    let n = std_normal();
    (gap * n.cdf(z) + s * n.pdf(z)).max(0.0)
}

/// Probability of improving on `best`.
pub fn acq_mpi(mu: f64, s: f64, best: f64) -> f64 {
    if s <= 0.0 {
        return if mu < best { 1.0 } else { 0.0 };
    }
    std_normal().cdf((best - mu) / s)
}

/// Lower confidence bound; lower is better.
pub fn acq_lcb(mu: f64, s: f64, beta: f64) -> f64 {
    mu - beta * s
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("cannot select {batch} points from {available} candidates")]
    InsufficientCandidates { batch: usize, available: usize },
    #[error("penalization radius must be positive, got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProposal {
    /// Selected points in selection order.
    pub points: Vec<ControlVector>,
    /// Raw acquisition value of each selected point (EI, MPI or LCB).
    pub acq_values: Vec<f64>,
}

/// Scored candidate set: raw acquisition values and the non-negative
/// desirabilities the greedy selector maximizes.
#[derive(Debug, Clone)]
pub struct ScoredCandidates {
    pub points: Vec<ControlVector>,
    pub acq_values: Vec<f64>,
    pub desirability: Vec<f64>,
}

/// Scores candidates against `model`. EI and MPI are used as is; LCB becomes
/// `max LCB − LCB` so higher is better for every kind.
pub fn score_candidates(model: &GpModel, kind: AcquisitionKind, points: Vec<ControlVector>) -> ScoredCandidates {
    let best = model.train_y().iter().cloned().fold(f64::INFINITY, f64::min);
    let acq_values: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let p = model.posterior(x.values());
            kind.value(p.mean, p.std_dev(), best)
        })
        .collect();
    let desirability = match kind {
        AcquisitionKind::Lcb { .. } => {
            let max = acq_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            acq_values.iter().map(|v| max - v).collect()
        }
        _ => acq_values.clone(),
    };
    ScoredCandidates {
        points,
        acq_values,
        desirability,
    }
}

/// `pool` Latin hypercube points followed by Gaussian perturbations of every
/// training input, clamped to the unit box.
pub fn candidate_set<R: Rng + ?Sized>(model: &GpModel, pool: usize, rng: &mut R) -> Vec<ControlVector> {
    let mut points = if pool > 0 {
        lhs_plan(model.dims(), pool, rng).expect("pool is positive").points
    } else {
        Vec::new()
    };
    let noise = Normal::new(0.0, PERTURBATION_SIGMA).expect("positive sigma");
    for x in model.train_x() {
        for _ in 0..PERTURBATIONS_PER_POINT {
            let v: Vec<f64> = x.iter().map(|c| c + noise.sample(rng)).collect();
            points.push(ControlVector::clamped(v));
        }
    }
    points
}

/// Greedy selection: take the most desirable candidate, scale every other
/// candidate's desirability by `min(1, ‖x − x_sel‖ / radius)`, repeat.
/// Ties go to the lowest index; exact duplicates of a selection are dropped.
pub fn select_batch(scored: &ScoredCandidates, b: usize, radius: f64) -> Result<BatchProposal, AcquisitionError> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(AcquisitionError::InvalidRadius(radius));
    }
    let n = scored.points.len();
    if n < b {
        return Err(AcquisitionError::InsufficientCandidates { batch: b, available: n });
    }
    let mut weight = scored.desirability.clone();
    let mut alive = vec![true; n];
    let mut points = Vec::with_capacity(b);
    let mut acq_values = Vec::with_capacity(b);
    for _ in 0..b {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if alive[i] && pick.is_none_or(|p| weight[i] > weight[p]) {
                pick = Some(i);
            }
        }
        let Some(sel) = pick else {
            return Err(AcquisitionError::InsufficientCandidates {
                batch: b,
                available: points.len(),
            });
        };
        let chosen = scored.points[sel].clone();
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let d = scored.points[i].distance(&chosen);
            if d == 0.0 {
                alive[i] = false;
            } else {
                weight[i] *= (d / radius).min(1.0);
            }
        }
        points.push(chosen);
        acq_values.push(scored.acq_values[sel]);
    }
    Ok(BatchProposal { points, acq_values })
}

/// Builds the candidate set, scores it and selects `b` points.
pub fn propose_batch<R: Rng + ?Sized>(
    model: &GpModel,
    kind: AcquisitionKind,
    b: usize,
    radius: f64,
    pool: usize,
    rng: &mut R,
) -> Result<BatchProposal, AcquisitionError> {
    if pool < b {
        return Err(AcquisitionError::InsufficientCandidates { batch: b, available: pool });
    }
    let candidates = candidate_set(model, pool, rng);
    let scored = score_candidates(model, kind, candidates);
    select_batch(&scored, b, radius)
}
