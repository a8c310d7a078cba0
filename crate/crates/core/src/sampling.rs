//! Latin hypercube designs over the normalized control space.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::space::{ControlVector, ParameterSpace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("strata count K must be at least 1, got {0}")]
    InvalidK(usize),
}

/// A Latin hypercube design: `points[i][d]` lies in stratum `perm_d[i]` of
/// dimension `d`, and every permutation covers `0..strata` exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct LhsPlan {
    pub strata: usize,
    pub dims: usize,
    pub points: Vec<ControlVector>,
}

impl LhsPlan {
    /// Stratum index of `points[i][d]`.
    pub fn stratum(&self, i: usize, d: usize) -> usize {
        ((self.points[i][d] * self.strata as f64).floor() as usize).min(self.strata - 1)
    }
}

/// Draws `k` points over `space`, one per stratum in every dimension.
pub fn lhs_sample<R: Rng + ?Sized>(
    space: &ParameterSpace,
    k: usize,
    rng: &mut R,
) -> Result<Vec<ControlVector>, SamplingError> {
    Ok(lhs_plan(space.len(), k, rng)?.points)
}

pub fn lhs_plan<R: Rng + ?Sized>(
    dims: usize,
    k: usize,
    rng: &mut R,
) -> Result<LhsPlan, SamplingError> {
    if k < 1 {
        return Err(SamplingError::InvalidK(k));
    }
    let kf = k as f64;
    let mut columns = Vec::with_capacity(dims);
    let mut perm: Vec<usize> = (0..k).collect();
    for _ in 0..dims {
        perm.shuffle(rng);
        let column: Vec<f64> = perm
            .iter()
            .map(|&j| {
                let u: f64 = rng.random();
                let v = ((j as f64 + u) / kf).min(1.0);
                // Rounding may push a draw onto the next stratum's lower edge.
                if j + 1 < k && v * kf >= (j + 1) as f64 {
                    ((j + 1) as f64 / kf).next_down()
                } else {
                    v
                }
            })
            .collect();
        columns.push(column);
    }
    let points = (0..k)
        .map(|i| ControlVector::clamped(columns.iter().map(|c| c[i]).collect()))
        .collect();
    Ok(LhsPlan {
        strata: k,
        dims,
        points,
    })
}
