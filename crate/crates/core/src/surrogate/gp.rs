use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kernel::{matern52, matern52_lengthscale_factor, Matern52};
use super::lbfgs::{self, LbfgsOptions};
use crate::space::ControlVector;
use crate::state::Sample;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1e2);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-10, 1.0);
/// Extra diagonal terms tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("training input {index} has {actual} dimensions, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("kernel matrix not positive definite even with jitter 1e-4 (condition estimate {condition:.3e})")]
    SingularKernel { condition: f64 },
    #[error("non-finite training target at index {0}")]
    NonFiniteTarget(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub mean_const: f64,
}

impl GpHyperparams {
    /// Untuned starting point: lengthscale 0.3, signal variance from the
    /// targets' spread, small noise, mean at the sample mean.
    pub fn default_for(dims: usize, ys: &[f64]) -> Self {
        let (mean, var) = mean_var(ys);
        Self {
            lengthscales: vec![0.3; dims],
            signal_variance: var.max(1e-4),
            noise_variance: 1e-4,
            mean_const: mean,
        }
    }

    /// `[ln ℓ_1..ln ℓ_N, ln σ_f², ln σ_n², c]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(self.signal_variance.ln());
        p.push(self.noise_variance.ln());
        p.push(self.mean_const);
        p
    }

    pub fn from_params(p: &[f64]) -> Self {
        let n = p.len() - 3;
        Self {
            lengthscales: p[..n].iter().map(|v| v.exp()).collect(),
            signal_variance: p[n].exp(),
            noise_variance: p[n + 1].exp(),
            mean_const: p[n + 2],
        }
    }

    fn kernel(&self) -> Matern52 {
        Matern52 {
            lengthscales: self.lengthscales.clone(),
            signal_variance: self.signal_variance,
        }
    }
}

fn mean_var(ys: &[f64]) -> (f64, f64) {
    let n = ys.len().max(1) as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    /// Random restarts in addition to the untuned starting point.
    pub restarts: usize,
    /// Hold the noise variance at this value instead of learning it.
    pub fixed_noise: Option<f64>,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 5,
            fixed_noise: None,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A conditioned Gaussian process; immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    hyper: GpHyperparams,
    jitter: f64,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
}

struct Factorized {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

fn kernel_matrix(xs: &[Vec<f64>], hyper: &GpHyperparams) -> DMatrix<f64> {
    let k = hyper.kernel();
    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = hyper.signal_variance;
        for j in 0..i {
            let v = k.eval(&xs[i], &xs[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Condition estimates above this are treated as a failed factorization.
const MAX_CONDITION: f64 = 1.0 / f64::EPSILON;

/// `(max L_ii / min L_ii)²`, a cheap lower bound on the condition number.
fn diag_condition(l: &DMatrix<f64>) -> f64 {
    let diag = l.diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        (max / min).powi(2)
    } else {
        f64::INFINITY
    }
}

fn factorize(xs: &[Vec<f64>], ys: &[f64], hyper: &GpHyperparams) -> Result<Factorized, GpError> {
    let n = xs.len();
    let base = kernel_matrix(xs, hyper);
    let mut condition = f64::INFINITY;
    for &jitter in &JITTER_LADDER {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += hyper.noise_variance + jitter;
        }
        let Some(chol) = k.cholesky() else {
            continue;
        };
        let l = chol.l();
        condition = diag_condition(&l);
        if condition > MAX_CONDITION {
            continue;
        }
        let resid = DVector::from_iterator(n, ys.iter().map(|y| y - hyper.mean_const));
        let alpha = chol.solve(&resid);
        let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let lml = -0.5 * resid.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if lml.is_finite() {
            return Ok(Factorized { l, alpha, jitter, lml });
        }
    }
    Err(GpError::SingularKernel { condition })
}

/// Log marginal likelihood and its gradient with respect to
/// `[ln ℓ_1..ln ℓ_N, ln σ_f², ln σ_n², c]`. `None` where the kernel matrix
/// cannot be factorized.
pub fn log_marginal_likelihood_grad(xs: &[Vec<f64>], ys: &[f64], params: &[f64]) -> Option<(f64, Vec<f64>)> {
    let hyper = GpHyperparams::from_params(params);
    let fac = factorize(xs, ys, &hyper).ok()?;
    let n = xs.len();
    let dims = hyper.lengthscales.len();
    let mut k = kernel_matrix(xs, &hyper);
    for i in 0..n {
        k[(i, i)] += hyper.noise_variance + fac.jitter;
    }
    let chol = nalgebra::Cholesky::new(k)?;
    let k_inv = chol.inverse();
    // W = α αᵀ − K⁻¹; ∂LML/∂θ = ½ tr(W ∂K/∂θ).
    let w = &fac.alpha * fac.alpha.transpose() - k_inv;

    let mut grad = vec![0.0; dims + 3];
    let kern = hyper.kernel();
    for i in 0..n {
        for j in 0..i {
            let r = kern.scaled_distance(&xs[i], &xs[j]);
            let factor = matern52_lengthscale_factor(r, hyper.signal_variance);
            let wij = w[(i, j)];
            // Symmetric pair counted twice, times ½.
            for d in 0..dims {
                let delta = (xs[i][d] - xs[j][d]) / hyper.lengthscales[d];
                grad[d] += wij * factor * delta * delta;
            }
            grad[dims] += wij * matern52(r, hyper.signal_variance);
        }
    }
    let trace_w: f64 = (0..n).map(|i| w[(i, i)]).sum();
    grad[dims] += 0.5 * trace_w * hyper.signal_variance;
    grad[dims + 1] = 0.5 * trace_w * hyper.noise_variance;
    grad[dims + 2] = fac.alpha.sum();
    Some((fac.lml, grad))
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the given data.
    pub fn new(train_x: Vec<Vec<f64>>, train_y: Vec<f64>, hyper: GpHyperparams) -> Result<Self, GpError> {
        check_data(&train_x, &train_y, hyper.lengthscales.len())?;
        let fac = factorize(&train_x, &train_y, &hyper)?;
        Ok(Self {
            train_x,
            train_y,
            hyper,
            jitter: fac.jitter,
            chol_l: fac.l,
            alpha: fac.alpha,
            log_marginal_likelihood: fac.lml,
        })
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn dims(&self) -> usize {
        self.hyper.lengthscales.len()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Predictive mean and latent-function variance at `x` (clamped at 0).
    pub fn posterior(&self, x: &[f64]) -> Posterior {
        let kern = self.hyper.kernel();
        let kstar = DVector::from_iterator(self.train_x.len(), self.train_x.iter().map(|t| kern.eval(x, t)));
        let mean = self.hyper.mean_const + kstar.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor has a positive diagonal");
        let variance = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        Posterior { mean, variance }
    }

    pub fn posterior_at(&self, x: &ControlVector) -> Posterior {
        self.posterior(x.values())
    }
}

fn check_data(xs: &[Vec<f64>], ys: &[f64], dims: usize) -> Result<(), GpError> {
    if xs.len() < 2 || ys.len() != xs.len() {
        return Err(GpError::TooFewSamples(xs.len().min(ys.len())));
    }
    for (index, x) in xs.iter().enumerate() {
        if x.len() != dims {
            return Err(GpError::DimensionMismatch {
                index,
                expected: dims,
                actual: x.len(),
            });
        }
    }
    if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
        return Err(GpError::NonFiniteTarget(i));
    }
    Ok(())
}

/// Fits on scored samples, ignoring skipped ones.
pub fn fit(samples: &[Sample], opts: &FitOptions) -> Result<GpModel, GpError> {
    let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = samples
        .iter()
        .filter(|s| !s.skipped)
        .map(|s| (s.x.values().to_vec(), s.loss))
        .unzip();
    fit_points(xs, ys, opts)
}

/// Maximizes the log marginal likelihood from the untuned start plus
/// `opts.restarts` seeded log-uniform draws; the best optimum wins, earliest
/// on ties.
pub fn fit_points(xs: Vec<Vec<f64>>, ys: Vec<f64>, opts: &FitOptions) -> Result<GpModel, GpError> {
    let dims = xs.first().map_or(0, Vec::len);
    check_data(&xs, &ys, dims)?;
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let (ymean, yvar) = mean_var(&ys);

    let mut lower: Vec<f64> = vec![LENGTHSCALE_BOUNDS.0.ln(); dims];
    let mut upper: Vec<f64> = vec![LENGTHSCALE_BOUNDS.1.ln(); dims];
    lower.push(SIGNAL_VARIANCE_BOUNDS.0.ln());
    upper.push(SIGNAL_VARIANCE_BOUNDS.1.ln());
    match opts.fixed_noise {
        Some(noise) => {
            let v = noise.max(NOISE_VARIANCE_BOUNDS.0).ln();
            lower.push(v);
            upper.push(v);
        }
        None => {
            lower.push(NOISE_VARIANCE_BOUNDS.0.ln());
            upper.push(NOISE_VARIANCE_BOUNDS.1.ln());
        }
    }
    lower.push(ymin - 1.0);
    upper.push(ymax + 1.0);

    let mut starts = Vec::with_capacity(opts.restarts + 1);
    let mut default = GpHyperparams::default_for(dims, &ys);
    if let Some(noise) = opts.fixed_noise {
        default.noise_variance = noise;
    }
    starts.push(default.to_params());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> f64 { lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln()) };
    let signal_ref = yvar.max(1e-4);
    for _ in 0..opts.restarts {
        let mut p: Vec<f64> = (0..dims).map(|_| log_uniform(&mut rng, 0.05, 2.0)).collect();
        p.push(log_uniform(&mut rng, 0.1 * signal_ref, 10.0 * signal_ref));
        p.push(log_uniform(&mut rng, 1e-6, 1e-2));
        p.push(ymean);
        starts.push(p);
    }

    let lbfgs_opts = LbfgsOptions {
        max_iters: opts.max_iters,
        ..Default::default()
    };
    let objective = |p: &[f64]| {
        log_marginal_likelihood_grad(&xs, &ys, p).map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in &starts {
        if let Some(m) = lbfgs::minimize(objective, start, &lower, &upper, &lbfgs_opts) {
            if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
    }
    let params = match best {
        Some((_, p)) => p,
        None => {
            // Every start failed to factorize: surface the singularity.
            let mut p = starts[0].clone();
            for ((v, lo), hi) in p.iter_mut().zip(&lower).zip(&upper) {
                *v = v.clamp(*lo, *hi);
            }
            p
        }
    };
    GpModel::new(xs, ys, GpHyperparams::from_params(&params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper1d(l: f64, signal: f64, noise: f64, mean: f64) -> GpHyperparams {
        GpHyperparams {
            lengthscales: vec![l],
            signal_variance: signal,
            noise_variance: noise,
            mean_const: mean,
        }
    }

    #[test]
    fn two_point_interpolation_at_noise_floor() {
        let xs = vec![vec![0.2], vec![0.8]];
        let ys = vec![0.3, 0.7];
        let opts = FitOptions {
            fixed_noise: Some(1e-10),
            ..Default::default()
        };
        let m = fit_points(xs, ys, &opts).unwrap();
        assert!((m.posterior(&[0.2]).mean - 0.3).abs() < 1e-3);
        assert!((m.posterior(&[0.8]).mean - 0.7).abs() < 1e-3);
    }

    #[test]
    fn duplicate_inputs_learn_noise() {
        let xs = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.1, 0.9], vec![0.9, 0.2]];
        let ys = vec![0.2, 0.6, 0.5, 0.4];
        let m = fit_points(xs, ys, &FitOptions::default()).unwrap();
        assert!(m.hyper().noise_variance > 1e-6, "{:?}", m.hyper());
    }

    #[test]
    fn training_point_is_interpolated() {
        let xs = vec![vec![0.1], vec![0.4], vec![0.9]];
        let ys = vec![0.5, 0.2, 0.8];
        let m = GpModel::new(xs, ys, hyper1d(0.3, 1.0, 1e-10, 0.0)).unwrap();
        let p = m.posterior(&[0.4]);
        assert!((p.mean - 0.2).abs() < 1e-6);
        assert!(p.variance < 1e-6);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let xs = vec![vec![0.0], vec![0.02]];
        let ys = vec![0.9, 0.1];
        let m = GpModel::new(xs, ys, hyper1d(0.01, 0.25, 1e-6, 0.4)).unwrap();
        let p = m.posterior(&[1.0]);
        assert!((p.mean - 0.4).abs() < 0.01 * 0.4);
        assert!((p.variance - 0.25).abs() < 0.01 * 0.25);
    }

    #[test]
    fn singular_kernel_is_reported() {
        // Lengthscale so large that identical rows cannot be rescued by jitter.
        let xs = vec![vec![0.5]; 3];
        let ys = vec![0.1, 0.5, 0.9];
        let hyper = hyper1d(1.0, 1e17, 0.0, 0.0);
        match GpModel::new(xs, ys, hyper) {
            Err(GpError::SingularKernel { condition }) => assert!(condition > 1e12),
            other => panic!("expected singular kernel, got {other:?}"),
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_points(vec![vec![0.1]], vec![0.3], &FitOptions::default()),
            Err(GpError::TooFewSamples(1))
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0, (i * 7 % 12) as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] - 0.3).powi(2) + 0.5 * x[1]).collect();
        let opts = FitOptions {
            seed: 99,
            ..Default::default()
        };
        let a = fit_points(xs.clone(), ys.clone(), &opts).unwrap();
        let b = fit_points(xs, ys, &opts).unwrap();
        assert_eq!(a.hyper(), b.hyper());
    }
}
