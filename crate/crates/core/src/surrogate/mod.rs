//! Gaussian-process surrogate of the loss surface over normalized controls.

mod gp;
mod kernel;
pub mod lbfgs;

pub use self::gp::{
    fit, fit_points, log_marginal_likelihood_grad, FitOptions, GpError, GpHyperparams, GpModel, Posterior,
    JITTER_LADDER, LENGTHSCALE_BOUNDS, NOISE_VARIANCE_BOUNDS, SIGNAL_VARIANCE_BOUNDS,
};
pub use self::kernel::{matern52, matern52_lengthscale_factor, Matern52};
