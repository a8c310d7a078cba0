const SQRT_5: f64 = 2.236_067_977_499_79;

/// Matérn 5/2 covariance with one lengthscale per input dimension.
///
/// `k(r) = σ² (1 + √5 r + 5r²/3) exp(−√5 r)`, `r² = Σ_d (a_d − b_d)² / ℓ_d²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matern52 {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl Matern52 {
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        matern52(self.scaled_distance(a, b), self.signal_variance)
    }
}

pub fn matern52(r: f64, signal_variance: f64) -> f64 {
    let s = SQRT_5 * r;
    signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `∂k/∂ln ℓ_d = matern52_lengthscale_factor(r, σ²) · Δ_d² / ℓ_d²`.
pub fn matern52_lengthscale_factor(r: f64, signal_variance: f64) -> f64 {
    let s = SQRT_5 * r;
    signal_variance * (5.0 / 3.0) * (1.0 + s) * (-s).exp()
}
