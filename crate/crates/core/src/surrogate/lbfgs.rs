//! Box-constrained L-BFGS minimizer (projected search with an active set).

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 200,
            grad_tol: 1e-6,
            rel_f_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient, or `None` where it is undefined (treated as +∞).
pub fn minimize<F>(mut f: F, start: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = start.len();
    let mut x = start.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    // Components pinned at a bound with the gradient pushing outward.
    let active = |x: &[f64], g: &[f64]| -> Vec<bool> {
        (0..n)
            .map(|i| {
                (x[i] <= lower[i] && g[i] > 0.0)
                    || (x[i] >= upper[i] && g[i] < 0.0)
                    || lower[i] == upper[i]
            })
            .collect()
    };

    while iterations < opts.max_iters {
        iterations += 1;
        let fixed = active(&x, &g);
        let free_grad: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { g[i] }).collect();
        if free_grad.iter().map(|v| v.abs()).fold(0.0, f64::max) < opts.grad_tol {
            break;
        }

        // Two-loop recursion on the free components.
        let mut q = free_grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -q[i] }).collect();
        if dot(&dir, &free_grad) >= 0.0 {
            history.clear();
            dir = free_grad.iter().map(|v| -v).collect();
        }

        let mut step = if history.is_empty() {
            // First step: move at most one unit in the largest component.
            1.0 / dir.iter().map(|v| v.abs()).fold(1.0, f64::max)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * dir[i]).collect();
            project(&mut trial, lower, upper);
            let moved: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            if moved.iter().all(|m| *m == 0.0) {
                break;
            }
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &moved) {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = fx - ft;
        x = trial;
        fx = ft;
        g = gt;
        if improvement.abs() <= opts.rel_f_tol * (1.0 + fx.abs()) {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let opts = LbfgsOptions {
            max_iters: 500,
            rel_f_tol: 0.0,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 2.0)]));
        let m = minimize(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, vec![1.0, -1.0]);
    }

    #[test]
    fn pinned_dimension_stays() {
        let f = |x: &[f64]| Some((x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]));
        let m = minimize(f, &[0.5, 0.5], &[-1.0, 0.5], &[1.0, 0.5], &LbfgsOptions::default()).unwrap();
        assert!(m.x[0].abs() < 1e-6);
        assert_eq!(m.x[1], 0.5);
    }
}
