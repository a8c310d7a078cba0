//! Fits the Matérn 5/2 surrogate to a 1-D toy loss and prints the posterior
//! band next to the truth.

use droplet_bo::surrogate::{fit_points, FitOptions};

fn truth(x: f64) -> f64 {
    0.5 + 0.35 * (6.0 * x).sin() * (-x).exp()
}

fn main() {
    let xs: Vec<f64> = vec![0.02, 0.15, 0.33, 0.4, 0.58, 0.71, 0.9, 0.97];
    let ys: Vec<f64> = xs.iter().map(|&x| truth(x)).collect();
    let model = fit_points(xs.iter().map(|&x| vec![x]).collect(), ys, &FitOptions::default()).expect("fit");
    let h = model.hyper();
    println!(
        "lengthscale {:.4} signal variance {:.4} noise variance {:.2e} mean {:.4} lml {:.3}",
        h.lengthscales[0],
        h.signal_variance,
        h.noise_variance,
        h.mean_const,
        model.log_marginal_likelihood()
    );
    println!("x,truth,mean,lower,upper");
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        let p = model.posterior(&[x]);
        let s = p.std_dev();
        println!("{x:.2},{:.4},{:.4},{:.4},{:.4}", truth(x), p.mean, p.mean - 2.0 * s, p.mean + 2.0 * s);
    }
}
