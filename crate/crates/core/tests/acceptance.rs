//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints a single PASS/FAIL line even when others fail.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use droplet_bo::acquisition::{acq_ei, acq_mpi, propose_batch, AcquisitionKind};
use droplet_bo::config::{AcquisitionChoice, ExperimentConfig};
use droplet_bo::devices::{
    device_from_spec, dimensionless, FluidProperties, InkjetSimulator, Simulator, INKJET_FEASIBLE_VOLUME,
    MICROFLUIDIC_FEASIBLE_VOLUME,
};
use droplet_bo::experiment::{run_experiment, RunOptions};
use droplet_bo::rng::stream_rng;
use droplet_bo::sampling::lhs_plan;
use droplet_bo::space::ControlVector;
use droplet_bo::surrogate::{fit_points, log_marginal_likelihood_grad, FitOptions, GpHyperparams, GpModel};
use droplet_bo::vision::{score, DropletImage, Pixel, ScoreOpts};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_secs: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < budget_secs, || {
        format!("took {:.2} s, budget {budget_secs} s", elapsed.as_secs_f64())
    })
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn normal_pdf(y: f64, mu: f64, s: f64) -> f64 {
    let z = (y - mu) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for mu in [0.1f64, 0.35, 0.6, 0.85] {
        for s in [1e-3, 1e-2, 0.1, 0.4, 1.0] {
            for best in [0.2f64, 0.45, 0.7, 0.95, 1.2] {
                points += 1;
                let lo = mu - 12.0 * s;
                let hi = best.min(mu + 12.0 * s);
                let ei_quad = simpson(|y| (best - y) * normal_pdf(y, mu, s), lo, hi, 20_000);
                let mpi_quad = simpson(|y| normal_pdf(y, mu, s), lo, hi, 20_000);
                worst = worst.max((acq_ei(mu, s, best) - ei_quad).abs());
                worst = worst.max((acq_mpi(mu, s, best) - mpi_quad).abs());
            }
        }
    }
    check(points == 100, || format!("grid has {points} points"))?;
    check(worst < 1e-6, || format!("max |closed form - quadrature| = {worst:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("{points} grid points, max error {worst:.2e}"))
}

fn matern52(r: f64, var: f64) -> f64 {
    let a = 5f64.sqrt() * r;
    var * (1.0 + a + a * a / 3.0) * (-a).exp()
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        let b_pivot = b[col];
        for (row, rhs) in rest.iter_mut().zip(&mut b[col + 1..]) {
            let f = row[col] / pivot[col];
            for k in col..n {
                row[k] -= f * pivot[k];
            }
            *rhs -= f * b_pivot;
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let xs = [0.05, 0.3, 0.5, 0.72, 0.95];
    let ys = vec![0.8, 0.35, 0.5, 0.2, 0.65];
    let hyper = GpHyperparams {
        lengthscales: vec![0.2],
        signal_variance: 0.5,
        noise_variance: 1e-6,
        mean_const: 0.5,
    };
    let model = GpModel::new(xs.iter().map(|&x| vec![x]).collect(), ys.clone(), hyper.clone())
        .map_err(|e| e.to_string())?;
    check(model.jitter() == 0.0, || format!("needed jitter {}", model.jitter()))?;
    let kmat: Vec<Vec<f64>> = xs
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            xs.iter()
                .enumerate()
                .map(|(j, &b)| matern52((a - b).abs() / 0.2, 0.5) + if i == j { 1e-6 } else { 0.0 })
                .collect()
        })
        .collect();
    let resid: Vec<f64> = ys.iter().map(|y| y - 0.5).collect();
    let alpha = solve_dense(kmat.clone(), resid);
    let mut worst: f64 = 0.0;
    for q in 0..=40 {
        let x = q as f64 / 40.0;
        let kstar: Vec<f64> = xs.iter().map(|&t| matern52((x - t).abs() / 0.2, 0.5)).collect();
        let mean = 0.5 + kstar.iter().zip(&alpha).map(|(k, a)| k * a).sum::<f64>();
        let v = solve_dense(kmat.clone(), kstar.clone());
        let var = 0.5 - kstar.iter().zip(&v).map(|(k, a)| k * a).sum::<f64>();
        let p = model.posterior(&[x]);
        worst = worst.max((p.mean - mean).abs()).max((p.variance - var.max(0.0)).abs());
    }
    check(worst < 1e-8, || format!("posterior deviates from dense oracle by {worst:e}"))?;

    let mut rng = stream_rng(17, 0);
    let train = lhs_plan(2, 12, &mut rng).unwrap();
    let txs: Vec<Vec<f64>> = train.points.iter().map(|p| p.values().to_vec()).collect();
    let tys: Vec<f64> = txs
        .iter()
        .map(|p| (3.0 * p[0]).sin() * 0.4 + (p[1] - 0.3).powi(2))
        .collect();
    let mut worst_rel: f64 = 0.0;
    for point in 0..10u64 {
        let mut prng = stream_rng(99, point + 1);
        use rand::Rng;
        let params = vec![
            prng.random_range(0.1f64.ln()..0.0),
            prng.random_range(0.1f64.ln()..0.0),
            prng.random_range(0.05f64.ln()..1f64.ln()),
            prng.random_range(1e-3f64.ln()..1e-1f64.ln()),
            prng.random_range(0.0..0.6),
        ];
        let (_, grad) = log_marginal_likelihood_grad(&txs, &tys, &params).ok_or("factorization failed")?;
        for (i, g) in grad.iter().enumerate() {
            let h = 1e-5;
            let mut up = params.clone();
            let mut down = params.clone();
            up[i] += h;
            down[i] -= h;
            let fu = log_marginal_likelihood_grad(&txs, &tys, &up).unwrap().0;
            let fd = log_marginal_likelihood_grad(&txs, &tys, &down).unwrap().0;
            let numeric = (fu - fd) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs());
            worst_rel = worst_rel.max(rel);
        }
    }
    check(worst_rel < 1e-4, || format!("gradient relative error {worst_rel:e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("posterior error {worst:.1e}, gradient rel error {worst_rel:.1e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut plans = 0;
    for seed in 0..100u64 {
        for k in [4usize, 20] {
            for n in [2usize, 3] {
                let plan = lhs_plan(n, k, &mut stream_rng(seed, 0)).map_err(|e| e.to_string())?;
                for d in 0..n {
                    let strata: HashSet<usize> = plan
                        .points
                        .iter()
                        .map(|p| ((p[d] * k as f64).floor() as usize).min(k - 1))
                        .collect();
                    check(strata.len() == k && plan.points.len() == k, || {
                        format!("seed {seed} K={k} N={n} dim {d}: {} distinct strata", strata.len())
                    })?;
                }
                plans += 1;
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("{plans} designs stratified"))
}

/// `|R XOR C| / |R|` computed pixel by pixel from the definitions: major
/// chord between the farthest pair of pixel centres, minor chord as the widest
/// unit slice across it (nearest the middle on ties), circle of radius
/// `(major + minor) / 4` at the crossing.
fn brute_force_geom(region: &[Pixel], width: usize, height: usize) -> f64 {
    let mut best = (region[0], region[0], -1i64);
    for (i, &a) in region.iter().enumerate() {
        for &b in &region[i + 1..] {
            let d = a.dist2(b);
            if d > best.2 {
                best = (a, b, d);
            }
        }
    }
    let (p1, p2) = (best.0, best.1);
    let len = (best.2 as f64).sqrt();
    let (uy, ux) = (f64::from(p2.row - p1.row) / len, f64::from(p2.col - p1.col) / len);
    let mut extents: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for p in region {
        let (dy, dx) = (f64::from(p.row - p1.row), f64::from(p.col - p1.col));
        let t = dy * uy + dx * ux;
        let s = dy * ux - dx * uy;
        let e = extents.entry(t.round() as i64).or_insert((s, s));
        e.0 = e.0.min(s);
        e.1 = e.1.max(s);
    }
    let widest = extents.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let slice = extents
        .iter()
        .filter(|(_, (lo, hi))| (hi - lo - widest).abs() <= 1e-9)
        .map(|(&k, _)| k)
        .min_by(|a, b| (*a as f64 - len / 2.0).abs().total_cmp(&(*b as f64 - len / 2.0).abs()))
        .unwrap();
    let (cy, cx) = (f64::from(p1.row) + slice as f64 * uy, f64::from(p1.col) + slice as f64 * ux);
    let radius = (len + widest) / 4.0;
    let members: HashSet<Pixel> = region.iter().copied().collect();
    let mut xor = 0usize;
    for r in 0..height as i32 {
        for c in 0..width as i32 {
            let inside = (f64::from(r) - cy).powi(2) + (f64::from(c) - cx).powi(2) <= radius * radius + 1e-9;
            if inside != members.contains(&Pixel::new(r, c)) {
                xor += 1;
            }
        }
    }
    xor as f64 / region.len() as f64
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let opts = ScoreOpts::default();
    let disks = score(&DropletImage::load(&fixture("five_disks.png")).map_err(|e| e.to_string())?, &opts)
        .map_err(|e| e.to_string())?;
    check(disks.droplet_count() == 5, || format!("five disks gave {}", disks.droplet_count()))?;
    check(disks.geom_loss <= 0.05, || format!("five disks L_geom {}", disks.geom_loss))?;
    let blank = score(&DropletImage::load(&fixture("blank.png")).map_err(|e| e.to_string())?, &opts)
        .map_err(|e| e.to_string())?;
    check(blank.loss == 1.0, || format!("blank loss {}", blank.loss))?;
    let rect_img = DropletImage::load(&fixture("rectangle.png")).map_err(|e| e.to_string())?;
    let rect = score(&rect_img, &opts).map_err(|e| e.to_string())?;
    check(rect.droplet_count() == 1, || format!("rectangle gave {} regions", rect.droplet_count()))?;
    let truth: Vec<Pixel> = (20..40).flat_map(|r| (20..60).map(move |c| Pixel::new(r, c))).collect();
    let mut found = rect.segmentation.regions[0].clone();
    found.sort_unstable();
    check(found == truth, || "rectangle region differs from the painted rectangle".into())?;
    let oracle = brute_force_geom(&truth, rect_img.width(), rect_img.height());
    check(rect.geom_loss == oracle, || format!("rectangle L_geom {} vs oracle {oracle}", rect.geom_loss))?;
    within(start.elapsed(), 2.0)?;
    Ok(format!(
        "five disks L_geom {:.4}, blank loss 1.0, rectangle L_geom {oracle}",
        disks.geom_loss
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    let mut reached = Vec::new();
    for (device, volume) in [("inkjet-sim", INKJET_FEASIBLE_VOLUME), ("microfluidic-sim", MICROFLUIDIC_FEASIBLE_VOLUME)] {
        let mut converged = 0;
        let mut runs = 0;
        for acquisition in [AcquisitionChoice::Ei, AcquisitionChoice::Mpi, AcquisitionChoice::Lcb] {
            let mut fractions = Vec::new();
            for seed in 0..5 {
                let cfg = ExperimentConfig {
                    acquisition,
                    ..Default::default()
                };
                let mut dev = device_from_spec(device, None, Default::default()).map_err(|e| e.to_string())?;
                let (state, report) =
                    run_experiment(&cfg, dev.as_mut(), seed, RunOptions::default()).map_err(|e| e.to_string())?;
                runs += 1;
                if report.best_loss < 0.75 {
                    converged += 1;
                }
                let acquired: Vec<f64> = state.samples.iter().filter(|s| s.batch_index > 0).map(|s| s.loss).collect();
                fractions.push(acquired.iter().filter(|&&l| l < 0.75).count() as f64 / acquired.len() as f64);
            }
            let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
            check(mean >= 1.5 * volume, || {
                format!("{device} {acquisition:?}: feasibility {mean:.3} < 1.5 x {volume}")
            })?;
            summary.push(format!("{device} {acquisition:?} {mean:.3}"));
        }
        check(converged >= 14, || format!("{device}: {converged}/{runs} runs reached l* < 0.75"))?;
        reached.push(format!("{device} {converged}/{runs}"));
    }
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "l* < 0.75 in [{}]; feasibility [{}] vs volumes {INKJET_FEASIBLE_VOLUME}/{MICROFLUIDIC_FEASIBLE_VOLUME}",
        reached.join(", "),
        summary.join(", ")
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let sim = InkjetSimulator::new();
    let opts = ScoreOpts::default();
    let mut widest: f64 = 0.0;
    for (f, s) in [(0.05, 0.95), (0.1, 0.9), (0.2, 0.7), (0.3, 0.5), (0.5, 0.5), (0.4, 0.3), (0.9, 0.1)] {
        let losses: Vec<f64> = (0..=10)
            .map(|i| {
                let x = ControlVector::new(vec![i as f64 / 10.0, f, s]).unwrap();
                score(&sim.render(&x, 11), &opts).unwrap().loss
            })
            .collect();
        let range = losses.iter().cloned().fold(f64::MIN, f64::max) - losses.iter().cloned().fold(f64::MAX, f64::min);
        widest = widest.max(range);
    }
    check(widest < 0.05, || format!("loss varies by {widest:.4} across pressure"))?;
    let mut dev = device_from_spec("inkjet-sim", None, Default::default()).map_err(|e| e.to_string())?;
    let (state, report) = run_experiment(&ExperimentConfig::default(), dev.as_mut(), 0, RunOptions::default())
        .map_err(|e| e.to_string())?;
    check(report.best_loss < 0.75, || format!("EI run did not converge: {}", report.best_loss))?;
    let ls = &state.surrogates.last().ok_or("no surrogate recorded")?.hyper.lengthscales;
    check(ls[0] > ls[1], || format!("pressure lengthscale {} <= frequency {}", ls[0], ls[1]))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "pressure range {widest:.4}; lengthscales pressure {:.3} > frequency {:.3}",
        ls[0], ls[1]
    ))
}

fn criterion_7() -> Outcome {
    let d = dimensionless(&FluidProperties::water(70e-6)).map_err(|e| e.to_string())?;
    check((d.oh - 0.0141).abs() <= 5e-4, || format!("Oh {}", d.oh))?;
    check((d.bo - 6.7e-4).abs() <= 0.05e-4, || format!("Bo {}", d.bo))?;
    check(d.bo > 1e-4 && d.bo < 1e-2, || format!("Bo {} not of order 1e-3", d.bo))?;
    Ok(format!("Oh {:.5}, Bo {:.3e}", d.oh, d.bo))
}

fn criterion_8() -> Outcome {
    let sim = InkjetSimulator::new();
    let mut rng = stream_rng(5, 0);
    let xs = lhs_plan(3, 60, &mut rng).unwrap().points;
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| 0.3 + 0.5 * (x[1] - 0.2).powi(2) + 0.3 * (x[2] - 0.7).powi(2))
        .collect();
    let image = sim.render(&xs[0], 1);
    check(image.width() == 512 && image.height() == 512, || "image is not 512x512".into())?;

    let start = Instant::now();
    let t0 = Instant::now();
    let scored = score(&image, &ScoreOpts::default()).map_err(|e| e.to_string())?;
    let score_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let model = fit_points(
        xs.iter().map(|x| x.values().to_vec()).collect(),
        ys,
        &FitOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let fit_secs = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let batch = propose_batch(&model, AcquisitionKind::Ei, 10, 0.1, 4096, &mut stream_rng(5, 1))
        .map_err(|e| e.to_string())?;
    let acq_secs = t2.elapsed().as_secs_f64();
    check(scored.loss.is_finite() && batch.points.len() == 10, || "incomplete pipeline".into())?;
    within(start.elapsed(), 3.7)?;
    Ok(format!(
        "score {score_secs:.3} s + refit {fit_secs:.3} s + acquisition {acq_secs:.3} s = {:.3} s",
        start.elapsed().as_secs_f64()
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_droplet-bo"))
        .args(args)
        .env("DROPLET_BO_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, jobs) in dirs.iter().zip(["1", "1", "8"]) {
        cli(&["run", "--device", "inkjet-sim", "--seed", "3", "--jobs", jobs, "--out", dir.to_str().unwrap()])?;
    }
    let states: Vec<Vec<u8>> = dirs.iter().map(|d| read(&d.join("state.json"))).collect::<Result<_, _>>()?;
    check(states[0] == states[1], || "repeated runs differ".into())?;
    check(states[0] == states[2], || "--jobs 1 and --jobs 8 differ".into())?;
    Ok(format!("state.json identical across 3 runs ({} bytes)", states[0].len()))
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let full = tmp.path().join("full");
    let resumed = tmp.path().join("resumed");
    cli(&["run", "--device", "microfluidic-sim", "--seed", "9", "--out", full.to_str().unwrap()])?;
    cli(&[
        "run",
        "--device",
        "microfluidic-sim",
        "--seed",
        "9",
        "--out",
        resumed.to_str().unwrap(),
        "--stop-after-batch",
        "2",
    ])?;
    let partial = read(&resumed.join("state.json"))?;
    cli(&["run", "--device", "microfluidic-sim", "--seed", "9", "--out", resumed.to_str().unwrap(), "--resume"])?;
    let a = read(&full.join("state.json"))?;
    let b = read(&resumed.join("state.json"))?;
    check(partial.len() < a.len(), || "stopped run was not partial".into())?;
    check(a == b, || "resumed state differs from the uninterrupted run".into())?;
    Ok("resumed after batch 2, final state identical".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("acquisition closed forms vs quadrature", criterion_1),
        ("GP posterior oracle and LML gradients", criterion_2),
        ("LHS stratification", criterion_3),
        ("vision ground truth", criterion_4),
        ("end-to-end convergence", criterion_5),
        ("inkjet pressure insensitivity", criterion_6),
        ("dimensionless numbers", criterion_7),
        ("software timing budget", criterion_8),
        ("determinism across runs and jobs", criterion_9),
        ("resumability", criterion_10),
    ];
    let quiet: Box<dyn Fn(&std::panic::PanicHookInfo<'_>) + Send + Sync> = Box::new(|_| {});
    std::panic::set_hook(quiet);
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:7.2} s] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:7.2} s] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
