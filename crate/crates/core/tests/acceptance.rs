//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status when any criterion fails.
//!
//! Run a subset with `cargo test --release --test acceptance -- 1 3 10`.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phidual::dist::normal_quantile;
use phidual::divergence::{numeric_conjugate, Divergence, GridSpec};
use phidual::dual::{chi2_closed_form, el_reduced_solve, solve_inner, DualStatus};
use phidual::estimator::{
    estimate, profile_gradient, profile_objective, v_matrix, EstimateOptions,
};
use phidual::inference::{
    confidence_region, critical_value, power_approx, sample_size, test_theta_composite,
    test_theta_simple, RegionGrid,
};
use phidual::model::{builtin_model, Dims, ModelOptions, MomentModel, ParamBox, WeightedSample};
use phidual::simulation::{
    map_replicates, mc_power, replicate_rng, reproduce_figure1, Generator, SimulationPlan,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

const KLM: Divergence = Divergence::ModifiedKl;
const CHI2: Divergence = Divergence::Chi2;

fn named_families() -> [Divergence; 5] {
    [
        KLM,
        Divergence::Kl,
        Divergence::ModifiedChi2,
        CHI2,
        Divergence::Hellinger,
    ]
}

fn mean_model() -> MomentModel {
    builtin_model("mean", &ModelOptions::default()).unwrap()
}

fn mv_model() -> MomentModel {
    builtin_model("mean-variance", &ModelOptions::default()).unwrap()
}

fn null_plan(n: usize, family: Divergence) -> SimulationPlan {
    SimulationPlan {
        n_list: vec![n],
        epsilon_grid: vec![0.0],
        runs: 1000,
        family,
        ..SimulationPlan::default()
    }
}

fn in_band(rate: f64) -> bool {
    (0.03..=0.09).contains(&rate)
}

// 1. closed-form conjugates against brute force, and family coherence
fn conjugates() -> Verdict {
    let start = Instant::now();
    let mut families = named_families().to_vec();
    families.extend([
        Divergence::Power(-0.5),
        Divergence::Power(1.5),
        Divergence::Power(3.0),
    ]);
    let mut worst = 0.0f64;
    for fam in &families {
        let lo_x = if fam.phi_domain().lo.is_finite() {
            1e-9
        } else {
            -5.0
        };
        let grid = GridSpec {
            lo: lo_x,
            hi: 40.0,
            points: 4_001,
        };
        let a = fam.phi_derivs(0.05).unwrap().0;
        let b = fam.phi_derivs(20.0).unwrap().0;
        for k in 0..200 {
            let t = a + (b - a) * (k as f64 + 0.5) / 200.0;
            worst = worst.max((fam.psi(t) - numeric_conjugate(*fam, t, grid)).abs());
        }
    }
    let mut origin = 0.0f64;
    for fam in &families {
        let (d1, d2) = fam.psi_derivs(0.0).unwrap();
        origin = origin
            .max((d1 - 1.0).abs())
            .max((d2 - 1.0).abs())
            .max(fam.psi(0.0).abs());
    }
    let pairs = [
        (-1.0, Divergence::ModifiedChi2),
        (0.0, KLM),
        (0.5, Divergence::Hellinger),
        (1.0, Divergence::Kl),
        (2.0, CHI2),
    ];
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    let mut coherence = 0.0f64;
    for (gamma, named) in pairs {
        let p = Divergence::Power(gamma);
        for k in 0..50 {
            let x = 0.05 + 5.0 * k as f64 / 49.0;
            let (a1, a2) = p.phi_derivs(x).unwrap();
            let (b1, b2) = named.phi_derivs(x).unwrap();
            coherence = coherence
                .max(rel(p.phi(x), named.phi(x)))
                .max(rel(a1, b1))
                .max(rel(a2, b2));
            let t = b1;
            let (c1, c2) = p.psi_derivs(t).unwrap();
            let (e1, e2) = named.psi_derivs(t).unwrap();
            coherence = coherence
                .max(rel(p.psi(t), named.psi(t)))
                .max(rel(c1, e1))
                .max(rel(c2, e2));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && origin <= 1e-10 && coherence <= 1e-12 && secs < 1.0,
        format!(
            "max |ψ − numeric| = {worst:.2e}, max |ψ′(0)−1|,|ψ″(0)−1| = {origin:.1e}, power-family gap = {coherence:.1e}, {secs:.2} s"
        ),
    )
}

struct Instance {
    model: MomentModel,
    sample: WeightedSample,
    theta: f64,
    /// A strictly positive feasible density ratio.
    q0: Vec<f64>,
}

/// Random small instance with a strictly feasible primal point by construction.
fn instance(i: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(9000 + i as u64);
    let variance = i % 2 == 1;
    let n = if variance {
        rng.random_range(4..=6)
    } else {
        rng.random_range(3..=6)
    };
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q0: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.7)).collect();
    let mass: f64 = q0.iter().sum::<f64>() / n as f64;
    q0.iter_mut().for_each(|q| *q /= mass);
    let mean: f64 = xs.iter().zip(&q0).map(|(x, q)| x * q).sum::<f64>() / n as f64;
    let (model, theta) = if variance {
        xs.iter_mut().for_each(|x| *x -= mean);
        let second = xs.iter().zip(&q0).map(|(x, q)| x * x * q).sum::<f64>() / n as f64;
        (mv_model(), second)
    } else {
        (mean_model(), mean)
    };
    Instance {
        model,
        sample: WeightedSample::from_scalars(&xs),
        theta,
        q0,
    }
}

/// Orthonormal basis of the null space of `a`.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.transpose() * a);
    let top = eig.eigenvalues.amax();
    let cols: Vec<DVector<f64>> = (0..a.ncols())
        .filter(|&j| eig.eigenvalues[j] <= 1e-10 * top)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// `min Σ wᵢ φ(qᵢ)` subject to `Σ wᵢ qᵢ (1, g(xᵢ, θ)) = (1, 0)`, by damped
/// Newton on the null space from the feasible point `q0`; χ² is solved
/// exactly as an equality-constrained quadratic.
fn primal_min(fam: Divergence, inst: &Instance) -> f64 {
    let n = inst.sample.len();
    let w = 1.0 / n as f64;
    let l = inst.model.dims().moments;
    let mut a = DMatrix::zeros(l + 1, n);
    for i in 0..n {
        a[(0, i)] = w;
        for (j, g) in inst
            .model
            .g(inst.sample.point(i), &[inst.theta])
            .into_iter()
            .enumerate()
        {
            a[(j + 1, i)] = w * g;
        }
    }
    let basis = null_space(&a);
    let q0 = DVector::from_column_slice(&inst.q0);
    let value = |q: &DVector<f64>| q.iter().map(|v| w * fam.phi(*v)).sum::<f64>();
    if basis.ncols() == 0 {
        return value(&q0);
    }
    if fam == CHI2 {
        let h = basis.transpose() * &basis * w;
        let rhs = -(basis.transpose() * (q0.add_scalar(-1.0))) * w;
        let z = h.lu().solve(&rhs).expect("nonsingular");
        return value(&(&q0 + &basis * z));
    }
    let mut z = DVector::zeros(basis.ncols());
    let mut q = q0.clone();
    let mut f = value(&q);
    for _ in 0..200 {
        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        for i in 0..n {
            let (a1, a2) = fam.phi_derivs(q[i]).unwrap();
            d1[i] = w * a1;
            d2[i] = w * a2;
        }
        let grad = basis.transpose() * d1;
        if grad.amax() <= 1e-14 {
            break;
        }
        let hess = basis.transpose() * DMatrix::from_diagonal(&d2) * &basis;
        let step = -hess.cholesky().expect("convex").solve(&grad);
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let zc = &z + &step * alpha;
            let qc = &q0 + &basis * &zc;
            let fc = value(&qc);
            if fc.is_finite() && fc <= f + 1e-4 * alpha * slope {
                z = zc;
                q = qc;
                f = fc;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    f
}

// 2. dual values against independent primal minimization
fn primal_dual() -> Verdict {
    let start = Instant::now();
    let mut chi2_gap = 0.0f64;
    let mut other_gap = 0.0f64;
    let mut unconverged = 0;
    for i in 0..100 {
        let inst = instance(i);
        for fam in [CHI2, KLM, Divergence::Kl, Divergence::Hellinger] {
            let sol = solve_inner(fam, &inst.model, &inst.sample, &[inst.theta], None).unwrap();
            if sol.status != DualStatus::Converged {
                unconverged += 1;
                continue;
            }
            let primal = primal_min(fam, &inst);
            let gap = (sol.objective - primal).abs();
            if fam == CHI2 {
                chi2_gap = chi2_gap.max(gap / primal.abs().max(1.0));
            } else {
                other_gap = other_gap.max(gap);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        unconverged == 0 && chi2_gap <= 1e-8 && other_gap <= 1e-4 && secs < 30.0,
        format!(
            "100 instances: χ² gap {chi2_gap:.1e}, KLm/KL/Hellinger gap {other_gap:.1e}, {unconverged} unconverged, {secs:.1} s"
        ),
    )
}

// 3. two-point worked example
fn worked_example() -> Verdict {
    let model = mean_model();
    let sample = WeightedSample::from_scalars(&[0.0, 1.0]);
    let newton = solve_inner(CHI2, &model, &sample, &[1.0], None).unwrap();
    let closed = chi2_closed_form(&model, &sample, &[1.0]).unwrap();
    let report = test_theta_simple(CHI2, &model, &sample, &[1.0], 0.05).unwrap();
    let mut err = 0.0f64;
    for sol in [&newton, &closed] {
        err = err
            .max((sol.t[0] - 1.0).abs())
            .max((sol.t[1] - 2.0).abs())
            .max((sol.objective - 0.5).abs())
            .max(sol.weights[0].abs())
            .max((sol.weights[1] - 1.0).abs());
    }
    err = err.max((report.statistic - 2.0).abs());
    verdict(
        newton.status == DualStatus::Converged && err <= 1e-10,
        format!(
            "t = {:?}, D = {}, Q = {:?}, statistic = {}, max error {err:.1e}",
            newton.t, newton.objective, newton.weights, report.statistic
        ),
    )
}

// 4. empirical likelihood structure
fn el_structure() -> Verdict {
    let mut t0 = 0.0f64;
    let mut gap = 0.0f64;
    let mut checked = 0;
    let mut cases: Vec<(MomentModel, WeightedSample, f64)> = (0..100)
        .map(instance)
        .map(|i| (i.model, i.sample, i.theta))
        .collect();
    for r in 0..100 {
        let mut rng = replicate_rng(77, 0, r);
        let xs = Generator::Uniform { lo: -1.0, hi: 1.0 }
            .draw(50, &mut rng)
            .unwrap();
        let theta = rng.random_range(0.25..0.45);
        cases.push((mv_model(), WeightedSample::from_scalars(&xs), theta));
    }
    for (model, sample, theta) in &cases {
        let full = solve_inner(KLM, model, sample, &[*theta], None).unwrap();
        if full.status != DualStatus::Converged {
            continue;
        }
        checked += 1;
        t0 = t0.max(full.t[0].abs());
        let reduced = el_reduced_solve(model, sample, &[*theta]).unwrap();
        gap = gap.max((reduced.objective - full.objective).abs());
    }
    let model = mean_model();
    let two = WeightedSample::from_scalars(&[0.0, 1.0]);
    let mut edge = Vec::new();
    for theta in [0.0, 1.0, 1.5] {
        edge.push(
            solve_inner(KLM, &model, &two, &[theta], None)
                .unwrap()
                .status,
        );
        edge.push(el_reduced_solve(&model, &two, &[theta]).unwrap().status);
    }
    let unbounded = edge.iter().all(|s| *s == DualStatus::Unbounded);
    verdict(
        checked == cases.len() && t0 <= 1e-8 && gap <= 1e-8 && unbounded,
        format!(
            "{checked}/{} converged, max |t₀| = {t0:.1e}, reduced vs full gap {gap:.1e}, hull edge statuses {edge:?}",
            cases.len()
        ),
    )
}

/// Normal mean, variance and third moment: `d = 2`, `l = 3`, nonlinear in θ.
fn normal_moments() -> MomentModel {
    MomentModel::new(
        "normal-moments",
        Dims {
            data: 1,
            params: 2,
            moments: 3,
        },
        ParamBox::new(vec![-10.0, 1e-3], vec![10.0, 100.0]).unwrap(),
        |x, th| {
            let (m, s) = (th[0], th[1]);
            let x = x[0];
            vec![
                x - m,
                x * x - m * m - s,
                x * x * x - m * m * m - 3.0 * m * s,
            ]
        },
        |_, th| {
            let (m, s) = (th[0], th[1]);
            DMatrix::from_row_slice(
                3,
                2,
                &[-1.0, 0.0, -2.0 * m, -1.0, -3.0 * m * m - 3.0 * s, -3.0 * m],
            )
        },
    )
    .unwrap()
}

// 5. envelope gradient against finite differences
fn envelope_gradient() -> Verdict {
    let families = named_families();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for r in 0..50 {
        let fam = families[r % families.len()];
        let mut rng = replicate_rng(555, 0, r);
        let (model, sample, theta) = if r % 2 == 0 {
            let xs = Generator::Uniform { lo: -1.0, hi: 1.0 }
                .draw(40, &mut rng)
                .unwrap();
            (
                mv_model(),
                WeightedSample::from_scalars(&xs),
                vec![rng.random_range(0.27..0.4)],
            )
        } else {
            let xs = Generator::Normal { mean: 0.3, sd: 1.0 }
                .draw(80, &mut rng)
                .unwrap();
            let theta = vec![
                0.3 + rng.random_range(-0.1..0.1),
                1.0 + rng.random_range(-0.15..0.15),
            ];
            (normal_moments(), WeightedSample::from_scalars(&xs), theta)
        };
        let (_, sol) = profile_objective(fam, &model, &sample, &theta).unwrap();
        if !sol.status.is_converged() {
            skipped += 1;
            continue;
        }
        let grad = profile_gradient(fam, &model, &sample, &theta, &sol).unwrap();
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += h;
            down[k] -= h;
            let fu = profile_objective(fam, &model, &sample, &up).unwrap().0;
            let fd = profile_objective(fam, &model, &sample, &down).unwrap().0;
            let diff = (fu - fd) / (2.0 * h);
            worst = worst.max((grad[k] - diff).abs() / grad[k].abs().max(1.0));
        }
    }
    verdict(
        skipped == 0 && worst <= 1e-5,
        format!("50 instances, max gradient error {worst:.1e}, {skipped} skipped"),
    )
}

// 6. model-test calibration under the null
fn model_test_null() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in [KLM, CHI2] {
        let cell = &mc_power(&null_plan(200, fam)).unwrap()[0];
        pass &= in_band(cell.rejection_rate);
        parts.push(format!(
            "{fam} rate {:.3} ({} failed)",
            cell.rejection_rate, cell.failed
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    verdict(
        pass,
        format!("n = 200, 1000 runs: {}, {secs:.1} s", parts.join(", ")),
    )
}

// 7. parameter tests and region coverage at the true value
fn theta_tests_null() -> Verdict {
    let theta = [1.0 / 3.0];
    let grid = RegionGrid::new(vec![GridSpec {
        lo: 0.13,
        hi: 0.53,
        points: 401,
    }])
    .unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in [KLM, CHI2] {
        let plan = null_plan(200, fam);
        let model = plan.model().unwrap();
        let out = map_replicates(&plan, 0, |_, s| {
            let simple = test_theta_simple(fam, &model, s, &theta, 0.05).map(|r| r.rejects());
            let ratio = test_theta_composite(fam, &model, s, &theta, 0.05).map(|r| r.rejects());
            let covered =
                confidence_region(fam, &model, s, 0.05, &grid, &EstimateOptions::default()).map(
                    |c| {
                        c.intervals[0]
                            .iter()
                            .any(|(lo, hi)| *lo <= theta[0] && theta[0] <= *hi)
                    },
                );
            (
                simple.unwrap_or(true),
                ratio.unwrap_or(true),
                covered.unwrap_or(false),
            )
        })
        .unwrap();
        let runs = out.len() as f64;
        let simple = out.iter().filter(|o| o.0).count() as f64 / runs;
        let ratio = out.iter().filter(|o| o.1).count() as f64 / runs;
        let coverage = out.iter().filter(|o| o.2).count() as f64 / runs;
        pass &= in_band(simple) && in_band(ratio) && (0.91..=0.98).contains(&coverage);
        parts.push(format!(
            "{fam} simple {simple:.3}, ratio {ratio:.3}, coverage {coverage:.3}"
        ));
    }
    verdict(pass, format!("n = 200, 1000 runs: {}", parts.join("; ")))
}

// 8. Monte Carlo variance of the estimator against the plug-in variance
fn asymptotic_variance() -> Verdict {
    let plan = null_plan(500, KLM);
    let model = plan.model().unwrap();
    let opts = EstimateOptions::default();
    let fits = map_replicates(&plan, 0, |_, s| {
        estimate(KLM, &model, s, &opts).map(|e| e.theta_hat[0])
    })
    .unwrap();
    let thetas: Vec<f64> = fits.into_iter().filter_map(|r| r.ok()).collect();
    let scale = 500f64.sqrt();
    let z: Vec<f64> = thetas.iter().map(|t| scale * (t - 1.0 / 3.0)).collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    let mut rng = replicate_rng(2718, 0, 0);
    let xs = Generator::Uniform { lo: -1.0, hi: 1.0 }
        .draw(1_000_000, &mut rng)
        .unwrap();
    let reference = WeightedSample::from_scalars(&xs);
    let v_hat = v_matrix(&model, &reference, &[1.0 / 3.0]).unwrap()[(0, 0)];
    let rel = (var - v_hat).abs() / v_hat;
    verdict(
        thetas.len() == 1000 && rel <= 0.25,
        format!(
            "{} fits, MC variance {var:.4}, V̂ {v_hat:.4} (4/45 = {:.4}), relative error {rel:.3}",
            thetas.len(),
            4.0 / 45.0
        ),
    )
}

// 9. power curves of the model test
fn figure1() -> Verdict {
    let start = Instant::now();
    let fig = reproduce_figure1(42).unwrap();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("figure1.csv");
    let _ = std::fs::write(&path, fig.to_csv());
    let mut gap = 0.0f64;
    let mut missing = 0;
    let mut monotone = true;
    for &n in &fig.plan.n_list {
        let rows: Vec<_> = fig.rows.iter().filter(|r| r.n == n).collect();
        for pair in rows.windows(2) {
            let tol = 3.0 * pair[0].mc_stderr.max(pair[1].mc_stderr);
            monotone &= pair[1].mc_power >= pair[0].mc_power - tol;
            if let (Some(a), Some(b)) = (pair[0].approx_power, pair[1].approx_power) {
                monotone &= b >= a - 1e-12;
            }
        }
        if n < 100 {
            continue;
        }
        for r in rows {
            match r.approx_power {
                Some(a) => gap = gap.max((r.mc_power - a).abs()),
                None => missing += 1,
            }
        }
    }
    let unreliable = fig.mc.iter().filter(|c| c.unreliable).count();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        gap <= 0.15 && missing == 0 && monotone && secs < 900.0,
        format!(
            "max |mc − approx| = {gap:.3} for n ≥ 100, monotone {monotone}, {unreliable} unreliable cells, {secs:.0} s, table in {}",
            path.display()
        ),
    )
}

// 10. sample size inverts the power approximation
fn sample_size_round_trip() -> Verdict {
    let mut shortfall = 0.0f64;
    let mut not_minimal = 0;
    let mut cases = 0;
    for beta in [0.2, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99] {
        for d in [0.005, 0.01, 0.05, 0.1, 0.3, 1.0] {
            for sigma in [0.05, 0.3, 1.0, 3.0] {
                for alpha in [0.01, 0.05, 0.1] {
                    for df in [1, 2, 5] {
                        cases += 1;
                        let n = sample_size(beta, alpha, df, d, sigma).unwrap();
                        let p = power_approx(n, alpha, df, d, sigma).unwrap();
                        shortfall = shortfall.max(beta - p);
                        if n > 1 && power_approx(n - 1, alpha, df, d, sigma).unwrap() > beta + 1e-9
                        {
                            not_minimal += 1;
                        }
                    }
                }
            }
        }
    }
    let mut collapse = normal_quantile(0.5).unwrap() == 0.0;
    for d in [0.01, 0.05, 0.1, 0.3, 1.0] {
        for alpha in [0.01, 0.05, 0.1] {
            for df in [1, 2, 3] {
                let q = critical_value(alpha, df).unwrap();
                let n0 = q / (2.0 * d);
                collapse &= sample_size(0.5, alpha, df, d, 0.7).unwrap() == n0.floor() as u64 + 1;
            }
        }
    }
    let example = sample_size(0.5, 0.05, 1, 0.1, 1.0).unwrap();
    verdict(
        shortfall <= 0.01 && not_minimal == 0 && collapse && example == 20,
        format!(
            "{cases} cases, worst shortfall {shortfall:.2e}, {not_minimal} not minimal, β = 0.5 collapse {collapse}, example n = {example}"
        ),
    )
}

// 11. simulation output does not depend on the thread count
fn cli_determinism() -> Verdict {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    let run = |threads: &str| {
        let path = dir.join(format!("simulate-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_phidual"))
            .args(["--threads", threads, "--out"])
            .arg(&path)
            .args([
                "simulate",
                "--seed",
                "42",
                "--runs",
                "200",
                "--n-list",
                "50,100,200",
                "--eps-grid",
                "0.2,0.5,1",
            ])
            .output()
            .expect("binary runs");
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(path).unwrap()
    };
    let one = run("1");
    let four = run("4");
    let again = run("1");
    let lines = one.iter().filter(|b| **b == b'\n').count();
    verdict(
        one == four && one == again && lines == 10,
        format!(
            "{} bytes, {lines} lines, threads 1 vs 4 identical {}",
            one.len(),
            one == four
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Verdict); 11] = [
        (1, conjugates),
        (2, primal_dual),
        (3, worked_example),
        (4, el_structure),
        (5, envelope_gradient),
        (6, model_test_null),
        (7, theta_tests_null),
        (8, asymptotic_variance),
        (9, figure1),
        (10, sample_size_round_trip),
        (11, cli_determinism),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let v = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {id} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
