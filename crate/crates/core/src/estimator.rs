//! Outer problem: minimize the profile `θ ↦ sup_t Pₙm(θ, t)` over the
//! parameter box.
//!
//! The profile is minimized by a projected BFGS iteration whose gradient
//! comes from the envelope theorem: with `t̂(θ)` fixed, the derivative of the
//! dual criterion in θ is `−Σ wᵢ ψ′(uᵢ) Jᵢᵀ t₁:l`. Several starts are run and
//! the best one is kept.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::dual::{chi2_closed_form, solve_inner_with, DualOptions, DualSolution, DualStatus};
use crate::error::{Error, Result};
use crate::model::{MomentModel, WeightedSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Total number of outer starts, the χ² start included.
    pub starts: usize,
    /// Seed for the Latin-hypercube starts.
    pub seed: u64,
    pub max_iter: usize,
    /// Converged when the projected gradient satisfies `‖·‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Optional user start, tried before the Latin-hypercube points.
    pub initial: Option<Vec<f64>>,
    pub dual: DualOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            starts: 5,
            seed: 0x5EED,
            max_iter: 200,
            grad_tol: 1e-8,
            initial: None,
            dual: DualOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartOrigin {
    Chi2,
    User,
    LatinHypercube,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterStatus {
    Converged,
    /// The line search could not decrease the profile further while the
    /// projected gradient was still above tolerance.
    Stalled,
    MaxIterations,
    /// The inner problem was unbounded or failed at the starting point.
    Infeasible,
}

/// Outcome of one outer start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub origin: StartOrigin,
    pub start: Vec<f64>,
    pub status: OuterStatus,
    pub theta: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub iterations: usize,
    /// Profile evaluations whose inner problem was unbounded or failed.
    pub infeasible_evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationDiagnostics {
    pub outer_iterations: usize,
    pub outer_status: OuterStatus,
    pub projected_gradient: f64,
    /// Index into `starts` of the selected run.
    pub selected_start: usize,
    pub starts: Vec<StartReport>,
    pub inner_status: DualStatus,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub family: Divergence,
    pub model: String,
    /// Number of support points of the input measure.
    pub n: usize,
    pub theta_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub divergence_hat: f64,
    /// `(Gᵀ Ω⁻¹ G)⁻¹`, row-major.
    pub v_hat: Vec<Vec<f64>>,
    /// `√(V̂ᵢᵢ / n)`.
    pub std_errors: Vec<f64>,
    pub sigma2_hat: f64,
    /// Plug-in sandwich `S⁻¹ M S⁻¹` for `(t̂, θ̂)`, row-major; `None` when `S`
    /// is singular.
    pub w_hat: Option<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    pub diagnostics: EstimationDiagnostics,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn v_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.v_hat)
    }

    pub fn w_matrix(&self) -> Option<DMatrix<f64>> {
        self.w_hat.as_deref().map(rows_to_matrix)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Profile value `sup_t Pₙm(θ, t)` and the inner solution.
///
/// When the inner problem is unbounded or does not converge, the value is
/// `+∞` and the status is carried by the returned solution. Only a θ outside
/// the parameter box or a malformed sample is an error.
pub fn profile_objective(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
) -> Result<(f64, DualSolution)> {
    profile_with(family, model, sample, theta, None, &DualOptions::default())
}

fn profile_with(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    init: Option<&[f64]>,
    opts: &DualOptions,
) -> Result<(f64, DualSolution)> {
    let sol = solve_inner_with(family, model, sample, theta, init, opts)?;
    let value = if sol.status.is_converged() {
        sol.objective
    } else {
        f64::INFINITY
    };
    Ok((value, sol))
}

/// Envelope gradient `Σ wᵢ ∂m/∂θ(Xᵢ, θ, t̂) = −Σ wᵢ ψ′(uᵢ) Jᵢᵀ t₁:l`.
pub fn profile_gradient(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    inner: &DualSolution,
) -> Result<Vec<f64>> {
    if !inner.status.is_converged() {
        return Err(Error::InnerNotConverged {
            theta: theta.to_vec(),
            status: inner.status.to_string(),
        });
    }
    model.check_theta(theta)?;
    let dims = model.dims();
    if inner.t.len() != dims.moments + 1 {
        return Err(Error::Dimension(format!(
            "dual vector has length {}, expected {}",
            inner.t.len(),
            dims.moments + 1
        )));
    }
    let t1 = DVector::from_column_slice(&inner.t[1..]);
    let mut grad = DVector::zeros(dims.params);
    for (x, w) in sample.iter() {
        if w == 0.0 {
            continue;
        }
        let g = model.g(x, theta);
        let u = inner.t[0] + g.iter().zip(&inner.t[1..]).map(|(a, b)| a * b).sum::<f64>();
        let (d1, _) = family.psi_derivs(u)?;
        grad -= model.jacobian(x, theta).transpose() * &t1 * (w * d1);
    }
    Ok(grad.iter().copied().collect())
}

/// Fits θ by minimizing the profile divergence over the parameter box.
pub fn estimate(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    options: &EstimateOptions,
) -> Result<EstimationResult> {
    let l = model.dims().moments;
    if sample.len() <= l {
        return Err(Error::invalid(format!(
            "need more observations ({}) than moment conditions ({l})",
            sample.len()
        )));
    }
    run(family, model, sample, options)
}

/// Pseudo-true quantities `(θ*, t*(θ*), D_φ(M, P₀), σ²(θ*))` for a
/// finite-support law `P₀`, typically a discretization of a continuous one.
/// The result fields carry the population meaning; `std_errors` is not
/// meaningful here.
pub fn population_estimate(
    family: Divergence,
    model: &MomentModel,
    p0: &WeightedSample,
    options: &EstimateOptions,
) -> Result<EstimationResult> {
    run(family, model, p0, options)
}

fn run(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    options: &EstimateOptions,
) -> Result<EstimationResult> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.dim() != model.dims().data {
        return Err(Error::Dimension(format!(
            "observations have dimension {}, model expects {}",
            sample.dim(),
            model.dims().data
        )));
    }
    if let Some(init) = &options.initial {
        model.check_theta(init)?;
    }

    let mut runs: Vec<(StartReport, Option<OuterRun>)> = Vec::new();
    for (origin, start) in starting_points(model, sample, options) {
        let outer = Outer {
            family,
            model,
            sample,
            opts: options,
        };
        let (report, result) = outer.minimize(origin, start);
        runs.push((report, result));
    }

    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, (_, r))| r.as_ref().map(|r| (i, r.value)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let starts: Vec<StartReport> = runs.iter().map(|(s, _)| s.clone()).collect();
    let Some((idx, _)) = best else {
        return Err(Error::EstimationFailed {
            reason: "the inner dual problem is unbounded or failed at every start".into(),
            starts,
        });
    };
    let chosen = runs[idx].1.clone().expect("selected run has a result");
    finish(family, model, sample, options, chosen, idx, starts)
}

#[derive(Clone, Debug)]
struct OuterRun {
    theta: Vec<f64>,
    value: f64,
    inner: DualSolution,
    iterations: usize,
    status: OuterStatus,
    projected_gradient: f64,
}

struct Outer<'a> {
    family: Divergence,
    model: &'a MomentModel,
    sample: &'a WeightedSample,
    opts: &'a EstimateOptions,
}

impl Outer<'_> {
    fn eval(&self, theta: &[f64], warm: Option<&[f64]>) -> Option<(f64, DualSolution)> {
        match profile_with(
            self.family,
            self.model,
            self.sample,
            theta,
            warm,
            &self.opts.dual,
        ) {
            Ok((v, sol)) if v.is_finite() => Some((v, sol)),
            _ => None,
        }
    }

    fn gradient(&self, theta: &[f64], sol: &DualSolution) -> Option<DVector<f64>> {
        profile_gradient(self.family, self.model, self.sample, theta, sol)
            .ok()
            .map(DVector::from_vec)
    }

    fn minimize(&self, origin: StartOrigin, start: Vec<f64>) -> (StartReport, Option<OuterRun>) {
        let mut report = StartReport {
            origin,
            start: start.clone(),
            status: OuterStatus::Infeasible,
            theta: None,
            objective: None,
            iterations: 0,
            infeasible_evaluations: 0,
        };
        let result = descend(self, start, &mut report.infeasible_evaluations);
        if let Some(r) = &result {
            report.status = r.status;
            report.theta = Some(r.theta.clone());
            report.objective = Some(r.value);
            report.iterations = r.iterations;
        }
        (report, result)
    }
}

/// Projected gradient `P(θ − ∇) − θ`.
fn projected_gradient(model: &MomentModel, theta: &[f64], grad: &DVector<f64>) -> DVector<f64> {
    let space = model.theta_space();
    DVector::from_fn(theta.len(), |k, _| {
        let moved = (theta[k] - grad[k]).clamp(space.lo[k], space.hi[k]);
        moved - theta[k]
    })
}

fn descend(outer: &Outer<'_>, start: Vec<f64>, infeasible: &mut usize) -> Option<OuterRun> {
    let model = outer.model;
    let space = model.theta_space();
    let d = start.len();
    let mut theta = start;
    space.project(&mut theta);

    let Some((mut value, mut sol)) = outer.eval(&theta, None) else {
        *infeasible += 1;
        return None;
    };
    let mut grad = outer.gradient(&theta, &sol)?;
    let mut h_inv = DMatrix::<f64>::identity(d, d);
    let mut first = true;
    let mut status = OuterStatus::MaxIterations;
    let mut iterations = 0;
    let mut pg = projected_gradient(model, &theta, &grad).amax();

    for iter in 0..outer.opts.max_iter {
        iterations = iter;
        if pg <= outer.opts.grad_tol {
            status = OuterStatus::Converged;
            break;
        }
        // free variables: not pinned at a bound by the gradient sign
        let free: Vec<bool> = (0..d)
            .map(|k| {
                let at_lo = theta[k] <= space.lo[k] && grad[k] > 0.0;
                let at_hi = theta[k] >= space.hi[k] && grad[k] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let mut g_free = grad.clone();
        for k in 0..d {
            if !free[k] {
                g_free[k] = 0.0;
            }
        }
        let mut dir = -(&h_inv * &g_free);
        for k in 0..d {
            if !free[k] {
                dir[k] = 0.0;
            }
        }
        if dir.dot(&grad) >= 0.0 {
            h_inv = DMatrix::identity(d, d);
            first = true;
            dir = -g_free;
        }
        if first {
            // first step moves at most a modest distance
            let scale = theta.iter().map(|v| v.abs()).fold(1.0, f64::max) * 0.1;
            let norm = dir.amax();
            if norm > scale {
                dir *= scale / norm;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(dir.iter())
                .map(|(a, b)| a + alpha * b)
                .collect();
            space.project(&mut cand);
            let step: f64 = cand
                .iter()
                .zip(&theta)
                .zip(grad.iter())
                .map(|((c, t), g)| (c - t) * g)
                .sum();
            match outer.eval(&cand, Some(&sol.t)) {
                Some((v, s)) if v <= value + 1e-4 * step => {
                    accepted = Some((cand, v, s));
                    break;
                }
                Some(_) => {}
                None => *infeasible += 1,
            }
            alpha *= 0.5;
        }
        let Some((next, next_value, next_sol)) = accepted else {
            status = if pg <= 1e-5 * (1.0 + value.abs()) {
                OuterStatus::Converged
            } else {
                OuterStatus::Stalled
            };
            break;
        };
        let Some(next_grad) = outer.gradient(&next, &next_sol) else {
            status = OuterStatus::Stalled;
            break;
        };
        let s = DVector::from_iterator(d, next.iter().zip(&theta).map(|(a, b)| a - b));
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            if first {
                h_inv = DMatrix::identity(d, d) * (sy / y.dot(&y));
                first = false;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(d, d);
            let a = &eye - &s * y.transpose() * rho;
            let b = &eye - &y * s.transpose() * rho;
            h_inv = &a * &h_inv * &b + &s * s.transpose() * rho;
        }
        let stalled = value - next_value <= 1e-15 * (1.0 + value.abs());
        theta = next;
        value = next_value;
        sol = next_sol;
        grad = next_grad;
        pg = projected_gradient(model, &theta, &grad).amax();
        iterations = iter + 1;
        if pg <= outer.opts.grad_tol {
            status = OuterStatus::Converged;
            break;
        }
        // the profile no longer changes beyond rounding
        if stalled && pg <= 1e-6 * (1.0 + value.abs()) {
            status = OuterStatus::Converged;
            break;
        }
    }

    Some(OuterRun {
        theta,
        value,
        inner: sol,
        iterations,
        status,
        projected_gradient: pg,
    })
}

/// χ² start first, then the user start, then Latin-hypercube points.
fn starting_points(
    model: &MomentModel,
    sample: &WeightedSample,
    options: &EstimateOptions,
) -> Vec<(StartOrigin, Vec<f64>)> {
    let total = options.starts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let lhs = latin_hypercube(model, total.saturating_sub(1).max(1) * 4, &mut rng);

    let mut out = Vec::with_capacity(total + 1);
    if let Some(theta) = chi2_start(model, sample, options, &lhs) {
        out.push((StartOrigin::Chi2, theta));
    }
    if let Some(init) = &options.initial {
        out.push((StartOrigin::User, init.clone()));
    }
    let remaining = total
        .saturating_sub(out.len())
        .max(usize::from(out.is_empty()));
    out.extend(
        lhs.into_iter()
            .take(remaining)
            .map(|p| (StartOrigin::LatinHypercube, p)),
    );
    out
}

/// Latin-hypercube sample of the parameter box.
fn latin_hypercube(model: &MomentModel, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let space = model.theta_space();
    let d = space.dim();
    let mut pts = vec![vec![0.0; d]; k];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (i, s) in strata.into_iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / k as f64;
            pts[i][j] = space.lo[j] + u * (space.hi[j] - space.lo[j]);
        }
    }
    pts
}

/// Minimizer of the χ² profile, started from the best of a set of candidates.
/// The χ² profile is available in closed form and is a quadratic in θ for
/// models affine in θ.
fn chi2_start(
    model: &MomentModel,
    sample: &WeightedSample,
    options: &EstimateOptions,
    candidates: &[Vec<f64>],
) -> Option<Vec<f64>> {
    let closed = |theta: &[f64]| {
        chi2_closed_form(model, sample, theta)
            .ok()
            .map(|s| s.objective)
            .filter(|v| v.is_finite())
    };
    let mut pool = vec![model.theta_space().center()];
    if let Some(init) = &options.initial {
        pool.push(init.clone());
    }
    pool.extend(candidates.iter().cloned());
    let (best, _) = pool
        .into_iter()
        .filter_map(|p| closed(&p).map(|v| (p, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;

    let chi2_opts = EstimateOptions {
        dual: options.dual.clone(),
        ..options.clone()
    };
    let outer = Outer {
        family: Divergence::Chi2,
        model,
        sample,
        opts: &chi2_opts,
    };
    let mut scratch = 0;
    descend(&outer, best.clone(), &mut scratch)
        .map(|r| r.theta)
        .or(Some(best))
}

fn finish(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    options: &EstimateOptions,
    chosen: OuterRun,
    selected: usize,
    starts: Vec<StartReport>,
) -> Result<EstimationResult> {
    let theta = chosen.theta;
    // fresh inner solve so the reported dual does not depend on the path
    let (value, inner) = profile_with(family, model, sample, &theta, None, &options.dual)?;
    let (value, inner) = if value.is_finite() {
        (value, inner)
    } else {
        (chosen.value, chosen.inner)
    };

    let mut warnings = Vec::new();
    if let Some(w) = family.misspecification_warning() {
        warnings.push(w);
    }
    if chosen.status != OuterStatus::Converged {
        warnings.push(format!(
            "outer minimization ended with status {:?}",
            chosen.status
        ));
    }
    if starts.iter().any(|s| s.status == OuterStatus::Infeasible) {
        warnings.push("some starts were skipped because the inner problem was unbounded".into());
    }

    let v = v_matrix(model, sample, &theta)?;
    let n = sample.len();
    let std_errors = (0..v.nrows())
        .map(|i| (v[(i, i)].max(0.0) / n as f64).sqrt())
        .collect();
    let sigma2 = sigma2(family, model, sample, &theta, &inner.t);
    let w = sandwich(family, model, sample, &theta, &inner.t);
    if w.is_none() {
        warnings.push("sandwich matrix S is singular; W is not reported".into());
    }

    Ok(EstimationResult {
        family,
        model: model.name().to_string(),
        n,
        theta_hat: theta,
        t_hat: inner.t.clone(),
        divergence_hat: value,
        v_hat: matrix_to_rows(&v),
        std_errors,
        sigma2_hat: sigma2,
        w_hat: w.as_ref().map(matrix_to_rows),
        weights: inner.weights.clone(),
        diagnostics: EstimationDiagnostics {
            outer_iterations: chosen.iterations,
            outer_status: chosen.status,
            projected_gradient: chosen.projected_gradient,
            selected_start: selected,
            starts,
            inner_status: inner.status,
            inner_iterations: inner.diagnostics.iterations,
        },
        warnings,
    })
}

/// `V = (Gᵀ Ω⁻¹ G)⁻¹` with `G = Σ wᵢ ∂g/∂θ` (l × d) and `Ω = Σ wᵢ g gᵀ`.
pub fn v_matrix(
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let dims = model.dims();
    let (l, d) = (dims.moments, dims.params);
    let mut jac = DMatrix::zeros(l, d);
    let mut omega = DMatrix::zeros(l, l);
    for (x, w) in sample.iter() {
        let g = DVector::from_vec(model.g(x, theta));
        omega += &g * g.transpose() * w;
        jac += model.jacobian(x, theta) * w;
    }
    let omega_inv = omega
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficient("Ω = E[g gᵀ] is singular".into()))?;
    let info = jac.transpose() * omega_inv * &jac;
    let v = info
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficient("Gᵀ Ω⁻¹ G is singular: rank(G) < d".into()))?;
    Ok(0.5 * (&v + v.transpose()))
}

fn dual_args(model: &MomentModel, x: &[f64], theta: &[f64], t: &[f64]) -> (Vec<f64>, f64) {
    let g = model.g(x, theta);
    let u = t[0] + g.iter().zip(&t[1..]).map(|(a, b)| a * b).sum::<f64>();
    (g, u)
}

/// Weighted variance of `m(Xᵢ, θ, t) = t₀ − ψ(tᵀḡᵢ)`.
pub fn sigma2(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    t: &[f64],
) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for (x, w) in sample.iter() {
        let (_, u) = dual_args(model, x, theta, t);
        let m = t[0] - family.psi(u);
        s1 += w * m;
        s2 += w * m * m;
    }
    (s2 - s1 * s1).max(0.0)
}

/// Plug-in `S⁻¹ M S⁻¹` over the stacked parameter `(t, θ)`, where `S` and `M`
/// are the weighted means of the Hessian and of the outer product of the
/// gradient of `m`.
pub fn sandwich(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    t: &[f64],
) -> Option<DMatrix<f64>> {
    let dims = model.dims();
    let (l, d) = (dims.moments, dims.params);
    let k = 1 + l;
    let p = k + d;
    let t1 = DVector::from_column_slice(&t[1..]);
    let mut s = DMatrix::zeros(p, p);
    let mut m = DMatrix::zeros(p, p);
    for (x, w) in sample.iter() {
        if w == 0.0 {
            continue;
        }
        let (g, u) = dual_args(model, x, theta, t);
        let (d1, d2) = family.psi_derivs(u).ok()?;
        let mut gbar = DVector::zeros(k);
        gbar[0] = 1.0;
        for j in 0..l {
            gbar[j + 1] = g[j];
        }
        let jac = model.jacobian(x, theta);
        let a = jac.transpose() * &t1;

        let mut grad = DVector::zeros(p);
        let mut dt = -&gbar * d1;
        dt[0] += 1.0;
        grad.rows_mut(0, k).copy_from(&dt);
        grad.rows_mut(k, d).copy_from(&(-&a * d1));
        m += &grad * grad.transpose() * w;

        let mut h = DMatrix::zeros(p, p);
        h.view_mut((0, 0), (k, k))
            .copy_from(&(-(&gbar * gbar.transpose()) * d2));
        let mut cross = -(&gbar * a.transpose()) * d2;
        for j in 0..l {
            for c in 0..d {
                cross[(j + 1, c)] -= d1 * jac[(j, c)];
            }
        }
        h.view_mut((0, k), (k, d)).copy_from(&cross);
        h.view_mut((k, 0), (d, k)).copy_from(&cross.transpose());
        let hess_g = model.contracted_hessian(x, theta, &t[1..]);
        h.view_mut((k, k), (d, d))
            .copy_from(&(-(&a * a.transpose()) * d2 - hess_g * d1));
        s += h * w;
    }
    let s_inv = s.try_inverse()?;
    let out = &s_inv * m * s_inv.transpose();
    out.iter()
        .all(|v| v.is_finite())
        .then(|| 0.5 * (&out + out.transpose()))
}
