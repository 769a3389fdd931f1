//! Inner problem: for fixed θ, maximize the empirical dual criterion
//!
//! ```text
//! Pₙm(θ, t) = Σᵢ wᵢ [ t₀ − ψ(tᵀḡ(Xᵢ, θ)) ],   t ∈ ℝ^{1+l}
//! ```
//!
//! over the strictly feasible set `a* < tᵀḡ(Xᵢ, θ) < b*`. The maximum equals
//! the divergence between the sample and the constraint set `{Q : ΣQ = 1,
//! ΣQ g = 0}`, and the maximizer gives the projection weights
//! `Qᵢ = wᵢ ψ′(t̂ᵀḡᵢ)`.
//!
//! The solver is a damped Newton ascent. Steps are halved until the new point
//! is strictly feasible (with a small absolute margin at finite endpoints) and
//! satisfies the Armijo condition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::model::{MomentModel, WeightedSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualStatus {
    Converged,
    /// The supremum is approached at the edge of the feasible set; excluded
    /// from inference.
    ConvergedBoundary,
    /// The dual criterion is unbounded above: the constraint set contains no
    /// measure with finite divergence (e.g. θ outside the convex hull for EL).
    Unbounded,
    /// No strictly feasible starting point.
    Infeasible,
    MaxIterations,
}

impl DualStatus {
    pub fn is_converged(self) -> bool {
        self == DualStatus::Converged
    }
}

impl std::fmt::Display for DualStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DualStatus::Converged => "converged",
            DualStatus::ConvergedBoundary => "converged-boundary",
            DualStatus::Unbounded => "unbounded",
            DualStatus::Infeasible => "infeasible",
            DualStatus::MaxIterations => "max-iterations",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Chi2,
    Zero,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    /// Total number of step halvings in the line search.
    pub halvings: usize,
    /// Largest ridge added to the negated Hessian (0 when none was needed).
    pub ridge: f64,
    pub start: StartKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    /// Dual vector, `t₀` first.
    pub t: Vec<f64>,
    /// `Pₙm(θ, t̂)`, the estimated divergence to the constraint set.
    pub objective: f64,
    /// Projection weights `Qᵢ`; may be negative for signed-measure families.
    pub weights: Vec<f64>,
    pub status: DualStatus,
    pub diagnostics: DualDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    /// Converged when `‖∇‖∞ ≤ tol · max(1, maxᵢⱼ |ḡᵢⱼ|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Absolute distance kept from finite endpoints of dom ψ.
    pub margin: f64,
    /// Objective values above this are declared unbounded.
    pub unbounded_objective: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            tol: 1e-9,
            max_iter: 200,
            margin: 1e-10,
            unbounded_objective: 1e12,
        }
    }
}

/// A smooth concave criterion on an open convex set.
trait ConcaveProblem {
    fn dim(&self) -> usize;
    /// `None` outside the (margin-shrunk) feasible set.
    fn value(&self, t: &DVector<f64>) -> Option<f64>;
    fn grad_hess(&self, t: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    /// Whether some constraint is active within `slack` at `t`.
    fn near_edge(&self, t: &DVector<f64>, slack: f64) -> bool;
    /// Magnitude of the gradient terms, used to scale the stopping test.
    fn scale(&self) -> f64;
}

struct Ascent {
    t: DVector<f64>,
    value: f64,
    status: DualStatus,
    diagnostics: DualDiagnostics,
}

/// Newton direction `(−H + ridge·I)⁻¹ ∇`, escalating the ridge until the
/// Cholesky factorization succeeds.
fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let neg = -hess;
    if let Some(ch) = neg.clone().cholesky() {
        let d = ch.solve(grad);
        if d.iter().all(|v| v.is_finite()) {
            return (d, 0.0);
        }
    }
    let k = grad.len();
    let trace = neg.trace().abs();
    let scale = if trace.is_finite() {
        trace.max(1e-300)
    } else {
        f64::MAX
    };
    let mut ridge = 1e-12 * scale;
    for _ in 0..18 {
        let m = &neg + DMatrix::identity(k, k) * ridge;
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return (d, ridge);
            }
        }
        ridge *= 10.0;
    }
    // steepest ascent as a last resort
    let d = grad / scale;
    if d.iter().all(|v| v.is_finite()) {
        (d, ridge)
    } else {
        (DVector::zeros(k), ridge)
    }
}

fn newton_ascent<P: ConcaveProblem>(
    problem: &P,
    init: DVector<f64>,
    start: StartKind,
    opts: &DualOptions,
) -> Ascent {
    let mut diag = DualDiagnostics {
        iterations: 0,
        grad_norm: f64::NAN,
        halvings: 0,
        ridge: 0.0,
        start,
    };
    let scale = problem.scale();
    let mut t = init;
    let Some(mut value) = problem.value(&t) else {
        return Ascent {
            t,
            value: f64::NEG_INFINITY,
            status: DualStatus::Infeasible,
            diagnostics: diag,
        };
    };
    // history of Newton direction norms for the divergence detector
    let mut growth_run = 0usize;
    let mut run_start_norm = 0.0;
    let mut prev_norm = f64::INFINITY;

    for iter in 0..=opts.max_iter {
        let (grad, hess) = problem.grad_hess(&t);
        let gnorm = grad.amax();
        diag.grad_norm = gnorm;
        diag.iterations = iter;
        if gnorm <= opts.tol * scale {
            return Ascent {
                t,
                value,
                status: DualStatus::Converged,
                diagnostics: diag,
            };
        }
        if iter == opts.max_iter {
            break;
        }
        let (dir, ridge) = newton_direction(&grad, &hess);
        diag.ridge = diag.ridge.max(ridge);
        let slope = grad.dot(&dir);
        // near the optimum the predicted gain drops below the rounding level
        // of the objective, and full Newton steps are taken on the gradient
        let quadratic = 0.5 * slope <= 1e-12 * (1.0 + value.abs());

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..64 {
            let cand = &t + &dir * alpha;
            if let Some(v) = problem.value(&cand) {
                let flat = quadratic && alpha == 1.0 && v >= value - 1e-13 * (1.0 + value.abs());
                if flat || v >= value + 1e-4 * alpha * slope {
                    accepted = Some((cand, v));
                    break;
                }
            }
            alpha *= 0.5;
            diag.halvings += 1;
        }
        let Some((next, next_value)) = accepted else {
            // no progress possible in floating point
            let status = if gnorm <= 1e-7 * scale {
                DualStatus::Converged
            } else if problem.near_edge(&t, 1e-6) {
                DualStatus::ConvergedBoundary
            } else {
                DualStatus::MaxIterations
            };
            return Ascent {
                t,
                value,
                status,
                diagnostics: diag,
            };
        };
        t = next;
        value = next_value;

        if value > opts.unbounded_objective {
            return Ascent {
                t,
                value,
                status: DualStatus::Unbounded,
                diagnostics: diag,
            };
        }
        // Newton directions that keep growing mean the iterates run off to
        // infinity along a direction of recession.
        let dnorm = dir.amax();
        if dnorm > prev_norm && alpha == 1.0 {
            if growth_run == 0 {
                run_start_norm = prev_norm;
            }
            growth_run += 1;
            if growth_run >= 5 && dnorm >= 10.0 * run_start_norm {
                diag.iterations = iter + 1;
                return Ascent {
                    t,
                    value,
                    status: DualStatus::Unbounded,
                    diagnostics: diag,
                };
            }
        } else {
            growth_run = 0;
        }
        prev_norm = dnorm;
    }
    Ascent {
        t,
        value,
        status: DualStatus::MaxIterations,
        diagnostics: diag,
    }
}

/// Full dual problem with precomputed augmented moments.
struct FullDual {
    family: Divergence,
    /// Rows `ḡ(Xᵢ, θ)` of the support points with positive weight.
    gbar: DMatrix<f64>,
    weights: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl FullDual {
    fn new(
        family: Divergence,
        model: &MomentModel,
        sample: &WeightedSample,
        theta: &[f64],
        margin: f64,
    ) -> Result<(Self, Vec<usize>)> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        model.check_theta(theta)?;
        let keep: Vec<usize> = (0..sample.len())
            .filter(|&i| sample.weights()[i] > 0.0)
            .collect();
        let k = 1 + model.dims().moments;
        let mut gbar = DMatrix::zeros(keep.len(), k);
        for (r, &i) in keep.iter().enumerate() {
            gbar[(r, 0)] = 1.0;
            for (j, v) in model.g(sample.point(i), theta).into_iter().enumerate() {
                gbar[(r, j + 1)] = v;
            }
        }
        let dom = family.psi_domain();
        let lo = if dom.lo.is_finite() {
            dom.lo + margin
        } else {
            f64::NEG_INFINITY
        };
        let hi = if dom.hi.is_finite() {
            dom.hi - margin
        } else {
            f64::INFINITY
        };
        let weights = keep.iter().map(|&i| sample.weights()[i]).collect();
        Ok((
            FullDual {
                family,
                gbar,
                weights,
                lo,
                hi,
            },
            keep,
        ))
    }

    fn args(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.gbar * t
    }
}

impl ConcaveProblem for FullDual {
    fn dim(&self) -> usize {
        self.gbar.ncols()
    }

    fn value(&self, t: &DVector<f64>) -> Option<f64> {
        let u = self.args(t);
        let mut acc = 0.0;
        for (ui, wi) in u.iter().zip(&self.weights) {
            if !(*ui >= self.lo && *ui <= self.hi) {
                return None;
            }
            let p = self.family.psi(*ui);
            if !p.is_finite() {
                return None;
            }
            acc += wi * p;
        }
        Some(t[0] - acc)
    }

    fn grad_hess(&self, t: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.dim();
        let u = self.args(t);
        let mut grad = DVector::zeros(k);
        grad[0] = 1.0;
        let mut hess = DMatrix::zeros(k, k);
        for (i, (ui, wi)) in u.iter().zip(&self.weights).enumerate() {
            let (d1, d2) = self.family.psi_derivs_unchecked(*ui);
            let row = self.gbar.row(i);
            for a in 0..k {
                grad[a] -= wi * d1 * row[a];
                let s = wi * d2 * row[a];
                for b in 0..=a {
                    hess[(a, b)] -= s * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        (grad, hess)
    }

    fn near_edge(&self, t: &DVector<f64>, slack: f64) -> bool {
        self.args(t)
            .iter()
            .any(|u| (self.hi - u) <= slack || (u - self.lo) <= slack)
    }

    fn scale(&self) -> f64 {
        self.gbar.amax().max(1.0)
    }
}

/// Reduced empirical likelihood problem `Σ wᵢ log(1 + λᵀgᵢ)`.
struct ReducedEl {
    g: DMatrix<f64>,
    weights: Vec<f64>,
    margin: f64,
}

impl ConcaveProblem for ReducedEl {
    fn dim(&self) -> usize {
        self.g.ncols()
    }

    fn value(&self, lambda: &DVector<f64>) -> Option<f64> {
        let s = &self.g * lambda;
        let mut acc = 0.0;
        for (si, wi) in s.iter().zip(&self.weights) {
            let a = 1.0 + si;
            if !(a >= self.margin) {
                return None;
            }
            acc += wi * a.ln();
        }
        Some(acc)
    }

    fn grad_hess(&self, lambda: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.dim();
        let s = &self.g * lambda;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (i, (si, wi)) in s.iter().zip(&self.weights).enumerate() {
            let r = 1.0 / (1.0 + si);
            let row = self.g.row(i);
            for a in 0..k {
                grad[a] += wi * r * row[a];
                for b in 0..k {
                    hess[(a, b)] -= wi * r * r * row[a] * row[b];
                }
            }
        }
        (grad, hess)
    }

    fn near_edge(&self, lambda: &DVector<f64>, slack: f64) -> bool {
        (&self.g * lambda)
            .iter()
            .any(|s| 1.0 + s - self.margin <= slack)
    }

    fn scale(&self) -> f64 {
        self.g.amax().max(1.0)
    }
}

/// `Σᵢ wᵢ [t₀ − ψ(tᵀḡ(Xᵢ, θ))]`, or `−∞` when some argument leaves dom ψ.
pub fn dual_objective(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    t: &[f64],
) -> Result<f64> {
    let (p, _) = FullDual::new(family, model, sample, theta, 0.0)?;
    check_len(t, p.dim())?;
    let u = p.args(&DVector::from_column_slice(t));
    let mut acc = 0.0;
    for (ui, wi) in u.iter().zip(&p.weights) {
        let v = family.psi(*ui);
        if !v.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        acc += wi * v;
    }
    Ok(t[0] - acc)
}

/// Gradient `e₀ − Σ wᵢ ψ′(uᵢ) ḡᵢ` and Hessian `−Σ wᵢ ψ″(uᵢ) ḡᵢ ḡᵢᵀ` of the dual
/// criterion at a strictly feasible `t`.
pub fn dual_grad_hess(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    t: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (p, _) = FullDual::new(family, model, sample, theta, 0.0)?;
    check_len(t, p.dim())?;
    let tv = DVector::from_column_slice(t);
    let dom = family.psi_domain();
    for u in p.args(&tv).iter() {
        if !dom.contains_interior(*u) {
            return Err(Error::Domain {
                what: "dual_grad_hess",
                value: *u,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
    }
    Ok(p.grad_hess(&tv))
}

fn check_len(t: &[f64], k: usize) -> Result<()> {
    if t.len() != k {
        return Err(Error::Dimension(format!(
            "dual vector has length {}, expected {k}",
            t.len()
        )));
    }
    Ok(())
}

fn solution_from(
    family: Divergence,
    problem: &FullDual,
    keep: &[usize],
    n: usize,
    ascent: Ascent,
) -> DualSolution {
    let mut weights = vec![0.0; n];
    if ascent.value.is_finite() {
        let u = problem.args(&ascent.t);
        for (r, &i) in keep.iter().enumerate() {
            weights[i] = problem.weights[r] * family.psi_derivs_unchecked(u[r]).0;
        }
    }
    DualSolution {
        t: ascent.t.iter().copied().collect(),
        objective: ascent.value,
        weights,
        status: ascent.status,
        diagnostics: ascent.diagnostics,
    }
}

/// Maximizes the dual criterion with default options.
pub fn solve_inner(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    init: Option<&[f64]>,
) -> Result<DualSolution> {
    solve_inner_with(family, model, sample, theta, init, &DualOptions::default())
}

/// Maximizes the dual criterion.
///
/// Without `init` the ascent starts from the χ² closed-form solution, shrunk
/// toward zero until strictly feasible, or from `t = 0` when the χ² system is
/// singular. A user-supplied `init` that is infeasible also falls back to the
/// χ² start.
pub fn solve_inner_with(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    init: Option<&[f64]>,
    opts: &DualOptions,
) -> Result<DualSolution> {
    let (problem, keep) = FullDual::new(family, model, sample, theta, opts.margin)?;
    let k = problem.dim();

    let mut start = None;
    if let Some(t) = init {
        check_len(t, k)?;
        let tv = DVector::from_column_slice(t);
        if problem.value(&tv).is_some() {
            start = Some((tv, StartKind::User));
        }
    }
    let (t0, kind) = match start {
        Some(s) => s,
        None => chi2_start(&problem),
    };
    let ascent = newton_ascent(&problem, t0, kind, opts);
    Ok(solution_from(family, &problem, &keep, sample.len(), ascent))
}

fn chi2_start(problem: &FullDual) -> (DVector<f64>, StartKind) {
    let k = problem.dim();
    if let Ok(mut t) = chi2_system(&problem.gbar, &problem.weights) {
        for _ in 0..60 {
            if problem.value(&t).is_some() {
                return (t, StartKind::Chi2);
            }
            t *= 0.5;
        }
    }
    (DVector::zeros(k), StartKind::Zero)
}

/// Solves `(Σ wᵢ ḡᵢḡᵢᵀ) t = e₀ − Σ wᵢ ḡᵢ`.
fn chi2_system(gbar: &DMatrix<f64>, weights: &[f64]) -> Result<DVector<f64>> {
    let k = gbar.ncols();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    rhs[0] = 1.0;
    for (i, w) in weights.iter().enumerate() {
        let row = gbar.row(i);
        for a in 0..k {
            rhs[a] -= w * row[a];
            for b in 0..k {
                gram[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let eig = SymmetricEigen::new(gram.clone());
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let emax = eig.eigenvalues.amax();
    if !(emin > 1e-12 * emax.max(f64::MIN_POSITIVE)) {
        let v = eig.eigenvectors.column(imin);
        let combo: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-8)
            .map(|(j, c)| {
                let name = if j == 0 {
                    "1".to_string()
                } else {
                    format!("g{j}")
                };
                format!("{c:+.6}*{name}")
            })
            .collect();
        return Err(Error::RankDeficient(format!(
            "Gram matrix of (1, g) is singular: {} vanishes on the sample",
            combo.join(" ")
        )));
    }
    gram.cholesky().map(|ch| ch.solve(&rhs)).ok_or_else(|| {
        Error::RankDeficient("Gram matrix of (1, g) is not positive definite".into())
    })
}

/// Exact dual solution for the χ² divergence, whose first-order system is linear.
pub fn chi2_closed_form(
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
) -> Result<DualSolution> {
    let family = Divergence::Chi2;
    let (problem, keep) = FullDual::new(family, model, sample, theta, 0.0)?;
    let t = chi2_system(&problem.gbar, &problem.weights)?;
    let value = problem.value(&t).unwrap_or(f64::NEG_INFINITY);
    let (grad, _) = problem.grad_hess(&t);
    let ascent = Ascent {
        t,
        value,
        status: DualStatus::Converged,
        diagnostics: DualDiagnostics {
            iterations: 0,
            grad_norm: grad.amax(),
            halvings: 0,
            ridge: 0.0,
            start: StartKind::Chi2,
        },
    };
    Ok(solution_from(family, &problem, &keep, sample.len(), ascent))
}

/// Empirical likelihood dual with `t₀` eliminated: maximizes
/// `Σ wᵢ log(1 + λᵀg(Xᵢ, θ))` over `λ`.
///
/// The result is reported in the full-problem convention, `t = (0, −λ)`, so
/// that it can be compared with [`solve_inner`] for the `KLm` family.
pub fn el_reduced_solve(
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
) -> Result<DualSolution> {
    el_reduced_solve_with(model, sample, theta, &DualOptions::default())
}

pub fn el_reduced_solve_with(
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    opts: &DualOptions,
) -> Result<DualSolution> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    model.check_theta(theta)?;
    let l = model.dims().moments;
    let keep: Vec<usize> = (0..sample.len())
        .filter(|&i| sample.weights()[i] > 0.0)
        .collect();
    let mut g = DMatrix::zeros(keep.len(), l);
    for (r, &i) in keep.iter().enumerate() {
        for (j, v) in model.g(sample.point(i), theta).into_iter().enumerate() {
            g[(r, j)] = v;
        }
    }
    let problem = ReducedEl {
        g,
        weights: keep.iter().map(|&i| sample.weights()[i]).collect(),
        margin: opts.margin,
    };
    let ascent = newton_ascent(&problem, DVector::zeros(l), StartKind::Zero, opts);
    let mut weights = vec![0.0; sample.len()];
    if ascent.value.is_finite() {
        let s = &problem.g * &ascent.t;
        for (r, &i) in keep.iter().enumerate() {
            weights[i] = problem.weights[r] / (1.0 + s[r]);
        }
    }
    let mut t = Vec::with_capacity(l + 1);
    t.push(0.0);
    t.extend(ascent.t.iter().map(|v| -v));
    Ok(DualSolution {
        t,
        objective: ascent.value,
        weights,
        status: ascent.status,
        diagnostics: ascent.diagnostics,
    })
}
