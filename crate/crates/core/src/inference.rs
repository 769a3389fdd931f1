//! Tests built on divergence estimates, confidence regions, and the normal
//! approximation of power under alternatives.
//!
//! All statistics use `n` = number of support points of the sample, so a
//! sample with uniform weights `1/n` gives `2n·D̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{chi2_quantile, chi2_sf, normal_cdf, normal_quantile};
use crate::divergence::{Divergence, GridSpec};
use crate::dual::DualStatus;
use crate::error::{Error, Result};
use crate::estimator::{estimate, profile_objective, sigma2, EstimateOptions, EstimationResult};
use crate::model::{MomentModel, ParamBox, WeightedSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    ModelTest,
    SimpleThetaTest,
    CompositeThetaTest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Reject,
    Accept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub family: Divergence,
    pub n: usize,
    /// `2n·D̂` or `2n·Sₙ`; `+∞` (serialized as `null`) when the constraint set
    /// is out of reach.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// Empirical variance of `m(Xᵢ, θ, t̂)`, the plug-in σ̂² for power work.
    pub variance_sigma2: Option<f64>,
    /// Hypothesized θ for the θ tests, θ̂ for the model test.
    pub theta: Vec<f64>,
    /// Set when the inner dual problem was unbounded or ended on the edge of
    /// its domain. Such tests are rejections.
    pub boundary: bool,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn rejects(&self) -> bool {
        self.decision == Decision::Reject
    }

    fn build(
        kind: TestKind,
        family: Divergence,
        n: usize,
        statistic: f64,
        df: usize,
        alpha: f64,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let critical_value = critical_value(alpha, df)?;
        let p_value = if statistic.is_finite() {
            chi2_sf(statistic.max(0.0), df)
        } else {
            0.0
        };
        let decision = if statistic > critical_value {
            Decision::Reject
        } else {
            Decision::Accept
        };
        Ok(TestReport {
            kind,
            family,
            n,
            statistic,
            df,
            p_value,
            critical_value,
            alpha,
            decision,
            variance_sigma2: None,
            theta,
            boundary: false,
            notes: Vec::new(),
        })
    }

    fn boundary_rejection(mut self, note: String) -> Self {
        self.statistic = f64::INFINITY;
        self.p_value = 0.0;
        self.decision = Decision::Reject;
        self.boundary = true;
        self.notes.push(note);
        self
    }
}

/// `q₁₋α` of χ²(df).
pub fn critical_value(alpha: f64, df: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("level {alpha} outside (0, 1)")));
    }
    chi2_quantile(1.0 - alpha, df)
}

/// Goodness-of-fit test of the whole model: `2n·D̂(M, Pₙ)` against χ²(l − d).
pub fn test_model(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    alpha: f64,
) -> Result<TestReport> {
    test_model_with(family, model, sample, alpha, &EstimateOptions::default())
}

pub fn test_model_with(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    alpha: f64,
    options: &EstimateOptions,
) -> Result<TestReport> {
    let dims = model.dims();
    if dims.moments == dims.params {
        return Err(Error::NotApplicable(
            "the model test needs more moment conditions than parameters".into(),
        ));
    }
    let df = dims.moments - dims.params;
    match estimate(family, model, sample, options) {
        Ok(est) => model_test_from_estimate(&est, alpha, df),
        Err(Error::EstimationFailed { reason, .. }) => {
            let report = TestReport::build(
                TestKind::ModelTest,
                family,
                sample.len(),
                f64::INFINITY,
                df,
                alpha,
                Vec::new(),
            )?;
            Ok(report.boundary_rejection(format!("estimation failed: {reason}")))
        }
        Err(e) => Err(e),
    }
}

/// Model test from an existing fit, with `df = l − d`.
pub fn model_test_from_estimate(
    est: &EstimationResult,
    alpha: f64,
    df: usize,
) -> Result<TestReport> {
    let stat = 2.0 * est.n as f64 * est.divergence_hat;
    let mut report = TestReport::build(
        TestKind::ModelTest,
        est.family,
        est.n,
        stat,
        df,
        alpha,
        est.theta_hat.clone(),
    )?;
    report.variance_sigma2 = Some(est.sigma2_hat);
    if est.diagnostics.inner_status != DualStatus::Converged {
        report = report.boundary_rejection(format!(
            "inner dual at θ̂ ended with status {}",
            est.diagnostics.inner_status
        ));
    }
    Ok(report)
}

/// Test of `H₀: P₀ ∈ M_θ` for a fixed θ: `2n·D̂(M_θ, Pₙ)` against χ²(l).
pub fn test_theta_simple(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    let df = model.dims().moments;
    let (value, sol) = profile_objective(family, model, sample, theta)?;
    let n = sample.len();
    match sol.status {
        DualStatus::Converged => {
            let mut report = TestReport::build(
                TestKind::SimpleThetaTest,
                family,
                n,
                2.0 * n as f64 * value,
                df,
                alpha,
                theta.to_vec(),
            )?;
            report.variance_sigma2 = Some(sigma2(family, model, sample, theta, &sol.t));
            Ok(report)
        }
        DualStatus::Unbounded | DualStatus::ConvergedBoundary | DualStatus::Infeasible => {
            let report = TestReport::build(
                TestKind::SimpleThetaTest,
                family,
                n,
                f64::INFINITY,
                df,
                alpha,
                theta.to_vec(),
            )?;
            Ok(report.boundary_rejection(format!(
                "inner dual at θ ended with status {}: no measure in M_θ within finite divergence",
                sol.status
            )))
        }
        DualStatus::MaxIterations => Err(Error::InnerNotConverged {
            theta: theta.to_vec(),
            status: sol.status.to_string(),
        }),
    }
}

/// Ratio test of `H₀: θ₀ = θ`: `2n[D̂(M_θ) − inf_θ' D̂(M_θ')]` against χ²(d).
pub fn test_theta_composite(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    test_theta_composite_with(
        family,
        model,
        sample,
        theta,
        alpha,
        &EstimateOptions::default(),
    )
}

pub fn test_theta_composite_with(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    alpha: f64,
    options: &EstimateOptions,
) -> Result<TestReport> {
    model.check_theta(theta)?;
    let mut opts = options.clone();
    // the hypothesized value is a start, so the minimum cannot exceed it
    if opts.initial.is_none() {
        opts.initial = Some(theta.to_vec());
    }
    let est = estimate(family, model, sample, &opts)?;
    ratio_test_from_estimate(family, model, sample, theta, alpha, &est)
}

/// Ratio test against an existing unrestricted fit.
pub fn ratio_test_from_estimate(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    theta: &[f64],
    alpha: f64,
    est: &EstimationResult,
) -> Result<TestReport> {
    let df = model.dims().params;
    let simple = test_theta_simple(family, model, sample, theta, alpha)?;
    let n = sample.len();
    let report = TestReport::build(
        TestKind::CompositeThetaTest,
        family,
        n,
        0.0,
        df,
        alpha,
        theta.to_vec(),
    )?;
    if simple.boundary {
        let note = simple.notes.join("; ");
        return Ok(report.boundary_rejection(note));
    }
    let raw = simple.statistic - 2.0 * n as f64 * est.divergence_hat;
    let mut report = TestReport::build(
        TestKind::CompositeThetaTest,
        family,
        n,
        raw.max(0.0),
        df,
        alpha,
        theta.to_vec(),
    )?;
    if raw < -1e-8 * (1.0 + simple.statistic) {
        report.notes.push(format!(
            "profile at θ lies {:.3e} below the fitted minimum",
            -raw
        ));
    }
    report.variance_sigma2 = simple.variance_sigma2;
    Ok(report)
}

/// Per-coordinate grid for confidence regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub axes: Vec<GridSpec>,
}

impl RegionGrid {
    pub fn new(axes: Vec<GridSpec>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("region grid needs at least one axis"));
        }
        for a in &axes {
            if a.points < 2 || !(a.lo < a.hi) {
                return Err(Error::invalid(format!(
                    "grid axis needs lo < hi and at least 2 points, got {}:{}:{}",
                    a.lo, a.hi, a.points
                )));
            }
        }
        Ok(RegionGrid { axes })
    }

    fn axis_values(spec: &GridSpec) -> Vec<f64> {
        let step = (spec.hi - spec.lo) / (spec.points - 1) as f64;
        (0..spec.points)
            .map(|i| spec.lo + step * i as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMethod {
    /// Full grid scan of `2nSₙ(θ)` against χ²(d), for d ≤ 2.
    Grid,
    /// One interval per coordinate, profiling out the others, against χ²(1).
    ProfileIntervals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub family: Divergence,
    pub method: RegionMethod,
    pub alpha: f64,
    pub df: usize,
    pub critical_value: f64,
    pub theta_hat: Vec<f64>,
    /// Grid points inside the region (grid method).
    pub points: Vec<Vec<f64>>,
    /// Per-coordinate `[min, max]` of the accepted points.
    pub bounds: Vec<Option<(f64, f64)>>,
    /// For d = 1, or per coordinate with profiling: maximal runs of accepted
    /// grid values.
    pub intervals: Vec<Vec<(f64, f64)>>,
    pub empty: bool,
    pub warnings: Vec<String>,
}

/// `{θ ∈ grid : 2nSₙ(θ) ≤ q₁₋α(d)}` for d ≤ 2, per-coordinate profile
/// intervals otherwise.
pub fn confidence_region(
    family: Divergence,
    model: &MomentModel,
    sample: &WeightedSample,
    alpha: f64,
    grid: &RegionGrid,
    options: &EstimateOptions,
) -> Result<ConfidenceRegion> {
    let d = model.dims().params;
    if grid.axes.len() != d {
        return Err(Error::Dimension(format!(
            "region grid has {} axes, θ has dimension {d}",
            grid.axes.len()
        )));
    }
    let est = estimate(family, model, sample, options)?;
    let n2 = 2.0 * sample.len() as f64;
    let space = model.theta_space();

    if d <= 2 {
        let q = critical_value(alpha, d)?;
        let axes: Vec<Vec<f64>> = grid.axes.iter().map(RegionGrid::axis_values).collect();
        let mut pts: Vec<Vec<f64>> = axes[0].iter().map(|v| vec![*v]).collect();
        for axis in &axes[1..] {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        let accepted: Vec<bool> = pts
            .par_iter()
            .map(|p| {
                if !space.contains(p) {
                    return false;
                }
                match profile_objective(family, model, sample, p) {
                    Ok((v, sol)) if sol.status.is_converged() => n2 * (v - est.divergence_hat) <= q,
                    _ => false,
                }
            })
            .collect();
        let points: Vec<Vec<f64>> = pts
            .iter()
            .zip(&accepted)
            .filter(|(_, a)| **a)
            .map(|(p, _)| p.clone())
            .collect();
        let intervals = if d == 1 {
            vec![runs(&axes[0], &accepted)]
        } else {
            Vec::new()
        };
        let bounds = (0..d)
            .map(|k| bounds_of(points.iter().map(|p| p[k])))
            .collect();
        let empty = points.is_empty();
        let mut warnings = Vec::new();
        if empty {
            warnings.push("no grid point lies in the confidence region".into());
        }
        return Ok(ConfidenceRegion {
            family,
            method: RegionMethod::Grid,
            alpha,
            df: d,
            critical_value: q,
            theta_hat: est.theta_hat,
            points,
            bounds,
            intervals,
            empty,
            warnings,
        });
    }

    let q = critical_value(alpha, 1)?;
    let mut intervals = Vec::with_capacity(d);
    let mut bounds = Vec::with_capacity(d);
    for k in 0..d {
        let values = RegionGrid::axis_values(&grid.axes[k]);
        let accepted: Vec<bool> = values
            .par_iter()
            .map(|v| {
                if *v < space.lo[k] || *v > space.hi[k] {
                    return false;
                }
                let mut lo = space.lo.clone();
                let mut hi = space.hi.clone();
                lo[k] = *v;
                hi[k] = *v;
                let Ok(restricted) =
                    ParamBox::new(lo, hi).and_then(|b| model.clone().with_theta_space(b))
                else {
                    return false;
                };
                let mut opts = options.clone();
                let mut init = est.theta_hat.clone();
                init[k] = *v;
                opts.initial = Some(init);
                match estimate(family, &restricted, sample, &opts) {
                    Ok(r) => n2 * (r.divergence_hat - est.divergence_hat) <= q,
                    Err(_) => false,
                }
            })
            .collect();
        let accepted_values = values
            .iter()
            .zip(&accepted)
            .filter(|(_, a)| **a)
            .map(|(v, _)| *v);
        bounds.push(bounds_of(accepted_values));
        intervals.push(runs(&values, &accepted));
    }
    let empty = bounds.iter().any(Option::is_none);
    let mut warnings = Vec::new();
    if empty {
        warnings.push("some coordinate has no accepted grid value".into());
    }
    Ok(ConfidenceRegion {
        family,
        method: RegionMethod::ProfileIntervals,
        alpha,
        df: 1,
        critical_value: q,
        theta_hat: est.theta_hat,
        points: Vec::new(),
        bounds,
        intervals,
        empty,
        warnings,
    })
}

fn bounds_of(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn runs(values: &[f64], accepted: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &a) in accepted.iter().enumerate() {
        match (a, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((values[s], values[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((values[s], values[values.len() - 1]));
    }
    out
}

/// Normal approximation of the power at an alternative with divergence `D`
/// and standard deviation `σ` of `m`: `1 − F_N((√n/σ)(q₁₋α/(2n) − D))`.
pub fn power_approx(n: u64, alpha: f64, df: usize, divergence: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("σ must be positive, got {sigma}")));
    }
    if !(divergence >= 0.0) {
        return Err(Error::invalid(format!(
            "divergence must be nonnegative, got {divergence}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let q = critical_value(alpha, df)?;
    let n = n as f64;
    Ok(1.0 - normal_cdf(n.sqrt() / sigma * (q / (2.0 * n) - divergence)))
}

/// Smallest `n` whose approximate power reaches `β`: `⌊n₀⌋ + 1` where `n₀`
/// solves the power equation,
///
/// ```text
/// n₀ = ((a + b) − sign(z)·√(a(a + 2b))) / (2D²),  z = F_N⁻¹(1 − β),
/// a = σ²z²,  b = q₁₋α·D.
/// ```
pub fn sample_size(beta: f64, alpha: f64, df: usize, divergence: f64, sigma: f64) -> Result<u64> {
    if !(divergence > 0.0) {
        return Err(Error::invalid(
            "the divergence must be positive: no finite n has power against a null point",
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("σ must be positive, got {sigma}")));
    }
    let z = normal_quantile(1.0 - beta)
        .map_err(|_| Error::invalid(format!("target power {beta} outside (0, 1)")))?;
    let q = critical_value(alpha, df)?;
    let a = sigma * sigma * z * z;
    let b = q * divergence;
    let root = (a * (a + 2.0 * b)).sqrt();
    let n0 = ((a + b) - z.signum() * root) / (2.0 * divergence * divergence);
    if !n0.is_finite() || n0 >= u64::MAX as f64 {
        return Err(Error::invalid("required sample size overflows"));
    }
    Ok(n0.floor() as u64 + 1)
}
