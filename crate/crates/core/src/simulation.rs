//! Seeded Monte Carlo harness: data generators, empirical power of the model
//! test, its normal approximation, and the power-curve comparison on the
//! `U[−1, 1+ε]` alternatives.
//!
//! Every replicate draws from its own ChaCha8 stream, selected by the master
//! seed and the stream id `(cell << 32) | replicate`. Results therefore do not
//! depend on the number of threads or on scheduling.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::normal_quantile;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::estimator::{population_estimate, EstimateOptions, EstimationResult};
use crate::inference::{power_approx, test_model_with};
use crate::model::{builtin_model, discretize_uniform, ModelOptions, MomentModel, WeightedSample};

/// Scalar data-generating law. The alternative at level ε moves the upper
/// end of a uniform law, the mean of a normal law, or every atom by ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::Uniform { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(Error::invalid(format!(
                    "uniform law needs finite lo < hi, got [{lo}, {hi}]"
                )))
            }
            Generator::Normal { mean, sd }
                if !(*sd > 0.0) || !mean.is_finite() || !sd.is_finite() =>
            {
                Err(Error::invalid(format!(
                    "normal law needs sd > 0, got N({mean}, {sd}²)"
                )))
            }
            Generator::Atoms { points, weights } => {
                WeightedSample::weighted(points.iter().map(|p| vec![*p]).collect(), weights.clone())
                    .map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// The alternative at level ε.
    pub fn shifted(&self, epsilon: f64) -> Generator {
        match self {
            Generator::Uniform { lo, hi } => Generator::Uniform {
                lo: *lo,
                hi: hi + epsilon,
            },
            Generator::Normal { mean, sd } => Generator::Normal {
                mean: mean + epsilon,
                sd: *sd,
            },
            Generator::Atoms { points, weights } => Generator::Atoms {
                points: points.iter().map(|p| p + epsilon).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// `n` i.i.d. draws.
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self {
            Generator::Uniform { lo, hi } => {
                let u = Uniform::new(*lo, *hi).map_err(|e| Error::invalid(e.to_string()))?;
                (0..n).map(|_| u.sample(rng)).collect()
            }
            Generator::Normal { mean, sd } => {
                let d = Normal::new(*mean, *sd).map_err(|e| Error::invalid(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Generator::Atoms { points, weights } => {
                let u = Uniform::new(0.0, 1.0).expect("unit interval");
                let mut cum = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cum.push(acc);
                }
                (0..n)
                    .map(|_| {
                        let v = u.sample(rng) * acc;
                        let i = cum.partition_point(|c| *c <= v).min(points.len() - 1);
                        points[i]
                    })
                    .collect()
            }
        })
    }

    /// Finite-support stand-in for the law: midpoint atoms for a uniform
    /// law, quantiles at `(i + ½)/k` for a normal law, the atoms themselves
    /// otherwise.
    pub fn discretize(&self, atoms: usize) -> Result<WeightedSample> {
        self.validate()?;
        match self {
            Generator::Uniform { lo, hi } => discretize_uniform(*lo, *hi, atoms),
            Generator::Normal { mean, sd } => {
                if atoms == 0 {
                    return Err(Error::invalid("discretization needs at least one atom"));
                }
                let xs = (0..atoms)
                    .map(|i| {
                        let p = (i as f64 + 0.5) / atoms as f64;
                        normal_quantile(p).map(|z| mean + sd * z)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(WeightedSample::from_scalars(&xs))
            }
            Generator::Atoms { points, weights } => {
                WeightedSample::weighted(points.iter().map(|p| vec![*p]).collect(), weights.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationPlan {
    pub generator: Generator,
    pub model: String,
    pub family: Divergence,
    pub n_list: Vec<usize>,
    pub runs: usize,
    pub alpha: f64,
    pub epsilon_grid: Vec<f64>,
    pub seed: u64,
    /// Atoms used to discretize the alternatives for population quantities.
    pub atoms: usize,
    pub estimate: EstimateOptions,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            generator: Generator::Uniform { lo: -1.0, hi: 1.0 },
            model: "mean-variance".into(),
            family: Divergence::ModifiedKl,
            n_list: vec![50, 100, 200, 500],
            runs: 1000,
            alpha: 0.05,
            epsilon_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            seed: 42,
            atoms: 10_000,
            estimate: EstimateOptions::default(),
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.n_list.is_empty() || self.epsilon_grid.is_empty() {
            return Err(Error::invalid("n_list and epsilon_grid must be nonempty"));
        }
        if self.n_list.contains(&0) {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "level {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.epsilon_grid.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid(
                "epsilon values must be finite and nonnegative",
            ));
        }
        if self.runs > u32::MAX as usize || self.cells() > u32::MAX as usize {
            return Err(Error::invalid(
                "too many cells or replicates for the stream layout",
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MomentModel> {
        builtin_model(&self.model, &ModelOptions::default())
    }

    /// Number of `(ε, n)` cells; cell `c` is `(ε[c / |n_list|], n[c % |n_list|])`.
    pub fn cells(&self) -> usize {
        self.epsilon_grid.len() * self.n_list.len()
    }

    pub fn cell(&self, cell: usize) -> (f64, usize) {
        let k = self.n_list.len();
        (self.epsilon_grid[cell / k], self.n_list[cell % k])
    }
}

/// Random stream of one replicate.
pub fn replicate_rng(seed: u64, cell: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | replicate as u64);
    rng
}

/// Sample of one replicate of one cell.
pub fn generate(plan: &SimulationPlan, cell: usize, replicate: usize) -> Result<WeightedSample> {
    plan.validate()?;
    if cell >= plan.cells() {
        return Err(Error::invalid(format!(
            "cell {cell} out of range ({} cells)",
            plan.cells()
        )));
    }
    let (eps, n) = plan.cell(cell);
    let mut rng = replicate_rng(plan.seed, cell, replicate);
    let xs = plan.generator.shifted(eps).draw(n, &mut rng)?;
    Ok(WeightedSample::from_scalars(&xs))
}

/// Applies `f` to every replicate of `cell` in parallel and returns the
/// results in replicate order.
pub fn map_replicates<T, F>(plan: &SimulationPlan, cell: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &WeightedSample) -> T + Sync,
{
    plan.validate()?;
    (0..plan.runs)
        .into_par_iter()
        .map(|r| generate(plan, cell, r).map(|s| f(r, &s)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub epsilon: f64,
    pub n: usize,
    pub rejection_rate: f64,
    pub mc_stderr: f64,
    pub rejections: usize,
    /// Replicates whose fit failed or whose dual was unbounded; counted as
    /// rejections.
    pub failed: usize,
    pub runs: usize,
    /// More than 5% of the replicates failed.
    pub unreliable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Accept,
    Reject,
    Failed,
}

/// Monte Carlo rejection rate of the model test for every `(ε, n)` cell.
pub fn mc_power(plan: &SimulationPlan) -> Result<Vec<PowerCell>> {
    plan.validate()?;
    let model = plan.model()?;
    let family = plan.family;
    let per_cell = plan.runs;
    let outcomes: Vec<Outcome> = (0..plan.cells() * per_cell)
        .into_par_iter()
        .map(|job| {
            let (cell, r) = (job / per_cell, job % per_cell);
            let sample = generate(plan, cell, r)?;
            Ok(
                match test_model_with(family, &model, &sample, plan.alpha, &plan.estimate) {
                    Ok(rep) if rep.boundary => Outcome::Failed,
                    Ok(rep) if rep.rejects() => Outcome::Reject,
                    Ok(_) => Outcome::Accept,
                    Err(Error::NotApplicable(m)) => return Err(Error::NotApplicable(m)),
                    Err(_) => Outcome::Failed,
                },
            )
        })
        .collect::<Result<_>>()?;

    Ok(outcomes
        .chunks(per_cell)
        .enumerate()
        .map(|(cell, chunk)| {
            let (epsilon, n) = plan.cell(cell);
            let failed = chunk.iter().filter(|o| **o == Outcome::Failed).count();
            let rejections = chunk.iter().filter(|o| **o != Outcome::Accept).count();
            let p = rejections as f64 / per_cell as f64;
            PowerCell {
                epsilon,
                n,
                rejection_rate: p,
                mc_stderr: (p * (1.0 - p) / per_cell as f64).sqrt(),
                rejections,
                failed,
                runs: per_cell,
                unreliable: failed as f64 > 0.05 * per_cell as f64,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxCell {
    pub epsilon: f64,
    pub n: usize,
    /// `None` when the population fit failed.
    pub approx_power: Option<f64>,
    /// `D_φ(M, P₀)` of the discretized alternative.
    pub divergence: Option<f64>,
    pub sigma: Option<f64>,
    pub theta_star: Option<Vec<f64>>,
}

/// Population fit of the discretized alternative at level ε.
pub fn population_at(plan: &SimulationPlan, epsilon: f64) -> Result<EstimationResult> {
    let model = plan.model()?;
    let p0 = plan.generator.shifted(epsilon).discretize(plan.atoms)?;
    population_estimate(plan.family, &model, &p0, &plan.estimate)
}

/// Normal approximation of the power of the model test for every cell.
/// At ε = 0 the divergence is zero and the level α is reported.
pub fn approx_power_curve(plan: &SimulationPlan) -> Result<Vec<ApproxCell>> {
    plan.validate()?;
    let model = plan.model()?;
    let dims = model.dims();
    if dims.moments == dims.params {
        return Err(Error::NotApplicable(
            "the model test needs more moment conditions than parameters".into(),
        ));
    }
    let df = dims.moments - dims.params;
    let fits: Vec<Option<EstimationResult>> = plan
        .epsilon_grid
        .par_iter()
        .map(|eps| {
            if *eps == 0.0 {
                None
            } else {
                population_at(plan, *eps).ok()
            }
        })
        .collect();

    let mut out = Vec::with_capacity(plan.cells());
    for (eps, fit) in plan.epsilon_grid.iter().zip(&fits) {
        for &n in &plan.n_list {
            let cell = if *eps == 0.0 {
                ApproxCell {
                    epsilon: *eps,
                    n,
                    approx_power: Some(plan.alpha),
                    divergence: Some(0.0),
                    sigma: None,
                    theta_star: None,
                }
            } else {
                let sigma = fit.as_ref().map(|f| f.sigma2_hat.sqrt());
                let power = match (fit, sigma) {
                    (Some(f), Some(s)) => {
                        power_approx(n as u64, plan.alpha, df, f.divergence_hat.max(0.0), s).ok()
                    }
                    _ => None,
                };
                ApproxCell {
                    epsilon: *eps,
                    n,
                    approx_power: power,
                    divergence: fit.as_ref().map(|f| f.divergence_hat),
                    sigma,
                    theta_star: fit.as_ref().map(|f| f.theta_hat.clone()),
                }
            };
            out.push(cell);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub n: usize,
    pub epsilon: f64,
    pub mc_power: f64,
    pub mc_stderr: f64,
    pub approx_power: Option<f64>,
}

/// Monte Carlo and approximate power side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerComparison {
    pub plan: SimulationPlan,
    pub rows: Vec<FigureRow>,
    pub mc: Vec<PowerCell>,
    pub approx: Vec<ApproxCell>,
}

impl PowerComparison {
    /// CSV with header `n,epsilon,mc_power,mc_stderr,approx_power`, rows
    /// ordered by `n` then ε, reals in shortest round-trip form, an empty
    /// field for an unavailable approximation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,epsilon,mc_power,mc_stderr,approx_power\n");
        for r in &self.rows {
            let approx = r.approx_power.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.n, r.epsilon, r.mc_power, r.mc_stderr, approx
            );
        }
        out
    }
}

/// Runs [`mc_power`] and [`approx_power_curve`] on the same plan.
pub fn power_comparison(plan: &SimulationPlan) -> Result<PowerComparison> {
    let mc = mc_power(plan)?;
    let approx = approx_power_curve(plan)?;
    let mut rows = Vec::with_capacity(mc.len());
    for ni in 0..plan.n_list.len() {
        for ei in 0..plan.epsilon_grid.len() {
            let c = ei * plan.n_list.len() + ni;
            rows.push(FigureRow {
                n: mc[c].n,
                epsilon: mc[c].epsilon,
                mc_power: mc[c].rejection_rate,
                mc_stderr: mc[c].mc_stderr,
                approx_power: approx[c].approx_power,
            });
        }
    }
    Ok(PowerComparison {
        plan: plan.clone(),
        rows,
        mc,
        approx,
    })
}

/// Power of the empirical likelihood model test against `U[−1, 1+ε]` for
/// the zero-mean, second-moment model, Monte Carlo versus approximation:
/// n ∈ {50, 100, 200, 500}, ε ∈ {0.1, …, 1.0}, 1000 runs per cell.
pub fn reproduce_figure1(seed: u64) -> Result<PowerComparison> {
    power_comparison(&SimulationPlan {
        seed,
        ..SimulationPlan::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> SimulationPlan {
        SimulationPlan {
            n_list: vec![30, 60],
            runs: 20,
            epsilon_grid: vec![0.0, 0.5, 1.0],
            atoms: 2000,
            ..SimulationPlan::default()
        }
    }

    #[test]
    fn generation_is_reproducible_and_separated() {
        let plan = SimulationPlan {
            n_list: vec![4],
            epsilon_grid: vec![0.0],
            ..SimulationPlan::default()
        };
        let a = generate(&plan, 0, 3).unwrap();
        let b = generate(&plan, 0, 3).unwrap();
        let c = generate(&plan, 0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|(x, _)| (-1.0..=1.0).contains(&x[0])));
    }

    #[test]
    fn shifted_uniform_mean() {
        let g = Generator::Uniform { lo: -1.0, hi: 1.0 }.shifted(0.5);
        let mut rng = replicate_rng(7, 0, 0);
        let xs = g.draw(100_000, &mut rng).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 0.25).abs() < 0.01, "{m}");
    }

    #[test]
    fn atoms_generator_draws_support_points() {
        let g = Generator::Atoms {
            points: vec![-1.0, 2.0],
            weights: vec![0.25, 0.75],
        };
        let mut rng = replicate_rng(1, 0, 0);
        let xs = g.draw(4000, &mut rng).unwrap();
        let frac = xs.iter().filter(|x| **x == 2.0).count() as f64 / 4000.0;
        assert!((frac - 0.75).abs() < 0.03);
        assert!(Generator::Normal {
            mean: 0.0,
            sd: -1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn comparison_shape_and_ranges() {
        let cmp = power_comparison(&small_plan()).unwrap();
        assert_eq!(cmp.rows.len(), 6);
        for r in &cmp.rows {
            assert!((0.0..=1.0).contains(&r.mc_power));
            let a = r.approx_power.unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
        let csv = cmp.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("n,epsilon,mc_power,mc_stderr,approx_power\n"));
        assert_eq!(cmp.approx[0].approx_power, Some(0.05));
    }

    #[test]
    fn output_independent_of_thread_count() {
        let plan = small_plan();
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| power_comparison(&plan).unwrap().to_csv())
        };
        assert_eq!(run(1), run(3));
    }
}
