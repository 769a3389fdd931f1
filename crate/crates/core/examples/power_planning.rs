//! Planning a study: divergence and σ of the alternative U[−1, 1.5] from a
//! fine discretization, approximate power, and the sample size for 80%.

use phidual::divergence::Divergence;
use phidual::estimator::{population_estimate, EstimateOptions};
use phidual::inference::{power_approx, sample_size};
use phidual::model::{builtin_model, ModelOptions};
use phidual::simulation::Generator;

fn main() -> phidual::Result<()> {
    let model = builtin_model("mean-variance", &ModelOptions::default())?;
    let p0 = Generator::Uniform { lo: -1.0, hi: 1.5 }.discretize(10_000)?;
    let fit = population_estimate(
        Divergence::ModifiedKl,
        &model,
        &p0,
        &EstimateOptions::default(),
    )?;
    let (d, sigma) = (fit.divergence_hat, fit.sigma2_hat.sqrt());
    println!(
        "θ* = {:.5}, D = {:.5}, σ = {:.5}",
        fit.theta_hat[0], d, sigma
    );

    for n in [25, 50, 100, 200] {
        println!(
            "n = {n:>4}: approximate power {:.3}",
            power_approx(n, 0.05, 1, d, sigma)?
        );
    }
    for beta in [0.5, 0.8, 0.9, 0.99] {
        println!(
            "power {beta}: n = {}",
            sample_size(beta, 0.05, 1, d, sigma)?
        );
    }
    Ok(())
}
