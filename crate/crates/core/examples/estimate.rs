//! Fitting the second moment of a symmetric law from `E[X] = 0` and
//! `E[X² − θ] = 0` with several divergences.

use phidual::divergence::Divergence;
use phidual::estimator::{estimate, EstimateOptions};
use phidual::model::{builtin_model, ModelOptions, WeightedSample};
use phidual::simulation::{replicate_rng, Generator};

fn main() -> phidual::Result<()> {
    let model = builtin_model("mean-variance", &ModelOptions::default())?;
    let mut rng = replicate_rng(2024, 0, 0);
    let xs = Generator::Uniform { lo: -1.0, hi: 1.0 }.draw(500, &mut rng)?;
    let sample = WeightedSample::from_scalars(&xs);

    println!("true θ = 1/3, asymptotic variance 4/45 = {:.5}", 4.0 / 45.0);
    for family in [
        Divergence::ModifiedKl,
        Divergence::Kl,
        Divergence::Chi2,
        Divergence::Hellinger,
    ] {
        let fit = estimate(family, &model, &sample, &EstimateOptions::default())?;
        println!(
            "{:>10}: θ̂ = {:.5} (se {:.5}), D̂ = {:.3e}, V̂ = {:.5}, σ̂² = {:.3e}",
            family.to_string(),
            fit.theta_hat[0],
            fit.std_errors[0],
            fit.divergence_hat,
            fit.v_hat[0][0],
            fit.sigma2_hat
        );
    }
    Ok(())
}
