//! A user-defined model that is nonlinear in θ: an exponential law with rate
//! θ identified by its first two moments, `E[X] = 1/θ`, `E[X²] = 2/θ²`.

use nalgebra::DMatrix;
use phidual::divergence::Divergence;
use phidual::estimator::{estimate, EstimateOptions};
use phidual::model::{Dims, MomentModel, ParamBox, WeightedSample};
use phidual::simulation::replicate_rng;
use rand_distr::{Distribution, Exp};

fn main() -> phidual::Result<()> {
    let model = MomentModel::new(
        "exponential-rate",
        Dims {
            data: 1,
            params: 1,
            moments: 2,
        },
        ParamBox::uniform(1, 0.05, 20.0)?,
        |x, th| vec![x[0] - 1.0 / th[0], x[0] * x[0] - 2.0 / (th[0] * th[0])],
        |_, th| DMatrix::from_column_slice(2, 1, &[1.0 / (th[0] * th[0]), 4.0 / th[0].powi(3)]),
    )?;

    let mut rng = replicate_rng(3, 0, 0);
    let law = Exp::new(2.5).expect("positive rate");
    let xs: Vec<f64> = (0..400).map(|_| law.sample(&mut rng)).collect();
    let sample = WeightedSample::from_scalars(&xs);

    for family in [Divergence::ModifiedKl, Divergence::Chi2] {
        let fit = estimate(family, &model, &sample, &EstimateOptions::default())?;
        println!(
            "{:>5}: rate {:.4} ± {:.4}, 2nD̂ = {:.3}",
            family.to_string(),
            fit.theta_hat[0],
            1.96 * fit.std_errors[0],
            2.0 * xs.len() as f64 * fit.divergence_hat
        );
        if let Some(w) = fit.w_matrix() {
            println!("       sandwich W is {}x{}", w.nrows(), w.ncols());
        }
    }
    Ok(())
}
