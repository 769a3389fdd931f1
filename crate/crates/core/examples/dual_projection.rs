//! The inner problem on a two-point sample: the χ² projection of the
//! empirical measure of {0, 1} onto the measures with mean 1.

use phidual::divergence::Divergence;
use phidual::dual::{chi2_closed_form, el_reduced_solve, solve_inner};
use phidual::model::{builtin_model, ModelOptions, WeightedSample};

fn main() -> phidual::Result<()> {
    let model = builtin_model("mean", &ModelOptions::default())?;
    let sample = WeightedSample::from_scalars(&[0.0, 1.0]);

    let sol = solve_inner(Divergence::Chi2, &model, &sample, &[1.0], None)?;
    println!(
        "Newton:      t = {:?}, D = {}, Q = {:?}",
        sol.t, sol.objective, sol.weights
    );
    let exact = chi2_closed_form(&model, &sample, &[1.0])?;
    println!("closed form: t = {:?}, D = {}", exact.t, exact.objective);

    // θ = 1 is on the edge of the convex hull, so no probability measure
    // supported on the sample has mean 1 and the EL dual is unbounded
    let el = solve_inner(Divergence::ModifiedKl, &model, &sample, &[1.0], None)?;
    println!("EL at θ = 1:   {}", el.status);

    let sample = WeightedSample::from_scalars(&[0.0, 1.0, 2.0]);
    let full = solve_inner(Divergence::ModifiedKl, &model, &sample, &[0.5], None)?;
    let reduced = el_reduced_solve(&model, &sample, &[0.5])?;
    println!(
        "EL at θ = 0.5: full t = {:?}, reduced t = {:?}",
        full.t, reduced.t
    );
    println!("               weights = {:?}", full.weights);
    Ok(())
}
