//! Model test, simple θ test and ratio test on one sample, under the null
//! and under an alternative.

use phidual::divergence::Divergence;
use phidual::inference::{test_model, test_theta_composite, test_theta_simple, TestReport};
use phidual::model::{builtin_model, ModelOptions, WeightedSample};
use phidual::simulation::{replicate_rng, Generator};

fn show(label: &str, r: &TestReport) {
    println!(
        "{label:<22} stat {:>9.4}  df {}  p {:.4}  {:?}",
        r.statistic, r.df, r.p_value, r.decision
    );
}

fn main() -> phidual::Result<()> {
    let model = builtin_model("mean-variance", &ModelOptions::default())?;
    let f = Divergence::ModifiedKl;
    for (name, gen) in [
        ("U[-1, 1]", Generator::Uniform { lo: -1.0, hi: 1.0 }),
        ("U[-1, 2]", Generator::Uniform { lo: -1.0, hi: 2.0 }),
    ] {
        let mut rng = replicate_rng(7, 0, 0);
        let sample = WeightedSample::from_scalars(&gen.draw(200, &mut rng)?);
        println!("data from {name}, n = 200");
        show("  model", &test_model(f, &model, &sample, 0.05)?);
        show(
            "  theta = 1/3 (simple)",
            &test_theta_simple(f, &model, &sample, &[1.0 / 3.0], 0.05)?,
        );
        show(
            "  theta = 1/3 (ratio)",
            &test_theta_composite(f, &model, &sample, &[1.0 / 3.0], 0.05)?,
        );
    }
    Ok(())
}
