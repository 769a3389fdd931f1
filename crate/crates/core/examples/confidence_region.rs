//! Empirical likelihood confidence intervals for a second moment, and a
//! two-dimensional region for a bivariate mean.

use phidual::divergence::{Divergence, GridSpec};
use phidual::estimator::EstimateOptions;
use phidual::inference::{confidence_region, RegionGrid};
use phidual::model::{builtin_model, ModelOptions, WeightedSample};
use phidual::simulation::{replicate_rng, Generator};

fn main() -> phidual::Result<()> {
    let opts = EstimateOptions::default();
    let mut rng = replicate_rng(11, 0, 0);
    let xs = Generator::Uniform { lo: -1.0, hi: 1.0 }.draw(200, &mut rng)?;
    let sample = WeightedSample::from_scalars(&xs);
    let model = builtin_model("mean-variance", &ModelOptions::default())?;
    let grid = RegionGrid::new(vec![GridSpec {
        lo: 0.2,
        hi: 0.5,
        points: 301,
    }])?;
    for alpha in [0.10, 0.05, 0.01] {
        let r = confidence_region(Divergence::ModifiedKl, &model, &sample, alpha, &grid, &opts)?;
        let pieces: Vec<String> = r.intervals[0]
            .iter()
            .map(|(lo, hi)| format!("[{lo:.3}, {hi:.3}]"))
            .collect();
        println!(
            "{:.0}% interval for E[X²]: {}",
            100.0 * (1.0 - alpha),
            pieces.join(" ∪ ")
        );
    }

    let a = Generator::Normal { mean: 0.2, sd: 1.0 }.draw(100, &mut rng)?;
    let b = Generator::Normal {
        mean: -0.1,
        sd: 1.0,
    }
    .draw(100, &mut rng)?;
    let pts: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| vec![*x, *y]).collect();
    let sample = WeightedSample::uniform(pts)?;
    let model = builtin_model(
        "mean",
        &ModelOptions {
            data_dim: Some(2),
            theta_space: None,
        },
    )?;
    let axis = GridSpec {
        lo: -0.6,
        hi: 0.6,
        points: 49,
    };
    let grid = RegionGrid::new(vec![axis, axis])?;
    let r = confidence_region(Divergence::ModifiedKl, &model, &sample, 0.05, &grid, &opts)?;
    println!(
        "95% region for a bivariate mean: {} of {} grid points",
        r.points.len(),
        49 * 49
    );
    for (name, b) in ["first", "second"].iter().zip(&r.bounds) {
        if let Some((lo, hi)) = b {
            println!("  {name} coordinate within [{lo:.3}, {hi:.3}]");
        }
    }
    Ok(())
}
