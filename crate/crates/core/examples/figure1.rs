//! Monte Carlo power of the empirical likelihood model test against
//! U[−1, 1+ε] next to its normal approximation.
//!
//! `cargo run --release --example figure1 -- [runs] [out.csv]`

use phidual::simulation::{power_comparison, SimulationPlan};

fn main() -> phidual::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = args.next();
    let plan = SimulationPlan {
        runs,
        ..SimulationPlan::default()
    };
    let cmp = power_comparison(&plan)?;
    let csv = cmp.to_csv();
    match out {
        Some(path) => std::fs::write(&path, &csv)?,
        None => print!("{csv}"),
    }
    let worst = cmp
        .rows
        .iter()
        .filter_map(|r| {
            r.approx_power
                .map(|a| (r.n, r.epsilon, (a - r.mc_power).abs()))
        })
        .fold((0, 0.0, 0.0), |acc, x| if x.2 > acc.2 { x } else { acc });
    eprintln!(
        "largest |approx - mc| = {:.3} at n = {}, eps = {}",
        worst.2, worst.0, worst.1
    );
    Ok(())
}
