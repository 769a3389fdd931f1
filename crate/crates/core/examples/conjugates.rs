//! Conjugates of the divergence families next to a brute-force
//! Fenchel–Legendre transform of φ.

use phidual::divergence::{numeric_conjugate, Divergence, GridSpec};

fn main() {
    let grid = GridSpec {
        lo: 0.0,
        hi: 50.0,
        points: 20_001,
    };
    let mut families = Divergence::NAMED.to_vec();
    families.push(Divergence::Power(1.5));
    families.push(Divergence::Power(-0.5));

    println!(
        "{:>10} {:>6} {:>14} {:>14} {:>10}",
        "family", "t", "psi(t)", "numeric", "psi'(t)"
    );
    for f in families {
        for t in [-1.0, -0.25, 0.0, 0.3] {
            if !f.psi_domain().contains_interior(t) {
                continue;
            }
            let (d1, _) = f.psi_derivs(t).expect("interior point");
            let lo = if f.phi_domain().lo.is_finite() {
                0.0
            } else {
                -50.0
            };
            let num = numeric_conjugate(f, t, GridSpec { lo, ..grid });
            println!(
                "{:>10} {:>6} {:>14.9} {:>14.9} {:>10.6}",
                f.to_string(),
                t,
                f.psi(t),
                num,
                d1
            );
        }
    }
}
