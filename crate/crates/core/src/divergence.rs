//! Closed-form φ-divergence families and their convex conjugates.
//!
//! Every family is described by a strictly convex `φ` with `φ(1) = 0`, extended
//! by `+∞` outside its domain `(a, b)`, and by its Fenchel–Legendre conjugate
//! `ψ(t) = sup_x { t·x − φ(x) }` on `(a*, b*)`.
//!
//! | family      | φ(x)                       | dom φ     | dom ψ      | ψ(t)               |
//! |-------------|----------------------------|-----------|------------|--------------------|
//! | `KLm`       | −log x + x − 1             | ]0, ∞[    | ]−∞, 1[    | −log(1 − t)        |
//! | `KL`        | x log x − x + 1            | [0, ∞[    | ℝ          | eᵗ − 1             |
//! | `chi2m`     | ½ (x − 1)² / x             | ]0, ∞[    | ]−∞, ½]    | 1 − √(1 − 2t)      |
//! | `chi2`      | ½ (x − 1)²                 | ℝ         | ℝ          | ½ t² + t           |
//! | `hellinger` | 2 (√x − 1)²                | [0, ∞[    | ]−∞, 2[    | 2t / (2 − t)       |
//! | `power:γ`   | (x^γ − γx + γ − 1)/(γ(γ−1)) | see below | see below  | ((γ−1)t + 1)^{γ/(γ−1)}/γ − 1/γ |
//!
//! The power family reduces to `KLm`, `KL` and `chi2` at γ = 0, 1, 2 (the log
//! cases through their closed forms). For γ ≠ 2 the power function is set to
//! `+∞` on the negative half-line. When γ > 1 (γ ≠ 2) the conjugate is flat,
//! equal to `−1/γ`, for `t ≤ −1/(γ−1)`: those dual arguments correspond to
//! zero projection weight.
//!
//! Extended values are plain `f64::INFINITY`; no function here returns NaN for
//! a real input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A φ-divergence family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Divergence {
    /// Modified Kullback–Leibler; the empirical likelihood divergence.
    ModifiedKl,
    Kl,
    ModifiedChi2,
    Chi2,
    Hellinger,
    /// Cressie–Read power family with index γ.
    Power(f64),
}

/// Endpoints of an interval on the extended real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    const fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x > self.lo || (self.lo_closed && x == self.lo))
            && (x < self.hi || (self.hi_closed && x == self.hi))
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Uniform grid of `points` values from `lo` to `hi`, written `lo:hi:points`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Klm,
    Kl,
    Chi2m,
    Chi2,
    Hellinger,
    Gen(f64),
}

impl Divergence {
    pub const NAMED: [Divergence; 5] = [
        Divergence::ModifiedKl,
        Divergence::Kl,
        Divergence::ModifiedChi2,
        Divergence::Chi2,
        Divergence::Hellinger,
    ];

    fn kind(self) -> Kind {
        match self {
            Divergence::ModifiedKl => Kind::Klm,
            Divergence::Kl => Kind::Kl,
            Divergence::ModifiedChi2 => Kind::Chi2m,
            Divergence::Chi2 => Kind::Chi2,
            Divergence::Hellinger => Kind::Hellinger,
            Divergence::Power(g) if g == 0.0 => Kind::Klm,
            Divergence::Power(g) if g == 1.0 => Kind::Kl,
            Divergence::Power(g) if g == 2.0 => Kind::Chi2,
            Divergence::Power(g) => Kind::Gen(g),
        }
    }

    /// Power index γ of the family.
    pub fn gamma(self) -> f64 {
        match self {
            Divergence::ModifiedKl => 0.0,
            Divergence::Kl => 1.0,
            Divergence::ModifiedChi2 => -1.0,
            Divergence::Chi2 => 2.0,
            Divergence::Hellinger => 0.5,
            Divergence::Power(g) => g,
        }
    }

    /// Domain `(a, b)` of φ.
    pub fn phi_domain(self) -> Interval {
        let inf = f64::INFINITY;
        let half_closed = Interval {
            lo: 0.0,
            hi: inf,
            lo_closed: true,
            hi_closed: false,
        };
        match self.kind() {
            Kind::Klm | Kind::Chi2m => Interval::open(0.0, inf),
            Kind::Kl | Kind::Hellinger => half_closed,
            Kind::Chi2 => Interval::open(-inf, inf),
            Kind::Gen(g) if g < 0.0 => Interval::open(0.0, inf),
            Kind::Gen(_) => half_closed,
        }
    }

    /// Domain `(a*, b*)` of ψ.
    pub fn psi_domain(self) -> Interval {
        let inf = f64::INFINITY;
        match self.kind() {
            Kind::Klm => Interval::open(-inf, 1.0),
            Kind::Kl | Kind::Chi2 => Interval::open(-inf, inf),
            Kind::Chi2m => Interval {
                lo: -inf,
                hi: 0.5,
                lo_closed: false,
                hi_closed: true,
            },
            Kind::Hellinger => Interval::open(-inf, 2.0),
            Kind::Gen(g) if g > 1.0 => Interval::open(-inf, inf),
            Kind::Gen(g) => Interval {
                lo: -inf,
                hi: 1.0 / (1.0 - g),
                // closure value −1/γ is finite only for γ < 0
                lo_closed: false,
                hi_closed: g < 0.0,
            },
        }
    }

    /// φ(x), `+∞` outside the domain.
    pub fn phi(self, x: f64) -> f64 {
        if !self.phi_domain().contains(x) {
            return f64::INFINITY;
        }
        match self.kind() {
            Kind::Klm => -x.ln() + x - 1.0,
            Kind::Kl => {
                if x == 0.0 {
                    1.0
                } else {
                    x * x.ln() - x + 1.0
                }
            }
            Kind::Chi2m => 0.5 * (x - 1.0).powi(2) / x,
            Kind::Chi2 => 0.5 * (x - 1.0).powi(2),
            Kind::Hellinger => 2.0 * (x.sqrt() - 1.0).powi(2),
            Kind::Gen(g) => (x.powf(g) - g * x + g - 1.0) / (g * (g - 1.0)),
        }
    }

    /// (φ′(x), φ″(x)) on the interior of the domain.
    pub fn phi_derivs(self, x: f64) -> Result<(f64, f64)> {
        let dom = self.phi_domain();
        if !dom.contains_interior(x) {
            return Err(Error::Domain {
                what: "phi_derivs",
                value: x,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        Ok(match self.kind() {
            Kind::Klm => (1.0 - 1.0 / x, 1.0 / (x * x)),
            Kind::Kl => (x.ln(), 1.0 / x),
            Kind::Chi2m => (0.5 * (1.0 - 1.0 / (x * x)), 1.0 / (x * x * x)),
            Kind::Chi2 => (x - 1.0, 1.0),
            Kind::Hellinger => (2.0 - 2.0 / x.sqrt(), x.powf(-1.5)),
            Kind::Gen(g) => ((x.powf(g - 1.0) - 1.0) / (g - 1.0), x.powf(g - 2.0)),
        })
    }

    /// ψ(t), `+∞` outside the domain and the closure value at a closed endpoint.
    pub fn psi(self, t: f64) -> f64 {
        if !self.psi_domain().contains(t) {
            return f64::INFINITY;
        }
        match self.kind() {
            Kind::Klm => -(1.0 - t).ln(),
            Kind::Kl => t.exp_m1(),
            Kind::Chi2m => 1.0 - (1.0 - 2.0 * t).sqrt(),
            Kind::Chi2 => 0.5 * t * t + t,
            Kind::Hellinger => 2.0 * t / (2.0 - t),
            Kind::Gen(g) => {
                let base = (g - 1.0) * t + 1.0;
                if base <= 0.0 {
                    // flat part (γ > 1) or the closed endpoint (γ < 0)
                    -1.0 / g
                } else {
                    base.powf(g / (g - 1.0)) / g - 1.0 / g
                }
            }
        }
    }

    /// (ψ′(t), ψ″(t)) on the interior of the domain.
    ///
    /// ψ′ is the inverse of φ′, so `ψ′(t)` is the density of the projection
    /// with respect to the reference measure at dual argument `t`.
    pub fn psi_derivs(self, t: f64) -> Result<(f64, f64)> {
        let dom = self.psi_domain();
        if !dom.contains_interior(t) {
            return Err(Error::Domain {
                what: "psi_derivs",
                value: t,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        Ok(self.psi_derivs_unchecked(t))
    }

    /// Same as [`psi_derivs`](Self::psi_derivs) without the domain check.
    #[inline]
    pub(crate) fn psi_derivs_unchecked(self, t: f64) -> (f64, f64) {
        match self.kind() {
            Kind::Klm => {
                let r = 1.0 / (1.0 - t);
                (r, r * r)
            }
            Kind::Kl => {
                let e = t.exp();
                (e, e)
            }
            Kind::Chi2m => {
                let r = (1.0 - 2.0 * t).sqrt().recip();
                (r, r * r * r)
            }
            Kind::Chi2 => (t + 1.0, 1.0),
            Kind::Hellinger => {
                let r = 2.0 / (2.0 - t);
                (r * r, r * r * r)
            }
            Kind::Gen(g) => {
                let base = (g - 1.0) * t + 1.0;
                if base <= 0.0 {
                    (0.0, 0.0)
                } else {
                    let d1 = base.powf(1.0 / (g - 1.0));
                    (d1, d1 / base)
                }
            }
        }
    }

    /// Whether φ has a finite endpoint, in which case consistency under
    /// misspecification needs the moment functions to be bounded on the
    /// support of the data.
    pub fn has_bounded_domain(self) -> bool {
        let d = self.phi_domain();
        d.lo.is_finite() || d.hi.is_finite()
    }

    pub fn misspecification_warning(self) -> Option<String> {
        self.has_bounded_domain().then(|| {
            format!(
                "divergence {self} has a bounded domain: under misspecification with unbounded \
                 moment functions the estimates may fail to be root-n consistent"
            )
        })
    }
}

/// Fenchel–Legendre transform of φ by brute-force maximization over a grid,
/// refined by golden-section search around the best grid point.
pub fn numeric_conjugate(family: Divergence, t: f64, grid: GridSpec) -> f64 {
    assert!(grid.points >= 3 && grid.hi > grid.lo, "degenerate grid");
    let f = |x: f64| {
        let p = family.phi(x);
        if p.is_finite() {
            t * x - p
        } else {
            f64::NEG_INFINITY
        }
    };
    let h = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    let (mut best_k, mut best) = (0usize, f64::NEG_INFINITY);
    for k in 0..grid.points {
        let v = f(grid.lo + k as f64 * h);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = grid.lo + best_k.saturating_sub(1) as f64 * h;
    let mut b = grid.lo + (best_k + 1).min(grid.points - 1) as f64 * h;
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    best.max(fc).max(fd).max(f(a)).max(f(b))
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!("grid `{s}` is not of the form lo:hi:points"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Ok(GridSpec { lo, hi, points })
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::ModifiedKl => f.write_str("KLm"),
            Divergence::Kl => f.write_str("KL"),
            Divergence::ModifiedChi2 => f.write_str("chi2m"),
            Divergence::Chi2 => f.write_str("chi2"),
            Divergence::Hellinger => f.write_str("hellinger"),
            Divergence::Power(g) => write!(f, "power:{g}"),
        }
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s
            .strip_prefix("power:")
            .or_else(|| s.strip_prefix("Power:"))
        {
            let g: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::UnknownFamily(s.to_string()))?;
            if !g.is_finite() {
                return Err(Error::UnknownFamily(s.to_string()));
            }
            return Ok(Divergence::Power(g));
        }
        match s.to_ascii_lowercase().as_str() {
            "klm" | "el" => Ok(Divergence::ModifiedKl),
            "kl" => Ok(Divergence::Kl),
            "chi2m" => Ok(Divergence::ModifiedChi2),
            "chi2" => Ok(Divergence::Chi2),
            "hellinger" => Ok(Divergence::Hellinger),
            _ => Err(Error::UnknownFamily(s.to_string())),
        }
    }
}

impl From<Divergence> for String {
    fn from(d: Divergence) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Divergence {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn phi_examples() {
        assert_eq!(Divergence::Kl.phi(1.0), 0.0);
        assert_eq!(Divergence::Chi2.phi(3.0), 2.0);
        assert_eq!(Divergence::ModifiedKl.phi(0.0), INF);
        assert_relative_eq!(Divergence::Hellinger.phi(4.0), 2.0, epsilon = 1e-15);
        assert_eq!(Divergence::Kl.phi(0.0), 1.0);
        assert_eq!(Divergence::Hellinger.phi(-1.0), INF);
        assert_eq!(Divergence::Chi2.phi(-1.0), 2.0);
        assert_eq!(Divergence::Power(3.0).phi(-1.0), INF);
    }

    #[test]
    fn phi_derivative_examples() {
        assert_eq!(Divergence::Chi2.phi_derivs(1.0).unwrap(), (0.0, 1.0));
        let (d1, d2) = Divergence::Kl.phi_derivs(std::f64::consts::E).unwrap();
        assert_relative_eq!(d1, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d2, 1.0 / std::f64::consts::E, epsilon = 1e-15);
        assert_eq!(Divergence::ModifiedKl.phi_derivs(2.0).unwrap(), (0.5, 0.25));
        assert!(matches!(
            Divergence::ModifiedKl.phi_derivs(0.0),
            Err(Error::Domain { .. })
        ));
        // closed endpoint is not interior
        assert!(Divergence::Kl.phi_derivs(0.0).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_eq!(Divergence::Kl.psi(0.0), 0.0);
        assert_eq!(Divergence::ModifiedChi2.psi(0.5), 1.0);
        assert_eq!(Divergence::ModifiedKl.psi(2.0), INF);
        assert_eq!(Divergence::ModifiedKl.psi(1.0), INF);
        assert_eq!(Divergence::Chi2.psi(-1.0), -0.5);
        assert_eq!(Divergence::Hellinger.psi(2.0), INF);
        assert_eq!(Divergence::ModifiedChi2.psi(0.6), INF);
    }

    #[test]
    fn psi_derivative_examples() {
        for fam in Divergence::NAMED {
            assert_eq!(fam.psi_derivs(0.0).unwrap(), (1.0, 1.0), "{fam}");
        }
        assert_eq!(Divergence::Chi2.psi_derivs(3.0).unwrap(), (4.0, 1.0));
        assert_eq!(Divergence::ModifiedKl.psi_derivs(0.5).unwrap(), (2.0, 4.0));
        // endpoints raise
        assert!(Divergence::ModifiedChi2.psi_derivs(0.5).is_err());
        assert!(Divergence::ModifiedKl.psi_derivs(1.0).is_err());
    }

    #[test]
    fn numeric_conjugate_examples() {
        let grid = GridSpec {
            lo: 0.0,
            hi: 10.0,
            points: 10_001,
        };
        let v = numeric_conjugate(Divergence::Kl, 1.0, grid);
        assert_relative_eq!(v, std::f64::consts::E - 1.0, epsilon = 1e-9);
        let g2 = GridSpec {
            lo: -5.0,
            hi: 5.0,
            points: 1001,
        };
        assert!(numeric_conjugate(Divergence::Chi2, 0.0, g2).abs() < 1e-12);
        assert_relative_eq!(
            numeric_conjugate(Divergence::Hellinger, 1.0, grid),
            2.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn power_family_domains() {
        let p = Divergence::Power(0.5).psi_domain();
        assert_eq!((p.hi, p.hi_closed), (2.0, false));
        let p = Divergence::Power(-1.0).psi_domain();
        assert_eq!((p.hi, p.hi_closed), (0.5, true));
        assert_eq!(Divergence::Power(-1.0).psi(0.5), 1.0);
        // flat part for gamma > 1
        let f = Divergence::Power(3.0);
        assert_relative_eq!(f.psi(-10.0), -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(f.psi_derivs(-10.0).unwrap(), (0.0, 0.0));
        // the kink is continuous
        assert_relative_eq!(f.psi(-0.5 + 1e-12), -1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "KLm",
            "KL",
            "chi2",
            "chi2m",
            "hellinger",
            "power:0.25",
            "power:-2",
        ] {
            let d: Divergence = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("el".parse::<Divergence>().unwrap(), Divergence::ModifiedKl);
        assert!("l1".parse::<Divergence>().is_err());
        assert!("power:x".parse::<Divergence>().is_err());
        let json = serde_json::to_string(&Divergence::Power(1.5)).unwrap();
        assert_eq!(json, "\"power:1.5\"");
    }

    #[test]
    fn bounded_domain_flag() {
        assert!(Divergence::ModifiedKl.misspecification_warning().is_some());
        assert!(Divergence::Chi2.misspecification_warning().is_none());
    }
}
