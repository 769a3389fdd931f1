//! Estimation and testing in moment condition models by minimizing
//! φ-divergences through their convex duals.
//!
//! A moment condition model is a family `{P : E_P[g(X, θ)] = 0, θ ∈ Θ}`. For
//! a sample `Pₙ` and a convex `φ` with conjugate `ψ`, the divergence from `Pₙ`
//! to the measures satisfying the constraints at θ is the value of a
//! finite-dimensional concave program,
//!
//! ```text
//! D̂(M_θ, Pₙ) = sup_t  Σᵢ wᵢ [ t₀ − ψ(t₀ + Σⱼ tⱼ gⱼ(Xᵢ, θ)) ],
//! ```
//!
//! and the estimator minimizes this profile over θ. The empirical likelihood
//! estimator (`KLm`) and the continuous-updating estimator (`chi2`) are
//! members of the family.
//!
//! * [`divergence`]: the divergence families and their conjugates.
//! * [`model`]: moment models and weighted samples.
//! * [`dual`]: the inner concave program.
//! * [`estimator`]: the outer minimization and variance estimates.
//! * [`inference`]: tests, confidence regions, power and sample size.
//! * [`simulation`]: seeded Monte Carlo studies.
//! * [`cli`]: the `phidual` command line.

pub mod cli;
pub mod data;
pub mod dist;
pub mod divergence;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod model;
pub mod simulation;

pub use divergence::Divergence;
pub use error::{Error, Result};
pub use estimator::{estimate, EstimateOptions, EstimationResult};
pub use model::{builtin_model, MomentModel, WeightedSample};
