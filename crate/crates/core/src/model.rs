//! Moment condition models `E[g(X, θ)] = 0` and weighted samples.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type MomentFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Dimension of an observation.
    pub data: usize,
    /// Dimension of θ.
    pub params: usize,
    /// Number of moment functions.
    pub moments: usize,
}

/// Compact box `[lo, hi]` standing in for the parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension(format!(
                "parameter box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::invalid(format!(
                "parameter box needs finite lo <= hi, got {lo:?} / {hi:?}"
            )));
        }
        Ok(ParamBox { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        ParamBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(t, (l, h))| t >= l && t <= h)
    }

    pub fn project(&self, theta: &mut [f64]) {
        for (t, (l, h)) in theta.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *t = t.clamp(*l, *h);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }
}

/// Estimating-function model: `g(x, θ) ∈ ℝˡ` with its θ-Jacobian.
#[derive(Clone)]
pub struct MomentModel {
    name: String,
    dims: Dims,
    theta_space: ParamBox,
    g: MomentFn,
    jac: JacobianFn,
    affine_in_theta: bool,
}

impl fmt::Debug for MomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("theta_space", &self.theta_space)
            .finish_non_exhaustive()
    }
}

impl MomentModel {
    /// Registers a user-defined model from `g` and its Jacobian `∂g/∂θ`
    /// (an `l × d` matrix).
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        theta_space: ParamBox,
        g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        jac: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dims.moments < dims.params {
            return Err(Error::invalid(format!(
                "need at least as many moments as parameters (l = {}, d = {})",
                dims.moments, dims.params
            )));
        }
        if dims.params == 0 || dims.data == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if theta_space.dim() != dims.params {
            return Err(Error::Dimension(format!(
                "parameter box has dimension {}, model has d = {}",
                theta_space.dim(),
                dims.params
            )));
        }
        Ok(MomentModel {
            name: name.into(),
            dims,
            theta_space,
            g: Arc::new(g),
            jac: Arc::new(jac),
            affine_in_theta: false,
        })
    }

    /// Declares `g` affine in θ so that second θ-derivatives vanish exactly.
    pub fn affine_in_theta(mut self) -> Self {
        self.affine_in_theta = true;
        self
    }

    pub fn with_theta_space(mut self, theta_space: ParamBox) -> Result<Self> {
        if theta_space.dim() != self.dims.params {
            return Err(Error::Dimension(format!(
                "parameter box has dimension {}, model has d = {}",
                theta_space.dim(),
                self.dims.params
            )));
        }
        self.theta_space = theta_space;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn theta_space(&self) -> &ParamBox {
        &self.theta_space
    }

    pub fn is_affine_in_theta(&self) -> bool {
        self.affine_in_theta
    }

    /// `g(x, θ)` without the parameter-space check.
    #[inline]
    pub fn g(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        (self.g)(x, theta)
    }

    /// `∂g/∂θ (x, θ)`, an `l × d` matrix.
    #[inline]
    pub fn jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        (self.jac)(x, theta)
    }

    /// `Σⱼ cⱼ ∂²gⱼ/∂θ²` at `(x, θ)`, a `d × d` matrix. Zero for models that are
    /// affine in θ, central differences of the Jacobian otherwise.
    pub fn contracted_hessian(&self, x: &[f64], theta: &[f64], c: &[f64]) -> DMatrix<f64> {
        let d = self.dims.params;
        let mut out = DMatrix::zeros(d, d);
        if self.affine_in_theta {
            return out;
        }
        let cv = DVector::from_column_slice(c);
        let mut th = theta.to_vec();
        for k in 0..d {
            let h = 1e-5 * (1.0 + theta[k].abs());
            th[k] = theta[k] + h;
            let jp = self.jacobian(x, &th).transpose() * &cv;
            th[k] = theta[k] - h;
            let jm = self.jacobian(x, &th).transpose() * &cv;
            th[k] = theta[k];
            out.set_column(k, &((jp - jm) / (2.0 * h)));
        }
        0.5 * (&out + out.transpose())
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.theta_space.contains(theta) {
            Ok(())
        } else {
            Err(Error::ParameterSpace {
                theta: theta.to_vec(),
            })
        }
    }

    /// Augmented moment vector `ḡ = (1, g₁, …, g_l)`.
    pub fn gbar(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut out = Vec::with_capacity(1 + self.dims.moments);
        out.push(1.0);
        out.extend(self.g(x, theta));
        Ok(out)
    }

    /// `Σᵢ wᵢ g(Xᵢ, θ)`.
    pub fn moment_mean(&self, sample: &WeightedSample, theta: &[f64]) -> Result<Vec<f64>> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        self.check_theta(theta)?;
        let mut acc = vec![0.0; self.dims.moments];
        for (x, w) in sample.iter() {
            for (a, v) in acc.iter_mut().zip(self.g(x, theta)) {
                *a += w * v;
            }
        }
        Ok(acc)
    }

    /// Augmented moments of every support point as the rows of an `n × (1+l)` matrix.
    pub fn gbar_matrix(&self, sample: &WeightedSample, theta: &[f64]) -> DMatrix<f64> {
        let l = self.dims.moments;
        let mut m = DMatrix::zeros(sample.len(), 1 + l);
        for (i, (x, _)) in sample.iter().enumerate() {
            m[(i, 0)] = 1.0;
            for (j, v) in self.g(x, theta).into_iter().enumerate() {
                m[(i, j + 1)] = v;
            }
        }
        m
    }
}

/// Options for [`builtin_model`].
#[derive(Clone, Debug, Default)]
pub struct ModelOptions {
    /// Data dimension for the `mean` model (default 1).
    pub data_dim: Option<usize>,
    pub theta_space: Option<ParamBox>,
}

/// Default parameter box half-width for built-in models.
pub const DEFAULT_THETA_BOUND: f64 = 1e3;

/// Built-in models:
///
/// * `mean`: `g(x, θ) = x − θ` with `m = d = l`;
/// * `mean-variance`: `g(x, θ) = (x, x² − θ)` with `m = d = 1`, `l = 2`
///   (a zero-mean law with second moment θ).
pub fn builtin_model(name: &str, options: &ModelOptions) -> Result<MomentModel> {
    match name {
        "mean" => {
            let m = options.data_dim.unwrap_or(1);
            if m == 0 {
                return Err(Error::invalid("mean model needs data_dim >= 1"));
            }
            let space = match &options.theta_space {
                Some(b) => b.clone(),
                None => ParamBox::uniform(m, -DEFAULT_THETA_BOUND, DEFAULT_THETA_BOUND)?,
            };
            let dims = Dims {
                data: m,
                params: m,
                moments: m,
            };
            Ok(MomentModel::new(
                "mean",
                dims,
                space,
                |x, th| x.iter().zip(th).map(|(a, b)| a - b).collect(),
                move |_, _| -DMatrix::identity(m, m),
            )?
            .affine_in_theta())
        }
        "mean-variance" => {
            if options.data_dim.is_some_and(|m| m != 1) {
                return Err(Error::invalid("mean-variance model is univariate"));
            }
            let space = match &options.theta_space {
                Some(b) => b.clone(),
                None => ParamBox::uniform(1, 0.0, DEFAULT_THETA_BOUND)?,
            };
            let dims = Dims {
                data: 1,
                params: 1,
                moments: 2,
            };
            Ok(MomentModel::new(
                "mean-variance",
                dims,
                space,
                |x, th| vec![x[0], x[0] * x[0] - th[0]],
                |_, _| DMatrix::from_column_slice(2, 1, &[0.0, -1.0]),
            )?
            .affine_in_theta())
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Finite-support probability measure: support points with weights summing to one.
///
/// Uniform weights `1/n` represent the empirical measure of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::weighted(points, vec![w; n])
    }

    /// Empirical measure of univariate observations.
    pub fn from_scalars(xs: &[f64]) -> Self {
        let n = xs.len();
        WeightedSample {
            dim: 1,
            points: xs.to_vec(),
            weights: vec![1.0 / n.max(1) as f64; n],
        }
    }

    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points.first().map_or(1, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("points have differing dimensions".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if !points.is_empty() {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("weights sum to {total}, not 1")));
            }
        }
        Ok(WeightedSample {
            dim,
            points: points.into_iter().flatten().collect(),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }

    /// Reorders the support points (weights travel with their points).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        let mut weights = Vec::with_capacity(self.len());
        for &i in order {
            points.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        WeightedSample {
            dim: self.dim,
            points,
            weights,
        }
    }
}

/// Midpoint discretization of the uniform law on `[lo, hi]` with `atoms` support points.
pub fn discretize_uniform(lo: f64, hi: f64, atoms: usize) -> Result<WeightedSample> {
    if !(hi > lo) || atoms == 0 {
        return Err(Error::invalid(format!(
            "cannot discretize uniform({lo}, {hi}) with {atoms} atoms"
        )));
    }
    let h = (hi - lo) / atoms as f64;
    let xs: Vec<f64> = (0..atoms).map(|k| lo + (k as f64 + 0.5) * h).collect();
    Ok(WeightedSample::from_scalars(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mv() -> MomentModel {
        builtin_model("mean-variance", &ModelOptions::default()).unwrap()
    }

    fn mean1() -> MomentModel {
        builtin_model("mean", &ModelOptions::default()).unwrap()
    }

    #[test]
    fn gbar_examples() {
        assert_eq!(mean1().gbar(&[3.0], &[1.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(mv().gbar(&[2.0], &[1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(mv().gbar(&[0.0], &[0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            mv().gbar(&[0.0], &[-1.0]),
            Err(Error::ParameterSpace { .. })
        ));
    }

    #[test]
    fn moment_mean_examples() {
        let s = WeightedSample::from_scalars(&[0.0, 2.0]);
        assert_eq!(mean1().moment_mean(&s, &[1.0]).unwrap(), vec![0.0]);
        let s = WeightedSample::from_scalars(&[-1.0, 0.0, 1.0]);
        let m = mv().moment_mean(&s, &[1.0 / 3.0]).unwrap();
        assert_relative_eq!(m[0], 0.0);
        assert_relative_eq!(m[1], 1.0 / 3.0, epsilon = 1e-15);
        let s = WeightedSample::from_scalars(&[5.0]);
        assert_eq!(mean1().moment_mean(&s, &[5.0]).unwrap(), vec![0.0]);
        let empty = WeightedSample::from_scalars(&[]);
        assert!(matches!(
            mean1().moment_mean(&empty, &[0.0]),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn builtin_dimensions() {
        let m = mean1();
        assert_eq!((m.dims().moments, m.dims().params), (1, 1));
        let m = mv();
        assert_eq!(
            m.dims(),
            Dims {
                data: 1,
                params: 1,
                moments: 2
            }
        );
        let m = builtin_model(
            "mean",
            &ModelOptions {
                data_dim: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((m.dims().moments, m.dims().params), (3, 3));
        assert_eq!(
            m.jacobian(&[1.0, 2.0, 3.0], &[0.0; 3]),
            -DMatrix::identity(3, 3)
        );
        assert!(matches!(
            builtin_model("quantile", &ModelOptions::default()),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn registration_rejects_underidentified() {
        let dims = Dims {
            data: 1,
            params: 2,
            moments: 1,
        };
        let r = MomentModel::new(
            "bad",
            dims,
            ParamBox::uniform(2, -1.0, 1.0).unwrap(),
            |x, th| vec![x[0] - th[0] - th[1]],
            |_, _| DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
        );
        assert!(r.is_err());
    }

    #[test]
    fn weighted_sample_validation() {
        assert!(WeightedSample::weighted(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(WeightedSample::weighted(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        let s = discretize_uniform(-1.0, 1.0, 4).unwrap();
        assert_eq!(s.point(0), &[-0.75]);
        assert_eq!(s.point(3), &[0.75]);
    }

    #[test]
    fn contracted_hessian_numeric_for_nonlinear_model() {
        // g = x - exp(θ): ∂²g/∂θ² = -exp(θ)
        let m = MomentModel::new(
            "exp-mean",
            Dims {
                data: 1,
                params: 1,
                moments: 1,
            },
            ParamBox::uniform(1, -5.0, 5.0).unwrap(),
            |x, th| vec![x[0] - th[0].exp()],
            |_, th| DMatrix::from_element(1, 1, -th[0].exp()),
        )
        .unwrap();
        let h = m.contracted_hessian(&[0.0], &[0.3], &[2.0]);
        assert_relative_eq!(h[(0, 0)], -2.0 * 0.3f64.exp(), epsilon = 1e-8);
        assert_eq!(
            mv().contracted_hessian(&[1.0], &[0.3], &[2.0, 1.0])[(0, 0)],
            0.0
        );
    }
}
