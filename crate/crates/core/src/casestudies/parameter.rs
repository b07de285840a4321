//! Privacy of a constant system parameter θ in z_{k+1} = A(θ)·z_k, handled by
//! augmenting the state with θ and measuring θ in the Fisher–Rao metric.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contraction::{theorem3_certificate, ContractionCertificate};
use crate::dynamics::{parameter_augmented, rotation, rotation_derivative, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::linalg::spectral_norm;
use crate::mechanism::{design_noise_theorem3, EpsilonSchedule, NoiseSchedule, ParameterBounds};

/// Default number of θ samples for the hypothesis checks.
pub const HYPOTHESIS_GRID: usize = 1000;

type MatrixFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// θ ↦ A(θ) together with dA/dθ.
#[derive(Clone)]
pub enum MatrixFamily {
    /// A(θ) = gain·θ·Iₙ
    Scalar { n: usize, gain: f64 },
    /// 2×2 rotation by θ
    Rotation,
    Custom {
        name: String,
        n: usize,
        a: Arc<MatrixFn>,
        da: Arc<MatrixFn>,
    },
}

impl fmt::Debug for MatrixFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixFamily::Scalar { n, gain } => write!(f, "Scalar {{ n: {n}, gain: {gain} }}"),
            MatrixFamily::Rotation => f.write_str("Rotation"),
            MatrixFamily::Custom { name, n, .. } => write!(f, "Custom {{ name: {name:?}, n: {n} }}"),
        }
    }
}

impl MatrixFamily {
    pub fn dim(&self) -> usize {
        match self {
            MatrixFamily::Scalar { n, .. } | MatrixFamily::Custom { n, .. } => *n,
            MatrixFamily::Rotation => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            MatrixFamily::Scalar { .. } => "scalar".into(),
            MatrixFamily::Rotation => "rotation".into(),
            MatrixFamily::Custom { name, .. } => name.clone(),
        }
    }

    pub fn a(&self, theta: f64) -> DMatrix<f64> {
        match self {
            MatrixFamily::Scalar { n, gain } => DMatrix::identity(*n, *n) * (gain * theta),
            MatrixFamily::Rotation => rotation(theta),
            MatrixFamily::Custom { a, .. } => a(theta),
        }
    }

    pub fn da(&self, theta: f64) -> DMatrix<f64> {
        match self {
            MatrixFamily::Scalar { n, gain } => DMatrix::identity(*n, *n) * *gain,
            MatrixFamily::Rotation => rotation_derivative(theta),
            MatrixFamily::Custom { da, .. } => da(theta),
        }
    }

    pub fn model(&self) -> SystemModel {
        let (fa, fd) = (self.clone(), self.clone());
        parameter_augmented(self.name(), self.dim(), move |t| fa.a(t), move |t| fd.da(t))
    }
}

#[derive(Debug, Clone)]
pub struct ParameterPrivacyConfig {
    pub family: MatrixFamily,
    pub bounds: ParameterBounds,
    pub zeta: f64,
    pub eps: EpsilonSchedule,
    pub horizon: usize,
    pub hypothesis_grid: usize,
}

/// Check ‖A(θ)‖₂ ≤ λ ≤ 1, then ‖dA/dθ‖₂ ≤ 1, on θ̄·j/N for j = 1..=N.
/// The first offending θ is reported.
pub fn check_hypotheses(family: &MatrixFamily, bounds: &ParameterBounds, grid: usize) -> Result<()> {
    bounds.validate()?;
    if family.dim() != bounds.n {
        return Err(Error::DimensionMismatch {
            expected: bounds.n,
            got: family.dim(),
            context: "matrix family vs bounds.n",
        });
    }
    if bounds.lambda > 1.0 {
        return Err(Error::HypothesisViolation {
            theta: f64::NAN,
            quantity: "lambda",
            value: bounds.lambda,
            bound: 1.0,
        });
    }
    if grid == 0 {
        return Err(Error::invalid("hypothesis_grid", "must be positive"));
    }
    let thetas: Vec<f64> = (1..=grid)
        .map(|j| bounds.theta_bar * j as f64 / grid as f64)
        .collect();
    let slack = 1e-12;
    for &t in &thetas {
        let norm = spectral_norm(&family.a(t));
        if norm > bounds.lambda + slack {
            return Err(Error::HypothesisViolation {
                theta: t,
                quantity: "|A(theta)|_2",
                value: norm,
                bound: bounds.lambda,
            });
        }
    }
    for &t in &thetas {
        let norm = spectral_norm(&family.da(t));
        if norm > 1.0 + slack {
            return Err(Error::HypothesisViolation {
                theta: t,
                quantity: "|dA/dtheta|_2",
                value: norm,
                bound: 1.0,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ParameterSetup {
    pub model: SystemModel,
    pub metric: MetricField,
    pub certificate: ContractionCertificate,
    pub noise: NoiseSchedule,
}

pub fn build_parameter_model(cfg: &ParameterPrivacyConfig) -> Result<ParameterSetup> {
    check_hypotheses(&cfg.family, &cfg.bounds, cfg.hypothesis_grid)?;
    Ok(ParameterSetup {
        model: cfg.family.model(),
        metric: MetricField::state_parameter(cfg.bounds.n),
        certificate: theorem3_certificate(&cfg.bounds)?,
        noise: design_noise_theorem3(&cfg.bounds, cfg.zeta, &cfg.eps, cfg.horizon)?,
    })
}

/// `count` pairs ((z0, θ), (z0, θ′)) with a shared z0, |z0|₂ ≤ μ, θ ∈ (0, θ̄] and
/// |log(θ′/θ)| ≤ ζ, θ′ ≤ θ̄. Odd-indexed pairs sit on the adjacency boundary
/// unless the θ̄ clamp pulls them inside.
pub fn sample_adjacent_pairs(
    bounds: &ParameterBounds,
    zeta: f64,
    count: usize,
    seed: u64,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bounds.n;
    (0..count)
        .map(|i| {
            let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let radius = bounds.mu * rng.random::<f64>().powf(1.0 / n as f64);
            let z = if dir.norm() > 0.0 { dir.normalize() * radius } else { dir };
            let theta = bounds.theta_bar * (1.0 - rng.random::<f64>());
            let step = if i % 2 == 1 {
                if rng.random_bool(0.5) { zeta } else { -zeta }
            } else {
                zeta * rng.random_range(-1.0..=1.0)
            };
            let theta2 = (theta * step.exp()).min(bounds.theta_bar);
            let mut a = DVector::zeros(n + 1);
            a.rows_mut(0, n).copy_from(&z);
            let mut b = a.clone();
            a[n] = theta;
            b[n] = theta2;
            (a, b)
        })
        .collect()
}
