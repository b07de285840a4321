//! Riemannian metrics on the state charts used by the mechanisms, path-length
//! quadrature and closed-form geodesic distances.
//!
//! Four charts are supported:
//!
//! * `Euclidean`: ℝⁿ with the identity metric.
//! * `PositiveScalar`: θ > 0 with the Fisher–Rao metric 1/θ², distance |log(θ'/θ)|.
//! * `AffineLine`: the street x₁ = 3x₂ in ℝ², parameterized by x₂. The pulled
//!   back metric is the constant 1 + 3² = 10.
//! * `StateParameter`: (z, θ) ∈ ℝⁿ × (0, ∞) with metric diag(Iₙ, 1/θ²). In the
//!   coordinates (z, log θ) this is flat, so the distance is
//!   √(|Δz|² + log²(θ'/θ)).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Slope of the street x₁ = 3x₂ in the affine-line chart.
pub const STREET_SLOPE: f64 = 3.0;

/// Pullback of the Euclidean metric onto the street, parameterized by x₂.
pub const AFFINE_LINE_METRIC: f64 = 1.0 + STREET_SLOPE * STREET_SLOPE;

/// Asymmetry above this is rejected when a metric is evaluated.
pub const METRIC_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    Euclidean,
    PositiveScalar,
    AffineLine,
    StateParameter,
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Chart::Euclidean => "euclidean",
            Chart::PositiveScalar => "positive-scalar",
            Chart::AffineLine => "affine-line",
            Chart::StateParameter => "state-parameter",
        };
        f.write_str(s)
    }
}

impl Chart {
    /// Map chart coordinates to the ambient state vector fed to a system model.
    pub fn embed(&self, coords: &DVector<f64>) -> DVector<f64> {
        match self {
            Chart::AffineLine => DVector::from_vec(vec![STREET_SLOPE * coords[0], coords[0]]),
            _ => coords.clone(),
        }
    }

    fn validate(&self, coords: &DVector<f64>) -> Result<()> {
        if !linalg::all_finite(coords) {
            return Err(Error::NonFinite("point coordinates"));
        }
        match self {
            Chart::Euclidean => {
                if coords.is_empty() {
                    return Err(Error::invalid("coords", "euclidean point needs at least one coordinate"));
                }
            }
            Chart::PositiveScalar => {
                if coords.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: coords.len(),
                        context: "positive-scalar chart",
                    });
                }
                if coords[0] <= 0.0 {
                    return Err(Error::invalid("theta", format!("must be > 0, got {}", coords[0])));
                }
            }
            Chart::AffineLine => {
                if coords.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: coords.len(),
                        context: "affine-line chart",
                    });
                }
            }
            Chart::StateParameter => {
                if coords.len() < 2 {
                    return Err(Error::invalid("coords", "state-parameter point needs (z, theta)"));
                }
                let theta = coords[coords.len() - 1];
                if theta <= 0.0 {
                    return Err(Error::invalid("theta", format!("must be > 0, got {theta}")));
                }
            }
        }
        Ok(())
    }
}

/// A point in one of the supported charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    coords: DVector<f64>,
    chart: Chart,
}

impl ManifoldPoint {
    pub fn new(chart: Chart, coords: DVector<f64>) -> Result<Self> {
        chart.validate(&coords)?;
        Ok(Self { coords, chart })
    }

    pub fn euclidean(coords: &[f64]) -> Result<Self> {
        Self::new(Chart::Euclidean, DVector::from_column_slice(coords))
    }

    pub fn positive_scalar(theta: f64) -> Result<Self> {
        Self::new(Chart::PositiveScalar, DVector::from_element(1, theta))
    }

    pub fn affine_line(x2: f64) -> Result<Self> {
        Self::new(Chart::AffineLine, DVector::from_element(1, x2))
    }

    pub fn state_parameter(z: &[f64], theta: f64) -> Result<Self> {
        let mut v = z.to_vec();
        v.push(theta);
        Self::new(Chart::StateParameter, DVector::from_vec(v))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// State vector in the ambient space of the dynamics.
    pub fn to_state(&self) -> DVector<f64> {
        self.chart.embed(&self.coords)
    }
}

/// Which closed form, if any, a metric field admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Identity,
    FisherRao,
    AffineLine,
    StateParameter,
    Custom,
}

impl MetricKind {
    pub fn chart(&self) -> Option<Chart> {
        match self {
            MetricKind::Identity => Some(Chart::Euclidean),
            MetricKind::FisherRao => Some(Chart::PositiveScalar),
            MetricKind::AffineLine => Some(Chart::AffineLine),
            MetricKind::StateParameter => Some(Chart::StateParameter),
            MetricKind::Custom => None,
        }
    }
}

type MetricFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Riemannian metric: a point-dependent symmetric positive-definite matrix.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    kind: MetricKind,
    eval: Arc<MetricFn>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .finish()
    }
}

impl MetricField {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kind: MetricKind::Identity,
            eval: Arc::new(move |_| DMatrix::identity(dim, dim)),
        }
    }

    /// 1/θ² on the positive reals.
    pub fn fisher_rao() -> Self {
        Self {
            dim: 1,
            kind: MetricKind::FisherRao,
            eval: Arc::new(|x| DMatrix::from_element(1, 1, 1.0 / (x[0] * x[0]))),
        }
    }

    pub fn affine_line() -> Self {
        Self {
            dim: 1,
            kind: MetricKind::AffineLine,
            eval: Arc::new(|_| DMatrix::from_element(1, 1, AFFINE_LINE_METRIC)),
        }
    }

    /// diag(Iₙ, 1/θ²) on (z, θ), with `state_dim` = n.
    pub fn state_parameter(state_dim: usize) -> Self {
        let dim = state_dim + 1;
        Self {
            dim,
            kind: MetricKind::StateParameter,
            eval: Arc::new(move |x| {
                let mut m = DMatrix::identity(dim, dim);
                let theta = x[dim - 1];
                m[(dim - 1, dim - 1)] = 1.0 / (theta * theta);
                m
            }),
        }
    }

    /// Canonical metric of a chart; `dim` is only used by the n-dimensional charts.
    pub fn for_chart(chart: Chart, dim: usize) -> Self {
        match chart {
            Chart::Euclidean => Self::identity(dim),
            Chart::PositiveScalar => Self::fisher_rao(),
            Chart::AffineLine => Self::affine_line(),
            Chart::StateParameter => Self::state_parameter(dim.saturating_sub(1)),
        }
    }

    pub fn custom<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            kind: MetricKind::Custom,
            eval: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Evaluate without validation. Callers on hot paths use this after the
    /// metric has been checked once.
    pub fn evaluate_raw(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(x)
    }

    /// Evaluate and check symmetry and positive definiteness.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
                context: "metric evaluation point",
            });
        }
        let m = (self.eval)(x);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: m.nrows(),
                context: "metric matrix",
            });
        }
        let asymmetry = linalg::max_asymmetry(&m);
        if asymmetry > METRIC_SYMMETRY_TOL {
            return Err(Error::AsymmetricMetric { asymmetry });
        }
        let m = linalg::symmetrize(&m);
        let min_eigenvalue = linalg::min_eigenvalue(&m)?;
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(m)
    }
}

/// Uniformly parameterized samples γ(sⱼ), sⱼ = j/(N−1), of a path in one chart.
#[derive(Debug, Clone)]
pub struct PathCurve {
    chart: Chart,
    samples: Vec<DVector<f64>>,
}

impl PathCurve {
    pub fn new(chart: Chart, samples: Vec<DVector<f64>>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("samples", "a path needs at least 2 samples"));
        }
        let dim = samples[0].len();
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                    context: "path sample",
                });
            }
            chart.validate(s)?;
        }
        Ok(Self { chart, samples })
    }

    /// Sample `f(s)` at `count` uniform parameters in [0, 1].
    pub fn from_fn<F>(chart: Chart, count: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        if count < 2 {
            return Err(Error::invalid("samples", "a path needs at least 2 samples"));
        }
        let last = (count - 1) as f64;
        Self::new(chart, (0..count).map(|j| f(j as f64 / last)).collect())
    }

    /// Straight segment in chart coordinates.
    pub fn segment(a: &ManifoldPoint, b: &ManifoldPoint, count: usize) -> Result<Self> {
        same_chart(a, b)?;
        let (pa, pb) = (a.coords.clone(), b.coords.clone());
        Self::from_fn(a.chart, count, |s| &pa * (1.0 - s) + &pb * s)
    }

    /// The closed-form minimizing geodesic between two points.
    pub fn geodesic(a: &ManifoldPoint, b: &ManifoldPoint, count: usize) -> Result<Self> {
        same_chart(a, b)?;
        match a.chart {
            Chart::Euclidean | Chart::AffineLine => Self::segment(a, b, count),
            Chart::PositiveScalar | Chart::StateParameter => {
                let last = a.dim() - 1;
                let (pa, pb) = (a.coords.clone(), b.coords.clone());
                let (la, lb) = (pa[last].ln(), pb[last].ln());
                Self::from_fn(a.chart, count, |s| {
                    let mut p = &pa * (1.0 - s) + &pb * s;
                    p[last] = (la * (1.0 - s) + lb * s).exp();
                    p
                })
            }
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }
}

fn same_chart(a: &ManifoldPoint, b: &ManifoldPoint) -> Result<()> {
    if a.chart != b.chart {
        return Err(Error::ChartMismatch(format!("{} vs {}", a.chart, b.chart)));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "point pair",
        });
    }
    Ok(())
}

/// Length of a sampled path under `metric`.
///
/// Midpoint rule on ∫₀¹ √(γ̇ᵀ P(γ) γ̇) ds with the chord γ(sⱼ₊₁) − γ(sⱼ) as the
/// tangent over each sub-interval. Second-order accurate for C¹ paths.
pub fn path_length(path: &PathCurve, metric: &MetricField) -> Result<f64> {
    if metric.dim() != path.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            got: path.dim(),
            context: "metric vs path chart",
        });
    }
    let mut total = 0.0;
    for w in path.samples.windows(2) {
        let delta = &w[1] - &w[0];
        let mid = (&w[0] + &w[1]) * 0.5;
        let p = metric.evaluate(&mid)?;
        let q = (delta.transpose() * &p * &delta)[(0, 0)];
        total += q.max(0.0).sqrt();
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("path length"));
    }
    Ok(total)
}

/// Closed-form geodesic distance for the built-in charts.
pub fn distance(a: &ManifoldPoint, b: &ManifoldPoint, metric: &MetricField) -> Result<f64> {
    same_chart(a, b)?;
    match metric.kind().chart() {
        None => {
            return Err(Error::UnsupportedChart(format!(
                "custom metric on {} chart",
                a.chart
            )))
        }
        Some(c) if c != a.chart => {
            return Err(Error::ChartMismatch(format!(
                "metric for {c} used on {} chart",
                a.chart
            )))
        }
        _ => {}
    }
    if metric.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            got: a.dim(),
            context: "metric vs point",
        });
    }
    let (x, y) = (&a.coords, &b.coords);
    let d = match a.chart {
        Chart::Euclidean => (x - y).norm(),
        Chart::PositiveScalar => (y[0].ln() - x[0].ln()).abs(),
        Chart::AffineLine => AFFINE_LINE_METRIC.sqrt() * (x[0] - y[0]).abs(),
        Chart::StateParameter => {
            let n = x.len() - 1;
            let dz2: f64 = (0..n).map(|i| (x[i] - y[i]).powi(2)).sum();
            let dl = y[n].ln() - x[n].ln();
            (dz2 + dl * dl).sqrt()
        }
    };
    Ok(d)
}

/// ζ-adjacency: distance(a, b) ≤ ζ.
pub fn is_adjacent(
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    metric: &MetricField,
    zeta: f64,
) -> Result<bool> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::invalid("zeta", format!("must be finite and >= 0, got {zeta}")));
    }
    Ok(distance(a, b, metric)? <= zeta)
}

/// A point at geodesic distance exactly `zeta` from `center`.
///
/// The one-dimensional charts have a two-point sphere; `index` parity picks
/// the side. The others draw a uniform direction (normalized Gaussian) in the
/// flat coordinates of the chart.
pub fn sphere_point<R: Rng + ?Sized>(
    center: &ManifoldPoint,
    zeta: f64,
    index: usize,
    rng: &mut R,
) -> Result<ManifoldPoint> {
    let sign = if index.is_multiple_of(2) { 1.0 } else { -1.0 };
    let c = &center.coords;
    let coords = match center.chart {
        Chart::PositiveScalar => DVector::from_element(1, c[0] * (sign * zeta).exp()),
        Chart::AffineLine => {
            DVector::from_element(1, c[0] + sign * zeta / AFFINE_LINE_METRIC.sqrt())
        }
        Chart::Euclidean => c + random_unit(c.len(), rng) * zeta,
        Chart::StateParameter => {
            let n = c.len();
            let u = random_unit(n, rng) * zeta;
            let mut p = c + &u;
            p[n - 1] = c[n - 1] * u[n - 1].exp();
            p
        }
    };
    ManifoldPoint::new(center.chart, coords)
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
