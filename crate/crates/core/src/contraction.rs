//! Contraction certificates for output incremental boundedness.
//!
//! A certificate (c₁, c₂, P(x, k), λ_k) with respect to an ambient metric P̃ must satisfy,
//! at every (x, k) of interest,
//!
//! ```text
//!   (i)   P(x,k) − c₁²·∂hᵀ∂h                          ⪰ 0
//!   (ii)  c₂²·P̃(x) − P(x,k)                           ⪰ 0
//!   (iii) λ_{k+1}²·P(x,k) − λ_k²·∂fᵀ P(f(x),k+1) ∂f   ⪰ 0
//! ```
//!
//! in which case |Δy_k|₁ ≤ √m·(c₂/c₁)·(λ_k/λ_{k0})·d_P̃(x, x′). The checks here are
//! on sampled grids: a pass is evidence over the grid, not a proof.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::{distance, ManifoldPoint, MetricField};
use crate::linalg;
use crate::mechanism::ParameterBounds;

/// Default absolute tolerance on eigenvalues.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Default number of time steps covered by grid checks.
pub const DEFAULT_GRID_STEPS: usize = 20;

/// Symmetrize `m` and report (min eigenvalue ≥ −tol, min eigenvalue).
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<(bool, f64)> {
    let min = linalg::min_eigenvalue(m)?;
    Ok((min >= -tol, min))
}

pub type LambdaFn = dyn Fn(i64) -> f64 + Send + Sync;
type CandidateFn = dyn Fn(i64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type DomainFn = dyn Fn(i64, &DVector<f64>) -> bool + Send + Sync;

/// Time-varying PSD matrix field P(x, k).
#[derive(Clone)]
pub struct MetricCandidate {
    dim: usize,
    eval: Arc<CandidateFn>,
}

impl fmt::Debug for MetricCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricCandidate").field("dim", &self.dim).finish()
    }
}

impl MetricCandidate {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(i64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(f) }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        let dim = m.nrows();
        Self::new(dim, move |_, _| m.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, k: i64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = (self.eval)(k, x);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: m.nrows(),
                context: "metric candidate",
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric candidate"));
        }
        let asym = linalg::max_asymmetry(&m);
        if asym > crate::geometry::METRIC_SYMMETRY_TOL {
            return Err(Error::AsymmetricMetric { asymmetry: asym });
        }
        Ok(linalg::symmetrize(&m))
    }
}

#[derive(Clone)]
pub struct ContractionCertificate {
    pub c1: f64,
    pub c2: f64,
    pub k0: i64,
    lambda: Arc<LambdaFn>,
    metric: MetricCandidate,
    ambient: MetricField,
    domain: Option<Arc<DomainFn>>,
}

impl fmt::Debug for ContractionCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContractionCertificate")
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("k0", &self.k0)
            .field("metric", &self.metric)
            .field("ambient", &self.ambient)
            .field("restricted_domain", &self.domain.is_some())
            .finish()
    }
}

impl ContractionCertificate {
    pub fn new<L>(
        c1: f64,
        c2: f64,
        k0: i64,
        lambda: L,
        metric: MetricCandidate,
        ambient: MetricField,
    ) -> Result<Self>
    where
        L: Fn(i64) -> f64 + Send + Sync + 'static,
    {
        if !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(Error::invalid("c1", "c1 and c2 must be positive"));
        }
        if metric.dim() != ambient.dim() {
            return Err(Error::DimensionMismatch {
                expected: ambient.dim(),
                got: metric.dim(),
                context: "certificate metric vs ambient metric",
            });
        }
        Ok(Self {
            c1,
            c2,
            k0,
            lambda: Arc::new(lambda),
            metric,
            ambient,
            domain: None,
        })
    }

    /// Restrict the claim to points where `domain(k, x)` holds. Grid points
    /// outside are skipped and counted as rejected.
    pub fn with_domain<D>(mut self, domain: D) -> Self
    where
        D: Fn(i64, &DVector<f64>) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn lambda(&self, k: i64) -> f64 {
        (self.lambda)(k)
    }

    pub fn metric(&self) -> &MetricCandidate {
        &self.metric
    }

    pub fn ambient(&self) -> &MetricField {
        &self.ambient
    }

    pub fn admits(&self, k: i64, x: &DVector<f64>) -> bool {
        self.domain.as_ref().is_none_or(|d| d(k, x))
    }

    /// α(ζ)/ζ = √m·c₂/(c₁·λ_{k0}).
    pub fn alpha_coefficient(&self, output_dim: usize) -> f64 {
        oib_alpha(output_dim, self.c1, self.c2, self.lambda(self.k0), 1.0)
    }

    /// √m·(c₂/c₁)·λ_k/λ_{k0}: the guaranteed ℓ1 output gap per unit initial distance.
    pub fn oib_bound(&self, output_dim: usize, k: i64) -> f64 {
        self.alpha_coefficient(output_dim) * self.lambda(k)
    }
}

/// α(ζ) = √m·(c₂/c₁)·ζ/λ_{k0}.
pub fn oib_alpha(output_dim: usize, c1: f64, c2: f64, lambda_k0: f64, zeta: f64) -> f64 {
    (output_dim as f64).sqrt() * c2 / c1 * zeta / lambda_k0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    /// P − c₁²∂hᵀ∂h ⪰ 0
    OutputLower,
    /// c₂²P̃ − P ⪰ 0
    AmbientUpper,
    /// λ_{k+1}²P − λ_k²∂fᵀP⁺∂f ⪰ 0
    Contraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: i64,
    pub grid_index: usize,
    pub x: Vec<f64>,
    pub inequality: Inequality,
    pub min_eigenvalue: f64,
}

/// Smallest eigenvalue seen for each inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityMinima {
    pub output_lower: f64,
    pub ambient_upper: f64,
    pub contraction: f64,
}

impl InequalityMinima {
    fn infinite() -> Self {
        Self {
            output_lower: f64::INFINITY,
            ambient_upper: f64::INFINITY,
            contraction: f64::INFINITY,
        }
    }

    fn merge(self, o: Self) -> Self {
        Self {
            output_lower: self.output_lower.min(o.output_lower),
            ambient_upper: self.ambient_upper.min(o.ambient_upper),
            contraction: self.contraction.min(o.contraction),
        }
    }

    pub fn overall(&self) -> f64 {
        self.output_lower.min(self.ambient_upper).min(self.contraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridVerificationReport {
    pub points_checked: usize,
    pub points_rejected: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
    pub tolerance: f64,
    pub min_eigenvalues: InequalityMinima,
    /// √m·c₂/(c₁·λ_{k0}), so that α(ζ) = alpha_coefficient·ζ.
    pub alpha_coefficient: f64,
    /// The same constant read with a literal factor k0 in place of 1/λ_{k0}.
    pub alpha_coefficient_literal_k0: f64,
}

pub type GridPoint = (i64, DVector<f64>);

struct PointOutcome {
    minima: InequalityMinima,
    violations: Vec<Violation>,
}

fn check_point(
    model: &SystemModel,
    cert: &ContractionCertificate,
    index: usize,
    k: i64,
    x: &DVector<f64>,
    tol: f64,
) -> Result<Option<PointOutcome>> {
    if !cert.admits(k, x) {
        return Ok(None);
    }
    let p = cert.metric.evaluate(k, x)?;
    let jh = model.jac_h(k, x);
    let jf = model.jac_f(k, x);
    if jh.iter().chain(jf.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jacobian"));
    }
    let fx = model.step(k, x);
    let p_next = cert.metric.evaluate(k + 1, &fx)?;
    let ambient = cert.ambient.evaluate(x)?;
    let (lk, lk1) = (cert.lambda(k), cert.lambda(k + 1));

    let m1 = &p - jh.transpose() * &jh * cert.c1.powi(2);
    let m2 = ambient * cert.c2.powi(2) - &p;
    let m3 = &p * lk1.powi(2) - jf.transpose() * p_next * &jf * lk.powi(2);

    let e1 = linalg::min_eigenvalue(&m1)?;
    let e2 = linalg::min_eigenvalue(&m2)?;
    let e3 = linalg::min_eigenvalue(&m3)?;
    let mut violations = Vec::new();
    for (ineq, e) in [
        (Inequality::OutputLower, e1),
        (Inequality::AmbientUpper, e2),
        (Inequality::Contraction, e3),
    ] {
        if e < -tol {
            violations.push(Violation {
                k,
                grid_index: index,
                x: x.iter().copied().collect(),
                inequality: ineq,
                min_eigenvalue: e,
            });
        }
    }
    Ok(Some(PointOutcome {
        minima: InequalityMinima {
            output_lower: e1,
            ambient_upper: e2,
            contraction: e3,
        },
        violations,
    }))
}

/// Check the three certificate inequalities at every grid point.
///
/// Points are evaluated in parallel; the violation list is sorted by
/// (k, grid index) so the report does not depend on scheduling.
pub fn verify_oib_grid(
    model: &SystemModel,
    cert: &ContractionCertificate,
    grid: &[GridPoint],
    tol: f64,
) -> Result<GridVerificationReport> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "grid is empty"));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", "tolerance must be >= 0"));
    }
    let n = model.state_dim();
    if cert.metric.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cert.metric.dim(),
            context: "certificate vs model state",
        });
    }
    if let Some((_, x)) = grid.iter().find(|(_, x)| x.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
            context: "grid point",
        });
    }

    let outcomes: Vec<Option<PointOutcome>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, (k, x))| check_point(model, cert, i, *k, x, tol))
        .collect::<Result<_>>()?;

    let mut minima = InequalityMinima::infinite();
    let mut violations = Vec::new();
    let mut checked = 0;
    for o in outcomes.into_iter().flatten() {
        checked += 1;
        minima = minima.merge(o.minima);
        violations.extend(o.violations);
    }
    let rejected = grid.len() - checked;
    if checked == 0 {
        return Err(Error::invalid("grid", "no grid point lies inside the certificate domain"));
    }
    if rejected > 0 {
        log::warn!("{rejected} grid points outside the certificate domain were skipped");
    }
    violations.sort_by_key(|a| (a.k, a.grid_index));

    let m = model.output_dim();
    Ok(GridVerificationReport {
        points_checked: checked,
        points_rejected: rejected,
        passed: violations.is_empty(),
        violations,
        tolerance: tol,
        min_eigenvalues: minima,
        alpha_coefficient: cert.alpha_coefficient(m),
        alpha_coefficient_literal_k0: (m as f64).sqrt() * cert.c2 / cert.c1 * cert.k0 as f64,
    })
}

/// Tensor grid: every k in `ks` crossed with every combination of `axes`.
pub fn tensor_grid(ks: &[i64], axes: &[Vec<f64>]) -> Vec<GridPoint> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    ks.iter()
        .flat_map(|&k| points.iter().map(move |p| (k, DVector::from_column_slice(p))))
        .collect()
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Certificate for z_{k+1} = A(θ)z_k, θ_{k+1} = θ_k, y = z under
/// ‖A(θ)‖₂ ≤ λ ≤ 1, ‖dA/dθ‖₂ ≤ 1, |z_{k0}| ≤ μ, 0 < θ ≤ θ̄:
///
/// c₁ = 1, c₂ = max(θ̄β, 1), λ_k = λ̄^{k−k0}, P = diag(Iₙ, λ^{2(k−k0)}β²),
/// β = λ̄μ/(λ̄² − λ²), ambient metric diag(Iₙ, 1/θ²).
///
/// The claim only covers the tube |z| ≤ μλ^{k−k0}; the returned certificate
/// carries that domain.
pub fn theorem3_certificate(bounds: &ParameterBounds) -> Result<ContractionCertificate> {
    bounds.validate()?;
    let b = *bounds;
    let n = b.n;
    let beta = b.beta();
    let metric = MetricCandidate::new(n + 1, move |k, _| {
        let mut p = DMatrix::identity(n + 1, n + 1);
        p[(n, n)] = b.lambda.powi(2 * (k - b.k0) as i32) * beta * beta;
        p
    });
    let cert = ContractionCertificate::new(
        1.0,
        b.c2(),
        b.k0,
        move |k| b.lambda_bar.powi((k - b.k0) as i32),
        metric,
        MetricField::state_parameter(n),
    )?;
    Ok(cert.with_domain(move |k, x| {
        let slack = 1.0 + 1e-12;
        let z = x.rows(0, n).norm();
        let theta = x[n];
        k >= b.k0
            && z <= b.mu * b.lambda.powi((k - b.k0) as i32) * slack
            && theta > 0.0
            && theta <= b.theta_bar * slack
    }))
}

/// Grid over (z, θ, k) inside the admissible tube of [`theorem3_certificate`].
///
/// For n = 1, z spans [−R_k, R_k] with R_k = μλ^{k−k0}. For n ≥ 2, z = r·u with
/// `z_points` radii in [0, R_k] and a fixed set of 8 directions in the first two
/// coordinates. θ takes `theta_points` values θ̄·j/theta_points, j = 1..=theta_points.
pub fn theorem3_grid(bounds: &ParameterBounds, z_points: usize, theta_points: usize, steps: usize) -> Vec<GridPoint> {
    let n = bounds.n;
    let thetas: Vec<f64> = (1..=theta_points)
        .map(|j| bounds.theta_bar * j as f64 / theta_points as f64)
        .collect();
    let mut grid = Vec::with_capacity(z_points * theta_points * steps);
    for s in 0..steps {
        let k = bounds.k0 + s as i64;
        let radius = bounds.mu * bounds.lambda.powi(s as i32);
        let zs: Vec<DVector<f64>> = if n == 1 {
            linspace(-radius, radius, z_points)
                .into_iter()
                .map(|z| DVector::from_element(1, z))
                .collect()
        } else {
            let dirs: Vec<DVector<f64>> = (0..8)
                .map(|d| {
                    let a = std::f64::consts::FRAC_PI_4 * d as f64;
                    let mut u = DVector::zeros(n);
                    u[0] = a.cos();
                    u[1] = a.sin();
                    u
                })
                .collect();
            linspace(0.0, radius, z_points)
                .into_iter()
                .flat_map(|r| dirs.iter().map(move |u| u * r).collect::<Vec<_>>())
                .collect()
        };
        for z in &zs {
            for &t in &thetas {
                let mut x = DVector::zeros(n + 1);
                x.rows_mut(0, n).copy_from(z);
                x[n] = t;
                grid.push((k, x));
            }
        }
    }
    grid
}

/// Blocks of λ̄^{−2(k−k0)}·(λ_{k+1}²P(x,k) − λ_k²∂fᵀP(f(x),k+1)∂f) for the
/// augmented linear-parameter system:
///
/// ```text
///   A11 = λ̄²I − AᵀA
///   A12 = −Aᵀ(dA/dθ)z
///   A22 = λ̄²λ^{2(k−k0)}β² − |(dA/dθ)z|² − λ^{2(k+1−k0)}β²
/// ```
pub fn theorem3_blocks(
    bounds: &ParameterBounds,
    a: &DMatrix<f64>,
    da: &DMatrix<f64>,
    z: &DVector<f64>,
    k: i64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = bounds.n;
    let beta = bounds.beta();
    let s = (k - bounds.k0) as i32;
    let dz = da * z;
    let a11 = DMatrix::identity(n, n) * bounds.lambda_bar.powi(2) - a.transpose() * a;
    let a12 = -(a.transpose() * &dz);
    let lam2 = bounds.lambda.powi(2);
    let a22 = bounds.lambda_bar.powi(2) * lam2.powi(s) * beta * beta
        - dz.norm_squared()
        - lam2.powi(s + 1) * beta * beta;
    (
        a11,
        DMatrix::from_column_slice(n, 1, a12.as_slice()),
        DMatrix::from_element(1, 1, a22),
    )
}

/// Outcome of the two PSD routes for a 2×2 block matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurReport {
    pub direct_psd: bool,
    pub direct_min_eigenvalue: f64,
    /// Present when A22 is positive definite beyond `tol`.
    pub schur_psd: Option<bool>,
    pub schur_min_eigenvalue: Option<f64>,
}

impl SchurReport {
    pub fn routes_agree(&self) -> bool {
        self.schur_psd.is_none_or(|s| s == self.direct_psd)
    }
}

/// PSD test of [[A11, A12], [A12ᵀ, A22]] by eigenvalues, and by the Schur
/// complement A11 − A12·A22⁻¹·A12ᵀ whenever A22 ≻ tol.
pub fn schur_psd_2block_report(
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a22: &DMatrix<f64>,
    tol: f64,
) -> Result<SchurReport> {
    let p = linalg::ensure_square(a11)?;
    let q = linalg::ensure_square(a22)?;
    if a12.nrows() != p || a12.ncols() != q {
        return Err(Error::DimensionMismatch {
            expected: p * q,
            got: a12.nrows() * a12.ncols(),
            context: "off-diagonal block",
        });
    }
    let mut full = DMatrix::zeros(p + q, p + q);
    full.view_mut((0, 0), (p, p)).copy_from(a11);
    full.view_mut((0, p), (p, q)).copy_from(a12);
    full.view_mut((p, 0), (q, p)).copy_from(&a12.transpose());
    full.view_mut((p, p), (q, q)).copy_from(a22);
    let (direct_psd, direct_min) = check_psd(&full, tol)?;

    let (schur_psd, schur_min) = if linalg::min_eigenvalue(a22)? > tol {
        let inv = linalg::symmetrize(a22)
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: linalg::min_eigenvalue(a22)?,
            })?;
        let s = a11 - a12 * inv * a12.transpose();
        let (ok, min) = check_psd(&s, tol)?;
        (Some(ok), Some(min))
    } else {
        (None, None)
    };
    Ok(SchurReport {
        direct_psd,
        direct_min_eigenvalue: direct_min,
        schur_psd,
        schur_min_eigenvalue: schur_min,
    })
}

/// Whether the block matrix is PSD; an error if the two routes disagree.
pub fn schur_psd_2block(a11: &DMatrix<f64>, a12: &DMatrix<f64>, a22: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let r = schur_psd_2block_report(a11, a12, a22, tol)?;
    if let Some(s) = r.schur_psd {
        if s != r.direct_psd {
            return Err(Error::RouteDisagreement {
                direct: r.direct_psd,
                schur: s,
            });
        }
    }
    Ok(r.direct_psd)
}

/// For each k, max over pairs of |Δy_k|₁ / d_P̃(xa, xb).
///
/// A lower bound on λ_k·α(ζ)/ζ; a value above a certificate's bound falsifies it.
pub fn estimate_oib_empirical(
    model: &SystemModel,
    metric: &MetricField,
    pairs: &[(ManifoldPoint, ManifoldPoint)],
    k0: i64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut ratios = vec![0.0_f64; horizon + 1];
    for (a, b) in pairs {
        let d = distance(a, b, metric)?;
        if d <= 0.0 {
            return Err(Error::ZeroDistance);
        }
        let ta = simulate(model, &a.to_state(), k0, horizon)?;
        let tb = simulate(model, &b.to_state(), k0, horizon)?;
        for (j, (ya, yb)) in ta.outputs.iter().zip(&tb.outputs).enumerate() {
            ratios[j] = ratios[j].max(linalg::l1_norm(&(ya - yb)) / d);
        }
    }
    Ok(ratios)
}
