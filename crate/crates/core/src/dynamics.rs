//! Time-varying discrete-time systems x_{k+1} = f_k(x_k), y_k = h_k(x_k).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Simulation aborts once any |state|∞ exceeds this.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Relative step of the central finite-difference Jacobians.
pub const FD_STEP: f64 = 1e-6;

pub type StepFn = dyn Fn(i64, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(i64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Clone)]
pub struct SystemModel {
    name: String,
    state_dim: usize,
    output_dim: usize,
    step: Arc<StepFn>,
    observe: Arc<StepFn>,
    jac_f: Option<Arc<JacobianFn>>,
    jac_h: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("output_dim", &self.output_dim)
            .field("jacobian_mode", &self.jacobian_mode())
            .finish()
    }
}

impl SystemModel {
    pub fn new<F, H>(name: impl Into<String>, state_dim: usize, output_dim: usize, step: F, observe: H) -> Self
    where
        F: Fn(i64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        H: Fn(i64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            output_dim,
            step: Arc::new(step),
            observe: Arc::new(observe),
            jac_f: None,
            jac_h: None,
        }
    }

    /// Attach analytic Jacobians ∂f_k/∂x and ∂h_k/∂x.
    pub fn with_jacobians<JF, JH>(mut self, jac_f: JF, jac_h: JH) -> Self
    where
        JF: Fn(i64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        JH: Fn(i64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac_f = Some(Arc::new(jac_f));
        self.jac_h = Some(Arc::new(jac_h));
        self
    }

    /// Drop analytic Jacobians so that finite differences are used.
    pub fn without_jacobians(mut self) -> Self {
        self.jac_f = None;
        self.jac_h = None;
        self
    }

    /// x_{k+1} = A x_k, y_k = C x_k.
    pub fn linear(name: impl Into<String>, a: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let m = c.nrows();
        let (a1, a2) = (a.clone(), a);
        let (c1, c2) = (c.clone(), c);
        Self::new(name, n, m, move |_, x| &a1 * x, move |_, x| &c1 * x)
            .with_jacobians(move |_, _| a2.clone(), move |_, _| c2.clone())
    }

    /// x_{k+1} = a·x_k, y_k = x_k on ℝ.
    pub fn scalar_linear(a: f64) -> Self {
        Self::linear(
            format!("scalar-linear(a={a})"),
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        if self.jac_f.is_some() && self.jac_h.is_some() {
            JacobianMode::Analytic
        } else {
            JacobianMode::FiniteDifference
        }
    }

    pub fn step(&self, k: i64, x: &DVector<f64>) -> DVector<f64> {
        (self.step)(k, x)
    }

    pub fn observe(&self, k: i64, x: &DVector<f64>) -> DVector<f64> {
        (self.observe)(k, x)
    }

    pub fn jac_f(&self, k: i64, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_f {
            Some(j) => j(k, x),
            None => central_difference(&*self.step, k, x),
        }
    }

    pub fn jac_h(&self, k: i64, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_h {
            Some(j) => j(k, x),
            None => central_difference(&*self.observe, k, x),
        }
    }

    /// Jacobians by central differences regardless of mode.
    pub fn jac_f_numeric(&self, k: i64, x: &DVector<f64>) -> DMatrix<f64> {
        central_difference(&*self.step, k, x)
    }

    pub fn jac_h_numeric(&self, k: i64, x: &DVector<f64>) -> DMatrix<f64> {
        central_difference(&*self.observe, k, x)
    }

    fn check_state(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
                context,
            });
        }
        Ok(())
    }
}

fn central_difference(f: &StepFn, k: i64, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let fx = f(k, x);
    let mut jac = DMatrix::zeros(fx.len(), n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = FD_STEP * x[i].abs().max(1.0);
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(k, &probe);
        probe[i] = xi - h;
        let fm = f(k, &probe);
        probe[i] = xi;
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// States x_{k0..k0+horizon} and their noiseless outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub k0: i64,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_step(&self) -> i64 {
        self.k0 + self.states.len() as i64 - 1
    }
}

pub fn simulate(model: &SystemModel, x0: &DVector<f64>, k0: i64, horizon: usize) -> Result<Trajectory> {
    model.check_state(x0, "initial state")?;
    if !linalg::all_finite(x0) {
        return Err(Error::NonFinite("initial state"));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    for j in 0..=horizon {
        let k = k0 + j as i64;
        let y = model.observe(k, &x);
        if y.len() != model.output_dim {
            return Err(Error::DimensionMismatch {
                expected: model.output_dim,
                got: y.len(),
                context: "model output",
            });
        }
        if !linalg::all_finite(&y) {
            return Err(Error::Diverged { step: k });
        }
        outputs.push(y);
        if j < horizon {
            let next = model.step(k, &x);
            model.check_state(&next, "model step")?;
            if !linalg::all_finite(&next) || next.amax() > DIVERGENCE_BOUND {
                return Err(Error::Diverged { step: k + 1 });
            }
            states.push(std::mem::replace(&mut x, next));
        } else {
            states.push(x.clone());
        }
    }
    Ok(Trajectory { k0, states, outputs })
}

/// ℓ1 gap |h_k(φ_k(xa)) − h_k(φ_k(xb))|₁ for k in [k0, k0 + horizon].
pub fn output_deviation(
    model: &SystemModel,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    k0: i64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let ta = simulate(model, xa, k0, horizon)?;
    let tb = simulate(model, xb, k0, horizon)?;
    Ok(ta
        .outputs
        .iter()
        .zip(&tb.outputs)
        .map(|(a, b)| linalg::l1_norm(&(a - b)))
        .collect())
}

/// z_{k+1} = A(θ) z_k, θ_{k+1} = θ_k, y_k = z_k on the state (z, θ).
///
/// `a` and `da` return A(θ) and dA/dθ, both n×n.
pub fn parameter_augmented<A, DA>(name: impl Into<String>, n: usize, a: A, da: DA) -> SystemModel
where
    A: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    DA: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    let a = Arc::new(a);
    let a_step = Arc::clone(&a);
    let step = move |_: i64, x: &DVector<f64>| {
        let theta = x[n];
        let z = x.rows(0, n).into_owned();
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&(a_step(theta) * z));
        out[n] = theta;
        out
    };
    let observe = move |_: i64, x: &DVector<f64>| x.rows(0, n).into_owned();
    let jac_f = move |_: i64, x: &DVector<f64>| {
        let theta = x[n];
        let z = x.rows(0, n).into_owned();
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&a(theta));
        j.view_mut((0, n), (n, 1)).copy_from(&(da(theta) * z));
        j[(n, n)] = 1.0;
        j
    };
    let jac_h = move |_: i64, _: &DVector<f64>| {
        let mut j = DMatrix::zeros(n, n + 1);
        j.view_mut((0, 0), (n, n)).fill_with_identity();
        j
    };
    SystemModel::new(name, n + 1, n, step, observe).with_jacobians(jac_f, jac_h)
}

/// 2×2 rotation by ω, [[cos ω, sin ω], [−sin ω, cos ω]].
pub fn rotation(omega: f64) -> DMatrix<f64> {
    let (s, c) = omega.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// d/dω of [`rotation`].
pub fn rotation_derivative(omega: f64) -> DMatrix<f64> {
    let (s, c) = omega.sin_cos();
    DMatrix::from_row_slice(2, 2, &[-s, c, -c, -s])
}
