//! Output regulation of a linear plant against a rotating exo-system whose
//! transmitted state is perturbed by Laplace noise.
//!
//! ```text
//!   plant:      x_{k+1} = A x_k + B u_k,   z_k = C x_k + D u_k
//!   exo-system: r_{k+1} = A_r r_k,         ŷ_k = r_k + v_k (transmitted)
//!   control:    u_k = K_x x_k + K_r ŷ_k
//!   error:      e_k = z_k − C_r r_k
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rotation, DIVERGENCE_BOUND};
use crate::error::{Error, Result};
use crate::mechanism::{LaplaceSampler, NoiseSchedule};

/// Largest acceptable residual of the stacked regulator equations.
pub const REGULATOR_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NotSquare { rows: n, cols: a.ncols() });
        }
        let p = b.ncols();
        let m = c.nrows();
        for (ok, expected, got, context) in [
            (b.nrows() == n, n, b.nrows(), "B rows"),
            (c.ncols() == n, n, c.ncols(), "C columns"),
            (d.nrows() == m, m, d.nrows(), "D rows"),
            (d.ncols() == p, p, d.ncols(), "D columns"),
        ] {
            if !ok {
                return Err(Error::DimensionMismatch { expected, got, context });
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self {
            a: s(a),
            b: s(b),
            c: s(c),
            d: s(d),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoSystem {
    pub a_r: DMatrix<f64>,
    pub c_r: DMatrix<f64>,
}

impl ExoSystem {
    pub fn new(a_r: DMatrix<f64>, c_r: DMatrix<f64>) -> Result<Self> {
        if a_r.nrows() != a_r.ncols() {
            return Err(Error::NotSquare {
                rows: a_r.nrows(),
                cols: a_r.ncols(),
            });
        }
        if c_r.ncols() != a_r.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a_r.nrows(),
                got: c_r.ncols(),
                context: "C_r columns",
            });
        }
        Ok(Self { a_r, c_r })
    }

    /// A_r = rotation(ω), C_r = [1 0].
    pub fn rotation(omega: f64) -> Self {
        Self {
            a_r: rotation(omega),
            c_r: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a_r.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorSolution {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub k_r: DMatrix<f64>,
    pub residual: f64,
}

/// Solve X·A_r = A·X + B·U and C·X + D·U = C_r, then K_r = U − K_x·X.
///
/// The equations are vectorized column-major and solved in the least-squares
/// sense by SVD; a residual above [`REGULATOR_RESIDUAL_TOL`] is an error.
pub fn solve_regulator(plant: &Plant, exo: &ExoSystem, k_x: &DMatrix<f64>) -> Result<RegulatorSolution> {
    let (n, p, m, nr) = (plant.state_dim(), plant.input_dim(), plant.output_dim(), exo.state_dim());
    if exo.c_r.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: exo.c_r.nrows(),
            context: "C_r rows vs plant outputs",
        });
    }
    if k_x.nrows() != p || k_x.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: p * n,
            got: k_x.nrows() * k_x.ncols(),
            context: "K_x shape",
        });
    }
    let i_r = DMatrix::<f64>::identity(nr, nr);
    let i_n = DMatrix::<f64>::identity(n, n);
    let (ux, uu) = (n * nr, p * nr);
    let rows = n * nr + m * nr;
    let mut sys = DMatrix::<f64>::zeros(rows, ux + uu);
    // vec(X A_r − A X − B U) = (A_rᵀ ⊗ I − I ⊗ A) vec X − (I ⊗ B) vec U
    let top_x = exo.a_r.transpose().kronecker(&i_n) - i_r.kronecker(&plant.a);
    sys.view_mut((0, 0), (n * nr, ux)).copy_from(&top_x);
    sys.view_mut((0, ux), (n * nr, uu)).copy_from(&(-i_r.kronecker(&plant.b)));
    sys.view_mut((n * nr, 0), (m * nr, ux)).copy_from(&i_r.kronecker(&plant.c));
    sys.view_mut((n * nr, ux), (m * nr, uu)).copy_from(&i_r.kronecker(&plant.d));
    let mut rhs = DVector::<f64>::zeros(rows);
    rhs.rows_mut(n * nr, m * nr).copy_from_slice(exo.c_r.as_slice());

    let sol = sys
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| Error::Unsolvable { residual: f64::INFINITY })?;
    let residual = (&sys * &sol - &rhs).norm();
    if !residual.is_finite() || residual > REGULATOR_RESIDUAL_TOL {
        return Err(Error::Unsolvable { residual });
    }
    let x = DMatrix::from_column_slice(n, nr, &sol.as_slice()[..ux]);
    let u = DMatrix::from_column_slice(p, nr, &sol.as_slice()[ux..]);
    let k_r = &u - k_x * &x;
    Ok(RegulatorSolution { x, u, k_r, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationConfig {
    pub plant: Plant,
    pub exo: ExoSystem,
    pub k_x: DMatrix<f64>,
    pub k_r: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub r0: DVector<f64>,
    pub k0: i64,
    pub horizon: usize,
}

impl RegulationConfig {
    fn validate(&self) -> Result<()> {
        let (n, p, nr) = (self.plant.state_dim(), self.plant.input_dim(), self.exo.state_dim());
        for (ok, expected, got, context) in [
            (self.x0.len() == n, n, self.x0.len(), "x0"),
            (self.r0.len() == nr, nr, self.r0.len(), "r0"),
            (self.k_x.nrows() == p && self.k_x.ncols() == n, p * n, self.k_x.len(), "K_x"),
            (self.k_r.nrows() == p && self.k_r.ncols() == nr, p * nr, self.k_r.len(), "K_r"),
            (self.exo.c_r.nrows() == self.plant.output_dim(), self.plant.output_dim(), self.exo.c_r.nrows(), "C_r rows"),
        ] {
            if !ok {
                return Err(Error::DimensionMismatch { expected, got, context });
            }
        }
        Ok(())
    }
}

/// How the transmitted exo state is perturbed.
#[derive(Debug, Clone)]
pub enum Perturbation<'a> {
    Noiseless,
    Laplace {
        noise: &'a NoiseSchedule,
        sampler: LaplaceSampler,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationRecord {
    pub k: i64,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    /// Transmitted exo state r_k + v_k.
    pub r_hat: Vec<f64>,
    /// C_r·(r_k + v_k), the noisy reference as seen by the plant.
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub e: Vec<f64>,
    pub b_k: f64,
}

pub fn simulate_regulation(cfg: &RegulationConfig, perturbation: &Perturbation<'_>) -> Result<Vec<RegulationRecord>> {
    cfg.validate()?;
    let nr = cfg.exo.state_dim();
    let mut x = cfg.x0.clone();
    let mut r = cfg.r0.clone();
    let mut out = Vec::with_capacity(cfg.horizon + 1);
    for j in 0..=cfg.horizon {
        let k = cfg.k0 + j as i64;
        let (v, b_k) = match perturbation {
            Perturbation::Noiseless => (DVector::zeros(nr), 0.0),
            Perturbation::Laplace { noise, sampler } => (sampler.sample(noise, k, nr)?, noise.get(k)?),
        };
        let r_hat = &r + v;
        let u = &cfg.k_x * &x + &cfg.k_r * &r_hat;
        let z = &cfg.plant.c * &x + &cfg.plant.d * &u;
        let e = &z - &cfg.exo.c_r * &r;
        if !z.iter().chain(x.iter()).all(|v| v.is_finite()) || x.amax() > DIVERGENCE_BOUND {
            return Err(Error::Diverged { step: k });
        }
        out.push(RegulationRecord {
            k,
            x: x.iter().copied().collect(),
            r: r.iter().copied().collect(),
            y: (&cfg.exo.c_r * &r_hat).iter().copied().collect(),
            r_hat: r_hat.iter().copied().collect(),
            z: z.iter().copied().collect(),
            e: e.iter().copied().collect(),
            b_k,
        });
        x = &cfg.plant.a * &x + &cfg.plant.b * u;
        r = &cfg.exo.a_r * &r;
    }
    Ok(out)
}

/// Mean of |e_k|₁ over the records.
pub fn mean_abs_error(records: &[RegulationRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records
        .iter()
        .map(|r| r.e.iter().map(|v| v.abs()).sum::<f64>())
        .sum::<f64>()
        / records.len() as f64
}
