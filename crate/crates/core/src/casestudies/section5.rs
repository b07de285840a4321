//! Numerical example: hiding the frequency ω of a rotating reference generator
//! while a scalar plant tracks its first coordinate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::parameter::MatrixFamily;
use super::regulation::{
    mean_abs_error, simulate_regulation, solve_regulator, ExoSystem, Perturbation, Plant, RegulationConfig,
    RegulationRecord, RegulatorSolution,
};
use super::report::{TableRow, TrajectoryRow};
use crate::audit::{privacy_loss, PrivacyAuditReport};
use crate::error::{Error, Result};
use crate::mechanism::{design_noise, EpsilonSchedule, LaplaceSampler, NoiseSchedule, ParameterBounds};

pub const LAMBDA: f64 = 1.0;
pub const LAMBDA_BAR: f64 = 1.1;
pub const MU: f64 = 300.0;
pub const THETA_BAR: f64 = 1.0;
pub const ZETA: f64 = 1.0;
pub const EPS_SCALE: f64 = 100.0;
pub const EPS_TILDE_SCALE: f64 = 500.0;
pub const K_X: f64 = -0.3;

pub const PAPER_BETA: f64 = 1571.0;
pub const PAPER_B: f64 = 22.21;
pub const PAPER_B_TILDE: f64 = 4.442;
pub const PAPER_X: [f64; 2] = [1.0, 0.0];
pub const PAPER_U: [f64; 2] = [-0.0489, 0.3090];
pub const PAPER_K_R: [f64; 2] = [0.1511, 0.3090];

/// Frequency consistent with the published U.
pub const OMEGA: f64 = PI / 10.0;
/// Frequency stated alongside the plant data.
pub const OMEGA_TEXT: f64 = PI / 20.0;

pub fn bounds() -> ParameterBounds {
    ParameterBounds {
        n: 2,
        lambda: LAMBDA,
        lambda_bar: LAMBDA_BAR,
        mu: MU,
        theta_bar: THETA_BAR,
        k0: 0,
    }
}

pub fn plant() -> Plant {
    Plant::scalar(1.0, 1.0, 1.0, 0.0)
}

pub fn k_x() -> DMatrix<f64> {
    DMatrix::from_element(1, 1, K_X)
}

/// ε_k = scale·Σ_{i≤k} λ̄^{i−k0} over [k0, k0 + horizon].
pub fn epsilon(scale: f64, horizon: usize) -> Result<EpsilonSchedule> {
    EpsilonSchedule::geometric(0, scale, LAMBDA_BAR, horizon + 1)
}

/// b_k = λ̄^{k−k0}·√2·ζ·max(θ̄β, 1)/(ε_k − ε_{k−1}) for a given β.
pub fn noise(beta: f64, eps: &EpsilonSchedule, horizon: usize) -> Result<NoiseSchedule> {
    let alpha = 2f64.sqrt() * ZETA * (THETA_BAR * beta).max(1.0);
    design_noise(|k| LAMBDA_BAR.powi(k as i32), alpha, eps, horizon)
}

/// Closed form of the constant diversity for ε_k = scale·Σλ̄^i.
pub fn diversity(beta: f64, eps_scale: f64) -> f64 {
    2f64.sqrt() * ZETA * (THETA_BAR * beta).max(1.0) / eps_scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section5Config {
    /// Use β = 1571 and the published K_r instead of recomputed values.
    pub paper_constants: bool,
    pub omega: f64,
    pub r0: [f64; 2],
    pub x0: f64,
    pub horizon: usize,
    pub seed: u64,
    pub monte_carlo_seeds: usize,
}

impl Default for Section5Config {
    fn default() -> Self {
        Self {
            paper_constants: false,
            omega: OMEGA,
            r0: [100.0, 0.0],
            x0: 0.0,
            horizon: 300,
            seed: 0,
            monte_carlo_seeds: 20,
        }
    }
}

impl Section5Config {
    pub fn validate(&self) -> Result<()> {
        let r = (self.r0[0].powi(2) + self.r0[1].powi(2)).sqrt();
        if !(r <= MU) {
            return Err(Error::invalid("r0", format!("|r0|_2 = {r} exceeds mu = {MU}")));
        }
        if !(self.omega > 0.0 && self.omega <= THETA_BAR) {
            return Err(Error::invalid("omega", format!("must lie in (0, {THETA_BAR}], got {}", self.omega)));
        }
        if self.monte_carlo_seeds == 0 {
            return Err(Error::invalid("monte_carlo_seeds", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub mean_abs_error_b: Vec<f64>,
    pub mean_abs_error_b_tilde: Vec<f64>,
    pub aggregate_b: f64,
    pub aggregate_b_tilde: f64,
    /// max |e_k| for k ≥ 200 without noise.
    pub noiseless_tail_error: f64,
    pub tradeoff_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section5Report {
    pub config: Section5Config,
    pub beta: f64,
    pub beta_used: f64,
    pub b: f64,
    pub b_tilde: f64,
    pub regulator: RegulatorSolution,
    pub k_r_used: Vec<f64>,
    pub u_at_text_omega: Vec<f64>,
    pub k_x_implied_by_paper_k_r: f64,
    pub omega_adjacent: f64,
    pub table: Vec<TableRow>,
    pub tracking: TrackingSummary,
    pub audit_b: PrivacyAuditReport,
    pub audit_b_tilde: PrivacyAuditReport,
    pub figure2_b: Vec<TrajectoryRow>,
    pub figure2_b_tilde: Vec<TrajectoryRow>,
    pub figure3_omega: Vec<TrajectoryRow>,
    pub figure3_omega_adjacent: Vec<TrajectoryRow>,
}

fn regulation_config(cfg: &Section5Config, omega: f64, k_r: &DMatrix<f64>) -> RegulationConfig {
    RegulationConfig {
        plant: plant(),
        exo: ExoSystem::rotation(omega),
        k_x: k_x(),
        k_r: k_r.clone(),
        x0: DVector::from_element(1, cfg.x0),
        r0: DVector::from_column_slice(&cfg.r0),
        k0: 0,
        horizon: cfg.horizon,
    }
}

fn rows(records: &[RegulationRecord], eps: &EpsilonSchedule, audit: &PrivacyAuditReport) -> Result<Vec<TrajectoryRow>> {
    records
        .iter()
        .enumerate()
        .map(|(j, r)| {
            Ok(TrajectoryRow {
                k: r.k,
                r1: r.r[0],
                r2: r.r[1],
                y: r.y[0],
                z: r.z[0],
                e: r.e[0],
                b_k: r.b_k,
                eps_k: eps.value(r.k)?,
                l_k: audit.cumulative_loss[j],
            })
        })
        .collect()
}

/// Privacy audit of the exo-system for parameters ω and ω′ with shared r0.
pub fn audit_omega_pair(
    omega: f64,
    omega_adjacent: f64,
    r0: [f64; 2],
    noise: &NoiseSchedule,
    eps: &EpsilonSchedule,
    horizon: usize,
) -> Result<PrivacyAuditReport> {
    let model = MatrixFamily::Rotation.model();
    let xa = DVector::from_vec(vec![r0[0], r0[1], omega]);
    let xb = DVector::from_vec(vec![r0[0], r0[1], omega_adjacent]);
    privacy_loss(&model, &xa, &xb, noise, eps, 0, horizon)
}

pub fn reproduce_section5(cfg: &Section5Config) -> Result<Section5Report> {
    cfg.validate()?;
    let h = cfg.horizon;
    let beta = bounds().beta();
    let beta_used = if cfg.paper_constants { PAPER_BETA } else { beta };

    let eps = epsilon(EPS_SCALE, h)?;
    let eps_tilde = epsilon(EPS_TILDE_SCALE, h)?;
    let noise_b = noise(beta_used, &eps, h)?;
    let noise_bt = noise(beta_used, &eps_tilde, h)?;

    let regulator = solve_regulator(&plant(), &ExoSystem::rotation(cfg.omega), &k_x())?;
    let at_text = solve_regulator(&plant(), &ExoSystem::rotation(OMEGA_TEXT), &k_x())?;
    let k_r = if cfg.paper_constants {
        DMatrix::from_row_slice(1, 2, &PAPER_K_R)
    } else {
        regulator.k_r.clone()
    };
    let k_x_implied = (PAPER_U[0] - PAPER_K_R[0]) / PAPER_X[0];

    let omega_adj = (cfg.omega * ZETA.exp()).min(THETA_BAR);
    let audit_b = audit_omega_pair(cfg.omega, omega_adj, cfg.r0, &noise_b, &eps, h)?;
    let audit_bt = audit_omega_pair(cfg.omega, omega_adj, cfg.r0, &noise_bt, &eps_tilde, h)?;

    let reg = regulation_config(cfg, cfg.omega, &k_r);
    let base = LaplaceSampler::new(cfg.seed);
    let rec_b = simulate_regulation(&reg, &Perturbation::Laplace { noise: &noise_b, sampler: base })?;
    let rec_bt = simulate_regulation(&reg, &Perturbation::Laplace { noise: &noise_bt, sampler: base })?;

    // the adjacent frequency gets its own gains so both loops track
    let k_r_adj = if cfg.paper_constants {
        k_r.clone()
    } else {
        solve_regulator(&plant(), &ExoSystem::rotation(omega_adj), &k_x())?.k_r
    };
    let reg_adj = regulation_config(cfg, omega_adj, &k_r_adj);
    let rec_adj = simulate_regulation(
        &reg_adj,
        &Perturbation::Laplace {
            noise: &noise_b,
            sampler: base.substream(1),
        },
    )?;

    let tracking = tracking_summary(cfg, &reg, &noise_b, &noise_bt)?;

    let mut table = vec![
        TableRow::new("beta", beta, Some(PAPER_BETA), "lambda_bar*mu/(lambda_bar^2-1)"),
        TableRow::new("b_k", diversity(beta, EPS_SCALE), Some(PAPER_B), "exact beta"),
        TableRow::new("b_k (beta=1571)", diversity(PAPER_BETA, EPS_SCALE), Some(PAPER_B), "rounded beta"),
        TableRow::new("b~_k", diversity(beta, EPS_TILDE_SCALE), Some(PAPER_B_TILDE), "exact beta"),
        TableRow::new("b~_k (beta=1571)", diversity(PAPER_BETA, EPS_TILDE_SCALE), Some(PAPER_B_TILDE), "rounded beta"),
    ];
    for (i, &p) in PAPER_X.iter().enumerate() {
        table.push(TableRow::new(format!("X[{i}]"), regulator.x[(0, i)], Some(p), format!("omega={:.6}", cfg.omega)));
    }
    for (i, &p) in PAPER_U.iter().enumerate() {
        table.push(TableRow::new(format!("U[{i}]"), regulator.u[(0, i)], Some(p), format!("omega={:.6}", cfg.omega)));
    }
    for (i, &p) in PAPER_U.iter().enumerate() {
        table.push(TableRow::new(
            format!("U[{i}] at pi/20"),
            at_text.u[(0, i)],
            Some(p),
            "frequency stated in the text; does not match printed U",
        ));
    }
    for (i, &p) in PAPER_K_R.iter().enumerate() {
        table.push(TableRow::new(
            format!("K_r[{i}]"),
            regulator.k_r[(0, i)],
            Some(p),
            "U - K_x X with K_x=-0.3",
        ));
    }
    table.push(TableRow::new(
        "K_x implied by printed K_r",
        k_x_implied,
        Some(K_X),
        "printed K_r equals U - K_x X only for this K_x",
    ));
    table.push(TableRow::new("omega used", cfg.omega, Some(OMEGA_TEXT), "printed U corresponds to pi/10"));

    Ok(Section5Report {
        config: cfg.clone(),
        beta,
        beta_used,
        b: noise_b.get(0)?,
        b_tilde: noise_bt.get(0)?,
        k_r_used: k_r.iter().copied().collect(),
        u_at_text_omega: at_text.u.iter().copied().collect(),
        k_x_implied_by_paper_k_r: k_x_implied,
        omega_adjacent: omega_adj,
        table,
        tracking,
        figure2_b: rows(&rec_b, &eps, &audit_b)?,
        figure2_b_tilde: rows(&rec_bt, &eps_tilde, &audit_bt)?,
        figure3_omega: rows(&rec_b, &eps, &audit_b)?,
        figure3_omega_adjacent: rows(&rec_adj, &eps, &audit_b)?,
        audit_b,
        audit_b_tilde: audit_bt,
        regulator,
    })
}

fn tracking_summary(
    cfg: &Section5Config,
    reg: &RegulationConfig,
    noise_b: &NoiseSchedule,
    noise_bt: &NoiseSchedule,
) -> Result<TrackingSummary> {
    let base = LaplaceSampler::new(cfg.seed);
    let per_seed: Vec<(f64, f64)> = (0..cfg.monte_carlo_seeds as u64)
        .into_par_iter()
        .map(|s| {
            // common random numbers: the same draws scaled by each diversity
            let sampler = base.substream(100 + s);
            let a = simulate_regulation(reg, &Perturbation::Laplace { noise: noise_b, sampler })?;
            let b = simulate_regulation(reg, &Perturbation::Laplace { noise: noise_bt, sampler })?;
            Ok((mean_abs_error(&a), mean_abs_error(&b)))
        })
        .collect::<Result<_>>()?;
    let (mb, mbt): (Vec<f64>, Vec<f64>) = per_seed.into_iter().unzip();
    let n = mb.len() as f64;
    let (agg_b, agg_bt) = (mb.iter().sum::<f64>() / n, mbt.iter().sum::<f64>() / n);

    let clean = simulate_regulation(reg, &Perturbation::Noiseless)?;
    let tail = clean
        .iter()
        .filter(|r| r.k >= 200)
        .map(|r| r.e[0].abs())
        .fold(0.0, f64::max);
    Ok(TrackingSummary {
        tradeoff_holds: agg_bt < agg_b,
        mean_abs_error_b: mb,
        mean_abs_error_b_tilde: mbt,
        aggregate_b: agg_b,
        aggregate_b_tilde: agg_bt,
        noiseless_tail_error: tail,
    })
}
