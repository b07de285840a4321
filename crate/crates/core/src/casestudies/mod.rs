//! End-to-end scenarios: a consensus agent, parameter privacy of a linear
//! family, and output regulation against a private reference generator.

pub mod consensus;
pub mod parameter;
pub mod regulation;
pub mod report;
pub mod section5;

use serde::{Deserialize, Serialize};

use crate::contraction::{theorem3_certificate, theorem3_grid, verify_oib_grid, GridVerificationReport};
use crate::error::Result;
use crate::geometry::Chart;
use crate::mechanism::ParameterBounds;

use consensus::{affine_line_certificate, build_consensus_model, chart_half_width, ConsensusAgentConfig};
use parameter::{check_hypotheses, MatrixFamily, HYPOTHESIS_GRID};
use report::TableRow;

/// Consensus agent table: diversity, certificate constant and protected half-widths.
pub fn reproduce_example1(cfg: &ConsensusAgentConfig) -> Result<Vec<TableRow>> {
    let setup = build_consensus_model(cfg)?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let formula = sqrt2 * cfg.zeta / (cfg.eps_total * cfg.row_sum());
    let street = ConsensusAgentConfig {
        chart: Chart::AffineLine,
        ..cfg.clone()
    };
    let (model, cert) = affine_line_certificate(&street)?;
    let grid = crate::contraction::tensor_grid(
        &(cfg.k0..cfg.k0 + cfg.horizon as i64).collect::<Vec<_>>(),
        &[crate::contraction::linspace(-10.0, 10.0, 21)],
    );
    let verified = verify_oib_grid(&model, &cert, &grid, crate::contraction::DEFAULT_PSD_TOL)?;
    Ok(vec![
        TableRow::new("b", setup.diversity, Some(formula), "sqrt(2)*zeta/(eps*sum a)"),
        TableRow::new(
            "eps_k at horizon",
            setup.budget.value(cfg.k0 + cfg.horizon as i64)?,
            Some(cfg.eps_total),
            "budget eps*sum(a)*sum (1-sum a)^i stays below eps",
        ),
        TableRow::new(
            "alpha/zeta (street certificate)",
            verified.alpha_coefficient,
            Some(sqrt2),
            if verified.passed { "grid check passed" } else { "grid check FAILED" },
        ),
        TableRow::new("half-width x2 (plane)", chart_half_width(cfg.zeta, Chart::Euclidean)?, Some(sqrt2 * cfg.zeta), ""),
        TableRow::new(
            "half-width x2 (street x1=3x2)",
            chart_half_width(cfg.zeta, Chart::AffineLine)?,
            Some(sqrt2 * cfg.zeta / 4.0),
            "l1 sensitivity |(3,1)|_1 = 4",
        ),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Summary {
    pub family: String,
    pub bounds: ParameterBounds,
    pub beta: f64,
    pub c2: f64,
    pub grid: GridVerificationReport,
}

/// Grid check of the parameter certificate for A(θ) = θ (n = 1) or the rotation family (n = 2).
pub fn reproduce_theorem3(bounds: &ParameterBounds, z_points: usize, theta_points: usize, steps: usize, tol: f64) -> Result<Theorem3Summary> {
    let family = if bounds.n == 2 {
        MatrixFamily::Rotation
    } else {
        MatrixFamily::Scalar { n: bounds.n, gain: 1.0 }
    };
    check_hypotheses(&family, bounds, HYPOTHESIS_GRID)?;
    let cert = theorem3_certificate(bounds)?;
    let grid = theorem3_grid(bounds, z_points, theta_points, steps);
    let report = verify_oib_grid(&family.model(), &cert, &grid, tol)?;
    Ok(Theorem3Summary {
        family: family.name(),
        bounds: *bounds,
        beta: bounds.beta(),
        c2: bounds.c2(),
        grid: report,
    })
}
