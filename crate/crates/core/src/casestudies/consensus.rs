//! Single agent of a planar average-consensus network.
//!
//! The agent's position evolves as x_{k+1} = (1 − Σa)·x_k with the neighbour
//! terms treated as exogenous, and it broadcasts y_k = x_k + v_k.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contraction::{ContractionCertificate, MetricCandidate};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::geometry::{Chart, MetricField, AFFINE_LINE_METRIC, STREET_SLOPE};
use crate::mechanism::{consensus_noise, design_noise_exponential, EpsilonSchedule, NoiseSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusAgentConfig {
    pub row_weights: Vec<f64>,
    pub zeta: f64,
    pub eps_total: f64,
    pub chart: Chart,
    #[serde(default)]
    pub k0: i64,
    pub horizon: usize,
}

impl ConsensusAgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.row_weights.is_empty() {
            return Err(Error::invalid("row_weights", "at least one neighbour weight is required"));
        }
        if let Some(a) = self.row_weights.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::invalid("row_weights", format!("weights must lie in (0, 1), got {a}")));
        }
        let s = self.row_sum();
        if !(s < 1.0) {
            return Err(Error::invalid("row_weights", format!("row sum must be below 1, got {s}")));
        }
        if !matches!(self.chart, Chart::Euclidean | Chart::AffineLine) {
            return Err(Error::invalid("chart", format!("consensus agent supports euclidean or affine-line, got {}", self.chart)));
        }
        if !(self.zeta > 0.0) || !(self.eps_total > 0.0) {
            return Err(Error::invalid("zeta", "zeta and eps_total must be positive"));
        }
        Ok(())
    }

    pub fn row_sum(&self) -> f64 {
        self.row_weights.iter().sum()
    }

    /// 1 − Σa
    pub fn contraction_factor(&self) -> f64 {
        1.0 - self.row_sum()
    }

    /// Adjacency metric in the chart's own coordinates.
    pub fn metric(&self) -> MetricField {
        MetricField::for_chart(self.chart, if self.chart == Chart::AffineLine { 1 } else { 2 })
    }
}

#[derive(Debug, Clone)]
pub struct ConsensusSetup {
    pub model: SystemModel,
    pub noise: NoiseSchedule,
    /// ε_k = ε·Σa·Σ_{i≤k}(1 − Σa)^{i−k0}, bounded by ε.
    pub budget: EpsilonSchedule,
    pub diversity: f64,
}

pub fn build_consensus_model(cfg: &ConsensusAgentConfig) -> Result<ConsensusSetup> {
    cfg.validate()?;
    let q = cfg.contraction_factor();
    let model = SystemModel::linear(
        "consensus-agent",
        DMatrix::identity(2, 2) * q,
        DMatrix::identity(2, 2),
    );
    let diversity = consensus_noise(cfg.zeta, cfg.eps_total, cfg.row_sum())?;
    let (noise, budget) = design_noise_exponential(
        1.0,
        q,
        std::f64::consts::SQRT_2 * cfg.zeta,
        cfg.eps_total * cfg.row_sum(),
        q,
        cfg.k0,
        cfg.horizon,
    )?;
    Ok(ConsensusSetup {
        model,
        noise,
        budget,
        diversity,
    })
}

/// Certificate in the street coordinate t (state (3t, t)): P = 10, c₁ = c₂ = 1,
/// λ_k = (1 − Σa)^{k−k0}.
pub fn affine_line_certificate(cfg: &ConsensusAgentConfig) -> Result<(SystemModel, ContractionCertificate)> {
    cfg.validate()?;
    let q = cfg.contraction_factor();
    let model = SystemModel::linear(
        "consensus-agent-street",
        DMatrix::from_element(1, 1, q),
        DMatrix::from_column_slice(2, 1, &[STREET_SLOPE, 1.0]),
    );
    let k0 = cfg.k0;
    let cert = ContractionCertificate::new(
        1.0,
        1.0,
        k0,
        move |k| q.powi((k - k0) as i32),
        MetricCandidate::constant(DMatrix::from_element(1, 1, AFFINE_LINE_METRIC)),
        MetricField::affine_line(),
    )?;
    Ok((model, cert))
}

/// Half-width of the set of x₂′ values protected at level ε around x₂, when the
/// agent moves along `direction` (x₂ component normalized to 1).
///
/// The full-horizon loss is |Δx|₁·ε/(√2ζ), so the protected set is
/// |Δx₂| ≤ √2ζ / ‖direction‖₁.
pub fn indistinguishable_half_width(zeta: f64, direction: &DVector<f64>) -> Result<f64> {
    if direction.len() != 2 || direction[1] == 0.0 {
        return Err(Error::invalid("direction", "expected a planar direction with nonzero x2 component"));
    }
    let d = direction / direction[1];
    Ok(std::f64::consts::SQRT_2 * zeta / d.iter().map(|v| v.abs()).sum::<f64>())
}

/// Half-width for the chart: free plane with x₁ fixed, or the street x₁ = 3x₂.
pub fn chart_half_width(zeta: f64, chart: Chart) -> Result<f64> {
    let dir = match chart {
        Chart::Euclidean => DVector::from_vec(vec![0.0, 1.0]),
        Chart::AffineLine => DVector::from_vec(vec![STREET_SLOPE, 1.0]),
        other => return Err(Error::invalid("chart", format!("no consensus half-width for {other}"))),
    };
    indistinguishable_half_width(zeta, &dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::privacy_loss;
    use crate::contraction::{linspace, tensor_grid, verify_oib_grid};

    fn cfg(chart: Chart) -> ConsensusAgentConfig {
        ConsensusAgentConfig {
            row_weights: vec![0.2, 0.3],
            zeta: 1.0,
            eps_total: 1.0,
            chart,
            k0: 0,
            horizon: 20,
        }
    }

    #[test]
    fn diversity_example() {
        let s = build_consensus_model(&cfg(Chart::Euclidean)).unwrap();
        assert!((s.diversity - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        for b in s.noise.diversities() {
            assert!((b - s.diversity).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_weights() {
        let mut c = cfg(Chart::Euclidean);
        c.row_weights = vec![0.6, 0.5];
        assert!(build_consensus_model(&c).is_err());
        c.row_weights = vec![0.0];
        assert!(build_consensus_model(&c).is_err());
        c.row_weights = vec![];
        assert!(build_consensus_model(&c).is_err());
    }

    #[test]
    fn audit_over_twenty_steps() {
        let c = cfg(Chart::Euclidean);
        let s = build_consensus_model(&c).unwrap();
        // adjacent pairs at Euclidean distance ζ in several directions
        for angle in [0.0, 0.4, std::f64::consts::FRAC_PI_4, 1.3] {
            let xa = DVector::from_vec(vec![5.0, -2.0]);
            let xb = &xa + DVector::from_vec(vec![f64::cos(angle), f64::sin(angle)]) * c.zeta;
            let r = privacy_loss(&s.model, &xa, &xb, &s.noise, &s.budget, 0, 20).unwrap();
            assert!(r.satisfied, "{r:?}");
            // oracle: L_k = |Δx|₁·Σ q^i / b
            let q = c.contraction_factor();
            let l1 = (xa.clone() - &xb).abs().sum();
            for (k, l) in r.cumulative_loss.iter().enumerate() {
                let oracle = l1 * (1.0 - q.powi(k as i32 + 1)) / (1.0 - q) / s.diversity;
                assert!((l - oracle).abs() < 1e-12);
            }
        }
        assert!(s.budget.value(20).unwrap() < c.eps_total);
    }

    #[test]
    fn street_certificate_passes() {
        let c = cfg(Chart::AffineLine);
        let (model, cert) = affine_line_certificate(&c).unwrap();
        let grid = tensor_grid(&(0..20).collect::<Vec<_>>(), &[linspace(-5.0, 5.0, 11)]);
        let r = verify_oib_grid(&model, &cert, &grid, 1e-9).unwrap();
        assert!(r.passed);
        assert!((r.alpha_coefficient - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn half_widths() {
        assert!((chart_half_width(1.0, Chart::Euclidean).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((chart_half_width(1.0, Chart::AffineLine).unwrap() - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn street_half_width_is_where_the_budget_binds() {
        // a long horizon drives the loss to ε exactly at the half-width
        let mut c = cfg(Chart::AffineLine);
        c.horizon = 400;
        let s = build_consensus_model(&c).unwrap();
        let w = chart_half_width(c.zeta, Chart::AffineLine).unwrap();
        let on_street = |t: f64| DVector::from_vec(vec![STREET_SLOPE * t, t]);
        let at = privacy_loss(&s.model, &on_street(1.0), &on_street(1.0 + w), &s.noise, &s.budget, 0, 400).unwrap();
        assert!((at.final_loss() - c.eps_total).abs() < 1e-9);
        let beyond = privacy_loss(&s.model, &on_street(1.0), &on_street(1.0 + 1.01 * w), &s.noise, &s.budget, 0, 400).unwrap();
        assert!(beyond.final_loss() > c.eps_total);

        let free = |t: f64| DVector::from_vec(vec![0.0, t]);
        let wf = chart_half_width(c.zeta, Chart::Euclidean).unwrap();
        let l = privacy_loss(&s.model, &free(1.0), &free(1.0 + wf), &s.noise, &s.budget, 0, 400).unwrap();
        assert!((l.final_loss() - c.eps_total).abs() < 1e-9);
    }
}
