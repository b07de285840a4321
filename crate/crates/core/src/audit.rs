//! Exact privacy accounting for the additive Laplace mechanism.
//!
//! For outputs y = h(φ(x)) + v with v_k ∼ Lap(0, b_k)^m, the supremum over all
//! measurable sets of log P(y ∈ S | x) − log P(y ∈ S | x′) up to step k is
//!
//! ```text
//!   L_k = Σ_{i=k0..k} |Δy_i|₁ / b_i
//! ```
//!
//! which is what [`privacy_loss`] computes. The box routines evaluate the same
//! ratio on concrete product sets through the Laplace CDF and give a necessary
//! condition to test against.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::{sphere_point, ManifoldPoint, MetricField};
use crate::linalg;
use crate::mechanism::{EpsilonSchedule, LaplaceSampler, NoiseSchedule};

/// Relative slack used when comparing L_k with ε_k.
pub const BUDGET_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub xa: Vec<f64>,
    pub xb: Vec<f64>,
    /// Step with the smallest budget margin ε_k − L_k.
    pub k: i64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAuditReport {
    pub k0: i64,
    pub per_step_loss: Vec<f64>,
    pub cumulative_loss: Vec<f64>,
    pub budget: Vec<f64>,
    pub satisfied: bool,
    pub worst_pair: WorstPair,
    /// min_k (ε_k − L_k)
    pub margin: f64,
    /// max_k L_k / ε_k
    pub max_budget_fraction: f64,
}

impl PrivacyAuditReport {
    pub fn horizon(&self) -> usize {
        self.per_step_loss.len().saturating_sub(1)
    }

    pub fn final_loss(&self) -> f64 {
        self.cumulative_loss.last().copied().unwrap_or(0.0)
    }
}

/// Per-step losses |Δy_i|₁/b_i for two noiseless output sequences starting at k0.
pub fn per_step_loss(
    ya: &[DVector<f64>],
    yb: &[DVector<f64>],
    noise: &NoiseSchedule,
    k0: i64,
) -> Result<Vec<f64>> {
    if ya.len() != yb.len() {
        return Err(Error::DimensionMismatch {
            expected: ya.len(),
            got: yb.len(),
            context: "output sequences",
        });
    }
    ya.iter()
        .zip(yb)
        .enumerate()
        .map(|(j, (a, b))| {
            let k = k0 + j as i64;
            let bk = noise.get(k)?;
            if !(bk > 0.0) {
                return Err(Error::InvalidDiversity { step: k, value: bk });
            }
            Ok(linalg::l1_norm(&(a - b)) / bk)
        })
        .collect()
}

/// Build a report from output sequences; `xa`, `xb` are recorded as the pair.
pub fn report_from_outputs(
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    ya: &[DVector<f64>],
    yb: &[DVector<f64>],
    noise: &NoiseSchedule,
    eps: &EpsilonSchedule,
    k0: i64,
) -> Result<PrivacyAuditReport> {
    let per_step = per_step_loss(ya, yb, noise, k0)?;
    let mut cumulative = Vec::with_capacity(per_step.len());
    let mut acc = 0.0;
    for l in &per_step {
        acc += l;
        cumulative.push(acc);
    }
    let budget: Vec<f64> = (0..per_step.len())
        .map(|j| eps.value(k0 + j as i64))
        .collect::<Result<_>>()?;

    let satisfied = cumulative
        .iter()
        .zip(&budget)
        .all(|(l, e)| *l <= e * (1.0 + BUDGET_REL_TOL));
    let (mut worst_j, mut margin) = (0, f64::INFINITY);
    let mut fraction = 0.0_f64;
    for (j, (l, e)) in cumulative.iter().zip(&budget).enumerate() {
        if e - l < margin {
            margin = e - l;
            worst_j = j;
        }
        let f = if *e > 0.0 {
            l / e
        } else if *l > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        fraction = fraction.max(f);
    }
    Ok(PrivacyAuditReport {
        k0,
        worst_pair: WorstPair {
            xa: xa.iter().copied().collect(),
            xb: xb.iter().copied().collect(),
            k: k0 + worst_j as i64,
            loss: cumulative.get(worst_j).copied().unwrap_or(0.0),
        },
        per_step_loss: per_step,
        cumulative_loss: cumulative,
        budget,
        satisfied,
        margin,
        max_budget_fraction: fraction,
    })
}

/// Exact worst-case privacy loss between two initial states over [k0, k0 + horizon].
pub fn privacy_loss(
    model: &SystemModel,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    noise: &NoiseSchedule,
    eps: &EpsilonSchedule,
    k0: i64,
    horizon: usize,
) -> Result<PrivacyAuditReport> {
    let ta = simulate(model, xa, k0, horizon)?;
    let tb = simulate(model, xb, k0, horizon)?;
    report_from_outputs(xa, xb, &ta.outputs, &tb.outputs, noise, eps, k0)
}

/// Closed interval [lo, hi]; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::MalformedInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn at_least(lo: f64) -> Result<Self> {
        Self::new(lo, f64::INFINITY)
    }

    pub fn at_most(hi: f64) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, hi)
    }
}

/// Product set S_{k0} × S_{k0+1} × ⋯ with each S_k a box in R^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    steps: Vec<Vec<Interval>>,
}

impl BoxSet {
    pub fn new(steps: Vec<Vec<Interval>>) -> Result<Self> {
        for iv in steps.iter().flatten() {
            Interval::new(iv.lo, iv.hi)?;
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Vec<Interval>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// log P(lo ≤ X ≤ hi) for X ∼ Lap(a, b), accurate in the tails.
pub fn log_laplace_interval(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let (u, v) = ((lo - a) / b, (hi - a) / b);
    if v <= 0.0 {
        // ½(e^v − e^u), both on the left of the median
        v + (-(u - v).exp()).ln_1p() - std::f64::consts::LN_2
    } else if u >= 0.0 {
        -u + (-(u - v).exp()).ln_1p() - std::f64::consts::LN_2
    } else {
        (-0.5 * u.exp() - 0.5 * (-v).exp()).ln_1p()
    }
}

fn check_box_shape(center_outputs: &[DVector<f64>], set: &BoxSet) -> Result<()> {
    if center_outputs.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: center_outputs.len(),
            got: set.len(),
            context: "box set steps vs outputs",
        });
    }
    for (y, s) in center_outputs.iter().zip(&set.steps) {
        if y.len() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: s.len(),
                context: "box set coordinates vs output dimension",
            });
        }
    }
    Ok(())
}

/// log P(h + v ∈ S) for noiseless outputs `center_outputs` starting at k0.
pub fn log_box_probability(
    center_outputs: &[DVector<f64>],
    k0: i64,
    noise: &NoiseSchedule,
    set: &BoxSet,
) -> Result<f64> {
    check_box_shape(center_outputs, set)?;
    let mut total = 0.0;
    for (j, (y, s)) in center_outputs.iter().zip(&set.steps).enumerate() {
        let k = k0 + j as i64;
        let b = noise.get(k)?;
        if !(b > 0.0) {
            return Err(Error::InvalidDiversity { step: k, value: b });
        }
        for (yi, iv) in y.iter().zip(s) {
            total += log_laplace_interval(iv.lo, iv.hi, *yi, b);
        }
    }
    Ok(total)
}

/// P(h + v ∈ S) as an exact product of Laplace interval probabilities.
pub fn box_probability(
    center_outputs: &[DVector<f64>],
    k0: i64,
    noise: &NoiseSchedule,
    set: &BoxSet,
) -> Result<f64> {
    Ok(log_box_probability(center_outputs, k0, noise, set)?.exp())
}

/// Monte Carlo estimate of [`box_probability`], for cross-checking.
pub fn box_probability_monte_carlo(
    center_outputs: &[DVector<f64>],
    k0: i64,
    noise: &NoiseSchedule,
    set: &BoxSet,
    sampler: &LaplaceSampler,
    samples: usize,
) -> Result<f64> {
    check_box_shape(center_outputs, set)?;
    let hits: usize = (0..samples)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let s = sampler.substream(r as u64);
            for (j, (y, iv)) in center_outputs.iter().zip(&set.steps).enumerate() {
                let k = k0 + j as i64;
                let v = s.sample(noise, k, y.len())?;
                let inside = y
                    .iter()
                    .zip(v.iter())
                    .zip(iv)
                    .all(|((yi, vi), iv)| (iv.lo..=iv.hi).contains(&(yi + vi)));
                if !inside {
                    return Ok(0);
                }
            }
            Ok(1)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / samples as f64)
}

/// Absolute log-ratio of two box probabilities; +∞ when exactly one is zero.
pub fn box_log_ratio(log_pa: f64, log_pb: f64) -> f64 {
    match (log_pa == f64::NEG_INFINITY, log_pb == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => (log_pa - log_pb).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCheck {
    pub set_index: usize,
    /// Last step covered by the set.
    pub k: i64,
    pub log_ratio: f64,
    pub budget: f64,
    pub composition_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAuditResult {
    pub passed: bool,
    pub worst_log_ratio: f64,
    pub checks: Vec<BoxCheck>,
}

/// Check P(y ∈ S | xa) ≤ e^{ε_k}·P(y ∈ S | xb) and the reverse on each box.
///
/// A set with s steps covers [k0, k0 + s − 1] and is held to ε at its last step.
#[allow(clippy::too_many_arguments)]
pub fn verify_dp_on_boxes(
    model: &SystemModel,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    noise: &NoiseSchedule,
    eps: &EpsilonSchedule,
    sets: &[BoxSet],
    k0: i64,
    horizon: usize,
) -> Result<BoxAuditResult> {
    let ta = simulate(model, xa, k0, horizon)?;
    let tb = simulate(model, xb, k0, horizon)?;
    let loss = report_from_outputs(xa, xb, &ta.outputs, &tb.outputs, noise, eps, k0)?;
    let mut checks = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let s = set.len();
        if s == 0 || s > horizon + 1 {
            return Err(Error::invalid("sets", format!("set {i} covers {s} steps, horizon allows 1..={}", horizon + 1)));
        }
        let la = log_box_probability(&ta.outputs[..s], k0, noise, set)?;
        let lb = log_box_probability(&tb.outputs[..s], k0, noise, set)?;
        checks.push(BoxCheck {
            set_index: i,
            k: k0 + s as i64 - 1,
            log_ratio: box_log_ratio(la, lb),
            budget: loss.budget[s - 1],
            composition_loss: loss.cumulative_loss[s - 1],
        });
    }
    let worst = checks.iter().map(|c| c.log_ratio).fold(0.0, f64::max);
    Ok(BoxAuditResult {
        passed: checks
            .iter()
            .all(|c| c.log_ratio <= c.budget * (1.0 + BUDGET_REL_TOL)),
        worst_log_ratio: worst,
        checks,
    })
}

/// Evaluate [`privacy_loss`] between `center` and `n_samples` points on the
/// ζ-sphere around it and return the report of the worst pair.
///
/// Pairs are ranked by L_k/ε_k maximized over k, ties broken by sample index,
/// so the result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn worst_pair_search(
    model: &SystemModel,
    metric: &MetricField,
    center: &ManifoldPoint,
    zeta: f64,
    noise: &NoiseSchedule,
    eps: &EpsilonSchedule,
    k0: i64,
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PrivacyAuditReport> {
    if metric.kind().chart() != Some(center.chart()) {
        return Err(Error::UnsupportedChart(format!(
            "no adjacency-ball sampler for metric {:?} on chart {}",
            metric.kind(),
            center.chart()
        )));
    }
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::invalid("zeta", format!("must be finite and >= 0, got {zeta}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    let xa = center.to_state();
    let ta = simulate(model, &xa, k0, horizon)?;
    let reports: Vec<PrivacyAuditReport> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let other = sphere_point(center, zeta, i, &mut rng)?;
            let xb = other.to_state();
            let tb = simulate(model, &xb, k0, horizon)?;
            report_from_outputs(&xa, &xb, &ta.outputs, &tb.outputs, noise, eps, k0)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate().skip(1) {
        if r.max_budget_fraction > reports[best].max_budget_fraction {
            best = i;
        }
    }
    Ok(reports.into_iter().nth(best).expect("n_samples > 0"))
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(b"adjball\0");
    ChaCha8Rng::from_seed(key)
}
