//! Laplace noise schedules and their calibration against a privacy budget.
//!
//! Every schedule is indexed by absolute time step k starting at its own `k0`.
//! The budget ε_k is kept as increments ε_k − ε_{k−1} (with ε_{k0−1} = 0), which
//! is the quantity the calibration divides by.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative privacy budget ε_k over a finite window of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    k0: i64,
    increments: Vec<f64>,
}

impl EpsilonSchedule {
    /// From per-step increments ε_k − ε_{k−1}; each must be finite and ≥ 0.
    pub fn from_increments(k0: i64, increments: Vec<f64>) -> Result<Self> {
        if increments.is_empty() {
            return Err(Error::invalid("epsilon", "schedule is empty"));
        }
        for (j, &d) in increments.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NonIncreasingEpsilon {
                    step: k0 + j as i64,
                    increment: d,
                });
            }
        }
        Ok(Self { k0, increments })
    }

    /// From cumulative values ε_{k0}, ε_{k0+1}, ...
    pub fn from_cumulative(k0: i64, values: &[f64]) -> Result<Self> {
        let mut prev = 0.0;
        let increments = values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect();
        Self::from_increments(k0, increments)
    }

    /// ε_k = scale · Σ_{i=k0}^{k} ratio^{i−k0}, for `len` steps.
    pub fn geometric(k0: i64, scale: f64, ratio: f64, len: usize) -> Result<Self> {
        if !(scale > 0.0) || !(ratio > 0.0) {
            return Err(Error::invalid("epsilon", "scale and ratio must be positive"));
        }
        Self::from_increments(k0, (0..len).map(|j| scale * ratio.powi(j as i32)).collect())
    }

    /// The same ε at every step from k0 on (a single increment followed by zeros).
    pub fn constant(k0: i64, eps: f64, len: usize) -> Result<Self> {
        let mut inc = vec![0.0; len.max(1)];
        inc[0] = eps;
        Self::from_increments(k0, inc)
    }

    pub fn k0(&self) -> i64 {
        self.k0
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn last_step(&self) -> i64 {
        self.k0 + self.increments.len() as i64 - 1
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    fn index(&self, k: i64) -> Option<usize> {
        let j = k.checked_sub(self.k0)?;
        (j >= 0 && (j as usize) < self.increments.len()).then_some(j as usize)
    }

    /// ε_k − ε_{k−1}; zero before k0.
    pub fn increment(&self, k: i64) -> Result<f64> {
        if k < self.k0 {
            return Ok(0.0);
        }
        self.index(k)
            .map(|j| self.increments[j])
            .ok_or(Error::ScheduleTooShort { step: k })
    }

    /// ε_k; zero before k0.
    pub fn value(&self, k: i64) -> Result<f64> {
        if k < self.k0 {
            return Ok(0.0);
        }
        let j = self.index(k).ok_or(Error::ScheduleTooShort { step: k })?;
        Ok(self.increments[..=j].iter().sum())
    }

    /// All cumulative values, from k0.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect()
    }

    /// Error unless every increment in [k0, k0 + horizon] is strictly positive.
    pub fn ensure_strictly_increasing(&self, horizon: usize) -> Result<()> {
        for j in 0..=horizon {
            let k = self.k0 + j as i64;
            let d = self.increment(k)?;
            if !(d > 0.0) {
                return Err(Error::NonIncreasingEpsilon { step: k, increment: d });
            }
        }
        Ok(())
    }
}

/// Laplace diversities b_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    k0: i64,
    diversities: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(k0: i64, diversities: Vec<f64>) -> Result<Self> {
        for (j, &b) in diversities.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::InvalidDiversity {
                    step: k0 + j as i64,
                    value: b,
                });
            }
        }
        Ok(Self { k0, diversities })
    }

    pub fn constant(k0: i64, b: f64, len: usize) -> Result<Self> {
        Self::new(k0, vec![b; len])
    }

    pub fn k0(&self) -> i64 {
        self.k0
    }

    pub fn len(&self) -> usize {
        self.diversities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diversities.is_empty()
    }

    pub fn diversities(&self) -> &[f64] {
        &self.diversities
    }

    pub fn get(&self, k: i64) -> Result<f64> {
        let j = k - self.k0;
        if j < 0 || j as usize >= self.diversities.len() {
            return Err(Error::ScheduleTooShort { step: k });
        }
        Ok(self.diversities[j as usize])
    }

    /// Every b_k multiplied by `factor` ≥ 1.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(Error::invalid("safety", format!("multiplier must be >= 1, got {factor}")));
        }
        Self::new(self.k0, self.diversities.iter().map(|b| b * factor).collect())
    }
}

/// Tight calibration b_k = λ_k·α(ζ) / (ε_k − ε_{k−1}) over [k0, k0 + horizon],
/// with k0 taken from `eps`.
pub fn design_noise<L>(lambda: L, alpha_of_zeta: f64, eps: &EpsilonSchedule, horizon: usize) -> Result<NoiseSchedule>
where
    L: Fn(i64) -> f64,
{
    if !(alpha_of_zeta > 0.0) || !alpha_of_zeta.is_finite() {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha_of_zeta}")));
    }
    eps.ensure_strictly_increasing(horizon)?;
    let k0 = eps.k0();
    let mut b = Vec::with_capacity(horizon + 1);
    for j in 0..=horizon {
        let k = k0 + j as i64;
        let lk = lambda(k);
        if !(lk > 0.0) || !lk.is_finite() {
            return Err(Error::invalid("lambda", format!("lambda_{k} = {lk} is not positive")));
        }
        b.push(lk * alpha_of_zeta / eps.increment(k)?);
    }
    NoiseSchedule::new(k0, b)
}

/// Exponentially stable case: λ_k = c̄·λ̄^{k−k0}, ε_k = c·Σ q^{i−k0},
/// b_k = c̄·α(ζ)·λ̄^{k−k0} / (c·q^{k−k0}). With c = ε(1−q) the budget stays below ε forever.
pub fn design_noise_exponential(
    c_bar: f64,
    lambda_bar: f64,
    alpha_of_zeta: f64,
    c: f64,
    q: f64,
    k0: i64,
    horizon: usize,
) -> Result<(NoiseSchedule, EpsilonSchedule)> {
    if !(lambda_bar > 0.0 && lambda_bar < 1.0) {
        return Err(Error::invalid("lambda_bar", format!("must be in (0, 1), got {lambda_bar}")));
    }
    if !(q >= lambda_bar && q < 1.0) {
        return Err(Error::invalid("q", format!("must be in [lambda_bar, 1), got {q}")));
    }
    if !(c > 0.0) || !(c_bar > 0.0) {
        return Err(Error::invalid("c", "c and c_bar must be positive"));
    }
    let eps = EpsilonSchedule::geometric(k0, c, q, horizon + 1)?;
    let noise = design_noise(
        |k| c_bar * lambda_bar.powi((k - k0) as i32),
        alpha_of_zeta,
        &eps,
        horizon,
    )?;
    Ok((noise, eps))
}

/// Parameters of the bounded-parameter-sensitivity certificate for
/// z_{k+1} = A(θ) z_k with ‖A(θ)‖₂ ≤ λ ≤ 1, ‖dA/dθ‖₂ ≤ 1, |z_{k0}| ≤ μ, 0 < θ ≤ θ̄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub n: usize,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub mu: f64,
    pub theta_bar: f64,
    pub k0: i64,
}

impl ParameterBounds {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "state dimension must be positive"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(self.lambda_bar > self.lambda) {
            return Err(Error::invalid(
                "lambda_bar",
                format!("must exceed lambda = {}, got {}", self.lambda, self.lambda_bar),
            ));
        }
        if !(self.mu > 0.0) || !(self.theta_bar > 0.0) {
            return Err(Error::invalid("mu", "mu and theta_bar must be positive"));
        }
        Ok(())
    }

    /// β = λ̄μ / (λ̄² − λ²).
    pub fn beta(&self) -> f64 {
        self.lambda_bar * self.mu / (self.lambda_bar.powi(2) - self.lambda.powi(2))
    }

    /// max(θ̄β, 1).
    pub fn c2(&self) -> f64 {
        (self.theta_bar * self.beta()).max(1.0)
    }

    /// α(ζ) = √n·max(θ̄β, 1)·ζ.
    pub fn alpha(&self, zeta: f64) -> f64 {
        (self.n as f64).sqrt() * self.c2() * zeta
    }

    /// λ_k = λ̄^{k−k0}.
    pub fn lambda_k(&self, k: i64) -> f64 {
        self.lambda_bar.powi((k - self.k0) as i32)
    }
}

/// b_k = λ̄^{k−k0}·ζ·√n·max(θ̄β, 1) / (ε_k − ε_{k−1}).
pub fn design_noise_theorem3(
    bounds: &ParameterBounds,
    zeta: f64,
    eps: &EpsilonSchedule,
    horizon: usize,
) -> Result<NoiseSchedule> {
    bounds.validate()?;
    if !(zeta > 0.0) {
        return Err(Error::invalid("zeta", format!("must be positive, got {zeta}")));
    }
    if eps.k0() != bounds.k0 {
        return Err(Error::invalid("epsilon", "schedule must start at k0"));
    }
    design_noise(|k| bounds.lambda_k(k), bounds.alpha(zeta), eps, horizon)
}

/// Constant diversity √2·ζ / (ε·Σa) for a planar consensus agent with row sum Σa.
pub fn consensus_noise(zeta: f64, eps_total: f64, row_sum: f64) -> Result<f64> {
    if !(row_sum > 0.0 && row_sum < 1.0) {
        return Err(Error::invalid("row_weights", format!("row sum must be in (0, 1), got {row_sum}")));
    }
    if !(zeta > 0.0) || !(eps_total > 0.0) {
        return Err(Error::invalid("zeta", "zeta and epsilon must be positive"));
    }
    Ok(std::f64::consts::SQRT_2 * zeta / (eps_total * row_sum))
}

/// F(t; a, b) for Lap(a, b).
pub fn laplace_cdf(t: f64, location: f64, b: f64) -> f64 {
    let z = (t - location) / b;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Inverse CDF: v = a − b·sign(u − ½)·ln(1 − 2|u − ½|), for u ∈ (0, 1).
pub fn laplace_quantile(u: f64, location: f64, b: f64) -> f64 {
    let d = u - 0.5;
    location - b * d.signum() * (-2.0 * d.abs()).ln_1p()
}

/// Seeded Laplace sampler with an independent ChaCha stream per time step.
///
/// The draws at step k depend only on (seed, substream, k), so a longer run
/// reproduces the noise of a shorter one exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaplaceSampler {
    seed: u64,
    substream: u64,
    location_bits: u64,
}

impl LaplaceSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            substream: 0,
            location_bits: 0f64.to_bits(),
        }
    }

    pub fn with_location(mut self, location: f64) -> Self {
        self.location_bits = location.to_bits();
        self
    }

    /// Independent copy for parallel use (e.g. one per Monte Carlo replicate).
    pub fn substream(&self, index: u64) -> Self {
        Self {
            substream: index,
            ..*self
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn location(&self) -> f64 {
        f64::from_bits(self.location_bits)
    }

    fn rng(&self, k: i64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.substream.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(k as u64);
        rng
    }

    /// `count` i.i.d. Lap(location, b) draws for step k.
    pub fn draws(&self, k: i64, b: f64, count: usize) -> Vec<f64> {
        let mut rng = self.rng(k);
        let loc = self.location();
        (0..count)
            .map(|_| laplace_quantile(open_unit(&mut rng), loc, b))
            .collect()
    }

    /// The m-dimensional noise vector v_k ∼ Lap(0, b_k)^m.
    pub fn sample(&self, noise: &NoiseSchedule, k: i64, m: usize) -> Result<DVector<f64>> {
        let b = noise.get(k)?;
        Ok(DVector::from_vec(self.draws(k, b, m)))
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value √(−ln(α/2)/2)/√n.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
