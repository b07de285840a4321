//! TOML run configuration. Every section is optional at parse time; each
//! command asks for the sections it needs and reports the missing key by name.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use dp_contract::casestudies::consensus::ConsensusAgentConfig;
use dp_contract::casestudies::section5::Section5Config;
use dp_contract::{Chart, EpsilonSchedule, ParameterBounds};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub design: Option<DesignSection>,
    pub epsilon: Option<EpsilonSection>,
    pub theorem1: Option<Theorem1Section>,
    pub bounds: Option<BoundsSection>,
    pub exponential: Option<ExponentialSection>,
    pub consensus: Option<ConsensusSection>,
    pub verify: Option<VerifySection>,
    pub model: Option<ModelSection>,
    pub certificate: Option<CertificateSection>,
    pub grid: Option<GridSection>,
    pub noise: Option<NoiseSection>,
    pub audit: Option<AuditSection>,
    pub section5: Option<Section5Section>,
    pub example1: Option<Example1Section>,
    pub theorem3: Option<Theorem3Section>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }
}

pub fn require<'a, T>(section: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing config section `{key}`")))
}

fn missing(key: &str, why: &str) -> CliError {
    CliError::Config(format!("missing config key `{key}` ({why})"))
}

/// Row-major nested list to a matrix; `key` names the config entry in errors.
pub fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("`{key}` must be a non-empty rectangular matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    Theorem1,
    Theorem3,
    Exponential,
    Consensus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub mode: DesignMode,
    pub horizon: usize,
    #[serde(default = "one")]
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonKind {
    Geometric,
    Constant,
    Increments,
    Cumulative,
}

/// ε_k schedule. `geometric` uses scale and ratio, `constant` uses value,
/// `increments`/`cumulative` use values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    pub kind: EpsilonKind,
    #[serde(default)]
    pub k0: i64,
    pub scale: Option<f64>,
    pub ratio: Option<f64>,
    pub value: Option<f64>,
    pub values: Option<Vec<f64>>,
}

impl EpsilonSection {
    /// Schedule covering [k0, k0 + horizon].
    pub fn build(&self, horizon: usize) -> Result<EpsilonSchedule, CliError> {
        let len = horizon + 1;
        let s = match self.kind {
            EpsilonKind::Geometric => EpsilonSchedule::geometric(
                self.k0,
                self.scale.ok_or_else(|| missing("epsilon.scale", "kind = geometric"))?,
                self.ratio.ok_or_else(|| missing("epsilon.ratio", "kind = geometric"))?,
                len,
            ),
            EpsilonKind::Constant => EpsilonSchedule::constant(
                self.k0,
                self.value.ok_or_else(|| missing("epsilon.value", "kind = constant"))?,
                len,
            ),
            EpsilonKind::Increments => EpsilonSchedule::from_increments(
                self.k0,
                self.values.clone().ok_or_else(|| missing("epsilon.values", "kind = increments"))?,
            ),
            EpsilonKind::Cumulative => EpsilonSchedule::from_cumulative(
                self.k0,
                self.values.as_deref().ok_or_else(|| missing("epsilon.values", "kind = cumulative"))?,
            ),
        };
        s.map_err(|e| CliError::Config(format!("epsilon: {e}")))
    }
}

/// λ_k = lambda_scale · lambda_rate^{k−k0}. Either `alpha` is given, or it is
/// derived from c1, c2 and output_dim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Section {
    #[serde(default = "one")]
    pub lambda_scale: f64,
    pub lambda_rate: f64,
    pub alpha: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub output_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub n: usize,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub mu: f64,
    pub theta_bar: f64,
    #[serde(default)]
    pub k0: i64,
}

impl BoundsSection {
    pub fn to_bounds(self) -> ParameterBounds {
        ParameterBounds {
            n: self.n,
            lambda: self.lambda,
            lambda_bar: self.lambda_bar,
            mu: self.mu,
            theta_bar: self.theta_bar,
            k0: self.k0,
        }
    }

    pub fn from_bounds(b: ParameterBounds) -> Self {
        Self {
            n: b.n,
            lambda: b.lambda,
            lambda_bar: b.lambda_bar,
            mu: b.mu,
            theta_bar: b.theta_bar,
            k0: b.k0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialSection {
    #[serde(default = "one")]
    pub c_bar: f64,
    pub lambda_bar: f64,
    pub alpha: f64,
    pub c: f64,
    pub q: f64,
    #[serde(default)]
    pub k0: i64,
}

fn euclidean() -> Chart {
    Chart::Euclidean
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    pub row_weights: Vec<f64>,
    #[serde(default = "one")]
    pub zeta: f64,
    pub eps_total: f64,
    #[serde(default = "euclidean")]
    pub chart: Chart,
    #[serde(default)]
    pub k0: i64,
}

impl ConsensusSection {
    pub fn agent(&self, horizon: usize) -> ConsensusAgentConfig {
        ConsensusAgentConfig {
            row_weights: self.row_weights.clone(),
            zeta: self.zeta,
            eps_total: self.eps_total,
            chart: self.chart,
            k0: self.k0,
            horizon,
        }
    }
}

impl Default for ConsensusSection {
    fn default() -> Self {
        Self {
            row_weights: vec![0.25, 0.25],
            zeta: 1.0,
            eps_total: 1.0,
            chart: Chart::Euclidean,
            k0: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyTarget {
    /// Parameter certificate built from [bounds].
    Theorem3,
    /// Consensus agent on the street x1 = 3 x2, built from [consensus].
    ConsensusStreet,
    /// Linear [model] with a constant-metric [certificate] on a [grid].
    Custom,
}

fn default_steps() -> usize {
    20
}

fn default_z_points() -> usize {
    11
}

fn default_theta_points() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub target: VerifyTarget,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_z_points")]
    pub z_points: usize,
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// x⁺ = A x, y = C x
    Linear,
    /// (z, θ) with z⁺ = R(θ) z, y = z
    Rotation,
    /// (z, θ) with z⁺ = gain·θ·z, y = z
    ScalarParameter,
    /// planar consensus agent from [consensus]
    Consensus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Row-major matrices.
    pub a: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub n: Option<usize>,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub p: Vec<Vec<f64>>,
    /// Defaults to the identity.
    pub ambient: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default)]
    pub k0: i64,
    #[serde(default = "one")]
    pub lambda_scale: f64,
    pub lambda_rate: f64,
}

/// Tensor grid: k in [k_start, k_end], one linspace per state axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub k_start: i64,
    pub k_end: i64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSource {
    Constant,
    Values,
    Design,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub source: NoiseSource,
    pub b: Option<f64>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    Explicit,
    Ball,
}

fn default_samples() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub horizon: usize,
    #[serde(default)]
    pub k0: i64,
    pub pair: PairSource,
    pub xa: Option<Vec<f64>>,
    pub xb: Option<Vec<f64>>,
    /// Chart coordinates of the ball center.
    pub center: Option<Vec<f64>>,
    #[serde(default = "euclidean")]
    pub chart: Chart,
    pub zeta: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section5Section {
    pub omega: Option<f64>,
    pub r0: Option<[f64; 2]>,
    pub x0: Option<f64>,
    pub horizon: Option<usize>,
    pub monte_carlo_seeds: Option<usize>,
}

impl Section5Section {
    pub fn resolve(&self, seed: u64, paper_constants: bool) -> Section5Config {
        let d = Section5Config::default();
        Section5Config {
            paper_constants,
            omega: self.omega.unwrap_or(d.omega),
            r0: self.r0.unwrap_or(d.r0),
            x0: self.x0.unwrap_or(d.x0),
            horizon: self.horizon.unwrap_or(d.horizon),
            seed,
            monte_carlo_seeds: self.monte_carlo_seeds.unwrap_or(d.monte_carlo_seeds),
        }
    }
}

fn default_example1_horizon() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example1Section {
    #[serde(default = "default_example1_horizon")]
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Section {
    #[serde(default = "default_z_points")]
    pub z_points: usize,
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for Example1Section {
    fn default() -> Self {
        Self {
            horizon: default_example1_horizon(),
        }
    }
}

impl Default for Theorem3Section {
    fn default() -> Self {
        Self {
            z_points: default_z_points(),
            theta_points: default_theta_points(),
            steps: default_steps(),
        }
    }
}
