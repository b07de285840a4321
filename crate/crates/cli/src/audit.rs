use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use dp_contract::casestudies::consensus::build_consensus_model;
use dp_contract::casestudies::parameter::MatrixFamily;
use dp_contract::{
    privacy_loss, worst_pair_search, EpsilonSchedule, ManifoldPoint, MetricField, NoiseSchedule, PrivacyAuditReport,
    SystemModel,
};

use crate::config::{matrix, require, FileConfig, ModelKind, NoiseSource, PairSource};
use crate::design::designed;
use crate::error::CliError;
use crate::output::OutputDir;
use crate::Outcome;

#[derive(Debug, Serialize)]
struct LossRow {
    k: i64,
    per_step_loss: f64,
    cumulative_loss: f64,
    eps_k: f64,
    budget_fraction: f64,
}

#[derive(Debug, Serialize)]
struct AuditOutput<'a> {
    model: &'a str,
    pair: PairSource,
    report: &'a PrivacyAuditReport,
}

fn build_model(cfg: &FileConfig, horizon: usize) -> Result<(SystemModel, Value), CliError> {
    let m = require(&cfg.model, "model")?;
    let model = match m.kind {
        ModelKind::Linear => {
            let a = matrix("model.a", m.a.as_deref().unwrap_or_default())?;
            let c = matrix("model.c", m.c.as_deref().unwrap_or_default())?;
            if !a.is_square() || c.ncols() != a.nrows() {
                return Err(CliError::Config("`model.a` must be square with as many columns as `model.c`".into()));
            }
            SystemModel::linear("linear", a, c)
        }
        ModelKind::Rotation => MatrixFamily::Rotation.model(),
        ModelKind::ScalarParameter => MatrixFamily::Scalar {
            n: m.n.unwrap_or(1),
            gain: m.gain.unwrap_or(1.0),
        }
        .model(),
        ModelKind::Consensus => {
            let c = require(&cfg.consensus, "consensus")?;
            return Ok((build_consensus_model(&c.agent(horizon))?.model, json!({ "model": m, "consensus": c })));
        }
    };
    Ok((model, json!({ "model": m })))
}

fn noise_and_budget(cfg: &FileConfig, k0: i64, horizon: usize) -> Result<(NoiseSchedule, EpsilonSchedule, Value), CliError> {
    let source = match &cfg.noise {
        Some(n) => n.source,
        None if cfg.design.is_some() => NoiseSource::Design,
        None => return Err(CliError::Config("missing config section `noise` (or `design`)".into())),
    };
    if source == NoiseSource::Design {
        let d = designed(cfg)?;
        let mut r = d.resolved;
        r["noise"] = json!(cfg.noise);
        return Ok((d.noise, d.eps, r));
    }
    let n = require(&cfg.noise, "noise")?;
    let noise = match source {
        NoiseSource::Constant => {
            let b = n.b.ok_or_else(|| CliError::Config("missing config key `noise.b` (source = constant)".into()))?;
            NoiseSchedule::constant(k0, b, horizon + 1)?
        }
        _ => {
            let v = n
                .values
                .clone()
                .ok_or_else(|| CliError::Config("missing config key `noise.values` (source = values)".into()))?;
            NoiseSchedule::new(k0, v)?
        }
    };
    let e = require(&cfg.epsilon, "epsilon")?;
    Ok((noise, e.build(horizon)?, json!({ "noise": n, "epsilon": e })))
}

fn vector(key: &str, v: &Option<Vec<f64>>, dim: usize) -> Result<DVector<f64>, CliError> {
    let v = v
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing config key `{key}` (pair = explicit)")))?;
    if v.len() != dim {
        return Err(CliError::Config(format!("`{key}` must have {dim} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

pub fn run(cfg: &FileConfig, seed: u64, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let a = require(&cfg.audit, "audit")?;
    let h = a.horizon;
    let (model, model_cfg) = build_model(cfg, h)?;
    let (noise, eps, noise_cfg) = noise_and_budget(cfg, a.k0, h)?;
    let report = match a.pair {
        PairSource::Explicit => {
            let xa = vector("audit.xa", &a.xa, model.state_dim())?;
            let xb = vector("audit.xb", &a.xb, model.state_dim())?;
            privacy_loss(&model, &xa, &xb, &noise, &eps, a.k0, h)?
        }
        PairSource::Ball => {
            let center = a
                .center
                .as_ref()
                .ok_or_else(|| CliError::Config("missing config key `audit.center` (pair = ball)".into()))?;
            let zeta = a
                .zeta
                .ok_or_else(|| CliError::Config("missing config key `audit.zeta` (pair = ball)".into()))?;
            let point = ManifoldPoint::new(a.chart, DVector::from_column_slice(center))?;
            let metric = MetricField::for_chart(a.chart, center.len());
            worst_pair_search(&model, &metric, &point, zeta, &noise, &eps, a.k0, h, a.samples, seed)?
        }
    };
    let rows: Vec<LossRow> = (0..report.per_step_loss.len())
        .map(|j| LossRow {
            k: report.k0 + j as i64,
            per_step_loss: report.per_step_loss[j],
            cumulative_loss: report.cumulative_loss[j],
            eps_k: report.budget[j],
            budget_fraction: if report.cumulative_loss[j] == 0.0 {
                0.0
            } else {
                report.cumulative_loss[j] / report.budget[j]
            },
        })
        .collect();
    out.write_csv("audit.csv", &rows)?;
    out.write_json(
        "audit.json",
        &AuditOutput {
            model: model.name(),
            pair: a.pair,
            report: &report,
        },
    )?;
    let mut resolved = json!({ "audit": a });
    for part in [model_cfg, noise_cfg] {
        if let Value::Object(map) = part {
            for (k, v) in map {
                resolved[k] = v;
            }
        }
    }
    if report.satisfied {
        Ok(Outcome::passed(resolved))
    } else {
        Ok(Outcome::failed(
            resolved,
            format!(
                "privacy loss exceeds the budget at k = {} (L/eps up to {:.6})",
                report.worst_pair.k, report.max_budget_fraction
            ),
        ))
    }
}
