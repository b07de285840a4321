use serde::Serialize;
use serde_json::{json, Value};

use dp_contract::casestudies::consensus::affine_line_certificate;
use dp_contract::casestudies::reproduce_theorem3;
use dp_contract::contraction::{linspace, tensor_grid, GridPoint};
use dp_contract::{verify_oib_grid, ContractionCertificate, GridVerificationReport, MetricCandidate, MetricField, SystemModel};

use crate::config::{matrix, require, FileConfig, GridSection, ModelKind, VerifyTarget};
use crate::error::CliError;
use crate::output::OutputDir;
use crate::Outcome;

#[derive(Debug, Serialize)]
struct VerifyOutput<'a> {
    target: VerifyTarget,
    model: &'a str,
    report: &'a GridVerificationReport,
}

pub fn grid_from(g: &GridSection) -> Result<Vec<GridPoint>, CliError> {
    if g.lo.len() != g.hi.len() || g.lo.len() != g.points.len() || g.lo.is_empty() {
        return Err(CliError::Config("`grid.lo`, `grid.hi` and `grid.points` must have the same nonzero length".into()));
    }
    if g.k_end < g.k_start {
        return Err(CliError::Config("`grid.k_end` is before `grid.k_start`".into()));
    }
    let ks: Vec<i64> = (g.k_start..=g.k_end).collect();
    let axes: Vec<Vec<f64>> = g
        .lo
        .iter()
        .zip(&g.hi)
        .zip(&g.points)
        .map(|((&lo, &hi), &n)| linspace(lo, hi, n))
        .collect();
    Ok(tensor_grid(&ks, &axes))
}

fn custom(cfg: &FileConfig) -> Result<(SystemModel, ContractionCertificate, Vec<GridPoint>, Value), CliError> {
    let m = require(&cfg.model, "model")?;
    if m.kind != ModelKind::Linear {
        return Err(CliError::Config("`model.kind` must be linear for target = custom".into()));
    }
    let a = matrix("model.a", m.a.as_deref().unwrap_or_default())?;
    let c = matrix("model.c", m.c.as_deref().unwrap_or_default())?;
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(CliError::Config("`model.a` must be square with as many columns as `model.c`".into()));
    }
    let n = a.nrows();
    let cs = require(&cfg.certificate, "certificate")?;
    let p = matrix("certificate.p", &cs.p)?;
    if p.shape() != (n, n) {
        return Err(CliError::Config(format!("`certificate.p` must be {n}x{n}")));
    }
    let ambient = match &cs.ambient {
        Some(rows) => {
            let g = matrix("certificate.ambient", rows)?;
            if g.shape() != (n, n) {
                return Err(CliError::Config(format!("`certificate.ambient` must be {n}x{n}")));
            }
            MetricField::custom(n, move |_| g.clone())
        }
        None => MetricField::identity(n),
    };
    let (k0, scale, rate) = (cs.k0, cs.lambda_scale, cs.lambda_rate);
    let cert = ContractionCertificate::new(
        cs.c1,
        cs.c2,
        k0,
        move |k| scale * rate.powi((k - k0) as i32),
        MetricCandidate::constant(p),
        ambient,
    )?;
    let g = require(&cfg.grid, "grid")?;
    if g.lo.len() != n {
        return Err(CliError::Config(format!("`grid.lo` must have one entry per state coordinate ({n})")));
    }
    let grid = grid_from(g)?;
    Ok((
        SystemModel::linear("linear", a, c),
        cert,
        grid,
        json!({ "model": m, "certificate": cs, "grid": g }),
    ))
}

pub fn run(cfg: &FileConfig, tol: f64, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let v = require(&cfg.verify, "verify")?;
    let (model_name, report, resolved) = match v.target {
        VerifyTarget::Theorem3 => {
            let bs = require(&cfg.bounds, "bounds")?;
            let s = reproduce_theorem3(&bs.to_bounds(), v.z_points, v.theta_points, v.steps, tol)?;
            (s.family, s.grid, json!({ "verify": v, "bounds": bs }))
        }
        VerifyTarget::ConsensusStreet => {
            let c = require(&cfg.consensus, "consensus")?;
            let (model, cert) = affine_line_certificate(&c.agent(v.steps))?;
            let (grid, g) = match &cfg.grid {
                Some(g) => (grid_from(g)?, json!(g)),
                None => {
                    let ks: Vec<i64> = (c.k0..c.k0 + v.steps as i64).collect();
                    (tensor_grid(&ks, &[linspace(-10.0, 10.0, 21)]), Value::Null)
                }
            };
            let report = verify_oib_grid(&model, &cert, &grid, tol)?;
            (model.name().to_string(), report, json!({ "verify": v, "consensus": c, "grid": g }))
        }
        VerifyTarget::Custom => {
            let (model, cert, grid, sections) = custom(cfg)?;
            let report = verify_oib_grid(&model, &cert, &grid, tol)?;
            let mut r = sections;
            r["verify"] = json!(v);
            (model.name().to_string(), report, r)
        }
    };
    out.write_json(
        "verify.json",
        &VerifyOutput {
            target: v.target,
            model: &model_name,
            report: &report,
        },
    )?;
    if report.passed {
        Ok(Outcome::passed(resolved))
    } else {
        Ok(Outcome::failed(
            resolved,
            format!(
                "{} violation(s) over {} grid points, min eigenvalue {:e}",
                report.violations.len(),
                report.points_checked,
                report.min_eigenvalues.overall()
            ),
        ))
    }
}
