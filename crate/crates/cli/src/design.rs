use serde::Serialize;
use serde_json::{json, Value};

use dp_contract::casestudies::consensus::build_consensus_model;
use dp_contract::contraction::oib_alpha;
use dp_contract::mechanism::{design_noise, design_noise_exponential, design_noise_theorem3};
use dp_contract::{EpsilonSchedule, NoiseSchedule};

use crate::config::{require, DesignMode, FileConfig};
use crate::error::CliError;
use crate::output::OutputDir;
use crate::Outcome;

/// A designed schedule over [k0, k0 + horizon].
pub struct Designed {
    pub mode: DesignMode,
    pub horizon: usize,
    pub alpha: f64,
    pub lambda: Vec<f64>,
    pub noise: NoiseSchedule,
    pub eps: EpsilonSchedule,
    /// Config sections that took part, with defaults filled in.
    pub resolved: Value,
}

#[derive(Debug, Serialize)]
struct ScheduleRow {
    k: i64,
    lambda_k: f64,
    eps_k: f64,
    eps_increment: f64,
    b_k: f64,
}

#[derive(Debug, Serialize)]
struct DesignSummary {
    mode: DesignMode,
    k0: i64,
    horizon: usize,
    alpha: f64,
    b_first: f64,
    b_last: f64,
    b_min: f64,
    b_max: f64,
    eps_final: f64,
    schedule: &'static str,
}

fn lambda_table(k0: i64, horizon: usize, f: impl Fn(i64) -> f64) -> Vec<f64> {
    (0..=horizon as i64).map(|j| f(k0 + j)).collect()
}

pub fn designed(cfg: &FileConfig) -> Result<Designed, CliError> {
    let d = require(&cfg.design, "design")?;
    let h = d.horizon;
    match d.mode {
        DesignMode::Theorem1 => {
            let t = require(&cfg.theorem1, "theorem1")?;
            let eps_cfg = require(&cfg.epsilon, "epsilon")?;
            let eps = eps_cfg.build(h)?;
            let k0 = eps.k0();
            let (scale, rate) = (t.lambda_scale, t.lambda_rate);
            let lambda = move |k: i64| scale * rate.powi((k - k0) as i32);
            let alpha = match (t.alpha, t.c1, t.c2, t.output_dim) {
                (Some(a), _, _, _) => a,
                (None, Some(c1), Some(c2), Some(m)) => oib_alpha(m, c1, c2, lambda(k0), d.zeta),
                _ => {
                    return Err(CliError::Config(
                        "missing config key `theorem1.alpha` (or all of c1, c2, output_dim)".into(),
                    ))
                }
            };
            let noise = design_noise(lambda, alpha, &eps, h)?;
            Ok(Designed {
                mode: d.mode,
                horizon: h,
                alpha,
                lambda: lambda_table(k0, h, lambda),
                noise,
                eps,
                resolved: json!({ "design": d, "theorem1": t, "epsilon": eps_cfg }),
            })
        }
        DesignMode::Theorem3 => {
            let bs = require(&cfg.bounds, "bounds")?;
            let eps_cfg = require(&cfg.epsilon, "epsilon")?;
            let b = bs.to_bounds();
            let eps = eps_cfg.build(h)?;
            let noise = design_noise_theorem3(&b, d.zeta, &eps, h)?;
            Ok(Designed {
                mode: d.mode,
                horizon: h,
                alpha: b.alpha(d.zeta),
                lambda: lambda_table(b.k0, h, |k| b.lambda_k(k)),
                noise,
                eps,
                resolved: json!({ "design": d, "bounds": bs, "epsilon": eps_cfg }),
            })
        }
        DesignMode::Exponential => {
            let e = require(&cfg.exponential, "exponential")?;
            let (noise, eps) = design_noise_exponential(e.c_bar, e.lambda_bar, e.alpha, e.c, e.q, e.k0, h)?;
            Ok(Designed {
                mode: d.mode,
                horizon: h,
                alpha: e.alpha,
                lambda: lambda_table(e.k0, h, |k| e.c_bar * e.lambda_bar.powi((k - e.k0) as i32)),
                noise,
                eps,
                resolved: json!({ "design": d, "exponential": e }),
            })
        }
        DesignMode::Consensus => {
            let c = require(&cfg.consensus, "consensus")?;
            let agent = c.agent(h);
            let setup = build_consensus_model(&agent)?;
            let q = agent.contraction_factor();
            Ok(Designed {
                mode: d.mode,
                horizon: h,
                alpha: std::f64::consts::SQRT_2 * c.zeta,
                lambda: lambda_table(c.k0, h, |k| q.powi((k - c.k0) as i32)),
                noise: setup.noise,
                eps: setup.budget,
                resolved: json!({ "design": d, "consensus": c }),
            })
        }
    }
}

pub fn run(cfg: &FileConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let ds = designed(cfg)?;
    let k0 = ds.noise.k0();
    let rows = (0..=ds.horizon)
        .map(|j| {
            let k = k0 + j as i64;
            Ok(ScheduleRow {
                k,
                lambda_k: ds.lambda[j],
                eps_k: ds.eps.value(k)?,
                eps_increment: ds.eps.increment(k)?,
                b_k: ds.noise.get(k)?,
            })
        })
        .collect::<Result<Vec<_>, dp_contract::Error>>()?;
    let b = &ds.noise.diversities()[..=ds.horizon];
    let summary = DesignSummary {
        mode: ds.mode,
        k0,
        horizon: ds.horizon,
        alpha: ds.alpha,
        b_first: b[0],
        b_last: b[ds.horizon],
        b_min: b.iter().copied().fold(f64::INFINITY, f64::min),
        b_max: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        eps_final: rows[ds.horizon].eps_k,
        schedule: "schedule.csv",
    };
    out.write_csv("schedule.csv", &rows)?;
    out.write_json("design.json", &summary)?;
    Ok(Outcome::passed(ds.resolved))
}
