//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does. Oracles here are written independently of the
//! library routines they check.

use std::time::{Duration, Instant};

use dp_contract::audit::{verify_dp_on_boxes, BoxSet, Interval};
use dp_contract::casestudies::parameter::sample_adjacent_pairs;
use dp_contract::casestudies::regulation::{
    mean_abs_error, simulate_regulation, solve_regulator, ExoSystem, Perturbation, RegulationConfig,
};
use dp_contract::casestudies::section5::{self, Section5Config};
use dp_contract::contraction::{theorem3_certificate, theorem3_grid, verify_oib_grid};
use dp_contract::dynamics::{parameter_augmented, SystemModel};
use dp_contract::geometry::{distance, path_length, ManifoldPoint, MetricField, PathCurve};
use dp_contract::mechanism::{EpsilonSchedule, LaplaceSampler, NoiseSchedule, ParameterBounds};
use dp_contract::privacy_loss;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C1_REL_TOL: f64 = 1e-3;
const C1_BUDGET: Duration = Duration::from_secs(1);
const C2_U_TOL: f64 = 5e-4;
const C2_BUDGET: Duration = Duration::from_secs(1);
const C3_PSD_TOL: f64 = 1e-9;
const C3_BUDGET: Duration = Duration::from_secs(30);
const C4_TOL: f64 = 1e-9;
const C4_BUDGET: Duration = Duration::from_secs(10);
const C5_TOL: f64 = 1e-9;
const C5_BUDGET: Duration = Duration::from_secs(10);
const C6_PATH_TOL: f64 = 1e-6;
const C6_SAMPLES: usize = 10_000;
const C6_TRIPLES: usize = 10_000;
const C7_ALPHA: f64 = 0.001;
const C7_DRAWS: usize = 100_000;
const C7_VAR_REL_TOL: f64 = 0.01;
const C7_VAR_DRAWS: usize = 1_000_000;
const C8_TRACK_TOL: f64 = 1e-6;
const C8_SEEDS: usize = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            o.passed = false;
            o.detail.push_str(&format!("; over time budget {b:?}"));
        }
    }
    println!(
        "{} [{id}] {name} ({:.1} ms): {}",
        if o.passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64() * 1e3,
        o.detail
    );
    o.passed
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn criterion1() -> Outcome {
    let (lb, mu) = (1.1_f64, 300.0_f64);
    let beta = lb * mu / (lb * lb - 1.0);
    let lib_beta = section5::bounds().beta();
    // b = λ̄^k √2 ζ β / (ε_k − ε_{k−1}) with ε_k − ε_{k−1} = scale·λ̄^k
    let b_of = |beta: f64, scale: f64| 2f64.sqrt() * beta / scale;
    let eps = section5::epsilon(section5::EPS_SCALE, 20).unwrap();
    let eps_t = section5::epsilon(section5::EPS_TILDE_SCALE, 20).unwrap();
    let nb = section5::noise(1571.0, &eps, 20).unwrap();
    let nbt = section5::noise(1571.0, &eps_t, 20).unwrap();
    let nb_exact = section5::noise(lib_beta, &eps, 20).unwrap();
    let nbt_exact = section5::noise(lib_beta, &eps_t, 20).unwrap();

    let beta_ok = (lib_beta - beta).abs() < 1e-9 && (lib_beta - 1571.43).abs() < 5e-3;
    let rounded_ok = nb
        .diversities()
        .iter()
        .all(|b| rel(*b, 22.21) < C1_REL_TOL && rel(*b, b_of(1571.0, 100.0)) < 1e-12)
        && nbt
            .diversities()
            .iter()
            .all(|b| rel(*b, 4.442) < C1_REL_TOL && rel(*b, b_of(1571.0, 500.0)) < 1e-12);
    let exact_ok = nb_exact.diversities().iter().all(|b| rel(*b, b_of(beta, 100.0)) < 1e-12)
        && nbt_exact.diversities().iter().all(|b| rel(*b, b_of(beta, 500.0)) < 1e-12);
    outcome(
        beta_ok && rounded_ok && exact_ok,
        format!(
            "beta={lib_beta:.4} (printed 1571); beta=1571: b={:.4} b~={:.5}; exact beta: b={:.4} b~={:.5}",
            nb.get(0).unwrap(),
            nbt.get(0).unwrap(),
            nb_exact.get(0).unwrap(),
            nbt_exact.get(0).unwrap()
        ),
    )
}

fn criterion2() -> Outcome {
    let w = std::f64::consts::PI / 10.0;
    let s = solve_regulator(&section5::plant(), &ExoSystem::rotation(w), &section5::k_x()).unwrap();
    // dense oracle: with C = 1, D = 0 the output equation forces X = C_r = [1 0],
    // and the state equation gives U = X·A_r − A·X.
    let u_oracle = [w.cos() - 1.0, w.sin()];
    let x_ok = (s.x[(0, 0)] - 1.0).abs() < 1e-12 && s.x[(0, 1)].abs() < 1e-12;
    let u_ok = (0..2).all(|i| (s.u[(0, i)] - section5::PAPER_U[i]).abs() < C2_U_TOL && (s.u[(0, i)] - u_oracle[i]).abs() < 1e-12);

    let report = section5::reproduce_section5(&Section5Config {
        horizon: 10,
        monte_carlo_seeds: 1,
        ..Default::default()
    })
    .unwrap();
    let row = |q: &str| report.table.iter().find(|r| r.quantity == q).cloned();
    let surfaced = matches!(row("U[0] at pi/20"), Some(r) if r.rel_err.unwrap() > 0.1)
        && matches!(row("K_r[0]"), Some(r) if r.rel_err.unwrap() > 0.1)
        && matches!(row("K_x implied by printed K_r"), Some(r) if (r.computed + 0.2).abs() < 1e-12);
    outcome(
        x_ok && u_ok && surfaced,
        format!(
            "X=[{:.6}, {:.6}] U=[{:.5}, {:.5}] K_r=[{:.5}, {:.5}]; pi/20 and K_r mismatches in table: {surfaced}",
            s.x[(0, 0)],
            s.x[(0, 1)],
            s.u[(0, 0)],
            s.u[(0, 1)],
            s.k_r[(0, 0)],
            s.k_r[(0, 1)]
        ),
    )
}

fn criterion3() -> Outcome {
    let b = ParameterBounds {
        n: 1,
        lambda: 0.9,
        lambda_bar: 1.0,
        mu: 1.0,
        theta_bar: 0.9,
        k0: 0,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let model = parameter_augmented("scalar", 1, |t| DMatrix::from_element(1, 1, t), |_| DMatrix::from_element(1, 1, 1.0));
    let cert = theorem3_certificate(&b).unwrap();
    let grid = theorem3_grid(&b, 50, 50, 20);
    let report = pool.install(|| verify_oib_grid(&model, &cert, &grid, C3_PSD_TOL)).unwrap();

    // eigenvalue oracle at the binding corner θ = θ̄, z on the tube edge, k = 0:
    // the contraction matrix is [[λ̄² − θ², −θz], [−θz, λ̄²β² − z² − λ²β²]]
    let beta = 1.0 / (1.0 - 0.81);
    let (t, z) = (0.9_f64, 1.0_f64);
    let (a, c, d) = (1.0 - t * t, -t * z, beta * beta - z * z - 0.81 * beta * beta);
    let oracle_min = 0.5 * (a + d) - (0.25 * (a - d).powi(2) + c * c).sqrt();

    let min = report.min_eigenvalues.overall();
    outcome(
        report.passed && report.points_checked == 50 * 50 * 20 && min >= -C3_PSD_TOL && oracle_min.abs() < 1e-9,
        format!(
            "{} points, {} violations, min eigenvalue {min:.3e} (corner oracle {oracle_min:.3e})",
            report.points_checked,
            report.violations.len()
        ),
    )
}

fn criterion4() -> Outcome {
    let bounds = section5::bounds();
    let horizon = 50;
    let eps = section5::epsilon(section5::EPS_SCALE, horizon).unwrap();
    let noise = section5::noise(bounds.beta(), &eps, horizon).unwrap();
    let model = parameter_augmented("rotation", 2, dp_contract::dynamics::rotation, dp_contract::dynamics::rotation_derivative);
    let pairs = sample_adjacent_pairs(&bounds, section5::ZETA, 100, 2024);

    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    let mut max_fraction = 0.0_f64;
    let mut oracle_gap = 0.0_f64;
    for (xa, xb) in &pairs {
        let r = privacy_loss(&model, xa, xb, &noise, &eps, 0, horizon).unwrap();
        // composition oracle: y_k = R(kθ) z0 for a rotation family
        let (z0, ta, tb) = ([xa[0], xa[1]], xa[2], xb[2]);
        let rot = |a: f64| [a.cos() * z0[0] + a.sin() * z0[1], -a.sin() * z0[0] + a.cos() * z0[1]];
        let mut acc = 0.0;
        for k in 0..=horizon {
            let (ya, yb) = (rot(k as f64 * ta), rot(k as f64 * tb));
            acc += ((ya[0] - yb[0]).abs() + (ya[1] - yb[1]).abs()) / noise.get(k as i64).unwrap();
            let eps_k = 100.0 * (1.1f64.powi(k as i32 + 1) - 1.0) / 0.1;
            oracle_gap = oracle_gap.max((acc - r.cumulative_loss[k]).abs() / (1.0 + acc));
            ok &= acc <= eps_k * (1.0 + C4_TOL);
            ok &= (r.budget[k] - eps_k).abs() < 1e-9 * eps_k;
        }
        ok &= r.satisfied;
        min_margin = min_margin.min(r.margin);
        max_fraction = max_fraction.max(r.max_budget_fraction);
    }
    ok &= oracle_gap < 1e-9;
    outcome(
        ok,
        format!("100 pairs, k<=50: min margin {min_margin:.3}, max L_k/eps_k {max_fraction:.4}, oracle gap {oracle_gap:.1e}"),
    )
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ok = true;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut tight = 0.0_f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..=2usize);
        let horizon = rng.random_range(0..=4usize);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.9..0.9));
        let c = DMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.5..1.5));
        let model = SystemModel::linear("random", a, c);
        let xa = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let xb = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let b: Vec<f64> = (0..=horizon).map(|_| rng.random_range(0.2..3.0)).collect();
        let noise = NoiseSchedule::new(0, b.clone()).unwrap();
        let eps = EpsilonSchedule::from_increments(0, vec![1e3; horizon + 1]).unwrap();

        let steps = rng.random_range(1..=horizon + 1);
        let set = BoxSet::new(
            (0..steps)
                .map(|_| {
                    (0..m)
                        .map(|_| match rng.random_range(0..4) {
                            0 => Interval::full(),
                            1 => Interval::at_least(rng.random_range(-4.0..4.0)).unwrap(),
                            2 => Interval::at_most(rng.random_range(-4.0..4.0)).unwrap(),
                            _ => {
                                let lo = rng.random_range(-4.0..4.0);
                                Interval::new(lo, lo + rng.random_range(0.01..3.0)).unwrap()
                            }
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let res = verify_dp_on_boxes(&model, &xa, &xb, &noise, &eps, &[set], 0, horizon).unwrap();
        let check = &res.checks[0];

        // composition oracle from an independent simulation
        let (mut pa, mut pb, mut l) = (xa.clone(), xb.clone(), 0.0);
        for &bk in b.iter().take(steps) {
            l += (model.observe(0, &pa) - model.observe(0, &pb)).abs().sum() / bk;
            pa = model.step(0, &pa);
            pb = model.step(0, &pb);
        }
        ok &= (l - check.composition_loss).abs() < 1e-12 * (1.0 + l);
        ok &= check.log_ratio <= l + C5_TOL;
        worst_excess = worst_excess.max(check.log_ratio - l);
        if l > 0.0 {
            tight = tight.max(check.log_ratio / l);
        }
    }
    outcome(
        ok,
        format!("1000 instances; max(log-ratio - L_k) = {worst_excess:.3e}; tightest ratio/L_k = {tight:.4}"),
    )
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst_path = 0.0_f64;
    let id2 = MetricField::identity(2);
    let fr = MetricField::fisher_rao();
    let al = MetricField::affine_line();
    for _ in 0..20 {
        let a = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let b = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let pa = ManifoldPoint::euclidean(&a).unwrap();
        let pb = ManifoldPoint::euclidean(&b).unwrap();
        let len = path_length(&PathCurve::segment(&pa, &pb, C6_SAMPLES).unwrap(), &id2).unwrap();
        worst_path = worst_path.max((len - ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).abs());

        let (t1, t2) = (rng.random_range(0.1..5.0f64), rng.random_range(0.1..5.0f64));
        let len = path_length(
            &PathCurve::segment(
                &ManifoldPoint::positive_scalar(t1).unwrap(),
                &ManifoldPoint::positive_scalar(t2).unwrap(),
                C6_SAMPLES,
            )
            .unwrap(),
            &fr,
        )
        .unwrap();
        worst_path = worst_path.max((len - (t2 / t1).ln().abs()).abs());

        let (s1, s2) = (rng.random_range(-5.0..5.0f64), rng.random_range(-5.0..5.0f64));
        let len = path_length(
            &PathCurve::segment(
                &ManifoldPoint::affine_line(s1).unwrap(),
                &ManifoldPoint::affine_line(s2).unwrap(),
                C6_SAMPLES,
            )
            .unwrap(),
            &al,
        )
        .unwrap();
        worst_path = worst_path.max((len - 10f64.sqrt() * (s1 - s2).abs()).abs());
    }

    let mut worst_triangle = f64::NEG_INFINITY;
    for i in 0..C6_TRIPLES {
        let (p, q, r, m) = match i % 3 {
            0 => {
                let mut pt = || ManifoldPoint::euclidean(&[rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]).unwrap();
                (pt(), pt(), pt(), &id2)
            }
            1 => {
                let mut pt = || ManifoldPoint::positive_scalar(rng.random_range(0.01..100.0)).unwrap();
                (pt(), pt(), pt(), &fr)
            }
            _ => {
                let mut pt = || ManifoldPoint::affine_line(rng.random_range(-10.0..10.0)).unwrap();
                (pt(), pt(), pt(), &al)
            }
        };
        let d = |a: &ManifoldPoint, b: &ManifoldPoint| distance(a, b, m).unwrap();
        worst_triangle = worst_triangle.max(d(&p, &r) - d(&p, &q) - d(&q, &r));
    }
    outcome(
        worst_path < C6_PATH_TOL && worst_triangle <= 1e-12,
        format!("max |quadrature - closed form| = {worst_path:.2e}; max triangle excess = {worst_triangle:.2e}"),
    )
}

fn criterion7() -> Outcome {
    let b = 2.5;
    let draws = LaplaceSampler::new(7).draws(3, b, C7_DRAWS);
    let cdf = |t: f64| {
        if t < 0.0 {
            0.5 * (t / b).exp()
        } else {
            1.0 - 0.5 * (-t / b).exp()
        }
    };
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (cdf(*x) - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf(*x)).abs()))
        .fold(0.0, f64::max);
    let critical = (-(C7_ALPHA / 2.0).ln() / 2.0).sqrt() / n.sqrt();
    // the sample variance of Laplace draws has relative sd √(5/N), so the 1%
    // check uses a larger sample than the KS test
    let many = LaplaceSampler::new(7).draws(3, b, C7_VAR_DRAWS);
    let nv = many.len() as f64;
    let mean = many.iter().sum::<f64>() / nv;
    let var = many.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nv - 1.0);
    let var_err = rel(var, 2.0 * b * b);
    outcome(
        d < critical && var_err < C7_VAR_REL_TOL,
        format!("KS D={d:.5} < {critical:.5} (1e5 draws); variance {var:.4} vs {:.4} (rel {var_err:.4}, 1e6 draws)", 2.0 * b * b),
    )
}

fn criterion8() -> Outcome {
    let cfg = Section5Config::default();
    let w = cfg.omega;
    let sol = solve_regulator(&section5::plant(), &ExoSystem::rotation(w), &section5::k_x()).unwrap();
    let reg = RegulationConfig {
        plant: section5::plant(),
        exo: ExoSystem::rotation(w),
        k_x: section5::k_x(),
        k_r: sol.k_r,
        x0: DVector::from_element(1, 0.0),
        r0: DVector::from_vec(vec![100.0, 0.0]),
        k0: 0,
        horizon: 400,
    };
    let clean = simulate_regulation(&reg, &Perturbation::Noiseless).unwrap();
    let tail = clean.iter().filter(|r| r.k >= 200).map(|r| r.e[0].abs()).fold(0.0, f64::max);

    let h = reg.horizon;
    let beta = section5::bounds().beta();
    let nb = section5::noise(beta, &section5::epsilon(section5::EPS_SCALE, h).unwrap(), h).unwrap();
    let nbt = section5::noise(beta, &section5::epsilon(section5::EPS_TILDE_SCALE, h).unwrap(), h).unwrap();
    let (mut sum_b, mut sum_bt) = (0.0, 0.0);
    for seed in 0..C8_SEEDS as u64 {
        let sampler = LaplaceSampler::new(seed);
        sum_b += mean_abs_error(&simulate_regulation(&reg, &Perturbation::Laplace { noise: &nb, sampler }).unwrap());
        sum_bt += mean_abs_error(&simulate_regulation(&reg, &Perturbation::Laplace { noise: &nbt, sampler }).unwrap());
    }
    let (mb, mbt) = (sum_b / C8_SEEDS as f64, sum_bt / C8_SEEDS as f64);
    outcome(
        tail < C8_TRACK_TOL && mbt < mb,
        format!(
            "noiseless max|e_k| (k>=200) = {tail:.2e}; mean|e| b={:.2}: {mb:.3}, b~={:.3}: {mbt:.3}",
            nb.get(0).unwrap(),
            nbt.get(0).unwrap()
        ),
    )
}

#[test]
fn acceptance() {
    let results = [
        run(1, "section-5 constants", Some(C1_BUDGET), criterion1),
        run(2, "regulator equations", Some(C2_BUDGET), criterion2),
        run(3, "parameter certificate on 50x50x20 grid", Some(C3_BUDGET), criterion3),
        run(4, "end-to-end parameter privacy", Some(C4_BUDGET), criterion4),
        run(5, "composition dominates box ratios", Some(C5_BUDGET), criterion5),
        run(6, "geometry quadrature and triangle inequality", None, criterion6),
        run(7, "Laplace sampler KS and variance", None, criterion7),
        run(8, "tracking and privacy/performance trade-off", None, criterion8),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
