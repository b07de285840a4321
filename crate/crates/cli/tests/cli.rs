use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dp-contract"));
    c.env_remove("DP_CONTRACT_THREADS");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    repo().join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = csv_rows(path);
    let i = h.iter().position(|c| c == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn validate(schema: &str, file: &Path) {
    let s = json(&repo().join("docs/schemas").join(format!("{schema}.schema.json")));
    let v = jsonschema::validator_for(&s).unwrap();
    let doc = json(file);
    let errs: Vec<String> = v.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errs.is_empty(), "{} does not match {schema}: {errs:?}", file.display());
}

#[test]
fn design_theorem3_gives_constant_diversity() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["design", "--config", config("design-theorem3.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (h, _) = csv_rows(&t.path().join("schedule.csv"));
    assert_eq!(h, ["k", "lambda_k", "eps_k", "eps_increment", "b_k"]);
    let b = column(&t.path().join("schedule.csv"), "b_k");
    assert_eq!(b.len(), 51);
    // √2·β/100 with β = 1.1·300/0.21
    let expected = 2f64.sqrt() * (330.0 / 0.21) / 100.0;
    for v in &b {
        assert!((v / expected - 1.0).abs() < 1e-12, "{v}");
    }
    assert!((b[0] - 22.21).abs() / 22.21 < 1e-3);
    validate("design", &t.path().join("design.json"));
    validate("manifest", &t.path().join("manifest.json"));
}

#[test]
fn design_theorem1_toy_schedule() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["design", "--config", config("design-theorem1.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = t.path().join("schedule.csv");
    let k = column(&p, "k");
    let b = column(&p, "b_k");
    let eps = column(&p, "eps_k");
    for j in 0..k.len() {
        assert!((b[j] - 2.0 * 0.5f64.powi(k[j] as i32)).abs() < 1e-15);
        assert_eq!(eps[j], k[j] + 1.0);
    }
}

#[test]
fn design_consensus_budget_stays_below_total() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["design", "--config", config("design-consensus.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = t.path().join("schedule.csv");
    for b in column(&p, "b_k") {
        assert!((b - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
    let eps = column(&p, "eps_k");
    assert!(eps.windows(2).all(|w| w[1] > w[0]));
    assert!(*eps.last().unwrap() < 1.0);
}

#[test]
fn missing_epsilon_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    let c = write(t.path(), "c.toml", "[design]\nmode = \"theorem1\"\nhorizon = 3\n[theorem1]\nlambda_rate = 0.5\nalpha = 2.0\n");
    let o = run(&["design", "--config", c.to_str().unwrap()], &t.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
    assert!(!t.path().join("out/schedule.csv").exists());
}

#[test]
fn unknown_and_mistyped_keys_are_named() {
    let t = tempfile::tempdir().unwrap();
    let c = write(t.path(), "c.toml", "[design]\nmode = \"theorem1\"\nhorizon = 3\nzetta = 1.0\n");
    let o = run(&["design", "--config", c.to_str().unwrap()], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zetta"), "{}", stderr(&o));

    let c = write(t.path(), "d.toml", "[design]\nmode = \"theorem9\"\nhorizon = 3\n");
    let o = run(&["design", "--config", c.to_str().unwrap()], t.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mode"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_fails_with_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let ok = run(&["verify", "--config", config("verify-scalar.toml").to_str().unwrap()], &t.path().join("ok"));
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let r = json(&t.path().join("ok/verify.json"));
    assert_eq!(r["report"]["passed"], true);
    assert_eq!(r["report"]["points_checked"], 6 * 21);
    validate("verify", &t.path().join("ok/verify.json"));

    // f(x) = 2x with λ_k ≡ 1: inequality (iii) is 1 − 4 = −3 everywhere
    let text = fs::read_to_string(config("verify-scalar.toml"))
        .unwrap()
        .replace("a = [[0.5]]", "a = [[2.0]]")
        .replace("lambda_rate = 0.5", "lambda_rate = 1.0");
    let c = write(t.path(), "bad.toml", &text);
    let bad = run(&["verify", "--config", c.to_str().unwrap()], &t.path().join("bad"));
    assert_eq!(code(&bad), 3);
    let r = json(&t.path().join("bad/verify.json"));
    assert_eq!(r["report"]["passed"], false);
    assert_eq!(r["report"]["violations"].as_array().unwrap().len(), 126);
    assert!((r["report"]["min_eigenvalues"]["contraction"].as_f64().unwrap() + 3.0).abs() < 1e-12);
    assert_eq!(json(&t.path().join("bad/manifest.json"))["status"], "failed");
    validate("verify", &t.path().join("bad/verify.json"));
}

#[test]
fn verify_empty_grid_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("verify-scalar.toml")).unwrap().replace("points = [21]", "points = [0]");
    let c = write(t.path(), "c.toml", &text);
    let o = run(&["verify", "--config", c.to_str().unwrap()], &t.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn verify_theorem3_builtin() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--config", config("verify-theorem3.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&t.path().join("verify.json"));
    assert_eq!(r["model"], "rotation");
    assert_eq!(r["report"]["points_rejected"], 0);
}

#[test]
fn audit_explicit_pair_within_budget() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["audit", "--config", config("audit-rotation.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = t.path().join("audit.csv");
    let (h, rows) = csv_rows(&p);
    assert_eq!(h, ["k", "per_step_loss", "cumulative_loss", "eps_k", "budget_fraction"]);
    assert_eq!(rows.len(), 51);
    let loss = column(&p, "cumulative_loss");
    let eps = column(&p, "eps_k");
    // independent budget: 100·Σ 1.1^i
    for (k, (l, e)) in loss.iter().zip(&eps).enumerate() {
        let budget: f64 = (0..=k).map(|i| 100.0 * 1.1f64.powi(i as i32)).sum();
        assert!((e / budget - 1.0).abs() < 1e-12);
        assert!(l <= e);
    }
    validate("audit", &t.path().join("audit.json"));
}

#[test]
fn audit_budget_violation_exits_3_with_report() {
    let t = tempfile::tempdir().unwrap();
    let c = write(
        t.path(),
        "c.toml",
        "[audit]\nhorizon = 2\npair = \"explicit\"\nxa = [1.0]\nxb = [0.0]\n\
         [model]\nkind = \"linear\"\na = [[0.5]]\nc = [[1.0]]\n\
         [noise]\nsource = \"constant\"\nb = 1.0\n\
         [epsilon]\nkind = \"constant\"\nvalue = 1.0\n",
    );
    let o = run(&["audit", "--config", c.to_str().unwrap()], &t.path().join("out"));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    // losses 1, 1.5, 1.75 against a flat budget of 1
    let l = column(&t.path().join("out/audit.csv"), "cumulative_loss");
    assert_eq!(l, vec![1.0, 1.5, 1.75]);
    let r = json(&t.path().join("out/audit.json"));
    assert_eq!(r["report"]["satisfied"], false);
}

#[test]
fn audit_ball_search_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    let c = config("audit-ball.toml");
    let a = run(&["audit", "--config", c.to_str().unwrap()], &t.path().join("a"));
    let b = run(&["audit", "--config", c.to_str().unwrap()], &t.path().join("b"));
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    assert_eq!(
        fs::read(t.path().join("a/audit.csv")).unwrap(),
        fs::read(t.path().join("b/audit.csv")).unwrap()
    );
    let r = json(&t.path().join("a/audit.json"));
    assert_eq!(json(&t.path().join("a/manifest.json"))["seed"], 3);
    // the ℓ1 loss reaches at most √2 times the ℓ2 step; the designed noise is tight there
    let frac = r["report"]["max_budget_fraction"].as_f64().unwrap();
    assert!(frac <= 1.0 + 1e-9 && frac > 0.9, "{frac}");
    let xa: Vec<f64> = serde_json::from_value(r["report"]["worst_pair"]["xa"].clone()).unwrap();
    let xb: Vec<f64> = serde_json::from_value(r["report"]["worst_pair"]["xb"].clone()).unwrap();
    let d = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
    assert!((d - 1.0).abs() < 1e-9, "{d}");
}

#[test]
fn divergence_is_a_numerical_failure() {
    let t = tempfile::tempdir().unwrap();
    let c = write(
        t.path(),
        "c.toml",
        "[audit]\nhorizon = 5\npair = \"explicit\"\nxa = [1.0]\nxb = [0.0]\n\
         [model]\nkind = \"linear\"\na = [[1e200]]\nc = [[1.0]]\n\
         [noise]\nsource = \"constant\"\nb = 1.0\n\
         [epsilon]\nkind = \"constant\"\nvalue = 1.0\n",
    );
    let o = run(&["audit", "--config", c.to_str().unwrap()], &t.path().join("out"));
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn reproduce_section5_is_byte_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let c = write(t.path(), "c.toml", "[section5]\nhorizon = 120\nmonte_carlo_seeds = 4\n");
    let args = |seed: &'static str| ["reproduce", "section5", "--config", c.to_str().unwrap(), "--seed", seed].map(String::from);
    for (dir, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let o = bin().args(args(seed)).arg("--out").arg(t.path().join(dir)).output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = [
        "table.csv",
        "figure2_b.csv",
        "figure2_b_tilde.csv",
        "figure3_omega.csv",
        "figure3_omega_adjacent.csv",
        "section5.json",
        "manifest.json",
    ];
    for f in files {
        let a = fs::read(t.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        fs::read(t.path().join("a/figure2_b.csv")).unwrap(),
        fs::read(t.path().join("c/figure2_b.csv")).unwrap()
    );
    let (h, rows) = csv_rows(&t.path().join("a/figure2_b.csv"));
    assert_eq!(h, ["k", "r1", "r2", "y", "z", "e", "b_k", "eps_k", "L_k"]);
    assert_eq!(rows.len(), 121);
    validate("section5", &t.path().join("a/section5.json"));
    validate("manifest", &t.path().join("a/manifest.json"));
}

#[test]
fn reproduce_section5_table_has_published_rows() {
    let t = tempfile::tempdir().unwrap();
    let c = write(t.path(), "c.toml", "[section5]\nhorizon = 50\nmonte_carlo_seeds = 2\n");
    let o = run(&["reproduce", "section5", "--config", c.to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (h, rows) = csv_rows(&t.path().join("table.csv"));
    assert_eq!(h, ["quantity", "computed", "paper", "rel_err", "note"]);
    let get = |q: &str| rows.iter().find(|r| r[0] == q).unwrap_or_else(|| panic!("row {q}")).clone();
    let beta: f64 = get("beta")[1].parse().unwrap();
    assert!((beta - 330.0 / 0.21).abs() < 1e-9);
    for q in ["b_k", "b~_k", "b_k (beta=1571)", "b~_k (beta=1571)"] {
        let rel: f64 = get(q)[3].parse().unwrap();
        assert!(rel < 1e-3, "{q} {rel}");
    }
    let u0: f64 = get("U[0]")[1].parse().unwrap();
    let u1: f64 = get("U[1]")[1].parse().unwrap();
    let w = std::f64::consts::PI / 10.0;
    assert!((u0 - (w.cos() - 1.0)).abs() < 1e-12);
    assert!((u1 - w.sin()).abs() < 1e-12);
    let x0: f64 = get("X[0]")[1].parse().unwrap();
    assert!((x0 - 1.0).abs() < 1e-12);
}

#[test]
fn paper_constants_switch_beta_and_gains() {
    let t = tempfile::tempdir().unwrap();
    let c = write(t.path(), "c.toml", "[section5]\nhorizon = 30\nmonte_carlo_seeds = 2\n");
    let o = run(&["reproduce", "section5", "--paper-constants", "--config", c.to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&t.path().join("section5.json"));
    assert_eq!(s["beta_used"], 1571.0);
    assert_eq!(s["k_r_used"], serde_json::json!([0.1511, 0.309]));
    assert!((s["b"].as_f64().unwrap() - 2f64.sqrt() * 1571.0 / 100.0).abs() < 1e-12);
    assert_eq!(json(&t.path().join("manifest.json"))["paper_constants"], true);
}

#[test]
fn paper_constants_rejected_outside_reproduce() {
    let t = tempfile::tempdir().unwrap();
    let o = run(
        &["design", "--paper-constants", "--config", config("design-theorem3.toml").to_str().unwrap()],
        t.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn reproduce_example1_and_theorem3() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "example1"], &t.path().join("e"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&t.path().join("e/table.csv"));
    let b: f64 = rows.iter().find(|r| r[0] == "b").unwrap()[1].parse().unwrap();
    assert!((b - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    validate("example1", &t.path().join("e/example1.json"));

    let c = write(t.path(), "c.toml", "[theorem3]\nz_points = 5\ntheta_points = 4\nsteps = 6\n");
    let o = run(&["reproduce", "theorem3", "--config", c.to_str().unwrap()], &t.path().join("t"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&t.path().join("t/theorem3.json"));
    assert_eq!(s["grid"]["passed"], true);
    assert_eq!(s["grid"]["points_checked"], 5 * 8 * 4 * 6);
    validate("theorem3", &t.path().join("t/theorem3.json"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let t = tempfile::tempdir().unwrap();
    let c = config("verify-theorem3.toml");
    for (dir, n) in [("one", "1"), ("four", "4")] {
        let o = bin()
            .env("DP_CONTRACT_THREADS", n)
            .args(["verify", "--config", c.to_str().unwrap(), "--out"])
            .arg(t.path().join(dir))
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(t.path().join("one/verify.json")).unwrap(),
        fs::read(t.path().join("four/verify.json")).unwrap()
    );
    let o = bin()
        .env("DP_CONTRACT_THREADS", "0")
        .args(["reproduce", "example1", "--out"])
        .arg(t.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("DP_CONTRACT_THREADS"));
}

#[test]
fn manifest_echoes_resolved_defaults() {
    let t = tempfile::tempdir().unwrap();
    let o = run(
        &["verify", "--config", config("verify-scalar.toml").to_str().unwrap(), "--tol", "1e-7"],
        t.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&t.path().join("manifest.json"));
    assert_eq!(m["command"], "verify");
    assert_eq!(m["tol"], 1e-7);
    assert_eq!(m["config"]["certificate"]["c1"], 1.0);
    assert_eq!(m["config"]["certificate"]["lambda_scale"], 1.0);
    assert_eq!(m["outputs"], serde_json::json!(["verify.json"]));
    let text = fs::read_to_string(t.path().join("manifest.json")).unwrap();
    assert!(!text.contains("time"));
}

#[test]
fn shipped_configs_parse_and_run() {
    let t = tempfile::tempdir().unwrap();
    let mut n = 0;
    for entry in fs::read_dir(repo().join("configs")).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_stem().unwrap().to_str().unwrap().to_string();
        let cmd = name.split('-').next().unwrap().to_string();
        let o = bin()
            .args([cmd.as_str(), "--config", p.to_str().unwrap(), "--out"])
            .arg(t.path().join(&name))
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        validate(&cmd, &t.path().join(&name).join(format!("{cmd}.json")));
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn schemas_reject_incomplete_documents() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["design", "--config", config("design-theorem1.toml").to_str().unwrap()], t.path());
    assert_eq!(code(&o), 0);
    let s = json(&repo().join("docs/schemas/design.schema.json"));
    let v = jsonschema::validator_for(&s).unwrap();
    let mut doc = json(&t.path().join("design.json"));
    assert!(v.is_valid(&doc));
    doc.as_object_mut().unwrap().remove("b_max");
    assert!(!v.is_valid(&doc));
}
