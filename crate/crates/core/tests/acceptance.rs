//! Acceptance criteria 1-8, one test each. Every test prints a single
//! PASS/FAIL line with the measured quantities; run with `--nocapture` to see
//! them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pseudohuber::harness::{run_deviation_study, run_tau_adaptivity_study, Estimator};
use pseudohuber::loss::{grad_mu, grad_tau, hessian, total_loss};
use pseudohuber::noise::sample;
use pseudohuber::oracle::tau_star;
use pseudohuber::solver::{fit, z_from_delta};
use pseudohuber::stats::ols_slope;
use pseudohuber::{EstimatorConfig, InitPolicy, LossPoint, NoiseModel, Sample, StudySpec, Strategy};

const LAWS: [&str; 6] = [
    "gaussian",
    "student_t:df=3",
    "pareto:shape=3",
    "lognormal:meanlog=0,sdlog=1",
    "two_point",
    "contaminated_gaussian:eps=0.1,scale=10",
];

fn law(s: &str) -> NoiseModel {
    s.parse().unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{}] {title}: {} ({:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

/// A random instance for the derivative and convexity checks.
fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Sample, f64, f64, f64) {
    let n = rng.random_range(2..=max_n);
    let sigma = 10f64.powf(rng.random_range(-1.0..1.0));
    let m = law(LAWS[rng.random_range(0..LAWS.len())]);
    let data = sample(&m, sigma, n, rng.random_range(-5.0..5.0), rng.random()).unwrap();
    let center = data.values().iter().sum::<f64>() / n as f64;
    let mu = center + sigma * rng.random_range(-2.0..2.0);
    let tau = sigma * 10f64.powf(rng.random_range(-1.5..1.5));
    let z = rng.random_range(0.5..15.0);
    (data, mu, tau, z)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_g, mut worst_h) = (0f64, 0f64);
    for _ in 0..1000 {
        let (d, mu, tau, z) = random_instance(&mut rng, 60);
        let p = |m: f64, t: f64| LossPoint::new(m, t, z).unwrap();
        let l = |m: f64, t: f64| total_loss(&d, p(m, t)).unwrap();
        let gm = |m: f64, t: f64| grad_mu(&d, p(m, t)).unwrap();
        let gt = |m: f64, t: f64| grad_tau(&d, p(m, t)).unwrap();

        // five-point central differences on the scale of tau, the curvature length
        let h = 1e-3 * tau;
        let fd = |f: &dyn Fn(f64) -> f64, x: f64| {
            (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
        };
        worst_g = worst_g.max(rel_err(fd(&|m| l(m, tau), mu), gm(mu, tau)));
        worst_g = worst_g.max(rel_err(fd(&|t| l(mu, t), tau), gt(mu, tau)));

        let hs = hessian(&d, p(mu, tau)).unwrap();
        worst_h = worst_h.max(rel_err(fd(&|m| gm(m, tau), mu), hs.d_mumu));
        worst_h = worst_h.max(rel_err(fd(&|t| gm(mu, t), tau), hs.d_mutau));
        worst_h = worst_h.max(rel_err(fd(&|m| gt(m, tau), mu), hs.d_mutau));
        worst_h = worst_h.max(rel_err(fd(&|t| gt(mu, t), tau), hs.d_tautau));
    }
    Outcome {
        pass: worst_g <= 1e-6 && worst_h <= 1e-4,
        detail: format!("max gradient rel err {worst_g:.2e} (<= 1e-6), max hessian rel err {worst_h:.2e} (<= 1e-4)"),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut min_eig = f64::INFINITY;
    let mut strict_failures = 0;
    for i in 0..10_000 {
        let (d, mu, tau, z) = if i % 100 == 0 {
            // constant samples: only positive semi-definiteness is claimed
            let v = rng.random_range(-3.0..3.0);
            (Sample::new(vec![v; rng.random_range(1..20)]).unwrap(), v + rng.random_range(-1.0..1.0), 1.0, 2.0)
        } else {
            random_instance(&mut rng, 40)
        };
        let h = hessian(&d, LossPoint::new(mu, tau, z).unwrap()).unwrap();
        let eig = Matrix2::new(h.d_mumu, h.d_mutau, h.d_mutau, h.d_tautau).symmetric_eigen().eigenvalues.min();
        min_eig = min_eig.min(eig);
        if !d.is_constant() && !(h.min_eigenvalue() > 0.0) {
            strict_failures += 1;
        }
    }

    // det(H_1 + H_2) for the two per-observation Hessians with sample-size
    // parameter n; the library Hessian on {y1, y2} is their average at n = 2.
    let mut worst_det = 0f64;
    for _ in 0..100 {
        let y1 = rng.random_range(-10.0..10.0);
        let y2 = rng.random_range(-10.0..10.0);
        let mu = rng.random_range(-10.0..10.0);
        let tau = 10f64.powf(rng.random_range(-1.0..1.0));
        let z = rng.random_range(0.5..15.0);
        let n = 2.0;
        let a1 = tau * tau + (y1 - mu) * (y1 - mu);
        let a2 = tau * tau + (y2 - mu) * (y2 - mu);
        let identity = n * tau * tau / (z * z) * (y1 - y2) * (y1 - y2) / (a1.powf(1.5) * a2.powf(1.5));
        let d = Sample::new(vec![y1, y2]).unwrap();
        let h = hessian(&d, LossPoint::new(mu, tau, z).unwrap()).unwrap();
        let direct = 4.0 * h.det();
        worst_det = worst_det.max((direct - identity).abs() / identity.abs());
    }
    Outcome {
        pass: min_eig >= -1e-12 && strict_failures == 0 && worst_det <= 1e-12,
        detail: format!(
            "min eigenvalue {min_eig:.3e} (>= -1e-12), non-positive on distinct samples {strict_failures}, \
             two-point determinant rel err {worst_det:.2e} (<= 1e-12)"
        ),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = EstimatorConfig::default();
    let exact = cfg.strategy(Strategy::ExactCoordinate);

    let mut worst_agree = 0f64;
    let mut unconverged = 0;
    for i in 0..500 {
        let n = rng.random_range(120..=2000);
        let m = law(LAWS[i % LAWS.len()]);
        let d = sample(&m, 1.0, n, rng.random_range(-5.0..5.0), rng.random()).unwrap();
        let a = fit(&d, &cfg).unwrap();
        let b = fit(&d, &exact).unwrap();
        unconverged += usize::from(!a.converged) + usize::from(!b.converged);
        worst_agree = worst_agree.max((a.mu_hat - b.mu_hat).abs()).max((a.tau_hat - b.tau_hat).abs());
    }

    let mut worst_restart = 0f64;
    for i in 0..25 {
        let m = law(LAWS[i % LAWS.len()]);
        let d = sample(&m, 1.0, rng.random_range(120..=2000), 0.0, rng.random()).unwrap();
        let base = fit(&d, &cfg).unwrap();
        for _ in 0..20 {
            let init = InitPolicy::User {
                mu0: rng.random_range(d.min()..=d.max()),
                tau0: 10f64.powf(rng.random_range(-3.0..3.0)),
            };
            let r = fit(&d, &cfg.init(init)).unwrap();
            unconverged += usize::from(!r.converged);
            worst_restart = worst_restart.max((r.mu_hat - base.mu_hat).abs()).max((r.tau_hat - base.tau_hat).abs());
        }
    }

    let mut worst_equiv = 0f64;
    for i in 0..50 {
        let m = law(LAWS[i % LAWS.len()]);
        let d = sample(&m, 1.0, rng.random_range(120..=2000), 0.0, rng.random()).unwrap();
        let base = fit(&d, &cfg).unwrap();
        let shift = rng.random_range(-100.0..100.0);
        let t = fit(&Sample::new(d.values().iter().map(|v| v + shift).collect()).unwrap(), &cfg).unwrap();
        worst_equiv = worst_equiv.max((t.mu_hat - base.mu_hat - shift).abs()).max((t.tau_hat - base.tau_hat).abs());
        let a = 10f64.powf(rng.random_range(-2.0..2.0));
        let s = fit(&Sample::new(d.values().iter().map(|v| a * v).collect()).unwrap(), &cfg).unwrap();
        worst_equiv = worst_equiv
            .max((s.mu_hat / a - base.mu_hat).abs())
            .max((s.tau_hat / a - base.tau_hat).abs());
    }
    Outcome {
        pass: worst_agree <= 1e-8 && worst_restart <= 1e-7 && worst_equiv <= 1e-9 && unconverged == 0,
        detail: format!(
            "strategy gap {worst_agree:.2e} (<= 1e-8), restart spread {worst_restart:.2e} (<= 1e-7), \
             equivariance error {worst_equiv:.2e} (<= 1e-9), unconverged fits {unconverged}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let z = z_from_delta(0.05);
    let grid = [200usize, 2000, 20_000, 100_000];
    let mut violations = Vec::new();
    let mut non_monotone = Vec::new();
    for name in ["gaussian", "student_t:df=3", "pareto:shape=3", "two_point"] {
        let m = law(name);
        for sigma in [0.5, 1.0, 2.0] {
            let taus: Vec<f64> = grid
                .iter()
                .map(|&n| {
                    let s = tau_star(&m, sigma, n, z).unwrap();
                    if !s.bounds_hold(1e-6) {
                        violations.push(format!("{name}/{sigma}/{n}"));
                    }
                    s.tau_star
                })
                .collect();
            if !taus.windows(2).all(|w| w[1] > w[0]) {
                non_monotone.push(format!("{name}/{sigma}"));
            }
        }
    }
    // closed form: tau^2 = a^2 sigma^2 / (1 - a^2), a = 1 - z^2 / n
    let a: f64 = 1.0 - 4.0 / 400.0;
    let closed = (a * a / (1.0 - a * a)).sqrt();
    let tp = tau_star(&NoiseModel::two_point(), 1.0, 400, 2.0).unwrap().tau_star;
    let tp_err = (tp - closed).abs();
    Outcome {
        pass: violations.is_empty() && non_monotone.is_empty() && tp_err <= 1e-9 && (closed - 7.01793).abs() < 1e-5,
        detail: format!(
            "bound violations {violations:?}, non-monotone grids {non_monotone:?}, \
             two-point tau* {tp:.9} vs {closed:.9} (err {tp_err:.1e} <= 1e-9)"
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut spec = StudySpec::new(law("student_t:df=3"), vec![5000], 1000);
    spec.base_seed = 505;
    let res = run_tau_adaptivity_study(&spec).unwrap();
    let row = res.row(Estimator::PenalizedPh, 5000).unwrap();
    let cov = row.coverage.unwrap();
    Outcome {
        pass: cov >= 0.95,
        detail: format!(
            "coverage {cov:.4} (>= 0.95), tau* {:.4}, median tau_hat {:.4}, failed fits {}",
            row.tau_star.unwrap(),
            row.median_tau_hat.unwrap(),
            res.failures
        ),
    }
}

fn criterion_6() -> Outcome {
    let grid: Vec<usize> = (8..=14).map(|k| 1usize << k).collect();
    let mut slopes = Vec::new();
    let mut worst_ratio = (f64::INFINITY, f64::NEG_INFINITY);
    for name in ["gaussian", "student_t:df=3"] {
        let mut medians = Vec::new();
        for sigma in [1.0, 2.0] {
            let mut spec = StudySpec::new(law(name), grid.clone(), 200);
            spec.sigma = sigma;
            spec.base_seed = 606;
            let res = run_tau_adaptivity_study(&spec).unwrap();
            if sigma == 1.0 {
                let ln_n: Vec<f64> = res.rows.iter().map(|r| (r.n as f64).ln()).collect();
                let ln_star: Vec<f64> = res.rows.iter().map(|r| r.tau_star.unwrap().ln()).collect();
                slopes.push((name, res.rows[0].slope.unwrap(), ols_slope(&ln_n, &ln_star)));
            }
            medians.push(res.rows.iter().map(|r| r.median_tau_hat.unwrap()).collect::<Vec<_>>());
        }
        for (a, b) in medians[0].iter().zip(&medians[1]) {
            let r = b / a;
            worst_ratio = (worst_ratio.0.min(r), worst_ratio.1.max(r));
        }
    }
    let slopes_ok = slopes.iter().all(|(_, s, _)| (s - 0.5).abs() <= 0.05);
    let ratio_ok = worst_ratio.0 >= 1.8 && worst_ratio.1 <= 2.2;
    let shown: Vec<String> =
        slopes.iter().map(|(n, s, o)| format!("{n} {s:.4} (population tau* slope {o:.4})")).collect();
    Outcome {
        pass: slopes_ok && ratio_ok,
        detail: format!(
            "slopes [{}] (in [0.45, 0.55]), sigma ratio range [{:.4}, {:.4}] (in [1.8, 2.2])",
            shown.join(", "),
            worst_ratio.0,
            worst_ratio.1
        ),
    }
}

fn criterion_7() -> Outcome {
    let ests = vec![Estimator::PenalizedPh, Estimator::SampleMean];
    let mut heavy = StudySpec::new(law("student_t:df=2.5"), vec![2000], 2000);
    heavy.estimators = ests.clone();
    heavy.base_seed = 707;
    let h = run_deviation_study(&heavy).unwrap();
    let (ph99, mean99) = (
        h.row(Estimator::PenalizedPh, 2000).unwrap().q99,
        h.row(Estimator::SampleMean, 2000).unwrap().q99,
    );

    let mut light = StudySpec::new(NoiseModel::gaussian(), vec![2000], 2000);
    light.estimators = ests;
    light.base_seed = 708;
    let g = run_deviation_study(&light).unwrap();
    let (ph50, mean50) = (
        g.row(Estimator::PenalizedPh, 2000).unwrap().q50,
        g.row(Estimator::SampleMean, 2000).unwrap().q50,
    );
    let rel = (ph50 - mean50).abs() / mean50;
    Outcome {
        pass: ph99 < mean99 && rel <= 0.15,
        detail: format!(
            "t2.5 q99 {ph99:.5} vs mean {mean99:.5} (strictly below); gaussian q50 {ph50:.5} vs mean {mean50:.5} \
             (rel diff {rel:.4} <= 0.15)"
        ),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudohuber"))
}

fn code(cmd: &mut Command) -> (i32, String, String) {
    let o = cmd.output().unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let mut problems = Vec::new();

    // simulate -> estimate round trip
    let data = p("t3.txt");
    let (c, _, _) = code(bin().args(["simulate", "--noise", "student_t:df=3", "--n", "1500", "--seed", "42", "--mu", "-1.5", "--out"]).arg(&data));
    if c != 0 {
        problems.push(format!("simulate exit {c}"));
    }
    let (c, out, _) = code(bin().args(["estimate", "--format", "json"]).arg(&data));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap_or_default();
    let values: Vec<f64> = std::fs::read_to_string(&data).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    let lib = fit(&Sample::new(values).unwrap(), &EstimatorConfig::default()).unwrap();
    let cli_mu = v["mu_hat"].as_f64().unwrap_or(f64::NAN);
    let cli_tau = v["tau_hat"].as_f64().unwrap_or(f64::NAN);
    let round_trip = (cli_mu - lib.mu_hat).abs().max((cli_tau - lib.tau_hat).abs());
    if c != 0 || !(round_trip <= 1e-12) {
        problems.push(format!("round trip exit {c}, gap {round_trip:e}"));
    }

    // exit-code table
    let write = |name: &str, text: &str| {
        let f = p(name);
        std::fs::write(&f, text).unwrap();
        f
    };
    let expect = |problems: &mut Vec<String>, label: &str, got: (i32, String, String), want: i32, needle: Option<&str>| {
        let named = needle.is_none_or(|s| got.2.contains(s));
        if got.0 != want || !named {
            problems.push(format!("{label}: exit {} (want {want}), stderr {:?}", got.0, got.2.trim()));
        }
    };
    let bad_line = write("bad.txt", "1.0\n2.0\nabc\n4.0\n");
    expect(&mut problems, "malformed line", code(bin().arg("estimate").arg(&bad_line)), 2, Some("line 3"));
    expect(&mut problems, "empty file", code(bin().arg("estimate").arg(write("empty.txt", "# nothing\n\n"))), 2, None);
    expect(&mut problems, "missing file", code(bin().arg("estimate").arg(p("absent.txt"))), 2, None);
    expect(&mut problems, "nan value", code(bin().arg("estimate").arg(write("nan.txt", "1\nNaN\n"))), 2, Some("line 2"));
    expect(&mut problems, "no subcommand", code(&mut bin()), 2, None);
    expect(&mut problems, "unknown flag", code(bin().args(["oracle", "--bogus"])), 2, None);
    expect(&mut problems, "bad law", code(bin().args(["simulate", "--noise", "cauchy", "--n", "5", "--out"]).arg(p("x.txt"))), 2, None);
    expect(&mut problems, "infinite variance", code(bin().args(["oracle", "--noise", "student_t:df=2", "--n", "500"])), 2, None);
    expect(&mut problems, "oracle n = z^2", code(bin().args(["oracle", "--noise", "gaussian", "--n", "4", "--z", "2"])), 2, None);
    expect(&mut problems, "oracle ok", code(bin().args(["oracle", "--noise", "two_point", "--n", "400", "--z", "2"])), 0, None);
    let constant = write("const.txt", &"3.25\n".repeat(500));
    let (c, out, err) = code(bin().arg("estimate").arg(&constant));
    if c != 0 || !out.contains("3.25") || !out.contains("degenerate  true") || !err.contains("identical") {
        problems.push(format!("constant file: exit {c}, out {out:?}"));
    }
    let unknown = write("unknown.spec", "noise = gaussian\nn_grid = 200\nreplications = 4\ncolour = blue\n");
    expect(
        &mut problems,
        "unknown study key",
        code(bin().args(["study", "--spec"]).arg(&unknown).arg("--out-csv").arg(p("u.csv")).arg("--out-json").arg(p("u.json"))),
        2,
        Some("colour"),
    );

    // study row count and JSON canonical form
    let spec = write(
        "ok.spec",
        "noise = student_t:df=3\nn_grid = 150,300,600\nreplications = 20\nseed = 9\n\
         estimators = penalized_ph,sample_mean,median_of_means,fixed_tau_ph\n",
    );
    let (csv, json) = (p("s.csv"), p("s.json"));
    let (c, _, err) = code(bin().args(["study", "--spec"]).arg(&spec).arg("--out-csv").arg(&csv).arg("--out-json").arg(&json));
    if c != 0 {
        problems.push(format!("study exit {c}: {err}"));
    }
    let rows = std::fs::read_to_string(&csv).map(|t| t.lines().count().saturating_sub(1)).unwrap_or(0);
    if rows != 4 * 3 {
        problems.push(format!("study csv has {rows} rows, want 12"));
    }
    if !json_round_trips(&json) {
        problems.push("study json does not round-trip".into());
    }

    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("round trip gap {round_trip:.1e} (<= 1e-12), exit codes and row counts as specified")
        } else {
            problems.join("; ")
        },
    }
}

fn json_round_trips(path: &Path) -> bool {
    let Ok(text) = std::fs::read_to_string(path) else { return false };
    let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else { return false };
    serde_json::to_string_pretty(&v).map(|s| s == text).unwrap_or(false)
}

/// Serializes the criteria so runtimes are measured without competition.
static SERIAL: Mutex<()> = Mutex::new(());

fn run(id: usize, title: &str, limit_secs: u64, f: impl FnOnce() -> Outcome) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    assert!(check(id, title, Duration::from_secs(limit_secs), f), "criterion {id} failed");
}

#[test]
fn criterion_1_derivatives() {
    run(1, "derivatives match finite differences", 5, criterion_1);
}

#[test]
fn criterion_2_convexity() {
    run(2, "joint convexity", 10, criterion_2);
}

#[test]
fn criterion_3_solver() {
    run(3, "solver agreement, uniqueness, equivariance", 60, criterion_3);
}

#[test]
fn criterion_4_oracle() {
    run(4, "oracle bracketing and monotonicity", 30, criterion_4);
}

#[test]
fn criterion_5_tau_coverage() {
    run(5, "tau_hat within [2 tau*/5, 5 tau*]", 120, criterion_5);
}

#[test]
fn criterion_6_tau_scaling() {
    run(6, "tau_hat scaling in n and sigma", 300, criterion_6);
}

#[test]
fn criterion_7_deviation_ordering() {
    run(7, "heavy-tail deviation ordering", 180, criterion_7);
}

#[test]
fn criterion_8_cli() {
    run(8, "CLI contracts", 60, criterion_8);
}
