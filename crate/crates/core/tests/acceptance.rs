//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use stabsel::boosting::{fit_boost, BoostConfig, Loss};
use stabsel::datagen::ScenarioConfig;
use stabsel::estimators::fit_reduced;
use stabsel::harness::{run_scenario, MethodSpec, RunConfig, RunReport};
use stabsel::rng::{RandomSource, SeedTree};
use stabsel::selection::{aggregate, pfer_bound, pss_exhaustive, Execution, Fraction, GridSpec};
use stabsel::{Dataset, Task};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_regression(rng: &mut RandomSource, n: usize, p: usize) -> Dataset {
    let mu = rng.random_range(-3.0..3.0);
    let mut x = common::gaussian_design(rng, n, p, mu);
    if p > 1 && rng.random_bool(0.2) {
        let j = rng.random_range(0..p);
        x.column_mut(j).fill(mu);
    }
    let beta: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.4) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
    let y = DVector::from_fn(n, |i, _| {
        (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, y, Task::Regression).unwrap()
}

fn boosting_oracle() -> Verdict {
    let mut rng = SeedTree::new(1001).rng();
    let start = Instant::now();
    let mut identical = 0;
    for _ in 0..50 {
        let n = rng.random_range(5..=40);
        let p = rng.random_range(1..=10);
        let d = random_regression(&mut rng, n, p);
        let cfg = BoostConfig { m_iter: rng.random_range(1..=100), kappa: rng.random_range(0.01..=1.0) };
        let model = fit_boost(&d, Loss::Squared, &cfg).unwrap();
        let engine: Vec<(Option<usize>, f64)> = model.trace.iter().map(|s| (s.column, s.update)).collect();
        if engine == common::naive_boost_trace(&d.x, d.y.as_slice(), Loss::Squared, cfg.m_iter, cfg.kappa) {
            identical += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        identical == 50 && t < Duration::from_secs(10),
        format!("boosting trace equals the naive reference on {identical}/50 instances in {:.2} s", t.as_secs_f64()),
    )
}

fn pss_oracle() -> Verdict {
    let mut rng = SeedTree::new(1002).rng();
    let start = Instant::now();
    let mut identical = 0;
    for _ in 0..30 {
        let m = rng.random_range(1..=10);
        let p = m + rng.random_range(0..=5);
        let n_train = rng.random_range(m + 5..=40);
        let n_val = rng.random_range(8..=20);
        let d = random_regression(&mut rng, n_train + n_val, p);
        let (train, val) = common::split_rows(&d, n_train);
        let mut meta = sample(&mut rng, p, m).into_vec();
        meta.sort_unstable();
        let model = pss_exhaustive(&meta, &train, &val, &d, Loss::Squared, &BoostConfig::default()).unwrap();
        let (support, l) = common::naive_pss_exhaustive(&meta, &train, &val, Loss::Squared);
        if model.support == support && model.val_loss == l {
            identical += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        identical == 30 && t < Duration::from_secs(30),
        format!("exhaustive subset search equals the power-set oracle on {identical}/30 instances in {:.2} s", t.as_secs_f64()),
    )
}

fn selection_properties() -> Verdict {
    let mut rng = SeedTree::new(1003).rng();
    let mut failures = Vec::new();
    for _ in 0..10_000 {
        let p = rng.random_range(1..=30);
        let b = rng.random_range(1..=40);
        let sets = common::random_sets(&mut rng, p, b);
        let profile = aggregate(&sets, p).unwrap();
        // Half of the thresholds sit exactly on an attainable frequency.
        let mut pi = || {
            if rng.random_bool(0.5) {
                rng.random_range(1..=b) as f64 / b as f64
            } else {
                rng.random_range(1e-9..=1.0)
            }
        };
        let pis = (pi(), pi());
        let qs = (rng.random_range(1..=p), rng.random_range(1..=p));
        if let Err(e) = common::check_selection_rules(&sets, &profile, pis, qs) {
            failures.push(e);
        }
    }
    let first = failures.first().map(|e| format!("; first: {e}")).unwrap_or_default();
    verdict(failures.is_empty(), format!("10000 randomized selection-rule checks, {} failures{first}", failures.len()))
}

fn numerics() -> Verdict {
    let mut rng = SeedTree::new(1004).rng();
    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let f = rng.random_range(-8.0..8.0);
        let h = 1e-5;
        let fd = -(Loss::Logistic.evaluate(y, f + h) - Loss::Logistic.evaluate(y, f - h)) / (2.0 * h);
        let g = Loss::Logistic.negative_gradient(y, f);
        worst_fd = worst_fd.max((fd - g).abs() / g.abs());
    }

    let mut worst_orth: f64 = 0.0;
    for _ in 0..20 {
        let p = rng.random_range(1..=10);
        let d = random_regression(&mut rng, 50, p);
        let support: Vec<usize> = (0..p).filter(|&j| d.x.column(j).iter().any(|&v| v != d.x[(0, j)])).collect();
        let model = fit_reduced(&d, &support, Loss::Squared).unwrap();
        let r = &d.y - model.predict(&d.x);
        worst_orth = worst_orth.max(r.sum().abs());
        for &j in &support {
            worst_orth = worst_orth.max(d.x.column(j).dot(&r).abs());
        }
    }

    let fit = fit_reduced(&common::logit_sample(), &[0, 1], Loss::Logistic).unwrap();
    let est = [fit.intercept, fit.coef[0], fit.coef[1]];
    let worst_mle = est.iter().zip(common::LOGIT_MLE).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    verdict(
        worst_fd <= 1e-6 && worst_orth <= 1e-10 && worst_mle <= 1e-5,
        format!(
            "gradient vs finite differences max rel err {worst_fd:.1e}; OLS residual orthogonality {worst_orth:.1e}; \
             logistic fit vs external optimizer {worst_mle:.1e}"
        ),
    )
}

fn pfer() -> Verdict {
    let sets: Vec<Vec<usize>> = (0..5).map(|b| (b * 10..b * 10 + 10).collect()).collect();
    let profile = aggregate(&sets, 1000).unwrap();
    let at_06 = pfer_bound(&profile, Fraction::new(3, 5), 1000);
    let at_05 = pfer_bound(&profile, Fraction::new(1, 2), 1000);
    let below = pfer_bound(&profile, Fraction::new(9, 20), 1000);
    verdict(
        at_06 == Some(0.5) && at_05.is_none() && below.is_none(),
        format!("bound at floor 0.6 = {at_06:?}; at 0.5 = {at_05:?}; at 0.45 = {below:?}"),
    )
}

fn scaled_config(name: &str, task: Task) -> RunConfig {
    let scenario = ScenarioConfig {
        p: 100,
        n_train: 120,
        n_sub: 80,
        n_val: 40,
        n_test: 40,
        s0: 5,
        snr: 1.0,
        mu_beta: 4.0,
        mu_x: -2.0,
        b: 50,
        v: 30,
        task,
        n_partitions: 5,
        seed: 20_240_601,
    };
    RunConfig::new(name, scenario, vec![MethodSpec::RawBoost, MethodSpec::Lss { grid: GridSpec::default() }])
}

fn timed_run(cfg: &RunConfig, exec: Execution) -> (RunReport, Duration) {
    let start = Instant::now();
    let report = run_scenario(cfg, None, exec).unwrap();
    (report, start.elapsed())
}

fn csv_bytes(report: &RunReport) -> Vec<u8> {
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    out
}

fn regression_reproduction(report: &RunReport, t: Duration) -> Verdict {
    let raw = report.method("raw_boost").unwrap();
    let lss = report.method("lss").unwrap();
    let (pr_raw, pr_lss) = (raw.mean_precision.unwrap_or(0.0), lss.mean_precision.unwrap_or(0.0));
    let tp = lss.mean_tp_count.unwrap_or(0.0);
    verdict(
        pr_lss >= 1.5 * pr_raw && tp >= 2.0 && t < Duration::from_secs(600) && raw.failed_rows + lss.failed_rows == 0,
        format!(
            "precision LSS {pr_lss:.3} vs boosting {pr_raw:.3} (ratio {:.2}); LSS mean TP {tp:.2}; \
             boosting mean size {:.1}, LSS {:.1}; {:.1} s",
            pr_lss / pr_raw,
            raw.mean_selected_count.unwrap_or(f64::NAN),
            lss.mean_selected_count.unwrap_or(f64::NAN),
            t.as_secs_f64()
        ),
    )
}

fn classification_check(report: &RunReport, t: Duration) -> Verdict {
    let raw = report.method("raw_boost").unwrap();
    let lss = report.method("lss").unwrap();
    let (pr_raw, pr_lss) = (raw.mean_precision.unwrap_or(0.0), lss.mean_precision.unwrap_or(0.0));
    let aborted = report.rows.iter().filter(|r| r.status != "ok").count();
    let nsr = report.mean_inverse_nsr().unwrap_or(f64::NAN);
    let in_band = (340.4 / 3.0..=340.4 * 3.0).contains(&nsr);
    verdict(
        pr_lss >= pr_raw && aborted == 0 && in_band,
        format!(
            "precision LSS {pr_lss:.3} vs LogitBoost {pr_raw:.3}; {aborted} aborted rows; mean 1/NSR {nsr:.1}; {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn non_empty(report: &RunReport) -> Verdict {
    let lss: Vec<_> = report.rows.iter().filter(|r| r.method == "lss").collect();
    let empty = lss.iter().filter(|r| r.selected_count == Some(0)).count();
    let failed = lss.iter().filter(|r| r.status != "ok").count();
    verdict(
        empty == 0 && failed == 0 && !lss.is_empty(),
        format!("{empty} empty LSS supports and {failed} failed fits over {} runs", lss.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |k: usize, name: &'static str, v: Verdict| {
        println!("criterion {k} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((k, name, v));
    };

    record(1, "boosting oracle", boosting_oracle());
    record(2, "exhaustive subset oracle", pss_oracle());
    record(3, "selection-rule properties", selection_properties());
    record(4, "numerics", numerics());
    record(5, "PFER arithmetic", pfer());

    let reg_cfg = scaled_config("V-scaled", Task::Regression);
    let (reg, t_reg) = timed_run(&reg_cfg, Execution::Parallel);
    record(6, "scaled regression scenario", regression_reproduction(&reg, t_reg));

    let cls_cfg = scaled_config("XIX-scaled", Task::Classification);
    let (cls, t_cls) = timed_run(&cls_cfg, Execution::Parallel);
    record(7, "scaled classification scenario", classification_check(&cls, t_cls));

    record(8, "non-empty LSS supports", non_empty(&reg));

    let (reg_serial, _) = timed_run(&reg_cfg, Execution::Serial);
    let (cls_serial, _) = timed_run(&cls_cfg, Execution::Serial);
    let same_reg = csv_bytes(&reg) == csv_bytes(&reg_serial);
    let same_cls = csv_bytes(&cls) == csv_bytes(&cls_serial);
    record(
        9,
        "serial vs pool determinism",
        verdict(
            same_reg && same_cls,
            format!("regression CSV identical: {same_reg}; classification CSV identical: {same_cls}"),
        ),
    );

    let failed: Vec<usize> = results.iter().filter(|(_, _, v)| !v.pass).map(|(k, _, _)| *k).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
