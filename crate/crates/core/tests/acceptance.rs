//! End-to-end acceptance checks. Each criterion prints one line:
//! `PASS`, `FAIL` or `SKIP` followed by its number and the measured values.
//! Pass criterion numbers as arguments to run a subset.
//!
//! Image-based criteria need `data/` (see `scripts/fetch_test_images.py`) or
//! `DESPECKLE_DATA` pointing at a directory with the same files.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{data_dir, rng, synthetic_scene, test_image, uniform_field, uniform_image, workspace_root};
use despeckle::bench::{load_cases, run_cases, MetricsRow};
use despeckle::discrepancy::{global_discrepancy, global_discrepancy_derivative, StepCoefficients};
use despeckle::fidelity::{FidelityKind, FidelityModel};
use despeckle::grid::{divergence, dot, gradient, laplacian_norm_estimate, norm};
use despeckle::noise::{
    apply_multiplicative_noise, empirical_discrepancy_mean, exact_discrepancy, expected_discrepancy, psnr,
    CbarMode, DiscrepancyTarget, GammaNoiseSpec,
};
use despeckle::solver::{
    dp_ladm_run, ldp_ladm_run, lyapunov, plad_iterate, run, step_bound, SolverConfig, SolverState, SweepParams,
};
use despeckle::{Image, PixelParam, Window};
use rand::Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit, format!("{s:.2}s (limit {limit}s)"))
}

fn exp_model(f: Image) -> FidelityModel {
    FidelityModel::new(FidelityKind::Exponential, f).unwrap()
}

fn noisy(clean: &Image, m: f64, seed: u64) -> Image {
    apply_multiplicative_noise(clean, GammaNoiseSpec::new(m, seed).unwrap()).unwrap()
}

fn operator_algebra() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (m, n) = (r.random_range(1..=32), r.random_range(1..=32));
        let u = uniform_image(&mut r, m, n, -10.0, 10.0);
        let z = uniform_field(&mut r, m, n, -10.0, 10.0);
        let gap = (gradient(&u).dot(&z) + dot(&u, &divergence(&z))).abs() / (norm(&u) * z.norm());
        worst = worst.max(gap);
    }
    let lap = laplacian_norm_estimate(32, 32, 2000);
    let (fast, t) = within(start.elapsed(), 1.0);
    verdict(
        worst <= 1e-12 && lap > 7.5 && lap < 8.0 && fast,
        format!("worst relative adjoint gap {worst:.1e}, Laplacian norm {lap:.4}, {t}"),
    )
}

fn discrepancy_statistics() -> Verdict {
    let start = Instant::now();
    let mut exact_ok = true;
    let mut series_ok = true;
    let mut parts = Vec::new();
    for (i, m) in [4.0, 8.0, 10.0, 20.0].into_iter().enumerate() {
        let mc = empirical_discrepancy_mean(m, 10_000_000, 77 + i as u64).unwrap();
        let de = (mc - exact_discrepancy(m)).abs();
        exact_ok &= de <= 5e-4;
        let mut part = format!("M={m}: mc {mc:.5} |mc-exact| {de:.1e}");
        if m >= 5.0 {
            let ds = (mc - expected_discrepancy(m)).abs();
            series_ok &= ds <= 3e-3;
            part += &format!(" |mc-series| {ds:.1e}");
        }
        parts.push(part);
    }
    let (fast, t) = within(start.elapsed(), 10.0);
    verdict(
        exact_ok && series_ok && fast,
        format!("{}; {t}", parts.join("; ")),
    )
}

fn gradient_checks() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1003);
    let mut worst_fid: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    for _ in 0..50 {
        let f = uniform_image(&mut r, 8, 8, 1.0, 255.0);
        let model = exp_model(f.clone());
        let u = &f.mapv(f64::ln) + &uniform_image(&mut r, 8, 8, -1.0, 1.0);
        let d = uniform_image(&mut r, 8, 8, -1.0, 1.0);
        let eps = 1e-5;
        let fd = (model.value(&(&u + &(&d * eps))).unwrap() - model.value(&(&u - &(&d * eps))).unwrap()) / (2.0 * eps);
        let an = dot(&model.gradient(&u).unwrap(), &d);
        worst_fid = worst_fid.max((fd - an).abs() / an.abs().max(1.0));

        let c = StepCoefficients {
            a1: uniform_image(&mut r, 8, 8, -0.5, 0.5),
            a2: &f.mapv(f64::ln) + &uniform_image(&mut r, 8, 8, -0.7, 0.7),
        };
        let t = DiscrepancyTarget::new(CbarMode::HighMSeries, 8.0);
        let tau: f64 = r.random_range(0.1..5.0);
        let h = 1e-6;
        let fd = (global_discrepancy(&c, &model, tau + h, &t) - global_discrepancy(&c, &model, tau - h, &t)) / (2.0 * h);
        let an = global_discrepancy_derivative(&c, &model, tau);
        worst_k = worst_k.max((fd - an).abs() / an.abs().max(1e-3));
    }
    let (fast, t) = within(start.elapsed(), 1.0);
    verdict(
        worst_fid <= 1e-6 && worst_k <= 1e-6 && fast,
        format!("worst relative error: fidelity gradient {worst_fid:.1e}, discrepancy derivative {worst_k:.1e}; {t}"),
    )
}

fn reduction_identity() -> Verdict {
    let f = noisy(&synthetic_scene(), 8.0, 3);
    let model = exp_model(f.clone());
    let mut cfg = SolverConfig::dp_ladm(8.0);
    cfg.adapt_tau = false;
    cfg.tau0 = 1.7;
    cfg.tol = 1e-300;

    let params = SweepParams {
        tv_weight: 1.0,
        rho: cfg.rho,
        bounds: Some(model.natural_box()),
    };
    let mut manual = SolverState::initial(f.mapv(f64::ln), PixelParam::Uniform(cfg.tau0), PixelParam::Uniform(cfg.delta0));
    let mut bitwise = true;
    for k in 1..=100 {
        plad_iterate(&mut manual, &model, &params).unwrap();
        let out = run(&model, &SolverConfig { max_iter: k, ..cfg.clone() }, None).unwrap();
        bitwise &= out.state == manual;
    }

    let mut dp = SolverConfig::dp_ladm(8.0);
    dp.max_iter = 100;
    dp.tol = 1e-300;
    let ldp = SolverConfig { window: Window::Whole, ..dp.clone() };
    let a = dp_ladm_run(&f, &dp, None).unwrap();
    let b = ldp_ladm_run(&f, &ldp, None).unwrap();
    let worst = a
        .trace
        .records
        .iter()
        .zip(&b.trace.records)
        .map(|(x, y)| (x.tau - y.tau).abs())
        .fold(0.0, f64::max);
    let (lo, _, hi) = b.tau().summary();
    let flat = hi - lo;
    let taus: Vec<f64> = a.trace.records.iter().map(|r| r.tau).collect();
    let moved = taus.iter().any(|&t| t != dp.tau0);
    let same_len = a.trace.records.len() == 100 && b.trace.records.len() == 100;
    verdict(
        bitwise && worst <= 1e-10 && flat <= 1e-10 && moved && same_len,
        format!(
            "fixed-weight sequence bitwise equal over 100 sweeps: {bitwise}; whole-window tau vs global tau max gap {worst:.1e} \
             (tau {:.4} -> {:.4}), field spread {flat:.1e}",
            taus[0],
            taus[99]
        ),
    )
}

const CASE_FILES: [&str; 3] = ["lambda_sweep", "solvers", "aerial"];
static TABLES: [OnceLock<Vec<MetricsRow>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

/// Rows of a shipped case file, computed on first use.
fn table(name: &str) -> &'static [MetricsRow] {
    let i = CASE_FILES.iter().position(|&n| n == name).expect("known case file");
    TABLES[i].get_or_init(|| {
        let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let cases = load_cases(workspace_root().join("cases").join(format!("{name}.cases"))).unwrap();
        run_cases(&cases, jobs, 0.3)
    })
}

fn have_images(names: &[&str]) -> Result<(), Verdict> {
    let missing: Vec<_> = names.iter().filter(|n| !data_dir().join(format!("{n}.pgm")).exists()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Verdict::Skip(format!(
            "missing {missing:?} in {}; run scripts/fetch_test_images.py",
            data_dir().display()
        )))
    }
}

fn row<'a>(rows: &'a [MetricsRow], id: &str) -> &'a MetricsRow {
    rows.iter().find(|r| r.id == id).unwrap_or_else(|| panic!("no row {id}"))
}

fn fixed_vs_adaptive() -> Verdict {
    if let Err(v) = have_images(&["cameraman", "barbara", "lena"]) {
        return v;
    }
    let start = Instant::now();
    let rows = table("lambda_sweep");
    let mut ok = true;
    let mut parts = Vec::new();
    for (image, want) in [("cameraman", 25.29), ("barbara", 23.44), ("lena", 26.00)] {
        let dp = row(rows, &format!("sweep-{image}-dp")).psnr.unwrap();
        let profile: Vec<f64> = (1..=5)
            .map(|k| row(rows, &format!("sweep-{image}-plad-{k}")).psnr.unwrap())
            .collect();
        let best = (0..5).max_by(|&a, &b| profile[a].total_cmp(&profile[b])).unwrap() + 1;
        let rises = profile[0] < profile[best - 1] && profile[4] < profile[best - 1];
        let dp_ok = (dp - want).abs() <= 0.3;
        ok &= dp_ok && (best == 2 || best == 3) && rises;
        parts.push(format!(
            "{image}: adaptive {dp:.2} (want {want} +-0.3{}), fixed-weight profile [{}] peak at {best}/M",
            if dp_ok { "" } else { ", outside" },
            profile.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ")
        ));
    }
    let (fast, t) = within(start.elapsed(), 60.0);
    verdict(ok && fast, format!("{}; {t}", parts.join("; ")))
}

fn spot_checks() -> Verdict {
    if let Err(v) = have_images(&["cameraman", "aero"]) {
        return v;
    }
    let solvers = table("solvers");
    let aerial = table("aerial");
    let cam = row(solvers, "cameraman-m10-ldp");
    let cam_psnr = cam.psnr.unwrap();
    let cam_ok = (cam_psnr - 26.24).abs() <= 0.3 && cam.iterations <= 150;

    let ldp = row(aerial, "aero-m08-ldp");
    let dp = row(aerial, "aero-m08-dp");
    let plad = row(aerial, "aero-m08-plad-exp");
    let (l, d, p) = (ldp.psnr.unwrap(), dp.psnr.unwrap(), plad.psnr.unwrap());
    let order_ok = l > d && l > p;
    let iters_ok = [ldp, dp, plad]
        .iter()
        .all(|r| r.iterations <= 2 * r.expected_iters.unwrap());
    verdict(
        cam_ok && order_ok && iters_ok,
        format!(
            "cameraman M=10 local: {cam_psnr:.2} dB in {} iterations (want 26.24 +-0.3, <= 150); \
             aero M=8 (stand-in, absolute dB waived): local {l:.2} [{} it], global {d:.2} [{} it], fixed {p:.2} [{} it]; \
             local best: {order_ok}",
            cam.iterations, ldp.iterations, dp.iterations, plad.iterations
        ),
    )
}

fn convergence_diagnostics() -> Verdict {
    let start = Instant::now();
    let f = noisy(&synthetic_scene(), 20.0, 7);
    let model = exp_model(f.clone());
    let (tau, rho) = (2.0, 20.0);
    let bound = step_bound(&model, model.natural_box(), rho, tau).unwrap();
    let delta = 0.9 * bound;
    let params = SweepParams {
        tv_weight: 1.0,
        rho,
        bounds: Some(model.natural_box()),
    };
    let init = SolverState::initial(f.mapv(f64::ln), PixelParam::Uniform(tau), PixelParam::Uniform(delta));

    let mut saddle = init.clone();
    for _ in 0..5000 {
        plad_iterate(&mut saddle, &model, &params).unwrap();
    }

    let mut s = init;
    let mut energy = lyapunov(&s, &saddle, delta, rho);
    let first = energy;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut step = f64::INFINITY;
    for _ in 0..2000 {
        let prev = s.u.clone();
        plad_iterate(&mut s, &model, &params).unwrap();
        let e = lyapunov(&s, &saddle, delta, rho);
        worst_rise = worst_rise.max(e - energy);
        energy = e;
        step = norm(&(&s.u - &prev));
    }
    let primal = gradient(&s.u).sub(&s.z).norm();
    let (fast, t) = within(start.elapsed(), 30.0);
    verdict(
        worst_rise <= 1e-10 && step < 1e-4 && primal < 1e-4 && fast,
        format!(
            "step {delta:.3e} = 0.9 x bound; energy {first:.3e} -> {energy:.3e}, largest rise {worst_rise:.1e}; \
             after 2000 sweeps |du| {step:.1e}, |grad u - z| {primal:.1e}; {t}"
        ),
    )
}

fn tau_stability() -> Verdict {
    let Some(clean) = test_image("cameraman") else {
        return have_images(&["cameraman"]).unwrap_err();
    };
    let f = noisy(&clean, 8.0, 1);
    let mut taus = Vec::new();
    let mut scores = Vec::new();
    for tau0 in [0.1, 0.5, 1.0] {
        let cfg = SolverConfig { tau0, ..SolverConfig::dp_ladm(8.0) };
        let out = dp_ladm_run(&f, &cfg, None).unwrap();
        taus.push(out.tau().representative());
        scores.push(psnr(&out.image, &clean).unwrap().db().unwrap());
    }
    let spread = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (tl, th) = spread(&taus);
    let (pl, ph) = spread(&scores);
    let rel = (th - tl) / tl;
    verdict(
        rel < 0.05 && ph - pl < 0.1,
        format!(
            "final tau {:?} (spread {:.2}%), PSNR {:?} (spread {:.3} dB)",
            taus.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>(),
            100.0 * rel,
            scores.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>(),
            ph - pl
        ),
    )
}

fn stopping_rule() -> Verdict {
    if let Err(v) = have_images(&["cameraman", "barbara", "lena", "aero"]) {
        return v;
    }
    let mut problems = Vec::new();
    let mut total = 0;
    for name in CASE_FILES {
        for r in table(name) {
            total += 1;
            if r.status != "converged" {
                problems.push(format!("{} hit max-iter ({})", r.id, r.iterations));
            } else if let Some(e) = r.expected_iters {
                if r.iterations > 2 * e || 2 * r.iterations < e {
                    problems.push(format!("{} took {} vs {e}", r.id, r.iterations));
                }
            }
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("all {total} runs stopped on the relative-change rule within 2x of the reference counts")
        } else {
            format!("{} of {total} runs out of range: {}", problems.len(), problems.join("; "))
        },
    )
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        (1, "operator algebra", operator_algebra),
        (2, "noise statistic", discrepancy_statistics),
        (3, "gradient checks", gradient_checks),
        (4, "fixed-weight and whole-window reductions", reduction_identity),
        (5, "M=8 fixed vs adaptive weights", fixed_vs_adaptive),
        (6, "local solver spot checks", spot_checks),
        (7, "convergence diagnostics", convergence_diagnostics),
        (8, "initial-weight stability", tau_stability),
        (9, "stopping rule", stopping_rule),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let v = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Verdict::Fail(format!("panicked: {:?}", e.downcast_ref::<String>())));
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {n} ({name}): {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
