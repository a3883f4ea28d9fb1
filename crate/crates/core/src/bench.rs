//! Batch runs described by flat `key=value` case files.
//!
//! One case per line; `#` starts a comment. Recognised keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `id` | case identifier (required, unique) |
//! | `image` | clean PGM, relative to the case file (required) |
//! | `M` | Gamma shape of the synthetic noise (required) |
//! | `solver` | `plad`, `dp-ladm`, `ldp-ladm` (required) |
//! | `model` | `exp` (default) or `div` |
//! | `seed` | noise seed, default 1 |
//! | `expect` | expected PSNR in dB |
//! | `expect_iters` | expected iteration count |
//! | `rho`, `delta0`, `tau0`, `lambda`, `tol`, `max_iter`, `newton_every`, `newton_iters`, `window`, `cbar`, `variable_step`, `project` | solver overrides |
//!
//! `window` takes an odd size or `whole`; `cbar` takes `auto`, `low-m`,
//! `high-m`, `digamma` or a number.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fidelity::{FidelityKind, FidelityModel};
use crate::grid::{PixelParam, Window};
use crate::noise::{apply_multiplicative_noise, psnr, CbarMode, GammaNoiseSpec};
use crate::pgm::read_pgm;
use crate::solver::{run, RunOutput, SolverConfig, SolverKind, StepRule};

/// Default acceptance band around an expected PSNR.
pub const DEFAULT_PSNR_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub id: String,
    pub image: PathBuf,
    pub noise_level: f64,
    pub seed: u64,
    pub config: SolverConfig,
    pub expected_psnr: Option<f64>,
    pub expected_iterations: Option<usize>,
}

pub fn parse_model(s: &str) -> Option<FidelityKind> {
    match s {
        "exp" => Some(FidelityKind::Exponential),
        "div" => Some(FidelityKind::IDivergence),
        _ => None,
    }
}

/// `auto` maps to `None`.
pub fn parse_cbar(s: &str) -> Option<Option<CbarMode>> {
    match s {
        "auto" => Some(None),
        "low-m" => Some(Some(CbarMode::LowMSeries)),
        "high-m" => Some(Some(CbarMode::HighMSeries)),
        "digamma" => Some(Some(CbarMode::DigammaExact)),
        other => other.parse::<f64>().ok().map(|c| Some(CbarMode::Custom(c))),
    }
}

pub fn parse_window(s: &str) -> Option<Window> {
    if s == "whole" {
        return Some(Window::Whole);
    }
    s.parse().ok().map(Window::Box)
}

pub fn parse_switch(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

/// Parse case-file text; relative image paths resolve against `base`.
pub fn parse_cases(text: &str, base: &Path, origin: &Path) -> Result<Vec<BenchmarkCase>> {
    let mut cases: Vec<BenchmarkCase> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::CaseFile {
            path: origin.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let mut pairs = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{tok}'")))?;
            pairs.push((k, v));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let required = |key: &str| get(key).ok_or_else(|| err(format!("missing '{key}'")));
        fn num<T: std::str::FromStr>(v: &str, key: &str, err: &dyn Fn(String) -> Error) -> Result<T> {
            v.parse().map_err(|_| err(format!("bad value '{v}' for '{key}'")))
        }

        let id = required("id")?.to_string();
        if cases.iter().any(|c| c.id == id) {
            return Err(err(format!("duplicate id '{id}'")));
        }
        let noise_level: f64 = num(required("M")?, "M", &err)?;
        if !(noise_level > 0.0) {
            return Err(err("M must be positive".into()));
        }
        let solver: SolverKind = required("solver")?.parse().map_err(|_| err("unknown solver".into()))?;
        let model = match get("model") {
            Some(v) => parse_model(v).ok_or_else(|| err(format!("unknown model '{v}'")))?,
            None => FidelityKind::Exponential,
        };
        let mut config = SolverConfig::for_solver(solver, model, noise_level);
        let mut seed = 1;
        let mut expected_psnr = None;
        let mut expected_iterations = None;
        for &(k, v) in &pairs {
            match k {
                "id" | "image" | "M" | "solver" | "model" => {}
                "seed" => seed = num(v, k, &err)?,
                "expect" => expected_psnr = Some(num(v, k, &err)?),
                "expect_iters" => expected_iterations = Some(num(v, k, &err)?),
                "rho" => config.rho = num(v, k, &err)?,
                "delta0" => config.delta0 = num(v, k, &err)?,
                "tau0" => config.tau0 = num(v, k, &err)?,
                "lambda" => config.lambda = Some(num(v, k, &err)?),
                "tol" => config.tol = num(v, k, &err)?,
                "max_iter" => config.max_iter = num(v, k, &err)?,
                "newton_every" => config.newton_every = num(v, k, &err)?,
                "newton_iters" => config.newton_iters = num(v, k, &err)?,
                "window" => {
                    config.window = parse_window(v).ok_or_else(|| err(format!("bad window '{v}'")))?
                }
                "cbar" => config.cbar = parse_cbar(v).ok_or_else(|| err(format!("bad cbar '{v}'")))?,
                "variable_step" => {
                    let on = parse_switch(v).ok_or_else(|| err(format!("bad switch '{v}'")))?;
                    config.step_rule = if on {
                        StepRule::Heuristic { capped: true }
                    } else {
                        StepRule::Fixed
                    };
                }
                "project" => config.project = parse_switch(v).ok_or_else(|| err(format!("bad switch '{v}'")))?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        config.validate().map_err(|e| err(e.to_string()))?;
        cases.push(BenchmarkCase {
            id,
            image: base.join(required("image")?),
            noise_level,
            seed,
            config,
            expected_psnr,
            expected_iterations,
        });
    }
    Ok(cases)
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<BenchmarkCase>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_cases(&text, base, path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub id: String,
    pub solver: String,
    pub model: String,
    #[serde(rename = "M")]
    pub noise_level: f64,
    pub seed: u64,
    /// Blank when the output equals the reference.
    pub psnr: Option<f64>,
    pub iterations: usize,
    pub wall_s: f64,
    pub tau_min: f64,
    pub tau_mean: f64,
    pub tau_max: f64,
    /// `converged`, `max-iter`, or `error: ...`.
    pub status: String,
    /// Largest `delta (tau L + 8 rho)` of the run.
    pub step_ratio: f64,
    pub expected_psnr: Option<f64>,
    pub expected_iters: Option<usize>,
    /// `pass`/`fail` against `expected_psnr`, blank without one.
    pub verdict: Option<String>,
}

impl MetricsRow {
    fn failed(case: &BenchmarkCase, e: &Error) -> Self {
        Self {
            id: case.id.clone(),
            solver: case.config.solver.name().into(),
            model: case.config.model.name().into(),
            noise_level: case.noise_level,
            seed: case.seed,
            psnr: None,
            iterations: 0,
            wall_s: 0.0,
            tau_min: f64::NAN,
            tau_mean: f64::NAN,
            tau_max: f64::NAN,
            status: format!("error: {e}"),
            step_ratio: f64::NAN,
            expected_psnr: case.expected_psnr,
            expected_iters: case.expected_iterations,
            verdict: case.expected_psnr.map(|_| "fail".into()),
        }
    }
}

impl MetricsRow {
    /// Summarize a finished run. `score` is the PSNR against the clean image.
    pub fn from_run(
        id: &str,
        config: &SolverConfig,
        seed: u64,
        out: &RunOutput,
        score: Option<f64>,
        wall_s: f64,
    ) -> Self {
        let (tau_min, tau_mean, tau_max) = match (&out.state.tau, config.solver) {
            // The fixed-parameter run reports the equivalent fidelity weight 1/lambda.
            (PixelParam::Uniform(_), SolverKind::Plad) => {
                let t = 1.0 / config.effective_lambda();
                (t, t, t)
            }
            (tau, _) => tau.summary(),
        };
        Self {
            id: id.to_string(),
            solver: config.solver.name().into(),
            model: config.model.name().into(),
            noise_level: config.noise_level,
            seed,
            psnr: score,
            iterations: out.trace.iterations(),
            wall_s,
            tau_min,
            tau_mean,
            tau_max,
            status: out.trace.status.name().into(),
            step_ratio: out.trace.max_step_ratio,
            expected_psnr: None,
            expected_iters: None,
            verdict: None,
        }
    }
}

/// Synthesize the noisy observation for a case and run it.
pub fn run_case(case: &BenchmarkCase, tolerance: f64) -> Result<MetricsRow> {
    let clean = read_pgm(&case.image)?;
    let spec = GammaNoiseSpec::new(case.noise_level, case.seed)?;
    let noisy = apply_multiplicative_noise(&clean, spec)?;
    let model = FidelityModel::new(case.config.model, noisy)?;
    let start = Instant::now();
    let out = run(&model, &case.config, None)?;
    let wall_s = start.elapsed().as_secs_f64();
    let score = psnr(&out.image, &clean)?.db();
    let mut row = MetricsRow::from_run(&case.id, &case.config, case.seed, &out, score, wall_s);
    row.expected_psnr = case.expected_psnr;
    row.expected_iters = case.expected_iterations;
    row.verdict = case.expected_psnr.map(|e| {
        let ok = score.is_some_and(|p| (p - e).abs() <= tolerance);
        if ok { "pass" } else { "fail" }.to_string()
    });
    Ok(row)
}

/// Run every case on up to `jobs` threads; rows come back sorted by id.
/// A failing case yields an `error: ...` row instead of aborting the batch.
pub fn run_cases(cases: &[BenchmarkCase], jobs: usize, tolerance: f64) -> Vec<MetricsRow> {
    let work = || {
        cases
            .par_iter()
            .map(|c| run_case(c, tolerance).unwrap_or_else(|e| MetricsRow::failed(c, &e)))
            .collect::<Vec<_>>()
    };
    let mut rows = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    };
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows
}

pub const CSV_HEADER: [&str; 16] = [
    "id",
    "solver",
    "model",
    "M",
    "seed",
    "psnr",
    "iterations",
    "wall_s",
    "tau_min",
    "tau_mean",
    "tau_max",
    "status",
    "step_ratio",
    "expected_psnr",
    "expected_iters",
    "verdict",
];

pub fn write_metrics<W: std::io::Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    write_metrics_with(rows, out, true)
}

/// As [`write_metrics`], optionally without the header row.
pub fn write_metrics_with<W: std::io::Write>(rows: &[MetricsRow], out: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}
