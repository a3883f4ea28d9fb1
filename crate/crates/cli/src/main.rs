use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use despeckle::bench::{self, MetricsRow};
use despeckle::fidelity::FidelityModel;
use despeckle::noise::{apply_multiplicative_noise, psnr, GammaNoiseSpec};
use despeckle::pgm::{read_image, read_pgm, write_image};
use despeckle::solver::{run, RunStatus, SolverConfig, SolverKind, StepRule};

#[derive(Parser)]
#[command(name = "despeckle", version, about = "Remove multiplicative Gamma noise from grayscale PGM images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiply an image by Gamma(M, 1/M) noise.
    AddNoise {
        input: PathBuf,
        output: PathBuf,
        #[arg(long = "M")]
        m: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Denoise one image and print its metrics as a CSV line.
    Denoise(Box<DenoiseArgs>),
    /// Run a case file and write a metrics CSV.
    Bench {
        cases: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Pass band around expected PSNR values, in dB.
        #[arg(long, default_value_t = bench::DEFAULT_PSNR_TOLERANCE)]
        tolerance: f64,
    },
    /// PSNR between two images.
    Psnr { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct DenoiseArgs {
    input: PathBuf,
    output: PathBuf,
    /// Clean image for PSNR reporting.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "exp")]
    model: String,
    #[arg(long, default_value = "dp-ladm")]
    solver: String,
    /// Gamma shape of the noise.
    #[arg(long = "M")]
    m: f64,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    /// TV weight of the fixed-parameter solver.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    newton_every: Option<usize>,
    #[arg(long)]
    newton_iters: Option<usize>,
    /// Odd window size, or `whole`.
    #[arg(long)]
    window: Option<String>,
    /// auto, low-m, high-m, digamma, or a number.
    #[arg(long)]
    cbar: Option<String>,
    #[arg(long)]
    variable_step: Option<String>,
    /// Use `fraction / (tau L + 8 rho + eps)` as the step.
    #[arg(long)]
    strict_step: Option<f64>,
    #[arg(long)]
    project: Option<String>,
    /// Seed that produced the input; recorded in the metrics line.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exit with status 2 when the run stops at max-iter.
    #[arg(long)]
    strict: bool,
    /// Also print the CSV header.
    #[arg(long)]
    header: bool,
}

fn build_config(a: &DenoiseArgs) -> Result<SolverConfig> {
    let solver: SolverKind = a.solver.parse()?;
    let model = bench::parse_model(&a.model).ok_or_else(|| anyhow!("unknown model '{}'", a.model))?;
    let mut c = SolverConfig::for_solver(solver, model, a.m);
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { c.$field = v; } )* };
    }
    set!(rho, delta0, tau0, tol, max_iter, newton_every, newton_iters);
    c.lambda = a.lambda.or(c.lambda);
    if let Some(w) = &a.window {
        c.window = bench::parse_window(w).ok_or_else(|| anyhow!("bad --window '{w}'"))?;
    }
    if let Some(v) = &a.cbar {
        c.cbar = bench::parse_cbar(v).ok_or_else(|| anyhow!("bad --cbar '{v}'"))?;
    }
    if let Some(v) = &a.variable_step {
        let on = bench::parse_switch(v).ok_or_else(|| anyhow!("bad --variable-step '{v}'"))?;
        c.step_rule = if on {
            StepRule::Heuristic { capped: true }
        } else {
            StepRule::Fixed
        };
    }
    if let Some(fraction) = a.strict_step {
        c.step_rule = StepRule::Strict { fraction };
    }
    if let Some(v) = &a.project {
        c.project = bench::parse_switch(v).ok_or_else(|| anyhow!("bad --project '{v}'"))?;
    }
    c.validate()?;
    Ok(c)
}

fn denoise(a: &DenoiseArgs) -> Result<ExitCode> {
    let config = build_config(a)?;
    let f = read_image(&a.input)?;
    let reference = a.reference.as_ref().map(read_pgm).transpose()?;
    let model = FidelityModel::new(config.model, f)?;
    let start = Instant::now();
    let out = run(&model, &config, reference.as_ref())?;
    let wall = start.elapsed().as_secs_f64();
    write_image(&a.output, &out.image)?;
    if let Some(path) = &a.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        out.trace.write_csv(BufWriter::new(file))?;
    }
    let score = match &reference {
        Some(r) => psnr(&out.image, r)?.db(),
        None => None,
    };
    let id = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let row = MetricsRow::from_run(&id, &config, a.seed, &out, score, wall);
    bench::write_metrics_with(&[row], io::stdout().lock(), a.header)?;
    if a.strict && out.trace.status != RunStatus::Converged {
        eprintln!("not converged after {} iterations", out.trace.iterations());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::AddNoise { input, output, m, seed } => {
            let clean = read_pgm(&input)?;
            let noisy = apply_multiplicative_noise(&clean, GammaNoiseSpec::new(m, seed)?)?;
            write_image(&output, &noisy)?;
            // Score what was written, i.e. after 8-bit quantization.
            let written = noisy.mapv(|x| x.clamp(0.0, 255.0).round());
            println!("{}", psnr(&written, &clean)?);
        }
        Command::Denoise(args) => return denoise(&args),
        Command::Bench { cases, out, jobs, tolerance } => {
            let cases = bench::load_cases(&cases)?;
            let rows = bench::run_cases(&cases, jobs, tolerance);
            match out {
                Some(path) => {
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    bench::write_metrics(&rows, BufWriter::new(file))?;
                }
                None => bench::write_metrics(&rows, io::stdout().lock())?,
            }
            let failed = rows.iter().filter(|r| r.verdict.as_deref() == Some("fail")).count();
            if failed > 0 {
                eprintln!("{failed} of {} cases outside the PSNR band", rows.len());
            }
        }
        Command::Psnr { a, b } => {
            let (a, b) = (read_pgm(&a)?, read_pgm(&b)?);
            if a.dim() != b.dim() {
                bail!("size mismatch: {:?} vs {:?}", a.dim(), b.dim());
            }
            println!("{}", psnr(&a, &b)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
