//! Linearized alternating-direction iterations with fixed, globally adapted
//! or locally adapted fidelity weights.
//!
//! All three solvers share [`plad_iterate`]. Per sweep:
//!
//! ```text
//! u+ = P(u - delta (tau grad D(u) + rho div(z - grad u) + div b))
//! z+ = shrink(grad u+ - b/rho, w/rho)
//! b+ = b + rho (z+ - grad u+)
//! ```
//!
//! with fidelity weight `tau` and TV weight `w`. The fixed-parameter solver
//! uses `tau = 1, w = lambda`; the adaptive ones use `w = 1` and move `tau`.

mod config;
mod diagnostics;
mod trace;

pub use config::{Normalization, SolverConfig, SolverKind, StepRule, STRICT_MARGIN};
pub use diagnostics::{
    kkt_residuals, lyapunov, relative_error, step_bound, step_bound_from_lipschitz, step_bound_ratio,
    KktResiduals, LAPLACIAN_BOUND,
};
pub use trace::{IterationRecord, RunStatus, RunTrace};

use ndarray::Zip;

use crate::discrepancy::{
    local_newton_update, newton_update_tau, smooth_tau, splitting_term, NewtonOutcome, StepCoefficients,
};
use crate::error::{Error, Result};
use crate::fidelity::{project_box_in_place, FeasibleBox, FidelityKind, FidelityModel};
use crate::grid::{all_finite, gradient, shrink_field, GradientField, Image, PixelParam};
use crate::noise::{psnr, DiscrepancyTarget};

/// Iterate `(u, z, b)` together with the current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Log image (exponential model) or intensity image (I-divergence).
    pub u: Image,
    pub z: GradientField,
    /// Scaled multiplier of the constraint `z = grad u`.
    pub b: GradientField,
    /// Fidelity weight.
    pub tau: PixelParam,
    /// Step size.
    pub delta: PixelParam,
    /// Completed sweeps.
    pub k: usize,
}

impl SolverState {
    /// `u = u0`, `z = grad u0`, `b = 0`.
    pub fn initial(u0: Image, tau: PixelParam, delta: PixelParam) -> Self {
        let (m, n) = u0.dim();
        Self {
            z: gradient(&u0),
            b: GradientField::zeros(m, n),
            u: u0,
            tau,
            delta,
            k: 0,
        }
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.u) && self.z.is_finite() && self.b.is_finite()
    }
}

/// Parameters of one sweep that are not part of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub tv_weight: f64,
    pub rho: f64,
    pub bounds: Option<FeasibleBox>,
}

/// One sweep from precomputed step coefficients.
fn advance(
    state: &mut SolverState,
    coeffs: &StepCoefficients,
    params: &SweepParams,
) -> Result<()> {
    let mut u = coeffs.candidate(&state.tau);
    if let Some(bounds) = params.bounds {
        project_box_in_place(&mut u, bounds);
    }
    let gu = gradient(&u);
    let rho = params.rho;
    let mut w = gu.clone();
    Zip::from(&mut w.h).and(&state.b.h).for_each(|w, &b| *w -= b / rho);
    Zip::from(&mut w.v).and(&state.b.v).for_each(|w, &b| *w -= b / rho);
    let z = shrink_field(&w, params.tv_weight / rho);
    Zip::from(&mut state.b.h)
        .and(&z.h)
        .and(&gu.h)
        .for_each(|b, &z, &g| *b += rho * (z - g));
    Zip::from(&mut state.b.v)
        .and(&z.v)
        .and(&gu.v)
        .for_each(|b, &z, &g| *b += rho * (z - g));
    state.u = u;
    state.z = z;
    state.k += 1;
    if !state.is_finite() {
        return Err(Error::NonFinite { iteration: state.k });
    }
    Ok(())
}

fn coefficients(state: &SolverState, model: &FidelityModel, rho: f64) -> StepCoefficients {
    let g = model.gradient_unchecked(&state.u);
    let split = splitting_term(&state.u, &state.z, &state.b, rho);
    StepCoefficients::from_parts(&state.u, &g, &split, &state.delta)
}

/// One linearized sweep with the weights stored in `state`.
pub fn plad_iterate(state: &mut SolverState, model: &FidelityModel, params: &SweepParams) -> Result<()> {
    if model.kind == FidelityKind::IDivergence {
        if let Some(((i, j), &value)) = state.u.indexed_iter().find(|(_, &x)| !(x > 0.0)) {
            return Err(Error::Domain { value, index: (i, j) });
        }
    }
    let coeffs = coefficients(state, model, params.rho);
    advance(state, &coeffs, params)
}

/// Result of a full solver run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Intensity image clamped to [0, 255].
    pub image: Image,
    /// Final state.
    pub state: SolverState,
    pub trace: RunTrace,
    pub normalization: Normalization,
    /// Lipschitz constant of the fidelity gradient over the natural box.
    pub lipschitz: f64,
}

impl RunOutput {
    pub fn tau(&self) -> &PixelParam {
        &self.state.tau
    }
}

fn step_for(rule: StepRule, delta0: f64, rho: f64, lipschitz: f64, tau: &PixelParam) -> PixelParam {
    match rule {
        StepRule::Fixed => PixelParam::Uniform(delta0),
        StepRule::Heuristic { capped } => {
            let cap = if capped {
                1.0 / (LAPLACIAN_BOUND * rho + STRICT_MARGIN)
            } else {
                f64::INFINITY
            };
            tau.map(|t| (delta0 / (0.4 * t)).min(cap))
        }
        StepRule::Strict { fraction } => {
            tau.map(|t| fraction / (t * lipschitz + LAPLACIAN_BOUND * rho + STRICT_MARGIN))
        }
    }
}

/// Global discrepancy of an iterate: `mean(q(u)) - C` computed on the
/// intensity image.
fn iterate_discrepancy(model: &FidelityModel, u: &Image, target: &DiscrepancyTarget) -> f64 {
    let f = model.observed();
    let q: f64 = match model.kind {
        FidelityKind::Exponential => Zip::from(u)
            .and(f)
            .and(model.log_observed())
            .fold(0.0, |a, &u, &f, &lf| a + u + f * (-u).exp() - lf),
        FidelityKind::IDivergence => Zip::from(u)
            .and(f)
            .and(model.log_observed())
            .fold(0.0, |a, &u, &f, &lf| a + u.ln() + f / u - lf),
    };
    q / u.len() as f64 - target.c_bar
}

fn clamp_intensity(model: &FidelityModel, u: &Image) -> Image {
    model.to_intensity(u).mapv(|x| x.clamp(0.0, 255.0))
}

/// Run the solver selected by `config.solver` on the observation held by
/// `model`, optionally scoring every iterate against `reference`.
pub fn run(model: &FidelityModel, config: &SolverConfig, reference: Option<&Image>) -> Result<RunOutput> {
    config.validate()?;
    if config.model != model.kind {
        return Err(Error::Config(format!(
            "configuration is for the {} model but the data term is {}",
            config.model.name(),
            model.kind.name()
        )));
    }
    if let Some(r) = reference {
        crate::error::check_same_shape(r.dim(), model.observed().dim())?;
    }
    let bounds = model.natural_box();
    let lipschitz = model.hessian_lipschitz_bound(bounds)?;
    let target = config.target();
    let rho = config.rho;
    let (m, n) = model.observed().dim();

    let (tau0, tv_weight) = match config.solver {
        SolverKind::Plad => (PixelParam::Uniform(1.0), config.effective_lambda()),
        SolverKind::DpLadm => (PixelParam::Uniform(config.tau0), 1.0),
        SolverKind::LdpLadm => (PixelParam::Field(Image::from_elem((m, n), config.tau0)), 1.0),
    };
    let delta0 = match config.step_rule {
        StepRule::Strict { .. } => step_for(config.step_rule, config.delta0, rho, lipschitz, &tau0),
        _ => PixelParam::Uniform(config.delta0),
    };
    let params = SweepParams {
        tv_weight,
        rho,
        bounds: config.project.then_some(bounds),
    };
    let mut state = SolverState::initial(model.initial_iterate(), tau0, delta0);
    let adaptive = config.adapt_tau && config.solver != SolverKind::Plad;

    let mut records = Vec::new();
    let mut status = RunStatus::MaxIterations;
    let mut newton_failures = 0;
    let mut max_step_ratio: f64 = 0.0;
    for k in 0..config.max_iter {
        if adaptive && k % config.newton_every == 0 {
            let coeffs = coefficients(&state, model, rho);
            let recalculated = match config.solver {
                SolverKind::DpLadm => {
                    let PixelParam::Uniform(tau) = state.tau else {
                        unreachable!("global solver keeps a scalar weight")
                    };
                    let up = newton_update_tau(&coeffs, model, tau, &target, config.newton_iters);
                    if up.outcome == NewtonOutcome::NoBracket {
                        newton_failures += 1;
                    }
                    if up.recalculated() {
                        state.tau = PixelParam::Uniform(up.tau);
                    }
                    up.recalculated()
                }
                SolverKind::LdpLadm => {
                    let PixelParam::Field(tau) = &state.tau else {
                        unreachable!("local solver keeps a weight field")
                    };
                    let up = local_newton_update(&coeffs, model, tau, &target, config.window, config.newton_iters)?;
                    if up.active {
                        state.tau = PixelParam::Field(smooth_tau(&up.tau, config.window)?);
                    }
                    up.active
                }
                SolverKind::Plad => false,
            };
            if recalculated && config.step_rule != StepRule::Fixed {
                state.delta = step_for(config.step_rule, config.delta0, rho, lipschitz, &state.tau);
            }
        }
        max_step_ratio = max_step_ratio.max(step_bound_ratio(&state.delta, &state.tau, lipschitz, rho));

        let prev = state.u.clone();
        plad_iterate(&mut state, model, &params)?;
        let rel_err = relative_error(&state.u, &prev, model.kind)?;
        let psnr_k = match reference {
            Some(r) => psnr(&clamp_intensity(model, &state.u), r)?.db(),
            None => None,
        };
        records.push(IterationRecord {
            k: state.k,
            tau: state.tau.representative(),
            rel_err,
            psnr: psnr_k,
            discrepancy: iterate_discrepancy(model, &state.u, &target),
            delta: state.delta.representative(),
        });
        // The first sweep starts from a stationary point of the data term
        // with z = grad u and b = 0, so it never moves u.
        if k >= 1 && rel_err < config.tol {
            status = RunStatus::Converged;
            break;
        }
    }
    if max_step_ratio >= 1.0 {
        log::debug!("step exceeded the convergence bound (ratio {max_step_ratio:.3})");
    }

    Ok(RunOutput {
        image: clamp_intensity(model, &state.u),
        state,
        trace: RunTrace {
            records,
            status,
            newton_failures,
            max_step_ratio,
        },
        normalization: config.normalization(),
        lipschitz,
    })
}

/// [`run`] with `config.solver` forced to the global adaptive solver.
pub fn dp_ladm_run(f: &Image, config: &SolverConfig, reference: Option<&Image>) -> Result<RunOutput> {
    let model = FidelityModel::new(FidelityKind::Exponential, f.clone())?;
    run(&model, &SolverConfig { solver: SolverKind::DpLadm, ..config.clone() }, reference)
}

/// [`run`] with `config.solver` forced to the local adaptive solver.
pub fn ldp_ladm_run(f: &Image, config: &SolverConfig, reference: Option<&Image>) -> Result<RunOutput> {
    let model = FidelityModel::new(FidelityKind::Exponential, f.clone())?;
    run(&model, &SolverConfig { solver: SolverKind::LdpLadm, ..config.clone() }, reference)
}
