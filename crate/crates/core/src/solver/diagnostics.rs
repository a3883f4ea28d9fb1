//! Stopping rule, step-size bound and optimality residuals.

use ndarray::Zip;

use super::SolverState;
use crate::error::{check_same_shape, Error, Result};
use crate::fidelity::{FeasibleBox, FidelityKind, FidelityModel};
use crate::grid::{divergence, gradient, norm, Image, PixelParam};

/// Operator-norm bound of the Neumann Laplacian on any grid.
pub const LAPLACIAN_BOUND: f64 = 8.0;

/// Relative change of the intensity image between two iterates.
pub fn relative_error(u_next: &Image, u_prev: &Image, kind: FidelityKind) -> Result<f64> {
    check_same_shape(u_next.dim(), u_prev.dim())?;
    let (num, den) = match kind {
        FidelityKind::Exponential => Zip::from(u_next).and(u_prev).fold((0.0, 0.0), |(n, d), &a, &b| {
            let (ea, eb) = (a.exp(), b.exp());
            (n + (ea - eb) * (ea - eb), d + eb * eb)
        }),
        FidelityKind::IDivergence => Zip::from(u_next)
            .and(u_prev)
            .fold((0.0, 0.0), |(n, d), &a, &b| (n + (a - b) * (a - b), d + b * b)),
    };
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// `1 / (tau L + 8 rho)`, the largest step covered by the convergence theory.
pub fn step_bound(model: &FidelityModel, bounds: FeasibleBox, rho: f64, tau_bar: f64) -> Result<f64> {
    let l = model.hessian_lipschitz_bound(bounds)?;
    Ok(step_bound_from_lipschitz(l, rho, tau_bar))
}

pub fn step_bound_from_lipschitz(lipschitz: f64, rho: f64, tau_bar: f64) -> f64 {
    1.0 / (tau_bar * lipschitz + rho * LAPLACIAN_BOUND)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `|grad u - z|`.
    pub primal: f64,
    /// `|tau grad D(u) + div b|`.
    pub stationarity: f64,
    /// Whether `-b` is a subgradient of `w |z|_1` at every pixel
    /// (`|b| <= w`, and `b = -w z/|z|` where `z != 0`).
    pub dual_feasible: bool,
}

/// First-order optimality residuals of the constrained problem with
/// fidelity weight `state.tau` and TV weight `tv_weight`.
pub fn kkt_residuals(state: &SolverState, model: &FidelityModel, tv_weight: f64) -> Result<KktResiduals> {
    let g = gradient(&state.u);
    let primal = g.sub(&state.z).norm();
    let grad_d = model.gradient(&state.u)?;
    let weighted = state.tau.combine(&grad_d, |g, t| t * g);
    let stationarity = norm(&(weighted + divergence(&state.b)));

    let mut dual_feasible = true;
    Zip::from(&state.z.h)
        .and(&state.z.v)
        .and(&state.b.h)
        .and(&state.b.v)
        .for_each(|&zh, &zv, &bh, &bv| {
            let bmag = bh.hypot(bv);
            if bmag > tv_weight * (1.0 + 1e-8) {
                dual_feasible = false;
            }
            let zmag = zh.hypot(zv);
            if zmag > 0.0 {
                let (eh, ev) = (bh + tv_weight * zh / zmag, bv + tv_weight * zv / zmag);
                if eh.hypot(ev) > 1e-6 {
                    dual_feasible = false;
                }
            }
        });
    Ok(KktResiduals {
        primal,
        stationarity,
        dual_feasible,
    })
}

/// Energy that decreases along the iteration for steps within the bound,
/// measured against a saddle point `(u*, z*, b*)`:
/// `|u-u*|^2/delta - rho |grad(u-u*)|^2 + rho |z-z*|^2 + |b-b*|^2/rho`.
pub fn lyapunov(state: &SolverState, saddle: &SolverState, delta: f64, rho: f64) -> f64 {
    let du = &state.u - &saddle.u;
    let gdu = gradient(&du);
    let dz = state.z.sub(&saddle.z);
    let db = state.b.sub(&saddle.b);
    du.iter().map(|x| x * x).sum::<f64>() / delta - rho * gdu.dot(&gdu)
        + rho * dz.dot(&dz)
        + db.dot(&db) / rho
}

/// Largest `delta * (tau L + 8 rho)` over the pixels; the step is within the
/// bound when this is below 1.
pub fn step_bound_ratio(delta: &PixelParam, tau: &PixelParam, lipschitz: f64, rho: f64) -> f64 {
    let ratio = |d: f64, t: f64| d * (t * lipschitz + rho * LAPLACIAN_BOUND);
    match (delta, tau) {
        (PixelParam::Uniform(d), PixelParam::Uniform(t)) => ratio(*d, *t),
        (PixelParam::Uniform(d), PixelParam::Field(t)) => t.iter().fold(0.0, |a, &t| a.max(ratio(*d, t))),
        (PixelParam::Field(d), PixelParam::Uniform(t)) => d.iter().fold(0.0, |a, &d| a.max(ratio(d, *t))),
        (PixelParam::Field(d), PixelParam::Field(t)) => Zip::from(d)
            .and(t)
            .fold(0.0, |a, &d, &t| a.max(ratio(d, t))),
    }
}
