//! Discrepancy functions in the fidelity weight `tau` and the Newton updates
//! that drive `tau` towards the noise statistic.
//!
//! One linearized u-step is affine in `tau`: `u+(tau) = a1 * tau + a2`. The
//! global discrepancy is `mean(q(u+)) - C` with the per-pixel
//! `q(x) = x + f exp(-x) - log f >= 0`; the local variant replaces the mean
//! by a moving window average.

use ndarray::Zip;

use crate::error::Result;
use crate::fidelity::FidelityModel;
use crate::grid::{divergence, gradient, mean, GradientField, Image, PixelParam, Window};
use crate::noise::DiscrepancyTarget;

pub const TAU_MIN: f64 = 1e-4;
pub const TAU_MAX: f64 = 1e3;
/// Exponent arguments are clamped to `[-EXP_LIMIT, EXP_LIMIT]`.
pub const EXP_LIMIT: f64 = 700.0;
/// Below this |K'| the scalar Newton step switches to bisection.
pub const DERIVATIVE_FLOOR: f64 = 1e-14;
/// Below this windowed |K'| a pixel keeps its value for the sweep.
pub const LOCAL_FREEZE: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const MAX_BISECTIONS: usize = 200;

/// `u+(tau) = a1 * tau + a2` for one linearized step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub a1: Image,
    pub a2: Image,
}

/// `rho div(z - grad u) + div b`, the splitting part of the u-step.
pub fn splitting_term(u: &Image, z: &GradientField, b: &GradientField, rho: f64) -> Image {
    let d = divergence(&z.sub(&gradient(u)));
    let db = divergence(b);
    Zip::from(&d).and(&db).map_collect(|&d, &db| rho * d + db)
}

impl StepCoefficients {
    /// Build from a precomputed fidelity gradient and splitting term.
    pub fn from_parts(u: &Image, fidelity_grad: &Image, split: &Image, step: &PixelParam) -> Self {
        let a1 = step.combine(fidelity_grad, |g, d| -(d * g));
        let dr = step.combine(split, |r, d| d * r);
        let a2 = u - &dr;
        Self { a1, a2 }
    }

    /// The candidate iterate `a1 * tau + a2`.
    pub fn candidate(&self, tau: &PixelParam) -> Image {
        match tau {
            PixelParam::Uniform(t) => Zip::from(&self.a1)
                .and(&self.a2)
                .map_collect(|&a1, &a2| a1 * t + a2),
            PixelParam::Field(t) => Zip::from(&self.a1)
                .and(&self.a2)
                .and(t)
                .map_collect(|&a1, &a2, &t| a1 * t + a2),
        }
    }
}

/// Coefficients of the u-step at the current state.
pub fn step_coefficients(
    model: &FidelityModel,
    u: &Image,
    z: &GradientField,
    b: &GradientField,
    step: &PixelParam,
    rho: f64,
) -> StepCoefficients {
    let g = model.gradient_unchecked(u);
    let split = splitting_term(u, z, b, rho);
    StepCoefficients::from_parts(u, &g, &split, step)
}

/// Per-pixel `q(u+)` and its `tau`-derivative, plus whether any exponent
/// had to be clamped.
#[derive(Debug, Clone)]
pub struct PixelResiduals {
    pub value: Image,
    pub slope: Image,
    pub clamped: bool,
}

pub fn pixel_residuals(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: &PixelParam,
) -> PixelResiduals {
    let x = coeffs.candidate(tau);
    let f = model.observed();
    let log_f = model.log_observed();
    let mut value = Image::zeros(x.dim());
    let mut slope = Image::zeros(x.dim());
    let mut clamped = false;
    Zip::from(&mut value)
        .and(&mut slope)
        .and(&x)
        .and(&coeffs.a1)
        .and(f)
        .and(log_f)
        .for_each(|q, dq, &x, &a1, &f, &lf| {
            let arg = -x;
            let e = if arg.abs() > EXP_LIMIT {
                clamped = true;
                arg.clamp(-EXP_LIMIT, EXP_LIMIT).exp()
            } else {
                arg.exp()
            };
            let fe = f * e;
            *q = x + fe - lf;
            *dq = a1 * (1.0 - fe);
        });
    PixelResiduals {
        value,
        slope,
        clamped,
    }
}

/// Global discrepancy and its derivative at a scalar `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalEval {
    pub value: f64,
    pub slope: f64,
    pub clamped: bool,
}

pub fn evaluate_global(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: f64,
    target: &DiscrepancyTarget,
) -> GlobalEval {
    let r = pixel_residuals(coeffs, model, &PixelParam::Uniform(tau));
    GlobalEval {
        value: mean(&r.value) - target.c_bar,
        slope: mean(&r.slope),
        clamped: r.clamped,
    }
}

pub fn global_discrepancy(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: f64,
    target: &DiscrepancyTarget,
) -> f64 {
    let e = evaluate_global(coeffs, model, tau, target);
    if e.clamped {
        log::warn!("exponent clamped while evaluating the discrepancy at tau = {tau}");
    }
    e.value
}

pub fn global_discrepancy_derivative(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: f64,
) -> f64 {
    mean(&pixel_residuals(coeffs, model, &PixelParam::Uniform(tau)).slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonOutcome {
    /// K(tau) <= 0 on entry: tau kept.
    Gated,
    /// Damped Newton steps only.
    Newton { steps: usize },
    /// Derivative breakdown or stalled line search resolved by bisection.
    Bisection,
    /// No decrease possible and no sign change in range: best iterate kept.
    NoBracket,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauUpdate {
    pub tau: f64,
    pub outcome: NewtonOutcome,
    pub before: f64,
    pub after: f64,
}

impl TauUpdate {
    /// True unless the entry gate kept `tau`.
    pub fn recalculated(&self) -> bool {
        self.outcome != NewtonOutcome::Gated
    }
}

fn clamp_tau(t: f64) -> f64 {
    t.clamp(TAU_MIN, TAU_MAX)
}

/// Damped Newton on the global discrepancy, at most `iterations` steps.
///
/// Each accepted step strictly decreases |K|; the trial step is halved until
/// it does. When the derivative vanishes or halving fails, a sign change is
/// searched for and bisected.
pub fn newton_update_tau(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau_init: f64,
    target: &DiscrepancyTarget,
    iterations: usize,
) -> TauUpdate {
    let eval = |t: f64| evaluate_global(coeffs, model, t, target);
    let start = eval(tau_init);
    if start.value <= 0.0 {
        return TauUpdate {
            tau: tau_init,
            outcome: NewtonOutcome::Gated,
            before: start.value,
            after: start.value,
        };
    }

    let mut t = tau_init;
    let mut cur = start;
    let mut steps = 0;
    let mut fallback = None;
    for _ in 0..iterations {
        if cur.value == 0.0 {
            break;
        }
        if cur.slope.abs() < DERIVATIVE_FLOOR {
            fallback = Some(t);
            break;
        }
        let step = cur.value / cur.slope;
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = clamp_tau(t - s * step);
            let e = eval(trial);
            if !e.clamped && e.value.abs() < cur.value.abs() {
                accepted = Some((trial, e));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                t = trial;
                cur = e;
                steps += 1;
            }
            None => {
                fallback = Some(t);
                break;
            }
        }
    }

    let mut outcome = NewtonOutcome::Newton { steps };
    if let Some(t0) = fallback {
        match bisect_root(eval, t0) {
            Some((root, e)) if e.value.abs() < cur.value.abs() => {
                t = root;
                cur = e;
                outcome = NewtonOutcome::Bisection;
            }
            Some(_) => outcome = NewtonOutcome::Bisection,
            None => outcome = NewtonOutcome::NoBracket,
        }
    }
    debug_assert!(!cur.clamped, "accepted tau with a clamped exponent");
    TauUpdate {
        tau: t,
        outcome,
        before: start.value,
        after: cur.value,
    }
}

/// Search `[TAU_MIN, TAU_MAX]` outward from `tau` by doubling and halving for
/// a point where K has the opposite sign of K(tau). Returns the bracket
/// ordered as (lower tau, upper tau).
pub fn find_sign_change(k: impl Fn(f64) -> f64, tau: f64) -> Option<(f64, f64)> {
    let t0 = clamp_tau(tau);
    let k0 = k(t0);
    if k0 == 0.0 {
        return Some((t0, t0));
    }
    let (mut up, mut down) = (t0, t0);
    loop {
        let mut moved = false;
        if up < TAU_MAX {
            let next = (up * 2.0).min(TAU_MAX);
            if k(next).signum() != k0.signum() {
                return Some((up, next));
            }
            up = next;
            moved = true;
        }
        if down > TAU_MIN {
            let next = (down * 0.5).max(TAU_MIN);
            if k(next).signum() != k0.signum() {
                return Some((next, down));
            }
            down = next;
            moved = true;
        }
        if !moved {
            return None;
        }
    }
}

fn bisect_root(eval: impl Fn(f64) -> GlobalEval, tau: f64) -> Option<(f64, GlobalEval)> {
    let (mut lo, mut hi) = find_sign_change(|t| eval(t).value, tau)?;
    let mut e_lo = eval(lo);
    let e_hi = eval(hi);
    let mut best = if e_lo.value.abs() <= e_hi.value.abs() {
        (lo, e_lo)
    } else {
        (hi, e_hi)
    };
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let e = eval(mid);
        if e.value.abs() < best.1.value.abs() {
            best = (mid, e);
        }
        if e.value == 0.0 {
            break;
        }
        if e.value.signum() == e_lo.value.signum() {
            lo = mid;
            e_lo = e;
        } else {
            hi = mid;
        }
    }
    Some(best)
}

/// Windowed discrepancy at every pixel for a `tau` field.
pub fn local_discrepancy_field(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: &Image,
    target: &DiscrepancyTarget,
    window: Window,
) -> Result<Image> {
    let r = pixel_residuals(coeffs, model, &PixelParam::Field(tau.clone()));
    if r.clamped {
        log::warn!("exponent clamped while evaluating the local discrepancy");
    }
    Ok(window.apply(&r.value)? - target.c_bar)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub tau: Image,
    /// Whether any pixel passed the positivity gate in the first sweep.
    pub active: bool,
}

/// `iterations` sweeps of the per-pixel gated Newton update
/// `t <- t - max(h*R - C, 0) / (h*R')`, with `h*` the window mean.
pub fn local_newton_update(
    coeffs: &StepCoefficients,
    model: &FidelityModel,
    tau: &Image,
    target: &DiscrepancyTarget,
    window: Window,
    iterations: usize,
) -> Result<LocalUpdate> {
    let mut t = tau.clone();
    let mut active = false;
    for sweep in 0..iterations {
        let r = pixel_residuals(coeffs, model, &PixelParam::Field(t.clone()));
        let k = window.apply(&r.value)?;
        let dk = window.apply(&r.slope)?;
        let mut moved = false;
        Zip::from(&mut t).and(&k).and(&dk).for_each(|t, &k, &dk| {
            let num = (k - target.c_bar).max(0.0);
            if num > 0.0 {
                moved = true;
                if dk.abs() > LOCAL_FREEZE {
                    *t = clamp_tau(*t - num / dk);
                }
            }
        });
        if sweep == 0 {
            active = moved;
        }
        if !moved {
            break;
        }
    }
    Ok(LocalUpdate { tau: t, active })
}

/// Window mean of the `tau` field.
pub fn smooth_tau(tau: &Image, window: Window) -> Result<Image> {
    window.apply(tau)
}
