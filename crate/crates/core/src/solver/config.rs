use crate::error::{Error, Result};
use crate::fidelity::FidelityKind;
use crate::grid::Window;
use crate::noise::{CbarMode, DiscrepancyTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// Fixed regularization weight.
    Plad,
    /// One global fidelity weight chosen by the discrepancy equation.
    DpLadm,
    /// A per-pixel fidelity weight chosen by windowed discrepancies.
    LdpLadm,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Plad => "plad",
            SolverKind::DpLadm => "dp-ladm",
            SolverKind::LdpLadm => "ldp-ladm",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plad" => Ok(SolverKind::Plad),
            "dp-ladm" | "dp" => Ok(SolverKind::DpLadm),
            "ldp-ladm" | "ldp" => Ok(SolverKind::LdpLadm),
            _ => Err(Error::Config(format!("unknown solver '{s}'"))),
        }
    }
}

/// How the step size follows the fidelity weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `delta = delta0` throughout.
    Fixed,
    /// `delta = delta0 / (0.4 tau)` once tau has been recomputed, optionally
    /// capped at `1 / (8 rho + STRICT_MARGIN)` so the splitting part of the
    /// step stays contractive.
    Heuristic { capped: bool },
    /// `delta = fraction / (tau L + 8 rho + STRICT_MARGIN)`, recomputed with tau.
    Strict { fraction: f64 },
}

/// Which of the two equivalent scalings the sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Fidelity weight 1, TV weight lambda.
    WeightedTv,
    /// Fidelity weight tau, TV weight 1.
    WeightedFidelity,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::WeightedTv => "weighted-tv",
            Normalization::WeightedFidelity => "weighted-fidelity",
        }
    }
}

/// Added to the step-size denominator in strict and capped modes.
pub const STRICT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub model: FidelityKind,
    pub solver: SolverKind,
    /// Penalty of the splitting constraint `z = grad u`.
    pub rho: f64,
    /// Initial (or fixed) step size.
    pub delta0: f64,
    /// Initial fidelity weight for the adaptive solvers.
    pub tau0: f64,
    /// TV weight for the fixed-parameter solver; `None` picks the default for `noise_level`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Recompute tau on iterations `0, newton_every, 2*newton_every, ...`.
    pub newton_every: usize,
    /// Newton iterations per tau update.
    pub newton_iters: usize,
    /// Turn off to freeze tau at `tau0`.
    pub adapt_tau: bool,
    pub window: Window,
    /// Gamma shape of the noise.
    pub noise_level: f64,
    /// `None` uses the low-M series for `M <= 5` and the longer series above.
    pub cbar: Option<CbarMode>,
    pub step_rule: StepRule,
    pub project: bool,
}

impl SolverConfig {
    /// Defaults for the fixed-parameter solver.
    pub fn plad(model: FidelityKind, noise_level: f64) -> Self {
        let (rho, delta0) = match model {
            FidelityKind::Exponential => (0.3, 0.4),
            FidelityKind::IDivergence => (0.01, 8.0),
        };
        Self {
            model,
            solver: SolverKind::Plad,
            rho,
            delta0,
            step_rule: StepRule::Fixed,
            ..Self::dp_ladm(noise_level)
        }
    }

    /// Defaults for the global adaptive solver.
    pub fn dp_ladm(noise_level: f64) -> Self {
        Self {
            model: FidelityKind::Exponential,
            solver: SolverKind::DpLadm,
            rho: 0.75,
            delta0: 0.16,
            tau0: 0.1,
            lambda: None,
            tol: 3e-4,
            max_iter: 500,
            newton_every: 3,
            newton_iters: 3,
            adapt_tau: true,
            window: Window::Box(17),
            noise_level,
            cbar: None,
            step_rule: StepRule::Heuristic { capped: true },
            project: true,
        }
    }

    /// Defaults for the local adaptive solver.
    pub fn ldp_ladm(noise_level: f64) -> Self {
        Self {
            solver: SolverKind::LdpLadm,
            ..Self::dp_ladm(noise_level)
        }
    }

    pub fn for_solver(solver: SolverKind, model: FidelityKind, noise_level: f64) -> Self {
        match solver {
            SolverKind::Plad => Self::plad(model, noise_level),
            SolverKind::DpLadm => Self { model, ..Self::dp_ladm(noise_level) },
            SolverKind::LdpLadm => Self { model, ..Self::ldp_ladm(noise_level) },
        }
    }

    /// `2/M` for `M <= 5`, `3/M` above.
    pub fn default_lambda(noise_level: f64) -> f64 {
        if noise_level <= 5.0 {
            2.0 / noise_level
        } else {
            3.0 / noise_level
        }
    }

    pub fn effective_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| Self::default_lambda(self.noise_level))
    }

    pub fn target(&self) -> DiscrepancyTarget {
        match self.cbar {
            Some(mode) => DiscrepancyTarget::new(mode, self.noise_level),
            None => DiscrepancyTarget::auto(self.noise_level),
        }
    }

    pub fn normalization(&self) -> Normalization {
        match self.solver {
            SolverKind::Plad => Normalization::WeightedTv,
            _ => Normalization::WeightedFidelity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("delta0", self.delta0),
            ("tau0", self.tau0),
            ("tol", self.tol),
            ("M", self.noise_level),
            ("lambda", self.effective_lambda()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 || self.newton_every == 0 || self.newton_iters == 0 {
            return Err(Error::Config(
                "max_iter, newton_every and newton_iters must be positive".into(),
            ));
        }
        if let Window::Box(r) = self.window {
            if r % 2 == 0 {
                return Err(Error::EvenWindow(r));
            }
        }
        if let StepRule::Strict { fraction } = self.step_rule {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "strict step fraction must lie in (0, 1], got {fraction}"
                )));
            }
        }
        if self.solver != SolverKind::Plad && self.model != FidelityKind::Exponential {
            return Err(Error::Config(
                "the adaptive solvers are defined for the exponential model only".into(),
            ));
        }
        if let Some(CbarMode::Custom(c)) = self.cbar {
            if !c.is_finite() {
                return Err(Error::Config(format!("C must be finite, got {c}")));
            }
        }
        Ok(())
    }
}
