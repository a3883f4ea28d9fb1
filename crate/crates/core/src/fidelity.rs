//! Data terms for the log-image (exponential) and intensity (I-divergence)
//! formulations, plus the box constraint used for projection.

use ndarray::Zip;

use crate::error::{check_same_shape, Error, Result};
use crate::grid::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FidelityKind {
    /// `sum(u + f exp(-u))` over the log image.
    Exponential,
    /// `sum(u - f log u)` over the intensity image.
    IDivergence,
}

impl FidelityKind {
    pub fn name(self) -> &'static str {
        match self {
            FidelityKind::Exponential => "exp",
            FidelityKind::IDivergence => "div",
        }
    }
}

/// Componentwise bounds on the iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleBox {
    pub lo: f64,
    pub hi: f64,
}

impl FeasibleBox {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, u: &Image) -> bool {
        u.iter().all(|&x| x >= self.lo && x <= self.hi)
    }
}

/// A fidelity kind bound to an observed, strictly positive image.
#[derive(Debug, Clone)]
pub struct FidelityModel {
    pub kind: FidelityKind,
    f: Image,
    log_f: Image,
}

impl FidelityModel {
    pub fn new(kind: FidelityKind, f: Image) -> Result<Self> {
        if let Some(((i, j), &value)) = f.indexed_iter().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(Error::NonPositiveObservation { value, index: (i, j) });
        }
        let log_f = f.mapv(f64::ln);
        Ok(Self { kind, f, log_f })
    }

    pub fn observed(&self) -> &Image {
        &self.f
    }

    pub fn log_observed(&self) -> &Image {
        &self.log_f
    }

    /// Starting iterate: `log f` for the exponential model, `f` otherwise.
    pub fn initial_iterate(&self) -> Image {
        match self.kind {
            FidelityKind::Exponential => self.log_f.clone(),
            FidelityKind::IDivergence => self.f.clone(),
        }
    }

    /// `[log min f, log max f]` (exponential) or `[min f, max f]`.
    pub fn natural_box(&self) -> FeasibleBox {
        let (lo, hi) = self
            .f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        match self.kind {
            FidelityKind::Exponential => FeasibleBox { lo: lo.ln(), hi: hi.ln() },
            FidelityKind::IDivergence => FeasibleBox { lo, hi },
        }
    }

    /// Map an iterate back to intensities.
    pub fn to_intensity(&self, u: &Image) -> Image {
        match self.kind {
            FidelityKind::Exponential => u.mapv(f64::exp),
            FidelityKind::IDivergence => u.clone(),
        }
    }

    fn check_domain(&self, u: &Image) -> Result<()> {
        check_same_shape(u.dim(), self.f.dim())?;
        if self.kind == FidelityKind::IDivergence {
            if let Some(((i, j), &value)) = u.indexed_iter().find(|(_, &x)| !(x > 0.0)) {
                return Err(Error::Domain { value, index: (i, j) });
            }
        }
        Ok(())
    }

    pub fn value(&self, u: &Image) -> Result<f64> {
        self.check_domain(u)?;
        let v = match self.kind {
            FidelityKind::Exponential => Zip::from(u)
                .and(&self.f)
                .fold(0.0, |acc, &u, &f| acc + u + f * (-u).exp()),
            FidelityKind::IDivergence => Zip::from(u)
                .and(&self.f)
                .fold(0.0, |acc, &u, &f| acc + u - f * u.ln()),
        };
        Ok(v)
    }

    /// `1 - f exp(-u)` or `1 - f/u`.
    pub fn gradient(&self, u: &Image) -> Result<Image> {
        self.check_domain(u)?;
        Ok(self.gradient_unchecked(u))
    }

    pub(crate) fn gradient_unchecked(&self, u: &Image) -> Image {
        match self.kind {
            FidelityKind::Exponential => {
                Zip::from(u).and(&self.f).map_collect(|&u, &f| 1.0 - f * (-u).exp())
            }
            FidelityKind::IDivergence => Zip::from(u).and(&self.f).map_collect(|&u, &f| 1.0 - f / u),
        }
    }

    /// Lipschitz constant of the gradient over `u >= bounds.lo`.
    pub fn hessian_lipschitz_bound(&self, bounds: FeasibleBox) -> Result<f64> {
        let fmax = self.f.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        match self.kind {
            FidelityKind::Exponential => Ok(fmax * (-bounds.lo).exp()),
            FidelityKind::IDivergence => {
                if bounds.lo <= 0.0 {
                    return Err(Error::InvalidBox { lo: bounds.lo, hi: bounds.hi });
                }
                Ok(fmax / (bounds.lo * bounds.lo))
            }
        }
    }
}

/// Componentwise clamp into the box.
pub fn project_box(u: &Image, bounds: FeasibleBox) -> Image {
    u.mapv(|x| x.clamp(bounds.lo, bounds.hi))
}

pub(crate) fn project_box_in_place(u: &mut Image, bounds: FeasibleBox) {
    u.mapv_inplace(|x| x.clamp(bounds.lo, bounds.hi));
}
